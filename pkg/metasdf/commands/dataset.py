"""
dataset: build a shape corpus (grids + manifest)
"""
import argparse

from metasdf import config
from metasdf.commands.common import add_output_argument, finish_run
from metasdf.data.corpus import CLASSES, SPLITS, VARIANTS, CorpusSpec, build_corpus
from metasdf.errors import ConfigError
from metasdf.utils.file_utils import create_output_directory
from metasdf.utils.text_utils import parse_int_list


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("dataset", help="Build a shape corpus")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--synthetic", choices=["glyphs", "blobs", "shapes3d"],
                        help="Procedural generator to use")
    source.add_argument("--raster-dir", help="Directory of <class>_<name>.pgm rasters")
    parser.add_argument("--count", type=int, default=256, help="Number of shapes (synthetic only)")
    parser.add_argument("--res", type=int, default=config.GRID_RESOLUTION, help="Grid cells per axis")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--classes", default=None, help="Glyph classes, e.g. '0-9' or '0,1,7'")
    parser.add_argument("--holdout-classes", default=None, help="Classes placed in the test split, e.g. '6,7,8,9'")
    parser.add_argument("--variant", choices=VARIANTS, default="none", help="Out-of-distribution variant")
    parser.add_argument("--max-shapes", type=int, default=None, help="Cap on the number of shapes")
    parser.add_argument("--split", choices=SPLITS, default=None, help="Put every shape in this split")
    parser.add_argument("--val-count", type=int, default=None, help="Validation shapes")
    parser.add_argument("--test-fraction", type=float, default=0.1)
    parser.add_argument("--threshold", type=float, default=0.5, help="Raster foreground threshold")
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def spec_from_args(args: argparse.Namespace) -> CorpusSpec:
    try:
        classes = parse_int_list(args.classes) if args.classes else list(CLASSES)
        holdout = parse_int_list(args.holdout_classes)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    spec = CorpusSpec(
        kind=args.synthetic or "raster",
        count=args.count,
        resolution=args.res,
        classes=classes,
        holdout_classes=holdout,
        variant=args.variant,
        seed=args.seed,
        val_count=args.val_count,
        test_fraction=args.test_fraction,
        split=args.split,
        max_shapes=args.max_shapes,
        raster_dir=args.raster_dir,
        threshold=args.threshold,
    )
    spec.validate()
    return spec


def run(args: argparse.Namespace) -> int:
    spec = spec_from_args(args)
    output_dir = create_output_directory(args.output, prefix="dataset")
    print(f"Building {spec.kind} corpus ({spec.variant}) in {output_dir}")
    manifest = build_corpus(spec, output_dir)
    counts = manifest["counts"]
    print(f"Successfully built {len(manifest['shapes'])} shapes "
          f"(train {counts['train']}, val {counts['val']}, test {counts['test']})")
    finish_run(output_dir, "SHAPE CORPUS", {
        "manifest.json": "Shape list with classes, splits and transforms",
        "grids": "Signed distance grids (SDFG format)",
    })
    return 0
