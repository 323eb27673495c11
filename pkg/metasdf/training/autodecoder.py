"""
Auto-decoder baseline: per-shape latent codes learned jointly with a decoder

The decoder is either the concatenation-conditioned network or a
hypernetwork that outputs all parameters of Phi. Unseen shapes are fitted by
searching for a latent code against the context with the decoder frozen.
"""
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from metasdf import config
from metasdf.autodiff import Tensor, grad, graph_scope, no_grad, ops
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import ShapeRecord, load_checkpoint
from metasdf.data.data_saver import save_checkpoint
from metasdf.data.sampling import Task
from metasdf.errors import CheckpointError, ConfigError, SdfDataError
from metasdf.nets.hypernet import HypernetConfig, hyper_decode, init_hypernet
from metasdf.nets.mlp import concat_forward, init_concat_mlp
from metasdf.nets.parameters import LatentCode, MlpConfig, ParameterVector, concat_layout, mlp_layout
from metasdf.training.common import (
    MetricLog, TrainState, elapsed_ms, resume_state, run_training, validation_tasks,
)
from metasdf.training.losses import compute_loss, predictions_to_sdf, scalar
from metasdf.training.optimizer import Adam
from metasdf.utils.file_utils import version_string
from metasdf.utils.logging_utils import log_debug, log_problem

MODES = ("concat", "hyper")

# Shapes code-searched per validation pass
VAL_SHAPES = 8


@dataclass
class AutoDecoderModel:
    """Decoder parameters, one latent code per training shape, and the loss settings"""
    mode: str
    net: MlpConfig
    latent_dim: int
    decoder: ParameterVector
    codes: Dict[str, LatentCode] = field(default_factory=dict)
    code_reg_weight: float = config.CODE_REG_WEIGHT
    loss: str = "l1"
    clamp_delta: float = config.CLAMP_DELTA
    hyper_hidden: int = 256
    loss_state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"Unknown auto-decoder mode '{self.mode}'")
        for shape_id, code in self.codes.items():
            if code.dim != self.latent_dim:
                raise ConfigError(f"Code for {shape_id} has dim {code.dim}, expected {self.latent_dim}")
        self.loss_state = np.asarray(self.loss_state, dtype=np.float64).reshape(2).copy()

    @property
    def method(self) -> str:
        return f"autodec-{self.mode}"

    @property
    def hconfig(self) -> HypernetConfig:
        return HypernetConfig(target=self.net, latent_dim=self.latent_dim, hidden_dim=self.hyper_hidden)

    def decode(self, decoder, z, coords) -> Tensor:
        """Raw network output (n, out_dim) for code z at coords"""
        if self.mode == "concat":
            return concat_forward(decoder, z, coords, self.net)
        return hyper_decode(decoder, z, coords, self.hconfig)

    def objective(self, decoder, z: Tensor, coords: np.ndarray, values: np.ndarray,
                  loss_state=None) -> Tensor:
        """Reconstruction loss plus the l2 code prior"""
        state = Tensor(self.loss_state) if loss_state is None else loss_state
        recon = compute_loss(self.loss, self.decode(decoder, z, coords), values, state, self.clamp_delta)
        if self.code_reg_weight == 0:
            return recon
        return ops.add(recon, ops.scale(ops.sum(ops.mul(z, z)), self.code_reg_weight))

    def sdf(self, z, coords: np.ndarray) -> np.ndarray:
        """Signed distances predicted for code z"""
        with no_grad():
            out = self.decode(self.decoder, z.z if isinstance(z, LatentCode) else z, coords)
        return predictions_to_sdf(out.data)


def init_autodecoder(mode: str, net: MlpConfig, cfg: ExperimentConfig, shape_ids: Sequence[str],
                     seed: Optional[int] = 0) -> AutoDecoderModel:
    """
    Fresh decoder and codes drawn from N(0, 0.01^2)

    Codes are drawn in the order of shape_ids from their own seed stream so
    the decoder init does not depend on the number of shapes.
    """
    if mode == "concat":
        decoder = init_concat_mlp(net, cfg.latent_dim, seed)
    else:
        hconfig = HypernetConfig(target=net, latent_dim=cfg.latent_dim, hidden_dim=cfg.hyper_hidden)
        decoder = init_hypernet(hconfig, seed)
    rng = np.random.default_rng([0 if seed is None else seed, 1])
    codes = {sid: LatentCode(rng.normal(0.0, config.CODE_INIT_STD, cfg.latent_dim)) for sid in shape_ids}
    return AutoDecoderModel(mode=mode, net=net, latent_dim=cfg.latent_dim, decoder=decoder, codes=codes,
                            code_reg_weight=cfg.code_reg_weight, loss=cfg.loss, clamp_delta=cfg.clamp_delta,
                            hyper_hidden=cfg.hyper_hidden)


def _shape_gradients(model: AutoDecoderModel, task: Task) -> Tuple[float, Optional[Dict[str, np.ndarray]]]:
    coords = np.concatenate([task.context_coords, task.target_coords])
    values = np.concatenate([task.context_values, task.target_values])
    with graph_scope():
        decoder = model.decoder.as_tensor(requires_grad=True)
        z = Tensor(model.codes[task.shape_id].z.copy(), requires_grad=True)
        state = Tensor(model.loss_state.copy(), requires_grad=model.loss == "composite")
        loss = model.objective(decoder, z, coords, values, state)
        value = scalar(loss)
        if not np.isfinite(value):
            return value, None
        targets = [decoder, z] + ([state] if state.requires_grad else [])
        grads = grad(loss, targets)
    named = {"decoder": grads[0].data, f"code.{task.shape_id}": grads[1].data}
    if state.requires_grad:
        named["loss_state"] = grads[2].data
    return value, named


def autodecoder_step(model: AutoDecoderModel, tasks: Sequence[Task], optimizer: Adam) -> float:
    """
    One joint ADAM step on the decoder and the codes of the batch's shapes

    Returns:
        Mean objective over the batch, or NaN when the step was skipped
    """
    if not tasks:
        raise SdfDataError("autodecoder_step needs at least one task")
    outcomes = [_shape_gradients(model, t) for t in tasks]
    if any(g is None for _, g in outcomes):
        log_problem("Skipping auto-decoder step: non-finite loss")
        return float("nan")
    total: Dict[str, np.ndarray] = {}
    for _, grads in outcomes:
        for name, g in grads.items():
            total[name] = g.copy() if name not in total else total[name] + g
    mean_grads = {name: g / len(tasks) for name, g in total.items()}

    arrays = {"decoder": model.decoder.data, "loss_state": model.loss_state}
    for task in tasks:
        arrays[f"code.{task.shape_id}"] = model.codes[task.shape_id].z
    optimizer.step(arrays, mean_grads)
    return float(np.mean([loss for loss, _ in outcomes]))


@dataclass
class CodeSearch:
    """Result of a test-time latent search"""
    code: LatentCode
    losses: List[float]
    wallclock_ms: float
    steps: int


def test_time_optimize_code(model: AutoDecoderModel, coords: np.ndarray, values: np.ndarray,
                            steps: int = config.CODE_SEARCH_STEPS, lr: float = config.CODE_SEARCH_LR,
                            seed: Optional[int] = 0, init_std: float = 0.0,
                            patience: int = config.CODE_SEARCH_PATIENCE,
                            min_delta: float = config.CODE_SEARCH_MIN_DELTA) -> CodeSearch:
    """
    Find a latent code that explains the context, decoder frozen

    The search starts at z = 0 (or N(0, init_std^2) when init_std > 0) and
    runs ADAM on z only. It stops early once the objective improved by less
    than min_delta over the last `patience` steps.

    Args:
        model: Trained auto-decoder
        coords: (n, d) context coordinates
        values: (n,) context values
        steps: Step budget
        lr: ADAM learning rate
        seed: Seed for a random start
        init_std: Std of the random start (0 means z = 0)
        patience: Early-stop window
        min_delta: Early-stop threshold

    Returns:
        CodeSearch with the objective before every step and after the last one
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise SdfDataError("test_time_optimize_code needs a non-empty context")
    start = time.perf_counter()
    z = np.zeros(model.latent_dim)
    if init_std > 0:
        z = np.random.default_rng(seed).normal(0.0, init_std, model.latent_dim)
    decoder = model.decoder.as_tensor()
    optimizer = Adam(lr=lr)
    losses: List[float] = []
    taken = 0
    for step in range(steps):
        with graph_scope():
            zt = Tensor(z.copy(), requires_grad=True)
            loss = model.objective(decoder, zt, coords, values)
            losses.append(scalar(loss))
            if not np.isfinite(losses[-1]):
                log_problem(f"Code search hit a non-finite loss at step {step}; keeping the last code")
                losses.pop()
                break
            (g,) = grad(loss, [zt])
        optimizer.step({"z": z}, {"z": g.data})
        taken += 1
        if len(losses) > patience and losses[-patience - 1] - losses[-1] < min_delta:
            break
    with no_grad():
        losses.append(scalar(model.objective(decoder, Tensor(z), coords, values)))
    wallclock = elapsed_ms(start)
    log_debug(f"code search: {taken} steps in {wallclock:.1f} ms, loss {losses[0]:.5f} -> {losses[-1]:.5f}")
    return CodeSearch(LatentCode(z), losses, wallclock, taken)


def validate(model: AutoDecoderModel, tasks: Sequence[Task], steps: int, lr: float) -> float:
    """Mean target l1 after a code search on each validation task"""
    if not tasks:
        return float("nan")
    errors = []
    for task in tasks:
        search = test_time_optimize_code(model, task.context_coords, task.context_values, steps, lr)
        pred = model.sdf(search.code, task.target_coords)
        errors.append(float(np.mean(np.abs(pred - task.target_values))))
    return float(np.mean(errors))


# ---------------------------------------------------------------- checkpoints

def save_autodecoder_checkpoint(path: str, model: AutoDecoderModel, cfg: ExperimentConfig,
                                optimizer: Optional[Adam] = None, **progress) -> None:
    ids = sorted(model.codes)
    header = {
        "method": model.method,
        "config": cfg.to_dict(),
        "dim": model.net.in_dim,
        "code_ids": ids,
        "version": version_string(),
    }
    header.update(progress)
    buffers = {"decoder": model.decoder.data, "loss_state": model.loss_state}
    for sid in ids:
        buffers[f"code.{sid}"] = model.codes[sid].z
    if optimizer is not None:
        header["optimizer"] = optimizer.state_header()
        buffers.update(optimizer.state_buffers())
    save_checkpoint(header, buffers, path)


def model_from_checkpoint(header: Dict[str, object],
                          buffers: Dict[str, np.ndarray]) -> Tuple[AutoDecoderModel, ExperimentConfig]:
    method = header.get("method", "")
    if method not in ("autodec-concat", "autodec-hyper"):
        raise CheckpointError(f"Not an auto-decoder checkpoint (method={method})")
    try:
        cfg = ExperimentConfig.from_dict(header["config"])
        net = MlpConfig(in_dim=int(header["dim"]), hidden_dim=cfg.hidden_dim,
                        num_layers=cfg.num_layers, out_dim=cfg.out_dim)
        mode = method.split("-", 1)[1]
        if mode == "concat":
            layout = concat_layout(net, cfg.latent_dim)
        else:
            hconfig = HypernetConfig(target=net, latent_dim=cfg.latent_dim, hidden_dim=cfg.hyper_hidden)
            layout = mlp_layout(hconfig.mlp_config())
        decoder = ParameterVector(layout, buffers["decoder"])
        codes = {sid: LatentCode(buffers[f"code.{sid}"]) for sid in header["code_ids"]}
        model = AutoDecoderModel(mode=mode, net=net, latent_dim=cfg.latent_dim, decoder=decoder, codes=codes,
                                 code_reg_weight=cfg.code_reg_weight, loss=cfg.loss,
                                 clamp_delta=cfg.clamp_delta, hyper_hidden=cfg.hyper_hidden,
                                 loss_state=buffers["loss_state"])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"Incomplete auto-decoder checkpoint: {e}") from e
    return model, cfg


def load_autodecoder_checkpoint(path: str) -> Tuple[AutoDecoderModel, ExperimentConfig, Adam, Dict[str, object]]:
    header, buffers = load_checkpoint(path)
    model, cfg = model_from_checkpoint(header, buffers)
    optimizer = Adam(lr=cfg.lr)
    if "optimizer" in header:
        optimizer.load_state(header["optimizer"], buffers)
    return model, cfg, optimizer, header


# ---------------------------------------------------------------- training loop

def train_autodecoder(train_records: Sequence[ShapeRecord], cfg: ExperimentConfig,
                      val_records: Sequence[ShapeRecord] = (), output_dir: Optional[str] = None,
                      resume_from: Optional[str] = None) -> Tuple[AutoDecoderModel, pd.DataFrame]:
    """
    Train decoder and codes jointly on dense samples

    Training always uses dense lattice samples, whatever context mode the
    config names; the context mode only matters for the test-time search.

    Args:
        train_records: Training shapes (one code each)
        cfg: Resolved config with method autodec-concat or autodec-hyper
        val_records: Validation shapes, scored by code search on the first few
        output_dir: Run directory or None
        resume_from: last.ckpt of an earlier run

    Returns:
        (model, metric log DataFrame)
    """
    if not train_records:
        raise SdfDataError("train_autodecoder needs at least one training shape")
    if not cfg.method.startswith("autodec-"):
        raise ConfigError(f"train_autodecoder cannot train method '{cfg.method}'")

    if resume_from:
        model, _, optimizer, header = load_autodecoder_checkpoint(resume_from)
        state, log = resume_state(header, output_dir)
    else:
        dim = train_records[0].grid.dim
        net = MlpConfig(in_dim=dim, hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers, out_dim=cfg.out_dim)
        model = init_autodecoder(cfg.method.split("-", 1)[1], net, cfg, [r.shape_id for r in train_records],
                                 cfg.seed)
        optimizer = Adam(lr=cfg.lr)
        state, log = TrainState(), MetricLog()

    val_tasks = validation_tasks(val_records, cfg, cfg.seed, min(cfg.val_count, VAL_SHAPES))
    log = run_training(
        train_records, cfg,
        outer=lambda tasks: autodecoder_step(model, tasks, optimizer),
        validate=lambda: validate(model, val_tasks, cfg.code_steps, cfg.code_lr),
        save=lambda path, progress: save_autodecoder_checkpoint(path, model, cfg, optimizer, **progress),
        output_dir=output_dir, log=log, state=state, context_mode="dense",
        diagnostics=lambda: {"code_norm_mean": float(np.mean([np.linalg.norm(c.z) for c in model.codes.values()]))},
    )
    return model, log.to_frame()
