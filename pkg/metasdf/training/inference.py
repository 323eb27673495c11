"""
One fitting interface over all methods

Commands load a checkpoint with load_model and call fit() on a context set;
the result predicts SDF values anywhere and records how long the fit took.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from metasdf import config
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import load_checkpoint
from metasdf.data.sdf_grid import SdfGrid
from metasdf.errors import CheckpointError, SdfDataError
from metasdf.nets.parameters import LatentCode
from metasdf.training import autodecoder, cnp, meta_learner
from metasdf.training.autodecoder import AutoDecoderModel
from metasdf.training.cnp import CnpModel
from metasdf.training.meta_learner import MetaModel

ORACLE = "oracle"
DEFAULT_EXTRACT_RES = {2: config.EXTRACT_RES_2D, 3: config.EXTRACT_RES_3D}

SdfFunction = Callable[[np.ndarray], np.ndarray]


@dataclass
class FitResult:
    """
    A fitted shape

    predict maps (n, d) points to (n,) signed distances. trajectory holds one
    predictor per inner step when the method has steps and it was requested.
    """
    predict: SdfFunction
    wallclock_ms: float
    params: Optional[np.ndarray] = None
    info: Dict[str, Any] = field(default_factory=dict)
    trajectory: List[SdfFunction] = field(default_factory=list)


class Predictor:
    """Base class; subclasses wrap one trained model"""
    method = ""

    def __init__(self, cfg: Optional[ExperimentConfig], dim: int):
        self.cfg = cfg
        self.dim = dim

    def fit(self, coords: np.ndarray, values: np.ndarray, seed: int = 0,
            keep_trajectory: bool = False, grid: Optional[SdfGrid] = None) -> FitResult:
        raise NotImplementedError


class MetaPredictor(Predictor):
    method = "metasdf"

    def __init__(self, model: MetaModel, cfg: ExperimentConfig):
        super().__init__(cfg, model.net.in_dim)
        self.model = model

    def _predictor(self, params) -> SdfFunction:
        return lambda points: meta_learner.predict(self.model, params, points)

    def fit(self, coords, values, seed=0, keep_trajectory=False, grid=None) -> FitResult:
        fit = meta_learner.specialize(self.model, coords, values, keep_trajectory=keep_trajectory)
        return FitResult(
            predict=self._predictor(fit.params),
            wallclock_ms=fit.wallclock_ms,
            params=fit.params.flatten(),
            info={"steps": fit.steps, "context_losses": fit.context_losses},
            trajectory=[self._predictor(p) for p in fit.trajectory],
        )


class AutoDecoderPredictor(Predictor):
    def __init__(self, model: AutoDecoderModel, cfg: ExperimentConfig):
        super().__init__(cfg, model.net.in_dim)
        self.model = model
        self.method = model.method

    def mean_shape(self) -> SdfFunction:
        """Decoder output for the all-zero code"""
        zero = LatentCode.zeros(self.model.latent_dim)
        return lambda points: self.model.sdf(zero, points)

    def fit(self, coords, values, seed=0, keep_trajectory=False, grid=None) -> FitResult:
        search = autodecoder.test_time_optimize_code(self.model, coords, values, self.cfg.code_steps,
                                                     self.cfg.code_lr, seed=seed)
        code = search.code
        return FitResult(
            predict=lambda points: self.model.sdf(code, points),
            wallclock_ms=search.wallclock_ms,
            params=code.z.copy(),
            info={"steps": search.steps, "code_losses": search.losses},
        )


class CnpPredictor(Predictor):
    method = "cnp"

    def __init__(self, model: CnpModel, cfg: ExperimentConfig):
        super().__init__(cfg, model.net.in_dim)
        self.model = model

    def fit(self, coords, values, seed=0, keep_trajectory=False, grid=None) -> FitResult:
        # One timed encoder pass; later queries reuse the code
        encoded = cnp.cnp_infer(self.model, coords, values, np.zeros((1, self.dim)))
        code = encoded.code

        def predict(points: np.ndarray) -> np.ndarray:
            return cnp.decode_code(self.model, code, points)

        return FitResult(predict=predict, wallclock_ms=encoded.wallclock_ms, params=code.copy(),
                         info={"steps": 0})


class OraclePredictor(Predictor):
    """Ground-truth passthrough: interpolates the shape's own grid"""
    method = ORACLE

    def __init__(self, dim: int = 2):
        super().__init__(None, dim)

    def fit(self, coords, values, seed=0, keep_trajectory=False, grid=None) -> FitResult:
        if grid is None:
            raise SdfDataError("The oracle predictor needs the shape's grid")
        return FitResult(predict=grid.sample, wallclock_ms=0.0, info={"steps": 0})


def load_model(path: str, dim: int = 2) -> Predictor:
    """
    Predictor for a checkpoint path, or the pseudo-checkpoint 'oracle'

    Args:
        path: Checkpoint file or 'oracle'
        dim: Dimension for the oracle

    Returns:
        Predictor subclass matching the checkpoint's method
    """
    if path == ORACLE:
        return OraclePredictor(dim)
    header, buffers = load_checkpoint(path)
    method = header.get("method")
    if method == "metasdf":
        model, cfg = meta_learner.model_from_checkpoint(header, buffers)
        return MetaPredictor(model, cfg)
    if method in ("autodec-concat", "autodec-hyper"):
        model, cfg = autodecoder.model_from_checkpoint(header, buffers)
        return AutoDecoderPredictor(model, cfg)
    if method == "cnp":
        model, cfg = cnp.model_from_checkpoint(header, buffers)
        return CnpPredictor(model, cfg)
    raise CheckpointError(f"{path}: unknown method '{method}'")
