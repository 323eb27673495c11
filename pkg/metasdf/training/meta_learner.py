"""
Gradient-based meta-learning of SDF networks

The meta-learner keeps a shared initialization theta and per-parameter inner
learning rates alpha. A shape is represented by the parameters phi reached
after k gradient steps on its context samples, starting from theta. Training
differentiates the target loss of phi through all k steps.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from metasdf import config
from metasdf.autodiff import Tensor, enable_grad, grad, graph_scope, is_grad_enabled, no_grad, ops
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import ShapeRecord, load_checkpoint
from metasdf.data.data_saver import save_checkpoint
from metasdf.data.sampling import Task
from metasdf.errors import CheckpointError, ConfigError, NonFiniteError, SdfDataError
from metasdf.nets.mlp import init_mlp, mlp_forward
from metasdf.nets.parameters import MlpConfig, ParameterVector, mlp_layout
from metasdf.nets.set_encoder import canonical_order
from metasdf.training.common import (
    MetricLog, TrainState, elapsed_ms, resume_state, run_training, validation_tasks,
)
from metasdf.training.losses import compute_loss, predictions_to_sdf, scalar
from metasdf.training.optimizer import Adam
from metasdf.utils.file_utils import version_string
from metasdf.utils.logging_utils import log_debug, log_problem

INNER_LOSSES = ("l1", "composite", "clamped")
OUTER_LOSSES = ("l1", "composite")


@dataclass
class MetaConfig:
    """Inner/outer loop settings"""
    k: int = config.META_STEPS
    beta: float = config.OUTER_LR
    alpha_init: float = config.ALPHA_INIT_2D
    per_step_alpha: bool = False
    first_order: bool = False
    inner_loss: str = "l1"
    outer_loss: str = "l1"
    batch_tasks: int = config.BATCH_TASKS
    clamp_delta: float = config.CLAMP_DELTA

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"MetaConfig: k must be >= 0, got {self.k}")
        if self.beta <= 0 or self.batch_tasks < 1:
            raise ConfigError("MetaConfig: beta must be positive and batch_tasks >= 1")
        if self.alpha_init < 0:
            raise ConfigError("MetaConfig: alpha_init must be non-negative")
        if self.inner_loss not in INNER_LOSSES or self.outer_loss not in OUTER_LOSSES:
            raise ConfigError(f"MetaConfig: unsupported losses {self.inner_loss}/{self.outer_loss}")

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig) -> "MetaConfig":
        """Meta settings of a resolved experiment config"""
        return cls(k=cfg.inner_steps, beta=cfg.lr, alpha_init=cfg.alpha_init,
                   per_step_alpha=bool(cfg.per_step_alpha), first_order=cfg.first_order,
                   inner_loss=cfg.inner_loss, outer_loss=cfg.loss,
                   batch_tasks=cfg.batch_tasks, clamp_delta=cfg.clamp_delta)

    @property
    def uses_loss_state(self) -> bool:
        return "composite" in (self.inner_loss, self.outer_loss)


@dataclass
class MetaModel:
    """Meta-initialization theta, inner learning rates alpha and the composite-loss log-variances"""
    net: MlpConfig
    config: MetaConfig
    theta: ParameterVector
    alpha: List[ParameterVector]
    loss_state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        expected = self.config.k if self.config.per_step_alpha and self.config.k > 0 else 1
        if len(self.alpha) != expected:
            raise ConfigError(f"MetaModel: expected {expected} alpha vector(s), got {len(self.alpha)}")
        for a in self.alpha:
            if not a.same_layout(self.theta):
                raise ConfigError("MetaModel: alpha layout differs from theta")
        self.loss_state = np.asarray(self.loss_state, dtype=np.float64).reshape(2).copy()

    def alpha_index(self, step: int) -> int:
        return step if len(self.alpha) > 1 else 0

    def named_arrays(self) -> Dict[str, np.ndarray]:
        """Optimizer-facing arrays (updated in place by Adam)"""
        arrays = {"theta": self.theta.data, "loss_state": self.loss_state}
        for j, a in enumerate(self.alpha):
            arrays[f"alpha.{j}"] = a.data
        return arrays


def init_meta_model(net: MlpConfig, meta: MetaConfig, seed: Optional[int] = 0) -> MetaModel:
    theta = init_mlp(net, seed)
    count = meta.k if meta.per_step_alpha and meta.k > 0 else 1
    alpha = [theta.full_like(meta.alpha_init) for _ in range(count)]
    return MetaModel(net=net, config=meta, theta=theta, alpha=alpha)


def net_config(cfg: ExperimentConfig, dim: int) -> MlpConfig:
    return MlpConfig(in_dim=dim, hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers, out_dim=cfg.out_dim)


@dataclass
class ModelTensors:
    """Graph leaves for one task's forward/backward pass"""
    theta: Tensor
    alpha: List[Tensor]
    loss_state: Tensor

    @classmethod
    def of(cls, model: MetaModel, requires_grad: bool = False) -> "ModelTensors":
        return cls(
            theta=Tensor(model.theta.data.copy(), requires_grad=requires_grad, name="theta"),
            alpha=[Tensor(a.data.copy(), requires_grad=requires_grad, name=f"alpha.{j}")
                   for j, a in enumerate(model.alpha)],
            loss_state=Tensor(model.loss_state.copy(),
                              requires_grad=requires_grad and model.config.uses_loss_state,
                              name="loss_state"),
        )

    def targets(self) -> List[Tuple[str, Tensor]]:
        named = [("theta", self.theta)] + [(f"alpha.{j}", a) for j, a in enumerate(self.alpha)]
        if self.loss_state.requires_grad:
            named.append(("loss_state", self.loss_state))
        return named


@dataclass
class AdaptResult:
    """
    phi after k steps plus bookkeeping

    context_losses has k+1 entries: the loss before each step and the loss
    of the final phi. trajectory holds phi^0..phi^k when requested.
    """
    phi: Tensor
    context_losses: List[float]
    trajectory: List[np.ndarray] = field(default_factory=list)


def adapt_params(phi0: Tensor, alphas: Sequence[Tensor], loss_fn: Callable[[Tensor], Tensor], k: int,
                 first_order: bool = False, keep_trajectory: bool = False) -> AdaptResult:
    """
    k steps of phi <- phi - alpha * grad(loss_fn(phi))

    When phi0 or alpha are on the graph (and grad mode is on) every step is
    recorded so the result can be differentiated w.r.t. them, with
    second-order terms unless first_order. Otherwise each step starts from a
    fresh leaf and nothing is retained between steps.

    Args:
        phi0: Starting parameters (flat)
        alphas: One step-size tensor, or one per step
        loss_fn: Maps parameters to a scalar context loss
        k: Number of update steps
        first_order: Treat the inner gradient as a constant
        keep_trajectory: Keep a copy of every iterate

    Returns:
        AdaptResult
    """
    track = is_grad_enabled() and (phi0.tracked or any(a.tracked for a in alphas))
    phi = phi0
    if track and not phi0.tracked:
        # alpha alone is on the graph; the inner gradient still needs phi as a leaf
        phi = Tensor(phi0.data, requires_grad=True)
    losses: List[float] = []
    trajectory: List[np.ndarray] = []
    for j in range(k):
        if keep_trajectory:
            trajectory.append(phi.data.copy())
        if not track:
            phi = Tensor(phi.data, requires_grad=True)
        with enable_grad():
            loss = loss_fn(phi)
        value = scalar(loss)
        if not np.isfinite(value):
            raise NonFiniteError(f"Context loss became non-finite at inner step {j}", step=j)
        losses.append(value)
        (g,) = grad(loss, [phi], create_graph=track and not first_order)
        alpha = alphas[j if len(alphas) > 1 else 0]
        if track:
            phi = ops.sub(phi, ops.mul(alpha, g))
        else:
            with no_grad():
                phi = ops.sub(phi, ops.mul(alpha, g))

    with no_grad():
        final = scalar(loss_fn(phi))
    if not np.isfinite(final):
        raise NonFiniteError(f"Context loss became non-finite after inner step {k}", step=k)
    losses.append(final)
    if keep_trajectory:
        trajectory.append(phi.data.copy())
    if not track:
        phi = phi.detach()
    return AdaptResult(phi=phi, context_losses=losses, trajectory=trajectory)


def inner_adapt(model: MetaModel, coords: np.ndarray, values: np.ndarray,
                tensors: Optional[ModelTensors] = None, keep_trajectory: bool = False) -> AdaptResult:
    """
    Specialize theta to one context set

    The context is put in canonical order first so the mean loss is reduced in
    the same order whatever order the points arrive in.

    Args:
        model: Meta model
        coords: (n, d) context coordinates
        values: (n,) context SDF values (zeros for level-set context)
        tensors: Graph leaves to adapt from; None adapts from constants (inference)
        keep_trajectory: Return phi^0..phi^k

    Returns:
        AdaptResult
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise SdfDataError("inner_adapt needs a non-empty (n, d) context")
    order = canonical_order(coords, values)
    coords, values = coords[order], values[order]
    tensors = tensors if tensors is not None else ModelTensors.of(model)
    cfg = model.config

    def context_loss(phi: Tensor) -> Tensor:
        pred = mlp_forward(phi, model.net, coords)
        return compute_loss(cfg.inner_loss, pred, values, tensors.loss_state, cfg.clamp_delta)

    return adapt_params(tensors.theta, tensors.alpha, context_loss, cfg.k,
                        first_order=cfg.first_order, keep_trajectory=keep_trajectory)


def meta_objective(model: MetaModel, task: Task, theta: Optional[Tensor] = None,
                   alpha: Optional[Sequence[Tensor]] = None,
                   loss_state: Optional[Tensor] = None) -> Tensor:
    """
    Target loss of the adapted parameters for one task

    Any of theta/alpha/loss_state may be supplied as tensors to differentiate
    against; the rest come from the model as constants.
    """
    tensors = ModelTensors.of(model)
    if theta is not None:
        tensors.theta = theta
    if alpha is not None:
        tensors.alpha = list(alpha)
    if loss_state is not None:
        tensors.loss_state = loss_state
    result = inner_adapt(model, task.context_coords, task.context_values, tensors)
    pred = mlp_forward(result.phi, model.net, task.target_coords)
    return compute_loss(model.config.outer_loss, pred, task.target_values, tensors.loss_state,
                        model.config.clamp_delta)


def _task_gradients(model: MetaModel, task: Task) -> Tuple[float, Optional[Dict[str, np.ndarray]]]:
    with graph_scope():
        tensors = ModelTensors.of(model, requires_grad=True)
        try:
            result = inner_adapt(model, task.context_coords, task.context_values, tensors)
        except NonFiniteError as e:
            log_problem(f"{task.shape_id}: {e}")
            return float("nan"), None
        pred = mlp_forward(result.phi, model.net, task.target_coords)
        loss = compute_loss(model.config.outer_loss, pred, task.target_values, tensors.loss_state,
                            model.config.clamp_delta)
        value = scalar(loss)
        if not np.isfinite(value):
            return value, None
        named = tensors.targets()
        grads = grad(loss, [t for _, t in named])
        return value, {name: g.data for (name, _), g in zip(named, grads)}


def outer_step(model: MetaModel, tasks: Sequence[Task], optimizer: Adam,
               threads: int = config.THREADS) -> float:
    """
    One meta-update over a batch of tasks

    Tasks may be adapted concurrently; their gradients are averaged in batch
    order before a single ADAM step on theta, alpha and the loss state.

    Args:
        model: Updated in place
        tasks: Non-empty batch
        optimizer: ADAM holding the outer state
        threads: Worker threads for per-task adaptation

    Returns:
        Mean outer loss of the batch, or NaN when the step was skipped
    """
    if not tasks:
        raise SdfDataError("outer_step needs at least one task")
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            outcomes = list(pool.map(lambda t: _task_gradients(model, t), tasks))
    else:
        outcomes = [_task_gradients(model, t) for t in tasks]

    losses = [loss for loss, _ in outcomes]
    if any(g is None for _, g in outcomes):
        bad = [t.shape_id for t, (_, g) in zip(tasks, outcomes) if g is None]
        log_problem(f"Skipping outer step: non-finite loss on {', '.join(bad)}")
        return float("nan")

    total: Dict[str, np.ndarray] = {}
    for _, grads in outcomes:
        for name, g in grads.items():
            total[name] = g.copy() if name not in total else total[name] + g
    mean_grads = {name: g / len(tasks) for name, g in total.items()}
    optimizer.step(model.named_arrays(), mean_grads)
    return float(np.mean(losses))


@dataclass
class Specialization:
    """Inference-mode adaptation of one shape"""
    params: ParameterVector
    context_losses: List[float]
    trajectory: List[ParameterVector]
    wallclock_ms: float
    steps: int


def specialize(model: MetaModel, coords: np.ndarray, values: np.ndarray,
               keep_trajectory: bool = False) -> Specialization:
    """
    Fit a shape from context without keeping a graph between steps

    Args:
        model: Trained meta model
        coords: (n, d) context coordinates
        values: (n,) context values
        keep_trajectory: Also return phi^0..phi^k

    Returns:
        Specialization with phi^k and the wall-clock time of the k steps
    """
    start = time.perf_counter()
    result = inner_adapt(model, coords, values, keep_trajectory=keep_trajectory)
    wallclock = elapsed_ms(start)
    params = model.theta.unflatten(result.phi.data)
    trajectory = [model.theta.unflatten(p) for p in result.trajectory]
    log_debug(f"specialize: {model.config.k} steps in {wallclock:.1f} ms, "
              f"context loss {result.context_losses[0]:.5f} -> {result.context_losses[-1]:.5f}")
    return Specialization(params, result.context_losses, trajectory, wallclock, model.config.k)


def predict(model: MetaModel, params: ParameterVector, coords: np.ndarray) -> np.ndarray:
    """SDF values of specialized parameters at coords"""
    with no_grad():
        out = mlp_forward(params, model.net, coords)
    return predictions_to_sdf(out.data)


def target_l1(model: MetaModel, task: Task) -> Tuple[float, Specialization]:
    fit = specialize(model, task.context_coords, task.context_values)
    pred = predict(model, fit.params, task.target_coords)
    return float(np.mean(np.abs(pred - task.target_values))), fit


def validate(model: MetaModel, tasks: Sequence[Task]) -> float:
    """Mean target l1 over validation tasks; notes tasks whose context loss rises"""
    if not tasks:
        return float("nan")
    errors = []
    rising = 0
    for task in tasks:
        error, fit = target_l1(model, task)
        errors.append(error)
        if np.any(np.diff(fit.context_losses) > 0):
            rising += 1
    if rising > 0.1 * len(tasks):
        log_problem(f"Context loss rose during adaptation on {rising}/{len(tasks)} validation tasks")
    return float(np.mean(errors))


# ---------------------------------------------------------------- checkpoints

def checkpoint_payload(model: MetaModel, cfg: ExperimentConfig, optimizer: Optional[Adam],
                       progress: Dict[str, object]) -> Tuple[Dict[str, object], Dict[str, np.ndarray]]:
    header = {
        "method": "metasdf",
        "config": cfg.to_dict(),
        "dim": model.net.in_dim,
        "alpha_count": len(model.alpha),
        "version": version_string(),
    }
    header.update(progress)
    buffers = {"theta": model.theta.data, "loss_state": model.loss_state}
    for j, a in enumerate(model.alpha):
        buffers[f"alpha.{j}"] = a.data
    if optimizer is not None:
        header["optimizer"] = optimizer.state_header()
        buffers.update(optimizer.state_buffers())
    return header, buffers


def save_meta_checkpoint(path: str, model: MetaModel, cfg: ExperimentConfig,
                         optimizer: Optional[Adam] = None, **progress) -> None:
    header, buffers = checkpoint_payload(model, cfg, optimizer, progress)
    save_checkpoint(header, buffers, path)


def model_from_checkpoint(header: Dict[str, object],
                          buffers: Dict[str, np.ndarray]) -> Tuple[MetaModel, ExperimentConfig]:
    """Rebuild a MetaModel (and its config) from a loaded checkpoint"""
    if header.get("method") != "metasdf":
        raise CheckpointError(f"Not a meta-learning checkpoint (method={header.get('method')})")
    try:
        cfg = ExperimentConfig.from_dict(header["config"])
        net = net_config(cfg, int(header["dim"]))
        meta = MetaConfig.from_experiment(cfg)
        layout = mlp_layout(net)
        theta = ParameterVector(layout, buffers["theta"])
        alpha = [ParameterVector(layout, buffers[f"alpha.{j}"]) for j in range(int(header["alpha_count"]))]
        model = MetaModel(net=net, config=meta, theta=theta, alpha=alpha, loss_state=buffers["loss_state"])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"Incomplete meta checkpoint: {e}") from e
    return model, cfg


def load_meta_checkpoint(path: str) -> Tuple[MetaModel, ExperimentConfig, Adam, Dict[str, object]]:
    header, buffers = load_checkpoint(path)
    model, cfg = model_from_checkpoint(header, buffers)
    optimizer = Adam(lr=cfg.lr)
    if "optimizer" in header:
        optimizer.load_state(header["optimizer"], buffers)
    return model, cfg, optimizer, header


# ---------------------------------------------------------------- training loop

def train_meta(train_records: Sequence[ShapeRecord], cfg: ExperimentConfig,
               val_records: Sequence[ShapeRecord] = (), output_dir: Optional[str] = None,
               resume_from: Optional[str] = None) -> Tuple[MetaModel, pd.DataFrame]:
    """
    Meta-train on a corpus

    Args:
        train_records: Training shapes
        cfg: Resolved experiment config
        val_records: Validation shapes (may be empty)
        output_dir: Where checkpoints and metrics.csv go; None keeps everything in memory
        resume_from: last.ckpt of an earlier run to continue from its next epoch

    Returns:
        (model, metric log DataFrame with one row per outer step)
    """
    if not train_records:
        raise SdfDataError("train_meta needs at least one training shape")

    if resume_from:
        model, _, optimizer, header = load_meta_checkpoint(resume_from)
        state, log = resume_state(header, output_dir)
        print(f"Resuming from {resume_from} at epoch {state.epoch}, step {state.step}")
    else:
        model = init_meta_model(net_config(cfg, train_records[0].grid.dim), MetaConfig.from_experiment(cfg), cfg.seed)
        optimizer = Adam(lr=cfg.lr)
        state, log = TrainState(), MetricLog()

    val_tasks = validation_tasks(val_records, cfg, cfg.seed, cfg.val_count)
    log = run_training(
        train_records, cfg,
        outer=lambda tasks: outer_step(model, tasks, optimizer),
        validate=lambda: validate(model, val_tasks),
        save=lambda path, progress: save_meta_checkpoint(path, model, cfg, optimizer, **progress),
        output_dir=output_dir, log=log, state=state,
        diagnostics=lambda: {"alpha_mean": float(np.mean([a.data.mean() for a in model.alpha]))},
    )
    return model, log.to_frame()
