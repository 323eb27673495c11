"""
Conditional neural process baseline: set encoder -> latent code -> concat decoder
"""
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from metasdf.autodiff import Tensor, grad, graph_scope, no_grad
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import ShapeRecord, load_checkpoint
from metasdf.data.data_saver import save_checkpoint
from metasdf.data.sampling import Task
from metasdf.errors import CheckpointError, ConfigError, SdfDataError
from metasdf.nets.mlp import concat_forward, init_concat_mlp, init_mlp
from metasdf.nets.parameters import MlpConfig, ParameterVector, concat_layout, mlp_layout
from metasdf.nets.set_encoder import encoder_config, set_encode
from metasdf.training.common import (
    MetricLog, TrainState, elapsed_ms, resume_state, run_training, validation_tasks,
)
from metasdf.training.losses import compute_loss, predictions_to_sdf, scalar
from metasdf.training.optimizer import Adam
from metasdf.utils.file_utils import version_string
from metasdf.utils.logging_utils import log_problem


@dataclass
class CnpModel:
    encoder: ParameterVector
    decoder: ParameterVector
    encoder_net: MlpConfig
    net: MlpConfig
    pooling: str = "mean"
    loss: str = "l1"
    loss_state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.encoder.layout != mlp_layout(self.encoder_net):
            raise ConfigError("CnpModel: encoder parameters do not match the encoder topology")
        if self.decoder.layout != concat_layout(self.net, self.latent_dim):
            raise ConfigError("CnpModel: encoder output size differs from the decoder latent size")
        self.loss_state = np.asarray(self.loss_state, dtype=np.float64).reshape(2).copy()

    @property
    def latent_dim(self) -> int:
        return self.encoder_net.out_dim

    def forward(self, encoder, decoder, context_coords, context_values, queries) -> Tensor:
        z = set_encode(encoder, context_coords, context_values, self.encoder_net, self.pooling)
        return concat_forward(decoder, z, queries, self.net)


def init_cnp(net: MlpConfig, cfg: ExperimentConfig, seed: Optional[int] = 0) -> CnpModel:
    enet = encoder_config(net.in_dim, cfg.hidden_dim, cfg.encoder_layers, cfg.latent_dim)
    encoder = init_mlp(enet, None if seed is None else seed + 2)
    decoder = init_concat_mlp(net, cfg.latent_dim, seed)
    return CnpModel(encoder=encoder, decoder=decoder, encoder_net=enet, net=net,
                    pooling=cfg.pooling, loss=cfg.loss)


def _task_gradients(model: CnpModel, task: Task) -> Tuple[float, Optional[Dict[str, np.ndarray]]]:
    with graph_scope():
        encoder = model.encoder.as_tensor(requires_grad=True)
        decoder = model.decoder.as_tensor(requires_grad=True)
        state = Tensor(model.loss_state.copy(), requires_grad=model.loss == "composite")
        pred = model.forward(encoder, decoder, task.context_coords, task.context_values, task.target_coords)
        loss = compute_loss(model.loss, pred, task.target_values, state)
        value = scalar(loss)
        if not np.isfinite(value):
            return value, None
        targets = [encoder, decoder] + ([state] if state.requires_grad else [])
        grads = grad(loss, targets)
    named = {"encoder": grads[0].data, "decoder": grads[1].data}
    if state.requires_grad:
        named["loss_state"] = grads[2].data
    return value, named


def cnp_step(model: CnpModel, tasks: Sequence[Task], optimizer: Adam) -> float:
    """One ADAM step on encoder and decoder; NaN when skipped"""
    if not tasks:
        raise SdfDataError("cnp_step needs at least one task")
    outcomes = [_task_gradients(model, t) for t in tasks]
    if any(g is None for _, g in outcomes):
        log_problem("Skipping CNP step: non-finite loss")
        return float("nan")
    total: Dict[str, np.ndarray] = {}
    for _, grads in outcomes:
        for name, g in grads.items():
            total[name] = g.copy() if name not in total else total[name] + g
    arrays = {"encoder": model.encoder.data, "decoder": model.decoder.data, "loss_state": model.loss_state}
    optimizer.step(arrays, {name: g / len(tasks) for name, g in total.items()})
    return float(np.mean([loss for loss, _ in outcomes]))


@dataclass
class CnpInference:
    values: np.ndarray
    code: np.ndarray
    wallclock_ms: float


def cnp_infer(model: CnpModel, context_coords: np.ndarray, context_values: np.ndarray,
              queries: np.ndarray) -> CnpInference:
    """
    Predict SDF values at queries with one forward pass

    Args:
        model: Trained CNP
        context_coords: (n, d) context coordinates, n >= 1
        context_values: (n,) context values
        queries: (m, d) query points

    Returns:
        CnpInference with (m,) signed distances, the latent code and the wall-clock time
    """
    if len(context_coords) == 0:
        raise SdfDataError("cnp_infer needs a non-empty context")
    start = time.perf_counter()
    with no_grad():
        z = set_encode(model.encoder, context_coords, context_values, model.encoder_net, model.pooling)
        out = concat_forward(model.decoder, z, queries, model.net)
    values = predictions_to_sdf(out.data)
    return CnpInference(values=values, code=z.data.copy(), wallclock_ms=elapsed_ms(start))


def decode_code(model: CnpModel, code: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Signed distances at queries for an already encoded context"""
    with no_grad():
        out = concat_forward(model.decoder, np.asarray(code, dtype=np.float64), queries, model.net)
    return predictions_to_sdf(out.data)


def validate(model: CnpModel, tasks: Sequence[Task]) -> float:
    if not tasks:
        return float("nan")
    errors = [np.mean(np.abs(cnp_infer(model, t.context_coords, t.context_values, t.target_coords).values
                             - t.target_values)) for t in tasks]
    return float(np.mean(errors))


def save_cnp_checkpoint(path: str, model: CnpModel, cfg: ExperimentConfig,
                        optimizer: Optional[Adam] = None, **progress) -> None:
    header = {"method": "cnp", "config": cfg.to_dict(), "dim": model.net.in_dim, "version": version_string()}
    header.update(progress)
    buffers = {"encoder": model.encoder.data, "decoder": model.decoder.data, "loss_state": model.loss_state}
    if optimizer is not None:
        header["optimizer"] = optimizer.state_header()
        buffers.update(optimizer.state_buffers())
    save_checkpoint(header, buffers, path)


def model_from_checkpoint(header: Dict[str, object],
                          buffers: Dict[str, np.ndarray]) -> Tuple[CnpModel, ExperimentConfig]:
    if header.get("method") != "cnp":
        raise CheckpointError(f"Not a CNP checkpoint (method={header.get('method')})")
    try:
        cfg = ExperimentConfig.from_dict(header["config"])
        net = MlpConfig(in_dim=int(header["dim"]), hidden_dim=cfg.hidden_dim,
                        num_layers=cfg.num_layers, out_dim=cfg.out_dim)
        enet = encoder_config(net.in_dim, cfg.hidden_dim, cfg.encoder_layers, cfg.latent_dim)
        model = CnpModel(encoder=ParameterVector(mlp_layout(enet), buffers["encoder"]),
                         decoder=ParameterVector(concat_layout(net, cfg.latent_dim), buffers["decoder"]),
                         encoder_net=enet, net=net, pooling=cfg.pooling, loss=cfg.loss,
                         loss_state=buffers["loss_state"])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"Incomplete CNP checkpoint: {e}") from e
    return model, cfg


def load_cnp_checkpoint(path: str) -> Tuple[CnpModel, ExperimentConfig, Adam, Dict[str, object]]:
    header, buffers = load_checkpoint(path)
    model, cfg = model_from_checkpoint(header, buffers)
    optimizer = Adam(lr=cfg.lr)
    if "optimizer" in header:
        optimizer.load_state(header["optimizer"], buffers)
    return model, cfg, optimizer, header


def train_cnp(train_records: Sequence[ShapeRecord], cfg: ExperimentConfig,
              val_records: Sequence[ShapeRecord] = (), output_dir: Optional[str] = None,
              resume_from: Optional[str] = None) -> Tuple[CnpModel, pd.DataFrame]:
    """
    Train encoder and decoder end to end on context -> target regression

    The context mode of the config is fixed for the model: a dense-context
    and a level-set-context CNP are separate models.
    """
    if not train_records:
        raise SdfDataError("train_cnp needs at least one training shape")
    if resume_from:
        model, _, optimizer, header = load_cnp_checkpoint(resume_from)
        state, log = resume_state(header, output_dir)
    else:
        dim = train_records[0].grid.dim
        net = MlpConfig(in_dim=dim, hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers, out_dim=cfg.out_dim)
        model = init_cnp(net, cfg, cfg.seed)
        optimizer = Adam(lr=cfg.lr)
        state, log = TrainState(), MetricLog()

    val_tasks = validation_tasks(val_records, cfg, cfg.seed, cfg.val_count)
    log = run_training(
        train_records, cfg,
        outer=lambda tasks: cnp_step(model, tasks, optimizer),
        validate=lambda: validate(model, val_tasks),
        save=lambda path, progress: save_cnp_checkpoint(path, model, cfg, optimizer, **progress),
        output_dir=output_dir, log=log, state=state,
    )
    return model, log.to_frame()
