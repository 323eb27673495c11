"""
Configuration settings for MetaSDF Shape Lab
"""
import os
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from metasdf.errors import ConfigError

# Base paths - outputs go under RESULTS_BASE unless a command names a directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RESULTS_BASE = os.environ.get("METASDF_RESULTS", os.path.join(PROJECT_ROOT, "Results"))

# Enable debugging output
DEBUG_MODE = os.environ.get("METASDF_DEBUG", "").lower() in ("1", "true", "yes")

# Cap on worker threads for per-shape fan-out
try:
    THREADS = max(1, int(os.environ.get("METASDF_THREADS", "1")))
except ValueError:
    THREADS = 1

# Network sizes
HIDDEN_DIM_2D = 256
HIDDEN_DIM_3D = 512
NUM_LAYERS = 4
LATENT_DIM = 256
ENCODER_LAYERS = 4
HYPERNET_LAYERS = 3
HYPERNET_HEAD_SCALE = 1e-2

# Meta-learning (inner loop and outer ADAM)
META_STEPS = 5
OUTER_LR = 1e-4
ALPHA_INIT_2D = 1e-1
ALPHA_INIT_3D = 5e-3
BATCH_TASKS = 32
META_EPOCHS = 50
AUTODEC_EPOCHS = 150
DIVERGENCE_LIMIT = 1e3

# Sampling
DENSE_CONTEXT_POINTS = 1024   # 32^2 dense samples per task
LEVELSET_CONTEXT_POINTS = 512
TARGET_POINTS = 512
GRID_RESOLUTION = 64

# Auto-decoder test-time code search
CODE_SEARCH_STEPS = 400
CODE_SEARCH_LR = 5e-3
CODE_SEARCH_PATIENCE = 20
CODE_SEARCH_MIN_DELTA = 1e-6
CODE_REG_WEIGHT = 1e-4
CODE_INIT_STD = 0.01

# Losses
CLAMP_DELTA = 0.1

# Evaluation
CHAMFER_SAMPLES = 2000
EXTRACT_RES_2D = 128
EXTRACT_RES_3D = 64
VAL_COUNT_2D = 1000
VAL_COUNT_3D = 20
LEVEL_SPACING = 0.05

# Accepted values
METHODS = ("metasdf", "autodec-concat", "autodec-hyper", "cnp")
CONTEXT_MODES = ("dense", "levelset")
LOSSES = ("l1", "composite", "clamped")
POOLINGS = ("mean", "max")


@dataclass
class ExperimentConfig:
    """
    Everything needed to reproduce one training run.

    Fields left as None are resolved from the dataset dimension by resolve().
    """
    method: str = "metasdf"
    dataset: str = ""
    output_dir: str = ""
    context_mode: str = "dense"
    seed: int = 0

    # network
    hidden_dim: Optional[int] = None
    num_layers: int = NUM_LAYERS
    latent_dim: int = LATENT_DIM
    hyper_hidden: Optional[int] = None
    encoder_layers: int = ENCODER_LAYERS
    pooling: str = "mean"

    # losses
    loss: Optional[str] = None
    inner_loss: Optional[str] = None
    allow_clamped_inner: bool = False
    clamp_delta: float = CLAMP_DELTA

    # meta-learning
    inner_steps: int = META_STEPS
    alpha_init: Optional[float] = None
    per_step_alpha: Optional[bool] = None
    first_order: bool = False

    # optimisation
    lr: float = OUTER_LR
    batch_tasks: int = BATCH_TASKS
    epochs: Optional[int] = None
    max_steps: Optional[int] = None
    context_n: Optional[int] = None
    target_n: int = TARGET_POINTS
    val_count: Optional[int] = None

    # auto-decoder
    code_reg_weight: float = CODE_REG_WEIGHT
    code_steps: int = CODE_SEARCH_STEPS
    code_lr: float = CODE_SEARCH_LR

    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ExperimentConfig":
        """
        Build a config from a plain dictionary, rejecting unknown keys

        Args:
            values: Mapping of field names to values

        Returns:
            Validated ExperimentConfig
        """
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        config = cls(**values)
        try:
            config.validate()
        except TypeError as e:
            raise ConfigError(f"Config value has the wrong type: {e}") from e
        return config

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        """Check field values; raises ConfigError on the first problem"""
        if self.method not in METHODS:
            raise ConfigError(f"Invalid method '{self.method}', expected one of {', '.join(METHODS)}")
        if self.context_mode not in CONTEXT_MODES:
            raise ConfigError(f"Invalid context mode '{self.context_mode}'")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"Invalid pooling '{self.pooling}'")
        for name in ("loss", "inner_loss"):
            value = getattr(self, name)
            if value is not None and value not in LOSSES:
                raise ConfigError(f"Invalid {name} '{value}', expected one of {', '.join(LOSSES)}")
        if self.inner_loss == "clamped" and not self.allow_clamped_inner:
            raise ConfigError("Clamped inner loss needs allow_clamped_inner=true")
        if self.method == "metasdf" and self.loss == "clamped":
            raise ConfigError("Clamped l1 is only available to baseline outer losses")
        composite = [l == "composite" for l in (self.loss, self.inner_loss) if l is not None]
        if any(composite) and not all(composite):
            raise ConfigError("Composite loss must be used for both inner and outer loss")
        positive = {
            "num_layers": self.num_layers, "latent_dim": self.latent_dim,
            "encoder_layers": self.encoder_layers, "lr": self.lr,
            "batch_tasks": self.batch_tasks, "target_n": self.target_n,
            "clamp_delta": self.clamp_delta, "code_lr": self.code_lr,
        }
        for name, value in positive.items():
            if value is None or value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.num_layers < 2:
            raise ConfigError("num_layers must be at least 2")
        if self.inner_steps < 0:
            raise ConfigError("inner_steps must be >= 0")
        for name in ("hidden_dim", "hyper_hidden", "epochs", "context_n", "max_steps"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.alpha_init is not None and self.alpha_init < 0:
            raise ConfigError("alpha_init must be non-negative")
        if self.code_reg_weight < 0 or self.code_steps < 0:
            raise ConfigError("code_reg_weight and code_steps must be non-negative")

    def resolve(self, dim: int) -> "ExperimentConfig":
        """
        Fill dimension-dependent defaults

        Args:
            dim: Coordinate dimension of the dataset (2 or 3)

        Returns:
            A new config with no None fields left
        """
        if dim not in (2, 3):
            raise ConfigError(f"Unsupported dataset dimension {dim}")
        resolved = dataclasses.replace(self)
        if resolved.hidden_dim is None:
            resolved.hidden_dim = HIDDEN_DIM_2D if dim == 2 else HIDDEN_DIM_3D
        if resolved.hyper_hidden is None:
            resolved.hyper_hidden = resolved.hidden_dim
        if resolved.loss is None:
            resolved.loss = resolved.inner_loss if resolved.inner_loss == "composite" else (
                "l1" if dim == 2 else "composite")
        if resolved.inner_loss is None:
            resolved.inner_loss = "composite" if resolved.loss == "composite" else "l1"
        if resolved.alpha_init is None:
            resolved.alpha_init = ALPHA_INIT_2D if dim == 2 else ALPHA_INIT_3D
        if resolved.per_step_alpha is None:
            resolved.per_step_alpha = dim == 3
        if resolved.epochs is None:
            resolved.epochs = AUTODEC_EPOCHS if resolved.method.startswith("autodec") else META_EPOCHS
        if resolved.context_n is None:
            resolved.context_n = DENSE_CONTEXT_POINTS if resolved.context_mode == "dense" else LEVELSET_CONTEXT_POINTS
        if resolved.val_count is None:
            resolved.val_count = VAL_COUNT_2D if dim == 2 else VAL_COUNT_3D
        resolved.validate()
        return resolved

    @property
    def out_dim(self) -> int:
        """Two heads (distance, sign logit) for the composite loss"""
        return 2 if self.loss == "composite" else 1
