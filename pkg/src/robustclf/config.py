"""Training configuration: defaults, validation, and the flat key=value
config-file format.

Config files hold one ``key=value`` pair per line; blank lines and lines
starting with '#' are ignored. Keys are exactly the TrainConfig field names.
Booleans are written ``true``/``false``. Values parse by the field's type, and
unknown keys are errors, so a saved snapshot re-runs byte-for-byte.

Defaults encode the reference training protocol: batch size 32, initial
learning rate 1e-3 with cosine annealing, alpha 0.8, gamma 0.5, delta 0.05,
eta 0.6, power 2.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .optim import SAM_VARIANTS

SEED_ENV_VAR = "ROBUST_CLF_SEED"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.8            # tail fraction of the CVaR term
    gamma: float = 0.5            # blend: gamma*cvar + (1-gamma)*auc
    eta: float = 0.6              # ranking margin
    power: float = 2.0            # ranking hinge exponent
    delta: float = 0.05           # SAM perturbation radius
    lr: float = 1e-3
    batch_size: int = 32
    max_iterations: int = 50      # epochs (full passes over the bank)
    seed: int = 0
    hidden_dim: int = 1536
    dropout_rate: float = 0.1
    use_cvar: bool = True         # off: mean BCE (alpha effectively 1)
    use_auc: bool = True          # off: gamma effectively 1
    use_sam: bool = True          # off: epsilon* = 0, single backward pass
    sam_variant: str = "sign"
    lr_schedule: str = "cosine"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.power <= 1.0:
            raise ValueError(f"power must be > 1, got {self.power}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.lr < 0.0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (normalization needs a variance)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.sam_variant not in SAM_VARIANTS:
            raise ValueError(f"sam_variant must be one of {SAM_VARIANTS}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"lr_schedule must be cosine or constant, got {self.lr_schedule}")

    # Ablation toggles act through these effective values; the raw fields are
    # preserved so config snapshots stay faithful.
    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.use_cvar else 1.0

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.use_auc else 1.0


_FIELD_TYPES = {f.name: type(f.default) for f in fields(TrainConfig)}


def parse_value(key: str, raw: str):
    """Convert one raw config string by the field's declared type."""
    if key not in _FIELD_TYPES:
        raise ValueError(f"unknown config key {key!r}")
    target = _FIELD_TYPES[key]
    raw = raw.strip()
    if target is bool:
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise ValueError(f"config key {key!r} expects true or false, got {raw!r}")
    try:
        return target(raw)
    except ValueError:
        raise ValueError(f"config key {key!r} expects {target.__name__}, got {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """key=value lines -> typed dict; '#' comments and blank lines skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        values[key] = parse_value(key, raw)
    return values


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    return replace(base if base is not None else TrainConfig(), **values)


def config_to_text(cfg: TrainConfig) -> str:
    """Serialize every field; parse_config_text round-trips this exactly."""
    lines = []
    for f in fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name}={rendered}")
    return "\n".join(lines) + "\n"


def save_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))
