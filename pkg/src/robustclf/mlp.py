"""Three-layer MLP scorer with hand-written forward and backward passes.

Architecture: two hidden blocks of ``linear -> batch norm -> ReLU -> dropout``
followed by ``linear -> sigmoid`` into a single probability. Everything runs
in float64 so analytic gradients can be checked against central finite
differences at tight tolerance.

Batch norm uses the biased batch variance both for normalization and for the
running-statistic update ``new = (1 - momentum) * old + momentum * batch``.
Dropout is inverted (survivors scaled by 1/(1-rate)), so evaluation needs no
rescaling. In eval mode dropout is the identity and normalization uses the
running statistics, making scoring deterministic and input-independent across
batch composition.

The backward pass returns exact partial derivatives for every trainable
tensor, including the path through train-mode batch statistics. Running
statistics never receive gradient. A forward pass can be replayed with the
dropout masks and/or normalization statistics of an earlier trace, which is
how the perturbed pass of sharpness-aware training isolates the parameter
direction from the stochastic state of the clean pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

CKPT_MAGIC = b"MLPC\x00\x01"

# Flat packing order for trainable tensors (optimizer / SAM / landscape space).
TRAINABLE_FIELDS = (
    "w1", "b1", "w2", "b2", "w3", "b3",
    "bn1_scale", "bn1_shift", "bn2_scale", "bn2_shift",
)

# Checkpoint serialization order: linear layers first, then both norm blocks
# with their running statistics.
_CKPT_FIELDS = (
    "w1", "b1", "w2", "b2", "w3", "b3",
    "bn1_scale", "bn1_shift", "bn1_mean", "bn1_var",
    "bn2_scale", "bn2_shift", "bn2_mean", "bn2_var",
)


@dataclass
class MlpModel:
    """Parameters, normalization state, and mode of the 3-layer scorer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    bn1_scale: np.ndarray
    bn1_shift: np.ndarray
    bn1_mean: np.ndarray
    bn1_var: np.ndarray
    bn2_scale: np.ndarray
    bn2_shift: np.ndarray
    bn2_mean: np.ndarray
    bn2_var: np.ndarray
    dropout_rate: float = 0.1
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    mode: str = "train"

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def train(self) -> "MlpModel":
        self.mode = "train"
        return self

    def eval(self) -> "MlpModel":
        self.mode = "eval"
        return self


def init_model(
    dim: int,
    hidden: int = 1536,
    dropout_rate: float = 0.1,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> MlpModel:
    """Fresh model: He-uniform weights (bound sqrt(6/fan_in)), zero biases,
    unit normalization scale, zero shift, running stats at (0, 1)."""
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must be in [0, 1)")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0 if seed is None else seed))

    def he_uniform(fan_out, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    h = hidden
    return MlpModel(
        w1=he_uniform(h, dim), b1=np.zeros(h),
        w2=he_uniform(h, h), b2=np.zeros(h),
        w3=he_uniform(1, h), b3=np.zeros(1),
        bn1_scale=np.ones(h), bn1_shift=np.zeros(h),
        bn1_mean=np.zeros(h), bn1_var=np.ones(h),
        bn2_scale=np.ones(h), bn2_shift=np.zeros(h),
        bn2_mean=np.zeros(h), bn2_var=np.ones(h),
        dropout_rate=dropout_rate,
    )


@dataclass
class LayerTrace:
    """Everything the hidden-block backward pass needs."""

    x: np.ndarray          # block input
    z: np.ndarray          # linear pre-activation
    mean: np.ndarray       # normalization mean actually used
    var: np.ndarray        # normalization variance actually used
    xhat: np.ndarray       # normalized pre-activation
    y: np.ndarray          # scaled + shifted, pre-ReLU
    a: np.ndarray          # post-ReLU
    mask: np.ndarray | None  # dropout multiplier incl. 1/(1-rate); None = identity
    out: np.ndarray        # block output


@dataclass
class ForwardTrace:
    mode: str
    stats_frozen: bool     # True: normalization stats are constants in backward
    hidden: list[LayerTrace]
    logits: np.ndarray
    probs: np.ndarray

    @property
    def masks(self) -> list[np.ndarray | None]:
        return [lt.mask for lt in self.hidden]

    @property
    def bn_stats(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(lt.mean, lt.var) for lt in self.hidden]


def forward(
    model: MlpModel,
    batch: np.ndarray,
    rng: np.random.Generator | None = None,
    *,
    update_running: bool = False,
    masks: list[np.ndarray | None] | None = None,
    bn_stats: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> ForwardTrace:
    """Run the network on a batch of feature rows.

    Train mode computes batch statistics (unless ``bn_stats`` replays an
    earlier trace) and draws fresh dropout masks from ``rng`` (unless
    ``masks`` replays them; no draw happens when dropout_rate is 0). Eval
    mode uses running statistics and no dropout. ``update_running`` folds
    the batch statistics into the running ones and is only legal on a clean
    train-mode pass.
    """
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"batch shape {x.shape} incompatible with input width {model.dim}")
    training = model.mode == "train"
    if training and bn_stats is None and x.shape[0] < 2:
        raise ValueError("train-mode batch needs >= 2 rows for batch statistics")
    if update_running and (not training or bn_stats is not None):
        raise ValueError("running statistics update requires a clean train-mode pass")

    rate = model.dropout_rate
    keep = 1.0 - rate

    def next_mask(i, shape):
        if not training or rate == 0.0:
            return None
        if masks is not None:
            return masks[i]
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")
        return (rng.random(shape) < keep).astype(np.float64) / keep

    params = (
        (model.w1, model.b1, model.bn1_scale, model.bn1_shift, model.bn1_mean, model.bn1_var),
        (model.w2, model.b2, model.bn2_scale, model.bn2_shift, model.bn2_mean, model.bn2_var),
    )
    hidden: list[LayerTrace] = []
    out = x
    frozen = not training or bn_stats is not None
    for i, (w, b, scale, shift, run_mean, run_var) in enumerate(params):
        x_in = out
        z = x_in @ w.T + b
        if not training:
            mean, var = run_mean, run_var
        elif bn_stats is not None:
            mean, var = bn_stats[i]
        else:
            mean = z.mean(axis=0)
            var = z.var(axis=0)  # biased, matches the running-stat convention
        xhat = (z - mean) / np.sqrt(var + model.bn_eps)
        y = xhat * scale + shift
        a = np.maximum(y, 0.0)
        mask = next_mask(i, z.shape)
        out = a if mask is None else a * mask
        if update_running:
            m = model.bn_momentum
            run_mean *= 1.0 - m
            run_mean += m * mean
            run_var *= 1.0 - m
            run_var += m * var
        hidden.append(LayerTrace(x=x_in, z=z, mean=mean, var=var, xhat=xhat, y=y, a=a,
                                 mask=mask, out=out))

    logits = (out @ model.w3.T + model.b3)[:, 0]
    probs = expit(logits)
    return ForwardTrace(model.mode, frozen, hidden, logits, probs)


def backward(model: MlpModel, trace: ForwardTrace, dloss_dprob: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss w.r.t. every trainable tensor.

    ``dloss_dprob`` holds the loss partials w.r.t. the output probabilities
    of ``trace`` (one per batch row). When the trace carries live batch
    statistics, the gradient flows through them; frozen or eval statistics
    are treated as constants. Running statistics get no gradient.
    """
    if len(trace.hidden) != 2 or trace.hidden[0].x.shape[1] != model.dim:
        raise ValueError("trace does not match model")
    dprob = np.asarray(dloss_dprob, dtype=np.float64)
    if dprob.shape != trace.probs.shape:
        raise ValueError(f"dloss_dprob shape {dprob.shape} != {trace.probs.shape}")

    grads: dict[str, np.ndarray] = {}
    dlogit = dprob * trace.probs * (1.0 - trace.probs)

    h2 = trace.hidden[1]
    dz3 = dlogit[:, None]
    grads["w3"] = dz3.T @ h2.out
    grads["b3"] = dz3.sum(axis=0)
    dout = dz3 @ model.w3

    for idx, w, scale in ((1, model.w2, model.bn2_scale), (0, model.w1, model.bn1_scale)):
        lt = trace.hidden[idx]
        da = dout if lt.mask is None else dout * lt.mask
        dy = da * (lt.y > 0.0)
        grads[f"bn{idx + 1}_scale"] = (dy * lt.xhat).sum(axis=0)
        grads[f"bn{idx + 1}_shift"] = dy.sum(axis=0)
        dxhat = dy * scale
        inv = 1.0 / np.sqrt(lt.var + model.bn_eps)
        if trace.stats_frozen:
            dz = dxhat * inv
        else:
            n = lt.z.shape[0]
            dz = (inv / n) * (
                n * dxhat - dxhat.sum(axis=0) - lt.xhat * (dxhat * lt.xhat).sum(axis=0)
            )
        grads[f"w{idx + 1}"] = dz.T @ lt.x
        grads[f"b{idx + 1}"] = dz.sum(axis=0)
        dout = dz @ w
    return grads


def predict_scores(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Deterministic eval-semantics probabilities for a batch, regardless of mode."""
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"batch shape {x.shape} incompatible with input width {model.dim}")
    out = x
    params = (
        (model.w1, model.b1, model.bn1_scale, model.bn1_shift, model.bn1_mean, model.bn1_var),
        (model.w2, model.b2, model.bn2_scale, model.bn2_shift, model.bn2_mean, model.bn2_var),
    )
    for w, b, scale, shift, mean, var in params:
        z = out @ w.T + b
        xhat = (z - mean) / np.sqrt(var + model.bn_eps)
        out = np.maximum(xhat * scale + shift, 0.0)
    logits = (out @ model.w3.T + model.b3)[:, 0]
    return expit(logits)


def score(model: MlpModel, feature: np.ndarray) -> float:
    """Probability in (0, 1) that a single feature vector is generated."""
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != model.dim:
        raise ValueError(f"feature length {f.shape} incompatible with input width {model.dim}")
    return float(predict_scores(model, f[None, :])[0])


# ---------------------------------------------------------------------------
# Flat parameter vector helpers (optimizer / SAM / landscape space).

def param_slices(model: MlpModel) -> list[tuple[str, slice, tuple[int, ...]]]:
    """(name, flat slice, shape) for each trainable tensor, in packing order."""
    out = []
    offset = 0
    for name in TRAINABLE_FIELDS:
        arr = getattr(model, name)
        out.append((name, slice(offset, offset + arr.size), arr.shape))
        offset += arr.size
    return out


def pack_params(model: MlpModel) -> np.ndarray:
    return np.concatenate([getattr(model, n).ravel() for n in TRAINABLE_FIELDS])


def unpack_params(model: MlpModel, flat: np.ndarray) -> None:
    """Write a flat vector back into the model's trainable tensors."""
    expected = param_count(model)
    if flat.shape != (expected,):
        raise ValueError(f"flat vector has {flat.shape}, expected ({expected},)")
    for name, sl, shape in param_slices(model):
        setattr(model, name, np.ascontiguousarray(flat[sl]).reshape(shape))


def pack_grads(model: MlpModel, grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[n].ravel() for n in TRAINABLE_FIELDS])


def param_count(model: MlpModel) -> int:
    return sum(getattr(model, n).size for n in TRAINABLE_FIELDS)


def param_count_formula(dim: int, hidden: int) -> int:
    """Closed-form trainable parameter count for the (dim, hidden, 3-layer) net:
    two hidden linear layers, the scalar output layer, and 2 norm params per
    hidden unit per block."""
    return (hidden * dim + hidden) + (hidden * hidden + hidden) + (hidden + 1) + 2 * (2 * hidden)


# ---------------------------------------------------------------------------
# Checkpoint I/O: bit-exact little-endian float64 snapshot.

def save_model(model: MlpModel, path) -> None:
    head = struct.pack(
        "<6sQQddd",
        CKPT_MAGIC,
        model.dim,
        model.hidden,
        model.dropout_rate,
        model.bn_momentum,
        model.bn_eps,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for name in _CKPT_FIELDS:
            arr = np.ascontiguousarray(getattr(model, name), dtype="<f8")
            fh.write(arr.tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<6sQQddd")
    if len(raw) < head.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, dim, hidden, dropout_rate, bn_momentum, bn_eps = head.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
    shapes = {
        "w1": (hidden, dim), "b1": (hidden,),
        "w2": (hidden, hidden), "b2": (hidden,),
        "w3": (1, hidden), "b3": (1,),
        "bn1_scale": (hidden,), "bn1_shift": (hidden,),
        "bn1_mean": (hidden,), "bn1_var": (hidden,),
        "bn2_scale": (hidden,), "bn2_shift": (hidden,),
        "bn2_mean": (hidden,), "bn2_var": (hidden,),
    }
    offset = head.size
    fields = {}
    for name in _CKPT_FIELDS:
        shape = shapes[name]
        size = int(np.prod(shape))
        end = offset + 8 * size
        if end > len(raw):
            raise ValueError(f"{path}: truncated checkpoint in field {name}")
        fields[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).astype(
            np.float64
        ).reshape(shape)
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes in checkpoint")
    return MlpModel(
        **fields,
        dropout_rate=dropout_rate,
        bn_momentum=bn_momentum,
        bn_eps=bn_eps,
        mode="eval",
    )
