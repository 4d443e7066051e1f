"""A small weight-shared encoder with a batch-norm neck and identity classifier.

The forward pass is ``x -> linear -> relu -> linear -> embeddings`` followed by
a 1-D batch-norm layer (the "neck") and a linear classifier on the normalized
embeddings. Metric losses consume the raw embeddings; the identity loss
consumes the logits; retrieval at test time uses the post-norm embeddings.
Forward and backward are pure: batch-norm running statistics are only changed
by an explicit :func:`update_bn_stats` call.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import RngStream, as_matrix
from .errors import ConfigError, DimensionError, StateError

BN_EPS = 1e-5
TRAIN = "train"
EVAL = "eval"
ACTIVATIONS = ("relu", "identity")
TRAINABLE = ("w1", "b1", "w2", "b2", "bn_gamma", "bn_beta", "wc", "bc")

_CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """All parameter tensors plus the batch-norm running statistics."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    wc: np.ndarray
    bc: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def n_classes(self) -> int:
        return self.wc.shape[1]

    def copy(self) -> "ModelParams":
        kwargs = {
            f.name: (getattr(self, f.name).copy() if f.name != "activation" else self.activation)
            for f in fields(self)
        }
        return ModelParams(**kwargs)


@dataclass
class ModelGrads:
    """Gradients for every trainable tensor (running stats are not trainable)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    wc: np.ndarray
    bc: np.ndarray


@dataclass
class ForwardTrace:
    """Intermediate tensors cached by forward for the backward pass."""

    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    embeddings: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    istd: np.ndarray
    xhat: np.ndarray
    bn_embeddings: np.ndarray
    logits: np.ndarray
    mode: str


def init_params(
    in_dim: int,
    hidden_dim: int,
    embed_dim: int,
    n_classes: int,
    rng: RngStream,
    activation: str = "relu",
) -> ModelParams:
    """Gaussian(0, 2/fan_in) weights, zero biases, unit-gain batch norm."""
    for name, val in (
        ("in_dim", in_dim),
        ("hidden_dim", hidden_dim),
        ("embed_dim", embed_dim),
        ("n_classes", n_classes),
    ):
        if int(val) < 1:
            raise ConfigError(f"{name} must be >= 1")
    return ModelParams(
        w1=rng.normal(scale=np.sqrt(2.0 / in_dim), size=(in_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(scale=np.sqrt(2.0 / hidden_dim), size=(hidden_dim, embed_dim)),
        b2=np.zeros(embed_dim),
        bn_gamma=np.ones(embed_dim),
        bn_beta=np.zeros(embed_dim),
        bn_running_mean=np.zeros(embed_dim),
        bn_running_var=np.ones(embed_dim),
        wc=rng.normal(scale=np.sqrt(2.0 / embed_dim), size=(embed_dim, n_classes)),
        bc=np.zeros(n_classes),
        activation=activation,
    )


def forward(
    params: ModelParams, x, mode: str = TRAIN
) -> tuple[np.ndarray, np.ndarray, np.ndarray, ForwardTrace]:
    """Run the encoder, neck, and classifier.

    Returns ``(embeddings, bn_embeddings, logits, trace)``. Train mode
    normalizes with batch statistics (and needs >= 2 rows); eval mode uses the
    stored running statistics and is row-wise deterministic.
    """
    if mode not in (TRAIN, EVAL):
        raise ConfigError(f"mode must be {TRAIN!r} or {EVAL!r}")
    xm = as_matrix(x)
    if xm.shape[1] != params.in_dim:
        raise DimensionError(f"input has {xm.shape[1]} dims, model expects {params.in_dim}")
    z1 = xm @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0) if params.activation == "relu" else z1
    emb = a1 @ params.w2 + params.b2
    if mode == TRAIN:
        if xm.shape[0] < 2:
            raise ConfigError("train-mode batch norm needs at least 2 rows")
        mean = emb.mean(axis=0)
        var = emb.var(axis=0)
    else:
        mean = params.bn_running_mean
        var = params.bn_running_var
        if not (np.isfinite(mean).all() and np.isfinite(var).all() and (var > 0).all()):
            raise StateError("batch-norm running statistics are invalid")
    istd = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (emb - mean) * istd
    bn = params.bn_gamma * xhat + params.bn_beta
    logits = bn @ params.wc + params.bc
    trace = ForwardTrace(xm, z1, a1, emb, mean, var, istd, xhat, bn, logits, mode)
    return emb, bn, logits, trace


def backward(
    trace: ForwardTrace,
    params: ModelParams,
    d_embeddings: np.ndarray | None = None,
    d_bn_embeddings: np.ndarray | None = None,
    d_logits: np.ndarray | None = None,
) -> ModelGrads:
    """Merge the three upstream gradient paths and backpropagate to all parameters.

    The three optional upstreams are gradients with respect to the raw
    embeddings, the post-norm embeddings, and the logits; missing ones are
    treated as zero.
    """
    n = trace.x.shape[0]
    if d_logits is None:
        d_logits = np.zeros_like(trace.logits)
    else:
        d_logits = np.asarray(d_logits, dtype=np.float64)
        if d_logits.shape != trace.logits.shape:
            raise DimensionError("d_logits shape does not match the traced logits")
    g_wc = trace.bn_embeddings.T @ d_logits
    g_bc = d_logits.sum(axis=0)

    d_bn = d_logits @ params.wc.T
    if d_bn_embeddings is not None:
        d_bn_embeddings = np.asarray(d_bn_embeddings, dtype=np.float64)
        if d_bn_embeddings.shape != trace.bn_embeddings.shape:
            raise DimensionError("d_bn_embeddings shape does not match the trace")
        d_bn = d_bn + d_bn_embeddings

    g_gamma = (d_bn * trace.xhat).sum(axis=0)
    g_beta = d_bn.sum(axis=0)
    dxhat = d_bn * params.bn_gamma
    if trace.mode == TRAIN:
        xmu = trace.embeddings - trace.mean
        dvar = (dxhat * xmu).sum(axis=0) * (-0.5) * trace.istd**3
        dmean = -dxhat.sum(axis=0) * trace.istd + dvar * (-2.0) * xmu.mean(axis=0)
        d_emb = dxhat * trace.istd + dvar * 2.0 * xmu / n + dmean / n
    else:
        d_emb = dxhat * trace.istd

    if d_embeddings is not None:
        d_embeddings = np.asarray(d_embeddings, dtype=np.float64)
        if d_embeddings.shape != trace.embeddings.shape:
            raise DimensionError("d_embeddings shape does not match the trace")
        d_emb = d_emb + d_embeddings

    g_w2 = trace.a1.T @ d_emb
    g_b2 = d_emb.sum(axis=0)
    d_a1 = d_emb @ params.w2.T
    if params.activation == "relu":
        d_z1 = d_a1 * (trace.z1 > 0)
    else:
        d_z1 = d_a1
    g_w1 = trace.x.T @ d_z1
    g_b1 = d_z1.sum(axis=0)
    return ModelGrads(g_w1, g_b1, g_w2, g_b2, g_gamma, g_beta, g_wc, g_bc)


def update_bn_stats(params: ModelParams, trace: ForwardTrace, momentum: float = 0.1) -> None:
    """Fold the traced batch statistics into the running statistics, in place.

    Uses the usual convention: biased variance normalizes the batch, the
    unbiased estimate feeds the running average.
    """
    if trace.mode != TRAIN:
        raise StateError("running statistics only update from train-mode traces")
    if not 0.0 < momentum <= 1.0:
        raise ConfigError("momentum must lie in (0, 1]")
    n = trace.x.shape[0]
    unbiased = trace.var * n / (n - 1) if n > 1 else trace.var
    params.bn_running_mean *= 1.0 - momentum
    params.bn_running_mean += momentum * trace.mean
    params.bn_running_var *= 1.0 - momentum
    params.bn_running_var += momentum * unbiased


def extract_test_features(params: ModelParams, x) -> np.ndarray:
    """Post-norm embeddings in eval mode; the representation used for retrieval."""
    _, bn, _, _ = forward(params, x, EVAL)
    return bn


def save_checkpoint(path, params: ModelParams, optim_state=None) -> None:
    """Write a versioned binary dump of all tensors (and optimizer state if given).

    The format is a numpy ``.npz`` archive; float64 arrays round-trip exactly.
    """
    arrays: dict[str, np.ndarray] = {
        "format_version": np.array(_CHECKPOINT_VERSION),
        "activation": np.array(params.activation),
    }
    for name in (*TRAINABLE, "bn_running_mean", "bn_running_var"):
        arrays[f"param_{name}"] = getattr(params, name)
    if optim_state is not None:
        arrays["opt_step_count"] = np.array(optim_state.step_count)
        arrays["opt_hyper"] = np.array(
            [
                optim_state.base_lr,
                optim_state.beta1,
                optim_state.beta2,
                optim_state.eps,
                optim_state.weight_decay,
            ]
        )
        for name, arr in optim_state.m.items():
            arrays[f"opt_m_{name}"] = arr
        for name, arr in optim_state.v.items():
            arrays[f"opt_v_{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Read a checkpoint back into ``(ModelParams, OptimState | None)``."""
    from .optim import OptimState

    with np.load(path) as data:
        version = int(data["format_version"])
        if version != _CHECKPOINT_VERSION:
            raise StateError(f"unsupported checkpoint version {version}")
        kwargs = {
            name: data[f"param_{name}"]
            for name in (*TRAINABLE, "bn_running_mean", "bn_running_var")
        }
        params = ModelParams(activation=str(data["activation"]), **kwargs)
        optim_state = None
        if "opt_step_count" in data:
            hyper = data["opt_hyper"]
            optim_state = OptimState(
                base_lr=float(hyper[0]),
                beta1=float(hyper[1]),
                beta2=float(hyper[2]),
                eps=float(hyper[3]),
                weight_decay=float(hyper[4]),
                step_count=int(data["opt_step_count"]),
                m={name: data[f"opt_m_{name}"] for name in TRAINABLE},
                v={name: data[f"opt_v_{name}"] for name in TRAINABLE},
            )
    return params, optim_state
