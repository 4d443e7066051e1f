"""Central finite-difference verification of every analytic gradient.

Each component check draws random "general position" instances: batches are
resampled until every hinge argument, hardest-pair margin, selection
threshold, and rectifier pre-activation sits at least ``TIE_TOL`` away from
its non-smooth point, so a 1e-6 perturbation cannot flip any discrete choice.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import losses, model
from .batch import LabeledBatch, Stage
from .core import RngStream, pairwise_distances
from .errors import ConfigError

FD_STEP = 1e-6
TIE_TOL = 1e-4
DEFAULT_TOL = 1e-5
#: Relative-error floor: coordinates where both gradients are below this are
#: compared absolutely (|a - n| <= tol * REL_FLOOR, i.e. 1e-7 at the default
#: tol). Central differences of a value f carry ~ulp(f)/(2h) >= 1e-9 of
#: cancellation noise even for exactly-zero gradients (embedding-space
#: translations, dead rectifier units), so the floor must sit well above
#: noise/tol = 1e-4 for the ratio to measure the analytic formula and not
#: the arithmetic.
REL_FLOOR = 1e-2

COMPONENTS = (
    "l_id",
    "l_intra",
    "l_global",
    "msel_euclid",
    "msel_cosine",
    "dcl_hard",
    "dcl_all",
    "dcl_dyn",
    "l1",
    "l2",
    "model_stage1",
    "model_stage2",
)


@dataclass
class ComponentResult:
    name: str
    max_rel_error: float
    instances: int
    passed: bool


def finite_difference(fn, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function over every entry of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn(x)
        flat[i] = orig - h
        lo = fn(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """Worst per-coordinate |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def _random_batch(rng: RngStream, p: int, k: int, dim: int, pair: tuple[str, str]) -> LabeledBatch:
    feats = rng.normal(size=(2 * p * k, dim))
    labels = np.repeat(np.arange(p), 2 * k)
    mods = np.tile(np.repeat(list(pair), k), p)
    return LabeledBatch(feats, labels, mods)


def _triplet_regular(feats, labels, margin, tol=TIE_TOL) -> bool:
    dist = pairwise_distances(feats, "euclid")
    n = feats.shape[0]
    for i in range(n):
        pos = np.sort(dist[i, (labels == labels[i]) & (np.arange(n) != i)])
        neg = np.sort(dist[i, labels != labels[i]])
        if pos.size == 0 or neg.size == 0:
            return False
        if pos.min() < tol or neg.min() < tol:
            return False
        if pos.size >= 2 and pos[-1] - pos[-2] < tol:
            return False
        if neg.size >= 2 and neg[1] - neg[0] < tol:
            return False
        if abs(pos[-1] - neg[0] + margin) < tol:
            return False
    return True


def _intra_regular(batch: LabeledBatch, margin: float) -> bool:
    for mod in batch.modality_values():
        idx = batch.modalities == mod
        if not _triplet_regular(batch.features[idx], batch.labels[idx], margin):
            return False
    return True


def _msel_regular(batch: LabeledBatch, metric: str) -> bool:
    if metric == "euclid":
        dist = pairwise_distances(batch.features, "euclid")
        off = dist[~np.eye(len(batch), dtype=bool)]
        return bool(off.min() > TIE_TOL)
    norms = np.sqrt((batch.features**2).sum(axis=1))
    return bool(norms.min() > 1e-2)


def _dcl_regular(batch: LabeledBatch, mode: str) -> bool:
    stats = losses.compute_centers(batch)
    for i, ident in enumerate(stats.identities):
        own = batch.features[batch.labels == ident] - stats.centers[i]
        neg = batch.features[batch.labels != ident] - stats.centers[i]
        own_dist = np.sqrt((own**2).sum(axis=1))
        neg_dist = np.sort(np.sqrt((neg**2).sum(axis=1)))
        if own_dist.min() < TIE_TOL or neg_dist.min() < TIE_TOL:
            return False
        if mode == "dyn" and np.abs(neg_dist - stats.neg_margins[i]).min() < TIE_TOL:
            return False
        if mode == "hard" and neg_dist.size >= 2 and neg_dist[1] - neg_dist[0] < TIE_TOL:
            return False
    return True


def _draw_until(rng: RngStream, make, regular, attempts: int = 200):
    for trial in range(attempts):
        candidate = make(rng.child(trial))
        if regular(candidate):
            return candidate
    raise ConfigError("could not find a general-position instance")


def _check_batch_loss(rng, make_batch, regular, loss_fn, instances):
    worst = 0.0
    for t in range(instances):
        batch = _draw_until(rng.child(t), make_batch, regular)
        analytic = loss_fn(batch).grad
        fd = finite_difference(
            lambda f: loss_fn(replace(batch, features=f.copy())).value, batch.features
        )
        worst = max(worst, max_rel_error(analytic, fd))
    return worst


def _check_identity(rng: RngStream, instances: int) -> float:
    worst = 0.0
    for t in range(instances):
        r = rng.child(t)
        n, c = 8, 5
        logits = r.normal(size=(n, c))
        labels = r.integers(0, c, size=n)
        analytic = losses.identity_loss(logits, labels).grad
        fd = finite_difference(lambda z: losses.identity_loss(z, labels).value, logits)
        worst = max(worst, max_rel_error(analytic, fd))
    return worst


def _check_objective(rng: RngStream, stage: Stage, cfg: losses.LossConfig, instances: int) -> float:
    pair = stage.modality_pair
    objective = losses.stage1_objective if stage is Stage.STAGE1 else losses.stage2_objective

    def regular(batch):
        if stage is Stage.STAGE1:
            return _intra_regular(batch, cfg.margin)
        return (
            _triplet_regular(batch.features, batch.labels, cfg.margin)
            and _msel_regular(batch, cfg.msel_metric)
            and _dcl_regular(batch, cfg.dcl_mode)
        )

    worst = 0.0
    for t in range(instances):
        r = rng.child(t)
        batch = _draw_until(r, lambda s: _random_batch(s, 3, 3, 4, pair), regular)
        n_classes = 3
        logits = r.normal(size=(len(batch), n_classes))
        labels = batch.labels
        out = objective(batch, logits, labels, cfg)
        fd_emb = finite_difference(
            lambda f: objective(replace(batch, features=f.copy()), logits, labels, cfg).value,
            batch.features,
        )
        fd_logits = finite_difference(
            lambda z: objective(batch, z, labels, cfg).value, logits
        )
        worst = max(worst, max_rel_error(out.grad_embeddings, fd_emb))
        worst = max(worst, max_rel_error(out.grad_logits, fd_logits))
    return worst


def _flatten_trainable(params: model.ModelParams) -> np.ndarray:
    return np.concatenate([getattr(params, name).reshape(-1) for name in model.TRAINABLE])


def _write_trainable(params: model.ModelParams, vec: np.ndarray) -> None:
    offset = 0
    for name in model.TRAINABLE:
        arr = getattr(params, name)
        arr[...] = vec[offset : offset + arr.size].reshape(arr.shape)
        offset += arr.size


def _check_model(rng: RngStream, stage: Stage, cfg: losses.LossConfig, instances: int) -> float:
    pair = stage.modality_pair
    objective = losses.stage1_objective if stage is Stage.STAGE1 else losses.stage2_objective
    worst = 0.0
    for t in range(instances):
        r = rng.child(t)
        p, k, in_dim, hidden, embed = 3, 2, 5, 6, 4
        raw = _random_batch(r.child(0), p, k, in_dim, pair)

        def run(par, check_regular=False):
            emb, _, logits, trace = model.forward(par, raw.features, model.TRAIN)
            emb_batch = replace(raw, features=emb)
            if check_regular:
                if par.activation == "relu" and np.abs(trace.z1).min() < TIE_TOL:
                    return None
                if stage is Stage.STAGE1:
                    ok = _intra_regular(emb_batch, cfg.margin)
                else:
                    ok = (
                        _triplet_regular(emb, emb_batch.labels, cfg.margin)
                        and _msel_regular(emb_batch, cfg.msel_metric)
                        and _dcl_regular(emb_batch, cfg.dcl_mode)
                    )
                if not ok:
                    return None
            out = objective(emb_batch, logits, raw.labels, cfg)
            return out, trace

        params = None
        for attempt in range(200):
            candidate = model.init_params(in_dim, hidden, embed, p, r.child(1, attempt))
            if run(candidate, check_regular=True) is not None:
                params = candidate
                break
        if params is None:
            raise ConfigError("could not find a general-position model instance")

        out, trace = run(params)
        grads = model.backward(
            trace, params, d_embeddings=out.grad_embeddings, d_logits=out.grad_logits
        )
        analytic = np.concatenate(
            [getattr(grads, name).reshape(-1) for name in model.TRAINABLE]
        )

        probe = params.copy()

        def value_at(vec: np.ndarray) -> float:
            _write_trainable(probe, vec)
            return run(probe)[0].value

        fd = finite_difference(value_at, _flatten_trainable(params))
        worst = max(worst, max_rel_error(analytic, fd))
    return worst


def check_component(name: str, instances: int = 20, seed: int = 0) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    if name not in COMPONENTS:
        raise ConfigError(f"unknown component {name!r}, expected one of {COMPONENTS}")
    rng = RngStream(seed).child(COMPONENTS.index(name))
    base = losses.LossConfig()
    if name == "l_id":
        return _check_identity(rng, instances)
    if name == "l_intra":
        pair = Stage.STAGE1.modality_pair
        return _check_batch_loss(
            rng,
            lambda r: _random_batch(r, 3, 3, 4, pair),
            lambda b: _intra_regular(b, base.margin),
            lambda b: losses.hard_triplet_intra(b, base.margin),
            instances,
        )
    if name == "l_global":
        pair = Stage.STAGE2.modality_pair
        return _check_batch_loss(
            rng,
            lambda r: _random_batch(r, 3, 3, 4, pair),
            lambda b: _triplet_regular(b.features, b.labels, base.margin),
            lambda b: losses.hard_triplet_global(b, base.margin),
            instances,
        )
    if name.startswith("msel_"):
        metric = name.split("_", 1)[1]
        pair = Stage.STAGE2.modality_pair
        return _check_batch_loss(
            rng,
            lambda r: _random_batch(r, 3, 3, 4, pair),
            lambda b: _msel_regular(b, metric),
            lambda b: losses.msel(b, metric),
            instances,
        )
    if name.startswith("dcl_"):
        mode = name.split("_", 1)[1]
        pair = Stage.STAGE2.modality_pair
        return _check_batch_loss(
            rng,
            lambda r: _random_batch(r, 3, 3, 4, pair),
            lambda b: _dcl_regular(b, mode),
            lambda b: losses.dcl(b, mode),
            instances,
        )
    if name == "l1":
        return _check_objective(rng, Stage.STAGE1, base, instances)
    if name == "l2":
        return _check_objective(rng, Stage.STAGE2, base, instances)
    if name == "model_stage1":
        return _check_model(rng, Stage.STAGE1, base, instances)
    return _check_model(rng, Stage.STAGE2, base, instances)


def run_suite(
    instances: int = 20, seed: int = 0, tol: float = DEFAULT_TOL, components=None
) -> list[ComponentResult]:
    """Check every (or the given) component; results carry pass/fail at ``tol``."""
    results = []
    for name in components or COMPONENTS:
        err = check_component(name, instances=instances, seed=seed)
        results.append(ComponentResult(name, err, instances, err <= tol))
    return results
