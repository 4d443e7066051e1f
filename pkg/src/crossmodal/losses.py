"""Metric-learning losses with hand-derived analytic gradients.

All losses consume a :class:`~crossmodal.batch.LabeledBatch` whose ``features``
are the current (pre-normalization) embeddings, and return the scalar value
together with its gradient d(value)/d(features). Conventions shared by every
loss in this module:

* hinge terms contribute zero value and zero gradient when their argument is
  exactly zero (the subgradient at the kink is taken as 0);
* hardest-pair selection breaks ties toward the lowest row index;
* the gradient of a euclidean distance between coincident points is taken
  as 0 in every direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batch import LabeledBatch, Stage
from .core import as_matrix, pairwise_distances
from .errors import (
    ConfigError,
    DegenerateError,
    DimensionError,
    LabelError,
    SamplingError,
    StageError,
)

MSEL_METRICS = ("euclid", "cosine")
DCL_MODES = ("hard", "all", "dyn")

#: Denominator threshold below which the center-loss ratio is considered degenerate.
DCL_EPS = 1e-12


@dataclass
class LossOutput:
    """Scalar loss value and its gradient with respect to the direct input rows."""

    value: float
    grad: np.ndarray


@dataclass
class ObjectiveOutput:
    """A stage objective: total value plus gradients per consumed tensor.

    ``grad_embeddings`` matches the batch embedding matrix, ``grad_logits`` the
    classifier logits. ``terms`` holds each component's value for logging.
    """

    value: float
    grad_embeddings: np.ndarray
    grad_logits: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)


@dataclass
class LossConfig:
    """Weights and switches for the staged objectives."""

    margin: float = 0.1
    lambda1: float = 0.5
    lambda2: float = 0.5
    msel_metric: str = "euclid"
    dcl_mode: str = "dyn"
    include_id_stage2: bool = False

    def validate(self) -> "LossConfig":
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.msel_metric not in MSEL_METRICS:
            raise ConfigError(f"msel_metric must be one of {MSEL_METRICS}")
        if self.dcl_mode not in DCL_MODES:
            raise ConfigError(f"dcl_mode must be one of {DCL_MODES}")
        return self


@dataclass
class CenterStats:
    """Per-identity center vectors and the mean distance of other-identity rows."""

    identities: np.ndarray
    centers: np.ndarray
    neg_margins: np.ndarray


def identity_loss(logits, labels) -> LossOutput:
    """Mean softmax cross-entropy over the batch; gradient is w.r.t. the logits."""
    z = as_matrix(logits)
    y = np.asarray(labels, dtype=np.int64)
    n, c = z.shape
    if y.shape != (n,):
        raise DimensionError(f"labels shape {y.shape} does not match {n} logit rows")
    if (y < 0).any() or (y >= c).any():
        raise LabelError(f"labels must lie in [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    value = float(-logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return LossOutput(value, grad)


def _batch_hard(feats: np.ndarray, labels: np.ndarray, margin: float) -> LossOutput:
    """Summed hinge over anchors, each mined against its hardest positive/negative."""
    n = feats.shape[0]
    dist = pairwise_distances(feats, "euclid")
    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos_mask = same & ~eye
    neg_mask = ~same
    if not pos_mask.any(axis=1).all():
        raise SamplingError("every anchor needs at least one other row of its identity")
    if not neg_mask.any(axis=1).all():
        raise SamplingError("batch needs at least two identities")
    pos_idx = np.where(pos_mask, dist, -np.inf).argmax(axis=1)
    neg_idx = np.where(neg_mask, dist, np.inf).argmin(axis=1)
    rows = np.arange(n)
    hinge = dist[rows, pos_idx] - dist[rows, neg_idx] + margin
    active = hinge > 0
    value = float(hinge[active].sum())
    grad = np.zeros_like(feats)
    for i in np.flatnonzero(active):
        p, q = int(pos_idx[i]), int(neg_idx[i])
        d_p = dist[i, p]
        if d_p > 0:
            u = (feats[i] - feats[p]) / d_p
            grad[i] += u
            grad[p] -= u
        d_q = dist[i, q]
        if d_q > 0:
            u = (feats[i] - feats[q]) / d_q
            grad[i] -= u
            grad[q] += u
    return LossOutput(value, grad)


def hard_triplet_global(batch: LabeledBatch, margin: float = 0.1) -> LossOutput:
    """Batch-hard triplet loss mined over all rows, ignoring modality tags."""
    return _batch_hard(batch.features, batch.labels, margin)


def hard_triplet_intra(batch: LabeledBatch, margin: float = 0.1) -> LossOutput:
    """Batch-hard triplet loss mined separately inside each of the two modalities."""
    mods = batch.modality_values()
    if len(mods) != 2:
        raise ConfigError(f"batch must mix exactly two modalities, got {mods}")
    value = 0.0
    grad = np.zeros_like(batch.features)
    for mod in mods:
        idx = np.flatnonzero(batch.modalities == mod)
        part = _batch_hard(batch.features[idx], batch.labels[idx], margin)
        value += part.value
        grad[idx] += part.grad
    return LossOutput(value, grad)


def pht(batch: LabeledBatch, stage: Stage, margin: float = 0.1) -> LossOutput:
    """Stage-dispatched hard triplet: within-modality mining in stage 1, global in stage 2."""
    mods = set(batch.modality_values())
    expected = set(stage.modality_pair)
    if mods != expected:
        raise StageError(
            f"{stage.name} expects modalities {sorted(expected)}, batch has {sorted(mods)}"
        )
    if stage is Stage.STAGE1:
        return hard_triplet_intra(batch, margin)
    return hard_triplet_global(batch, margin)


def msel(batch: LabeledBatch, metric: str = "euclid") -> LossOutput:
    """Mean squared gap between within-modality and cross-modality positive distances.

    For each anchor, the mean distance to its same-identity same-modality rows
    (K-1 of them) is compared with the mean distance to its same-identity
    other-modality rows (K of them); the loss is the mean squared difference
    over all 2PK anchors. Driving it to zero makes positive pairs look the
    same whether or not they cross the modality boundary.
    """
    if metric not in MSEL_METRICS:
        raise ConfigError(f"msel metric must be one of {MSEL_METRICS}")
    batch.validate()
    k = batch.cell_count()
    if k < 2:
        raise ConfigError("msel needs k >= 2 rows per (identity, modality) cell")
    feats = batch.features
    n = feats.shape[0]
    dist = pairwise_distances(feats, metric)
    same_id = batch.labels[:, None] == batch.labels[None, :]
    same_mod = batch.modalities[:, None] == batch.modalities[None, :]
    eye = np.eye(n, dtype=bool)
    intra = same_id & same_mod & ~eye
    cross = same_id & ~same_mod
    d_intra = (dist * intra).sum(axis=1) / (k - 1)
    d_cross = (dist * cross).sum(axis=1) / k
    diff = d_intra - d_cross
    value = float((diff**2).mean())

    # d(value)/d(dist[a, i]) for each anchor a and partner i, then chain through
    # the metric. Each unordered pair appears twice in the anchor sum, once per
    # role, so the per-pair weight is symmetrized before the chain rule.
    w = (2.0 * diff / n)[:, None] * (intra / (k - 1.0) - cross / float(k))
    s = w + w.T
    if metric == "euclid":
        g = np.divide(s, dist, out=np.zeros_like(s), where=dist > 0)
        grad = g.sum(axis=1)[:, None] * feats - g @ feats
    else:
        norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
        sim = 1.0 - dist
        coef = (s * sim).sum(axis=1) / norms**2
        grad = coef[:, None] * feats - (s / (norms[:, None] * norms[None, :])) @ feats
    return LossOutput(value, grad)


def compute_centers(batch: LabeledBatch) -> CenterStats:
    """Identity centers (mean of all 2K rows) and mean other-identity distances."""
    batch.validate()
    ids = batch.identity_values()
    if len(ids) < 2:
        raise ConfigError("center statistics need at least two identities")
    feats = batch.features
    centers = np.empty((len(ids), feats.shape[1]))
    neg_margins = np.empty(len(ids))
    for i, ident in enumerate(ids):
        own = batch.labels == ident
        centers[i] = feats[own].mean(axis=0)
        rest = feats[~own] - centers[i]
        neg_margins[i] = float(np.sqrt((rest**2).sum(axis=1)).mean())
    return CenterStats(ids, centers, neg_margins)


def dcl(batch: LabeledBatch, mode: str = "dyn") -> LossOutput:
    """Ratio of within-identity compactness to selected negative-to-center spread.

    The numerator sums, per identity, the mean distance of its rows to its
    center. The denominator sums the mean distance of selected other-identity
    rows to that center: all of them (``all``), only the single closest
    (``hard``), or those strictly closer than the identity's mean negative
    distance (``dyn``, falling back to the closest negative when that set is
    empty). Centers are treated as functions of the embeddings, so the
    gradient includes the chain-rule path through every center.
    """
    if mode not in DCL_MODES:
        raise ConfigError(f"dcl mode must be one of {DCL_MODES}")
    stats = compute_centers(batch)
    feats = batch.features
    num = 0.0
    den = 0.0
    dnum = np.zeros_like(feats)
    dden = np.zeros_like(feats)
    for i, ident in enumerate(stats.identities):
        own = np.flatnonzero(batch.labels == ident)
        neg = np.flatnonzero(batch.labels != ident)
        m = own.size
        center = stats.centers[i]

        own_diff = feats[own] - center
        own_dist = np.sqrt((own_diff**2).sum(axis=1))
        safe_own = np.where(own_dist > 0, own_dist, 1.0)
        u = np.where(own_dist[:, None] > 0, own_diff / safe_own[:, None], 0.0)
        num += float(own_dist.mean())
        dnum[own] += u / m
        dnum[own] -= u.sum(axis=0) / m**2

        neg_diff = feats[neg] - center
        neg_dist = np.sqrt((neg_diff**2).sum(axis=1))
        safe_neg = np.where(neg_dist > 0, neg_dist, 1.0)
        v = np.where(neg_dist[:, None] > 0, neg_diff / safe_neg[:, None], 0.0)
        if mode == "all":
            sel = np.arange(neg.size)
        elif mode == "hard":
            sel = np.array([int(neg_dist.argmin())])
        else:
            sel = np.flatnonzero(neg_dist < stats.neg_margins[i])
            if sel.size == 0:
                sel = np.array([int(neg_dist.argmin())])
        den += float(neg_dist[sel].mean())
        dden[neg[sel]] += v[sel] / sel.size
        dden[own] -= v[sel].sum(axis=0) / (m * sel.size)
    if den < DCL_EPS:
        raise DegenerateError("all selected negatives coincide with their centers")
    value = num / den
    grad = dnum / den - (num / den**2) * dden
    return LossOutput(value, grad)


def _check_stage(batch: LabeledBatch, stage: Stage) -> None:
    mods = set(batch.modality_values())
    expected = set(stage.modality_pair)
    if mods != expected:
        raise StageError(
            f"{stage.name} objective expects modalities {sorted(expected)}, "
            f"batch has {sorted(mods)}"
        )


def stage1_objective(
    batch: LabeledBatch, logits, labels, cfg: LossConfig
) -> ObjectiveOutput:
    """Stage-1 total: within-modality hard triplet plus identity cross-entropy."""
    cfg.validate()
    _check_stage(batch, Stage.STAGE1)
    tri = hard_triplet_intra(batch, cfg.margin)
    ce = identity_loss(logits, labels)
    return ObjectiveOutput(
        value=tri.value + ce.value,
        grad_embeddings=tri.grad,
        grad_logits=ce.grad,
        terms={"intra": tri.value, "id": ce.value},
    )


def stage2_objective(
    batch: LabeledBatch, logits, labels, cfg: LossConfig
) -> ObjectiveOutput:
    """Stage-2 total: global hard triplet, plus weighted enhancement/center terms.

    The identity term is off by default here and can be re-enabled through
    ``cfg.include_id_stage2``; with both lambdas at zero the result equals
    the global hard-triplet loss exactly.
    """
    cfg.validate()
    _check_stage(batch, Stage.STAGE2)
    tri = hard_triplet_global(batch, cfg.margin)
    value = tri.value
    grad = tri.grad.copy()
    terms = {"global": tri.value}
    if cfg.lambda1 > 0:
        part = msel(batch, cfg.msel_metric)
        value += cfg.lambda1 * part.value
        grad += cfg.lambda1 * part.grad
        terms["msel"] = part.value
    if cfg.lambda2 > 0:
        part = dcl(batch, cfg.dcl_mode)
        value += cfg.lambda2 * part.value
        grad += cfg.lambda2 * part.grad
        terms["dcl"] = part.value
    logits_arr = as_matrix(logits)
    if cfg.include_id_stage2:
        ce = identity_loss(logits_arr, labels)
        value += ce.value
        grad_logits = ce.grad
        terms["id"] = ce.value
    else:
        grad_logits = np.zeros_like(logits_arr)
    return ObjectiveOutput(
        value=value, grad_embeddings=grad, grad_logits=grad_logits, terms=terms
    )
