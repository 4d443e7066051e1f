"""Retrieval evaluation: ranking, CMC / mAP / mINP, and similarity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_matrix, cross_distances
from .errors import ConfigError, DegenerateError, DimensionError, NumericError

RANK_KS = (1, 5, 10, 20)


@dataclass
class RankingResult:
    """Per-query gallery orderings with relevance flags aligned to each ordering.

    Queries without a single relevant gallery row are dropped; ``dropped``
    counts them so reports can surface the warning.
    """

    order: np.ndarray
    relevant: np.ndarray
    query_ids: np.ndarray
    gallery_ids: np.ndarray
    dropped: int

    @property
    def n_queries(self) -> int:
        return self.order.shape[0]

    @property
    def n_gallery(self) -> int:
        return self.order.shape[1]


@dataclass
class EvalReport:
    """Retrieval metrics plus cross-modality similarity diagnostics."""

    rank1: float
    rank5: float
    rank10: float
    rank20: float
    mean_ap: float
    minp: float
    gap_ratio: float
    pos_sim_mean: float
    neg_sim_mean: float
    pos_hist: np.ndarray
    neg_hist: np.ndarray
    bin_edges: np.ndarray
    dropped_queries: int
    n_queries: int
    n_gallery: int


def rank(
    query_feats, gallery_feats, query_ids, gallery_ids, metric: str = "euclid"
) -> RankingResult:
    """Sort the gallery per query by ascending distance.

    Distance ties keep ascending gallery index (stable sort). Queries whose
    identity never occurs in the gallery are dropped and counted.
    """
    qf = as_matrix(query_feats)
    gf = as_matrix(gallery_feats)
    qid = np.asarray(query_ids, dtype=np.int64)
    gid = np.asarray(gallery_ids, dtype=np.int64)
    if qid.shape != (qf.shape[0],) or gid.shape != (gf.shape[0],):
        raise DimensionError("id arrays must match the feature row counts")
    dist = cross_distances(qf, gf, metric)
    order = np.argsort(dist, axis=1, kind="stable")
    relevant = gid[order] == qid[:, None]
    keep = relevant.any(axis=1)
    dropped = int((~keep).sum())
    if not keep.any():
        raise DegenerateError("no query has a relevant gallery row")
    return RankingResult(
        order=order[keep],
        relevant=relevant[keep],
        query_ids=qid[keep],
        gallery_ids=gid,
        dropped=dropped,
    )


def cmc(result: RankingResult, max_k: int) -> np.ndarray:
    """cmc[k-1] = fraction of queries whose first relevant row sits at rank <= k."""
    if max_k < 1:
        raise ConfigError("max_k must be >= 1")
    first = result.relevant.argmax(axis=1) + 1
    ks = np.arange(1, max_k + 1)
    return (first[:, None] <= ks[None, :]).mean(axis=0)


def mean_ap(result: RankingResult) -> float:
    """Mean over queries of the average precision at each relevant position."""
    total = 0.0
    for row in result.relevant:
        positions = np.flatnonzero(row) + 1
        hits = np.arange(1, positions.size + 1)
        total += float((hits / positions).mean())
    return total / result.n_queries


def minp(result: RankingResult) -> float:
    """Mean inverse negative penalty: relevant count over the rank of the last hit."""
    total = 0.0
    for row in result.relevant:
        positions = np.flatnonzero(row) + 1
        total += positions.size / float(positions[-1])
    return total / result.n_queries


def _cross_pairs(ids: np.ndarray, tags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (i, j) masks for cross-modality positive and negative pairs, i < j."""
    upper = np.triu(np.ones((ids.size, ids.size), dtype=bool), 1)
    cross = tags[:, None] != tags[None, :]
    same = ids[:, None] == ids[None, :]
    return upper & cross & same, upper & cross & ~same


def similarity_histogram(
    feats, ids, tags, bins: int = 30
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Histograms of cosine similarity over cross-modality positive/negative pairs.

    Returns ``(pos_counts, neg_counts, bin_edges)`` with fixed [-1, 1] support;
    counts sum to the respective pair counts.
    """
    x = as_matrix(feats)
    ids = np.asarray(ids, dtype=np.int64)
    tags = np.asarray(tags, dtype=np.str_)
    if bins < 2:
        raise ConfigError("bins must be >= 2")
    if ids.shape != (x.shape[0],) or tags.shape != (x.shape[0],):
        raise DimensionError("ids/tags must match the feature row count")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if (norms <= 1e-12).any():
        raise NumericError("cosine similarity undefined for (near-)zero-norm rows")
    xn = x / norms[:, None]
    sims = np.clip(xn @ xn.T, -1.0, 1.0)
    pos_mask, neg_mask = _cross_pairs(ids, tags)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    pos_hist, _ = np.histogram(sims[pos_mask], bins=edges)
    neg_hist, _ = np.histogram(sims[neg_mask], bins=edges)
    return pos_hist, neg_hist, edges


def modality_gap_ratio(feats, ids, tags) -> float:
    """Mean cross-modality over mean within-modality same-identity distance."""
    x = as_matrix(feats)
    ids = np.asarray(ids, dtype=np.int64)
    tags = np.asarray(tags, dtype=np.str_)
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    upper = np.triu(np.ones((ids.size, ids.size), dtype=bool), 1)
    same_id = ids[:, None] == ids[None, :]
    cross = tags[:, None] != tags[None, :]
    cross_pos = upper & same_id & cross
    intra_pos = upper & same_id & ~cross
    if not cross_pos.any() or not intra_pos.any():
        raise DegenerateError("need both cross- and within-modality positive pairs")
    denom = float(dist[intra_pos].mean())
    if denom <= 0:
        raise DegenerateError("within-modality positives coincide; ratio undefined")
    return float(dist[cross_pos].mean()) / denom


def evaluate(
    query_feats,
    query_ids,
    gallery_feats,
    gallery_ids,
    query_tag: str = "ir",
    gallery_tag: str = "vis",
    metric: str = "euclid",
    bins: int = 30,
) -> EvalReport:
    """Rank the gallery per query and assemble the full metric report.

    Histograms, similarity means, and the gap ratio are computed over the
    union of query and gallery rows with their modality tags.
    """
    result = rank(query_feats, gallery_feats, query_ids, gallery_ids, metric)
    max_k = min(max(RANK_KS), result.n_gallery)
    curve = cmc(result, max_k)
    ranks = {k: float(curve[min(k, max_k) - 1]) for k in RANK_KS}

    feats = np.concatenate([as_matrix(query_feats), as_matrix(gallery_feats)], axis=0)
    ids = np.concatenate(
        [np.asarray(query_ids, dtype=np.int64), np.asarray(gallery_ids, dtype=np.int64)]
    )
    tags = np.asarray(
        [query_tag] * len(np.atleast_1d(query_ids))
        + [gallery_tag] * len(np.atleast_1d(gallery_ids)),
        dtype=np.str_,
    )
    pos_hist, neg_hist, edges = similarity_histogram(feats, ids, tags, bins)
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    xn = feats / norms[:, None]
    sims = np.clip(xn @ xn.T, -1.0, 1.0)
    pos_mask, neg_mask = _cross_pairs(ids, tags)
    return EvalReport(
        rank1=ranks[1],
        rank5=ranks[5],
        rank10=ranks[10],
        rank20=ranks[20],
        mean_ap=mean_ap(result),
        minp=minp(result),
        gap_ratio=modality_gap_ratio(feats, ids, tags),
        pos_sim_mean=float(sims[pos_mask].mean()),
        neg_sim_mean=float(sims[neg_mask].mean()),
        pos_hist=pos_hist,
        neg_hist=neg_hist,
        bin_edges=edges,
        dropped_queries=result.dropped,
        n_queries=result.n_queries,
        n_gallery=result.n_gallery,
    )


def report_text(report: EvalReport) -> str:
    """Key-value serialization of the scalar metrics."""
    lines = [
        f"rank1={report.rank1:.6f}",
        f"rank5={report.rank5:.6f}",
        f"rank10={report.rank10:.6f}",
        f"rank20={report.rank20:.6f}",
        f"mean_ap={report.mean_ap:.6f}",
        f"minp={report.minp:.6f}",
        f"gap_ratio={report.gap_ratio:.6f}",
        f"pos_sim_mean={report.pos_sim_mean:.6f}",
        f"neg_sim_mean={report.neg_sim_mean:.6f}",
        f"dropped_queries={report.dropped_queries}",
        f"n_queries={report.n_queries}",
        f"n_gallery={report.n_gallery}",
    ]
    return "\n".join(lines) + "\n"


def report_table(report: EvalReport) -> str:
    """Delimiter-separated per-bin histogram table for plotting."""
    lines = ["bin_left,bin_right,pos_count,neg_count"]
    for i in range(report.pos_hist.size):
        lines.append(
            f"{report.bin_edges[i]:.6f},{report.bin_edges[i + 1]:.6f},"
            f"{int(report.pos_hist[i])},{int(report.neg_hist[i])}"
        )
    return "\n".join(lines) + "\n"
