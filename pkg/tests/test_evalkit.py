import numpy as np
import pytest

import oracles
from crossmodal.errors import ConfigError, DegenerateError, DimensionError, NumericError
from crossmodal.evalkit import (
    cmc,
    evaluate,
    mean_ap,
    minp,
    modality_gap_ratio,
    rank,
    report_table,
    report_text,
    similarity_histogram,
)

# ---------------------------------------------------------------- frozen examples


def _worked_example():
    # 1-D gallery at x = 1..5; the two hits land at ranks 1 and 3 after
    # sorting by distance from the query at x = 0.9
    gallery = np.arange(1.0, 6.0)[:, None]
    gallery_ids = np.array([0, 1, 0, 1, 1])
    query = np.array([[0.9]])
    return rank(query, gallery, np.array([0]), gallery_ids)


def test_ap_frozen_value():
    assert mean_ap(_worked_example()) == pytest.approx(0.8333, abs=5e-5)


def test_inp_frozen_value():
    assert minp(_worked_example()) == pytest.approx(0.6667, abs=5e-5)


def test_cmc_frozen_curve():
    gallery = np.arange(1.0, 6.0)[:, None]
    gallery_ids = np.array([0, 0, 1, 0, 1])
    result = rank(np.array([[0.9]]), gallery, np.array([1]), gallery_ids)
    assert np.allclose(cmc(result, 5), [0.0, 0.0, 1.0, 1.0, 1.0])


def test_perfect_ranking_scores_ones():
    feats = np.array([[0.0, 1.0], [10.0, 1.0], [20.0, 1.0]])
    ids = np.array([0, 1, 2])
    result = rank(feats, feats + 0.01, ids, ids)
    assert cmc(result, 1)[0] == 1.0
    assert mean_ap(result) == 1.0
    assert minp(result) == 1.0


def test_worst_inp_is_count_over_gallery_size():
    # single relevant row hiding at the last position
    gallery = np.arange(1.0, 5.0)[:, None]
    gallery_ids = np.array([1, 1, 1, 0])
    result = rank(np.array([[0.0]]), gallery, np.array([0]), gallery_ids)
    assert minp(result) == pytest.approx(1.0 / 4.0)


def test_distance_tie_keeps_lower_gallery_index():
    gallery = np.array([[1.0], [-1.0], [1.0]])
    result = rank(np.array([[0.0]]), gallery, np.array([7]), np.array([5, 7, 7]))
    assert result.order[0].tolist() == [0, 1, 2]
    assert result.relevant[0].tolist() == [False, True, True]


# ---------------------------------------------------------------- scan oracles


def test_metrics_match_scan_oracles(rng):
    for t in range(30):
        r = rng.child(t)
        n_q = 2 + int(r.integers(0, 5))  # up to 6 queries
        n_g = 4 + int(r.integers(0, 7))  # up to 10 gallery rows
        dim = 3
        qf = r.normal(size=(n_q, dim))
        gf = r.normal(size=(n_g, dim))
        qid = r.integers(0, 3, size=n_q)
        gid = r.integers(0, 3, size=n_g)
        if not any(q in gid.tolist() for q in qid.tolist()):
            gid[0] = qid[0]
        result = rank(qf, gf, qid, gid)

        kept_rows = [i for i in range(n_q) if qid[i] in gid.tolist()]
        assert result.n_queries == len(kept_rows)
        assert result.dropped == n_q - len(kept_rows)

        ap_sum = inp_sum = 0.0
        first_hits = []
        gids = gid.tolist()
        for out_row, i in enumerate(kept_rows):
            order = oracles.rank_gallery(qf[i].tolist(), gf.tolist())
            assert result.order[out_row].tolist() == order
            ap_sum += oracles.average_precision(order, gids, qid[i])
            inp_sum += oracles.inverse_negative_penalty(order, gids, qid[i])
            first_hits.append(oracles.first_hit_rank(order, gids, qid[i]))
        assert mean_ap(result) == pytest.approx(ap_sum / len(kept_rows), abs=1e-10)
        assert minp(result) == pytest.approx(inp_sum / len(kept_rows), abs=1e-10)
        curve = cmc(result, n_g)
        for k in range(1, n_g + 1):
            want = sum(1 for f in first_hits if f <= k) / len(first_hits)
            assert curve[k - 1] == pytest.approx(want, abs=1e-10)


def test_rank_validation_and_degenerate():
    with pytest.raises(DimensionError):
        rank(np.zeros((2, 3)), np.zeros((2, 3)), [0], [0, 1])
    with pytest.raises(DegenerateError):
        rank(np.zeros((1, 2)), np.ones((2, 2)), [0], [1, 2])
    with pytest.raises(ConfigError):
        cmc(_worked_example(), 0)


# ---------------------------------------------------------------- similarity diagnostics


def test_histogram_counts_cover_all_cross_pairs(rng):
    n_per = 4
    feats = rng.normal(size=(2 * n_per, 3))
    ids = np.tile([0, 0, 1, 1], 2)
    tags = np.array(["ir"] * n_per + ["vis"] * n_per)
    pos, neg, edges = similarity_histogram(feats, ids, tags, bins=10)
    # cross pairs: 4x4 grid, half same-identity
    assert pos.sum() == 8
    assert neg.sum() == 8
    assert edges[0] == -1.0 and edges[-1] == 1.0 and edges.size == 11


def test_histogram_validation():
    feats = np.ones((4, 2))
    ids = [0, 0, 1, 1]
    tags = ["ir", "vis", "ir", "vis"]
    with pytest.raises(ConfigError):
        similarity_histogram(feats, ids, tags, bins=1)
    with pytest.raises(DimensionError):
        similarity_histogram(feats, [0, 1], tags)
    zero = feats.copy()
    zero[2] = 0.0
    with pytest.raises(NumericError):
        similarity_histogram(zero, ids, tags)


def test_gap_ratio_hand_value():
    # same identity: within-modality dist 1, cross-modality dists {2, 3, 3, 4} -> mean 3
    feats = np.array([[0.0], [1.0], [3.0], [4.0]])
    ids = np.zeros(4, dtype=int)
    tags = np.array(["ir", "ir", "vis", "vis"])
    assert modality_gap_ratio(feats, ids, tags) == pytest.approx(3.0, abs=1e-12)


def test_gap_ratio_degenerate_cases():
    feats = np.zeros((2, 2))
    with pytest.raises(DegenerateError):
        modality_gap_ratio(feats, [0, 0], ["ir", "vis"])  # no within pairs
    coincident = np.array([[0.0, 0], [0, 0], [1, 0], [1, 0]])
    with pytest.raises(DegenerateError):
        modality_gap_ratio(coincident, [0, 0, 0, 0], ["ir", "ir", "vis", "vis"])


# ---------------------------------------------------------------- full report


def _toy_eval():
    rngs = np.random.default_rng(5)
    q = rngs.normal(size=(6, 4))
    g = rngs.normal(size=(9, 4))
    qid = np.array([0, 0, 1, 1, 2, 2])
    gid = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    return evaluate(q, qid, g, gid, bins=12)


def test_evaluate_report_fields():
    rep = _toy_eval()
    assert rep.n_queries == 6 and rep.n_gallery == 9
    assert rep.dropped_queries == 0
    assert 0.0 <= rep.rank1 <= rep.rank5 <= rep.rank10 <= rep.rank20 <= 1.0
    assert rep.rank20 == 1.0  # gallery smaller than 20: curve saturates
    assert 0.0 <= rep.minp <= rep.mean_ap <= 1.0
    assert rep.pos_hist.sum() == 6 * 3  # one positive block per query
    assert rep.bin_edges.size == 13


def test_report_text_format():
    text = report_text(_toy_eval())
    lines = text.strip().split("\n")
    assert lines[0].startswith("rank1=")
    keys = [ln.split("=")[0] for ln in lines]
    assert keys == [
        "rank1",
        "rank5",
        "rank10",
        "rank20",
        "mean_ap",
        "minp",
        "gap_ratio",
        "pos_sim_mean",
        "neg_sim_mean",
        "dropped_queries",
        "n_queries",
        "n_gallery",
    ]
    for ln in lines[:9]:
        float(ln.split("=")[1])  # every metric line parses as a float


def test_report_table_format():
    rep = _toy_eval()
    table = report_table(rep)
    lines = table.strip().split("\n")
    assert lines[0] == "bin_left,bin_right,pos_count,neg_count"
    assert len(lines) == 1 + rep.pos_hist.size
    first = lines[1].split(",")
    assert float(first[0]) == -1.0
    total_pos = sum(int(ln.split(",")[2]) for ln in lines[1:])
    assert total_pos == rep.pos_hist.sum()
