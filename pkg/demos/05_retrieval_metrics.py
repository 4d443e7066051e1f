"""Ranking metrics worked out on a gallery you can scan by eye.

One query against five 1-D gallery points: the relevant rows land at ranks
1 and 3, which pins down the whole metric family. CMC asks "any hit by rank
k", average precision integrates precision at each hit, and the inverse
negative penalty divides the hit count by the rank of the *last* hit (how
far you must scroll to collect everything).
"""

import numpy as np

from crossmodal.evalkit import cmc, evaluate, mean_ap, minp, rank, report_text

gallery = np.arange(1.0, 6.0)[:, None]        # x = 1, 2, 3, 4, 5
gallery_ids = np.array([0, 1, 0, 1, 1])
query = np.array([[0.9]])                     # nearest gallery row is x=1

result = rank(query, gallery, np.array([0]), gallery_ids)
print("gallery order:", result.order[0].tolist())
print("relevant flags:", result.relevant[0].astype(int).tolist())
print("CMC curve:", cmc(result, 5).tolist())
print(f"mAP : (1/1 + 2/3) / 2 = {mean_ap(result):.4f}")
print(f"mINP: 2 hits / last at rank 3 = {minp(result):.4f}")

# ties break toward the lower gallery index, so rankings are deterministic
tied = rank(np.array([[0.0]]), np.array([[1.0], [-1.0], [1.0]]),
            np.array([7]), np.array([5, 7, 7]))
print("\nall three gallery rows at distance 1 ->", tied.order[0].tolist())

# the full report adds similarity diagnostics over query+gallery rows
rng = np.random.default_rng(1)
qf = rng.normal(size=(6, 4))
gf = rng.normal(size=(9, 4))
qid = np.repeat([0, 1, 2], 2)
gid = np.repeat([0, 1, 2], 3)
report = evaluate(qf, qid, gf, gid, query_tag="ir", gallery_tag="vis", bins=10)
print("\nfull report on a random 6x9 problem:")
print(report_text(report), end="")
print("positive-pair histogram counts:", report.pos_hist.tolist())
