"""Top-K ranking metrics, group decomposition, and the group-gap measure.

Evaluation is full ranking: every target item is a candidate except the
user's train positives. Validation positives stay in the candidate pool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import CrossDomainDataset, SplitDataset
from .model import TGT_ITEM, CdrModel

METRICS = ("hr", "ndcg")


def hit_rate_at_k(ranked, relevant: set[int], K: int) -> int:
    """1 if any relevant item appears in the first K positions, else 0."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    for item in list(ranked)[:K]:
        if int(item) in relevant:
            return 1
    return 0


def ndcg_at_k(ranked, relevant: set[int], K: int) -> float:
    """DCG over hit positions (gain 1, discount 1/log2(p+1)), normalized by
    the ideal DCG of min(K, |relevant|) hits at the top.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    dcg = 0.0
    for p, item in enumerate(list(ranked)[:K], start=1):
        if int(item) in relevant:
            dcg += 1.0 / np.log2(p + 1)
    ideal = sum(1.0 / np.log2(p + 1) for p in range(1, min(K, len(relevant)) + 1))
    return dcg / ideal


def ugf(metric_overlap, metric_nonoverlap) -> float:
    """Absolute difference of the two groups' mean metric values."""
    if len(metric_overlap) == 0:
        raise ValueError("overlap group is empty")
    if len(metric_nonoverlap) == 0:
        raise ValueError("nonoverlap group is empty")
    return abs(float(np.mean(metric_overlap)) - float(np.mean(metric_nonoverlap)))


def rank_items(scores: np.ndarray, exclude) -> np.ndarray:
    """Candidate items (all except `exclude`) ordered by descending score,
    ties broken by ascending item index.
    """
    mask = np.ones(len(scores), dtype=bool)
    excl = np.asarray(list(exclude), dtype=np.int64)
    if len(excl):
        mask[excl] = False
    cand = np.flatnonzero(mask)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order]


@dataclass
class EvalReport:
    """Group-decomposed metric table plus user counts.

    One row per (metric, K): overall mean, per-group means, and the absolute
    group gap. Group fields are None when the dataset has no such users.
    """

    ks: tuple[int, ...]
    rows: list[dict] = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def value(self, metric: str, k: int, field_name: str = "all"):
        for row in self.rows:
            if row["metric"] == metric and row["K"] == k:
                return row[field_name]
        raise KeyError(f"no row for ({metric}, {k})")

    def to_dict(self) -> dict:
        return {"counts": self.counts, "ks": list(self.ks), "rows": self.rows}

    def json_str(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(
    model: CdrModel,
    cross: CrossDomainDataset,
    split: SplitDataset,
    ks: tuple[int, ...] = (10, 20),
    virtual_sources: dict[int, np.ndarray] | None = None,
    part: str = "test",
) -> EvalReport:
    """Full-ranking evaluation of `part` positives for every user that has
    any, grouped into overlapping vs non-overlapping target users.
    """
    if any(k < 1 for k in ks):
        raise ValueError("all K values must be >= 1")
    by_train = split.by_user("train")
    by_rel = split.by_user(part)
    users = [u for u in range(split.n_users) if by_rel[u]]
    if not users:
        raise ValueError(f"no user has {part} positives")
    n_skipped = split.n_users - len(users)
    ov_set = {int(t) for t in cross.overlap_tgt}

    q, _, _ = model.query_rows(np.asarray(users, dtype=np.int64), virtual_sources)
    scores = q @ model.store.get(TGT_ITEM).T

    kmax = max(ks)
    vals = {(m, k): np.empty(len(users)) for m in METRICS for k in ks}
    is_ov = np.zeros(len(users), dtype=bool)
    for b, u in enumerate(users):
        ranked = rank_items(scores[b], by_train[u])[:kmax]
        rel = set(by_rel[u])
        is_ov[b] = u in ov_set
        for k in ks:
            vals[("hr", k)][b] = hit_rate_at_k(ranked, rel, k)
            vals[("ndcg", k)][b] = ndcg_at_k(ranked, rel, k)

    has_both = is_ov.any() and (~is_ov).any()
    rows = []
    for m in METRICS:
        for k in ks:
            v = vals[(m, k)]
            row = {
                "metric": m,
                "K": k,
                "all": float(np.mean(v)),
                "overlap": float(np.mean(v[is_ov])) if is_ov.any() else None,
                "nonoverlap": float(np.mean(v[~is_ov])) if (~is_ov).any() else None,
                "ugf": ugf(v[is_ov], v[~is_ov]) if has_both else None,
            }
            rows.append(row)
    counts = {
        "n_users_evaluated": len(users),
        "n_overlap": int(is_ov.sum()),
        "n_nonoverlap": int((~is_ov).sum()),
        "n_skipped": n_skipped,
    }
    return EvalReport(ks=tuple(ks), rows=rows, counts=counts)
