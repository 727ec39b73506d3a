"""Ranking metric and group-gap tests.

A single relevant item at rank 2 scores NDCG = (1/log2(3)) / (1/log2(2))
= 0.6309297535714575; that constant anchors several checks below.
"""

import json

import numpy as np
import pytest

from vuglab.data import DomainDataset, InteractionRecord, build_cross, split_per_user
from vuglab.metrics import (
    EvalReport,
    evaluate,
    hit_rate_at_k,
    ndcg_at_k,
    rank_items,
    ugf,
)
from vuglab.model import CDR_VUG, SRC_USER, TGT_ITEM, TGT_USER, CdrModel

NDCG_RANK2 = 0.6309297535714575


class TestHitRate:
    def test_hit_inside_and_outside_k(self):
        assert hit_rate_at_k([5, 3, 7], {3}, 10) == 1
        assert hit_rate_at_k([5, 3, 7], {7}, 2) == 0
        assert hit_rate_at_k([5, 3, 7], {9}, 3) == 0

    def test_k_validation(self):
        with pytest.raises(ValueError):
            hit_rate_at_k([1], {1}, 0)


class TestNdcg:
    def test_rank_positions(self):
        assert ndcg_at_k([3, 5, 7], {3}, 10) == 1.0
        np.testing.assert_allclose(ndcg_at_k([5, 3, 7], {3}, 10), NDCG_RANK2, atol=1e-15)
        assert ndcg_at_k([5, 3, 7], {9}, 10) == 0.0

    def test_ideal_norm_with_fewer_relevant_than_k(self):
        # both relevant items at the top: ideal ranking, so exactly 1
        assert ndcg_at_k([4, 9, 1, 2], {4, 9}, 10) == 1.0

    def test_ideal_norm_truncates_at_k(self):
        # K=1 with 3 relevant: ideal DCG uses min(K, |rel|) = 1 hit
        assert ndcg_at_k([4, 0, 1], {4, 1, 7}, 1) == 1.0

    def test_invariant_beyond_rank_k(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            ranked = list(rng.permutation(40))
            rel = {int(x) for x in rng.choice(40, size=5, replace=False)}
            k = int(rng.integers(1, 10))
            tail = ranked[k:]
            rng.shuffle(tail)
            assert ndcg_at_k(ranked[:k] + tail, rel, k) == ndcg_at_k(ranked, rel, k)

    def test_validation(self):
        with pytest.raises(ValueError):
            ndcg_at_k([1], {1}, 0)
        with pytest.raises(ValueError, match="non-empty"):
            ndcg_at_k([1], set(), 3)

    def test_range_sweep(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            ranked = list(rng.permutation(30))
            rel = {int(x) for x in rng.choice(30, size=int(rng.integers(1, 6)), replace=False)}
            v = ndcg_at_k(ranked, rel, int(rng.integers(1, 15)))
            assert 0.0 <= v <= 1.0


class TestUgf:
    def test_absolute_gap_and_symmetry(self):
        a = [1.0, 0.0, 1.0]
        b = [0.0, 0.0]
        assert ugf(a, b) == pytest.approx(2.0 / 3.0)
        assert ugf(a, b) == ugf(b, a)
        assert ugf(a, a) == 0.0

    def test_permutation_within_group(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=9)
        b = rng.uniform(size=7)
        assert ugf(a, b) == ugf(list(reversed(a)), list(rng.permutation(b)))

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError, match="overlap group"):
            ugf([], [1.0])
        with pytest.raises(ValueError, match="nonoverlap group"):
            ugf([1.0], [])


class TestRankItems:
    def test_descending_with_index_tie_break(self):
        scores = np.array([0.5, 2.0, 0.5, -1.0, 2.0])
        assert rank_items(scores, exclude=set()).tolist() == [1, 4, 0, 2, 3]

    def test_exclusion(self):
        scores = np.array([3.0, 2.0, 1.0])
        assert rank_items(scores, exclude={0, 2}).tolist() == [1]

    def test_matches_python_sort(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            scores = rng.standard_normal(25).round(1)  # rounding forces ties
            excl = {int(x) for x in rng.choice(25, size=4, replace=False)}
            expected = sorted(
                (i for i in range(25) if i not in excl), key=lambda i: (-scores[i], i)
            )
            assert rank_items(scores, excl).tolist() == expected


def make_eval_setup(n_tgt=10, n_overlap=4, n_items=8, d=3, lam=0.5, seed=0):
    """Target users with 4 positives each, split in half into train/test."""
    recs_t = [
        InteractionRecord(f"p{u}" if u < n_overlap else f"t{u}", f"ti{(u + j) % n_items}", 5.0)
        for u in range(n_tgt)
        for j in range(4)
    ]
    recs_s = [
        InteractionRecord(f"p{u}" if u < n_overlap else f"s{u}", f"si{u % 3}", 5.0)
        for u in range(n_tgt - 2)
    ]
    cross = build_cross(
        DomainDataset.from_records(recs_s), DomainDataset.from_records(recs_t)
    )
    split = split_per_user(cross.target, (0.5, 0.0, 0.5), seed=seed)
    model = CdrModel.create(cross, d=d, lam=lam, mode=CDR_VUG, seed=seed + 1)
    return cross, split, model


class TestEvaluate:
    def test_matches_brute_force(self):
        cross, split, model = make_eval_setup()
        rng = np.random.default_rng(3)
        vmap = {int(u): rng.standard_normal(3) for u in cross.target_nonoverlap}
        ks = (1, 3, 5)
        report = evaluate(model, cross, split, ks=ks, virtual_sources=vmap)

        tu = model.store.get(TGT_USER)
        su = model.store.get(SRC_USER)
        ti = model.store.get(TGT_ITEM)
        src_of = cross.src_of_tgt()
        by_train = split.by_user("train")
        by_test = split.by_user("test")
        vals = {(m, k): [] for m in ("hr", "ndcg") for k in ks}
        for u in range(split.n_users):
            if not by_test[u]:
                continue
            ehat = su[src_of[u]] if src_of[u] >= 0 else vmap[u]
            scores = ti @ (tu[u] + model.lam * ehat)
            ranked = sorted(
                (i for i in range(split.n_items) if i not in set(by_train[u])),
                key=lambda i: (-scores[i], i),
            )
            rel = set(by_test[u])
            for k in ks:
                vals[("hr", k)].append(1.0 if any(i in rel for i in ranked[:k]) else 0.0)
                dcg = sum(
                    1.0 / np.log2(p + 2) for p, i in enumerate(ranked[:k]) if i in rel
                )
                ideal = sum(1.0 / np.log2(p + 2) for p in range(min(k, len(rel))))
                vals[("ndcg", k)].append(dcg / ideal)
        for m in ("hr", "ndcg"):
            for k in ks:
                assert abs(report.value(m, k) - np.mean(vals[(m, k)])) <= 1e-12

    def test_group_gap_recomputable(self):
        cross, split, model = make_eval_setup()
        report = evaluate(model, cross, split, ks=(3,))
        for row in report.rows:
            assert abs(row["ugf"] - abs(row["overlap"] - row["nonoverlap"])) <= 1e-12
        assert report.counts["n_overlap"] + report.counts["n_nonoverlap"] == report.counts[
            "n_users_evaluated"
        ]

    def test_planted_train_positive_cannot_move_metrics(self):
        """Train positives are excluded from ranking, so making one score
        arbitrarily high must leave every metric untouched."""
        recs = [InteractionRecord("u0", f"ti{j}", 5.0) for j in range(6)]
        tgt = DomainDataset.from_records(recs)
        src = DomainDataset.from_records([InteractionRecord("s0", "si0", 5.0)])
        cross = build_cross(src, tgt)
        split = split_per_user(tgt, (0.5, 0.0, 0.5), seed=1)
        model = CdrModel.create(cross, d=2, lam=0.0, seed=2)
        before = evaluate(model, cross, split, ks=(2, 4)).to_dict()
        planted = split.by_user("train")[0][0]
        model.store.get(TGT_ITEM)[planted] = [1e9, 1e9]
        after = evaluate(model, cross, split, ks=(2, 4)).to_dict()
        assert before == after

    def test_validation_positives_stay_in_candidates(self):
        recs = [InteractionRecord("u0", f"ti{j}", 5.0) for j in range(4)]
        tgt = DomainDataset.from_records(recs)
        src = DomainDataset.from_records([InteractionRecord("s0", "si0", 5.0)])
        cross = build_cross(src, tgt)
        # 4 items at (0.5, 0.25, 0.25): 2 train, 1 valid, 1 test
        split = split_per_user(tgt, (0.5, 0.25, 0.25), seed=0)
        model = CdrModel.create(cross, d=2, lam=0.0, seed=0)
        ti = model.store.get(TGT_ITEM)
        model.store.get(TGT_USER)[0] = [1.0, 0.0]
        ti[:] = -1.0
        valid_item = split.valid[0][1]
        test_item = split.test[0][1]
        ti[valid_item] = [10.0, 0.0]
        ti[test_item] = [5.0, 0.0]
        report = evaluate(model, cross, split, ks=(1, 3))
        # the valid positive outranks the test positive: rank-1 miss, rank-2 hit
        assert report.value("hr", 1) == 0.0
        np.testing.assert_allclose(report.value("ndcg", 3), NDCG_RANK2, atol=1e-15)

    def test_users_without_part_positives_are_skipped_and_counted(self):
        recs = [InteractionRecord("u0", f"ti{j}", 5.0) for j in range(4)]
        recs += [InteractionRecord("u1", "ti0", 5.0)]  # too small to get a test item
        tgt = DomainDataset.from_records(recs)
        src = DomainDataset.from_records([InteractionRecord("s0", "si0", 5.0)])
        cross = build_cross(src, tgt)
        split = split_per_user(tgt, (0.5, 0.0, 0.5), seed=0)
        report = evaluate(CdrModel.create(cross, d=2, seed=0), cross, split, ks=(2,))
        assert report.counts["n_users_evaluated"] == 1
        assert report.counts["n_skipped"] == 1

    def test_single_group_reports_none_fields(self):
        cross, split, model = make_eval_setup(n_tgt=6, n_overlap=0)
        report = evaluate(model, cross, split, ks=(3,))
        for row in report.rows:
            assert row["overlap"] is None and row["ugf"] is None
            assert row["nonoverlap"] == row["all"]

    def test_errors(self):
        cross, split, model = make_eval_setup()
        with pytest.raises(ValueError, match=">= 1"):
            evaluate(model, cross, split, ks=(0,))
        empty = split_per_user(cross.target, (1.0, 0.0, 0.0), seed=0)
        with pytest.raises(ValueError, match="no user has test"):
            evaluate(model, cross, empty, ks=(3,))

    def test_valid_part_evaluation(self):
        cross, split, model = make_eval_setup()
        split = split_per_user(cross.target, (0.5, 0.25, 0.25), seed=2)
        report = evaluate(model, cross, split, ks=(3,), part="valid")
        assert report.counts["n_users_evaluated"] > 0


class TestEvalReport:
    def test_value_lookup_and_missing_row(self):
        report = EvalReport(ks=(3,), rows=[{"metric": "hr", "K": 3, "all": 0.5}])
        assert report.value("hr", 3) == 0.5
        with pytest.raises(KeyError):
            report.value("ndcg", 7)

    def test_json_round_trip_sorted_and_newline_terminated(self):
        cross, split, model = make_eval_setup(n_tgt=6)
        report = evaluate(model, cross, split, ks=(2,))
        s = report.json_str()
        assert s.endswith("\n")
        parsed = json.loads(s)
        assert parsed == json.loads(json.dumps(report.to_dict(), sort_keys=True))
