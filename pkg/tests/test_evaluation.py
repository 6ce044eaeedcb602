"""Tests for ranking metrics and bootstrap-quality rates."""
import numpy as np
import pytest

from config import EvalDirection
from models.entities import SimilarityMatrix
from services.evaluation import bootstrap_quality, evaluate, global_hits, hits_at_k, mrr, ranks


def _brute_force_ranks(values: np.ndarray, truth) -> list:
    out = []
    for i, j in truth:
        order = sorted(range(values.shape[1]), key=lambda c: (-values[i, c], c))
        out.append(order.index(j) + 1)
    return out


class TestRankingMetrics:
    def test_identity_dominant(self):
        s = np.eye(4) + 0.1
        truth = [(i, i) for i in range(4)]
        assert hits_at_k(s, truth, 1) == 1.0
        assert mrr(s, truth) == 1.0

    def test_reversed_preferences(self):
        s = np.array([[0.1, 0.9], [0.9, 0.1]])
        truth = [(0, 0), (1, 1)]
        assert hits_at_k(s, truth, 1) == 0.0
        assert hits_at_k(s, truth, 2) == 1.0
        assert mrr(s, truth) == 0.5

    def test_ranks_one_and_two(self):
        s = np.array([[0.9, 0.1], [0.8, 0.2]])
        assert ranks(s, [(0, 0), (1, 1)]).tolist() == [1, 2]
        assert mrr(s, [(0, 0), (1, 1)]) == pytest.approx(0.75)

    def test_ties_favour_lower_column(self):
        s = np.array([[0.5, 0.5, 0.5]])
        assert ranks(s, [(0, 0)]).tolist() == [1]
        assert ranks(s, [(0, 2)]).tolist() == [3]

    def test_brute_force_oracle(self, rng):
        values = rng.random((5, 5))
        truth = list(zip(range(5), rng.permutation(5).tolist()))
        expected = _brute_force_ranks(values, truth)
        assert ranks(values, truth).tolist() == expected
        for k in (1, 2, 3, 5):
            assert hits_at_k(values, truth, k) == pytest.approx(np.mean([r <= k for r in expected]))
        assert mrr(values, truth) == pytest.approx(np.mean([1.0 / r for r in expected]))

    def test_hits_monotone_in_k_and_bounded_by_mrr(self, rng):
        values = rng.random((20, 20))
        truth = [(i, i) for i in range(20)]
        rates = [hits_at_k(values, truth, k) for k in range(1, 21)]
        assert rates == sorted(rates)
        assert rates[0] <= mrr(values, truth) <= 1.0

    def test_entity_ids_resolved(self):
        s = SimilarityMatrix(values=np.array([[0.1, 0.9]]), row_ids=[7], col_ids=[3, 4])
        assert hits_at_k(s, [(7, 4)], 1) == 1.0

    def test_empty_truth(self):
        with pytest.raises(ValueError):
            hits_at_k(np.eye(2), [], 1)
        with pytest.raises(ValueError):
            mrr(np.eye(2), [])

    def test_uncovered_truth(self):
        with pytest.raises(ValueError):
            mrr(np.eye(2), [(5, 0)])

    def test_bad_k(self):
        with pytest.raises(ValueError):
            hits_at_k(np.eye(2), [(0, 0)], 0)


class TestEvaluate:
    def test_left_to_right_report(self):
        s = np.array([[0.9, 0.1], [0.8, 0.2]])
        report = evaluate(s, [(0, 0), (1, 1)], hits_at=(1, 10))
        assert report.hits == {1: 0.5, 10: 1.0}
        assert report.mrr == pytest.approx(0.75)
        assert report.to_row()["direction"] == "left_to_right"

    def test_right_to_left_and_averaged(self):
        s = np.array([[0.9, 0.1], [0.8, 0.2]])
        truth = [(0, 0), (1, 1)]
        # columns: col 0 ranks row 0 first, col 1 ranks row 1 first
        rl = evaluate(s, truth, EvalDirection.RIGHT_TO_LEFT, hits_at=(1,))
        assert rl.hits[1] == 1.0
        both = evaluate(s, truth, EvalDirection.AVERAGED, hits_at=(1,))
        assert both.hits[1] == pytest.approx(0.75)
        assert both.mrr == pytest.approx((0.75 + 1.0) / 2)

    def test_global_hits_is_one_to_one(self):
        s = np.array([[0.9, 0.8], [0.95, 0.1]])
        report = global_hits(s, [(0, 0), (1, 1)])
        # the stable matching is {(0, 1), (1, 0)}
        assert report.hits == {1: 0.0}
        assert report.mrr is None
        assert report.one_to_one
        assert report.alignment == "global"


class TestBootstrapQuality:
    def test_utilisation(self):
        truth = {(i, i) for i in range(10)}
        q = bootstrap_quality({(0, 0), (1, 1), (2, 2)}, {(3, 4)}, truth)
        assert q.r_u == pytest.approx(0.4)
        assert q.r_p == 0.0
        assert q.r_n == 0.0

    def test_false_positive_rate(self):
        truth = {(i, i) for i in range(10)}
        q = bootstrap_quality({(0, 0), (1, 1), (2, 2), (3, 5)}, {(4, 4), (6, 7)}, truth)
        assert q.r_p == pytest.approx(0.25)
        assert q.r_n == pytest.approx(0.5)

    def test_empty_sets_report_absent_rates(self):
        q = bootstrap_quality(set(), set(), {(0, 0)})
        assert q.r_u == 0.0
        assert q.r_p is None and q.r_n is None

    def test_empty_truth(self):
        with pytest.raises(ValueError):
            bootstrap_quality({(0, 0)}, set(), set())

    def test_brute_force_counts(self, rng):
        for _ in range(50):
            truth = {(i, int(j)) for i, j in enumerate(rng.permutation(8))}
            plus = {(int(a), int(b)) for a, b in rng.integers(0, 8, size=(5, 2))}
            minus = {(int(a), int(b)) for a, b in rng.integers(0, 8, size=(4, 2))}
            q = bootstrap_quality(plus, minus, truth)
            assert q.r_u == (len(plus) + len(minus)) / 8
            assert q.r_p == sum(1 for p in plus if p not in truth) / len(plus)
            assert q.r_n == sum(1 for p in minus if p in truth) / len(minus)
