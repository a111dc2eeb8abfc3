import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidarplace.errors import DegenerateError, EmptyError, ParameterError, ShapeError
from lidarplace.evaluation import (DescriptorSet, EvalProtocol, SmoothApConfig, TestArea,
                                   average_precision, candidate_count, kmeans, recall_at,
                                   smooth_ap, split_by_areas)

from . import oracles


def random_set(rng, n, dim=8, extent=100.0, prefix="e", role="database"):
    return DescriptorSet([f"{prefix}{i}" for i in range(n)], rng.normal(size=(n, dim)),
                         rng.uniform(0, extent, (n, 2)), role=role)


class TestSplit:
    def test_edge_is_inside(self):
        ds = DescriptorSet(["a", "b"], np.zeros((2, 1)), [[5.0, 0.0], [5.001, 0.0]])
        inside, outside = split_by_areas(ds, [TestArea(0, 0, 10)])
        assert inside.source_ids == ("a",) and outside.source_ids == ("b",)

    def test_no_areas(self, rng):
        inside, outside = split_by_areas(random_set(rng, 10), [])
        assert len(inside) == 0 and len(outside) == 10

    def test_matches_rectangle_loop(self, rng):
        ds = random_set(rng, 500, 2, extent=200)
        areas = [TestArea(50, 50, 40), TestArea(150, 80, 30), TestArea(60, 170, 50)]
        expect = []
        for x, y in ds.positions.tolist():
            expect.append(any(a.cx - a.side / 2 <= x <= a.cx + a.side / 2
                              and a.cy - a.side / 2 <= y <= a.cy + a.side / 2 for a in areas))
        inside, outside = split_by_areas(ds, areas)
        want_in = {sid for sid, e in zip(ds.source_ids, expect) if e}
        assert set(inside.source_ids) == want_in
        assert set(outside.source_ids) == set(ds.source_ids) - want_in

    def test_bad_area(self):
        with pytest.raises(ParameterError):
            TestArea(0, 0, 0)


class TestRecall:
    def test_identical_sets(self, rng):
        ds = random_set(rng, 30)
        r = recall_at(ds, ds, EvalProtocol(5.0), 1)
        assert r.value == 1.0 and r.evaluated == 30

    def test_no_positive_is_undefined(self, rng):
        q = DescriptorSet(["q"], [[0.0, 1.0]], [[0.0, 0.0]])
        db = DescriptorSet(["d"], [[0.0, 1.0]], [[100.0, 0.0]])
        r = recall_at(q, db, EvalProtocol(25.0))
        assert r.evaluated == 0 and r.value is None

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_matches_double_loop(self, rng, n):
        for _ in range(10):
            q = random_set(rng, 50, prefix="q")
            db = random_set(rng, 50, prefix="d")
            r = recall_at(q, db, EvalProtocol(15.0), n)
            evaluated, successes = oracles.recall_double_loop(
                q.descriptors.tolist(), q.positions.tolist(), db.descriptors.tolist(),
                db.positions.tolist(), 15.0, n)
            assert (r.evaluated, r.successes) == (evaluated, successes)

    def test_tie_breaks_by_database_order(self):
        q = DescriptorSet(["q"], [[0.0]], [[0.0, 0.0]])
        db = DescriptorSet(["far", "near"], [[1.0], [1.0]], [[0.0, 0.0], [500.0, 0.0]])
        assert recall_at(q, db, EvalProtocol(25.0)).successes == 1
        db2 = DescriptorSet(["near", "far"], [[1.0], [1.0]], [[500.0, 0.0], [0.0, 0.0]])
        assert recall_at(q, db2, EvalProtocol(25.0)).successes == 0

    def test_percent_at_least_top1(self, rng):
        for _ in range(20):
            q, db = random_set(rng, 40, prefix="q"), random_set(rng, 250, prefix="d")
            p = EvalProtocol(12.0)
            assert recall_at(q, db, p, "1%").value >= recall_at(q, db, p, 1).value

    def test_monotone_in_n(self, rng):
        q, db = random_set(rng, 60, prefix="q"), random_set(rng, 80, prefix="d")
        vals = [recall_at(q, db, EvalProtocol(10.0), n).value for n in range(1, 20)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_database_permutation(self, rng):
        q, db = random_set(rng, 40, prefix="q"), random_set(rng, 70, prefix="d")
        perm = rng.permutation(70)
        shuffled = DescriptorSet([db.source_ids[i] for i in perm], db.descriptors[perm], db.positions[perm])
        for n in (1, 3):
            assert recall_at(q, db, EvalProtocol(10.0), n) == recall_at(q, shuffled, EvalProtocol(10.0), n)

    def test_chunking_does_not_matter(self, rng):
        q, db = random_set(rng, 45, prefix="q"), random_set(rng, 30, prefix="d")
        assert recall_at(q, db, EvalProtocol(20.0), 2, chunk=7) == recall_at(q, db, EvalProtocol(20.0), 2)

    def test_exclude_self(self, rng):
        ds = random_set(rng, 20, extent=10)
        r = recall_at(ds, ds, EvalProtocol(50.0, exclude_self=True))
        assert r.evaluated == 20 and r.successes == 20
        lone = DescriptorSet(["a"], [[1.0]], [[0.0, 0.0]])
        assert recall_at(lone, lone, EvalProtocol(5.0, exclude_self=True)).value is None

    def test_candidate_count(self):
        assert candidate_count("1%", 50) == 1
        assert candidate_count("1%", 250) == 3
        assert candidate_count("1%", 250, floor=5) == 5
        with pytest.raises(ParameterError):
            candidate_count(0, 10)

    def test_errors(self, rng):
        ds = random_set(rng, 3)
        with pytest.raises(EmptyError):
            recall_at(ds.subset(np.zeros(3, bool)), ds, EvalProtocol())
        with pytest.raises(ShapeError):
            recall_at(ds, random_set(rng, 3, dim=4), EvalProtocol())


class TestSmoothAp:
    def test_perfect_ranking(self):
        scores = np.array([0.9, 0.8, 0.7, 0.2, 0.1])
        mask = np.array([1, 1, 1, 0, 0], bool)
        assert smooth_ap(scores, mask, SmoothApConfig(1e-4)) >= 0.999

    def test_single_positive_candidate(self):
        assert smooth_ap([0.3], [True]) == 1.0

    def test_matches_exact_ap(self, rng):
        for _ in range(100):
            scores, mask = oracles.well_separated_ranking(rng, int(rng.integers(2, 40)))
            exact = oracles.exact_average_precision(scores.tolist(), mask.tolist())
            assert abs(smooth_ap(scores, mask, SmoothApConfig(1e-4)) - exact) <= 1e-3
            assert average_precision(scores, mask) == pytest.approx(exact, abs=1e-12)

    def test_shift_invariant(self, rng):
        s = rng.normal(size=30)
        m = rng.random(30) < 0.4
        m[0] = True
        np.testing.assert_allclose(smooth_ap(s + 3.0, m), smooth_ap(s, m), atol=1e-12)

    def test_temperature_limit(self, rng):
        scores, mask = oracles.well_separated_ranking(rng, 25)
        exact = average_precision(scores, mask)
        gaps = [abs(smooth_ap(scores, mask, SmoothApConfig(t)) - exact) for t in (1.0, 0.1, 1e-2, 1e-4)]
        assert gaps[-1] <= gaps[0]
        assert gaps[-1] < 1e-6

    def test_truncation(self):
        scores = np.array([0.9, 0.8, 0.1])
        mask = np.array([True, False, True])
        full = smooth_ap(scores, mask, SmoothApConfig(1e-4))
        top2 = smooth_ap(scores, mask, SmoothApConfig(1e-4, truncation=2))
        assert full == pytest.approx((1 + 2 / 3) / 2, abs=1e-6)
        assert top2 == pytest.approx(0.5, abs=1e-6)

    def test_no_positive(self):
        with pytest.raises(DegenerateError):
            smooth_ap([0.1, 0.2], [False, False])


class TestKMeans:
    def test_k1_is_mean(self, rng):
        x = rng.normal(size=(40, 5))
        res = kmeans(x, 1, seed=0)
        np.testing.assert_allclose(res.centroids[0], x.mean(axis=0), atol=1e-12)
        assert not res.labels.any()

    def test_two_blobs(self, rng):
        a = rng.normal(0, 0.1, (30, 4))
        b = rng.normal(10, 0.1, (25, 4))
        x = np.vstack([a, b])
        truth = np.r_[np.zeros(30, int), np.ones(25, int)]
        for seed in range(5):
            labels = kmeans(x, 2, seed).labels
            assert np.array_equal(labels, truth) or np.array_equal(labels, 1 - truth)

    def test_wcss_non_increasing(self, rng):
        for seed in range(10):
            x = rng.normal(size=(200, 6))
            h = kmeans(x, 6, seed).wcss_history
            assert all(b <= a + 1e-9 * abs(a) for a, b in zip(h, h[1:]))

    def test_deterministic(self, rng):
        x = rng.normal(size=(80, 3))
        a, b = kmeans(x, 4, 11), kmeans(x, 4, 11)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_shuffle_invariant_with_fixed_init(self, rng):
        x = np.vstack([rng.normal(c, 0.5, (20, 2)) for c in (0, 5, 10)])
        init = x[[0, 25, 45]]
        perm = rng.permutation(len(x))
        a = kmeans(x, 3, init=init).labels
        b = kmeans(x[perm], 3, init=init).labels
        # same partition, compared through the co-membership matrix
        same_a = a[:, None] == a[None, :]
        b = b[np.argsort(perm)]
        same_b = b[:, None] == b[None, :]
        np.testing.assert_array_equal(same_a, same_b)

    def test_labels_in_range(self, rng):
        res = kmeans(rng.normal(size=(50, 3)), 7, 2)
        assert res.labels.min() >= 0 and res.labels.max() < 7

    def test_k_too_large(self, rng):
        with pytest.raises(ParameterError):
            kmeans(rng.normal(size=(3, 2)), 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10_000))
def test_recall_percent_dominates(n_db, seed):
    rng = np.random.default_rng(seed)
    q, db = random_set(rng, 15, 4, 50, "q"), random_set(rng, n_db, 4, 50, "d")
    p = EvalProtocol(20.0)
    r1, rp = recall_at(q, db, p, 1), recall_at(q, db, p, "1%")
    if r1.value is not None:
        assert rp.value >= r1.value
