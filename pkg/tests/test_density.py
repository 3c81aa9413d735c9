"""KNN density estimation: exactness, self-exclusion, scaling properties."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aplab.density import CoverBuffer, InsufficientPoints, entropy_estimate, estimate_density


def naive_knn(points, scale, query, k, exclude=None):
    """Reference scan matching the production summation order exactly."""
    q = query / scale
    pts = points / scale
    dists = []
    for j, p in enumerate(pts):
        if exclude is not None and j == exclude:
            continue
        acc = 0.0
        for d in range(len(q)):
            diff = q[d] - p[d]
            acc += diff * diff
        dists.append(np.sqrt(acc))
    return sorted(dists)[k - 1]


def filled_buffer(points, normalize=False):
    points = np.asarray(points, dtype=np.float64)
    buf = CoverBuffer(points.shape[1], normalize=normalize)
    buf.insert(points, iteration=0)
    return buf


class TestKnnDistance:
    def test_worked_example(self):
        buf = filled_buffer([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert buf.knn_distance(np.array([0.1, 0.0]), k=1) == pytest.approx(0.1, abs=1e-12)

    def test_self_exclusion_by_index(self):
        buf = filled_buffer([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        d = buf.knn_distance(np.array([0.0, 0.0]), k=1, exclude_index=0)
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_kth_neighbor_is_kth_smallest(self):
        pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 0.0]]
        buf = filled_buffer(pts)
        q = np.array([0.0, 0.0])
        assert buf.knn_distance(q, k=3) == pytest.approx(2.0, abs=1e-12)

    def test_insufficient_points(self):
        buf = filled_buffer([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(InsufficientPoints):
            buf.knn_distances(np.zeros((1, 2)), k=2, exclude=np.array([0]))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_vectorized_scan_bit_equals_naive(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((40, 3))
        buf = filled_buffer(pts, normalize=True)
        queries = rng.standard_normal((5, 3))
        k = int(rng.integers(1, 5))
        got = buf.knn_distances(queries, k)
        scale = buf.scale()
        for i, q in enumerate(queries):
            assert got[i] == naive_knn(pts, scale, q, k)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_under_insertion(self, seed):
        # Raw coordinates: adding points can only shrink KNN distances.
        rng = np.random.default_rng(seed)
        buf = CoverBuffer(2, normalize=False)
        buf.insert(rng.standard_normal((20, 2)), 0)
        queries = rng.standard_normal((6, 2))
        before = buf.knn_distances(queries, k=3)
        buf.insert(rng.standard_normal((20, 2)), 1)
        after = buf.knn_distances(queries, k=3)
        assert np.all(after <= before + 1e-15)

    def test_normalized_ranking_invariant_to_affine_rescale(self):
        rng = np.random.default_rng(12)
        pts = rng.standard_normal((30, 2))
        q = rng.standard_normal(2)
        scale_vec = np.array([50.0, 0.02])

        def kth_index(points, query):
            buf = filled_buffer(points, normalize=True)
            d = buf.knn_distance(query, k=4)
            sc = buf.scale()
            dists = np.sqrt((((points - query) / sc) ** 2).sum(axis=1))
            return int(np.argmin(np.abs(dists - d)))

        assert kth_index(pts, q) == kth_index(pts * scale_vec, q * scale_vec)

    def test_projection_query_uses_subspace(self):
        pts = np.array([[0.0, 0.0, 5.0, 5.0], [1.0, 0.0, -5.0, 9.0], [0.0, 3.0, 2.0, -7.0]])
        buf = filled_buffer(pts)
        d = buf.knn_distances(np.array([[0.1, 0.0, 100.0, 100.0]]), k=1, dims=np.array([0, 1]))
        assert d[0] == pytest.approx(0.1, abs=1e-12)


class TestDensity:
    def test_duplicate_cluster_density_is_one_over_c0(self):
        buf = filled_buffer([[1.0, 1.0]] * 12)
        est = estimate_density(buf, np.array([[1.0, 1.0]]), k=5, c0=1e-6)
        assert est.distances[0] == 0.0
        assert est.densities[0] == pytest.approx(1e6)

    def test_distance_one_gives_density_near_one(self):
        buf = filled_buffer([[0.0], [1.0]])
        est = estimate_density(buf, np.array([[0.0]]), k=1, c0=1e-6, exclude=np.array([0]))
        assert est.densities[0] == pytest.approx(1.0, abs=1e-5)

    def test_uniform_grid_density_nearly_constant(self):
        # 32x32 regular grid, k=1: interior spacing is uniform so the max/min
        # density ratio stays at most 2 (edge effects only).
        xs = np.linspace(0, 1, 32)
        grid = np.array([[x, y] for x in xs for y in xs])
        buf = filled_buffer(grid)
        est = estimate_density(buf, grid, k=1, c0=1e-6, exclude=np.arange(len(grid)))
        ratio = est.densities.max() / est.densities.min()
        assert ratio <= 2.0

    def test_c0_must_be_positive(self):
        buf = filled_buffer([[0.0], [1.0]])
        with pytest.raises(ValueError, match="c0"):
            estimate_density(buf, np.array([[0.5]]), k=1, c0=0.0)


class TestEntropyProxy:
    def test_uniform_exceeds_concentrated_gaussian(self):
        rng = np.random.default_rng(0)
        uniform = filled_buffer(rng.uniform(0, 1, (2000, 2)))
        gauss = filled_buffer(rng.normal(0, 0.05, (2000, 2)))
        assert entropy_estimate(uniform, k=3) > entropy_estimate(gauss, k=3)

    def test_identical_points_give_log_c0(self):
        buf = filled_buffer([[2.0, 2.0]] * 10)
        assert entropy_estimate(buf, k=3, c0=1e-6) == pytest.approx(np.log(1e-6))

    def test_doubling_coordinates_adds_log_two(self):
        # k=1 and c0 -> 0: distances scale linearly, so the proxy shifts by ln 2.
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((64, 2))
        a = entropy_estimate(filled_buffer(pts), k=1, c0=1e-300)
        b = entropy_estimate(filled_buffer(2.0 * pts), k=1, c0=1e-300)
        assert b - a == pytest.approx(np.log(2.0), abs=1e-9)

    def test_needs_k_plus_one_points(self):
        buf = filled_buffer([[0.0], [1.0], [2.0]])
        with pytest.raises(InsufficientPoints):
            entropy_estimate(buf, k=3)


class TestReservoir:
    def test_unbounded_by_default(self):
        buf = CoverBuffer(2)
        rng = np.random.default_rng(0)
        for it in range(5):
            buf.insert(rng.standard_normal((100, 2)), it)
        assert len(buf) == 500

    def test_capacity_respected_and_slots_valid(self):
        buf = CoverBuffer(2, capacity=50, seed=3)
        rng = np.random.default_rng(1)
        all_slots = []
        for it in range(4):
            slots = buf.insert(rng.standard_normal((40, 2)), it)
            all_slots.append(slots)
        assert len(buf) == 50
        last = all_slots[-1]
        stored = last[last >= 0]
        assert np.all(stored < 50)

    def test_slot_points_are_the_inserted_points(self):
        buf = CoverBuffer(2, capacity=30, seed=9)
        rng = np.random.default_rng(2)
        block = rng.standard_normal((20, 2))
        buf.insert(rng.standard_normal((25, 2)), 0)
        slots = buf.insert(block, 1)
        for i, s in enumerate(slots):
            if s >= 0:
                np.testing.assert_array_equal(buf.states[s], block[i])

    def test_iteration_tags_nondecreasing_without_cap(self):
        buf = CoverBuffer(1)
        for it in range(3):
            buf.insert(np.zeros((4, 1)), it)
        assert np.all(np.diff(buf.tags) >= 0)
