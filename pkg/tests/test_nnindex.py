import numpy as np
import pytest
from numpy.testing import assert_array_equal

from scalereg.registration.core import PointSet
from scalereg.registration.exceptions import DimensionError, EmptyPointSetError
from scalereg.registration.nnindex import build_index, point_distances, query_nearest


def brute_force(points: np.ndarray, x: np.ndarray):
    d = point_distances(x[None, :], points)
    best = d.min()
    return int(np.nonzero(d == best)[0].min()), float(best)


class TestNearestNeighborIndex:

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(7)
        points = rng.uniform(-1, 1, size=(1000, 3))
        queries = rng.uniform(-1.2, 1.2, size=(1000, 3))
        idx = build_index(PointSet(points))

        index, dist = idx.query(queries)
        expected = [brute_force(points, q) for q in queries]
        assert_array_equal(index, [e[0] for e in expected])
        assert_array_equal(dist, [e[1] for e in expected])

    def test_exact_hit(self):
        idx = build_index(PointSet([[0, 0], [1, 0], [0, 1]]))
        assert query_nearest(idx, np.array([1.0, 0.0])) == (1, 0.0)

    def test_tie_takes_smallest_index(self):
        idx = build_index(PointSet([[5, 5], [0, 1], [0, -1]]))
        assert query_nearest(idx, np.array([0.0, 0.0])) == (1, 1.0)

    def test_tie_beyond_candidate_count(self):
        # 6 个等距点，多于每次查询的候选数
        angles = np.arange(6) * np.pi / 3
        ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        points = np.vstack([[[9.0, 9.0]], ring[::-1]])
        idx = build_index(PointSet(points))
        i, d = query_nearest(idx, np.array([0.0, 0.0]))
        dists = point_distances(np.zeros((1, 2)), points)
        assert d == dists.min()
        assert i == int(np.nonzero(dists == dists.min())[0].min())

    def test_single_point_model(self):
        idx = build_index(PointSet([[2.0, 2.0]]))
        index, dist = idx.query(np.array([[0.0, 0.0], [2.0, 3.0]]))
        assert_array_equal(index, [0, 0])
        assert dist[1] == 1.0

    def test_empty_model_rejected(self):
        with pytest.raises(EmptyPointSetError):
            build_index(np.zeros((0, 2)))

    def test_dimension_mismatch(self):
        idx = build_index(PointSet([[0, 0], [1, 1]]))
        with pytest.raises(DimensionError):
            query_nearest(idx, np.array([0.0, 0.0, 0.0]))
