from typing import Tuple, Union

import numpy as np
from scipy.spatial import KDTree

from scalereg.registration.core import PointSet
from scalereg.registration.exceptions import DimensionError, EmptyPointSetError


# 每次查询先取的候选数，用于处理等距并列
CANDIDATES = 4
# 候选距离都落在最小距离的这个相对范围内时，改用球查询取全部并列点
TIE_RTOL = 1e-9


def point_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # 所有距离都用同一个公式计算，保证与穷举结果逐位一致
    return np.sqrt(((X - Y) ** 2).sum(axis=-1))


class NearestNeighborIndex:
    """
    模型形状 Q 上的精确最近邻索引（k-d 树）

    查询返回最近模型点下标及其欧氏距离，等距时取下标最小者。
    构建后不可变，可以并发查询。
    """

    def __init__(self, source: PointSet, workers: int = 1):
        self._source = source
        self._points = source.points
        self._tree = KDTree(self._points)
        self._workers = workers

    @property
    def source(self) -> PointSet:
        return self._source

    @property
    def dim(self) -> int:
        return self._source.dim

    def __len__(self) -> int:
        return len(self._source)

    def query(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        批量查询

        Args:
            X (np.ndarray): (n, m) 查询点

        Returns:
            (np.ndarray, np.ndarray): 最近模型点下标 (n,)、距离 (n,)
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise DimensionError(f'查询点维数 {X.shape[1]} 与索引维数 {self.dim} 不一致')

        n_model = len(self)
        k = min(CANDIDATES, n_model)
        _, cand = self._tree.query(X, k=k, workers=self._workers)
        cand = np.asarray(cand, dtype=np.intp).reshape(X.shape[0], k)

        dist = point_distances(X[:, None, :], self._points[cand])
        dmin = dist.min(axis=1)
        # 最小距离并列时取下标最小的
        masked = np.where(dist == dmin[:, None], cand, n_model)
        index = masked.min(axis=1)

        if k < n_model:
            crowded = np.nonzero(dist.max(axis=1) <= dmin * (1.0 + TIE_RTOL))[0]
            for row in crowded:
                index[row], dmin[row] = self._query_ball(X[row], dmin[row])

        return index, dmin

    def _query_ball(self, x: np.ndarray, radius: float) -> Tuple[int, float]:
        r = radius * (1.0 + 2 * TIE_RTOL) + np.finfo(np.float64).tiny
        near = np.asarray(self._tree.query_ball_point(x, r=r), dtype=np.intp)
        d = point_distances(x[None, :], self._points[near])
        best = d.min()
        return int(near[d == best].min()), float(best)


def build_index(Q: Union[PointSet, np.ndarray], workers: int = 1) -> NearestNeighborIndex:
    if not isinstance(Q, PointSet):
        if np.asarray(Q).size == 0:
            raise EmptyPointSetError('模型点集不能为空')
        Q = PointSet(Q)
    return NearestNeighborIndex(Q, workers=workers)


def query_nearest(idx: NearestNeighborIndex, x: np.ndarray) -> Tuple[int, float]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != idx.dim:
        raise DimensionError(f'查询点维数 {x.shape[0]} 与索引维数 {idx.dim} 不一致')
    index, dist = idx.query(x[None, :])
    return int(index[0]), float(dist[0])
