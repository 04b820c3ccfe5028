from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Tuple, Union

import numpy as np

from scalereg.config import DEFAULT_TOLERANCES
from scalereg.registration.exceptions import (
    DimensionError,
    EmptyPointSetError,
    InvalidTransformError,
)
from scalereg.registration.utils import rotation_about_z, readonly


ArrayLike = Union[np.ndarray, Iterable[Iterable[float]]]


@dataclass(frozen=True, init=False, eq=False)
class PointSet:
    """
    m 维有序点集，数据形状 P 或模型形状 Q

    points 是 (N, m) 的只读 float64 数组，N >= 1，m >= 2
    """

    points: np.ndarray

    def __init__(self, points: ArrayLike):
        arr = np.array(points, dtype=np.float64)
        if arr.size == 0:
            raise EmptyPointSetError()
        if arr.ndim != 2:
            raise DimensionError(f'点集需要二维数组 (N, m)，实际维数 {arr.ndim}')
        if arr.shape[1] < 2:
            raise DimensionError(f'点的维数至少为 2，实际为 {arr.shape[1]}')
        if not np.all(np.isfinite(arr)):
            raise DimensionError('点坐标包含非有限值')
        object.__setattr__(self, 'points', readonly(arr))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, indices: np.ndarray) -> PointSet:
        return PointSet(self.points[np.asarray(indices, dtype=np.intp)])


@dataclass(frozen=True, init=False, eq=False)
class SimilarityTransform:
    """
    相似变换 (s, R, t)，作用方式 p -> s R p + t

    构造时检查 s > 0、R^T R = I、det(R) = 1
    """

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __init__(self, scale: float, rotation: ArrayLike, translation: ArrayLike):
        tol = DEFAULT_TOLERANCES
        scale = float(scale)
        if not np.isfinite(scale) or scale <= 0:
            raise InvalidTransformError(f'尺度因子必须为正数，实际为 {scale}')

        R = np.array(rotation, dtype=np.float64)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
            raise InvalidTransformError(f'旋转矩阵必须是 m x m 方阵，实际形状 {R.shape}')
        m = R.shape[0]
        t = np.array(translation, dtype=np.float64).reshape(-1)
        if t.shape[0] != m:
            raise DimensionError(f'平移向量维数 {t.shape[0]} 与旋转矩阵维数 {m} 不一致')
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidTransformError('变换包含非有限值')

        orth_err = np.linalg.norm(R.T @ R - np.eye(m), ord='fro')
        if orth_err > tol.rotation_orthogonality:
            raise InvalidTransformError(f'旋转矩阵不正交，误差 {orth_err:.3e}')
        det = np.linalg.det(R)
        if abs(det - 1.0) > tol.rotation_det:
            raise InvalidTransformError(f'旋转矩阵行列式必须为 1，实际为 {det:.12f}')

        object.__setattr__(self, 'scale', scale)
        object.__setattr__(self, 'rotation', readonly(R))
        object.__setattr__(self, 'translation', readonly(t))

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, dim: int) -> SimilarityTransform:
        return cls(1.0, np.eye(dim), np.zeros(dim))

    @classmethod
    def from_angle(cls, scale: float, theta: float, translation: ArrayLike) -> SimilarityTransform:
        """
        由绕 z 轴的转角构造变换，二维时就是平面转角

        Args:
            scale (float): 尺度因子
            theta (float): 转角，单位: 弧度
            translation: 平移向量，长度决定维数 (2 或 3)
        """
        t = np.array(translation, dtype=np.float64).reshape(-1)
        return cls(scale, rotation_about_z(theta, t.shape[0]), t)

    def inverse(self) -> SimilarityTransform:
        # T^-1 = (1/s, R^T, -(1/s) R^T t)
        inv_s = 1.0 / self.scale
        Rt = self.rotation.T
        return SimilarityTransform(inv_s, Rt, -inv_s * (Rt @ self.translation))

    def compose(self, other: SimilarityTransform) -> SimilarityTransform:
        """先作用 other 再作用 self"""
        if other.dim != self.dim:
            raise DimensionError(f'变换维数不一致: {self.dim} 与 {other.dim}')
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def as_matrix(self) -> np.ndarray:
        """(m+1) x (m+1) 齐次矩阵，仅用于导出"""
        m = self.dim
        H = np.eye(m + 1)
        H[:m, :m] = self.scale * self.rotation
        H[:m, m] = self.translation
        return H

    def to_dict(self) -> dict:
        return {
            'scale': self.scale,
            'rotation': self.rotation.tolist(),
            'translation': self.translation.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """每个数据点一条记录: (数据点下标, 最近模型点下标, 变换后的距离)"""

    model_index: np.ndarray
    distance: np.ndarray
    data_index: np.ndarray = field(default=None)

    def __post_init__(self):
        model_index = np.asarray(self.model_index, dtype=np.intp)
        distance = np.asarray(self.distance, dtype=np.float64)
        if model_index.shape != distance.shape or model_index.ndim != 1:
            raise DimensionError('对应关系的下标与距离长度不一致')
        if np.any(distance < 0):
            raise ValueError('对应距离不能为负')
        object.__setattr__(self, 'model_index', readonly(model_index.copy()))
        object.__setattr__(self, 'distance', readonly(distance.copy()))
        object.__setattr__(self, 'data_index', readonly(np.arange(model_index.shape[0], dtype=np.intp)))

    def __len__(self) -> int:
        return self.model_index.shape[0]

    @property
    def pairs(self) -> List[Tuple[int, int, float]]:
        return [
            (int(i), int(j), float(d))
            for i, j, d in zip(self.data_index, self.model_index, self.distance)
        ]

    def same_pairs(self, other: CorrespondenceSet) -> bool:
        return np.array_equal(self.model_index, other.model_index)


def _as_array(P: Union[PointSet, np.ndarray]) -> np.ndarray:
    if isinstance(P, PointSet):
        return P.points
    arr = np.asarray(P, dtype=np.float64)
    if arr.size == 0:
        raise EmptyPointSetError()
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def apply_transform(T: SimilarityTransform, P: Union[PointSet, np.ndarray]) -> PointSet:
    """输出第 i 个点为 s R p_i + t"""
    pts = _as_array(P)
    if pts.shape[1] != T.dim:
        raise DimensionError(f'变换维数 {T.dim} 与点集维数 {pts.shape[1]} 不一致')
    return PointSet(transform_points(T, pts))


def transform_points(T: SimilarityTransform, pts: np.ndarray) -> np.ndarray:
    # 求解器内部使用，不构造 PointSet
    return T.scale * (pts @ T.rotation.T) + T.translation


def centroid(P: Union[PointSet, np.ndarray]) -> np.ndarray:
    pts = _as_array(P)
    return readonly(pts.mean(axis=0))


def center(P: Union[PointSet, np.ndarray]) -> Tuple[PointSet, np.ndarray]:
    """
    返回去质心后的点集和质心

    坐标远离原点时一次相减会留下舍入残差，残差超过 centering 容差（相对坐标量级）时再减一次
    """
    pts = _as_array(P)
    c = pts.mean(axis=0)
    D = pts - c
    limit = DEFAULT_TOLERANCES.centering * max(1.0, float(np.abs(pts).max()))
    residual = D.mean(axis=0)
    if np.abs(residual).max() > limit:
        c = c + residual
        D = D - residual
    return PointSet(D), readonly(c)

