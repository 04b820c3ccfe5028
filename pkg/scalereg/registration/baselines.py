"""
对比基线: PCA 初始尺度和有界尺度的裁剪 ICP
"""
import itertools
from typing import Literal, Optional, Union

import numpy as np
from loguru import logger

from scalereg.registration.core import PointSet, SimilarityTransform, _as_array
from scalereg.registration.exceptions import DegenerateScaleError, DimensionError
from scalereg.registration.nnindex import build_index
from scalereg.registration.schema import ScaleBounds, TrimConfig, TrimmedResult
from scalereg.registration.trimmed import run_bounded_trimmed


Points = Union[PointSet, np.ndarray]
InitMode = Literal['identity', 'centroid', 'pca', 'axes']


def _spread(pts: np.ndarray) -> float:
    # 到质心的均方距离，即协方差矩阵的迹
    return float(np.mean(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)))


def pca_scale_estimate(P: Points, Q: Points) -> float:
    """
    s0 = Q 的 RMS 离散度 / P 的 RMS 离散度

    总方差之比与旋转无关，任意维数通用
    """
    P, Q = _as_array(P), _as_array(Q)
    if P.shape[0] < 2 or Q.shape[0] < 2:
        raise ValueError('PCA 尺度估计至少需要两个点')
    if P.shape[1] != Q.shape[1]:
        raise DimensionError(f'点集维数不一致: {P.shape[1]} 与 {Q.shape[1]}')
    spread_p = _spread(P)
    spread_q = _spread(Q)
    if spread_p <= 0:
        raise DegenerateScaleError('数据点全部重合，无法估计初始尺度')
    if spread_q <= 0:
        raise DegenerateScaleError('模型点全部重合，无法估计初始尺度')
    return float(np.sqrt(spread_q / spread_p))


def _principal_axes(pts: np.ndarray) -> np.ndarray:
    # 协方差特征向量按特征值降序排列成列
    D = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(D.T @ D / D.shape[0])
    return vecs[:, ::-1]


def principal_axes_rotation(P: Points, Q: Points, s0: Optional[float] = None) -> np.ndarray:
    """
    把 P 的主轴转到 Q 的主轴上

    每根主轴有正反两个方向，在行列式为 +1 的组合里取数据点到模型最近距离均值最小的一个。
    主轴方向由形状决定，与初始旋转误差无关；形状有对称轴或两个特征值接近时结果不可靠。
    """
    P, Q = _as_array(P), _as_array(Q)
    if s0 is None:
        s0 = pca_scale_estimate(P, Q)
    Vp, Vq = _principal_axes(P), _principal_axes(Q)
    cP, cQ = P.mean(axis=0), Q.mean(axis=0)
    idx = build_index(Q)

    best_R, best_score = np.eye(P.shape[1]), np.inf
    for signs in itertools.product((1.0, -1.0), repeat=P.shape[1]):
        R = Vq @ np.diag(signs) @ Vp.T
        if np.linalg.det(R) < 0:
            continue
        _, dist = idx.query(s0 * (P - cP) @ R.T + cQ)
        score = float(dist.mean())
        if score < best_score:
            best_R, best_score = R, score
    logger.debug(f'主轴对齐: 最近距离均值 {best_score:.6e}')
    return best_R


def initial_transform(P: Points, Q: Points, mode: InitMode = 'pca') -> SimilarityTransform:
    """
    初始变换

    identity: 单位变换；centroid: 质心对齐；pca: PCA 尺度 + 质心对齐，旋转为单位阵；
    axes: 在 pca 的基础上再做主轴对齐，旋转误差较大时用
    """
    P, Q = _as_array(P), _as_array(Q)
    dim = P.shape[1]
    if mode == 'identity':
        return SimilarityTransform.identity(dim)
    s0 = pca_scale_estimate(P, Q) if mode in ('pca', 'axes') else 1.0
    R0 = principal_axes_rotation(P, Q, s0) if mode == 'axes' else np.eye(dim)
    t0 = Q.mean(axis=0) - s0 * R0 @ P.mean(axis=0)
    return SimilarityTransform(s0, R0, t0)



def pca_init_transform(P: Points, Q: Points) -> SimilarityTransform:
    return initial_transform(P, Q, 'pca')


def run_bounded_tricp(
    P: Points,
    Q: Points,
    cfg: Optional[TrimConfig] = None,
    bounds: Optional[ScaleBounds] = None,
    solver: str = 'bounded',
) -> TrimmedResult:
    """
    有界尺度的裁剪 ICP

    循环与 run_strimmed_icp 相同，尺度取普通最小二乘驻点后截断到 [low, high]；
    驻点不为正时取下界。

    Args:
        P: 数据形状
        Q: 模型形状
        cfg (TrimConfig): 裁剪配置，初始变换在这里给出
        bounds (ScaleBounds): 尺度边界，None 时用初始尺度的 [0.9, 1.1] 倍
        solver (str): 结果中记录的求解器名称
    """
    cfg = cfg or TrimConfig()
    if bounds is None:
        s0 = cfg.initial_for(_as_array(P).shape[1]).scale
        bounds = ScaleBounds.around(s0, (0.9, 1.1))
    logger.debug(f'{solver} 尺度边界 [{bounds.low:.6f}, {bounds.high:.6f}]')
    return run_bounded_trimmed(P, Q, cfg, bounds, solver=solver)
