"""
尺度 ICP: 交替建立最近点对应和闭式估计 (s, R, t)，
最小化 F(s, R, t) = sum |s R p_i + t - q_c(i)|^2 / s^2
"""
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from loguru import logger

from scalereg.config import DEFAULT_TOLERANCES
from scalereg.registration.core import (
    CorrespondenceSet,
    PointSet,
    SimilarityTransform,
    transform_points,
)
from scalereg.registration.exceptions import (
    DegenerateScaleError,
    DimensionError,
    EmptyPointSetError,
)
from scalereg.registration.nnindex import NearestNeighborIndex, build_index
from scalereg.registration.schema import (
    RegistrationResult,
    ScaleBounds,
    SolverConfig,
    Termination,
)


Points = Union[PointSet, np.ndarray]


class ScaleRule(str, Enum):

    # 尺度加权目标的闭式解
    EMPHASIZED = 'emphasized'
    # 普通最小二乘驻点，可能塌缩到 0
    LEAST_SQUARES = 'least_squares'
    # 尺度固定为初始值
    FIXED = 'fixed'


class RotationEstimate(NamedTuple):

    rotation: np.ndarray
    # 互协方差秩亏，最优旋转不唯一
    degenerate: bool


def _points(P: Points) -> np.ndarray:
    if isinstance(P, PointSet):
        return P.points
    arr = np.asarray(P, dtype=np.float64)
    if arr.size == 0:
        raise EmptyPointSetError()
    return arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr.reshape(1, -1)


def _check_pairs(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f'点对数量不一致: {A.shape[0]} 与 {B.shape[0]}')
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f'点的维数不一致: {A.shape[1]} 与 {B.shape[1]}')


def _check_centered(A: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A.mean(axis=0)).max() > DEFAULT_TOLERANCES.centered_input * scale:
        raise ValueError(f'{name} 未去中心化')


def establish_correspondences(P: Points, T: SimilarityTransform, idx: NearestNeighborIndex) -> CorrespondenceSet:
    """对每个数据点，找到变换后距离最近的模型点"""
    pts = _points(P)
    if pts.shape[1] != T.dim or T.dim != idx.dim:
        raise DimensionError(f'数据点维数 {pts.shape[1]}、变换维数 {T.dim}、索引维数 {idx.dim} 不一致')
    model_index, distance = idx.query(transform_points(T, pts))
    return CorrespondenceSet(model_index=model_index, distance=distance)


def _rotation_from_covariance(H: np.ndarray) -> RotationEstimate:
    m = H.shape[0]
    U, S, Vt = np.linalg.svd(H)
    V = Vt.T
    # 反射修正，保证 det(R) = +1
    D = np.eye(m)
    D[-1, -1] = np.sign(np.linalg.det(V @ U.T)) or 1.0
    R = V @ D @ U.T

    tol = 1e-12 * max(S[0], np.finfo(np.float64).tiny)
    degenerate = bool(S[-2] <= tol or (D[-1, -1] < 0 and S[-2] - S[-1] <= tol))
    return RotationEstimate(R, degenerate)


def estimate_rotation(D: Points, M: Points) -> RotationEstimate:
    """
    去中心化点对 (d_i, m_i) 上的最优旋转，最大化 sum m_i^T R d_i

    H = (1/N) sum d_i m_i^T = U S V^T, R = V diag(1, ..., 1, det(V U^T)) U^T

    Returns:
        RotationEstimate: rotation 为旋转矩阵，degenerate 表示最优解不唯一
    """
    D, M = _points(D), _points(M)
    _check_pairs(D, M)
    _check_centered(D, 'D')
    _check_centered(M, 'M')

    H = D.T @ M / D.shape[0]
    result = _rotation_from_covariance(H)
    if result.degenerate:
        logger.warning('互协方差矩阵秩亏，旋转估计不唯一')
    return result


def _correlation(D: np.ndarray, M: np.ndarray, R: np.ndarray) -> float:
    # sum m_i^T R d_i
    return float(np.sum(M * (D @ R.T)))


def estimate_scale(D: Points, M: Points, R: np.ndarray) -> float:
    """
    固定旋转下尺度加权目标的驻点 s = sum |m_i|^2 / sum m_i^T R d_i

    Raises:
        DegenerateScaleError: 分母不大于 1e-12 * sum |m_i|^2
    """
    D, M = _points(D), _points(M)
    _check_pairs(D, M)
    _check_centered(D, 'D')
    _check_centered(M, 'M')
    return _emphasized_scale(D, M, np.asarray(R, dtype=np.float64))


def _emphasized_scale(D: np.ndarray, M: np.ndarray, R: np.ndarray) -> float:
    numerator = float(np.sum(M * M))
    denominator = _correlation(D, M, R)
    if denominator <= DEFAULT_TOLERANCES.scale_denominator * numerator or denominator <= 0:
        raise DegenerateScaleError(
            f'尺度估计分母 {denominator:.6e} 不为正 (sum |m|^2 = {numerator:.6e})'
        )
    return numerator / denominator


def least_squares_scale(D: Points, M: Points, R: np.ndarray) -> float:
    """普通最小二乘的尺度驻点 s = sum m_i^T R d_i / sum |d_i|^2，可能为 0"""
    D, M = _points(D), _points(M)
    _check_pairs(D, M)
    return _least_squares_scale(D, M, np.asarray(R, dtype=np.float64))


def _least_squares_scale(D: np.ndarray, M: np.ndarray, R: np.ndarray) -> float:
    spread = float(np.sum(D * D))
    if spread <= 0:
        raise DegenerateScaleError('数据点全部重合，无法估计尺度')
    return max(_correlation(D, M, R), 0.0) / spread


def estimate_translation(P: Points, Qc: Points, s: float, R: np.ndarray) -> np.ndarray:
    """t = mean(q_c(i)) - s R mean(p_i)"""
    P, Qc = _points(P), _points(Qc)
    _check_pairs(P, Qc)
    return Qc.mean(axis=0) - s * (np.asarray(R) @ P.mean(axis=0))


def _residual_sum(P: np.ndarray, Qc: np.ndarray, T: SimilarityTransform) -> float:
    diff = transform_points(T, P) - Qc
    return float(np.sum(diff * diff))


def objective_value(P: Points, Qc: Points, T: SimilarityTransform) -> float:
    """F = sum |s R p_i + t - q_c(i)|^2 / s^2，求和而非均值"""
    P, Qc = _points(P), _points(Qc)
    _check_pairs(P, Qc)
    if T.scale <= 0:
        raise ValueError('尺度因子必须为正')
    return _residual_sum(P, Qc, T) / T.scale ** 2


def estimate_similarity(
    P: np.ndarray,
    Qc: np.ndarray,
    rule: ScaleRule = ScaleRule.EMPHASIZED,
    fixed_scale: float = 1.0,
    bounds: Optional[ScaleBounds] = None,
) -> SimilarityTransform:
    """
    固定对应关系下的变换估计，依次求旋转、尺度、平移

    Args:
        P (np.ndarray): 数据点 (N, m)
        Qc (np.ndarray): 对应的模型点 (N, m)
        rule (ScaleRule): 尺度估计方式
        fixed_scale (float): rule=FIXED 时的尺度
        bounds (ScaleBounds): 非空时把最小二乘尺度截断到区间内
    """
    p_mean = P.mean(axis=0)
    q_mean = Qc.mean(axis=0)
    D = P - p_mean
    M = Qc - q_mean

    R, _ = _rotation_from_covariance(D.T @ M / D.shape[0])

    if rule == ScaleRule.EMPHASIZED:
        s = _emphasized_scale(D, M, R)
    elif rule == ScaleRule.LEAST_SQUARES:
        s = _least_squares_scale(D, M, R)
    else:
        s = fixed_scale

    if bounds is not None:
        s = float(np.clip(s, bounds.low, bounds.high))

    t = q_mean - s * (R @ p_mean)
    return SimilarityTransform(s, R, t)


def _check_inputs(P: Points, Q: Points) -> Tuple[PointSet, PointSet]:
    P = P if isinstance(P, PointSet) else PointSet(P)
    Q = Q if isinstance(Q, PointSet) else PointSet(Q)
    if P.dim != Q.dim:
        raise DimensionError(f'数据形状维数 {P.dim} 与模型形状维数 {Q.dim} 不一致')
    return P, Q


def _converged(trace: List[float], tol: float) -> bool:
    if len(trace) < 2:
        return False
    prev, cur = trace[-2], trace[-1]
    return (prev - cur) <= tol * abs(prev)


def _run_icp(
    P: Points,
    Q: Points,
    cfg: SolverConfig,
    rule: ScaleRule,
    solver: str,
) -> RegistrationResult:
    P, Q = _check_inputs(P, Q)
    P_arr, Q_arr = P.points, Q.points
    idx = build_index(Q)

    T = cfg.initial_for(P.dim)
    if T.dim != P.dim:
        raise DimensionError(f'初始变换维数 {T.dim} 与点集维数 {P.dim} 不一致')
    if not cfg.estimate_scale:
        rule = ScaleRule.FIXED
    s0 = T.scale
    collapse_floor = DEFAULT_TOLERANCES.collapse_scale * s0

    def evaluate(Qc: np.ndarray, transform: SimilarityTransform) -> float:
        if rule == ScaleRule.LEAST_SQUARES:
            return _residual_sum(P_arr, Qc, transform)
        return _residual_sum(P_arr, Qc, transform) / transform.scale ** 2

    trace: List[float] = []
    scale_trace: List[float] = []
    chain: List[Tuple[float, float]] = []
    termination = Termination.MAX_ITERATIONS
    prev_corr: Optional[CorrespondenceSet] = None
    Qc = None

    for k in range(1, cfg.max_iterations + 1):
        corr = establish_correspondences(P_arr, T, idx)
        if prev_corr is not None and corr.same_pairs(prev_corr):
            termination = Termination.CORRESPONDENCES_UNCHANGED
            break

        Qc = Q_arr[corr.model_index]
        e_k = evaluate(Qc, T)
        try:
            if rule == ScaleRule.LEAST_SQUARES:
                T_new = _least_squares_step(P_arr, Qc, collapse_floor)
            else:
                T_new = estimate_similarity(P_arr, Qc, rule, fixed_scale=s0)
        except DegenerateScaleError as e:
            logger.error(f'{solver} 第 {k} 次迭代尺度退化: {e.evalue}')
            raise DegenerateScaleError(e.evalue, iteration=k) from e

        eps_k = evaluate(Qc, T_new)
        T = T_new
        prev_corr = corr
        trace.append(eps_k)
        scale_trace.append(T.scale)
        chain.append((e_k, eps_k))
        logger.debug(f'{solver} 第 {k} 次迭代: 目标 {eps_k:.6e}, 尺度 {T.scale:.6f}')

        if rule == ScaleRule.LEAST_SQUARES and T.scale <= collapse_floor:
            termination = Termination.SCALE_COLLAPSED
            break
        if _converged(trace, cfg.objective_rel_tol):
            termination = Termination.OBJECTIVE_CONVERGED
            break

    if Qc is None:
        # max_iterations >= 1，至少做一次估计
        raise RuntimeError('求解器未执行任何迭代')

    final_mse = _residual_sum(P_arr, Qc, T) / P_arr.shape[0]
    logger.info(f'{solver} 结束: {termination.value}, 迭代 {len(trace)} 次, 尺度 {T.scale:.6f}, MSE {final_mse:.6e}')

    return RegistrationResult(
        solver=solver,
        transform=T,
        objective_trace=trace,
        objective_name='ls_sum' if rule == ScaleRule.LEAST_SQUARES else 'F',
        scale_trace=scale_trace,
        chain_trace=chain,
        iterations=len(trace),
        termination=termination,
        final_mse=final_mse,
        diagnostic=rule == ScaleRule.LEAST_SQUARES,
    )


def _least_squares_step(P: np.ndarray, Qc: np.ndarray, floor: float) -> SimilarityTransform:
    p_mean = P.mean(axis=0)
    q_mean = Qc.mean(axis=0)
    D = P - p_mean
    M = Qc - q_mean
    R, _ = _rotation_from_covariance(D.T @ M / D.shape[0])
    # 塌缩时保留一个极小的正尺度，变换仍然合法
    s = max(_least_squares_scale(D, M, R), floor)
    return SimilarityTransform(s, R, q_mean - s * (R @ p_mean))


def run_scaling_icp(P: Points, Q: Points, cfg: Optional[SolverConfig] = None) -> RegistrationResult:
    """
    完全重叠点集的尺度 ICP

    每次迭代先建立对应，再在去中心化点对上依次估计旋转、尺度、平移。
    对应关系不再变化、目标函数相对下降小于 objective_rel_tol 或达到最大迭代次数时停止。
    """
    return _run_icp(P, Q, cfg or SolverConfig(), ScaleRule.EMPHASIZED, 'scaling_icp')


def run_naive_ls_icp(P: Points, Q: Points, cfg: Optional[SolverConfig] = None) -> RegistrationResult:
    """诊断用: 尺度取普通最小二乘驻点，用来复现尺度塌缩到 0 的现象"""
    return _run_icp(P, Q, cfg or SolverConfig(), ScaleRule.LEAST_SQUARES, 'naive_ls')
