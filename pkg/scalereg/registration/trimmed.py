"""
尺度裁剪 ICP: 部分重叠点集的配准

目标函数 Psi(xi, s, R, t) = e / (s^2 * xi^(1 + lambda))，e 为重叠子集上的均方误差。
每次迭代依次更新对应关系、重叠率、变换，Psi 单调不增。
"""
import math
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from scalereg.config import DEFAULT_TOLERANCES
from scalereg.registration.core import CorrespondenceSet, PointSet, SimilarityTransform
from scalereg.registration.exceptions import DegenerateScaleError, DimensionError, EmptyPointSetError
from scalereg.registration.nnindex import build_index
from scalereg.registration.scaling_icp import (
    ScaleRule,
    _check_inputs,
    _converged,
    _residual_sum,
    establish_correspondences,
    estimate_similarity,
)
from scalereg.registration.schema import ScaleBounds, Termination, TrimConfig, TrimmedResult


Points = Union[PointSet, np.ndarray]
# 固定对应关系下的变换估计: (P_sub, Qc_sub, s_prev) -> T
Estimator = Callable[[np.ndarray, np.ndarray, float], SimilarityTransform]


def psi_objective(mse: float, s: float, xi: float, lambda_: float) -> float:
    """Psi = mse / (s^2 * xi^(1 + lambda))"""
    if s <= 0:
        raise ValueError(f'尺度因子必须为正，实际为 {s}')
    if not 0 < xi <= 1:
        raise ValueError(f'重叠率必须在 (0, 1] 内，实际为 {xi}')
    if mse < 0:
        raise ValueError(f'均方误差不能为负，实际为 {mse}')
    return mse / (s ** 2 * xi ** (1.0 + lambda_))


def min_overlap_count(n_points: int, min_overlap: float) -> int:
    # 0.3 * 10 在浮点下略大于 3，先舍入再取整
    return max(1, math.ceil(round(min_overlap * n_points, 9)))


def _prefix_psi(sorted_sq: np.ndarray, s: float, lambda_: float, n_min: int) -> np.ndarray:
    """下标 j 对应前缀大小 n = n_min + j 的 Psi"""
    N = sorted_sq.shape[0]
    n = np.arange(n_min, N + 1, dtype=np.float64)
    prefix_mean = np.cumsum(sorted_sq)[n_min - 1:] / n
    return prefix_mean / (s ** 2 * (n / N) ** (1.0 + lambda_))


def _pick_prefix(psi: np.ndarray, floor: float = 0.0) -> int:
    # 与最小值并列的前缀中取最大的，最小值为 0 时只认精确相等
    best = psi.min()
    limit = max(best * (1.0 + DEFAULT_TOLERANCES.psi_tie), floor)
    return int(np.nonzero(psi <= limit)[0].max())


def _psi_floor(Q: np.ndarray, s: float, lambda_: float, n_min: int, N: int) -> float:
    """距离处在舍入量级（相对模型 RMS 半径）时对应的 Psi，随坐标一起缩放"""
    radius = np.sqrt(np.mean(np.sum((Q - Q.mean(axis=0)) ** 2, axis=1)))
    noise = (DEFAULT_TOLERANCES.residual_floor * radius) ** 2
    return noise / (s ** 2 * (n_min / N) ** (1.0 + lambda_))



def _sorted_pairs(corr: CorrespondenceSet) -> Tuple[np.ndarray, np.ndarray]:
    # 按距离升序，距离相同按数据点下标
    order = np.lexsort((corr.data_index, corr.distance))
    return order, corr.distance[order] ** 2


def select_overlap(corr: CorrespondenceSet, s: float, cfg: TrimConfig) -> Tuple[float, np.ndarray]:
    """
    在排序后的所有前缀上扫描 Psi，选出重叠率和重叠子集

    Args:
        corr (CorrespondenceSet): 当前对应关系
        s (float): 上一次迭代的尺度
        cfg (TrimConfig): 提供 lambda 和 min_overlap

    Returns:
        (float, np.ndarray): 重叠率 xi = n / N，按数据点下标升序的子集
    """
    if len(corr) == 0:
        raise EmptyPointSetError('对应关系为空')
    if s <= 0:
        raise ValueError(f'尺度因子必须为正，实际为 {s}')

    N = len(corr)
    n_min = min_overlap_count(N, cfg.min_overlap)
    order, sorted_sq = _sorted_pairs(corr)
    psi = _prefix_psi(sorted_sq, s, cfg.lambda_, n_min)
    n = n_min + _pick_prefix(psi)
    return n / N, np.sort(corr.data_index[order[:n]])


def _scaled_objective(F_sub: float, n: int, N: int, xi: float, lambda_: float) -> float:
    # N * Psi，xi = 1 时等于尺度加权目标 F
    return F_sub * (N / n) / xi ** (1.0 + lambda_)


def _run_trimmed(
    P: Points,
    Q: Points,
    cfg: TrimConfig,
    estimator: Estimator,
    solver: str,
    baseline: bool = False,
) -> TrimmedResult:
    P, Q = _check_inputs(P, Q)
    P_arr, Q_arr = P.points, Q.points
    N = P_arr.shape[0]
    idx = build_index(Q)

    T = cfg.initial_for(P.dim)
    if T.dim != P.dim:
        raise DimensionError(f'初始变换维数 {T.dim} 与点集维数 {P.dim} 不一致')
    lam = cfg.lambda_
    n_min = min_overlap_count(N, cfg.min_overlap)

    trace: List[float] = []
    psi_trace: List[float] = []
    scale_trace: List[float] = []
    overlap_trace: List[float] = []
    chain: List[Tuple[float, float, float]] = []
    termination = Termination.MAX_ITERATIONS

    prev_corr: Optional[CorrespondenceSet] = None
    subset: Optional[np.ndarray] = None
    # 第一次迭代之前视为全部重叠
    n_prev = N
    xi = 1.0
    final_mse = 0.0

    for k in range(1, cfg.max_iterations + 1):
        corr = establish_correspondences(P_arr, T, idx)
        order, sorted_sq = _sorted_pairs(corr)
        psi = _prefix_psi(sorted_sq, T.scale, lam, n_min)

        # e_k: 新对应关系下，保持上一次的重叠率
        e_k = N * psi[max(n_prev, n_min) - n_min]
        # 精确收敛后距离只剩舍入误差，低于下限的前缀都算并列
        n = n_min + _pick_prefix(psi, _psi_floor(Q_arr, T.scale, lam, n_min, N))
        eta_k = N * psi[n - n_min]
        new_subset = np.sort(corr.data_index[order[:n]])

        if (prev_corr is not None and corr.same_pairs(prev_corr)
                and subset is not None and np.array_equal(new_subset, subset)):
            termination = Termination.CORRESPONDENCES_UNCHANGED
            break

        xi = n / N
        subset = new_subset
        P_sub = P_arr[subset]
        Qc_sub = Q_arr[corr.model_index[subset]]
        try:
            T_new = estimator(P_sub, Qc_sub, T.scale)
        except DegenerateScaleError as e:
            logger.error(f'{solver} 第 {k} 次迭代尺度退化: {e.evalue}')
            raise DegenerateScaleError(e.evalue, iteration=k) from e

        residual = _residual_sum(P_sub, Qc_sub, T_new)
        F_sub = residual / T_new.scale ** 2
        eps_k = _scaled_objective(F_sub, n, N, xi, lam)
        T = T_new
        prev_corr = corr
        n_prev = n
        final_mse = residual / n

        trace.append(eps_k)
        psi_trace.append(F_sub / n / xi ** (1.0 + lam))
        scale_trace.append(T.scale)
        overlap_trace.append(xi)
        chain.append((e_k, eta_k, eps_k))
        logger.debug(f'{solver} 第 {k} 次迭代: N*Psi {eps_k:.6e}, 重叠率 {xi:.4f}, 尺度 {T.scale:.6f}')

        if _converged(trace, cfg.objective_rel_tol):
            termination = Termination.OBJECTIVE_CONVERGED
            break

    if subset is None:
        raise RuntimeError('求解器未执行任何迭代')

    logger.info(
        f'{solver} 结束: {termination.value}, 迭代 {len(trace)} 次, '
        f'尺度 {T.scale:.6f}, 重叠率 {xi:.4f}, MSE {final_mse:.6e}'
    )

    return TrimmedResult(
        solver=solver,
        transform=T,
        objective_trace=trace,
        objective_name='Np_psi',
        scale_trace=scale_trace,
        chain_trace=chain,
        iterations=len(trace),
        termination=termination,
        final_mse=final_mse,
        baseline=baseline,
        overlap=xi,
        overlap_subset=subset.tolist(),
        psi_trace=psi_trace,
        overlap_trace=overlap_trace,
    )


def run_strimmed_icp(P: Points, Q: Points, cfg: Optional[TrimConfig] = None) -> TrimmedResult:
    """
    部分重叠点集的尺度裁剪 ICP

    变换估计复用尺度 ICP 的闭式估计器，只作用在重叠子集上。
    min_overlap = 1 时与 run_scaling_icp 的目标函数记录一致。
    """
    cfg = cfg or TrimConfig()
    if cfg.estimate_scale:
        def estimator(P_sub, Qc_sub, s_prev):
            return estimate_similarity(P_sub, Qc_sub, ScaleRule.EMPHASIZED)
    else:
        # 尺度从不更新，s_prev 始终是初始尺度
        def estimator(P_sub, Qc_sub, s_prev):
            return estimate_similarity(P_sub, Qc_sub, ScaleRule.FIXED, fixed_scale=s_prev)

    return _run_trimmed(P, Q, cfg, estimator, 'strimmed')


def run_bounded_trimmed(
    P: Points,
    Q: Points,
    cfg: TrimConfig,
    bounds: ScaleBounds,
    solver: str = 'bounded',
) -> TrimmedResult:
    """裁剪循环 + 截断到 [low, high] 的最小二乘尺度"""
    def estimator(P_sub, Qc_sub, s_prev):
        return estimate_similarity(P_sub, Qc_sub, ScaleRule.LEAST_SQUARES, bounds=bounds)

    return _run_trimmed(P, Q, cfg, estimator, solver, baseline=True)
