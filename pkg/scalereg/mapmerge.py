"""
不同分辨率的占用栅格地图合并

两张地图各自提取边缘点，用尺度裁剪 ICP 把 other 的边缘点配准到 reference 上，
再把 other 按配准结果合成到 reference 的坐标系和分辨率下。
"""
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from scalereg.gridmap import UNKNOWN, OccupancyGrid, extract_edge_points, overlay, sample_grid
from scalereg.registration.baselines import pca_init_transform
from scalereg.registration.core import SimilarityTransform, transform_points
from scalereg.registration.exceptions import DimensionError, MergeRejected
from scalereg.registration.schema import MergeConfig, MergeReport, TrimConfig
from scalereg.registration.trimmed import run_strimmed_icp


def _output_frame(
    reference: OccupancyGrid,
    other: OccupancyGrid,
    T: SimilarityTransform,
) -> Tuple[Tuple[int, int], np.ndarray, Tuple[int, int]]:
    """
    合并后栅格的形状和原点，栅格与 reference 对齐

    Returns:
        (shape, origin, offset): offset 为 reference 在新栅格中的 (row, col) 偏移
    """
    rows, cols = np.nonzero(other.cells != UNKNOWN)
    if rows.size == 0:
        return reference.shape, np.array(reference.origin), (0, 0)

    # other 的已知栅格中心落在 reference 栅格坐标系的哪些格子里
    centers = transform_points(T, other.cell_centers(rows, cols))
    out_rows, out_cols = reference.cell_of(centers)
    row_lo = min(0, int(out_rows.min()))
    col_lo = min(0, int(out_cols.min()))
    row_hi = max(reference.height, int(out_rows.max()) + 1)
    col_hi = max(reference.width, int(out_cols.max()) + 1)

    origin = reference.origin + np.array([col_lo, row_lo]) * reference.resolution
    return (row_hi - row_lo, col_hi - col_lo), origin, (-row_lo, -col_lo)


def composite(reference: OccupancyGrid, other: OccupancyGrid, T: SimilarityTransform) -> OccupancyGrid:
    """
    把 other 合成到 reference 上

    输出分辨率和栅格对齐方式与 reference 相同，必要时向外扩展。
    每个输出栅格的中心经 T 的逆变换在 other 上取最近栅格，冲突时占用 > 空闲 > 未知。
    """
    if T.dim != 2:
        raise DimensionError('地图合并只支持二维变换')
    shape, origin, (dr, dc) = _output_frame(reference, other, T)

    base = np.full(shape, UNKNOWN, dtype=np.int8)
    base[dr:dr + reference.height, dc:dc + reference.width] = reference.cells
    top = sample_grid(other, T, shape, reference.resolution, origin)
    return OccupancyGrid(overlay(base, top), reference.resolution, origin)


def merge_maps(
    reference: OccupancyGrid,
    other: OccupancyGrid,
    cfg: Optional[TrimConfig] = None,
    init: Optional[SimilarityTransform] = None,
    merge_cfg: Optional[MergeConfig] = None,
) -> Tuple[OccupancyGrid, MergeReport]:
    """
    合并两张占用栅格地图

    Args:
        reference (OccupancyGrid): 参考地图，输出沿用它的坐标系和分辨率
        other (OccupancyGrid): 待合并地图
        cfg (TrimConfig): 裁剪 ICP 配置，其中的初始变换会被 init 覆盖
        init (SimilarityTransform): other -> reference 的初始变换，None 时用 PCA 尺度 + 质心对齐
        merge_cfg (MergeConfig): 残差上限

    Raises:
        EmptyEdgeError: 任一地图没有边缘点
        DegenerateScaleError: 配准退化
        MergeRejected: 配准残差超过上限，异常中附带 MergeReport
    """
    cfg = cfg or TrimConfig()
    merge_cfg = merge_cfg or MergeConfig()

    ref_edges = extract_edge_points(reference)
    other_edges = extract_edge_points(other)
    logger.info(f'边缘点: reference {len(ref_edges)} 个, other {len(other_edges)} 个')

    if init is None:
        init = pca_init_transform(other_edges, ref_edges)
        logger.info(f'未指定初始变换，PCA 初始尺度 {init.scale:.6f}')

    result = run_strimmed_icp(other_edges, ref_edges, cfg.model_copy(update={'initial_transform': init}))
    report = MergeReport(
        transform=result.transform,
        overlap=result.overlap,
        edge_counts=(len(ref_edges), len(other_edges)),
        output_resolution=reference.resolution,
        final_mse=result.final_mse,
        iterations=result.iterations,
        termination=result.termination,
    )

    limit = (merge_cfg.max_rmse_cells * reference.resolution) ** 2
    if result.final_mse > limit:
        logger.error(f'配准残差 {result.final_mse:.6e} 超过上限 {limit:.6e}，拒绝合并')
        raise MergeRejected(
            f'配准均方误差 {result.final_mse:.6e} 超过上限 {limit:.6e}',
            report=report,
        )

    merged = composite(reference, other, result.transform)
    logger.info(
        f'合并完成: 尺度 {result.transform.scale:.6f}, 重叠率 {result.overlap:.4f}, '
        f'输出 {merged.width}x{merged.height}'
    )
    return merged, report
