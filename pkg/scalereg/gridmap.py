"""
占用栅格地图: PGM 读写、边缘点提取、按相似变换重采样

坐标约定: 第 row 行第 col 列栅格的中心为
    x = origin[0] + (col + 0.5) * resolution
    y = origin[1] + (row + 0.5) * resolution
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from PIL import Image
from scipy import ndimage

from scalereg.config import FREE_THRESH, OCC_THRESH
from scalereg.registration.core import PointSet, SimilarityTransform, transform_points
from scalereg.registration.exceptions import DimensionError, EmptyEdgeError, PgmParseError
from scalereg.registration.utils import readonly


UNKNOWN = -1
FREE = 0
OCCUPIED = 100

# 写出 PGM 时的灰度
PGM_OCCUPIED = 0
PGM_UNKNOWN = 128
PGM_FREE = 255

# 合并时的优先级: 占用 > 空闲 > 未知
_BY_RANK = np.array([UNKNOWN, FREE, OCCUPIED], dtype=np.int8)


@dataclass(frozen=True, init=False, eq=False)
class OccupancyGrid:

    cells: np.ndarray
    resolution: float
    origin: np.ndarray

    def __init__(self, cells, resolution: float = 1.0, origin: Sequence[float] = (0.0, 0.0)):
        arr = np.array(cells, dtype=np.int8)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f'栅格需要非空的二维数组，实际形状 {arr.shape}')
        if not np.isin(arr, (UNKNOWN, FREE, OCCUPIED)).all():
            raise ValueError('栅格状态只能是未知 (-1)、空闲 (0)、占用 (100)')
        resolution = float(resolution)
        if not np.isfinite(resolution) or resolution <= 0:
            raise ValueError(f'分辨率必须为正，实际为 {resolution}')
        origin = np.array(origin, dtype=np.float64).reshape(-1)
        if origin.shape != (2,):
            raise DimensionError('原点必须是二维坐标')
        object.__setattr__(self, 'cells', readonly(arr))
        object.__setattr__(self, 'resolution', resolution)
        object.__setattr__(self, 'origin', readonly(origin))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        x = self.origin[0] + (np.asarray(cols) + 0.5) * self.resolution
        y = self.origin[1] + (np.asarray(rows) + 0.5) * self.resolution
        return np.stack([x, y], axis=-1)

    def cell_of(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """坐标所在栅格的 (row, col)，可能越界"""
        xy = np.asarray(xy, dtype=np.float64)
        cols = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.intp)
        rows = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.intp)
        return rows, cols

    def count(self, state: int) -> int:
        return int(np.count_nonzero(self.cells == state))

    def padded(self, pad: int) -> OccupancyGrid:
        """四周补 pad 圈未知栅格，原点同步移动，度量坐标不变"""
        cells = np.pad(self.cells, pad, mode='constant', constant_values=UNKNOWN)
        return OccupancyGrid(cells, self.resolution, self.origin - pad * self.resolution)

    def same_as(self, other: OccupancyGrid) -> bool:
        return (
            self.shape == other.shape
            and self.resolution == other.resolution
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.cells, other.cells)
        )


class _PgmReader:
    """逐字节解析 PGM 表头，出错时报告字节偏移"""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _skip_space(self) -> None:
        while self.pos < len(self.data):
            ch = self.data[self.pos:self.pos + 1]
            if ch == b'#':
                end = self.data.find(b'\n', self.pos)
                self.pos = len(self.data) if end < 0 else end + 1
            elif ch.isspace():
                self.pos += 1
            else:
                break

    def token(self, what: str) -> Tuple[bytes, int]:
        self._skip_space()
        start = self.pos
        while self.pos < len(self.data):
            ch = self.data[self.pos:self.pos + 1]
            if ch.isspace() or ch == b'#':
                break
            self.pos += 1
        if start == self.pos:
            raise PgmParseError(f'缺少{what}', offset=start)
        return self.data[start:self.pos], start

    def integer(self, what: str, low: int = 0) -> int:
        raw, offset = self.token(what)
        if not raw.isdigit():
            raise PgmParseError(f'{what}不是非负整数: {raw[:16]!r}', offset=offset)
        value = int(raw)
        if value < low:
            raise PgmParseError(f'{what}必须不小于 {low}，实际为 {value}', offset=offset)
        return value


def _classify(gray: np.ndarray, occ_thresh: int, free_thresh: int) -> np.ndarray:
    cells = np.full(gray.shape, UNKNOWN, dtype=np.int8)
    cells[gray >= free_thresh] = FREE
    cells[gray <= occ_thresh] = OCCUPIED
    return cells


def _scan_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """
    只扫描表头，返回 (魔数, 宽, 高, 最大灰度值, 像素数据起点)

    像素解码交给 Pillow，这里负责把表头错误定位到字节偏移
    """
    if data[:2] not in (b'P2', b'P5'):
        raise PgmParseError(f'不支持的 PGM 魔数 {data[:2]!r}', offset=0)
    magic = data[:2]
    reader = _PgmReader(data)
    reader.pos = 2
    if reader.pos < len(data) and not data[2:3].isspace() and data[2:3] != b'#':
        raise PgmParseError('魔数后缺少空白', offset=2)

    width = reader.integer('宽度', low=1)
    height = reader.integer('高度', low=1)
    maxval = reader.integer('最大灰度值', low=1)
    if maxval > 65535:
        raise PgmParseError(f'最大灰度值超过 65535: {maxval}', offset=reader.pos)
    if magic == b'P5':
        # 最大灰度值之后恰好一个空白字节
        if reader.pos >= len(data) or not data[reader.pos:reader.pos + 1].isspace():
            raise PgmParseError('最大灰度值后缺少空白', offset=reader.pos)
        return magic, width, height, maxval, reader.pos + 1
    return magic, width, height, maxval, reader.pos


def parse_pgm(data: bytes) -> np.ndarray:
    """解析 P2/P5 字节串，返回缩放到 0-255 的灰度数组 (height, width)"""
    magic, width, height, maxval, start = _scan_header(data)
    n = width * height
    if magic == b'P5':
        size = n * (2 if maxval > 255 else 1)
        if start + size > len(data):
            raise PgmParseError(f'像素数据被截断，需要 {size} 字节', offset=len(data))
    elif len(data[start:].split()) < n:
        raise PgmParseError(f'像素数据被截断，需要 {n} 个像素', offset=len(data))

    try:
        with Image.open(io.BytesIO(data), formats=['PPM']) as img:
            img.load()
            mode = img.mode
            gray = np.asarray(img, dtype=np.int64)
    except (OSError, ValueError, SyntaxError) as e:
        raise PgmParseError(f'像素数据无法解码: {e}', offset=start)

    # Pillow 已按 maxval 拉伸到满量程，8 位为 L，16 位为 I
    if mode != 'L':
        gray = np.rint(gray * (255.0 / 65535.0)).astype(np.int64)
    return gray



def load_pgm(
    path: str,
    occ_thresh: int = OCC_THRESH,
    free_thresh: int = FREE_THRESH,
    resolution: float = 1.0,
    origin: Sequence[float] = (0.0, 0.0),
) -> OccupancyGrid:
    """
    读取 PGM 占用栅格地图

    灰度 <= occ_thresh 为占用，>= free_thresh 为空闲，其余为未知。
    PGM 不带分辨率信息，由调用方给出。

    Raises:
        PgmParseError: 表头或像素数据格式错误，带字节偏移
    """
    with open(path, 'rb') as f:
        data = f.read()
    gray = parse_pgm(data)
    grid = OccupancyGrid(_classify(gray, occ_thresh, free_thresh), resolution, origin)
    logger.debug(
        f'读取栅格地图 {path}: {grid.width}x{grid.height}, '
        f'占用 {grid.count(OCCUPIED)}, 空闲 {grid.count(FREE)}'
    )
    return grid


def save_pgm(grid: OccupancyGrid, path: str, binary: bool = True) -> None:
    """写出 PGM，binary=True 为 P5，否则为 P2 文本"""
    gray = np.full(grid.shape, PGM_UNKNOWN, dtype=np.uint8)
    gray[grid.cells == FREE] = PGM_FREE
    gray[grid.cells == OCCUPIED] = PGM_OCCUPIED

    if binary:
        Image.fromarray(gray).save(path, format='PPM')
        return
    # Pillow 只写 P5
    with open(path, 'w', encoding='ascii') as f:
        f.write(f'P2\n{grid.width} {grid.height}\n255\n')
        np.savetxt(f, gray, fmt='%d')


def edge_mask(grid: OccupancyGrid) -> np.ndarray:
    """至少有一个 4 邻域空闲栅格的占用栅格"""
    free = grid.cells == FREE
    occupied = grid.cells == OCCUPIED
    cross = ndimage.generate_binary_structure(2, 1)
    near_free = ndimage.binary_dilation(free, structure=cross, border_value=0)
    return occupied & near_free


def extract_edge_points(grid: OccupancyGrid) -> PointSet:
    """边缘栅格中心的度量坐标，按行优先顺序"""
    if grid.count(OCCUPIED) == 0:
        raise EmptyEdgeError()
    rows, cols = np.nonzero(edge_mask(grid))
    if rows.size == 0:
        raise EmptyEdgeError('没有与空闲区域相邻的占用栅格')
    return PointSet(grid.cell_centers(rows, cols))


def sample_grid(
    source: OccupancyGrid,
    T: SimilarityTransform,
    shape: Tuple[int, int],
    resolution: float,
    origin: Sequence[float] = (0.0, 0.0),
) -> np.ndarray:
    """
    在输出栅格上对 source 做最近栅格采样

    T 把 source 坐标映射到输出坐标；输出栅格中心经 T 的逆变换落入 source 的栅格，
    落在 source 外的为未知。
    """
    if T.dim != 2:
        raise DimensionError('栅格采样只支持二维变换')
    frame = OccupancyGrid(np.full(shape, UNKNOWN, dtype=np.int8), resolution, origin)
    rows, cols = np.indices(shape)
    centers = frame.cell_centers(rows.ravel(), cols.ravel())
    src_rows, src_cols = source.cell_of(transform_points(T.inverse(), centers))

    inside = (src_rows >= 0) & (src_rows < source.height) & (src_cols >= 0) & (src_cols < source.width)
    out = np.full(rows.size, UNKNOWN, dtype=np.int8)
    out[inside] = source.cells[src_rows[inside], src_cols[inside]]
    return out.reshape(shape)


def resample_grid(
    source: OccupancyGrid,
    T: SimilarityTransform,
    resolution: float,
    shape: Optional[Tuple[int, int]] = None,
    origin: Sequence[float] = (0.0, 0.0),
) -> OccupancyGrid:
    """按相似变换把 source 画到新的栅格坐标系里，用于生成合成地图对"""
    if shape is None:
        corners = source.cell_centers(
            np.array([0, 0, source.height - 1, source.height - 1]),
            np.array([0, source.width - 1, 0, source.width - 1]),
        )
        extent = transform_points(T, corners)
        origin = np.floor(extent.min(axis=0) / resolution) * resolution - resolution
        size = np.ceil((extent.max(axis=0) - origin) / resolution).astype(int) + 2
        shape = (int(size[1]), int(size[0]))
    return OccupancyGrid(sample_grid(source, T, shape, resolution, origin), resolution, origin)


def _rank(cells: np.ndarray) -> np.ndarray:
    return np.where(cells == OCCUPIED, 2, np.where(cells == FREE, 1, 0))


def overlay(base: np.ndarray, top: np.ndarray) -> np.ndarray:
    """逐栅格取优先级高的状态"""
    return _BY_RANK[np.maximum(_rank(base), _rank(top))]
