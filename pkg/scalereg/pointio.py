"""
点集文件读写

支持两种格式:
    .txt / .csv / .xyz: 每行一个点，坐标以空白或逗号分隔，# 开头为注释
    .ply: ASCII 或二进制 PLY，只读取 vertex 元素的 x y [z] 属性，写出为 ASCII
"""
import os

import numpy as np
import pandas as pd
from loguru import logger
from plyfile import PlyData, PlyElement, PlyParseError

from scalereg.registration.core import PointSet
from scalereg.registration.exceptions import PointSetFormatError


def _read_text(path: str) -> np.ndarray:
    try:
        df = pd.read_csv(path, sep=r'[\s,]+', comment='#', header=None, engine='python')
    except pd.errors.EmptyDataError:
        raise PointSetFormatError('文件中没有点', path=path)
    except pd.errors.ParserError as e:
        raise PointSetFormatError(f'各行坐标数不一致: {e}', path=path)

    # 行首/行尾的分隔符会产生空列
    df = df.dropna(axis=1, how='all')
    try:
        arr = df.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise PointSetFormatError(f'坐标不是数字: {e}', path=path)
    if np.isnan(arr).any():
        raise PointSetFormatError('各行坐标数不一致', path=path)
    return arr


def _read_ply(path: str) -> np.ndarray:
    try:
        ply = PlyData.read(path)
    except (PlyParseError, ValueError, EOFError) as e:
        raise PointSetFormatError(f'PLY 解析失败: {e}', path=path)

    # 其他元素（相机、面片等）直接跳过
    if 'vertex' not in [element.name for element in ply.elements]:
        raise PointSetFormatError('缺少 vertex 元素', path=path)
    vertex = ply['vertex'].data
    axes = [name for name in ('x', 'y', 'z') if name in (vertex.dtype.names or ())]
    if axes[:2] != ['x', 'y']:
        raise PointSetFormatError('vertex 缺少 x/y 属性', path=path)
    return np.stack([np.asarray(vertex[name], dtype=np.float64) for name in axes], axis=1)



def read_points(path: str) -> PointSet:
    if not os.path.exists(path):
        raise PointSetFormatError('文件不存在', path=path)

    ext = os.path.splitext(path)[1].lower()
    arr = _read_ply(path) if ext == '.ply' else _read_text(path)
    if arr.size == 0:
        raise PointSetFormatError('文件中没有点', path=path)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise PointSetFormatError(f'点的维数至少为 2，实际形状 {arr.shape}', path=path)
    if not np.all(np.isfinite(arr)):
        raise PointSetFormatError('坐标包含非有限值', path=path)

    logger.debug(f'读取点集 {path}: {arr.shape[0]} 个点, {arr.shape[1]} 维')
    return PointSet(arr)


def write_points(P: PointSet, path: str) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext == '.ply':
        if P.dim > 3:
            raise PointSetFormatError('PLY 只能写出 2 维或 3 维点', path=path)
        axes = ['x', 'y', 'z'][:P.dim]
        vertex = np.empty(len(P), dtype=[(name, 'f8') for name in axes])
        for i, name in enumerate(axes):
            vertex[name] = P.points[:, i]
        PlyData([PlyElement.describe(vertex, 'vertex')], text=True).write(path)
    else:
        sep = ',' if ext == '.csv' else ' '
        pd.DataFrame(P.points).to_csv(path, sep=sep, header=False, index=False, float_format='%.17g')
