from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation
from scipy.stats import special_ortho_group


def readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_about_z(theta: float, dim: int = 2) -> np.ndarray:
    """
    绕 z 轴旋转 theta 弧度，dim=2 时即平面旋转，dim>3 时其余坐标轴不动
    """
    R = np.eye(dim)
    R[:2, :2] = rotation_2d(theta)
    return R


def random_rotation(dim: int, rng: np.random.Generator, max_angle: Optional[float] = None) -> np.ndarray:
    """
    随机旋转矩阵

    Args:
        dim (int): 维数
        rng (np.random.Generator): 随机数发生器
        max_angle (float): 最大转角，单位: 弧度；None 表示在 SO(m) 上均匀采样

    Returns:
        np.ndarray: (dim, dim) 旋转矩阵
    """
    if dim == 2:
        limit = np.pi if max_angle is None else max_angle
        return rotation_2d(rng.uniform(-limit, limit))
    if dim == 3:
        if max_angle is None:
            return Rotation.random(random_state=rng).as_matrix()
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        return Rotation.from_rotvec(axis * rng.uniform(-max_angle, max_angle)).as_matrix()
    if max_angle is None:
        return special_ortho_group.rvs(dim, random_state=rng)
    # 高维时只在前两个坐标轴张成的平面内转动
    return rotation_about_z(rng.uniform(-max_angle, max_angle), dim)


def rotation_angle_error(R_est: np.ndarray, R_true: np.ndarray) -> float:
    """两旋转之间的夹角，单位: 弧度"""
    delta = R_est.T @ R_true
    m = delta.shape[0]
    if m == 2:
        return float(abs(np.arctan2(delta[1, 0], delta[0, 0])))
    if m == 3:
        return float(Rotation.from_matrix(delta).magnitude())
    # 高维取单平面转角的迹公式
    cos_angle = np.clip((np.trace(delta) - (m - 2)) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_angle))


def scene_diameter(points: np.ndarray) -> float:
    """点集直径（最远两点距离），点数多时只在凸包顶点上计算"""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > pts.shape[1] + 1:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return float(pdist(pts).max())


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
