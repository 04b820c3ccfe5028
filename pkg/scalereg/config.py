from pydantic import BaseModel, ConfigDict


# 解析错误退出（参数、配置、文件格式）
PARSE_ERROR_EXIT_CODE = 2
# 配准退化退出
DEGENERACY_EXIT_CODE = 3
# 地图合并被拒绝
MERGE_REJECTED_EXIT_CODE = 4

# PGM 灰度阈值，取值范围 0-255
OCC_THRESH = 64
FREE_THRESH = 192

# 求解器默认值
MAX_ITERATIONS = 100
OBJECTIVE_REL_TOL = 1e-10
TRIM_LAMBDA = 2.0
MIN_OVERLAP = 0.3

# 合并结果的残差上限，单位: 参考地图栅格
MAX_MERGE_RMSE_CELLS = 2.0


class Tolerances(BaseModel):
    """所有数值容差集中在这里"""

    model_config = ConfigDict(frozen=True)

    # R^T R = I 的 Frobenius 误差
    rotation_orthogonality: float = 1e-9
    # |det(R) - 1|
    rotation_det: float = 1e-9
    # 去中心化后的质心残差
    centering: float = 1e-12
    # 估计器入口处对输入是否已去中心化的检查
    centered_input: float = 1e-9
    # 尺度估计的分母下限 = scale_denominator * sum(|m|^2)
    scale_denominator: float = 1e-12
    # 重叠率扫描时 Psi 的并列容差，相对最小值
    psi_tie: float = 1e-12
    # 对应距离的舍入下限，相对模型点集的 RMS 半径；低于它的 Psi 视为 0
    residual_floor: float = 1e-12
    # 目标函数单调性检查的松弛量
    monotone_slack: float = 1e-9
    # 朴素最小二乘尺度跌破 collapse_scale * s0 视为塌缩
    collapse_scale: float = 1e-9


DEFAULT_TOLERANCES = Tolerances()
