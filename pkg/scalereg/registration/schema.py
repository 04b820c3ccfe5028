from enum import Enum
from typing import List, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_serializer,
    field_validator,
    model_validator,
)

from scalereg.config import (
    FREE_THRESH,
    MAX_ITERATIONS,
    MAX_MERGE_RMSE_CELLS,
    MIN_OVERLAP,
    OBJECTIVE_REL_TOL,
    OCC_THRESH,
    TRIM_LAMBDA,
)
from scalereg.registration.core import SimilarityTransform


class Termination(str, Enum):

    CORRESPONDENCES_UNCHANGED = 'correspondences_unchanged'
    MAX_ITERATIONS = 'max_iterations'
    OBJECTIVE_CONVERGED = 'objective_converged'
    # 仅朴素最小二乘诊断求解器使用
    SCALE_COLLAPSED = 'scale_collapsed'


class Algorithm(str, Enum):

    SCALING_ICP = 'scaling_icp'
    STRIMMED = 'strimmed'
    BOUNDED_NARROW = 'bounded_narrow'
    BOUNDED_WIDE = 'bounded_wide'
    NAIVE_LS = 'naive_ls'


class SolverConfig(BaseModel):

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)

    max_iterations: int = Field(default=MAX_ITERATIONS, ge=1)
    objective_rel_tol: float = Field(default=OBJECTIVE_REL_TOL, ge=0.0)
    # None 表示单位变换
    initial_transform: Optional[SimilarityTransform] = None
    # False 时尺度固定为初始尺度，只估计 (R, t)；s0 = 1 即刚性 ICP
    estimate_scale: bool = True

    def initial_for(self, dim: int) -> SimilarityTransform:
        if self.initial_transform is None:
            return SimilarityTransform.identity(dim)
        return self.initial_transform


class TrimConfig(SolverConfig):

    lambda_: float = Field(default=TRIM_LAMBDA, ge=0.0, alias='lambda')
    min_overlap: float = Field(default=MIN_OVERLAP, gt=0.0, le=1.0)


class ScaleBounds(BaseModel):

    model_config = ConfigDict(frozen=True)

    low: float = Field(gt=0.0)
    high: float = Field(gt=0.0)

    @model_validator(mode='after')
    def check_order(self):
        if self.low > self.high:
            raise ValueError(f'尺度下界 {self.low} 大于上界 {self.high}')
        return self

    @classmethod
    def around(cls, s0: float, factors: Tuple[float, float]) -> 'ScaleBounds':
        return cls(low=factors[0] * s0, high=factors[1] * s0)


class RegistrationResult(BaseModel):

    model_config = ConfigDict(arbitrary_types_allowed=True)

    solver: str
    transform: SimilarityTransform
    objective_trace: List[float]
    # F: 尺度加权目标（求和）；Np_psi: N_p * Psi；ls_sum: 朴素最小二乘
    objective_name: str = 'F'
    scale_trace: List[float] = []
    # 每次迭代的收敛链 (e_k, [eta_k,] eps_k)
    chain_trace: List[Tuple[float, ...]] = []
    iterations: int
    termination: Termination
    # 最后一次估计所用点对的均方误差
    final_mse: float = Field(ge=0.0)
    diagnostic: bool = False
    baseline: bool = False

    @model_validator(mode='after')
    def check_iterations(self):
        if self.iterations != len(self.objective_trace):
            raise ValueError('迭代次数必须等于目标函数记录长度')
        return self

    @field_serializer('transform')
    def serialize_transform(self, transform: SimilarityTransform):
        return transform.to_dict()


class TrimmedResult(RegistrationResult):

    overlap: float = Field(gt=0.0, le=1.0)
    overlap_subset: List[int]
    psi_trace: List[float]
    overlap_trace: List[float] = []


class MergeConfig(BaseModel):

    model_config = ConfigDict(frozen=True)

    occ_thresh: int = Field(default=OCC_THRESH, ge=0, le=255)
    free_thresh: int = Field(default=FREE_THRESH, ge=0, le=255)
    # 配准残差 RMS 上限，单位: 参考地图栅格
    max_rmse_cells: float = Field(default=MAX_MERGE_RMSE_CELLS, gt=0.0)

    @model_validator(mode='after')
    def check_thresholds(self):
        if self.occ_thresh >= self.free_thresh:
            raise ValueError('占用阈值必须小于空闲阈值')
        return self


class MergeReport(BaseModel):

    model_config = ConfigDict(arbitrary_types_allowed=True)

    transform: SimilarityTransform
    overlap: float
    edge_counts: Tuple[int, int]
    output_resolution: float
    final_mse: float
    iterations: int
    termination: Termination

    @field_serializer('transform')
    def serialize_transform(self, transform: SimilarityTransform):
        return transform.to_dict()


class ExperimentSpec(BaseModel):
    """
    一组蒙特卡洛试验的描述，可以从扁平的 key=value 配置文件读取
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    name: str = 'bench'
    dim: int = Field(default=2, ge=2)
    n_points: int = Field(default=500, ge=3)
    # 点集文件作为基础形状，None 时使用合成形状
    dataset_path: Optional[str] = None
    scale_range: Tuple[float, float] = (0.5, 2.0)
    # 转角幅值区间，单位: 弧度
    rotation_range: Tuple[float, float] = (0.0, 0.05)
    # 平移幅值区间，单位: 基础形状直径
    translation_range: Tuple[float, float] = (0.0, 1.0)
    occlusion: float = Field(default=0.0, ge=0.0, lt=1.0)
    occlusion_mode: Literal['displace', 'cut'] = 'displace'
    noise_sigma: float = Field(default=0.0, ge=0.0)
    trials: int = Field(default=20, ge=1)
    seed: int = 0
    algorithms: List[Algorithm] = [Algorithm.SCALING_ICP, Algorithm.STRIMMED]
    init: Literal['identity', 'centroid', 'pca', 'axes', 'truth'] = 'pca'
    # 仅 init=truth 时使用: 尺度相对扰动、转角扰动 (弧度)
    init_perturbation: float = Field(default=0.0, ge=0.0)
    lambda_: float = Field(default=TRIM_LAMBDA, ge=0.0, alias='lambda')
    min_overlap: float = Field(default=MIN_OVERLAP, gt=0.0, le=1.0)
    max_iterations: int = Field(default=MAX_ITERATIONS, ge=1)
    objective_rel_tol: float = Field(default=OBJECTIVE_REL_TOL, ge=0.0)
    narrow_bounds: Tuple[float, float] = (0.9, 1.1)
    wide_bounds: Tuple[float, float] = (0.5, 2.0)
    # 尺度边界的中心: PCA 估计或真值，再乘以 bounds_anchor_bias
    bounds_anchor: Literal['pca', 'truth'] = 'pca'
    bounds_anchor_bias: float = Field(default=1.0, gt=0.0)
    output_dir: str = 'bench_out'

    @field_validator('scale_range', 'rotation_range', 'translation_range', 'narrow_bounds', 'wide_bounds')
    @classmethod
    def check_interval(cls, value: Tuple[float, float]):
        lo, hi = value
        if lo > hi:
            raise ValueError(f'区间下界 {lo} 大于上界 {hi}')
        if lo < 0:
            raise ValueError(f'区间下界不能为负: {lo}')
        return value

    @field_validator('scale_range', 'narrow_bounds', 'wide_bounds')
    @classmethod
    def check_positive(cls, value: Tuple[float, float]):
        if value[0] <= 0:
            raise ValueError('尺度区间必须为正')
        return value

    @field_validator('algorithms')
    @classmethod
    def check_algorithms(cls, value: List[Algorithm]):
        if not value:
            raise ValueError('至少需要一个算法')
        return value

    def trim_config(self, initial_transform: Optional[SimilarityTransform] = None) -> TrimConfig:
        return TrimConfig(
            max_iterations=self.max_iterations,
            objective_rel_tol=self.objective_rel_tol,
            initial_transform=initial_transform,
            lambda_=self.lambda_,
            min_overlap=self.min_overlap,
        )


class TrialRecord(BaseModel):

    trial: int
    algorithm: Algorithm
    status: Literal['ok', 'failed'] = 'ok'
    error: Optional[str] = None
    # 重叠子集上的均方误差
    final_mse: Optional[float] = None
    wall_time: Optional[float] = None
    iterations: Optional[int] = None
    termination: Optional[Termination] = None
    scale: Optional[float] = None
    overlap: Optional[float] = None
    true_scale: float
    true_overlap: float
    scale_error: Optional[float] = None
    rotation_error: Optional[float] = None
    translation_error: Optional[float] = None
    # 目标函数记录是否单调不增，只对 scaling_icp 和 strimmed 检查
    monotone: Optional[bool] = None
