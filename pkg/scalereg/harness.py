"""
蒙特卡洛实验: 合成配准样例、并发执行各算法、统计与导出
"""
import asyncio
import json
import os
import time
from asyncio import Semaphore
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from loguru import logger
from pydantic import ValidationError
from tqdm.asyncio import tqdm as atqdm

from scalereg import settings
from scalereg.config import DEFAULT_TOLERANCES
from scalereg.gridmap import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, resample_grid
from scalereg.pointio import read_points
from scalereg.registration.baselines import initial_transform, pca_scale_estimate, run_bounded_tricp
from scalereg.registration.core import PointSet, SimilarityTransform, transform_points
from scalereg.registration.exceptions import ExperimentSpecError, ScaleRegError
from scalereg.registration.scaling_icp import run_naive_ls_icp, run_scaling_icp
from scalereg.registration.schema import (
    Algorithm,
    ExperimentSpec,
    RegistrationResult,
    ScaleBounds,
    SolverConfig,
    TrialRecord,
    TrimmedResult,
)
from scalereg.registration.trimmed import run_strimmed_icp
from scalereg.registration.utils import (
    rotation_about_axis,
    rotation_about_z,
    rotation_angle_error,
    scene_diameter,
)


# 位移遮挡: 被遮挡点移到基础形状半径的这个倍数处
DISPLACE_FACTOR = 50.0
# 目标函数记录需要单调不增的算法
MONOTONE_ALGORITHMS = (Algorithm.SCALING_ICP, Algorithm.STRIMMED)
TIMING_COLUMNS = ('wall_time', 'mean_wall_time')


class Case(NamedTuple):

    P: PointSet
    Q: PointSet
    truth: SimilarityTransform
    true_xi: float


@dataclass
class ExperimentOutcome:

    spec: ExperimentSpec
    records: List[TrialRecord]
    summary: pd.DataFrame
    traces: pd.DataFrame = field(default_factory=pd.DataFrame)

    def records_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump(mode='json') for r in self.records])


def _blob_2d(n: int) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = 1.0 + 0.3 * np.cos(2 * theta) + 0.2 * np.sin(3 * theta) + 0.1 * np.cos(5 * theta)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _bumpy_ellipsoid(n: int) -> np.ndarray:
    # Fibonacci 球面上的方向，半径带非对称起伏
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    rho = np.sqrt(1.0 - z ** 2)
    u = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    r = 1.0 + 0.2 * u[:, 0] * u[:, 1] + 0.15 * u[:, 2] ** 3 + 0.1 * u[:, 0]
    return u * r[:, None] * np.array([1.5, 1.0, 0.7])


def base_shape(spec: ExperimentSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.dataset_path:
        pts = read_points(spec.dataset_path).points
        if pts.shape[1] != spec.dim:
            raise ExperimentSpecError(f'数据集维数 {pts.shape[1]} 与 dim={spec.dim} 不一致')
        return np.array(pts)
    if spec.dim == 2:
        return _blob_2d(spec.n_points)
    if spec.dim == 3:
        return _bumpy_ellipsoid(spec.n_points)
    return rng.normal(size=(spec.n_points, spec.dim)) * np.linspace(1.5, 0.5, spec.dim)


def _sample_rotation(dim: int, rng: np.random.Generator, low: float, high: float) -> np.ndarray:
    angle = rng.uniform(low, high) * rng.choice([-1.0, 1.0])
    if dim == 2:
        return rotation_about_z(angle, 2)
    if dim == 3:
        return rotation_about_axis(rng.normal(size=3), angle)
    return rotation_about_z(angle, dim)


def _sample_truth(spec: ExperimentSpec, base: np.ndarray, rng: np.random.Generator) -> SimilarityTransform:
    s = rng.uniform(*spec.scale_range)
    R = _sample_rotation(spec.dim, rng, *spec.rotation_range)
    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)
    t = direction * rng.uniform(*spec.translation_range) * scene_diameter(base)
    return SimilarityTransform(s, R, t)


def generate_case(spec: ExperimentSpec, trial: int) -> Case:
    """
    生成一次试验的配准样例，(seed, trial) 相同则结果逐位相同

    模型形状 Q = T*(base)，数据形状 P = base。
    displace 模式把 P 中 occlusion 比例的点沿径向移到远处；
    cut 模式用随机超平面从 Q 上切掉对应比例的点。两种模式下真实重叠率都是 1 - occlusion。
    """
    rng = np.random.default_rng([spec.seed, trial])
    base = base_shape(spec, rng)
    n = base.shape[0]
    if n < 3:
        raise ExperimentSpecError(f'基础形状至少需要 3 个点，实际 {n} 个')

    truth = _sample_truth(spec, base, rng)
    P = base.copy()
    model = base
    k = int(round(spec.occlusion * n))
    if k >= n:
        raise ExperimentSpecError('遮挡比例过大，没有剩余的重叠点')

    if k > 0 and spec.occlusion_mode == 'displace':
        c = base.mean(axis=0)
        radius = float(np.linalg.norm(base - c, axis=1).max())
        moved = rng.choice(n, size=k, replace=False)
        offset = P[moved] - c
        norms = np.linalg.norm(offset, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        P[moved] = c + offset / norms * DISPLACE_FACTOR * radius
    elif k > 0:
        normal = rng.normal(size=spec.dim)
        normal /= np.linalg.norm(normal)
        height = (base - base.mean(axis=0)) @ normal
        # 保留投影最小的 n - k 个点
        keep = np.sort(np.argsort(height, kind='stable')[:n - k])
        model = base[keep]

    if spec.noise_sigma > 0:
        P = P + rng.normal(scale=spec.noise_sigma, size=P.shape)

    Q = transform_points(truth, model)
    return Case(PointSet(P), PointSet(Q), truth, 1.0 - k / n)


def trial_init(spec: ExperimentSpec, case: Case, trial: int) -> SimilarityTransform:
    if spec.init != 'truth':
        return initial_transform(case.P, case.Q, spec.init)

    p = spec.init_perturbation
    truth = case.truth
    if p == 0:
        return truth
    # 扰动用独立的随机流，不影响样例本身
    rng = np.random.default_rng([spec.seed, trial, 1])
    s = truth.scale * (1.0 + p * rng.uniform(-1.0, 1.0))
    dR = rotation_about_z(p * rng.uniform(-1.0, 1.0), spec.dim)
    return SimilarityTransform(s, truth.rotation @ dR, truth.translation)


def _bounds(spec: ExperimentSpec, case: Case, factors: Tuple[float, float]) -> ScaleBounds:
    if spec.bounds_anchor == 'truth':
        anchor = case.truth.scale
    else:
        anchor = pca_scale_estimate(case.P, case.Q)
    return ScaleBounds.around(anchor * spec.bounds_anchor_bias, factors)


def solve(spec: ExperimentSpec, algorithm: Algorithm, case: Case, init: SimilarityTransform) -> RegistrationResult:
    trim_cfg = spec.trim_config(initial_transform=init)
    cfg = SolverConfig(
        max_iterations=spec.max_iterations,
        objective_rel_tol=spec.objective_rel_tol,
        initial_transform=init,
    )
    if algorithm == Algorithm.SCALING_ICP:
        return run_scaling_icp(case.P, case.Q, cfg)
    if algorithm == Algorithm.NAIVE_LS:
        return run_naive_ls_icp(case.P, case.Q, cfg)
    if algorithm == Algorithm.STRIMMED:
        return run_strimmed_icp(case.P, case.Q, trim_cfg)
    if algorithm == Algorithm.BOUNDED_NARROW:
        bounds = _bounds(spec, case, spec.narrow_bounds)
        return run_bounded_tricp(case.P, case.Q, trim_cfg, bounds, solver=algorithm.value)
    if algorithm == Algorithm.BOUNDED_WIDE:
        bounds = _bounds(spec, case, spec.wide_bounds)
        return run_bounded_tricp(case.P, case.Q, trim_cfg, bounds, solver=algorithm.value)
    raise ExperimentSpecError(f'未知算法: {algorithm}')


def is_monotone(trace: List[float]) -> bool:
    diffs = np.diff(np.asarray(trace, dtype=np.float64))
    return bool(np.all(diffs <= DEFAULT_TOLERANCES.monotone_slack))


def _record(
    trial: int,
    algorithm: Algorithm,
    case: Case,
    result: RegistrationResult,
    wall_time: float,
) -> TrialRecord:
    T, truth = result.transform, case.truth
    diameter = scene_diameter(case.Q.points)
    monotone = None
    if algorithm in MONOTONE_ALGORITHMS:
        monotone = is_monotone(result.objective_trace)
        if not monotone:
            logger.error(f'试验 {trial} {algorithm.value}: 目标函数记录不单调')

    return TrialRecord(
        trial=trial,
        algorithm=algorithm,
        final_mse=result.final_mse,
        wall_time=wall_time,
        iterations=result.iterations,
        termination=result.termination,
        scale=T.scale,
        overlap=result.overlap if isinstance(result, TrimmedResult) else None,
        true_scale=truth.scale,
        true_overlap=case.true_xi,
        scale_error=abs(T.scale - truth.scale) / truth.scale,
        rotation_error=rotation_angle_error(T.rotation, truth.rotation),
        translation_error=float(np.linalg.norm(T.translation - truth.translation)) / max(diameter, 1e-300),
        monotone=monotone,
    )


def run_trial(
    spec: ExperimentSpec,
    trial: int,
    algorithm: Algorithm,
    case: Case,
) -> Tuple[TrialRecord, Optional[RegistrationResult]]:
    """单次试验，失败时记录错误而不是抛出"""
    try:
        init = trial_init(spec, case, trial)
        start = time.perf_counter()
        result = solve(spec, algorithm, case, init)
        wall_time = time.perf_counter() - start
    except (ScaleRegError, ValueError) as e:
        logger.error(f'试验 {trial} {algorithm.value} 失败: {e}')
        record = TrialRecord(
            trial=trial,
            algorithm=algorithm,
            status='failed',
            error=str(e),
            true_scale=case.truth.scale,
            true_overlap=case.true_xi,
        )
        return record, None
    return _record(trial, algorithm, case, result, wall_time), result


def _trace_rows(trial: int, algorithm: Algorithm, result: RegistrationResult) -> List[Dict]:
    psi = result.psi_trace if isinstance(result, TrimmedResult) else [None] * result.iterations
    overlap = result.overlap_trace if isinstance(result, TrimmedResult) else [None] * result.iterations
    return [
        {
            'trial': trial,
            'algorithm': algorithm.value,
            'iteration': k + 1,
            'objective_name': result.objective_name,
            'objective': result.objective_trace[k],
            'psi': psi[k],
            'scale': result.scale_trace[k],
            'overlap': overlap[k],
        }
        for k in range(result.iterations)
    ]


async def handle_trial(
    spec: ExperimentSpec,
    trial: int,
    algorithm: Algorithm,
    case: Case,
    semaphore: Semaphore,
) -> Tuple[TrialRecord, Optional[RegistrationResult]]:
    async with semaphore:
        return await asyncio.to_thread(run_trial, spec, trial, algorithm, case)


async def run_experiment_async(spec: ExperimentSpec, max_concurrency: int) -> ExperimentOutcome:
    semaphore = Semaphore(max_concurrency)
    cases = [generate_case(spec, trial) for trial in range(spec.trials)]

    tasks = [
        asyncio.create_task(handle_trial(spec, trial, algorithm, cases[trial], semaphore))
        for trial in range(spec.trials)
        for algorithm in spec.algorithms
    ]
    results = await atqdm.gather(*tasks, desc=spec.name, disable=None)

    order = {alg: i for i, alg in enumerate(spec.algorithms)}
    results = sorted(results, key=lambda item: (item[0].trial, order[item[0].algorithm]))

    records = [record for record, _ in results]
    trace_rows: List[Dict] = []
    for record, result in results:
        if result is not None:
            trace_rows.extend(_trace_rows(record.trial, record.algorithm, result))

    traces = pd.DataFrame(
        trace_rows,
        columns=['trial', 'algorithm', 'iteration', 'objective_name', 'objective', 'psi', 'scale', 'overlap'],
    )
    return ExperimentOutcome(spec=spec, records=records, summary=summarize(records), traces=traces)


def run_experiment(spec: ExperimentSpec, max_concurrency: Optional[int] = None) -> ExperimentOutcome:
    """
    对每次试验、每个算法运行求解器

    试验之间相互独立，并发执行；随机流只由 (seed, trial) 决定，并发不改变结果。
    单次试验失败会记录下来，实验继续。
    """
    max_concurrency = max_concurrency or settings.MAX_CONCURRENCY
    logger.info(f'实验 {spec.name}: {spec.trials} 次试验, 算法 {[a.value for a in spec.algorithms]}')
    outcome = asyncio.run(run_experiment_async(spec, max_concurrency))

    failed = sum(r.status == 'failed' for r in outcome.records)
    violations = sum(r.monotone is False for r in outcome.records)
    logger.info(f'实验 {spec.name} 完成: {len(outcome.records)} 条记录, 失败 {failed}, 单调性违例 {violations}')
    return outcome


def summarize(records: List[TrialRecord]) -> pd.DataFrame:
    """按算法汇总: MSE 均值/中位数、平均耗时、真值误差"""
    columns = [
        'algorithm', 'trials', 'failed', 'mean_mse', 'median_mse', 'mean_wall_time', 'mean_iterations',
        'mean_scale_error', 'mean_rotation_error', 'mean_translation_error', 'mean_overlap_error',
        'monotone_violations',
    ]
    if not records:
        return pd.DataFrame(columns=columns)

    df = pd.DataFrame([r.model_dump(mode='json') for r in records])
    numeric = ['final_mse', 'wall_time', 'iterations', 'overlap', 'true_overlap',
               'scale_error', 'rotation_error', 'translation_error']
    df[numeric] = df[numeric].apply(pd.to_numeric, errors='coerce')
    df['overlap_error'] = (df['overlap'] - df['true_overlap']).abs()
    df['violation'] = df['monotone'].map(lambda v: v is False)
    df['is_failed'] = df['status'] == 'failed'

    algorithms = list(dict.fromkeys(df['algorithm']))
    grouped = df.groupby('algorithm', sort=False)
    summary = pd.DataFrame({
        'trials': grouped.size(),
        'failed': grouped['is_failed'].sum(),
        'mean_mse': grouped['final_mse'].mean(),
        'median_mse': grouped['final_mse'].median(),
        'mean_wall_time': grouped['wall_time'].mean(),
        'mean_iterations': grouped['iterations'].mean(),
        'mean_scale_error': grouped['scale_error'].mean(),
        'mean_rotation_error': grouped['rotation_error'].mean(),
        'mean_translation_error': grouped['translation_error'].mean(),
        'mean_overlap_error': grouped['overlap_error'].mean(),
        'monotone_violations': grouped['violation'].sum(),
    }).reindex(algorithms)
    summary.index.name = 'algorithm'
    return summary.reset_index()[columns]


def export_experiment(outcome: ExperimentOutcome, output_dir: Optional[str] = None) -> Dict[str, str]:
    """写出 records.csv、summary.csv、summary.json、traces.csv，返回各文件路径"""
    output_dir = output_dir or outcome.spec.output_dir
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        name: os.path.join(output_dir, name)
        for name in ('records.csv', 'summary.csv', 'summary.json', 'traces.csv')
    }

    outcome.records_frame().to_csv(paths['records.csv'], index=False, float_format='%.17g')
    outcome.summary.to_csv(paths['summary.csv'], index=False, float_format='%.17g')
    outcome.traces.to_csv(paths['traces.csv'], index=False, float_format='%.17g')

    summary = {
        'spec': outcome.spec.model_dump(mode='json', by_alias=True),
        'summary': json.loads(outcome.summary.to_json(orient='records')),
    }
    with open(paths['summary.json'], 'w', encoding='utf-8') as f:
        json.dump(summary, f, ensure_ascii=False, indent=2)

    logger.info(f'实验结果已写入 {output_dir}')
    return paths


_TUPLE_KEYS = ('scale_range', 'rotation_range', 'translation_range', 'narrow_bounds', 'wide_bounds')


def parse_spec(values: Dict[str, Optional[str]]) -> ExperimentSpec:
    """把扁平的 key=value 字典转换为 ExperimentSpec，列表值用逗号分隔"""
    known = set(ExperimentSpec.model_fields) | {'lambda'}
    data: Dict[str, object] = {}
    for raw_key, raw_value in values.items():
        key = raw_key.strip().lower()
        if key not in known:
            raise ExperimentSpecError(f'未知配置项: {raw_key}')
        if raw_value is None or raw_value.strip() == '':
            continue
        value = raw_value.strip()
        if key in _TUPLE_KEYS:
            data[key] = tuple(part.strip() for part in value.split(','))
        elif key == 'algorithms':
            data[key] = [part.strip() for part in value.split(',') if part.strip()]
        else:
            data[key] = value
    try:
        return ExperimentSpec(**data)
    except ValidationError as e:
        raise ExperimentSpecError(f'实验配置不合法: {e}')


def load_spec(path: str) -> ExperimentSpec:
    if not os.path.exists(path):
        raise ExperimentSpecError(f'配置文件不存在: {path}')
    return parse_spec(dotenv_values(path))


class Scenario(NamedTuple):

    name: str
    case: Case
    init: SimilarityTransform
    # 这些算法的最终尺度应落在真值 10% 以内
    holds: Tuple[Algorithm, ...] = (Algorithm.STRIMMED,)


def _scaled_about_center(case: Case, scale_factor: float, angle: float) -> SimilarityTransform:
    # 绕模型中心把真值尺度乘以 scale_factor，旋转再多转 angle
    truth = case.truth
    R = truth.rotation @ rotation_about_z(angle, case.P.dim)
    s = truth.scale * scale_factor
    c = transform_points(truth.inverse(), case.Q.points.mean(axis=0)[None, :])[0]
    return SimilarityTransform(s, R, case.Q.points.mean(axis=0) - s * R @ c)


def collapse_scenarios(seed: int = 0) -> List[Scenario]:
    """
    普通最小二乘尺度会塌缩的构造样例

    far_*: 数据形状中 30% 的点在远处，初始变换取真值。最小二乘尺度被远处的点拉小，
    而尺度裁剪 ICP 在第一次迭代就把这些点裁掉。
    inflated: 同样有远处的点，初始尺度为真值的 5 倍。
    shrunk_rotated: 全重叠，初始尺度为真值的 0.2 倍且多转 1 弧度，数据点缩在模型内部，
    最近点集中到形状最窄处；尺度 ICP 能恢复尺度，尺度裁剪 ICP 可能停在部分重叠上。
    """
    scenarios = []
    for dim, scale in ((2, 2.0), (2, 0.5), (3, 1.5)):
        spec = ExperimentSpec(
            name=f'far_{dim}d_s{scale:g}',
            dim=dim,
            n_points=300,
            scale_range=(scale, scale),
            rotation_range=(0.0, 0.5),
            occlusion=0.3,
            occlusion_mode='displace',
            trials=1,
            seed=seed,
        )
        case = generate_case(spec, 0)
        scenarios.append(Scenario(spec.name, case, case.truth))

    far = scenarios[0].case
    scenarios.append(Scenario('inflated', far, _scaled_about_center(far, 5.0, 0.0)))

    spec = ExperimentSpec(n_points=300, scale_range=(2.0, 2.0), rotation_range=(0.0, 0.5), trials=1, seed=seed)
    case = generate_case(spec, 0)
    scenarios.append(Scenario(
        'shrunk_rotated', case, _scaled_about_center(case, 0.2, 1.0), holds=(Algorithm.SCALING_ICP,),
    ))
    return scenarios



def synthetic_floorplan(size: int = 80, wall: int = 3) -> OccupancyGrid:
    """不对称的室内平面图: 外墙、两段内墙和一个方形障碍，墙外为未知"""
    cells = np.full((size, size), UNKNOWN, dtype=np.int8)
    lo, hi = 5, size - 6
    cells[lo:hi + 1, lo:hi + 1] = OCCUPIED
    cells[lo + wall:hi + 1 - wall, lo + wall:hi + 1 - wall] = FREE

    mid = int(size * 0.375)
    cells[lo:int(size * 0.625), mid:mid + wall] = OCCUPIED
    row = int(size * 0.69)
    cells[row:row + wall, mid:hi + 1] = OCCUPIED
    cells[int(size * 0.19):int(size * 0.29), int(size * 0.56):int(size * 0.66)] = OCCUPIED
    return OccupancyGrid(cells, 1.0)


def synthetic_map_pair(
    cell_ratio: float = 1.25,
    angle: float = 0.1,
    translation: Tuple[float, float] = (6.0, -4.0),
    size: int = 80,
) -> Tuple[OccupancyGrid, OccupancyGrid, SimilarityTransform]:
    """
    同一场景在两套栅格下的地图

    other 的栅格边长是 reference 的 cell_ratio 倍，两张图都按分辨率 1.0 读取，
    返回的真值变换把 other 坐标映射到 reference 坐标，尺度等于 cell_ratio。
    """
    reference = synthetic_floorplan(size)
    to_other = SimilarityTransform(1.0 / cell_ratio, rotation_about_z(angle, 2), np.array(translation))
    other = resample_grid(reference, to_other, resolution=1.0)
    return reference, other, to_other.inverse()
