import json
import os
from typing import Optional

import pandas as pd
from loguru import logger

from scalereg.pipeline import Pipeline, PipelineData, parse_init
from scalereg.pointio import read_points
from scalereg.registration.baselines import initial_transform, run_bounded_tricp
from scalereg.registration.scaling_icp import run_scaling_icp
from scalereg.registration.schema import (
    RegistrationResult,
    ScaleBounds,
    SolverConfig,
    TrimConfig,
    TrimmedResult,
)
from scalereg.registration.trimmed import run_strimmed_icp


INIT_KEYWORDS = ('identity', 'centroid', 'pca', 'axes')


def trace_frame(result: RegistrationResult) -> pd.DataFrame:
    df = pd.DataFrame({
        'iteration': range(1, result.iterations + 1),
        'objective': result.objective_trace,
        'scale': result.scale_trace,
    })
    if isinstance(result, TrimmedResult):
        df['psi'] = result.psi_trace
        df['overlap'] = result.overlap_trace
    return df


def write_result(result: RegistrationResult, output: str, trace_output: Optional[str]) -> None:
    payload = result.model_dump(mode='json', exclude={'chain_trace'})
    payload['matrix'] = result.transform.as_matrix().tolist()
    directory = os.path.dirname(output)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)
    if trace_output:
        trace_frame(result).to_csv(trace_output, index=False, float_format='%.17g')


class RegisterPipeline(Pipeline):
    """
    两个点集文件的配准: 读取、初始化、配准、导出

    trimmed=False 时运行尺度 ICP，True 时运行尺度裁剪 ICP；给出 bounds 时运行有界尺度基线
    """

    def __init__(
        self,
        data_path: str,
        model_path: str,
        output: str,
        trace_output: Optional[str] = None,
        init: str = 'identity',
        cfg: Optional[SolverConfig] = None,
        trimmed: bool = False,
        bounds: Optional[ScaleBounds] = None,
    ):
        super().__init__(pipeline_id='trim-register' if trimmed else 'register')
        self.data_path = data_path
        self.model_path = model_path
        self.output = output
        self.trace_output = trace_output
        self.init = init
        self.trimmed = trimmed
        self.bounds = bounds
        self.cfg = cfg or (TrimConfig() if trimmed else SolverConfig())

    def _load(self, pipeline_data: PipelineData) -> PipelineData:
        pipeline_data.set('P', read_points(self.data_path))
        pipeline_data.set('Q', read_points(self.model_path))
        return pipeline_data

    def _initialize(self, pipeline_data: PipelineData) -> PipelineData:
        P, Q = pipeline_data.get('P'), pipeline_data.get('Q')
        if self.init in INIT_KEYWORDS:
            T0 = initial_transform(P, Q, self.init)
        else:
            T0 = parse_init(self.init, P.dim)
        logger.info(f'初始变换: 尺度 {T0.scale:.6f}, 平移 {T0.translation.tolist()}')
        pipeline_data.set('initial_transform', T0)
        return pipeline_data

    def _register(self, pipeline_data: PipelineData) -> PipelineData:
        P, Q = pipeline_data.get('P'), pipeline_data.get('Q')
        cfg = self.cfg.model_copy(update={'initial_transform': pipeline_data.get('initial_transform')})
        if not self.trimmed:
            result = run_scaling_icp(P, Q, cfg)
        elif self.bounds is not None:
            result = run_bounded_tricp(P, Q, cfg, self.bounds)
        else:
            result = run_strimmed_icp(P, Q, cfg)
        pipeline_data.set('result', result)
        return pipeline_data

    def _export(self, pipeline_data: PipelineData) -> PipelineData:
        write_result(pipeline_data.get('result'), self.output, self.trace_output)
        return pipeline_data

    def run(self) -> PipelineData:
        pipeline_data = PipelineData()
        pipeline_data = self._time_execution(self._load, component_name='load', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._initialize, component_name='initialize', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._register, component_name='register', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._export, component_name='export', pipeline_data=pipeline_data)
        return pipeline_data
