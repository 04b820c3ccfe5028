from typing import Any, Dict, Optional

from scalereg.harness import export_experiment, load_spec, run_experiment
from scalereg.pipeline import Pipeline, PipelineData


class BenchPipeline(Pipeline):
    """读取实验配置，运行蒙特卡洛试验并导出结果"""

    def __init__(
        self,
        spec_path: str,
        overrides: Optional[Dict[str, Any]] = None,
        max_concurrency: Optional[int] = None,
    ):
        super().__init__(pipeline_id='bench')
        self.spec_path = spec_path
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.max_concurrency = max_concurrency

    def _load(self, pipeline_data: PipelineData) -> PipelineData:
        spec = load_spec(self.spec_path)
        if self.overrides:
            # 经过校验重新构造，覆盖项同样受约束
            spec = type(spec)(**{**spec.model_dump(), **self.overrides})
        pipeline_data.set('spec', spec)
        return pipeline_data

    def _run(self, pipeline_data: PipelineData) -> PipelineData:
        pipeline_data.set('outcome', run_experiment(pipeline_data.get('spec'), self.max_concurrency))
        return pipeline_data

    def _export(self, pipeline_data: PipelineData) -> PipelineData:
        pipeline_data.set('paths', export_experiment(pipeline_data.get('outcome')))
        return pipeline_data

    def run(self) -> PipelineData:
        pipeline_data = PipelineData()
        pipeline_data = self._time_execution(self._load, component_name='load', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._run, component_name='experiment', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._export, component_name='export', pipeline_data=pipeline_data)
        return pipeline_data
