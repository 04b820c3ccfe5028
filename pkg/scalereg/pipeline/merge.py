import json
import os
from typing import Optional, Sequence

from loguru import logger

from scalereg.gridmap import load_pgm, save_pgm
from scalereg.mapmerge import merge_maps
from scalereg.pipeline import Pipeline, PipelineData, parse_init
from scalereg.registration.exceptions import MergeRejected
from scalereg.registration.schema import MergeConfig, MergeReport, TrimConfig


def write_report(report: MergeReport, path: str, status: str = 'merged') -> None:
    payload = report.model_dump(mode='json')
    payload['status'] = status
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)


class MergePipeline(Pipeline):
    """两张 PGM 地图合并为一张，输出合并地图和报告"""

    def __init__(
        self,
        reference_path: str,
        other_path: str,
        output: str,
        report_output: str,
        cfg: Optional[TrimConfig] = None,
        merge_cfg: Optional[MergeConfig] = None,
        init: Optional[str] = None,
        resolutions: Sequence[float] = (1.0, 1.0),
        binary: bool = True,
    ):
        super().__init__(pipeline_id='merge-maps')
        self.reference_path = reference_path
        self.other_path = other_path
        self.output = output
        self.report_output = report_output
        self.cfg = cfg or TrimConfig()
        self.merge_cfg = merge_cfg or MergeConfig()
        self.init = init
        self.resolutions = resolutions
        self.binary = binary

    def _load(self, pipeline_data: PipelineData) -> PipelineData:
        thresholds = dict(occ_thresh=self.merge_cfg.occ_thresh, free_thresh=self.merge_cfg.free_thresh)
        pipeline_data.set('reference', load_pgm(self.reference_path, resolution=self.resolutions[0], **thresholds))
        pipeline_data.set('other', load_pgm(self.other_path, resolution=self.resolutions[1], **thresholds))
        return pipeline_data

    def _merge(self, pipeline_data: PipelineData) -> PipelineData:
        init = parse_init(self.init, 2) if self.init else None
        try:
            merged, report = merge_maps(
                pipeline_data.get('reference'),
                pipeline_data.get('other'),
                cfg=self.cfg,
                init=init,
                merge_cfg=self.merge_cfg,
            )
        except MergeRejected as e:
            if e.report is not None:
                write_report(e.report, self.report_output, status='rejected')
                logger.info(f'被拒绝的合并报告已写入 {self.report_output}')
            raise
        pipeline_data.set('merged', merged)
        pipeline_data.set('report', report)
        return pipeline_data

    def _export(self, pipeline_data: PipelineData) -> PipelineData:
        save_pgm(pipeline_data.get('merged'), self.output, binary=self.binary)
        write_report(pipeline_data.get('report'), self.report_output)
        return pipeline_data

    def run(self) -> PipelineData:
        pipeline_data = PipelineData()
        pipeline_data = self._time_execution(self._load, component_name='load', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._merge, component_name='merge', pipeline_data=pipeline_data)
        pipeline_data = self._time_execution(self._export, component_name='export', pipeline_data=pipeline_data)
        return pipeline_data
