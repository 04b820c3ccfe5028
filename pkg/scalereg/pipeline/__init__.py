import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from scalereg.registration.core import SimilarityTransform
from scalereg.registration.utils import rotation_about_z


class PipelineData:

    def __init__(self, data: Optional[Dict[str, Any]] = None):
        self.data = dict(data or {})

    def get(self, key: str, default: Any = None) -> Any:
        return self.data.get(key, default)

    def set(self, key: str, value: Any) -> None:
        self.data[key] = value


class Pipeline:
    """按阶段执行，记录每个阶段的耗时"""

    def __init__(self, pipeline_id: str):
        self.pipeline_id = pipeline_id
        self.metrics: List[Dict[str, Any]] = []

    def log_component_metrics(self, component_name: str, execution_time: float) -> None:
        self.metrics.append({'component': component_name, 'execution_time': execution_time})
        logger.info(f'[{self.pipeline_id}] {component_name} 耗时 {execution_time:.6f} 秒')

    def _time_execution(self, func: Callable, component_name: str, *args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed_time = time.perf_counter() - start_time

        self.log_component_metrics(component_name=component_name, execution_time=elapsed_time)
        return result

    def run(self) -> PipelineData:
        raise NotImplementedError


def parse_floats(text: str, name: str) -> List[float]:
    try:
        return [float(part) for part in text.split(',')]
    except ValueError:
        raise ValueError(f'{name} 需要逗号分隔的数字，实际为 {text!r}')


def parse_pair(text: str, name: str) -> Tuple[float, float]:
    values = parse_floats(text, name)
    if len(values) != 2:
        raise ValueError(f'{name} 需要两个数字，实际为 {text!r}')
    return values[0], values[1]


def parse_init(text: str, dim: int) -> SimilarityTransform:
    """
    解析 --init s,rot,tx,ty[,tz]

    rot 为绕 z 轴的转角，单位: 弧度；平移分量个数必须等于维数
    """
    values = parse_floats(text, '--init')
    if len(values) != 2 + dim:
        raise ValueError(f'--init 在 {dim} 维下需要 {2 + dim} 个数字 (s,rot,平移)，实际 {len(values)} 个')
    s, rot = values[0], values[1]
    return SimilarityTransform(s, rotation_about_z(rot, dim), np.array(values[2:]))
