from typing import Any, Optional


class ScaleRegError(Exception):

    def __init__(self, ename: str, evalue: str) -> None:
        super().__init__(f"{ename}: {evalue}")
        self.ename = ename
        self.evalue = evalue

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.ename, self.evalue)

    def __str__(self) -> str:
        return f"{self.ename}: {self.evalue}"


class DimensionError(ScaleRegError):

    def __init__(self, evalue: str, ename: str = 'DimensionError') -> None:
        super().__init__(ename, evalue)

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.ename)


class EmptyPointSetError(ScaleRegError):

    def __init__(self, evalue: str = '点集不能为空', ename: str = 'EmptyPointSetError') -> None:
        super().__init__(ename, evalue)

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.ename)


class InvalidTransformError(ScaleRegError):

    def __init__(self, evalue: str, ename: str = 'InvalidTransformError') -> None:
        super().__init__(ename, evalue)

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.ename)


class DegenerateScaleError(ScaleRegError):
    """尺度估计的分母不为正，当前旋转与点集反相关或几何退化"""

    def __init__(self, evalue: str, iteration: Optional[int] = None) -> None:
        super().__init__('DegenerateScaleError', evalue)
        self.iteration = iteration

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.iteration)

    def __str__(self) -> str:
        if self.iteration is not None:
            return f"{self.ename}: 第 {self.iteration} 次迭代: {self.evalue}"
        return f"{self.ename}: {self.evalue}"


class PointSetFormatError(ScaleRegError):

    def __init__(self, evalue: str, path: str = '') -> None:
        super().__init__('PointSetFormatError', evalue)
        self.path = path

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.path)

    def __str__(self) -> str:
        if self.path:
            return f"{self.ename}: {self.path}: {self.evalue}"
        return f"{self.ename}: {self.evalue}"


class PgmParseError(ScaleRegError):

    def __init__(self, evalue: str, offset: int) -> None:
        super().__init__('PgmParseError', evalue)
        self.offset = offset

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.offset)

    def __str__(self) -> str:
        return f"{self.ename}: 字节偏移 {self.offset}: {self.evalue}"


class EmptyEdgeError(ScaleRegError):

    def __init__(self, evalue: str = '栅格地图中没有占用栅格') -> None:
        super().__init__('EmptyEdgeError', evalue)

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue,)


class MergeRejected(ScaleRegError):
    """合并结果未通过残差检查，report 附带配准结果"""

    def __init__(self, evalue: str, report: Any = None) -> None:
        super().__init__('MergeRejected', evalue)
        self.report = report

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue, self.report)


class ExperimentSpecError(ScaleRegError):

    def __init__(self, evalue: str) -> None:
        super().__init__('ExperimentSpecError', evalue)

    def __reduce__(self) -> tuple[Any, ...]:
        return type(self), (self.evalue,)
