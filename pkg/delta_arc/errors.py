"""
診斷訊息與例外類別
所有工作流程步驟共用的錯誤碼、位置與診斷格式
"""

import enum
from dataclasses import dataclass
from typing import List, Optional


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True, order=True)
class Location:
    """檔案中的位置 (行、欄從 1 起算)"""
    file: str = ""
    line: int = 0
    column: int = 0

    def __str__(self) -> str:
        if not self.file:
            return "<unknown>"
        if not self.line:
            return self.file
        return f"{self.file}:{self.line}:{self.column}"


NO_LOCATION = Location()


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    location: Location = NO_LOCATION

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self):
        return (self.location, self.code, self.message)

    def format(self) -> str:
        return f"{self.location}: {self.severity.value} {self.code}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "severity": self.severity.value,
            "code": self.code,
            "message": self.message,
            "file": self.location.file,
            "line": self.location.line,
            "column": self.location.column,
        }


def error(code: str, message: str, location: Location = NO_LOCATION) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, location)


def warning(code: str, message: str, location: Location = NO_LOCATION) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, location)


def sorted_diagnostics(diagnostics) -> List[Diagnostic]:
    """依檔案、行、欄排序，並去除重複項目"""
    return sorted(set(diagnostics), key=Diagnostic.sort_key)


class DeltaArcError(Exception):
    """工具鏈錯誤的基底類別，帶有穩定的錯誤碼"""

    def __init__(self, code: str, message: str, location: Optional[Location] = None,
                 diagnostics: Optional[List[Diagnostic]] = None):
        self.code = code
        self.message = message
        self.location = location or NO_LOCATION
        self.diagnostics = list(diagnostics or [])
        super().__init__(f"{code}: {message}")

    def to_diagnostic(self) -> Diagnostic:
        return error(self.code, self.message, self.location)

    def all_diagnostics(self) -> List[Diagnostic]:
        return sorted_diagnostics(self.diagnostics + [self.to_diagnostic()])


class ParseError(DeltaArcError):
    pass


class TypeHierarchyError(DeltaArcError):
    pass


class AmbiguousMappingError(DeltaArcError):
    def __init__(self, message: str):
        super().__init__("DM-REPLACE-AMBIGUOUS", message)


class ApplicabilityError(DeltaArcError):
    """delta 修改操作無法套用；附帶 delta 名稱與操作位置"""

    def __init__(self, code: str, message: str, location: Optional[Location] = None,
                 delta: Optional[str] = None, op: Optional[str] = None):
        self.delta = delta
        self.op = op
        super().__init__(code, message, location)

    def annotate(self, delta: str, op: str, location: Location) -> "ApplicabilityError":
        prefix = f"delta {delta}, {op}: "
        annotated = ApplicabilityError(self.code, prefix + self.message,
                                       self.location if self.location.file else location,
                                       delta=delta, op=op)
        annotated.diagnostics = self.diagnostics
        return annotated


class OrderingError(DeltaArcError):
    pass


class WellformednessError(DeltaArcError):
    """CheckReport 未通過時由產生流程拋出"""

    def __init__(self, step: str, report):
        self.report = report
        first = next(d for d in report.diagnostics if d.is_error)
        super().__init__(first.code, f"{step}: {first.message}", first.location,
                         diagnostics=report.diagnostics)


class GenerationError(DeltaArcError):
    pass


class MetricsError(DeltaArcError):
    pass


class ConfigError(DeltaArcError):
    def __init__(self, message: str):
        super().__init__("CFG-INVALID", message)
