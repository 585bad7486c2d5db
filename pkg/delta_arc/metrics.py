"""
模型規模指標
以非空白、非純註解的行數 (LOC) 統計核心模型與 delta 模型
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence

from .errors import MetricsError
from .frontend import source_files

logger = logging.getLogger(__name__)


def count_loc(text: str) -> int:
    """計算含有程式碼的行數；// 與 /* */ 註解及空白行不計"""
    count = 0
    in_block = False
    for line in text.splitlines():
        has_code = False
        in_string = False
        i = 0
        while i < len(line):
            ch = line[i]
            pair = line[i:i + 2]
            if in_block:
                if pair == "*/":
                    in_block = False
                    i += 2
                    continue
            elif in_string:
                has_code = True
                if ch == "\\":
                    i += 2
                    continue
                if ch == '"':
                    in_string = False
            elif pair == "//":
                break
            elif pair == "/*":
                in_block = True
                i += 2
                continue
            elif not ch.isspace():
                has_code = True
                if ch == '"':
                    in_string = True
            i += 1
        if has_code:
            count += 1
    return count


@dataclass(frozen=True)
class MetricsRow:
    corpus: str
    total_loc: int
    file_count: int
    max_loc: int
    avg_loc: float
    rel_vc: float

    @classmethod
    def from_counts(cls, corpus: str, loc: Sequence[int], delta_loc: int) -> "MetricsRow":
        total = sum(loc)
        return cls(
            corpus=corpus,
            total_loc=total,
            file_count=len(loc),
            max_loc=max(loc, default=0),
            avg_loc=round(total / len(loc), 2) if loc else 0.0,
            rel_vc=relative_variability(delta_loc, total),
        )

    def to_dict(self) -> dict:
        return {
            "totalLOC": self.total_loc,
            "fileCount": self.file_count,
            "maxLOC": self.max_loc,
            "avgLOC": self.avg_loc,
            "relVC": self.rel_vc,
        }


def relative_variability(delta_loc: int, total_loc: int) -> float:
    """delta 模型行數佔總行數的百分比 (兩位小數)"""
    if total_loc == 0:
        return 0.0
    return round(100.0 * delta_loc / total_loc, 2)


@dataclass(frozen=True)
class MetricsReport:
    core: MetricsRow
    deltas: MetricsRow
    combined: MetricsRow

    @property
    def rows(self) -> List[MetricsRow]:
        return [self.core, self.deltas, self.combined]

    def to_dict(self) -> dict:
        return {row.corpus: row.to_dict() for row in self.rows}

    def format_table(self) -> str:
        header = f"{'corpus':<10} {'LOC':>6} {'# Files':>8} {'max. LOC':>9} {'avg. LOC':>9} {'rel. VC':>8}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(f"{row.corpus:<10} {row.total_loc:>6} {row.file_count:>8} {row.max_loc:>9} "
                         f"{row.avg_loc:>9.2f} {row.rel_vc:>7.2f}%")
        return "\n".join(lines)

    def format_pairs(self) -> str:
        return "\n".join(f"{row.corpus}.{key}={value}"
                         for row in self.rows for key, value in row.to_dict().items())


def metrics_from_counts(core_loc: Sequence[int], delta_loc: Sequence[int]) -> MetricsReport:
    if not core_loc and not delta_loc:
        raise MetricsError("METRICS-EMPTY", "沒有可統計的模型檔案")
    deltas_total = sum(delta_loc)
    return MetricsReport(
        core=MetricsRow.from_counts("core", core_loc, 0),
        deltas=MetricsRow.from_counts("deltas", delta_loc, deltas_total),
        combined=MetricsRow.from_counts("combined", list(core_loc) + list(delta_loc), deltas_total),
    )


def _loc_of(paths) -> List[int]:
    return [count_loc(p.read_text(encoding="utf-8")) for p in paths]


def compute_metrics(core_dirs: Iterable, delta_dir) -> MetricsReport:
    core_files = source_files(core_dirs, [".arc"])
    delta_files = source_files([delta_dir], [".delta"])
    report = metrics_from_counts(_loc_of(core_files), _loc_of(delta_files))
    logger.info(f"指標: {len(core_files)} 個核心檔案, {len(delta_files)} 個 delta 檔案")
    return report
