"""
產品產生流程
1. 載入核心模型並做完整檢查
2. 載入產品組態與 delta，計算套用順序
3. 依序套用 delta (每個 delta 後做局部檢查)
4. 完整檢查結果並列印為 .arc 檔案
"""

import logging
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import psutil

from .delta_engine import DeltaModel, apply_delta
from .errors import GenerationError, Location, WellformednessError
from .frontend import load_components, load_config, load_deltas, load_types, pretty_print
from .model import ModelRepository
from .ordering import DEFAULT_SEARCH_LIMIT, ApplicationOrder, compute_order, foreign_references
from .wellformedness import CheckReport, check_full, report_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DerivationRequest:
    core_dirs: Tuple[str, ...]
    delta_dir: str
    config_file: str
    output_dir: str
    types_file: Optional[str] = None
    order_strategy: str = "config"
    search_limit: int = DEFAULT_SEARCH_LIMIT

    def validate(self) -> None:
        for directory in self.core_dirs + (self.delta_dir,):
            if not Path(directory).is_dir():
                raise GenerationError("GEN-IO", f"目錄不存在: {directory}", Location(str(directory)))
        for path in (self.config_file, self.types_file):
            if path is not None and not Path(path).is_file():
                raise GenerationError("GEN-IO", f"檔案不存在: {path}", Location(str(path)))


@dataclass
class DerivationResult:
    repository: ModelRepository
    order: ApplicationOrder
    reports: List[Tuple[str, CheckReport]] = field(default_factory=list)
    emitted: List[Path] = field(default_factory=list)
    stats: Dict[str, float] = field(default_factory=dict)

    @property
    def warnings(self):
        return [d for _, report in self.reports for d in report.warnings]


def structural_equal(a: ModelRepository, b: ModelRepository) -> bool:
    """忽略埠、子元件、連接器的宣告順序"""
    if a.names() != b.names():
        return False
    return all(a.get(name).canonical() == b.get(name).canonical() for name in a.names())


def check_core(repo: ModelRepository) -> CheckReport:
    report = check_full(repo)
    if not report.passed:
        raise WellformednessError("核心模型", report)
    return report


def apply_deltas(repo: ModelRepository, deltas: Mapping[str, DeltaModel],
                 order: Sequence[str]) -> Tuple[ModelRepository, List[Tuple[str, CheckReport]]]:
    reports = []
    for name in order:
        repo, report = apply_delta(repo, deltas[name])
        reports.append((f"delta {name}", report))
    return repo, reports


def check_product(repo: ModelRepository) -> CheckReport:
    report = check_full(repo)
    if not report.passed:
        raise WellformednessError("產品模型", report)
    return report


def render(repo: ModelRepository) -> Dict[str, str]:
    """元件名稱 -> 正規化文字"""
    return {name: pretty_print(repo.get(name)) for name in repo.names()}


def emit(texts: Mapping[str, str], output_dir) -> List[Path]:
    """先寫入同層的暫存目錄，完成後再換上；舊的 .arc 會被移除，其他檔案保留"""
    out = Path(output_dir)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    except OSError as e:
        raise GenerationError("GEN-IO", f"無法寫入輸出目錄 {out}: {e.strerror or e}", Location(str(out)))
    try:
        for name in sorted(texts):
            (staging / f"{name}.arc").write_text(texts[name], encoding="utf-8")
        _swap_in(staging, out)
    except OSError as e:
        shutil.rmtree(staging, ignore_errors=True)
        raise GenerationError("GEN-IO", f"無法寫入輸出目錄 {out}: {e.strerror or e}", Location(str(out)))
    return [out / f"{name}.arc" for name in sorted(texts)]


def _swap_in(staging: Path, out: Path) -> None:
    if not out.exists():
        staging.rename(out)
        return
    previous = out.with_name(f"{staging.name}.old")
    out.rename(previous)
    try:
        staging.rename(out)
    except OSError:
        previous.rename(out)
        raise
    for kept in previous.iterdir():
        if kept.suffix != ".arc":
            shutil.move(str(kept), str(out / kept.name))
    shutil.rmtree(previous, ignore_errors=True)


def _resource_stats(started: float) -> Dict[str, float]:
    memory = psutil.Process().memory_info()
    return {
        "elapsed_seconds": round(time.perf_counter() - started, 4),
        "rss_megabytes": round(memory.rss / (1024 ** 2), 2),
    }


def derive_product(req: DerivationRequest) -> DerivationResult:
    """四個步驟依序執行；任何錯誤都會中止，且不會寫出部分產品"""
    started = time.perf_counter()
    req.validate()

    logger.info("步驟 1: 載入核心模型")
    components = load_components(req.core_dirs)
    repo = ModelRepository.build(components, load_types(req.types_file))
    reports = [("核心模型", check_core(repo))]

    logger.info("步驟 2: 計算套用順序")
    config = load_config(req.config_file)
    deltas = load_deltas(req.delta_dir)
    missing = [name for name in config.deltas if name not in deltas]
    if missing:
        raise GenerationError("GEN-DELTA-MISSING",
                              f"組態 {config.name} 列出的 delta 找不到對應檔案: {', '.join(missing)}",
                              config.location)
    order = compute_order(config, deltas, req.order_strategy, req.search_limit)
    reports.append(("套用順序", report_of(foreign_references(config, deltas))))

    logger.info("步驟 3: 套用 delta")
    repo, delta_reports = apply_deltas(repo, deltas, order.deltas)
    reports.extend(delta_reports)

    logger.info("步驟 4: 檢查並輸出產品")
    reports.append(("產品模型", check_product(repo)))
    emitted = emit(render(repo), req.output_dir)

    stats = _resource_stats(started)
    logger.info(f"產生完成: {len(emitted)} 個檔案, 耗時 {stats['elapsed_seconds']}s, "
                f"記憶體 {stats['rss_megabytes']} MB")
    return DerivationResult(repo, order, reports, emitted, stats)
