"""
情境條件檢查
local: 每個 delta 套用後，只檢查受影響的元素
full: 核心模型與最終產品的完整檢查
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Optional, Set, Tuple

from .errors import Diagnostic, DeltaArcError, error, sorted_diagnostics, warning
from .model import (ArgKind, ComponentDefinition, ModelRepository, PortRef,
                    effective_connectors, is_source, is_target, resolve_autoconnect,
                    resolve_port, type_conforms, unresolved_subcomponents)

logger = logging.getLogger(__name__)

# 元素識別: ("port", 名稱) / ("subcomponent", 名稱) / ("parameter", 名稱) / ("connector", 來源, 目標)
Element = Tuple


@dataclass(frozen=True)
class CheckReport:
    diagnostics: Tuple[Diagnostic, ...] = ()

    @property
    def passed(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)

    @property
    def errors(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    @property
    def warnings(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if not d.is_error]

    def merge(self, other: "CheckReport") -> "CheckReport":
        return report_of(self.diagnostics + other.diagnostics)


def report_of(diagnostics: Iterable[Diagnostic]) -> CheckReport:
    return CheckReport(tuple(sorted_diagnostics(diagnostics)))


def all_elements(c: ComponentDefinition) -> Set[Element]:
    elements: Set[Element] = set()
    elements.update(("port", p.name) for p in c.ports)
    elements.update(("subcomponent", s.name) for s in c.subcomponents)
    elements.update(("parameter", p.name) for p in c.parameters)
    elements.update(("connector", conn.source, conn.target) for conn in c.connectors)
    return elements


def _endpoint_problem(c: ComponentDefinition, ref: PortRef, as_source: bool,
                      repo: Optional[ModelRepository]) -> Optional[str]:
    if ref.owner is not None:
        sub = c.subcomponent(ref.owner)
        if sub is None:
            return f"子元件 {ref.owner} 不存在"
        if repo is None or sub.component_type not in repo:
            return None
    port = resolve_port(c, ref, repo) if repo is not None else c.port(ref.port)
    if port is None:
        return f"埠 {ref} 不存在"
    if as_source and not is_source(ref, port):
        return f"{ref} 不能作為資料流來源"
    if not as_source and not is_target(ref, port):
        return f"{ref} 不能作為資料流目標"
    return None


def check_local(c: ComponentDefinition, touched: Iterable[Element],
                repo: Optional[ModelRepository] = None) -> CheckReport:
    """只對 touched 中的元素檢查命名、唯一性與連接器"""
    touched = set(touched)
    diagnostics: List[Diagnostic] = []
    port_counts = Counter(p.name for p in c.ports)
    sub_counts = Counter(s.name for s in c.subcomponents)
    param_counts = Counter(p.name for p in c.parameters)
    conn_counts = Counter(conn.key for conn in c.connectors)
    fan_in = Counter(conn.target for conn in c.connectors)

    for port in c.ports:
        if ("port", port.name) not in touched:
            continue
        if not port.name[0].islower():
            diagnostics.append(error("CC-PORT-LOWER",
                                     f"元件 {c.name}: 埠名稱 {port.name} 必須以小寫字母開頭",
                                     port.location))
        if port_counts[port.name] > 1:
            diagnostics.append(error("CC-NAME-UNIQUE",
                                     f"元件 {c.name}: 埠名稱 {port.name} 重複", port.location))

    for sub in c.subcomponents:
        if ("subcomponent", sub.name) in touched and sub_counts[sub.name] > 1:
            diagnostics.append(error("CC-NAME-UNIQUE",
                                     f"元件 {c.name}: 子元件名稱 {sub.name} 重複", sub.location))

    for param in c.parameters:
        if ("parameter", param.name) in touched and param_counts[param.name] > 1:
            diagnostics.append(error("CC-NAME-UNIQUE",
                                     f"元件 {c.name}: 參數名稱 {param.name} 重複", param.location))

    for conn in c.connectors:
        if ("connector", conn.source, conn.target) not in touched:
            continue
        for ref, as_source in ((conn.source, True), (conn.target, False)):
            problem = _endpoint_problem(c, ref, as_source, repo)
            if problem:
                diagnostics.append(error("CC-CONN-RESOLVE",
                                         f"元件 {c.name}: 連接器 {conn}: {problem}", conn.location))
        if conn_counts[conn.key] > 1:
            diagnostics.append(error("CC-CONN-DUP",
                                     f"元件 {c.name}: 連接器 {conn} 重複", conn.location))
        elif fan_in[conn.target] > 1:
            diagnostics.append(error("CC-CONN-FANIN",
                                     f"元件 {c.name}: 目標 {conn.target} 有多個輸入連接器",
                                     conn.location))
    return report_of(diagnostics)


def _decomposition_cycles(repo: ModelRepository) -> List[Diagnostic]:
    graph = {name: sorted({s.component_type for s in c.subcomponents if s.component_type in repo})
             for name, c in repo.components.items()}
    diagnostics = []
    reported = set()

    def walk(node, path):
        for nxt in graph[node]:
            if nxt in path:
                cycle = path[path.index(nxt):] + [nxt]
                key = frozenset(cycle)
                if key not in reported:
                    reported.add(key)
                    first = repo.get(cycle[0])
                    diagnostics.append(error("CC-DECOMP-CYCLE",
                                             f"元件分解存在循環: {' -> '.join(cycle)}",
                                             first.location))
            elif nxt not in done:
                walk(nxt, path + [nxt])
        done.add(node)

    done: Set[str] = set()
    for name in sorted(graph):
        if name not in done:
            walk(name, [name])
    return diagnostics


def _check_component_full(c: ComponentDefinition, repo: ModelRepository) -> List[Diagnostic]:
    diagnostics = list(check_local(c, all_elements(c), repo).diagnostics)
    declared = {p.name for p in c.parameters}

    for sub in c.subcomponents:
        definition = repo.get(sub.component_type)
        if definition is None:
            diagnostics.append(error("CC-TYPE-RESOLVE",
                                     f"元件 {c.name}: 子元件 {sub.name} 的型別 {sub.component_type} 不存在",
                                     sub.location))
        elif len(sub.args) != len(definition.parameters):
            diagnostics.append(error("CC-ARG-COUNT",
                                     f"元件 {c.name}: 子元件 {sub.name} 需要 {len(definition.parameters)} 個參數，"
                                     f"實際 {len(sub.args)} 個", sub.location))
        for arg in sub.args:
            if arg.kind is ArgKind.PARAM and arg.value not in declared:
                diagnostics.append(error("CC-ARG-PARAM",
                                         f"元件 {c.name}: 子元件 {sub.name} 引用了未宣告的參數 {arg.value}",
                                         sub.location))

    if unresolved_subcomponents(c, repo):
        return diagnostics

    for conn in c.connectors:
        source = resolve_port(c, conn.source, repo)
        target = resolve_port(c, conn.target, repo)
        if source is None or target is None:
            continue
        if not type_conforms(source.data_type, target.data_type, repo.types):
            diagnostics.append(error("CC-CONN-TYPE",
                                     f"元件 {c.name}: 連接器 {conn} 的型別 {source.data_type} "
                                     f"不相容於 {target.data_type}", conn.location))

    resolve_autoconnect(c, repo, diagnostics)
    if c.is_decomposed:
        diagnostics.extend(_unconnected(c, repo))
    return diagnostics


def _unconnected(c: ComponentDefinition, repo: ModelRepository) -> List[Diagnostic]:
    used = set()
    for conn in effective_connectors(c, repo):
        used.add(conn.source)
        used.add(conn.target)
    refs = [PortRef(None, p.name) for p in c.ports]
    for sub in c.subcomponents:
        refs.extend(PortRef(sub.name, p.name) for p in repo.get(sub.component_type).ports)
    return [warning("CC-PORT-UNCONNECTED", f"元件 {c.name}: 埠 {ref} 沒有任何連接器", c.location)
            for ref in refs if ref not in used]


def check_full(repo: ModelRepository) -> CheckReport:
    """所有元件的完整情境條件"""
    diagnostics: List[Diagnostic] = []
    for name in repo.names():
        try:
            diagnostics.extend(_check_component_full(repo.get(name), repo))
        except DeltaArcError as e:
            diagnostics.append(e.to_diagnostic())
    diagnostics.extend(_decomposition_cycles(repo))
    report = report_of(diagnostics)
    logger.info(f"完整檢查: {len(report.errors)} 個錯誤, {len(report.warnings)} 個警告")
    return report
