"""
delta 套用引擎
實作所有修改操作與其可套用性檢查，包含重新命名的傳播、replace 的重新接線、
autoconnect 的展開/引入，以及兩階段的不可達元素移除
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from .errors import (AmbiguousMappingError, ApplicabilityError, DeltaArcError, Location,
                     NO_LOCATION, WellformednessError)
from .model import (AutoconnectMode, ComponentDefinition, ConfigArg, ConnectorDecl,
                    Direction, ModelRepository, ParameterDecl, PortDecl, PortRef, SubcomponentDecl,
                    effective_connectors, interface_compatible, is_source, is_target,
                    resolve_autoconnect, resolve_port, sort_connectors)
from .wellformedness import CheckReport, check_local, report_of

logger = logging.getLogger(__name__)

Touched = Dict[str, Set[tuple]]


# ---------------------------------------------------------------------------
# 修改操作

@dataclass(frozen=True)
class AddPort:
    port: PortDecl
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"add port {self.port.direction.value} {self.port.data_type} {self.port.name}"


@dataclass(frozen=True)
class AddSubcomponent:
    subcomponent: SubcomponentDecl
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"add component {self.subcomponent.component_type} {self.subcomponent.name}"


@dataclass(frozen=True)
class AddParameter:
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"add parameter {self.name}"


@dataclass(frozen=True)
class SetAutoconnect:
    mode: AutoconnectMode
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"add autoconnect {self.mode.value}"


@dataclass(frozen=True)
class RemovePort:
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"remove port {self.name}"


@dataclass(frozen=True)
class RemoveSubcomponent:
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"remove component {self.name}"


@dataclass(frozen=True)
class RemoveParameter:
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"remove parameter {self.name}"


@dataclass(frozen=True)
class Connect:
    connector: ConnectorDecl
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"connect {self.connector}"


@dataclass(frozen=True)
class Disconnect:
    source: PortRef
    target: PortRef
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"disconnect {self.source} -> {self.target}"


RENAME_KINDS = ("port", "component", "parameter")


@dataclass(frozen=True)
class Rename:
    kind: str
    old: str
    new: str
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"rename {self.kind} {self.old} as {self.new}"


@dataclass(frozen=True)
class Replace:
    old: str
    with_type: str
    new_name: Optional[str] = None
    args: Optional[Tuple[ConfigArg, ...]] = None
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        text = f"replace component {self.old} with {self.with_type}"
        return f"{text} {self.new_name}" if self.new_name else text


@dataclass(frozen=True)
class ModifyConfig:
    subcomponent: str
    assignments: Tuple[Tuple[str, ConfigArg], ...]
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        text = ", ".join(f"{name}={arg.render()}" for name, arg in self.assignments)
        return f"modify component {self.subcomponent}({text})"


@dataclass(frozen=True)
class ExpandAutoconnect:
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return "expand autoconnect"


@dataclass(frozen=True)
class IntroduceAutoconnect:
    mode: AutoconnectMode
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return f"introduce autoconnect {self.mode.value}"


@dataclass(frozen=True)
class RemoveUnreachable:
    location: Location = field(default=NO_LOCATION, compare=False)

    def describe(self) -> str:
        return "remove unreachable"


ModificationOp = Union[AddPort, AddSubcomponent, AddParameter, SetAutoconnect, RemovePort,
                       RemoveSubcomponent, RemoveParameter, Connect, Disconnect, Rename, Replace,
                       ModifyConfig, ExpandAutoconnect, IntroduceAutoconnect, RemoveUnreachable]

GLOBAL_OPS = (ExpandAutoconnect, IntroduceAutoconnect, RemoveUnreachable)


@dataclass(frozen=True)
class ScopedOp:
    """component 為 None 表示全域操作"""
    component: Optional[str]
    op: ModificationOp


@dataclass(frozen=True)
class DeltaModel:
    name: str
    constraint: object = None
    body: Tuple[ScopedOp, ...] = ()
    location: Location = field(default=NO_LOCATION, compare=False)

    def modified_components(self) -> List[str]:
        return sorted({s.component for s in self.body if s.component is not None})


# ---------------------------------------------------------------------------
# 輔助函式

def _require(repo: ModelRepository, name: str) -> ComponentDefinition:
    c = repo.get(name)
    if c is None:
        raise ApplicabilityError("DM-NO-COMPONENT", f"元件 {name} 不存在")
    return c


def _touch(touched: Touched, component: str, *elements) -> None:
    touched.setdefault(component, set()).update(elements)


def _connector_touches(conn: ConnectorDecl) -> tuple:
    return ("connector", conn.source, conn.target)


def _rewrite_connectors(c: ComponentDefinition, rewrite, touched: Touched) -> ComponentDefinition:
    connectors = []
    for conn in c.connectors:
        source, target = rewrite(conn.source), rewrite(conn.target)
        if (source, target) != conn.key:
            conn = replace(conn, source=source, target=target)
            _touch(touched, c.name, _connector_touches(conn))
        connectors.append(conn)
    return replace(c, connectors=tuple(connectors))


def _drop_parent_connectors(repo: ModelRepository, component_type: str, ports: Set[str],
                            touched: Touched) -> ModelRepository:
    """刪除上層元件中引用已移除埠的顯式連接器"""
    for parent in repo.users_of(component_type):
        owners = {s.name for s in parent.subcomponents if s.component_type == component_type}

        def dead(ref: PortRef) -> bool:
            return ref.owner in owners and ref.port in ports

        kept = tuple(conn for conn in parent.connectors
                     if not dead(conn.source) and not dead(conn.target))
        if len(kept) != len(parent.connectors):
            logger.debug(f"{parent.name}: 刪除 {len(parent.connectors) - len(kept)} 個引用已移除埠的連接器")
            repo = repo.with_component(replace(parent, connectors=kept))
            _touch(touched, parent.name)
    return repo


# ---------------------------------------------------------------------------
# 單一操作

def _add_port(repo, c, op: AddPort, touched):
    if c.port(op.port.name) is not None:
        raise ApplicabilityError("DM-ADD-DUP", f"元件 {c.name} 已包含埠 {op.port.name}")
    _touch(touched, c.name, ("port", op.port.name))
    return repo.with_component(replace(c, ports=c.ports + (op.port,)))


def _add_subcomponent(repo, c, op: AddSubcomponent, touched):
    sub = op.subcomponent
    if c.subcomponent(sub.name) is not None:
        raise ApplicabilityError("DM-ADD-DUP", f"元件 {c.name} 已包含子元件 {sub.name}")
    if sub.component_type not in repo:
        raise ApplicabilityError("DM-TYPE-UNKNOWN", f"元件型別 {sub.component_type} 不存在")
    _touch(touched, c.name, ("subcomponent", sub.name))
    return repo.with_component(replace(c, subcomponents=c.subcomponents + (sub,)))


def _add_parameter(repo, c, op: AddParameter, touched):
    if c.parameter(op.name) is not None:
        raise ApplicabilityError("DM-ADD-DUP", f"元件 {c.name} 已包含參數 {op.name}")
    _touch(touched, c.name, ("parameter", op.name))
    param = ParameterDecl(op.name, op.location)
    return repo.with_component(replace(c, parameters=c.parameters + (param,)))


def _set_autoconnect(repo, c, op: SetAutoconnect, touched):
    _touch(touched, c.name)
    return repo.with_component(replace(c, autoconnect=op.mode))


def _remove_port(repo, c, op: RemovePort, touched):
    if c.port(op.name) is None:
        raise ApplicabilityError("DM-RM-MISSING", f"元件 {c.name} 不包含埠 {op.name}")
    ref = PortRef(None, op.name)
    for conn in c.connectors:
        if ref in conn.key:
            raise ApplicabilityError("DM-RM-PORT-CONNECTED",
                                     f"元件 {c.name} 的連接器 {conn} 仍使用埠 {op.name}")
    for parent in repo.users_of(c.name):
        owners = {s.name for s in parent.subcomponents if s.component_type == c.name}
        for conn in parent.connectors:
            if any(r.owner in owners and r.port == op.name for r in conn.key):
                raise ApplicabilityError("DM-RM-PORT-CONNECTED",
                                         f"元件 {parent.name} 的連接器 {conn} 仍使用埠 {op.name}")
    _touch(touched, c.name)
    return repo.with_component(replace(c, ports=tuple(p for p in c.ports if p.name != op.name)))


def _remove_subcomponent(repo, c, op: RemoveSubcomponent, touched):
    if c.subcomponent(op.name) is None:
        raise ApplicabilityError("DM-RM-MISSING", f"元件 {c.name} 不包含子元件 {op.name}")
    for conn in c.connectors:
        if any(r.owner == op.name for r in conn.key):
            raise ApplicabilityError("DM-RM-SUBC-CONNECTED",
                                     f"元件 {c.name} 的連接器 {conn} 仍使用子元件 {op.name} 的埠")
    _touch(touched, c.name)
    subs = tuple(s for s in c.subcomponents if s.name != op.name)
    return repo.with_component(replace(c, subcomponents=subs))


def _remove_parameter(repo, c, op: RemoveParameter, touched):
    if c.parameter(op.name) is None:
        raise ApplicabilityError("DM-RM-MISSING", f"元件 {c.name} 不包含參數 {op.name}")
    for sub in c.subcomponents:
        if ConfigArg.parameter(op.name) in sub.args:
            raise ApplicabilityError("DM-RM-PARAM-USED",
                                     f"子元件 {sub.name} 的參數仍引用 {op.name}")
    _touch(touched, c.name)
    params = tuple(p for p in c.parameters if p.name != op.name)
    return repo.with_component(replace(c, parameters=params))


def _connect(repo, c, op: Connect, touched):
    conn = op.connector.as_explicit()
    if c.connector(conn.source, conn.target) is not None:
        raise ApplicabilityError("DM-ADD-DUP", f"元件 {c.name} 已包含連接器 {conn}")
    for ref, check, role in ((conn.source, is_source, "來源"), (conn.target, is_target, "目標")):
        if ref.owner is not None and c.subcomponent(ref.owner) is None:
            raise ApplicabilityError("DM-CONN-INVALID",
                                     f"連接器 {conn}: 元件 {c.name} 不包含子元件 {ref.owner}")
        port = resolve_port(c, ref, repo)
        if port is None:
            raise ApplicabilityError("DM-CONN-INVALID", f"連接器 {conn}: 無法解析埠 {ref}")
        if not check(ref, port):
            raise ApplicabilityError("DM-CONN-INVALID", f"連接器 {conn}: {ref} 不能作為{role}")
    if any(existing.target == conn.target for existing in c.connectors):
        raise ApplicabilityError("DM-CONN-INVALID",
                                 f"連接器 {conn}: 目標 {conn.target} 已有輸入連接器")
    if conn.location == NO_LOCATION:
        conn = replace(conn, location=op.location)
    _touch(touched, c.name, _connector_touches(conn))
    return repo.with_component(replace(c, connectors=c.connectors + (conn,)))


def _disconnect(repo, c, op: Disconnect, touched):
    if c.connector(op.source, op.target) is None:
        raise ApplicabilityError("DM-DISC-MISSING",
                                 f"元件 {c.name} 不包含顯式連接器 {op.source} -> {op.target}")
    _touch(touched, c.name)
    kept = tuple(conn for conn in c.connectors if conn.key != (op.source, op.target))
    return repo.with_component(replace(c, connectors=kept))


def _rename(repo, c, op: Rename, touched):
    if op.kind == "port":
        exists = c.port
    elif op.kind == "component":
        exists = c.subcomponent
    elif op.kind == "parameter":
        exists = c.parameter
    else:
        raise ApplicabilityError("DM-RENAME-BAD", f"未知的重新命名種類: {op.kind}")
    if exists(op.old) is None:
        raise ApplicabilityError("DM-RENAME-BAD", f"元件 {c.name} 不包含 {op.kind} {op.old}")
    if exists(op.new) is not None:
        raise ApplicabilityError("DM-RENAME-BAD", f"元件 {c.name} 已包含 {op.kind} {op.new}")

    if op.kind == "port":
        ports = tuple(replace(p, name=op.new) if p.name == op.old else p for p in c.ports)
        c = replace(c, ports=ports)
        _touch(touched, c.name, ("port", op.new))
        c = _rewrite_connectors(
            c, lambda r: PortRef(None, op.new) if r == PortRef(None, op.old) else r, touched)
        repo = repo.with_component(c)
        for parent in repo.users_of(c.name):
            owners = {s.name for s in parent.subcomponents if s.component_type == c.name}
            parent = _rewrite_connectors(
                parent,
                lambda r: PortRef(r.owner, op.new) if r.owner in owners and r.port == op.old else r,
                touched)
            repo = repo.with_component(parent)
        return repo

    if op.kind == "component":
        subs = tuple(replace(s, name=op.new) if s.name == op.old else s for s in c.subcomponents)
        c = replace(c, subcomponents=subs)
        _touch(touched, c.name, ("subcomponent", op.new))
        c = _rewrite_connectors(
            c, lambda r: PortRef(op.new, r.port) if r.owner == op.old else r, touched)
        return repo.with_component(c)

    params = tuple(replace(p, name=op.new) if p.name == op.old else p for p in c.parameters)
    old_arg, new_arg = ConfigArg.parameter(op.old), ConfigArg.parameter(op.new)
    subs = []
    for sub in c.subcomponents:
        if old_arg in sub.args:
            sub = replace(sub, args=tuple(new_arg if a == old_arg else a for a in sub.args))
            _touch(touched, c.name, ("subcomponent", sub.name))
        subs.append(sub)
    _touch(touched, c.name, ("parameter", op.new))
    return repo.with_component(replace(c, parameters=params, subcomponents=tuple(subs)))


def _replace(repo, c, op: Replace, touched):
    old = c.subcomponent(op.old)
    if old is None:
        raise ApplicabilityError("DM-RM-MISSING", f"元件 {c.name} 不包含子元件 {op.old}")
    old_def = repo.get(old.component_type)
    new_def = repo.get(op.with_type)
    for type_name, definition in ((old.component_type, old_def), (op.with_type, new_def)):
        if definition is None:
            raise ApplicabilityError("DM-TYPE-UNKNOWN", f"元件型別 {type_name} 不存在")
    new_name = op.new_name or old.name
    if new_name != old.name and c.subcomponent(new_name) is not None:
        raise ApplicabilityError("DM-ADD-DUP", f"元件 {c.name} 已包含子元件 {new_name}")

    try:
        compat = interface_compatible(old_def, new_def, repo.types)
    except AmbiguousMappingError as e:
        raise ApplicabilityError(e.code, f"以 {op.with_type} 取代 {op.old}: {e.message}")
    if not compat:
        raise ApplicabilityError("DM-REPLACE-INCOMPAT",
                                 f"{op.with_type} 與 {old.component_type} 介面不相容: {compat.reason}")

    new_sub = SubcomponentDecl(op.with_type, new_name,
                               old.args if op.args is None else op.args, op.location)
    subs = tuple(new_sub if s.name == old.name else s for s in c.subcomponents)

    def rewire(ref: PortRef) -> PortRef:
        if ref.owner != old.name:
            return ref
        port = old_def.port(ref.port)
        mapping = compat.incoming if port is not None and port.direction is Direction.IN else compat.outgoing
        return PortRef(new_name, mapping.get(ref.port, ref.port))

    c = replace(c, subcomponents=subs)
    _touch(touched, c.name, ("subcomponent", new_name))
    c = _rewrite_connectors(c, rewire, touched)
    logger.debug(f"{c.name}: {op.old} 已取代為 {op.with_type} {new_name}")
    return repo.with_component(c)


def _modify_config(repo, c, op: ModifyConfig, touched):
    sub = c.subcomponent(op.subcomponent)
    if sub is None:
        raise ApplicabilityError("DM-NO-COMPONENT", f"元件 {c.name} 不包含子元件 {op.subcomponent}")
    definition = repo.get(sub.component_type)
    if definition is None:
        raise ApplicabilityError("DM-TYPE-UNKNOWN", f"元件型別 {sub.component_type} 不存在")
    args = list(sub.args)
    for name, value in op.assignments:
        index = definition.parameter_index(name)
        if index is None:
            raise ApplicabilityError("DM-CONFIG-NO-PARAM",
                                     f"{sub.component_type} 沒有設定參數 {name}")
        if index >= len(args):
            raise ApplicabilityError("DM-CONFIG-NO-PARAM",
                                     f"子元件 {sub.name} 沒有參數 {name} 的位置引數")
        args[index] = value
    new_sub = replace(sub, args=tuple(args))
    _touch(touched, c.name, ("subcomponent", sub.name))
    subs = tuple(new_sub if s.name == sub.name else s for s in c.subcomponents)
    return repo.with_component(replace(c, subcomponents=subs))


# ---------------------------------------------------------------------------
# autoconnect 與不可達元素

def _scope(repo: ModelRepository, scope: Optional[str], decomposed_only: bool) -> List[str]:
    if scope is not None:
        _require(repo, scope)
        return [scope]
    return [name for name in repo.names()
            if not decomposed_only or repo.get(name).is_decomposed]


def _expand(repo, scope, touched):
    for name in _scope(repo, scope, decomposed_only=False):
        c = repo.get(name)
        if c.autoconnect is AutoconnectMode.OFF:
            continue
        implicit = tuple(conn.as_explicit() for conn in resolve_autoconnect(c, repo))
        for conn in implicit:
            _touch(touched, name, _connector_touches(conn))
        _touch(touched, name)
        repo = repo.with_component(replace(c, autoconnect=AutoconnectMode.OFF,
                                           connectors=c.connectors + implicit))
    return repo


def expand_autoconnect(repo: ModelRepository, scope: Optional[str] = None) -> ModelRepository:
    """將隱式連接器轉為顯式並關閉 autoconnect"""
    return _expand(repo, scope, {})


def _recreatable(c: ComponentDefinition, conn: ConnectorDecl, repo: ModelRepository) -> bool:
    trial = replace(c, connectors=tuple(x for x in c.connectors if x.key != conn.key))
    return any(x.key == conn.key for x in resolve_autoconnect(trial, repo))


def _introduce(repo, mode, scope, touched):
    if mode is AutoconnectMode.OFF:
        raise ApplicabilityError("DM-CONN-INVALID", "introduce autoconnect 需要 port 或 type 模式")
    for name in _scope(repo, scope, decomposed_only=True):
        c = replace(repo.get(name), autoconnect=mode)
        changed = True
        while changed:
            changed = False
            for conn in sort_connectors(c.connectors):
                if _recreatable(c, conn, repo):
                    c = replace(c, connectors=tuple(x for x in c.connectors if x.key != conn.key))
                    changed = True
        _touch(touched, name)
        repo = repo.with_component(c)
    return repo


def introduce_autoconnect(repo: ModelRepository, mode: AutoconnectMode,
                          scope: Optional[str] = None) -> ModelRepository:
    """設定 autoconnect 模式，並移除所有可被自動重建的顯式連接器 (直到不動點)"""
    return _introduce(repo, mode, scope, {})


def _prune_component(c: ComponentDefinition, repo: ModelRepository):
    """兩階段移除；回傳 (新元件, 被移除的埠名稱)"""
    while True:
        union = effective_connectors(c, repo)
        producing = {conn.source.owner for conn in union if conn.source.owner is not None}
        dead = {s.name for s in c.subcomponents if s.name not in producing}
        if not dead:
            break
        logger.debug(f"{c.name}: 移除沒有輸出連接器的子元件 {', '.join(sorted(dead))}")
        c = replace(
            c,
            subcomponents=tuple(s for s in c.subcomponents if s.name not in dead),
            connectors=tuple(conn for conn in c.connectors
                             if conn.source.owner not in dead and conn.target.owner not in dead))

    used = set()
    for conn in effective_connectors(c, repo):
        used.update(ref.port for ref in conn.key if ref.owner is None)
    removed = {p.name for p in c.ports if p.name not in used}
    if removed:
        logger.debug(f"{c.name}: 移除未使用的埠 {', '.join(sorted(removed))}")
        c = replace(c, ports=tuple(p for p in c.ports if p.name not in removed))
    return c, removed


def _decomposition_order(repo: ModelRepository, names: Iterable[str]) -> List[str]:
    """子元件型別先於使用它的元件"""
    order: List[str] = []
    seen: Set[str] = set()

    def visit(name):
        if name in seen or name not in repo:
            return
        seen.add(name)
        for sub in sorted(s.component_type for s in repo.get(name).subcomponents):
            visit(sub)
        order.append(name)

    for name in sorted(names):
        visit(name)
    wanted = set(names)
    return [name for name in order if name in wanted]


def _remove_unreachable(repo, scope, touched):
    names = _scope(repo, scope, decomposed_only=True)
    changed = True
    while changed:
        changed = False
        for name in _decomposition_order(repo, names):
            c = repo.get(name)
            if not c.is_decomposed:
                continue
            pruned, removed = _prune_component(c, repo)
            if pruned == c:
                continue
            changed = True
            _touch(touched, name)
            repo = repo.with_component(pruned)
            if removed:
                repo = _drop_parent_connectors(repo, name, removed, touched)
        if scope is not None:
            break
    return repo


def remove_unreachable(repo: ModelRepository, scope: Optional[str] = None) -> ModelRepository:
    """移除對輸出沒有貢獻的子元件與埠"""
    return _remove_unreachable(repo, scope, {})


# ---------------------------------------------------------------------------
# 套用

_LOCAL_HANDLERS = {
    AddPort: _add_port,
    AddSubcomponent: _add_subcomponent,
    AddParameter: _add_parameter,
    SetAutoconnect: _set_autoconnect,
    RemovePort: _remove_port,
    RemoveSubcomponent: _remove_subcomponent,
    RemoveParameter: _remove_parameter,
    Connect: _connect,
    Disconnect: _disconnect,
    Rename: _rename,
    Replace: _replace,
    ModifyConfig: _modify_config,
}


def _apply(repo: ModelRepository, target: Optional[str], op: ModificationOp,
           touched: Touched) -> ModelRepository:
    if isinstance(op, ExpandAutoconnect):
        return _expand(repo, target, touched)
    if isinstance(op, IntroduceAutoconnect):
        return _introduce(repo, op.mode, target, touched)
    if isinstance(op, RemoveUnreachable):
        return _remove_unreachable(repo, target, touched)
    handler = _LOCAL_HANDLERS.get(type(op))
    if handler is None:
        raise ApplicabilityError("DM-UNKNOWN-OP", f"未知的修改操作: {type(op).__name__}")
    if target is None:
        raise ApplicabilityError("DM-NO-COMPONENT", f"{op.describe()} 必須位於 modify component 區塊內")
    return handler(repo, _require(repo, target), op, touched)


def apply_op(repo: ModelRepository, target: Optional[str], op: ModificationOp) -> ModelRepository:
    """套用單一操作；失敗時拋出 ApplicabilityError，輸入的 repository 不變"""
    return _apply(repo, target, op, {})


def _annotated(e: DeltaArcError, delta: str, op: ModificationOp) -> ApplicabilityError:
    if not isinstance(e, ApplicabilityError):
        e = ApplicabilityError(e.code, e.message, e.location)
    return e.annotate(delta, op.describe(), op.location)


def apply_delta(repo: ModelRepository, d: DeltaModel) -> Tuple[ModelRepository, CheckReport]:
    """依序套用 delta 的所有操作，然後對受影響的元件做局部檢查"""
    touched: Touched = {}
    for scoped in d.body:
        try:
            repo = _apply(repo, scoped.component, scoped.op, touched)
        except DeltaArcError as e:
            raise _annotated(e, d.name, scoped.op) from e

    diagnostics = []
    for name in sorted(touched):
        c = repo.get(name)
        if c is not None:
            diagnostics.extend(check_local(c, touched[name], repo).diagnostics)
    report = report_of(diagnostics)
    if not report.passed:
        raise WellformednessError(f"delta {d.name}", report)
    logger.info(f"已套用 delta {d.name} ({len(d.body)} 個操作, 影響 {len(touched)} 個元件)")
    return repo, report
