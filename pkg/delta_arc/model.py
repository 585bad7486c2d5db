"""
架構模型核心
元件、埠、子元件、連接器、資料型別階層，以及隱式命名、
型別相容、介面相容與 autoconnect 推導
"""

import enum
import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from .errors import (AmbiguousMappingError, DeltaArcError, Diagnostic, Location,
                     NO_LOCATION, TypeHierarchyError, warning)

logger = logging.getLogger(__name__)


class Direction(str, enum.Enum):
    IN = "in"
    OUT = "out"


class AutoconnectMode(str, enum.Enum):
    PORT = "port"
    TYPE = "type"
    OFF = "off"


class Origin(str, enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


def implicit_name(type_name: str) -> str:
    """未命名的埠或子元件以型別名稱 (首字小寫) 存取"""
    if not type_name or not type_name[0].isalpha():
        raise ValueError(f"無效的型別名稱: {type_name!r}")
    return type_name[0].lower() + type_name[1:]


# ---------------------------------------------------------------------------
# 資料型別階層

@dataclass(frozen=True)
class TypeHierarchy:
    types: FrozenSet[str] = frozenset()
    edges: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self):
        for sub, sup in self.edges:
            for name in (sub, sup):
                if name not in self.types:
                    raise TypeHierarchyError("TYPE-UNDECLARED", f"型別階層中未宣告的型別: {name}")
        cycle = _find_cycle(self.types, self.edges)
        if cycle:
            raise TypeHierarchyError("TYPE-CYCLE", f"型別階層存在循環: {' -> '.join(cycle)}")

    @classmethod
    def from_declarations(cls, declarations: Iterable[Tuple[str, Iterable[str]]]) -> "TypeHierarchy":
        types = set()
        edges = set()
        for name, supertypes in declarations:
            types.add(name)
            for sup in supertypes:
                edges.add((name, sup))
        return cls(frozenset(types), frozenset(edges))

    def declares(self, name: str) -> bool:
        return name in self.types

    def supertypes(self, name: str) -> Tuple[str, ...]:
        return tuple(sorted(sup for sub, sup in self.edges if sub == name))

    def ensure(self, names: Iterable[str]) -> "TypeHierarchy":
        """未宣告的型別名稱自動註冊為沒有父型別的名義型別"""
        missing = frozenset(names) - self.types
        if not missing:
            return self
        logger.debug(f"自動註冊型別: {', '.join(sorted(missing))}")
        return TypeHierarchy(self.types | missing, self.edges)

    def merge(self, other: "TypeHierarchy") -> "TypeHierarchy":
        return TypeHierarchy(self.types | other.types, self.edges | other.edges)


def _find_cycle(types, edges) -> Optional[List[str]]:
    graph: Dict[str, List[str]] = {name: [] for name in types}
    for sub, sup in edges:
        graph.setdefault(sub, []).append(sup)
    state: Dict[str, int] = {}
    stack: List[str] = []

    def visit(node):
        state[node] = 1
        stack.append(node)
        for nxt in sorted(graph.get(node, ())):
            if state.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for node in sorted(graph):
        if node not in state:
            found = visit(node)
            if found:
                return found
    return None


@functools.lru_cache(maxsize=4096)
def _ancestors(h: TypeHierarchy, name: str) -> FrozenSet[str]:
    seen = {name}
    todo = [name]
    while todo:
        current = todo.pop()
        for sup in h.supertypes(current):
            if sup not in seen:
                seen.add(sup)
                todo.append(sup)
    return frozenset(seen)


def type_conforms(sub: str, sup: str, h: TypeHierarchy) -> bool:
    """sub 與 sup 相同，或 sup 位於 sub 的 (反身遞移) 父型別閉包內"""
    for name in (sub, sup):
        if not h.declares(name):
            raise TypeHierarchyError("TYPE-UNDECLARED", f"未宣告的型別: {name}")
    return sup in _ancestors(h, sub)


# ---------------------------------------------------------------------------
# 架構元素

@dataclass(frozen=True)
class PortDecl:
    direction: Direction
    data_type: str
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)


@dataclass(frozen=True)
class ParameterDecl:
    name: str
    location: Location = field(default=NO_LOCATION, compare=False)


STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


class ArgKind(str, enum.Enum):
    INT = "int"
    STRING = "string"
    PARAM = "param"


@dataclass(frozen=True)
class ConfigArg:
    kind: ArgKind
    value: Union[int, str]

    @classmethod
    def integer(cls, value: int) -> "ConfigArg":
        return cls(ArgKind.INT, int(value))

    @classmethod
    def string(cls, value: str) -> "ConfigArg":
        return cls(ArgKind.STRING, value)

    @classmethod
    def parameter(cls, name: str) -> "ConfigArg":
        return cls(ArgKind.PARAM, name)

    def render(self) -> str:
        if self.kind is ArgKind.STRING:
            escaped = "".join(STRING_ESCAPES.get(ch, ch) for ch in str(self.value))
            return f'"{escaped}"'
        return str(self.value)


@dataclass(frozen=True)
class SubcomponentDecl:
    component_type: str
    name: str
    args: Tuple[ConfigArg, ...] = ()
    location: Location = field(default=NO_LOCATION, compare=False)


@dataclass(frozen=True)
class PortRef:
    """owner 為 None 時指向外層元件自己的埠"""
    owner: Optional[str]
    port: str

    def sort_key(self):
        return (self.owner is not None, self.owner or "", self.port)

    def __str__(self) -> str:
        return f"{self.owner}.{self.port}" if self.owner else self.port

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()


@dataclass(frozen=True)
class ConnectorDecl:
    source: PortRef
    target: PortRef
    origin: Origin = Origin.EXPLICIT
    location: Location = field(default=NO_LOCATION, compare=False)

    @property
    def key(self) -> Tuple[PortRef, PortRef]:
        return (self.source, self.target)

    def sort_key(self):
        return (self.target.sort_key(), self.source.sort_key())

    def as_explicit(self) -> "ConnectorDecl":
        return replace(self, origin=Origin.EXPLICIT)

    def __str__(self) -> str:
        return f"{self.source} -> {self.target}"


def sort_connectors(connectors: Iterable[ConnectorDecl]) -> Tuple[ConnectorDecl, ...]:
    return tuple(sorted(connectors, key=ConnectorDecl.sort_key))


@dataclass(frozen=True)
class ComponentDefinition:
    name: str
    parameters: Tuple[ParameterDecl, ...] = ()
    autoconnect: AutoconnectMode = AutoconnectMode.OFF
    ports: Tuple[PortDecl, ...] = ()
    subcomponents: Tuple[SubcomponentDecl, ...] = ()
    connectors: Tuple[ConnectorDecl, ...] = ()
    location: Location = field(default=NO_LOCATION, compare=False)

    def port(self, name: str) -> Optional[PortDecl]:
        return next((p for p in self.ports if p.name == name), None)

    def subcomponent(self, name: str) -> Optional[SubcomponentDecl]:
        return next((s for s in self.subcomponents if s.name == name), None)

    def parameter(self, name: str) -> Optional[ParameterDecl]:
        return next((p for p in self.parameters if p.name == name), None)

    def parameter_index(self, name: str) -> Optional[int]:
        return next((i for i, p in enumerate(self.parameters) if p.name == name), None)

    def connector(self, source: PortRef, target: PortRef) -> Optional[ConnectorDecl]:
        return next((c for c in self.connectors if c.key == (source, target)), None)

    @property
    def in_ports(self) -> Tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.IN)

    @property
    def out_ports(self) -> Tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.OUT)

    @property
    def is_decomposed(self) -> bool:
        return bool(self.subcomponents)

    @property
    def type_names(self) -> FrozenSet[str]:
        return frozenset(p.data_type for p in self.ports)

    def canonical(self) -> "ComponentDefinition":
        """宣告順序無關的正規形式，供結構比較使用"""
        return replace(
            self,
            ports=tuple(sorted(self.ports, key=lambda p: (p.direction.value, p.name, p.data_type))),
            subcomponents=tuple(sorted(self.subcomponents, key=lambda s: s.name)),
            connectors=sort_connectors(self.connectors),
        )


@dataclass(frozen=True)
class ModelRepository:
    components: Mapping[str, ComponentDefinition] = field(default_factory=dict)
    types: TypeHierarchy = TypeHierarchy()

    @classmethod
    def build(cls, components: Iterable[ComponentDefinition],
              types: Optional[TypeHierarchy] = None) -> "ModelRepository":
        table: Dict[str, ComponentDefinition] = {}
        for component in components:
            if component.name in table:
                raise DeltaArcError("CC-NAME-UNIQUE", f"元件名稱重複: {component.name}",
                                    component.location)
            table[component.name] = component
        hierarchy = (types or TypeHierarchy()).ensure(
            name for c in table.values() for name in c.type_names)
        return cls(dict(sorted(table.items())), hierarchy)

    def get(self, name: str) -> Optional[ComponentDefinition]:
        return self.components.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self.components

    def names(self) -> List[str]:
        return sorted(self.components)

    def with_component(self, component: ComponentDefinition) -> "ModelRepository":
        table = dict(self.components)
        table[component.name] = component
        return ModelRepository(dict(sorted(table.items())), self.types.ensure(component.type_names))

    def with_types(self, names: Iterable[str]) -> "ModelRepository":
        return ModelRepository(self.components, self.types.ensure(names))

    def users_of(self, component_type: str) -> List[ComponentDefinition]:
        """所有以 component_type 作為子元件型別的元件"""
        return [c for c in self.components.values()
                if any(s.component_type == component_type for s in c.subcomponents)]


# ---------------------------------------------------------------------------
# 埠解析

def resolve_port(c: ComponentDefinition, ref: PortRef,
                 repo: ModelRepository) -> Optional[PortDecl]:
    if ref.owner is None:
        return c.port(ref.port)
    sub = c.subcomponent(ref.owner)
    if sub is None:
        return None
    definition = repo.get(sub.component_type)
    if definition is None:
        return None
    return definition.port(ref.port)


def is_source(ref: PortRef, port: PortDecl) -> bool:
    """資料流的送出端: 外層的輸入埠或子元件的輸出埠"""
    if ref.owner is None:
        return port.direction is Direction.IN
    return port.direction is Direction.OUT


def is_target(ref: PortRef, port: PortDecl) -> bool:
    if ref.owner is None:
        return port.direction is Direction.OUT
    return port.direction is Direction.IN


def unresolved_subcomponents(c: ComponentDefinition, repo: ModelRepository) -> List[SubcomponentDecl]:
    return [s for s in c.subcomponents if s.component_type not in repo]


def data_flow_endpoints(c: ComponentDefinition, repo: ModelRepository):
    """回傳 (sources, targets)，每項為 (PortRef, PortDecl)"""
    missing = unresolved_subcomponents(c, repo)
    if missing:
        sub = missing[0]
        raise DeltaArcError("CC-TYPE-RESOLVE",
                            f"元件 {c.name} 的子元件 {sub.name} 型別無法解析: {sub.component_type}",
                            sub.location)
    sources = []
    targets = []
    for port in c.ports:
        ref = PortRef(None, port.name)
        (sources if port.direction is Direction.IN else targets).append((ref, port))
    for sub in c.subcomponents:
        for port in repo.get(sub.component_type).ports:
            ref = PortRef(sub.name, port.name)
            (targets if port.direction is Direction.IN else sources).append((ref, port))
    return sources, targets


# ---------------------------------------------------------------------------
# autoconnect

def resolve_autoconnect(c: ComponentDefinition, repo: ModelRepository,
                        diagnostics: Optional[List[Diagnostic]] = None,
                        mode: Optional[AutoconnectMode] = None) -> Tuple[ConnectorDecl, ...]:
    """依 autoconnect 模式推導隱式連接器

    每個目標最多接收一個連接器；已有顯式連接器的目標不再推導。
    多個候選來源時略過該目標並加入 AC-AMBIGUOUS 警告。
    結果依 (目標, 來源) 排序。
    """
    mode = mode or c.autoconnect
    if mode is AutoconnectMode.OFF:
        return ()
    sources, targets = data_flow_endpoints(c, repo)
    wired = {conn.target for conn in c.connectors}
    result = []
    for target_ref, target_port in targets:
        if target_ref in wired:
            continue
        candidates = []
        for source_ref, source_port in sources:
            if source_ref.owner is None and target_ref.owner is None:
                continue
            if source_ref.owner is not None and source_ref.owner == target_ref.owner:
                continue
            if mode is AutoconnectMode.PORT and source_port.name != target_port.name:
                continue
            if type_conforms(source_port.data_type, target_port.data_type, repo.types):
                candidates.append(source_ref)
        if len(candidates) == 1:
            result.append(ConnectorDecl(candidates[0], target_ref, Origin.IMPLICIT))
        elif len(candidates) > 1 and diagnostics is not None:
            names = ", ".join(str(ref) for ref in sorted(candidates))
            diagnostics.append(warning(
                "AC-AMBIGUOUS",
                f"元件 {c.name}: 目標 {target_ref} 有多個 autoconnect 候選來源 ({names})，已略過",
                c.location))
    return sort_connectors(result)


def effective_connectors(c: ComponentDefinition, repo: ModelRepository) -> Tuple[ConnectorDecl, ...]:
    """顯式連接器與推導出的隱式連接器之聯集"""
    return sort_connectors(c.connectors + resolve_autoconnect(c, repo))


# ---------------------------------------------------------------------------
# 介面相容

@dataclass(frozen=True)
class Compatibility:
    compatible: bool
    incoming: Mapping[str, str] = field(default_factory=dict)
    outgoing: Mapping[str, str] = field(default_factory=dict)
    reason: str = ""

    def __bool__(self) -> bool:
        return self.compatible


def _has_matching(left: List[str], candidates: Mapping[str, List[str]]) -> bool:
    """二分圖匹配 (增廣路徑)：是否每個左側埠都能配到不同的右側埠"""
    owner: Dict[str, str] = {}

    def augment(node, seen):
        for cand in candidates[node]:
            if cand in seen:
                continue
            seen.add(cand)
            if cand not in owner or augment(owner[cand], seen):
                owner[cand] = node
                return True
        return False

    return all(augment(node, set()) for node in left)


def _select_mapping(old_ports: Tuple[PortDecl, ...], new_ports: Tuple[PortDecl, ...],
                    fits, kind: str) -> Optional[Dict[str, str]]:
    """同名優先，接著唯一型別配對；無解回傳 None，不唯一拋出 AmbiguousMappingError"""
    candidates = {p.name: [q.name for q in new_ports if fits(p, q)] for p in old_ports}
    mapping: Dict[str, str] = {}
    for p in old_ports:
        same = next((q for q in new_ports if q.name == p.name), None)
        if same is not None and fits(p, same):
            mapping[p.name] = same.name

    def remaining(name):
        used = set(mapping.values())
        return [q for q in candidates[name] if q not in used]

    while True:
        open_ports = [p.name for p in old_ports if p.name not in mapping]
        if not open_ports:
            return mapping
        forced = [name for name in open_ports if len(remaining(name)) == 1]
        if forced:
            name = forced[0]
            mapping[name] = remaining(name)[0]
            continue
        if any(not remaining(name) for name in open_ports):
            if _has_matching([p.name for p in old_ports], candidates):
                raise AmbiguousMappingError(f"{kind}埠對應無法由名稱或唯一型別決定")
            return None
        raise AmbiguousMappingError(
            f"{kind}埠 {', '.join(open_ports)} 有多個可能的對應")


def interface_compatible(sc1: ComponentDefinition, sc2: ComponentDefinition,
                         h: TypeHierarchy) -> Compatibility:
    """sc2 能否取代 sc1

    輸入埠數量相同，且 sc1 每個輸入埠對應到 sc2 中相同型別或父型別的輸入埠；
    sc2 輸出埠數量不少於 sc1，且 sc1 每個輸出埠對應到 sc2 中相同型別或子型別的輸出埠。
    """
    old_in, new_in = sc1.in_ports, sc2.in_ports
    if len(old_in) != len(new_in):
        return Compatibility(False, reason=f"輸入埠數量不同 ({len(old_in)} != {len(new_in)})")
    old_out, new_out = sc1.out_ports, sc2.out_ports
    if len(new_out) < len(old_out):
        return Compatibility(False, reason=f"輸出埠數量不足 ({len(new_out)} < {len(old_out)})")

    incoming = _select_mapping(old_in, new_in,
                               lambda p, q: type_conforms(p.data_type, q.data_type, h), "輸入")
    if incoming is None:
        return Compatibility(False, reason="輸入埠型別無法對應")
    outgoing = _select_mapping(old_out, new_out,
                               lambda p, q: type_conforms(q.data_type, p.data_type, h), "輸出")
    if outgoing is None:
        return Compatibility(False, reason="輸出埠型別無法對應")
    return Compatibility(True, incoming, outgoing)
