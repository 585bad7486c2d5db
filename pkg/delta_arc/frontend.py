"""
文字前端
以 lark 解析元件 (.arc)、delta (.delta)、產品組態 (.deltacfg) 與型別宣告 (.types)，
並把元件定義列印回正規化的文字
"""

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError

from .delta_engine import (AddParameter, AddPort, AddSubcomponent, Connect, DeltaModel, Disconnect,
                           ExpandAutoconnect, IntroduceAutoconnect, ModifyConfig, RemoveParameter,
                           RemovePort, RemoveSubcomponent, RemoveUnreachable, Rename, Replace,
                           ScopedOp, SetAutoconnect, GLOBAL_OPS)
from .errors import DeltaArcError, GenerationError, Location, ParseError
from .model import (AutoconnectMode, ComponentDefinition, ConfigArg, ConnectorDecl, Direction,
                    Origin, ParameterDecl, PortDecl, PortRef, SubcomponentDecl, TypeHierarchy,
                    implicit_name)
from .ordering import And, Leaf, Not, Or, ProductConfiguration

logger = logging.getLogger(__name__)

EXTENSIONS = {
    ".arc": "component",
    ".delta": "delta",
    ".deltacfg": "config",
    ".types": "types",
}

GRAMMAR = r"""
// ---- 元件 ----
component_unit: component
component: "component" NAME param_list? "{" _element* "}"
param_list: "(" names? ")"
names: NAME ("," NAME)*

_element: autoconnect_stmt | port_block | subcomponent | connector
autoconnect_stmt: "autoconnect" ac_mode ";"
!ac_mode: "port" | "type" | "off"
port_block: "port" port_decl ("," port_decl)* ";"
port_decl: direction NAME NAME?
!direction: "in" | "out"
subcomponent: "component" subcomponent_body ";"
subcomponent_body: NAME arg_list? NAME?
arg_list: "(" (arg ("," arg)*)? ")"
?arg: SIGNED_INT     -> int_arg
    | ESCAPED_STRING -> string_arg
    | NAME           -> param_arg
connector: "connect" port_ref "->" port_ref ";"
port_ref: NAME ("." NAME)?

// ---- delta ----
delta_unit: "delta" NAME after_clause? "{" _delta_stmt* "}"
after_clause: "after" or_expr
_delta_stmt: modify_block | modify_config | _global_op
modify_block: "modify" "component" NAME "{" _op_stmt* "}"
modify_config: "modify" "component" NAME "(" assignments? ")" ";"
assignments: assignment ("," assignment)*
assignment: NAME "=" arg

_op_stmt: add_port | add_subcomponent | add_parameter | add_autoconnect
        | remove_port | remove_subcomponent | remove_parameter
        | connect_op | disconnect | rename | replace | modify_config | _global_op
add_port: "add" "port"? port_decl ";"
add_subcomponent: "add" "component"? subcomponent_body ";"
add_parameter: "add" "parameter" NAME ";"
add_autoconnect: "add" "autoconnect" ac_mode ";"
remove_port: "remove" "port" NAME ";"
remove_subcomponent: "remove" "component" NAME ";"
remove_parameter: "remove" "parameter" NAME ";"
connect_op: "connect" port_ref "->" port_ref ";"
disconnect: "disconnect" port_ref "->" port_ref ";"
rename: "rename" rename_kind NAME "as" NAME ";"
!rename_kind: "port" | "component" | "parameter"
replace: "replace" "component" NAME "with" NAME arg_list? NAME? ";"

_global_op: expand_autoconnect | introduce_autoconnect | remove_unreachable
expand_autoconnect: "expand" "autoconnect" ";"
introduce_autoconnect: "introduce" "autoconnect" intro_mode ";"
!intro_mode: "port" | "type"
remove_unreachable: "remove" unreachable_kw ";"
!unreachable_kw: "unreachable" | "unreachables"

// ---- 順序條件 ----
?or_expr: and_expr ("||" and_expr)*
?and_expr: unary ("&&" unary)*
?unary: "!" unary -> neg
      | NAME       -> leaf
      | "(" or_expr ")"

// ---- 產品組態與型別 ----
config_unit: "deltaconfig" NAME "{" names? "}"
types_unit: type_decl*
type_decl: "type" NAME ("extends" names)? ";"

NAME: /[A-Za-z_][A-Za-z0-9_]*/

%import common.SIGNED_INT
%import common.ESCAPED_STRING
%import common.WS
%import common.CPP_COMMENT
%import common.C_COMMENT
%ignore WS
%ignore CPP_COMMENT
%ignore C_COMMENT
"""

_parser = Lark(GRAMMAR, parser="lalr", propagate_positions=True,
               start=["component_unit", "delta_unit", "config_unit", "types_unit"])


@dataclass(frozen=True)
class SourceUnit:
    path: str
    kind: str
    text: str

    @classmethod
    def from_text(cls, text: str, kind: str, path: str = "<string>") -> "SourceUnit":
        return cls(path, kind, text)

    @classmethod
    def read(cls, path) -> "SourceUnit":
        path = Path(path)
        kind = EXTENSIONS.get(path.suffix)
        if kind is None:
            raise ParseError("SYNTAX", f"無法辨識的副檔名: {path.suffix}", Location(str(path)))
        try:
            data = path.read_bytes()
        except OSError as e:
            raise GenerationError("GEN-IO", f"無法讀取 {path}: {e.strerror or e}", Location(str(path)))
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            line = data.count(b"\n", 0, e.start) + 1
            column = e.start - (data.rfind(b"\n", 0, e.start) + 1) + 1
            raise ParseError("SYNTAX", f"不是有效的 UTF-8 (位元組 0x{data[e.start]:02x})",
                             Location(str(path), line, column)) from None
        return cls(str(path), kind, text)


ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"'}


def _unescape(literal: str) -> str:
    """解碼標準跳脫字元；其他的 \\x 原樣保留"""
    return re.sub(r"\\(.)", lambda m: ESCAPES.get(m.group(1), m.group(0)), literal[1:-1], flags=re.S)


@v_args(meta=True)
class _ArcTransformer(Transformer):
    """lark 語法樹轉為模型物件；未命名的埠與子元件在此具體化名稱"""

    def __init__(self, path: str):
        super().__init__()
        self.path = path

    def _loc(self, meta) -> Location:
        if getattr(meta, "empty", True):
            return Location(self.path)
        return Location(self.path, meta.line, meta.column)

    def _tok_loc(self, tok) -> Location:
        return Location(self.path, tok.line, tok.column)

    # 元件
    def component_unit(self, meta, children):
        return children[0]

    def names(self, meta, children):
        return list(children)

    def param_list(self, meta, children):
        tokens = children[0] if children else []
        return ("params", tuple(ParameterDecl(str(t), self._tok_loc(t)) for t in tokens))

    def component(self, meta, children):
        name, *rest = children
        parameters = ()
        autoconnect = None
        ports: List[PortDecl] = []
        subs: List[SubcomponentDecl] = []
        connectors: List[ConnectorDecl] = []
        for item in rest:
            if isinstance(item, SubcomponentDecl):
                subs.append(item)
            elif isinstance(item, ConnectorDecl):
                connectors.append(item)
            elif item[0] == "params":
                parameters = item[1]
            elif item[0] == "ports":
                ports.extend(item[1])
            elif item[0] == "autoconnect":
                if autoconnect is not None:
                    raise ParseError("SYNTAX", f"元件 {name} 有多個 autoconnect 陳述式", item[2])
                autoconnect = item[1]
        return ComponentDefinition(
            name=str(name),
            parameters=parameters,
            autoconnect=autoconnect or AutoconnectMode.OFF,
            ports=tuple(ports),
            subcomponents=tuple(subs),
            connectors=tuple(connectors),
            location=self._loc(meta),
        )

    def autoconnect_stmt(self, meta, children):
        return ("autoconnect", children[0], self._loc(meta))

    def ac_mode(self, meta, children):
        return AutoconnectMode(str(children[0]))

    intro_mode = ac_mode

    def direction(self, meta, children):
        return Direction(str(children[0]))

    def port_block(self, meta, children):
        return ("ports", tuple(children))

    def port_decl(self, meta, children):
        direction, data_type, *name = children
        port_name = str(name[0]) if name else implicit_name(str(data_type))
        return PortDecl(direction, str(data_type), port_name, self._loc(meta))

    def subcomponent(self, meta, children):
        return replace(children[0], location=self._loc(meta))

    def subcomponent_body(self, meta, children):
        component_type, *rest = children
        args = ()
        name = None
        for item in rest:
            if isinstance(item, tuple):
                args = item[1]
            else:
                name = str(item)
        return SubcomponentDecl(str(component_type), name or implicit_name(str(component_type)),
                                args, self._loc(meta))

    def arg_list(self, meta, children):
        return ("args", tuple(children))

    def int_arg(self, meta, children):
        return ConfigArg.integer(int(children[0]))

    def string_arg(self, meta, children):
        return ConfigArg.string(_unescape(str(children[0])))

    def param_arg(self, meta, children):
        return ConfigArg.parameter(str(children[0]))

    def port_ref(self, meta, children):
        if len(children) == 1:
            return PortRef(None, str(children[0]))
        return PortRef(str(children[0]), str(children[1]))

    def connector(self, meta, children):
        return ConnectorDecl(children[0], children[1], Origin.EXPLICIT, self._loc(meta))

    # delta
    def delta_unit(self, meta, children):
        name, *rest = children
        constraint = None
        body: List[ScopedOp] = []
        for item in rest:
            if isinstance(item, tuple) and item[0] == "after":
                constraint = item[1]
            elif isinstance(item, tuple) and item[0] == "modify":
                body.extend(ScopedOp(item[1], op) for op in item[2])
            elif isinstance(item, GLOBAL_OPS):
                body.append(ScopedOp(None, item))
            else:
                raise ParseError("PARSE-BAD-SCOPE",
                                 f"{item.describe()} 只能出現在 modify component 區塊內",
                                 item.location)
        return DeltaModel(str(name), constraint, tuple(body), self._loc(meta))

    def after_clause(self, meta, children):
        return ("after", children[0])

    def modify_block(self, meta, children):
        name, *ops = children
        return ("modify", str(name), ops)

    def modify_config(self, meta, children):
        name, *rest = children
        assignments = tuple(rest[0]) if rest else ()
        return ModifyConfig(str(name), assignments, self._loc(meta))

    def assignments(self, meta, children):
        return list(children)

    def assignment(self, meta, children):
        return (str(children[0]), children[1])

    def add_port(self, meta, children):
        return AddPort(children[0], self._loc(meta))

    def add_subcomponent(self, meta, children):
        return AddSubcomponent(children[0], self._loc(meta))

    def add_parameter(self, meta, children):
        return AddParameter(str(children[0]), self._loc(meta))

    def add_autoconnect(self, meta, children):
        return SetAutoconnect(children[0], self._loc(meta))

    def remove_port(self, meta, children):
        return RemovePort(str(children[0]), self._loc(meta))

    def remove_subcomponent(self, meta, children):
        return RemoveSubcomponent(str(children[0]), self._loc(meta))

    def remove_parameter(self, meta, children):
        return RemoveParameter(str(children[0]), self._loc(meta))

    def connect_op(self, meta, children):
        loc = self._loc(meta)
        return Connect(ConnectorDecl(children[0], children[1], Origin.EXPLICIT, loc), loc)

    def disconnect(self, meta, children):
        return Disconnect(children[0], children[1], self._loc(meta))

    def rename_kind(self, meta, children):
        return str(children[0])

    def rename(self, meta, children):
        kind, old, new = children
        return Rename(kind, str(old), str(new), self._loc(meta))

    def replace(self, meta, children):
        old, with_type, *rest = children
        args = None
        new_name = None
        for item in rest:
            if isinstance(item, tuple):
                args = item[1]
            else:
                new_name = str(item)
        return Replace(str(old), str(with_type), new_name, args, self._loc(meta))

    def expand_autoconnect(self, meta, children):
        return ExpandAutoconnect(self._loc(meta))

    def introduce_autoconnect(self, meta, children):
        return IntroduceAutoconnect(children[0], self._loc(meta))

    def remove_unreachable(self, meta, children):
        return RemoveUnreachable(self._loc(meta))

    def unreachable_kw(self, meta, children):
        return str(children[0])

    # 順序條件
    def or_expr(self, meta, children):
        return Or(tuple(children))

    def and_expr(self, meta, children):
        return And(tuple(children))

    def neg(self, meta, children):
        return Not(children[0])

    def leaf(self, meta, children):
        return Leaf(str(children[0]))

    # 組態與型別
    def config_unit(self, meta, children):
        name, *rest = children
        tokens = rest[0] if rest else []
        seen = set()
        for tok in tokens:
            if str(tok) in seen:
                raise ParseError("PARSE-DUP-DELTA",
                                 f"組態 {name} 重複列出 delta {tok}", self._tok_loc(tok))
            seen.add(str(tok))
        return ProductConfiguration(str(name), tuple(str(t) for t in tokens), self._loc(meta))

    def types_unit(self, meta, children):
        return TypeHierarchy.from_declarations(children)

    def type_decl(self, meta, children):
        name, *rest = children
        return (str(name), [str(t) for t in (rest[0] if rest else [])])


def _syntax_error(e: UnexpectedInput, path: str) -> ParseError:
    line = max(getattr(e, "line", 0) or 0, 0)
    column = max(getattr(e, "column", 0) or 0, 0)
    if isinstance(e, UnexpectedEOF):
        message = "檔案意外結束"
    elif isinstance(e, UnexpectedCharacters):
        message = f"無法辨識的字元 {e.char!r}"
    else:
        token = getattr(e, "token", None)
        expected = sorted(getattr(e, "expected", None) or [])
        message = f"非預期的 {str(token)!r}"
        if expected:
            message += f"，預期: {', '.join(expected[:8])}"
    return ParseError("SYNTAX", message, Location(path, line, column))


def _parse(u: SourceUnit, kind: str):
    if u.kind != kind:
        raise ValueError(f"{u.path} 是 {u.kind} 檔案，不是 {kind}")
    try:
        tree = _parser.parse(u.text, start=f"{kind}_unit")
    except UnexpectedInput as e:
        raise _syntax_error(e, u.path) from None
    try:
        return _ArcTransformer(u.path).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, DeltaArcError):
            raise e.orig_exc from None
        if isinstance(e.orig_exc, ValueError):
            raise ParseError("SYNTAX", str(e.orig_exc), Location(u.path)) from None
        raise


def parse_component_text(u: SourceUnit) -> ComponentDefinition:
    return _parse(u, "component")


def parse_delta_text(u: SourceUnit) -> DeltaModel:
    return _parse(u, "delta")


def parse_config_text(u: SourceUnit) -> ProductConfiguration:
    return _parse(u, "config")


def parse_types_text(u: SourceUnit) -> TypeHierarchy:
    return _parse(u, "types")


# ---------------------------------------------------------------------------
# 列印

INDENT = "  "


def _port_line(p: PortDecl) -> str:
    return f"{p.direction.value} {p.data_type} {p.name}"


def _subcomponent_line(s: SubcomponentDecl) -> str:
    args = f"({', '.join(a.render() for a in s.args)})" if s.args else ""
    return f"component {s.component_type}{args} {s.name};"


def pretty_print(c: ComponentDefinition) -> str:
    """正規化文字: 標頭、autoconnect、埠 (in 先於 out)、子元件、顯式連接器"""
    params = f"({', '.join(p.name for p in c.parameters)})" if c.parameters else ""
    sections: List[List[str]] = []
    if c.autoconnect is not AutoconnectMode.OFF:
        sections.append([f"autoconnect {c.autoconnect.value};"])
    ports = c.in_ports + c.out_ports
    if ports:
        block = ["port"]
        for i, p in enumerate(ports):
            block.append(INDENT + _port_line(p) + ("," if i < len(ports) - 1 else ";"))
        sections.append(block)
    if c.subcomponents:
        sections.append([_subcomponent_line(s) for s in c.subcomponents])
    explicit = [conn for conn in c.connectors if conn.origin is Origin.EXPLICIT]
    if explicit:
        sections.append([f"connect {conn.source} -> {conn.target};" for conn in explicit])

    lines = [f"component {c.name}{params} {{"]
    for i, section in enumerate(sections):
        if i:
            lines.append("")
        lines.extend(INDENT + line for line in section)
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# 檔案載入

def discover(directory, extension: str) -> List[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise GenerationError("GEN-IO", f"目錄不存在: {root}", Location(str(root)))
    return sorted(p for p in root.rglob(f"*{extension}") if p.is_file())


def load_components(directories: Sequence) -> List[ComponentDefinition]:
    components = []
    for directory in directories:
        for path in discover(directory, ".arc"):
            components.append(parse_component_text(SourceUnit.read(path)))
    logger.info(f"已載入 {len(components)} 個元件模型")
    return components


def load_deltas(directory) -> Dict[str, DeltaModel]:
    """依宣告名稱索引所有 .delta 檔案"""
    deltas: Dict[str, DeltaModel] = {}
    for path in discover(directory, ".delta"):
        d = parse_delta_text(SourceUnit.read(path))
        if d.name in deltas:
            raise ParseError("PARSE-DUP-DELTA",
                             f"delta {d.name} 重複宣告 (另見 {deltas[d.name].location.file})",
                             d.location)
        deltas[d.name] = d
    logger.info(f"已載入 {len(deltas)} 個 delta 模型")
    return deltas


def load_config(path) -> ProductConfiguration:
    return parse_config_text(SourceUnit.read(path))


def load_types(path: Optional[str]) -> TypeHierarchy:
    if path is None:
        return TypeHierarchy()
    return parse_types_text(SourceUnit.read(path))


def source_files(directories: Iterable, extensions: Iterable[str]) -> List[Path]:
    files = []
    for directory in directories:
        for extension in extensions:
            files.extend(discover(directory, extension))
    return sorted(set(files))
