"""
delta 套用順序
評估 after 條件，並以深度優先搜尋找出完整的線性套用順序
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import Diagnostic, Location, NO_LOCATION, OrderingError, warning

logger = logging.getLogger(__name__)

STRATEGIES = ("config", "lex")
DEFAULT_BOUND = 10
DEFAULT_SEARCH_LIMIT = 1_000_000
MAX_REPORTED_PREFIXES = 5


# ---------------------------------------------------------------------------
# 順序條件 (delta 名稱上的布林運算式)

@dataclass(frozen=True)
class Leaf:
    name: str

    def evaluate(self, applied: FrozenSet[str]) -> bool:
        return self.name in applied

    def names(self) -> FrozenSet[str]:
        return frozenset([self.name])

    def render(self, parent: int = 0) -> str:
        return self.name


@dataclass(frozen=True)
class Not:
    operand: object

    def evaluate(self, applied):
        return not self.operand.evaluate(applied)

    def names(self):
        return self.operand.names()

    def render(self, parent: int = 0) -> str:
        return "!" + self.operand.render(3)


@dataclass(frozen=True)
class And:
    operands: Tuple[object, ...]

    def evaluate(self, applied):
        return all(op.evaluate(applied) for op in self.operands)

    def names(self):
        return frozenset().union(*(op.names() for op in self.operands))

    def render(self, parent: int = 0) -> str:
        text = " && ".join(op.render(2) for op in self.operands)
        return f"({text})" if parent > 2 else text


@dataclass(frozen=True)
class Or:
    operands: Tuple[object, ...]

    def evaluate(self, applied):
        return any(op.evaluate(applied) for op in self.operands)

    def names(self):
        return frozenset().union(*(op.names() for op in self.operands))

    def render(self, parent: int = 0) -> str:
        text = " || ".join(op.render(1) for op in self.operands)
        return f"({text})" if parent > 1 else text


def eval_constraint(e, applied: Iterable[str]) -> bool:
    """已套用的 delta 為 true，其餘 (包括不在組態中的) 為 false；沒有條件時恆為 true"""
    if e is None:
        return True
    return e.evaluate(frozenset(applied))


# ---------------------------------------------------------------------------
# 產品組態

@dataclass(frozen=True)
class ProductConfiguration:
    name: str
    deltas: Tuple[str, ...] = ()
    location: Location = field(default=NO_LOCATION, compare=False)


@dataclass(frozen=True)
class ApplicationOrder:
    deltas: Tuple[str, ...]

    def __iter__(self):
        return iter(self.deltas)

    def __len__(self):
        return len(self.deltas)

    def __str__(self) -> str:
        return " -> ".join(self.deltas)


def _constraints(config: ProductConfiguration, deltas: Mapping[str, object]) -> Dict[str, object]:
    missing = [name for name in config.deltas if name not in deltas]
    if missing:
        raise OrderingError("GEN-DELTA-MISSING",
                            f"組態 {config.name} 引用了不存在的 delta: {', '.join(missing)}",
                            config.location)
    return {name: deltas[name].constraint for name in config.deltas}


def foreign_references(config: ProductConfiguration,
                       deltas: Mapping[str, object]) -> List[Diagnostic]:
    """條件中引用不在組態內的 delta 時發出警告 (該名稱永遠視為 false)"""
    selected = set(config.deltas)
    result = []
    for name in config.deltas:
        constraint = deltas[name].constraint
        if constraint is None:
            continue
        for other in sorted(constraint.names() - selected):
            result.append(warning(
                "ORD-FOREIGN",
                f"delta {name} 的順序條件引用了組態外的 delta {other}，視為未套用",
                deltas[name].location))
    return result


def _children(candidates: Sequence[str], constraints, applied: Tuple[str, ...]):
    done = frozenset(applied)
    return [d for d in candidates
            if d not in done and eval_constraint(constraints[d], done)]


def _ranked(config: ProductConfiguration, strategy: str) -> List[str]:
    if strategy not in STRATEGIES:
        raise OrderingError("CFG-INVALID", f"未知的排序策略: {strategy}")
    if strategy == "lex":
        return sorted(config.deltas)
    return list(config.deltas)


def compute_order(config: ProductConfiguration, deltas: Mapping[str, object],
                  strategy: str = "config", limit: int = DEFAULT_SEARCH_LIMIT) -> ApplicationOrder:
    """在套用樹上做深度優先搜尋，回傳第一個完整的葉節點

    失敗的已套用集合只展開一次；失敗集合超過 limit 個時以 ORD-TOO-LARGE 中止。
    """
    constraints = _constraints(config, deltas)
    candidates = _ranked(config, strategy)
    total = len(candidates)
    failed: Set[FrozenSet[str]] = set()
    longest: List[Tuple[str, ...]] = []

    def record_dead_end(applied: Tuple[str, ...]):
        if longest and len(applied) < len(longest[0]):
            return
        if longest and len(applied) > len(longest[0]):
            longest.clear()
        if len(longest) < MAX_REPORTED_PREFIXES:
            longest.append(applied)

    def search(applied: Tuple[str, ...]) -> Optional[Tuple[str, ...]]:
        if len(applied) == total:
            return applied
        done = frozenset(applied)
        if done in failed:
            return None
        if len(failed) >= limit:
            raise OrderingError("ORD-TOO-LARGE",
                                f"組態 {config.name} 的套用順序搜尋超過 {limit} 個狀態",
                                config.location)
        children = _children(candidates, constraints, applied)
        if not children:
            record_dead_end(applied)
        for child in children:
            found = search(applied + (child,))
            if found is not None:
                return found
        failed.add(done)
        return None

    found = search(())
    if found is None:
        shown = "; ".join(" -> ".join(p) if p else "(空)" for p in sorted(longest))
        raise OrderingError("ORD-UNSAT",
                            f"組態 {config.name} 不存在完整的套用順序；最長可套用前綴: {shown}",
                            config.location)
    order = ApplicationOrder(found)
    logger.info(f"套用順序 ({strategy}): {order}")
    return order


def enumerate_orders(config: ProductConfiguration, deltas: Mapping[str, object],
                     bound: int = DEFAULT_BOUND) -> List[ApplicationOrder]:
    """列出套用樹的所有完整葉節點 (依字典序排序)"""
    if len(config.deltas) > bound:
        raise OrderingError("ORD-TOO-LARGE",
                            f"組態 {config.name} 含 {len(config.deltas)} 個 delta，超過窮舉上限 {bound}",
                            config.location)
    constraints = _constraints(config, deltas)
    candidates = sorted(config.deltas)
    result: List[ApplicationOrder] = []

    def walk(applied: Tuple[str, ...]):
        if len(applied) == len(candidates):
            result.append(ApplicationOrder(applied))
            return
        for child in _children(candidates, constraints, applied):
            walk(applied + (child,))

    walk(())
    return result


def is_valid_order(order: Sequence[str], constraints: Mapping[str, object]) -> bool:
    applied = []
    for name in order:
        if not eval_constraint(constraints[name], applied):
            return False
        applied.append(name)
    return True

