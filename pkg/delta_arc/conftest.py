from pathlib import Path

import pytest

from delta_arc.frontend import (SourceUnit, load_components, load_config, load_deltas, load_types,
                                parse_component_text, parse_delta_text)
from delta_arc.model import (AutoconnectMode, ComponentDefinition, ConfigArg, ConnectorDecl, Direction,
                             ModelRepository, ParameterDecl, PortDecl, PortRef, SubcomponentDecl)

ROOT = Path(__file__).resolve().parent.parent
MULTICOPTER = ROOT / "models" / "multicopter"
ABCD = ROOT / "models" / "abcd"


def arc(text: str):
    return parse_component_text(SourceUnit.from_text(text, "component"))


def delta(text: str):
    return parse_delta_text(SourceUnit.from_text(text, "delta"))


def repo_of(*texts: str) -> ModelRepository:
    return ModelRepository.build([arc(t) for t in texts])


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """避免開發者本機的 .env 或 DELTA_ARC_* 變數影響測試"""
    for name in ("DELTA_ARC_COLOR", "DELTA_ARC_LOG_LEVEL", "DELTA_ARC_LOG_FILE",
                 "DELTA_ARC_ORDER_BOUND", "DELTA_ARC_ORDER_STRATEGY", "DELTA_ARC_SEARCH_LIMIT"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("DELTA_ARC_ENV_FILE", str(tmp_path / "missing.env"))


@pytest.fixture
def core_repo() -> ModelRepository:
    return ModelRepository.build(load_components([MULTICOPTER / "core"]),
                                 load_types(MULTICOPTER / "multicopter.types"))


@pytest.fixture
def wolf_deltas():
    return load_deltas(MULTICOPTER / "deltas")


@pytest.fixture
def wolf_config():
    return load_config(MULTICOPTER / "DeltaWolf.deltacfg")


# ---------------------------------------------------------------------------
# 隨機架構 (所有埠都是 Integer，埠名稱取自共用名稱池以觸發 port 模式)

PORT_NAMES = ("v0", "v1", "v2", "v3", "v4", "v5")


def _ports(rng, ins: int, outs: int):
    names = rng.sample(PORT_NAMES, ins + outs)
    return (tuple(PortDecl(Direction.IN, "Integer", n) for n in names[:ins])
            + tuple(PortDecl(Direction.OUT, "Integer", n) for n in names[ins:]))


def random_leaf(rng, index: int) -> ComponentDefinition:
    params = (ParameterDecl("gain"),) if rng.random() < 0.5 else ()
    return ComponentDefinition(f"Leaf{index}", params,
                               ports=_ports(rng, rng.randint(1, 3), rng.randint(0, 2)))


def random_top(rng, leaves, max_subs=8, max_connectors=16) -> ComponentDefinition:
    params = (ParameterDecl("k"),) if rng.random() < 0.5 else ()
    ports = _ports(rng, rng.randint(1, 3), rng.randint(1, 2))
    subs = []
    for i in range(rng.randint(1, max_subs)):
        leaf = rng.choice(leaves)
        args = ()
        if leaf.parameters:
            args = (ConfigArg.parameter("k") if params and rng.random() < 0.5
                    else ConfigArg.integer(rng.randint(1, 9)),)
        subs.append(SubcomponentDecl(leaf.name, f"s{i}", args))
    by_name = {leaf.name: leaf for leaf in leaves}
    sources = [PortRef(None, p.name) for p in ports if p.direction is Direction.IN]
    targets = [PortRef(None, p.name) for p in ports if p.direction is Direction.OUT]
    for sub in subs:
        for p in by_name[sub.component_type].ports:
            (targets if p.direction is Direction.IN else sources).append(PortRef(sub.name, p.name))
    rng.shuffle(targets)
    connectors = []
    for target in targets[:max_connectors]:
        if rng.random() < 0.5:
            connectors.append(ConnectorDecl(rng.choice(sources), target))
    mode = rng.choice(list(AutoconnectMode))
    return ComponentDefinition("Top", params, mode, ports, tuple(subs), tuple(connectors))


def random_repo(rng) -> ModelRepository:
    leaves = [random_leaf(rng, i) for i in range(rng.randint(1, 4))]
    return ModelRepository.build(leaves + [random_top(rng, leaves)])
