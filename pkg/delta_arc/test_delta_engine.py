import random
from collections import Counter
from dataclasses import replace

import pytest

from delta_arc.conftest import arc, delta, random_repo, repo_of
from delta_arc.delta_engine import (AddPort, AddSubcomponent, Connect, DeltaModel, Disconnect,
                                    ModifyConfig, RemoveParameter, RemovePort, RemoveSubcomponent,
                                    Rename, Replace, ScopedOp, apply_delta, apply_op,
                                    expand_autoconnect, introduce_autoconnect, remove_unreachable)
from delta_arc.errors import ApplicabilityError, WellformednessError
from delta_arc.generation import structural_equal
from delta_arc.model import (AutoconnectMode, ComponentDefinition, ConfigArg, ConnectorDecl,
                             Direction, ModelRepository, ParameterDecl, PortDecl, PortRef,
                             SubcomponentDecl, TypeHierarchy, effective_connectors,
                             resolve_autoconnect)
from delta_arc.wellformedness import check_full

LEAF = "component Leaf(gain) { port in Integer x, out Integer y; }"
WIDER = "component Wider { port in Integer x, in Integer z, out Integer y; }"
TOP = """
component Top {
  port in Integer x, out Integer y;
  component Leaf(1) l;
  connect x -> l.x;
  connect l.y -> y;
}
"""


@pytest.fixture
def small_repo():
    return repo_of(LEAF, WIDER, TOP)


def _port(direction, data_type, name):
    return PortDecl(Direction(direction), data_type, name)


APPLICABILITY = [
    ("Nope", AddPort(_port("in", "Integer", "z")), "DM-NO-COMPONENT"),
    ("Top", AddPort(_port("in", "Integer", "x")), "DM-ADD-DUP"),
    ("Top", RemovePort("nope"), "DM-RM-MISSING"),
    ("Top", RemovePort("x"), "DM-RM-PORT-CONNECTED"),
    ("Top", RemoveSubcomponent("l"), "DM-RM-SUBC-CONNECTED"),
    ("Top", Rename("port", "x", "y"), "DM-RENAME-BAD"),
    ("Top", ModifyConfig("l", (("speed", ConfigArg.integer(2)),)), "DM-CONFIG-NO-PARAM"),
    ("Top", Replace("l", "Wider"), "DM-REPLACE-INCOMPAT"),
]


@pytest.mark.parametrize("target, op, code", APPLICABILITY, ids=[c for _, _, c in APPLICABILITY])
def test_applicability_checks(small_repo, target, op, code):
    snapshot = repo_of(LEAF, WIDER, TOP)
    with pytest.raises(ApplicabilityError) as info:
        apply_op(small_repo, target, op)
    assert info.value.code == code
    assert structural_equal(small_repo, snapshot)


def test_failed_delta_leaves_input_untouched(small_repo):
    d = DeltaModel("Broken", body=(
        ScopedOp("Top", AddPort(_port("in", "Integer", "extra"))),
        ScopedOp("Top", RemovePort("x")),
    ))
    with pytest.raises(ApplicabilityError) as info:
        apply_delta(small_repo, d)
    assert info.value.code == "DM-RM-PORT-CONNECTED"
    assert info.value.delta == "Broken"
    assert "delta Broken" in info.value.message
    assert small_repo.get("Top").port("extra") is None


def test_remove_port_used_by_parent(small_repo):
    with pytest.raises(ApplicabilityError) as info:
        apply_op(small_repo, "Leaf", RemovePort("y"))
    assert info.value.code == "DM-RM-PORT-CONNECTED"


def test_connect_rules(small_repo):
    repo = apply_op(small_repo, "Top", Disconnect(PortRef("l", "y"), PortRef(None, "y")))
    with pytest.raises(ApplicabilityError) as dup:
        apply_op(small_repo, "Top", Connect(ConnectorDecl(PortRef(None, "x"), PortRef("l", "x"))))
    assert dup.value.code == "DM-ADD-DUP"
    with pytest.raises(ApplicabilityError) as missing:
        apply_op(repo, "Top", Connect(ConnectorDecl(PortRef("ghost", "y"), PortRef(None, "y"))))
    assert missing.value.code == "DM-CONN-INVALID"
    assert "ghost" in missing.value.message
    with pytest.raises(ApplicabilityError) as direction:
        apply_op(repo, "Top", Connect(ConnectorDecl(PortRef(None, "y"), PortRef("l", "x"))))
    assert direction.value.code == "DM-CONN-INVALID"
    with pytest.raises(ApplicabilityError) as fan_in:
        apply_op(small_repo, "Top", Connect(ConnectorDecl(PortRef("l", "y"), PortRef("l", "x"))))
    assert fan_in.value.code == "DM-CONN-INVALID"
    rewired = apply_op(repo, "Top", Connect(ConnectorDecl(PortRef("l", "y"), PortRef(None, "y"))))
    assert structural_equal(rewired, small_repo)


def test_disconnect_requires_explicit_connector(small_repo):
    with pytest.raises(ApplicabilityError) as info:
        apply_op(small_repo, "Top", Disconnect(PortRef(None, "x"), PortRef(None, "y")))
    assert info.value.code == "DM-DISC-MISSING"


def test_add_subcomponent_of_unknown_type(small_repo):
    with pytest.raises(ApplicabilityError) as info:
        apply_op(small_repo, "Top", AddSubcomponent(SubcomponentDecl("Ghost", "g")))
    assert info.value.code == "DM-TYPE-UNKNOWN"


def test_parameter_in_use_cannot_be_removed():
    repo = repo_of(LEAF, "component Mid(k) { component Leaf(k) l; }")
    with pytest.raises(ApplicabilityError) as info:
        apply_op(repo, "Mid", RemoveParameter("k"))
    assert info.value.code == "DM-RM-PARAM-USED"


def test_modify_config_sets_argument(core_repo):
    repo = apply_op(core_repo, "FlightController",
                    ModifyConfig("scp", (("engineCount", ConfigArg.integer(6)),)))
    assert repo.get("FlightController").subcomponent("scp").args == (ConfigArg.integer(6),)


def test_modify_config_of_missing_subcomponent(core_repo):
    with pytest.raises(ApplicabilityError) as info:
        apply_op(core_repo, "FlightController",
                 ModifyConfig("nope", (("engineCount", ConfigArg.integer(6)),)))
    assert info.value.code == "DM-NO-COMPONENT"


# ---------------------------------------------------------------------------
# rename

def test_rename_port_updates_parent_connectors(small_repo):
    repo = apply_op(small_repo, "Leaf", Rename("port", "x", "input"))
    assert repo.get("Leaf").port("input") is not None
    assert ConnectorDecl(PortRef(None, "x"), PortRef("l", "input")) in repo.get("Top").connectors
    assert check_full(repo).passed


def test_rename_subcomponent_updates_connectors(small_repo):
    repo = apply_op(small_repo, "Top", Rename("component", "l", "leaf"))
    keys = [c.key for c in repo.get("Top").connectors]
    assert keys == [(PortRef(None, "x"), PortRef("leaf", "x")), (PortRef("leaf", "y"), PortRef(None, "y"))]


def test_rename_parameter_updates_arguments():
    repo = repo_of(LEAF, "component Mid(k) { component Leaf(k) l; }")
    repo = apply_op(repo, "Mid", Rename("parameter", "k", "speed"))
    assert repo.get("Mid").parameters == (ParameterDecl("speed"),)
    assert repo.get("Mid").subcomponent("l").args == (ConfigArg.parameter("speed"),)


def test_rename_after_height_hold_moves_connector_source(core_repo, wolf_deltas):
    repo = core_repo
    for name in ("PressureSensor", "HeightHold"):
        repo, _ = apply_delta(repo, wolf_deltas[name])
    repo = apply_op(repo, "SteeringCmdProcessor", Rename("component", "quadPowerCalc", "hexaPowerCalc"))
    sources = [c.source for c in repo.get("SteeringCmdProcessor").connectors]
    assert PortRef("hexaPowerCalc", "powerOutput") in sources
    assert PortRef("quadPowerCalc", "powerOutput") not in sources


def _substitute(connectors, mapping):
    return Counter((mapping(c.source), mapping(c.target)) for c in connectors)


def test_rename_round_trip_on_random_repositories():
    rng = random.Random(2024)
    for _ in range(100):
        repo = random_repo(rng)
        top = repo.get("Top")
        kind = rng.choice(["port", "component", "parameter"])
        if kind == "port":
            leaf = repo.get(rng.choice(sorted({s.component_type for s in top.subcomponents})))
            target, old = leaf.name, rng.choice(leaf.ports).name
            owners = {s.name for s in top.subcomponents if s.component_type == leaf.name}

            def mapping(ref, old=old, owners=owners):
                return PortRef(ref.owner, "renamed") if ref.owner in owners and ref.port == old else ref
        elif kind == "component":
            target, old = "Top", rng.choice(top.subcomponents).name

            def mapping(ref, old=old):
                return PortRef("renamed", ref.port) if ref.owner == old else ref
        else:
            holders = [c for c in repo.components.values() if c.parameters]
            if not holders:
                continue
            holder = rng.choice(holders)
            target, old = holder.name, holder.parameters[0].name

            def mapping(ref):
                return ref

        renamed = apply_op(repo, target, Rename(kind, old, "renamed"))
        assert (_substitute(renamed.get("Top").connectors, lambda r: r)
                == _substitute(top.connectors, mapping))
        back = apply_op(renamed, target, Rename(kind, "renamed", old))
        assert structural_equal(back, repo)


# ---------------------------------------------------------------------------
# replace

HIERARCHY = TypeHierarchy.from_declarations([("Number", []), ("Integer", ["Number"]), ("Text", [])])


def test_replace_rewires_through_mapping(small_repo):
    better = arc("component Better { port in Number input, out Integer result, out Text note; }")
    repo = ModelRepository.build(list(small_repo.components.values()) + [better], HIERARCHY)
    repo = apply_op(repo, "Top", Replace("l", "Better", "b", ()))
    top = repo.get("Top")
    assert [s.name for s in top.subcomponents] == ["b"]
    assert [c.key for c in top.connectors] == [
        (PortRef(None, "x"), PortRef("b", "input")),
        (PortRef("b", "result"), PortRef(None, "y")),
    ]
    assert check_full(repo).passed


def test_replace_keeps_name_and_arguments(small_repo):
    same = arc("component Same(gain) { port in Integer x, out Integer y; }")
    repo = ModelRepository.build(list(small_repo.components.values()) + [same])
    repo = apply_op(repo, "Top", Replace("l", "Same"))
    assert repo.get("Top").subcomponent("l") == SubcomponentDecl("Same", "l", (ConfigArg.integer(1),))


def test_replace_with_ambiguous_mapping(small_repo):
    twin = arc("component Twin { port in Integer a, in Integer b, out Integer y; }")
    pair = arc("component Pair { port in Integer x, in Integer z; }")
    repo = ModelRepository.build([twin, pair, arc("component Top { component Pair p; }")])
    with pytest.raises(ApplicabilityError) as info:
        apply_op(repo, "Top", Replace("p", "Twin"))
    assert info.value.code == "DM-REPLACE-AMBIGUOUS"


# ---------------------------------------------------------------------------
# autoconnect

def test_expand_makes_implicit_connectors_explicit(core_repo):
    before = resolve_autoconnect(core_repo.get("FlightController"), core_repo)
    assert len(before) == 11
    repo = expand_autoconnect(core_repo)
    fc = repo.get("FlightController")
    assert fc.autoconnect is AutoconnectMode.OFF
    assert {c.key for c in fc.connectors} == {c.key for c in before}
    for name in core_repo.names():
        old = {c.key for c in effective_connectors(core_repo.get(name), core_repo)}
        new = {c.key for c in effective_connectors(repo.get(name), repo)}
        assert old == new
    assert structural_equal(expand_autoconnect(repo), repo)


def test_expand_on_component_without_autoconnect(core_repo):
    assert structural_equal(expand_autoconnect(core_repo, "OutputProcessor"), core_repo)


def test_expand_then_introduce_restores_corpus_components(core_repo):
    candidates = [name for name in core_repo.names()
                  if core_repo.get(name).autoconnect is AutoconnectMode.PORT
                  and not core_repo.get(name).connectors]
    assert candidates == ["FlightController", "SteeringCmdProcessor"]
    for name in candidates:
        expanded = expand_autoconnect(core_repo, name)
        assert expanded.get(name).connectors
        restored = introduce_autoconnect(expanded, AutoconnectMode.PORT, name)
        assert restored.get(name).canonical() == core_repo.get(name).canonical()


def test_introduce_without_changes(core_repo):
    repo = introduce_autoconnect(core_repo, AutoconnectMode.PORT, "FlightController")
    assert structural_equal(repo, core_repo)


def test_introduce_removes_matching_connectors(small_repo):
    top = introduce_autoconnect(small_repo, AutoconnectMode.PORT, "Top").get("Top")
    assert top.autoconnect is AutoconnectMode.PORT
    assert top.connectors == ()


def test_introduce_keeps_connectors_with_different_names():
    repo = repo_of(
        "component Stage { port in Integer i, out Integer o; }",
        "component Top { port in Integer a, out Integer o; component Stage s; "
        "connect a -> s.i; connect s.o -> o; }",
    )
    repo = introduce_autoconnect(repo, AutoconnectMode.PORT, "Top")
    top = repo.get("Top")
    assert [c.key for c in top.connectors] == [(PortRef(None, "a"), PortRef("s", "i"))]
    for conn in top.connectors:
        trial = ComponentDefinition(top.name, top.parameters, top.autoconnect, top.ports,
                                    top.subcomponents, tuple(c for c in top.connectors if c != conn))
        assert conn.key not in {c.key for c in resolve_autoconnect(trial, repo)}


# ---------------------------------------------------------------------------
# remove unreachable

def test_remove_unreachable_chain():
    repo = repo_of(
        "component Stage { port in Integer i, out Integer o; }",
        "component Sink { port in Integer i; }",
        """
        component Top {
          port in Integer a, out Integer r;
          component Stage keep;
          component Stage s1;
          component Sink s2;
          connect a -> keep.i;
          connect keep.o -> r;
          connect a -> s1.i;
          connect s1.o -> s2.i;
        }
        """,
    )
    top = remove_unreachable(repo, "Top").get("Top")
    assert [s.name for s in top.subcomponents] == ["keep"]
    assert [c.key for c in top.connectors] == [
        (PortRef(None, "a"), PortRef("keep", "i")),
        (PortRef("keep", "o"), PortRef(None, "r")),
    ]


def test_remove_unreachable_on_connected_component(small_repo):
    assert structural_equal(remove_unreachable(small_repo), small_repo)


def test_remove_unreachable_drops_parent_connectors():
    repo = repo_of(
        "component Leaf { port in Integer i, out Integer o; }",
        "component Mid { port in Integer i, in Integer unused, out Integer o; component Leaf l; "
        "connect i -> l.i; connect l.o -> o; }",
        "component Top { port in Integer a, out Integer r; component Mid m; "
        "connect a -> m.unused; connect a -> m.i; connect m.o -> r; }",
    )
    result = remove_unreachable(repo)
    assert result.get("Mid").port("unused") is None
    assert [c.key for c in result.get("Top").connectors] == [
        (PortRef(None, "a"), PortRef("m", "i")),
        (PortRef("m", "o"), PortRef(None, "r")),
    ]
    assert check_full(result).passed


def _implicit(top: ComponentDefinition, repo: ModelRepository):
    """逐一比對所有來源與目標的推導 (隨機架構的埠都是 Integer)"""
    if top.autoconnect is AutoconnectMode.OFF:
        return []
    sources = [PortRef(None, p.name) for p in top.in_ports]
    targets = [PortRef(None, p.name) for p in top.out_ports]
    for sub in top.subcomponents:
        leaf = repo.get(sub.component_type)
        sources += [PortRef(sub.name, p.name) for p in leaf.out_ports]
        targets += [PortRef(sub.name, p.name) for p in leaf.in_ports]
    wired = {c.target for c in top.connectors}
    result = []
    for t in targets:
        if t in wired:
            continue
        candidates = [s for s in sources
                      if (s.owner, t.owner) != (None, None)
                      and (s.owner is None or s.owner != t.owner)
                      and (top.autoconnect is AutoconnectMode.TYPE or s.port == t.port)]
        if len(candidates) == 1:
            result.append(ConnectorDecl(candidates[0], t))
    return result


def _oracle(top: ComponentDefinition, repo: ModelRepository) -> ComponentDefinition:
    while True:
        union = list(top.connectors) + _implicit(top, repo)
        feeding = {c.source.owner for c in union if c.source.owner is not None}
        dead = {s.name for s in top.subcomponents} - feeding
        if not dead:
            break
        top = replace(top,
                      subcomponents=tuple(s for s in top.subcomponents if s.name not in dead),
                      connectors=tuple(c for c in top.connectors
                                       if c.source.owner not in dead and c.target.owner not in dead))
    union = list(top.connectors) + _implicit(top, repo)
    used = {ref.port for c in union for ref in (c.source, c.target) if ref.owner is None}
    return replace(top, ports=tuple(p for p in top.ports if p.name in used))


def test_remove_unreachable_matches_oracle_on_random_architectures():
    rng = random.Random(42)
    modes = set()
    for _ in range(150):
        repo = random_repo(rng)
        top = repo.get("Top")
        modes.add(top.autoconnect)
        result = remove_unreachable(repo, "Top")
        pruned = result.get("Top")
        assert pruned.canonical() == _oracle(top, repo).canonical()
        union = effective_connectors(pruned, result)
        for sub in pruned.subcomponents:
            assert any(c.source.owner == sub.name for c in union)
        for port in pruned.ports:
            assert any(PortRef(None, port.name) in c.key for c in union)
    assert modes == set(AutoconnectMode)


# ---------------------------------------------------------------------------
# delta

def test_hexocopter_on_core(core_repo, wolf_deltas):
    repo, report = apply_delta(core_repo, wolf_deltas["HexoCopter"])
    assert report.passed
    assert [p.name for p in repo.get("OutputProcessor").out_ports][-2:] == ["engine5", "engine6"]
    fc = repo.get("FlightController")
    assert [p.name for p in fc.out_ports] == [f"engine{i}" for i in range(1, 7)]
    assert fc.subcomponent("scp").args == (ConfigArg.integer(6),)
    scp = repo.get("SteeringCmdProcessor")
    assert scp.subcomponent("hexaPowerCalc") is not None
    assert scp.subcomponent("quadPowerCalc") is None


def test_empty_delta(core_repo):
    repo, report = apply_delta(core_repo, delta("delta Nothing { }"))
    assert report.passed
    assert structural_equal(repo, core_repo)


def test_height_hold_after_hexocopter_is_rejected(core_repo, wolf_deltas):
    repo = core_repo
    for name in ("PressureSensor", "HexoCopter"):
        repo, _ = apply_delta(repo, wolf_deltas[name])
    with pytest.raises(ApplicabilityError) as info:
        apply_delta(repo, wolf_deltas["HeightHold"])
    assert info.value.code == "DM-CONN-INVALID"
    assert "quadPowerCalc" in info.value.message
    assert info.value.location.file.endswith("HeightHold.delta")


def test_remove_flight_mode_narrative(core_repo, wolf_deltas):
    repo = core_repo
    for name in ("PressureSensor", "HeightHold", "HexoCopter", "RemoveHHFlightMode"):
        repo, _ = apply_delta(repo, wolf_deltas[name])
    fc = repo.get("FlightController")
    scp = repo.get("SteeringCmdProcessor")
    assert fc.port("steeringMode") is None
    assert scp.port("steeringMode") is None
    assert [s.name for s in fc.subcomponents] == ["scp", "op", "gEval", "accEval", "pEval"]
    assert sorted(s.name for s in scp.subcomponents) == ["ha", "hc", "hexaPowerCalc"]
    assert fc.autoconnect is AutoconnectMode.PORT
    assert fc.connectors == ()
    assert {c.key for c in scp.connectors} == {
        (PortRef("hexaPowerCalc", "powerOutput"), PortRef("ha", "curPowerCalc")),
        (PortRef("ha", "newPowerOutput"), PortRef(None, "powerOutput")),
    }


def test_local_check_failure_aborts_delta(core_repo):
    d = delta("delta Bad { modify component OutputProcessor { add port out Integer Engine5; } }")
    with pytest.raises(WellformednessError) as info:
        apply_delta(core_repo, d)
    assert info.value.code == "CC-PORT-LOWER"
