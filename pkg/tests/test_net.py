import pytest

from wfbench import bench
from wfbench.definition import parse_definition
from wfbench.net import (
    FanoutMissing,
    FiringPolicy,
    GuardUnresolvable,
    ReplayError,
    UnknownTransition,
    boundary_coordinators,
    build_net,
    check_workflow_net,
    replay,
    token_game,
)

SWITCH = parse_definition(
    "name: s\nroot: a\nphases:\n"
    "  a: {type: task, func: f, next: sw}\n"
    "  sw: {type: switch, cases: [{var: x, op: '>', value: 1, next: b}], default: c}\n"
    "  b: {type: task, func: g}\n"
    "  c: {type: task, func: h}\n"
)


def widths(spec):
    return {**{p: 1 for p in spec.definition.phases}, **spec.canonical_fanouts}


@pytest.mark.parametrize("spec", bench.all_benchmarks(), ids=lambda s: s.name)
def test_every_corpus_net_is_a_workflow_net(spec):
    net = build_net(spec.definition, widths(spec))
    report = check_workflow_net(net)
    assert report.ok, report.lines()
    seq = token_game(net, spec.canonical_input, FiringPolicy(failures=set(spec.failures)))
    assert seq.complete
    assert len([t for t in seq.fired if t.startswith("f:")]) == spec.triple[0]


def test_switch_routes_by_first_matching_case():
    net = build_net(SWITCH, {})
    assert token_game(net, {"x": 5}).fired[-1] == "f:b"
    assert token_game(net, {"x": 0}).fired[-1] == "f:c"


def test_unset_guard_variable_is_reported():
    with pytest.raises(GuardUnresolvable):
        token_game(build_net(SWITCH, {}), {})


def test_failure_routes_to_compensation():
    spec = bench.trip_booking()
    net = build_net(spec.definition, {})
    happy = token_game(net, spec.canonical_input).fired
    failed = token_game(net, spec.canonical_input, FiringPolicy(failures={"confirm"})).fired
    assert "g:confirm:ok" in happy and "f:cancel_hotel" not in happy
    assert failed[-3:] == ["f:cancel_flight", "f:cancel_car", "f:cancel_hotel"]


def test_map_without_width_is_rejected():
    with pytest.raises(FanoutMissing):
        build_net(bench.video().definition, {})


def test_width_expands_map_instances():
    net = build_net(bench.video().definition, {"detect": 2})
    assert net.functions == ["f:decode", "f:detect[0]", "f:detect[1]", "f:acc"]
    # consecutive task/map boundaries need no coordinator of their own
    assert net.coordinators == ["c0"]


def test_unknown_transition_lookup():
    with pytest.raises(UnknownTransition):
        build_net(SWITCH, {}).preset("nope")


def test_replay_rejects_impossible_order():
    with pytest.raises(ReplayError):
        replay(build_net(SWITCH, {}), ["f:c"], [])


def test_replay_accepts_a_recorded_route():
    seq = replay(build_net(SWITCH, {}), ["f:a", "f:c"], ["g:sw:default"])
    assert seq.complete


@pytest.mark.parametrize(
    "exits,entries,merged,expected",
    [(1, 1, False, 0), (3, 1, False, 0), (3, 2, False, 1), (3, 1, True, 1), (2, 2, True, 2)],
)
def test_boundary_coordinators(exits, entries, merged, expected):
    assert boundary_coordinators(exits, entries, merged) == expected


def test_export_is_deterministic():
    a = build_net(bench.genome().definition, widths(bench.genome())).export_lines()
    b = build_net(bench.genome().definition, widths(bench.genome())).export_lines()
    assert a == b and a[0].startswith("place ")
