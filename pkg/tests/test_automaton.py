import itertools

import numpy as np
import pytest

from ltltrack import automaton, ltl
from ltltrack.automaton import (Automaton, MissionRejected, NoAcceptingPath, build_fsa, decompose,
                                monitor_step, path_states, plan_mission, shortest_accepting_path,
                                single_goal_labels)
from ltltrack.ltl import BoxMembership, PredicateDef, TrackBall, parse_formula
from ltltrack.plant import circle_reference

PHI_C = parse_formula("F p2 & (!p2 U p1)")
PHI_S = parse_formula("G p3")
ONE_GOAL = single_goal_labels(["p1", "p2"])


def two_goal_preds(eps=0.6, bound=30.0):
    box = BoxMembership(np.eye(2), np.zeros(2), -bound * np.ones(2), bound * np.ones(2))
    return {"p1": PredicateDef("p1", TrackBall("z1", eps)),
            "p2": PredicateDef("p2", TrackBall("z2", eps)),
            "p3": PredicateDef("p3", box)}


def two_goal_refs():
    return {"z1": circle_reference("z1", 0.5, 0.5), "z2": circle_reference("z2", 1.5, 0.5, np.pi)}


def test_two_goal_automaton_states():
    a = build_fsa(PHI_C)
    live = [q for q in a.states if q not in a.rejecting]
    assert sorted(live) == ["q0", "q1", "qf"]
    assert a.accepting == {"qf"}
    assert a.formulas["q1"] == parse_formula("F p2")


def test_two_goal_path_unit_weights():
    a = build_fsa(PHI_C)
    assert path_states(a, shortest_accepting_path(a, admissible=ONE_GOAL)) == ["q0", "q1", "qf"]


def test_unfiltered_path_takes_joint_label():
    # without mutual exclusion both goals could hold at once
    a = build_fsa(PHI_C)
    path = shortest_accepting_path(a)
    assert path_states(a, path) == ["q0", "qf"] and path[0].label == {"p1", "p2"}


def test_deterministic_and_complete():
    a = build_fsa(PHI_C)
    for q in a.states:
        for lab in a.labels():
            assert (q, lab) in a.transitions
    assert len(a.transitions) == len(a.states) * 2 ** len(a.atoms)


def test_states_reachable():
    a = build_fsa(parse_formula("(p U q) & F (q & X p)"))
    seen, todo = {a.initial}, [a.initial]
    while todo:
        q = todo.pop()
        for lab in a.labels():
            n = a.transitions[(q, lab)]
            if n not in seen:
                seen.add(n)
                todo.append(n)
    assert seen == set(a.states)


def test_true_formula():
    a = build_fsa(ltl.T)
    assert a.states == ["q0"] and a.accepting == {"q0"}
    assert shortest_accepting_path(a) == []


def test_eventually_single_atom():
    a = build_fsa(parse_formula("F p1"), ["p1"])
    assert len(a.states) == 2
    for n in range(1, 4):
        for word in itertools.product([False, True], repeat=n):
            vals = [{"p1": b} for b in word]
            assert a.accepts(vals) == any(word)


def test_monitor_step():
    a = build_fsa(PHI_C)
    assert monitor_step(a, "q0", {"p1": True, "p2": False})[0] == "q1"
    for v in ({"p1": False, "p2": False}, {"p1": True, "p2": True}):
        assert monitor_step(a, "qf", v) == ("qf", True, False)
    q, acc, rej = monitor_step(a, "q0", {"p1": False, "p2": True})
    assert rej and not acc and q in a.rejecting


def test_cosafe_only():
    with pytest.raises(automaton.AutomatonError):
        build_fsa(PHI_S)


def test_state_cap():
    with pytest.raises(automaton.StateCapExceeded):
        build_fsa(parse_formula("F (p & X (q & X (p & X q)))"), max_states=3)


def test_unsatisfiable():
    a = build_fsa(parse_formula("F (p & !p)"))
    with pytest.raises(NoAcceptingPath):
        shortest_accepting_path(a)


def toy_automaton():
    atoms = ("a", "b", "c")
    ts = {}
    labels = [frozenset(x for x, on in zip(atoms, bits) if on)
              for bits in itertools.product([False, True], repeat=3)]
    for q in ("q0", "q1", "qf"):
        for lab in labels:
            ts[(q, lab)] = q
    ts[("q0", frozenset("a"))] = "q1"
    ts[("q0", frozenset("b"))] = "qf"
    ts[("q1", frozenset("c"))] = "qf"
    forms = {q: ltl.atom(q) for q in ("q0", "q1")} | {"qf": ltl.T}
    return Automaton(atoms, forms, "q0", ts, frozenset({"qf"}), frozenset(),
                     {"q0": 0, "q1": 1, "qf": 2})


def brute_force_best(a, weight):
    best = (np.inf, None)

    def walk(q, prev, cost, path, seen):
        nonlocal best
        if q in a.accepting:
            if cost < best[0]:
                best = (cost, list(path))
            return
        for e in a.edges():
            if e.src != q or e.dst == q or e.dst in seen:
                continue
            walk(e.dst, e.label, cost + weight(prev, e), path + [e], seen | {e.dst})

    walk(a.initial, None, 0.0, [], {a.initial})
    return best


@pytest.mark.parametrize("direct,expect", [(3.0, ["q0", "q1", "qf"]), (1.5, ["q0", "qf"])])
def test_parallel_paths(direct, expect):
    a = toy_automaton()

    def weight(prev, e):
        return direct if (e.src, e.dst) == ("q0", "qf") else 1.0

    path = shortest_accepting_path(a, weight)
    assert path_states(a, path) == expect
    cost, bf = brute_force_best(a, weight)
    assert sum(weight(None, e) for e in path) == cost
    assert path_states(a, bf) == expect


def test_negative_weight_rejected():
    with pytest.raises(automaton.AutomatonError):
        shortest_accepting_path(toy_automaton(), lambda prev, e: -1.0)


def test_decompose_two_goal():
    a = build_fsa(PHI_C)
    plan = decompose(a, shortest_accepting_path(a, admissible=ONE_GOAL), two_goal_preds(), PHI_S)
    assert [s.goal for s in plan.segments] == ["p1", "p2"]
    assert [s.encoding for s in plan.segments] == ["!p2 & p3", "p3"]
    assert [s.entry for s in plan.segments] == ["x0", "p1"]
    assert plan.hold.state == "qf" and plan.hold.trajectory == "z2"


def test_plan_mission_two_goal_with_centroids():
    plan = plan_mission(PHI_C, PHI_S, two_goal_preds(), refs=two_goal_refs(), x0=[1.0, -1.0], horizon=30.0)
    assert path_states(plan.automaton, plan.path) == ["q0", "q1", "qf"]
    assert [s.trajectory for s in plan.segments] == ["z1", "z2"]
    js = plan.to_json()
    assert js["path"] == ["q0", "q1", "qf"]
    assert js["segments"][0]["safety_encoding"] == "!p2 & p3"


def test_edge_labels_hold_one_goal():
    plan = plan_mission(PHI_C, PHI_S, two_goal_preds())
    for e in plan.path:
        assert len(e.label & {"p1", "p2"}) == 1


def test_empty_path_hold_only():
    preds = two_goal_preds()
    plan = plan_mission(ltl.T, PHI_S, preds)
    assert plan.segments == [] and plan.hold.state == "q0"


def test_reference_leaving_box_rejected():
    preds = two_goal_preds(bound=1.0)
    with pytest.raises(MissionRejected) as info:
        plan_mission(PHI_C, PHI_S, preds, refs=two_goal_refs(), x0=[0.0, 0.0], horizon=10.0)
    assert info.value.t is not None and info.value.t >= 0.0


def test_untracked_goal_label():
    preds = two_goal_preds()
    preds["q"] = PredicateDef("q", BoxMembership(np.eye(2), 0, -np.ones(2), np.ones(2)))
    a = build_fsa(parse_formula("F q"))
    with pytest.raises(automaton.DecompositionError):
        decompose(a, shortest_accepting_path(a), preds, PHI_S)


def test_bad_safety_formula():
    a = build_fsa(PHI_C)
    with pytest.raises(automaton.DecompositionError):
        decompose(a, shortest_accepting_path(a), two_goal_preds(), parse_formula("G p1"))


def test_shared_trajectory_warns():
    preds = two_goal_preds()
    preds["p2"] = PredicateDef("p2", TrackBall("z1", 0.3))
    a = build_fsa(PHI_C)
    with pytest.warns(UserWarning):
        decompose(a, shortest_accepting_path(a, admissible=ONE_GOAL), preds, PHI_S)


def test_to_json_schema():
    a = build_fsa(PHI_C)
    js = a.to_json()
    assert js["initial"] == "q0" and js["accepting"] == ["qf"]
    assert len(js["edges"]) == len(a.states) * 4
