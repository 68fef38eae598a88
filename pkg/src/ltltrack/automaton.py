"""Finite state automata for co-safe formulas and mission decomposition.

States are canonical residual formulas reached by progression from the
mission formula; the automaton is complete over all valuations of its atoms.
The accepting state is the residual ``true`` and the rejecting state the
residual ``false``.  Rejecting states are kept so that a runtime monitor can
report the instant an obligation is broken.
"""

from __future__ import annotations

import heapq
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from . import ltl
from .ltl import Formula, PredicateDef

MAX_ATOMS = 8
DEFAULT_STATE_CAP = 4096


class AutomatonError(ValueError):
    pass


class StateCapExceeded(AutomatonError):
    pass


class NoAcceptingPath(AutomatonError):
    pass


class DecompositionError(ValueError):
    pass


class MissionRejected(DecompositionError):
    """A reference trajectory leaves the safety set; ``t`` is the first
    offending sample time."""

    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


def _label(v, atoms):
    if isinstance(v, frozenset):
        return v
    if isinstance(v, Mapping):
        missing = [a for a in atoms if a not in v]
        if missing:
            raise ltl.UnassignedAtomError(missing[0])
        return frozenset(a for a in atoms if v[a])
    return frozenset(v)


def label_str(label):
    return "{" + ",".join(sorted(label)) + "}"


@dataclass
class Automaton:
    atoms: tuple[str, ...]
    formulas: dict[str, Formula]
    initial: str
    transitions: dict[tuple[str, frozenset], str]
    accepting: frozenset[str]
    rejecting: frozenset[str]
    order: dict[str, int] = field(default_factory=dict)

    @property
    def states(self):
        return list(self.formulas)

    def step(self, q, v):
        return self.transitions[(q, _label(v, self.atoms))]

    def labels(self):
        for bits in itertools.product([False, True], repeat=len(self.atoms)):
            yield frozenset(a for a, b in zip(self.atoms, bits) if b)

    def edges(self):
        """All transitions as ``(src, label, dst)`` in deterministic order."""
        out = []
        for q in self.states:
            for lab in self.labels():
                out.append(Edge(q, lab, self.transitions[(q, lab)]))
        return out

    def accepts(self, valuations) -> bool:
        q = self.initial
        for v in valuations:
            q = self.step(q, v)
        return q in self.accepting

    def to_json(self):
        return {
            "atoms": list(self.atoms),
            "initial": self.initial,
            "accepting": sorted(self.accepting, key=self.order.get),
            "rejecting": sorted(self.rejecting, key=self.order.get),
            "states": {q: ltl.pretty(f) for q, f in self.formulas.items()},
            "edges": [
                {"src": e.src, "label": sorted(e.label), "dst": e.dst}
                for e in self.edges()
            ],
        }


class Edge(NamedTuple):
    src: str
    label: frozenset
    dst: str


def build_fsa(f: Formula, atoms: Sequence[str] | None = None,
              max_states: int = DEFAULT_STATE_CAP) -> Automaton:
    """Progression closure of a co-safe formula over all valuations."""
    if ltl.ALWAYS in ltl.kinds_of(f):
        raise AutomatonError(f"{ltl.pretty(f)!r} is not co-safe")
    if atoms is None:
        atoms = sorted(ltl.atoms_of(f))
    atoms = tuple(atoms)
    missing = ltl.atoms_of(f) - set(atoms)
    if missing:
        raise AutomatonError(f"formula atoms {sorted(missing)} not in alphabet")
    if len(atoms) > MAX_ATOMS:
        raise AutomatonError(f"{len(atoms)} atoms exceeds the limit of {MAX_ATOMS}")

    q0 = ltl.simplify(f)
    labels = [frozenset(a for a, b in zip(atoms, bits) if b)
              for bits in itertools.product([False, True], repeat=len(atoms))]
    ids = {q0: "q0"}
    order = {"q0": 0}
    counter = itertools.count(1)
    queue = [q0]
    transitions = {}
    while queue:
        cur = queue.pop(0)
        for lab in labels:
            nxt = ltl.simplify(ltl._progress(cur, lab))
            if nxt not in ids:
                if len(ids) >= max_states:
                    raise StateCapExceeded(f"more than {max_states} automaton states")
                if nxt == ltl.T:
                    name = "qf"
                elif nxt == ltl.F_:
                    name = "qr"
                else:
                    name = f"q{next(counter)}"
                ids[nxt] = name
                order[name] = len(order)
                queue.append(nxt)
            transitions[(ids[cur], lab)] = ids[nxt]
    formulas = {name: g for g, name in ids.items()}
    return Automaton(
        atoms=atoms,
        formulas=formulas,
        initial="q0",
        transitions=transitions,
        accepting=frozenset(n for g, n in ids.items() if g == ltl.T),
        rejecting=frozenset(n for g, n in ids.items() if g == ltl.F_),
        order=order,
    )


def monitor_step(a: Automaton, q: str, v) -> tuple[str, bool, bool]:
    """Advance the monitor; returns ``(next_state, accepting, rejecting)``."""
    nq = a.step(q, v)
    return nq, nq in a.accepting, nq in a.rejecting


def exclusive_labels(track_atoms):
    """Label filter enforcing mutually exclusive tracking regions: at most
    one tracking atom holds at a time."""
    track_atoms = frozenset(track_atoms)
    return lambda label: len(label & track_atoms) <= 1


def single_goal_labels(track_atoms):
    """Label filter for planning: exactly one tracking atom, which becomes
    the goal of the sub-problem for that edge."""
    track_atoms = frozenset(track_atoms)
    return lambda label: len(label & track_atoms) == 1


def shortest_accepting_path(a: Automaton, weight: Callable | None = None,
                            admissible: Callable | None = None) -> list[Edge]:
    """Minimum-weight run from the initial state to an accepting state.

    ``weight(prev_label, edge)`` gives the cost of taking ``edge`` when the
    previous edge carried ``prev_label`` (``None`` for the first edge); the
    default is unit weight.  ``admissible(label)`` filters edge labels.
    Self-loops and edges into rejecting states are never used.  Ties are
    broken by the sequence of visited state ids.
    """
    if a.initial in a.accepting:
        return []
    weight = weight or (lambda prev, e: 1.0)
    admissible = admissible or (lambda label: True)
    out_edges = {q: [] for q in a.states}
    for e in a.edges():
        if e.src == e.dst or e.dst in a.rejecting or e.src in a.accepting:
            continue
        if admissible(e.label):
            out_edges[e.src].append(e)
    for q in out_edges:
        out_edges[q].sort(key=lambda e: (a.order[e.dst], sorted(e.label)))

    def lab_key(lab):
        return () if lab is None else tuple(sorted(lab))

    start = (a.initial, None)
    best = {start: 0.0}
    heap = [(0.0, (a.order[a.initial],), (), start, ())]
    done = set()
    while heap:
        dist, state_seq, _, node, path = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        q, prev = node
        if q in a.accepting:
            return list(path)
        for e in out_edges[q]:
            w = float(weight(prev, e))
            if w < 0 or not np.isfinite(w):
                raise AutomatonError(f"invalid edge weight {w} on {e}")
            nd = dist + w
            nn = (e.dst, e.label)
            if nn in done or nd > best.get(nn, np.inf):
                continue
            best[nn] = nd
            seq = state_seq + (a.order[e.dst],)
            heapq.heappush(heap, (nd, seq, tuple(lab_key(x.label) for x in path + (e,)), nn, path + (e,)))
    raise NoAcceptingPath("no accepting state is reachable; the specification is unsatisfiable")


def path_states(a: Automaton, path: Sequence[Edge]) -> list[str]:
    if not path:
        return [a.initial]
    return [path[0].src] + [e.dst for e in path]


# ----------------------------------------------------------- decomposition

@dataclass
class SubProblem:
    index: int
    source: str
    target: str
    goal: str
    trajectory: str
    epsilon: float
    safety_box: str
    safety: ltl.BoxMembership
    avoid: tuple[str, ...]
    entry: str

    @property
    def encoding(self):
        return " & ".join([f"!{p}" for p in self.avoid] + [self.safety_box])

    def to_json(self):
        return {
            "index": self.index,
            "from": self.source,
            "to": self.target,
            "goal": self.goal,
            "trajectory": self.trajectory,
            "epsilon": self.epsilon,
            "entry": self.entry,
            "avoid": list(self.avoid),
            "safety_encoding": self.encoding,
            "safety": {
                "predicate": self.safety_box,
                "A": self.safety.A.tolist(),
                "r": self.safety.r.tolist(),
                "c": self.safety.c.tolist(),
                "C": self.safety.C.tolist(),
            },
        }


@dataclass
class HoldSegment:
    state: str
    trajectory: str | None
    safety_box: str
    safety: ltl.BoxMembership
    entry: str

    def to_json(self):
        return {"state": self.state, "trajectory": self.trajectory,
                "entry": self.entry, "safety_encoding": self.safety_box}


@dataclass
class Plan:
    automaton: Automaton
    path: list[Edge]
    segments: list[SubProblem]
    hold: HoldSegment

    def to_json(self):
        return {
            "schema": "ltltrack.plan/1",
            "automaton": self.automaton.to_json(),
            "path": path_states(self.automaton, self.path),
            "path_labels": [sorted(e.label) for e in self.path],
            "segments": [s.to_json() for s in self.segments],
            "hold": self.hold.to_json(),
        }


def safety_predicate(phi_s: Formula, preds: Mapping[str, PredicateDef]) -> str:
    """Name of the box predicate ``p`` in ``phi_s = G p``."""
    if phi_s.kind != ltl.ALWAYS or phi_s.children[0].kind != ltl.ATOM:
        raise DecompositionError(f"safe formula must have the form 'G p', got {ltl.pretty(phi_s)!r}")
    name = phi_s.children[0].name
    if name not in preds or not preds[name].is_box:
        raise DecompositionError(f"safety predicate {name!r} has no box definition")
    return name


def centroid_weight(preds, refs, x0):
    """Edge weights: Euclidean distance between the previous goal region's
    centre (or ``x0`` for the first edge) and the next one, both at t=0."""
    x0 = np.asarray(x0, dtype=float)

    def centre(label):
        goals = [p for p in sorted(label) if p in preds and preds[p].is_track]
        if not goals:
            return None
        return refs[preds[goals[0]].kind.trajectory].position(0.0)

    def weight(prev, e):
        here = x0 if prev is None else centre(prev)
        there = centre(e.label)
        if here is None or there is None:
            return 0.0
        return float(np.linalg.norm(there - here))

    return weight


def check_reference(traj_id, refs, box: ltl.BoxMembership, times):
    """Raise MissionRejected at the first sample where the reference is not
    strictly inside the box."""
    ref = refs[traj_id]
    for t in times:
        if box.margin(ref.position(float(t))) <= 0:
            raise MissionRejected(
                f"reference {traj_id!r} leaves the safety set at t={float(t):.6g}", t=float(t))


def decompose(a: Automaton, path: Sequence[Edge], preds: Mapping[str, PredicateDef],
              phi_s: Formula, refs: Mapping | None = None, horizon: float | None = None,
              samples: int = 2001) -> Plan:
    """Split the chosen accepting run into tracking sub-problems.

    Each edge becomes one sub-problem whose goal is the tracking predicate
    labelling it.  Its safety set is the box of ``phi_s`` together with
    avoid-obligations: tracking predicates that would drive the automaton to
    rejection if they held in the source state.  When ``refs`` and
    ``horizon`` are given, every goal trajectory is checked against the box
    on ``samples`` evenly spaced times.
    """
    box_name = safety_predicate(phi_s, preds)
    box = preds[box_name].kind
    track_atoms = [p for p in a.atoms if p in preds and preds[p].is_track]
    by_traj = {}
    for p in track_atoms:
        by_traj.setdefault(preds[p].kind.trajectory, []).append(p)
    for traj, names in by_traj.items():
        if len(names) > 1:
            warnings.warn(f"tracking predicates {names} share trajectory {traj!r}; "
                          "their regions are not disjoint")
    times = np.linspace(0.0, horizon, samples) if horizon else None

    segments = []
    entry = "x0"
    for k, e in enumerate(path):
        goals = [p for p in sorted(e.label) if p in track_atoms]
        if len(goals) != 1:
            untracked = sorted(set(e.label) - set(track_atoms))
            if untracked:
                raise DecompositionError(f"edge {e.src}->{e.dst} is labelled by {untracked} "
                                         "with no TrackBall definition")
            raise DecompositionError(f"edge {e.src}->{e.dst} needs exactly one goal predicate, "
                                     f"got {label_str(e.label)}")
        goal = goals[0]
        avoid = tuple(p for p in track_atoms if p != goal
                      and a.step(e.src, frozenset([p])) in a.rejecting)
        gdef = preds[goal].kind
        if refs is not None and times is not None:
            if gdef.trajectory not in refs:
                raise DecompositionError(f"unknown trajectory {gdef.trajectory!r}")
            check_reference(gdef.trajectory, refs, box, times)
        segments.append(SubProblem(
            index=k, source=e.src, target=e.dst, goal=goal, trajectory=gdef.trajectory,
            epsilon=gdef.epsilon, safety_box=box_name, safety=box, avoid=avoid, entry=entry))
        entry = goal
    final = path[-1].dst if path else a.initial
    hold = HoldSegment(state=final,
                       trajectory=segments[-1].trajectory if segments else None,
                       safety_box=box_name, safety=box, entry=entry)
    return Plan(automaton=a, path=list(path), segments=segments, hold=hold)


def plan_mission(phi_c: Formula, phi_s: Formula, preds: Mapping[str, PredicateDef],
                 refs=None, x0=None, horizon=None, edge_weights: Mapping | None = None) -> Plan:
    """Build the automaton, pick the shortest admissible accepting run and
    decompose it.  ``edge_weights`` maps ``"src->dst"`` to a fixed weight."""
    a = build_fsa(phi_c)
    track_atoms = [p for p in a.atoms if p in preds and preds[p].is_track]
    base = unit = (lambda prev, e: 1.0)
    if refs is not None and x0 is not None:
        base = centroid_weight(preds, refs, x0)
    overrides = dict(edge_weights or {})

    def weight(prev, e):
        key = f"{e.src}->{e.dst}"
        if key in overrides:
            return float(overrides[key])
        return base(prev, e)

    path = shortest_accepting_path(a, weight if (overrides or base is not unit) else None,
                                   single_goal_labels(track_atoms))
    return decompose(a, path, preds, phi_s, refs=refs, horizon=horizon)
