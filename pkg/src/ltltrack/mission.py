"""Mission files: JSON documents naming the formulas, predicates, plant,
references, initial state and simulation settings.

A minimal mission::

    {
      "phi_c": "F p1",
      "phi_s": "G safe",
      "plant": {"builtin": "sim2"},
      "references": {"z1": {"builtin": "circle_small"}},
      "predicates": {
        "p1": {"track": "z1", "epsilon": 0.6},
        "safe": {"box": {"A": [[1, 0], [0, 1]], "r": [0, 0],
                         "c": [-30, -30], "C": [30, 30]}}
      },
      "x0": [1.0, -1.0],
      "config": {"horizon": 20}
    }
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import ltl, plant
from .automaton import plan_mission
from .control import ControlConfig
from .engine import SimConfig, WarmStart
from .learning import NoiseSchedule

MISSION_SCHEMA = "ltltrack.mission/1"
BUNDLED = ("paper_fig1.mission", "paper_sec5.mission")


class MissionError(ValueError):
    pass


@dataclass
class Mission:
    name: str
    phi_c: ltl.Formula
    phi_s: ltl.Formula
    plant: plant.Plant
    refs: dict
    preds: dict
    x0: np.ndarray
    config: dict = field(default_factory=dict)
    edge_weights: dict = field(default_factory=dict)
    source: str | None = None

    def plan(self, horizon=None):
        cfg = self.config
        horizon = horizon if horizon is not None else float(cfg.get("horizon", 100.0))
        return plan_mission(self.phi_c, self.phi_s, self.preds, refs=self.refs, x0=self.x0,
                            horizon=horizon, edge_weights=self.edge_weights)

    def box_rows(self):
        box = ltl.atoms_of(self.phi_s)
        for name in sorted(box):
            if self.preds[name].is_box:
                return self.preds[name].kind.A.shape[0]
        raise MissionError("phi_s does not name a box predicate")

    def sim_config(self, overrides=None, seed=None) -> SimConfig:
        raw = merge(self.config, overrides or {})
        if seed is not None:
            raw["seed"] = int(seed)
        return build_sim_config(raw, self.box_rows())


def merge(base, extra):
    """Recursive dictionary merge; ``extra`` wins."""
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _matrix_Q(spec, m):
    Q = np.asarray(spec, dtype=float)
    if Q.ndim == 0:
        return float(Q) * np.eye(m)
    if Q.ndim == 1:
        if Q.size != m:
            raise MissionError(f"Q diagonal must have {m} entries")
        return np.diag(Q)
    if Q.shape != (m, m):
        raise MissionError(f"Q must be {m}x{m}")
    return Q


_TOP_KEYS = {"dt", "horizon", "seed", "mode", "penalty_scale", "carry_weights", "max_segments",
             "hold_time", "lipschitz_pairs", "lipschitz_factor", "log_weights",
             "control", "learning", "noise", "warm_start"}


def build_sim_config(raw: dict, m: int) -> SimConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise MissionError(f"unknown config keys: {sorted(unknown)}")
    try:
        c = dict(raw.get("control", {}))
        Q = _matrix_Q(c.pop("Q", 1.0), m)
        ctl = ControlConfig(Q=Q, **c)
        learn = dict(raw.get("learning", {}))
        nz = dict(raw.get("noise", {}))
        if "freqs" in nz:
            nz["freqs"] = tuple(float(v) for v in nz["freqs"])
        if "phases" in nz:
            nz["phases"] = tuple(float(v) for v in nz["phases"])
        noise = NoiseSchedule(**nz)
        warm = WarmStart(**raw.get("warm_start", {}))
        top = {k: raw[k] for k in _TOP_KEYS - {"control", "learning", "noise", "warm_start"}
               if k in raw}
        return SimConfig(control=ctl, noise=noise, warm=warm,
                         alpha=float(learn.get("alpha", 1000.0)),
                         alpha_u=float(learn.get("alpha_u", 5.0)), **top)
    except TypeError as exc:
        raise MissionError(f"bad config: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, MissionError):
            raise
        raise MissionError(f"bad config: {exc}") from None


def _predicate(name, spec):
    if "track" in spec:
        return ltl.PredicateDef(name, ltl.TrackBall(str(spec["track"]), float(spec["epsilon"])))
    if "box" in spec:
        b = spec["box"]
        A = np.asarray(b["A"], dtype=float)
        m = A.shape[0]
        r = np.asarray(b.get("r", np.zeros(m)), dtype=float)
        return ltl.PredicateDef(name, ltl.BoxMembership(A, r, np.asarray(b["c"], float),
                                                        np.asarray(b["C"], float)))
    raise MissionError(f"predicate {name!r} needs 'track' or 'box'")


def _plant(spec):
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in plant.BUILTIN_PLANTS:
            raise MissionError(f"unknown builtin plant {name!r}")
        return plant.BUILTIN_PLANTS[name]()
    if "f" in spec and "g" in spec:
        return plant.expression_plant(spec["f"], spec["g"], name=spec.get("name", "user"))
    raise MissionError("plant needs 'builtin' or both 'f' and 'g'")


def parse_mission(doc: dict, source=None) -> Mission:
    try:
        schema = doc.get("schema", MISSION_SCHEMA)
        if schema != MISSION_SCHEMA:
            raise MissionError(f"unsupported mission schema {schema!r}")
        phi_c = ltl.parse_formula(doc["phi_c"], ltl.COSAFE)
        phi_s = ltl.parse_formula(doc.get("phi_s", "true"), ltl.SAFE)
        preds = {n: _predicate(n, p) for n, p in doc["predicates"].items()}
        refs = {n: plant.expression_reference(n, r) for n, r in doc.get("references", {}).items()}
        pl = _plant(doc["plant"])
        x0 = np.asarray(doc["x0"], dtype=float)
    except KeyError as exc:
        raise MissionError(f"mission is missing {exc}") from None
    except ltl.LTLError as exc:
        raise MissionError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, MissionError):
            raise
        raise MissionError(str(exc)) from None
    if x0.shape != (pl.n,):
        raise MissionError(f"x0 must have {pl.n} entries")
    missing = (ltl.atoms_of(phi_c) | ltl.atoms_of(phi_s)) - set(preds)
    if missing:
        raise MissionError(f"atoms without predicate definitions: {sorted(missing)}")
    for p in preds.values():
        if p.is_track and p.kind.trajectory not in refs:
            raise MissionError(f"predicate {p.name!r} tracks unknown trajectory {p.kind.trajectory!r}")
    m = Mission(name=doc.get("name", "mission"), phi_c=phi_c, phi_s=phi_s, plant=pl, refs=refs,
                preds=preds, x0=x0, config=doc.get("config", {}),
                edge_weights=doc.get("edge_weights", {}), source=source)
    m.sim_config()  # validate early
    return m


def bundled_path(name):
    return resources.files("ltltrack").joinpath("missions", name)


def resolve(path):
    """A filesystem path, or the name of a bundled mission file."""
    if os.path.exists(path):
        return path
    base = os.path.basename(path)
    for cand in (base, base + ".mission"):
        if cand in BUNDLED:
            return str(bundled_path(cand))
    raise MissionError(f"mission file not found: {path}")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MissionError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise MissionError(f"cannot read {path}: {exc}") from None


def load_mission(path) -> Mission:
    path = resolve(path)
    return parse_mission(load_json(path), source=path)
