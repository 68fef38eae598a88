"""Closed-loop simulation of tracking sub-problems and whole missions."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import ltl
from .automaton import Automaton, Plan, SubProblem, monitor_step
from .barrier import BarrierMap
from .control import ControlConfig, clamp_input, estimate_lipschitz, penalty
from .learning import ActorBasis, LearnerState, NoiseSchedule, QuadraticBasis, warm_start
from .plant import Plant, TrackingModel

TRACE_SCHEMA = "ltltrack.trace/1"


class IntegrationError(FloatingPointError):
    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


def rk4_step(deriv, y, dt, t=0.0):
    """Classical fourth-order Runge-Kutta step for ``ydot = deriv(t, y)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = deriv(t, y)
    k2 = deriv(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = deriv(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = deriv(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not math.isfinite(float(np.sum(out))):
        raise IntegrationError(f"non-finite state at t={t:.6g}", t=t)
    return out


class Exit(str, enum.Enum):
    GOAL_REACHED = "GoalReached"
    HORIZON_EXCEEDED = "HorizonExceeded"
    SAFETY_VIOLATED = "SafetyViolated"
    REJECTED = "Rejected"


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class WarmStart:
    enabled: bool = True
    iters: int = 30000
    alpha: float = 3000.0
    alpha_u: float = 5.0
    gamma_start: float = 10.0
    radius: float = 2.0
    span: float = 4 * math.pi


@dataclass(frozen=True)
class SimConfig:
    """Everything that affects a run.  ``mode="reach"`` ends a segment when
    its goal is first met; ``mode="track"`` keeps tracking for the whole
    horizon and succeeds if the goal was met at some step."""

    control: ControlConfig
    dt: float = 1e-3
    horizon: float = 100.0
    seed: int = 0
    mode: str = "reach"
    alpha: float = 1000.0
    alpha_u: float = 5.0
    penalty_scale: float = 1.0
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)
    warm: WarmStart = field(default_factory=WarmStart)
    carry_weights: bool = True
    max_segments: int | None = None
    hold_time: float = 0.0
    lipschitz_pairs: int = 1000
    lipschitz_factor: float = 2.0
    log_weights: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least one step")
        if self.mode not in ("reach", "track"):
            raise ValueError(f"mode must be 'reach' or 'track', got {self.mode!r}")
        if self.hold_time < 0:
            raise ValueError("hold_time must be non-negative")

    def to_json(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("control", "noise", "warm")}
        d["control"] = self.control.to_json()
        d["noise"] = {"a0": self.noise.a0, "kappa": self.noise.kappa,
                      "freqs": list(self.noise.freqs), "t_off": self.noise.t_off}
        d["warm_start"] = asdict(self.warm)
        return d

    def digest(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ------------------------------------------------------------------ trace

class TraceLog:
    """Per-step records of one segment, stored in preallocated arrays.

    Row ``k`` describes the state at time ``t[k]`` and the input applied on
    ``[t[k], t[k] + dt)``.  ``theta_u[k]`` is the actor weight in force just
    before any jump at step ``k``, so a jump at an event row first shows
    up in the following row.
    """

    def __init__(self, steps, n, m, m_u, h, h2, log_weights=True):
        self.size = 0
        self.t = np.empty(steps)
        self.x = np.empty((steps, n))
        self.z = np.empty((steps, n))
        self.sa = np.empty((steps, 2 * m))
        self.u = np.empty((steps, m_u))
        self.u_hat = np.empty((steps, m_u))
        self.event = np.zeros(steps, bool)
        self.e_c = np.empty(steps)
        self.e_trig = np.empty(steps)
        self.err = np.empty(steps)
        self.margin = np.empty(steps)
        self.state = np.empty(steps, np.int16)
        self.log_weights = log_weights
        w = steps if log_weights else 0
        self.theta_c = np.empty((w, h))
        self.theta_u = np.empty((w, h2 * m_u))
        self.states: list[str] = []

    def trim(self):
        k = self.size
        for name in ("t", "x", "z", "sa", "u", "u_hat", "event", "e_c", "e_trig", "err",
                     "margin", "state"):
            setattr(self, name, getattr(self, name)[:k])
        if self.log_weights:
            self.theta_c = self.theta_c[:k]
            self.theta_u = self.theta_u[:k]
        return self

    def columns(self):
        cols = [("t", self.t[:, None])]
        cols += [(f"x{i + 1}", self.x[:, i:i + 1]) for i in range(self.x.shape[1])]
        cols += [(f"z{i + 1}", self.z[:, i:i + 1]) for i in range(self.z.shape[1])]
        cols += [(f"sa{i + 1}", self.sa[:, i:i + 1]) for i in range(self.sa.shape[1])]
        cols += [(f"u{i + 1}", self.u[:, i:i + 1]) for i in range(self.u.shape[1])]
        cols += [(f"u_hat{i + 1}", self.u_hat[:, i:i + 1]) for i in range(self.u.shape[1])]
        cols += [("event", self.event[:, None].astype(float)), ("e_c", self.e_c[:, None]),
                 ("e_trig", self.e_trig[:, None]), ("err", self.err[:, None]),
                 ("margin", self.margin[:, None]), ("fsa_state", self.state[:, None].astype(float))]
        if self.log_weights:
            cols += [(f"theta_c{i + 1}", self.theta_c[:, i:i + 1]) for i in range(self.theta_c.shape[1])]
            cols += [(f"theta_u{i + 1}", self.theta_u[:, i:i + 1]) for i in range(self.theta_u.shape[1])]
        return cols

    def digest(self):
        h = hashlib.sha256()
        for name, col in self.columns():
            h.update(name.encode())
            h.update(np.ascontiguousarray(col).tobytes())
        return h.hexdigest()

    def event_times(self):
        return self.t[self.event]

    def inter_event_times(self):
        return np.diff(self.event_times())

    def inter_event_steps(self):
        """Gaps between events counted in integration steps (exact, unlike
        differences of float times)."""
        return np.diff(np.flatnonzero(self.event))


def write_csv(logs, path, segment_ids=None):
    """Write one or more TraceLogs as a single CSV with a leading
    ``segment`` column; the column order is fixed by ``TraceLog.columns``."""
    logs = list(logs)
    segment_ids = segment_ids or list(range(len(logs)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = None
        for sid, log in zip(segment_ids, logs):
            cols = log.columns()
            names = ["segment"] + [n for n, _ in cols]
            if header is None:
                header = names
                w.writerow(header)
            data = np.hstack([c for _, c in cols]) if cols else np.empty((0, 0))
            for row in data:
                w.writerow([sid] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------- monitor

def predicate_evaluator(p, refs):
    """Fast closure ``ev(x, t) -> bool`` with the semantics of
    ``ltl.eval_predicate``."""
    k = p.kind
    if isinstance(k, ltl.TrackBall):
        if k.trajectory not in refs:
            raise ltl.UnknownTrajectoryError(
                f"predicate {p.name!r}: unknown trajectory {k.trajectory!r}")
        pos = refs[k.trajectory].position
        eps2 = k.epsilon * k.epsilon

        def ev(x, t):
            d = x - pos(t)
            return float(d @ d) <= eps2
        return ev
    A, r, c, C = k.A, k.r, k.c, k.C

    def ev(x, t):
        q = A @ x + r
        return bool(min((q - c).min(), (C - q).min()) >= 0.0)
    return ev


class Monitor:
    """Runtime progress of the co-safe automaton plus the safety box."""

    def __init__(self, a: Automaton, preds, refs, box_name):
        self.a = a
        self.preds = preds
        self.refs = refs
        self.box_name = box_name
        self.atoms = a.atoms
        self.all_atoms = tuple(sorted(set(a.atoms) | {box_name}))
        for p in self.all_atoms:
            if p not in preds:
                raise KeyError(f"atom {p!r} has no predicate definition")
        self._evals = [self._evaluator(preds[p]) for p in self.all_atoms]
        self._fsa_cols = [self.all_atoms.index(p) for p in self.atoms]
        self._box_col = self.all_atoms.index(box_name)
        self.state = a.initial
        self.values = []
        self.times = []
        self.safe = True

    def _evaluator(self, p):
        return predicate_evaluator(p, self.refs)

    def valuation(self, x, t):
        return {p: ev(x, t) for p, ev in zip(self.all_atoms, self._evals)}

    def step(self, x, t):
        row = [ev(x, t) for ev in self._evals]
        self.values.append(row)
        self.times.append(t)
        if not row[self._box_col]:
            self.safe = False
        label = frozenset(self.atoms[i] for i, c in enumerate(self._fsa_cols) if row[c])
        self.state, acc, rej = monitor_step(self.a, self.state, label)
        return row, acc, rej

    def trace(self):
        return ltl.Trace(np.asarray(self.times), self.all_atoms,
                         np.asarray(self.values, dtype=bool).reshape(len(self.times), -1))


# ------------------------------------------------------------- segments

@dataclass
class SegmentResult:
    index: int
    exit: Exit
    log: TraceLog
    learner: LearnerState
    x_final: np.ndarray
    t_final: float
    summary: dict


def make_bases(m):
    return QuadraticBasis(2 * m), ActorBasis(2 * m)


def box_map(sp) -> BarrierMap:
    b = sp.safety
    return BarrierMap(b.A, b.r, b.c, b.C)


def reference_samples(model: TrackingModel, warm: WarmStart, rng, count, t0=0.0):
    """States near the reference for offline learning.

    ``t`` is uniform over ``[t0, t0 + span]`` and ``x = z(t) + U(-radius,
    radius)^n``; draws with ``x`` outside the box are redrawn.  Returns
    ``(SA, FA, GA)`` as consumed by ``warm_start``.
    """
    bm, ref, plant = model.bm, model.ref, model.plant
    n, m = plant.n, model.m
    T = np.empty(0)
    X = np.empty((0, n))
    Z = np.empty((0, n))
    for _ in range(100):
        need = count - len(T)
        if need <= 0:
            break
        tt = t0 + rng.uniform(0.0, warm.span, need)
        zz = ref.positions(tt)
        xx = zz + rng.uniform(-warm.radius, warm.radius, (need, n))
        ok = bm.local_rows(xx)[2] > 0
        T, X, Z = np.concatenate([T, tt[ok]]), np.vstack([X, xx[ok]]), np.vstack([Z, zz[ok]])
    else:
        raise ValueError("could not draw warm-start samples inside the safety box")
    S, W, _ = bm.local_rows(X)
    Zs, Wz, zmargin = bm.local_rows(Z)
    if not np.all(zmargin > 0):
        raise ValueError("reference leaves the safety box in the warm-start window")
    Fx, Gx = plant.fields_batch(X)
    A = bm.A
    F = W * (Fx @ A.T)
    G = W[:, :, None] * np.einsum("ij,njk->nik", A, Gx)
    fd = Wz * (ref.h_batch(Z) @ A.T)
    SA = np.hstack([S - Zs, Zs])
    FA = np.hstack([F - fd, fd])
    GA = np.concatenate([G, np.zeros_like(G)], axis=1)
    return SA, FA, GA


def initial_learner(model, cfg: SimConfig, rng, critic, actor):
    learner = LearnerState.random(critic, actor, model.m_u, cfg.alpha, cfg.alpha_u, rng)
    if cfg.warm.enabled and cfg.warm.iters > 0:
        samples = reference_samples(model, cfg.warm, rng, cfg.warm.iters)
        learner = warm_start(learner, samples, cfg.control, critic, actor, dt=cfg.dt,
                             gamma_start=cfg.warm.gamma_start, alpha=cfg.warm.alpha,
                             alpha_u=cfg.warm.alpha_u, penalty_scale=cfg.penalty_scale)
    return learner


def lipschitz_for(model, learner, cfg: SimConfig, rng, actor):
    """Sampled Lipschitz ratio of the current actor over the bounding box
    of the learning region, and the constant it implies."""
    SA = reference_samples(model, cfg.warm, rng, 2 * cfg.lipschitz_pairs)[0]
    lo, hi = SA.min(axis=0), SA.max(axis=0)
    thu = learner.theta_u
    policy = lambda sa: clamp_input(thu.T @ actor(sa), cfg.control)
    return estimate_lipschitz(policy, lo, hi, rng, cfg.lipschitz_pairs, cfg.lipschitz_factor)


def run_subproblem(sp: SubProblem, plant: Plant, refs, x0, cfg: SimConfig, learner=None,
                   monitor: Monitor | None = None, preds=None, t0=0.0, rng=None,
                   horizon=None) -> SegmentResult:
    """Drive one tracking sub-problem from ``x0`` at mission time ``t0``.

    Per step: sample and jump the actor on a trigger event, apply the held
    actor output plus exploration noise, take a critic step, integrate the
    plant with RK4 and evaluate the mission predicates at the new state.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    horizon = cfg.horizon if horizon is None else horizon
    bm = box_map(sp)
    ref = refs[sp.trajectory]
    model = TrackingModel(plant, bm, ref)
    m, n, m_u = model.m, plant.n, plant.m_u
    critic, actor = make_bases(m)
    ctl = cfg.control
    if ctl.m != m:
        raise ValueError(f"Q is {ctl.m}x{ctl.m} but the safety box has {m} rows")
    x = np.array(x0, dtype=float)
    steps = int(round(horizon / cfg.dt))
    log = TraceLog(steps + 1, n, m, m_u, critic.size, actor.size, cfg.log_weights)
    wall = time.perf_counter()

    if not bm.margin(x) > 0:
        log.trim()
        return SegmentResult(sp.index, Exit.REJECTED, log, learner, x, t0,
                             {"exit": Exit.REJECTED.value, "reason": "x0 outside the safety interior"})
    if learner is None:
        learner = initial_learner(model, cfg, rng, critic, actor)
    else:
        learner = learner.copy()
    L_info = {}
    if ctl.L is None:
        L, raw = lipschitz_for(model, learner, cfg, rng, actor)
        ctl = ctl.with_L(max(L, 1e-6))
        L_info = {"L_estimated": ctl.L, "lipschitz_sampled": raw}

    thc = learner.theta_c.copy()
    thu = learner.theta_u.copy()
    dt = cfg.dt
    step_c = learner.alpha * dt
    alpha_u = learner.alpha_u
    Q, gamma, penalty_scale = ctl.Q, ctl.gamma, cfg.penalty_scale
    lam, g1, umax = ctl.lam, ctl.gamma1, ctl.u_max
    k_tanh = 1.0 / (2.0 * g1 * lam)
    noise = cfg.noise
    avoid = [(p, predicate_evaluator(preds[p], refs)) for p in sp.avoid] if preds else []
    eps2 = sp.epsilon ** 2
    den = ctl.L ** 2 * lam * g1
    coef = (0.5 - ctl.beta ** 2) * ctl.lambda_min
    A = bm.A
    identity = bm.identity
    iu = critic.iu
    half_gamma = 0.5 * gamma
    position, h = ref.position, ref.h
    f, g, xdot = plant.f, plant.g, plant.xdot
    log_w = cfg.log_weights

    sample = None
    u_hat = np.zeros(m_u)
    u_hat_R = 0.0
    event_times = []
    state_names = {}
    exit_kind = Exit.HORIZON_EXCEEDED
    reach_time = None
    reason = ""
    max_ratio = 0.0
    last_sample_u = None
    t = t0
    k = 0
    while True:
        z = position(t)
        s, w, mg = bm.local(x)
        if s is None:
            exit_kind, reason = Exit.SAFETY_VIOLATED, f"state left the safety box at t={t:.6g}"
            break
        zs, wz, _ = bm.local(z)
        e_s = s - zs
        sa = np.concatenate([e_s, zs])
        d = x - z
        err2 = float(d @ d)

        if monitor is not None:
            # the handoff instant was already observed by the previous segment
            if not monitor.times or monitor.times[-1] < t:
                _, _, rej = monitor.step(x, t)
                if rej:
                    exit_kind, reason = Exit.SAFETY_VIOLATED, f"automaton rejected at t={t:.6g}"
                    break
            state_names.setdefault(monitor.state, len(state_names))
        hit = [name for name, ev in avoid if ev(x, t)]
        if hit:
            exit_kind, reason = Exit.SAFETY_VIOLATED, f"avoided predicate {hit[0]} held at t={t:.6g}"
            break
        if reach_time is None and err2 <= eps2:
            reach_time = t
        i = log.size
        log.t[i], log.x[i], log.z[i], log.sa[i] = t, x, z, sa
        log.err[i], log.margin[i] = math.sqrt(err2), mg
        log.state[i] = state_names[monitor.state] if monitor is not None else -1
        if log_w:
            log.theta_c[i] = thc
            log.theta_u[i] = thu.reshape(-1)
        if k >= steps or (cfg.mode == "reach" and reach_time is not None):
            log.u[i] = log.u_hat[i] = u_hat
            log.e_c[i] = log.e_trig[i] = np.nan
            log.size += 1
            if reach_time is not None:
                exit_kind = Exit.GOAL_REACHED
            break

        # s-domain fields at the current state
        if identity:
            F = w * f(x)
            G = w[:, None] * g(x)
            fd = wz * h(z)
        else:
            F = w * (A @ f(x))
            G = w[:, None] * (A @ g(x))
            fd = wz * (A @ h(z))

        # event trigger
        if sample is None:
            fire, et2 = True, 0.0
        else:
            et = sample - sa
            et2 = float(et @ et)
            fire = et2 > (coef * float(e_s @ e_s) + u_hat_R) / den
        if fire:
            sample = sa
            event_times.append(t)
            phu = actor(sa)
            grad = critic.grad(thc, sa)
            target = -lam * np.tanh(k_tanh * (G.T @ grad[:m]))
            thu = thu - alpha_u * np.outer(phu, thu.T @ phu - target)
            new_u = np.minimum(np.maximum(thu.T @ phu, -umax), umax)
            if last_sample_u is not None:
                dsa = float(np.linalg.norm(sa - last_sample))
                if dsa > 0:
                    max_ratio = max(max_ratio, float(np.linalg.norm(new_u - last_sample_u)) / dsa)
            last_sample, last_sample_u = sa, new_u
            u_hat = new_u
            u_hat_R = penalty(u_hat, lam, g1)

        nz = noise(t - t0)
        u = np.minimum(np.maximum(u_hat + nz, -umax), umax) if nz else u_hat
        R_u = penalty(u, lam, g1) if nz else u_hat_R

        # critic
        top = F - fd + G @ u
        P = np.outer(sa, np.concatenate([top, fd]) - half_gamma * sa)
        omega = (P + P.T)[iu]
        e_c = float(thc @ omega) + 0.5 * float(e_s @ (Q @ e_s)) + penalty_scale * R_u
        nrm = float(omega @ omega) + 1.0
        thc = thc - (step_c * e_c / (nrm * nrm)) * omega

        log.u[i], log.u_hat[i], log.event[i] = u, u_hat, fire
        log.e_c[i], log.e_trig[i] = e_c, math.sqrt(et2)
        log.size += 1
        if not math.isfinite(e_c):
            exit_kind, reason = Exit.SAFETY_VIOLATED, f"critic residual diverged at t={t:.6g}"
            break

        try:
            x = rk4_step(lambda _t, y: xdot(y, u), x, dt, t)
        except IntegrationError as exc:
            exit_kind, reason = Exit.SAFETY_VIOLATED, str(exc)
            break
        k += 1
        t = t0 + k * dt

    if cfg.mode == "track" and exit_kind is Exit.HORIZON_EXCEEDED and reach_time is not None:
        exit_kind = Exit.GOAL_REACHED
    log.trim()
    log.states = sorted(state_names, key=state_names.get)
    out_learner = LearnerState(thc, thu, learner.alpha, learner.alpha_u)
    summary = segment_summary(log, cfg, exit_kind, reach_time, t0)
    summary.update(L_info)
    summary["L"] = ctl.L
    summary["lipschitz_observed"] = max_ratio
    summary["wall_time"] = time.perf_counter() - wall
    if reason:
        summary["reason"] = reason
    return SegmentResult(sp.index, exit_kind, log, out_learner, x, t, summary)


def segment_summary(log: TraceLog, cfg: SimConfig, exit_kind, reach_time, t0):
    n_rows = len(log.t)
    n_steps = int(np.count_nonzero(~np.isnan(log.e_c))) if n_rows else 0
    gaps = log.inter_event_times()
    gap_steps = log.inter_event_steps()
    active = ~np.isnan(log.e_c)
    post = active & (log.t - t0 >= cfg.noise.off_time)
    ev_post = log.event & post
    if n_rows:
        span = log.t[-1] - t0
        tail = log.t >= log.t[-1] - 0.2 * span
    else:
        tail = np.zeros(0, bool)
    return {
        "exit": exit_kind.value,
        "steps": n_steps,
        "events": int(log.event.sum()),
        "event_ratio": float(log.event.sum() / n_steps) if n_steps else 0.0,
        "post_noise_steps": int(post.sum()),
        "post_noise_events": int(ev_post.sum()),
        "post_noise_event_ratio": float(ev_post.sum() / post.sum()) if post.sum() else None,
        "min_inter_event": float(gaps.min()) if gaps.size else None,
        "mean_inter_event": float(gaps.mean()) if gaps.size else None,
        "min_inter_event_steps": int(gap_steps.min()) if gap_steps.size else None,
        "reach_time": reach_time,
        "final_error": float(log.err[-1]) if n_rows else None,
        "tail_max_error": float(log.err[tail].max()) if tail.any() else None,
        "min_margin": float(log.margin.min()) if n_rows else None,
        "max_abs_u": float(np.abs(log.u).max()) if n_rows else 0.0,
        "trace_sha256": log.digest(),
    }


# ---------------------------------------------------------------- mission

@dataclass
class MissionResult:
    plan: Plan
    segments: list
    verdict: str
    success: bool
    complete: bool
    fsa_state: str
    replay_agrees: bool | None
    summary: dict

    def digest(self):
        h = hashlib.sha256()
        for seg in self.segments:
            h.update(seg.log.digest().encode())
        return h.hexdigest()


def run_mission(plan: Plan, plant: Plant, refs, preds, x0, cfg: SimConfig, phi_c=None,
                phi_s=None) -> MissionResult:
    """Execute the plan's segments in order, handing off state and weights.

    The verdict needs every executed segment to reach its goal with the
    safety box never violated; once all segments ran, the automaton must
    also be accepting and an independent replay of the recorded valuations
    through the trace semantics must agree.
    """
    rng = np.random.default_rng(cfg.seed)
    a = plan.automaton
    box_name = plan.hold.safety_box
    monitor = Monitor(a, preds, refs, box_name)
    x = np.array(x0, dtype=float)
    t = 0.0
    learner = None
    results = []
    todo = plan.segments if cfg.max_segments is None else plan.segments[:cfg.max_segments]
    ok = True
    for sp in todo:
        res = run_subproblem(sp, plant, refs, x, cfg, learner=learner, monitor=monitor,
                             preds=preds, t0=t, rng=rng)
        results.append(res)
        if res.exit is not Exit.GOAL_REACHED:
            ok = False
            break
        x, t = res.x_final, res.t_final
        learner = res.learner if cfg.carry_weights else None
    complete = ok and len(todo) == len(plan.segments)
    if complete and cfg.hold_time > 0 and plan.hold.trajectory is not None:
        hold_sp = replace(plan.segments[-1], index=len(plan.segments), avoid=()) if plan.segments else None
        if hold_sp is not None:
            hold_cfg = replace(cfg, mode="track")
            res = run_subproblem(hold_sp, plant, refs, x, hold_cfg, learner=learner, monitor=monitor,
                                 preds=preds, t0=t, rng=rng, horizon=cfg.hold_time)
            results.append(res)
            ok = ok and res.exit is Exit.GOAL_REACHED
    if not results and monitor.preds:
        monitor.step(x, t)
    accepting = monitor.state in a.accepting
    replay = None
    if phi_c is not None and monitor.times:
        tr = monitor.trace()
        replay_c = ltl.satisfies(tr, phi_c)
        replay_s = ltl.satisfies(tr, phi_s) if phi_s is not None else monitor.safe
        replay = (replay_c == accepting) and (replay_s == monitor.safe)
    safe = monitor.safe and all(r.exit is not Exit.SAFETY_VIOLATED for r in results)
    if not ok or not safe:
        verdict = results[-1].exit.value if results and not ok else "SafetyViolated"
        success = False
    elif complete:
        success = accepting and replay is not False
        verdict = "Satisfied" if success else "NotSatisfied"
    else:
        verdict, success = "Partial", True
    summary = {
        "verdict": verdict,
        "success": success,
        "complete": complete,
        "fsa_state": monitor.state,
        "accepting": accepting,
        "replay_agrees": replay,
        "safe": safe,
        "config_sha256": cfg.digest(),
        "segments": [dict(r.summary, index=r.index, goal=plan.segments[min(r.index, len(plan.segments) - 1)].goal
                          if plan.segments else None) for r in results],
    }
    out = MissionResult(plan, results, verdict, success, complete, monitor.state, replay, summary)
    summary["trace_sha256"] = out.digest()
    return out
