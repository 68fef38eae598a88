"""Self-check suites behind ``ltltrack verify``.

Each suite returns a list of ``Check`` records; failures are reported, not
raised.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import automaton, barrier, control, learning, ltl

SUITES = ("barrier", "ltl", "trigger", "learning", "mission")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float | int | str | None
    tolerance: str

    def to_json(self):
        return asdict(self)


# ---------------------------------------------------------------- barrier

def barrier_checks(c=(-30.0, -30.0), C=(30.0, 30.0), points=1000):
    out = []
    worst_rt = 0.0
    for c0, C0 in zip(c, C):
        q = np.linspace(c0, C0, points + 2)[1:-1] * 0.999
        worst_rt = max(worst_rt, float(np.max(np.abs(barrier.barrier_inv(barrier.barrier(q, c0, C0), c0, C0) - q))))
    out.append(Check("barrier", "round_trip", worst_rt < 1e-9, worst_rt, "< 1e-9"))

    worst_fd = 0.0
    h = 1e-6
    for c0, C0 in zip(c, C):
        y = np.linspace(-10, 10, points)
        fd = (barrier.barrier_inv(y + h, c0, C0) - barrier.barrier_inv(y - h, c0, C0)) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd - barrier.barrier_inv_deriv(y, c0, C0)))))
    out.append(Check("barrier", "derivative_vs_fd", worst_fd < 1e-6, worst_fd, "< 1e-6"))

    bm = barrier.BarrierMap.box(np.asarray(c), np.asarray(C))
    rng = np.random.default_rng(0)
    min_margin = math.inf
    for radius in (1.0, 10.0, 100.0, 1e3):
        for _ in range(250):
            d = rng.normal(size=bm.m)
            s = radius * d / np.linalg.norm(d)
            min_margin = min(min_margin, bm.margin(bm.to_x(s)))
    out.append(Check("barrier", "to_x_interior", min_margin > 0, min_margin, "> 0 up to |s| = 1e3"))
    return out


# -------------------------------------------------------------------- ltl

def fsa_mismatches(formulas, atoms=("p", "q"), max_len=4):
    """Count disagreements between automaton acceptance and the trace
    semantics over every word up to ``max_len``."""
    letters, lengths = ltl.all_words(atoms, max_len)
    labels = [frozenset(a for a, b in zip(atoms, row) if b)
              for row in letters.reshape(-1, len(atoms))]
    labels = np.array(labels, dtype=object).reshape(letters.shape[:2])
    mismatches = []
    cases = 0
    for f in formulas:
        truth = ltl.evaluate_words(f, letters, lengths, atoms, "strong")
        a = automaton.build_fsa(f, atoms)
        for w in range(len(lengths)):
            q = a.initial
            for i in range(lengths[w]):
                q = a.transitions[(q, labels[w, i])]
            cases += 1
            if (q in a.accepting) != bool(truth[w]):
                mismatches.append((ltl.pretty(f), w))
    return cases, mismatches


def ltl_checks():
    t0 = time.perf_counter()
    formulas = ltl.enumerate_formulas(("p", "q"), max_depth=3)
    cases, bad = fsa_mismatches(formulas)
    elapsed = time.perf_counter() - t0
    return [
        Check("ltl", "fsa_equals_semantics", not bad, len(bad), f"0 mismatches over {cases} cases"),
        Check("ltl", "exhaustive_runtime", elapsed < 5.0, round(elapsed, 3), "< 5 s"),
    ]


# ---------------------------------------------------------------- trigger

def trigger_checks():
    cfg = control.ControlConfig(Q=800 * np.eye(2), lam=5.0, gamma1=1.0, beta=0.5, L=10.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        e = rng.normal(size=2) * 3
        u = rng.uniform(-4.99, 4.99, 1)
        expect = 0.4 * float(e @ e) + control.control_penalty(u, cfg) / 500.0
        worst = max(worst, abs(control.trigger_threshold(e, u, cfg) - expect))
    out = [Check("trigger", "threshold_arithmetic", worst < 1e-12, worst, "< 1e-12")]
    Gaug = np.zeros((4, 1))
    top = 0.0
    for _ in range(10000):
        Gaug[:2, 0] = rng.normal(size=2) * 10 ** rng.uniform(-3, 3)
        grad = rng.normal(size=4) * 10 ** rng.uniform(-3, 6)
        top = max(top, float(np.max(np.abs(control.optimal_control(grad, Gaug, cfg)))))
    out.append(Check("trigger", "saturation", top < cfg.lam, top, f"< {cfg.lam}"))
    return out


# --------------------------------------------------------------- learning

def synthetic_critic_run(h=10, T=60.0, dt=1e-3, alpha=100.0, seed=0):
    """Normalized-gradient critic on ``e_c = (theta - theta*)' omega(t)``
    with a sum-of-sines regressor.  Returns times and ``|theta - theta*|``."""
    rng = np.random.default_rng(seed)
    theta_star = rng.uniform(-1, 1, h)
    theta = rng.uniform(0, 1, h)
    freqs = 0.7 + np.arange(h) * 0.61
    phases = rng.uniform(0, 2 * np.pi, h)
    steps = int(round(T / dt))
    errs = np.empty(steps + 1)
    errs[0] = np.linalg.norm(theta - theta_star)
    for k in range(steps):
        omega = np.sin(freqs * (k * dt) + phases)
        e_c = float((theta - theta_star) @ omega)
        theta = learning.critic_step(theta, e_c, omega, alpha, dt)
        errs[k + 1] = np.linalg.norm(theta - theta_star)
    return np.arange(steps + 1) * dt, errs


def envelope(errs, window):
    n = len(errs) // window
    return errs[:n * window].reshape(n, window).max(axis=1)


def learning_checks():
    t, errs = synthetic_critic_run()
    ratio = float(errs[-1] / errs[0])
    env = envelope(errs, 1000)
    mono = bool(np.all(np.diff(env) <= 1e-12))
    return [
        Check("learning", "critic_error_below_1pct", ratio < 0.01, ratio, "< 0.01 of initial"),
        Check("learning", "envelope_monotone", mono, int(np.sum(np.diff(env) > 1e-12)),
              "non-increasing 1 s envelope"),
    ]


# ---------------------------------------------------------------- mission

def mission_checks(seeds=(0,), spec="paper_sec5.mission"):
    from .engine import run_mission
    from .mission import load_mission

    ms = load_mission(spec)
    plan = ms.plan()
    out = []
    for seed in seeds:
        cfg = ms.sim_config(seed=seed)
        res = run_mission(plan, ms.plant, ms.refs, ms.preds, ms.x0, cfg, ms.phi_c, ms.phi_s)
        seg = res.summary["segments"][0]
        tag = f"seed{seed}"
        out.append(Check("mission", f"{tag}_safety_margin", seg["min_margin"] > 0, seg["min_margin"], "> 0"))
        tail = seg["tail_max_error"]
        out.append(Check("mission", f"{tag}_tail_error", tail is not None and tail <= 0.6, tail, "<= 0.6"))
        ratio = seg["post_noise_event_ratio"]
        out.append(Check("mission", f"{tag}_post_noise_events", ratio is not None and ratio < 0.2, ratio, "< 0.2"))
        gap = seg["min_inter_event_steps"]
        out.append(Check("mission", f"{tag}_min_inter_event_steps", gap is not None and gap >= 1, gap, ">= 1 step"))
        out.append(Check("mission", f"{tag}_verdict", res.success, res.verdict, "success"))
    return out


def run_suite(name, **kw):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return {"barrier": barrier_checks, "ltl": ltl_checks, "trigger": trigger_checks,
            "learning": learning_checks, "mission": mission_checks}[name](**kw)
