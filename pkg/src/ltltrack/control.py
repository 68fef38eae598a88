"""Saturated optimal control pieces and the event-trigger rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SAT_MARGIN = 1e-9


class SaturationError(ValueError):
    pass


@dataclass(frozen=True)
class ControlConfig:
    """Gains of the constrained tracking problem.

    ``Q`` weighs the s-domain tracking error; the augmented weight is
    ``blkdiag(Q, 0)``.  ``L`` is the Lipschitz constant of the sampled policy
    used by the trigger; ``None`` means it will be estimated.
    """

    Q: np.ndarray
    lam: float = 5.0
    gamma1: float = 1.0
    gamma: float = 0.01
    beta: float = 0.5
    L: float | None = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q)[0] < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.gamma1 > 0:
            raise ValueError("gamma1 must be positive")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not 0 < self.beta < 1 / np.sqrt(2):
            raise ValueError("beta must lie in (0, 1/sqrt(2))")
        if self.L is not None and not self.L > 0:
            raise ValueError("L must be positive")

    @cached_property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])

    @property
    def m(self):
        return self.Q.shape[0]

    @property
    def Q_aug(self):
        m = self.m
        out = np.zeros((2 * m, 2 * m))
        out[:m, :m] = self.Q
        return out

    @property
    def u_max(self):
        """Largest magnitude actually applied, strictly below ``lam``."""
        return self.lam * (1.0 - SAT_MARGIN)

    def with_L(self, L):
        return ControlConfig(self.Q, self.lam, self.gamma1, self.gamma, self.beta, float(L))

    def to_json(self):
        return {"Q": self.Q.tolist(), "lam": self.lam, "gamma1": self.gamma1,
                "gamma": self.gamma, "beta": self.beta, "L": self.L}


def clamp_input(u, cfg: ControlConfig):
    return np.clip(u, -cfg.u_max, cfg.u_max)


def control_penalty(u, cfg: ControlConfig) -> float:
    """``R(u) = sum_k int_0^{u_k} gamma1 lam atanh(v / lam) dv``.

    Evaluated as ``gamma1 lam^2 [(1+w) log(1+w) + (1-w) log(1-w)] / 2`` with
    ``w = u_k / lam``, which is exact and keeps full precision near 0 and
    near saturation.
    """
    return penalty(u, cfg.lam, cfg.gamma1)


def penalty(u, lam, gamma1):
    total = 0.0
    for uk in np.atleast_1d(u).tolist():
        w = uk / lam
        if not abs(w) < 1.0:
            raise SaturationError(f"|u| must stay below lam={lam}, got {uk}")
        total += (1.0 + w) * math.log1p(w) + (1.0 - w) * math.log1p(-w)
    return 0.5 * gamma1 * lam * lam * total


def hamiltonian(sa, u, gradV, V, Faug, Gaug, cfg: ControlConfig) -> float:
    """``gradV'(F_aug + G_aug u) + (s'Q_aug s + R(u) - 2 gamma V) / 2``."""
    sa = np.asarray(sa, dtype=float)
    m = cfg.m
    e = sa[:m]
    drift = Faug + Gaug @ np.atleast_1d(u)
    return float(gradV @ drift + 0.5 * (e @ cfg.Q @ e + control_penalty(u, cfg) - 2 * cfg.gamma * V))


def optimal_control(gradV, Gaug, cfg: ControlConfig):
    """``-lam tanh(G_aug' gradV / (2 gamma1 lam))``, kept strictly inside
    the saturation bound."""
    arg = (Gaug.T @ np.asarray(gradV, dtype=float)) / (2.0 * cfg.gamma1 * cfg.lam)
    return clamp_input(-cfg.lam * np.tanh(arg), cfg)


def trigger_threshold(e_s, u, cfg: ControlConfig) -> float:
    """Right-hand side of the event condition ``||e_trig||^2 <= threshold``."""
    if cfg.L is None:
        raise ValueError("trigger needs a Lipschitz constant L")
    e_s = np.asarray(e_s, dtype=float)
    den = cfg.L ** 2 * cfg.lam * cfg.gamma1
    return ((0.5 - cfg.beta ** 2) * cfg.lambda_min * float(e_s @ e_s)
            + control_penalty(u, cfg)) / den


def trigger_check(e_trig, e_s, u, cfg: ControlConfig) -> bool:
    """True when the sampled control must be refreshed."""
    e_trig = np.asarray(e_trig, dtype=float)
    return bool(e_trig @ e_trig > trigger_threshold(e_s, u, cfg))


@dataclass
class TriggerState:
    """Last sample and event history of one segment."""

    sample: np.ndarray | None = None
    last_time: float | None = None
    count: int = 0
    gaps: list = field(default_factory=list)

    def fire(self, t, sa):
        if self.last_time is not None:
            if not t > self.last_time:
                raise ValueError("event times must be strictly increasing")
            self.gaps.append(t - self.last_time)
        self.sample = np.array(sa, dtype=float)
        self.last_time = float(t)
        self.count += 1

    def error(self, sa):
        return self.sample - sa

    def stats(self):
        g = np.asarray(self.gaps)
        if g.size == 0:
            return {"events": self.count, "min_gap": None, "mean_gap": None, "max_gap": None}
        return {"events": self.count, "min_gap": float(g.min()),
                "mean_gap": float(g.mean()), "max_gap": float(g.max())}


def estimate_lipschitz(policy, lo, hi, rng, pairs=1000, factor=2.0):
    """``factor`` times the largest ratio ``|u(a) - u(b)| / |a - b|`` over
    random pairs drawn uniformly from the box ``[lo, hi]``.  Returns the
    estimate and the raw maximum."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = 0.0
    for _ in range(pairs):
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        d = np.linalg.norm(a - b)
        if d == 0:
            continue
        best = max(best, float(np.linalg.norm(np.atleast_1d(policy(a) - policy(b)))) / d)
    return factor * best, best
