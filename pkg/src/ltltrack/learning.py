"""Critic and actor approximators and their update laws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlConfig, clamp_input, control_penalty, penalty


class QuadraticBasis:
    """All degree-2 monomials ``s_i s_j`` with ``i <= j``."""

    def __init__(self, dim: int):
        self.dim = dim
        self.iu = np.triu_indices(dim)
        self.size = len(self.iu[0])
        # sym(theta) = (T @ theta).reshape(dim, dim)
        T = np.zeros((dim, dim, self.size))
        for k, (i, j) in enumerate(zip(*self.iu)):
            T[i, j, k] += 1.0
            T[j, i, k] += 1.0
        self._T = T.reshape(dim * dim, self.size)

    def __call__(self, s):
        return np.outer(s, s)[self.iu]

    def batch(self, S):
        i, j = self.iu
        return S[:, i] * S[:, j]

    def jacobian_batch(self, S):
        J = np.zeros((len(S), self.size, self.dim))
        rows = np.arange(self.size)
        i, j = self.iu
        J[:, rows, i] += S[:, j]
        J[:, rows, j] += S[:, i]
        return J

    def jacobian(self, s):
        """``d phi / d s`` with shape ``(size, dim)``."""
        J = np.zeros((self.size, self.dim))
        rows = np.arange(self.size)
        i, j = self.iu
        J[rows, i] += s[j]
        J[rows, j] += s[i]
        return J

    def directional(self, s, v):
        """``(d phi / d s) v`` without forming the Jacobian."""
        P = np.outer(s, v)
        return (P + P.T)[self.iu]

    def sym(self, theta):
        """Symmetric ``M`` with ``theta' phi(s) = s' M s / 2``."""
        return (self._T @ theta).reshape(self.dim, self.dim)

    def grad(self, theta, s):
        return self.sym(theta) @ s


class ActorBasis:
    """Linear terms followed by the quadratic monomials."""

    def __init__(self, dim: int):
        self.dim = dim
        self.quad = QuadraticBasis(dim)
        self.size = dim + self.quad.size

    def __call__(self, s):
        return np.concatenate([s, self.quad(s)])

    def batch(self, S):
        return np.hstack([S, self.quad.batch(S)])


@dataclass
class LearnerState:
    theta_c: np.ndarray
    theta_u: np.ndarray  # (h2, m_u)
    alpha: float
    alpha_u: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.alpha_u > 0):
            raise ValueError("learning gains must be positive")

    @classmethod
    def random(cls, critic: QuadraticBasis, actor: ActorBasis, m_u, alpha, alpha_u, rng):
        """Weights drawn uniformly from [0, 1]."""
        theta_c = rng.uniform(0.0, 1.0, critic.size)
        theta_u = rng.uniform(0.0, 1.0, (actor.size, m_u))
        return cls(theta_c, theta_u, alpha, alpha_u)

    def copy(self):
        return LearnerState(self.theta_c.copy(), self.theta_u.copy(), self.alpha, self.alpha_u)

    def check_finite(self):
        if not (np.all(np.isfinite(self.theta_c)) and np.all(np.isfinite(self.theta_u))):
            raise FloatingPointError("learner weights became non-finite")


def critic_value(theta_c, sa, basis: QuadraticBasis):
    return float(theta_c @ basis(sa)), basis.grad(theta_c, sa)


def bellman_residual(theta_c, sa, u, Faug, Gaug, cfg: ControlConfig, basis: QuadraticBasis,
                     penalty_scale=1.0):
    """``(e_c, omega)`` with ``omega = (d phi/d s)(F_aug + G_aug u) - gamma phi``
    and ``e_c = theta_c' omega + e_s' Q e_s / 2 + penalty_scale R(u)``.

    ``penalty_scale = 0.5`` makes ``e_c`` equal the Hamiltonian evaluated
    with the critic's gradient.
    """
    m = cfg.m
    e = sa[:m]
    drift = Faug + Gaug @ np.atleast_1d(u)
    omega = basis.directional(sa, drift) - cfg.gamma * basis(sa)
    r = 0.5 * float(e @ cfg.Q @ e) + penalty_scale * control_penalty(u, cfg)
    return float(theta_c @ omega) + r, omega


def critic_step(theta_c, e_c, omega, alpha, dt):
    """One Euler step of the normalized gradient law."""
    n = float(omega @ omega) + 1.0
    return theta_c - (alpha * dt * e_c / (n * n)) * omega


def actor_raw(theta_u, sample, basis: ActorBasis):
    return theta_u.T @ basis(sample)


def actor_policy(theta_u, sample, basis: ActorBasis, cfg: ControlConfig):
    return clamp_input(actor_raw(theta_u, sample, basis), cfg)


def critic_policy(theta_c, sample, Gaug, cfg: ControlConfig, basis: QuadraticBasis):
    """Unclamped ``-lam tanh(G_aug' gradV / (2 gamma1 lam))`` for the critic
    estimate; the actor is pulled toward this value."""
    g = basis.grad(theta_c, sample)
    return -cfg.lam * np.tanh((Gaug.T @ g) / (2.0 * cfg.gamma1 * cfg.lam))


def actor_jump(theta_u, sample, theta_c, Gaug, cfg: ControlConfig, critic: QuadraticBasis,
               actor: ActorBasis, alpha_u):
    """Impulsive actor update at an event, with ``sample`` the freshly
    sampled augmented state."""
    phi = actor(sample)
    err = theta_u.T @ phi - critic_policy(theta_c, sample, Gaug, cfg, critic)
    return theta_u - alpha_u * np.outer(phi, err)


@dataclass
class NoiseSchedule:
    """``a0 exp(-kappa t) sum_k sin(w_k t + p_k)``, zero from ``t_off`` on."""

    a0: float = 0.0
    kappa: float = 0.1
    freqs: tuple = (0.5, 1.0, 3.0, 7.0, 11.0)
    phases: tuple = field(default_factory=tuple)
    t_off: float | None = None

    def __post_init__(self):
        if self.a0 < 0 or self.kappa < 0:
            raise ValueError("noise amplitude and decay rate must be non-negative")
        if len(set(self.freqs)) != len(self.freqs):
            raise ValueError("noise frequencies must be distinct")
        if not self.phases:
            self.phases = (0.0,) * len(self.freqs)
        if len(self.phases) != len(self.freqs):
            raise ValueError("one phase per frequency")

    @property
    def off_time(self):
        """Time after which the noise is exactly zero (infinite if never)."""
        if self.a0 == 0:
            return 0.0
        return math.inf if self.t_off is None else self.t_off

    def __call__(self, t):
        if self.a0 == 0 or (self.t_off is not None and t >= self.t_off):
            return 0.0
        s = 0.0
        for w, p in zip(self.freqs, self.phases):
            s += math.sin(w * t + p)
        return self.a0 * math.exp(-self.kappa * t) * s

    @classmethod
    def seeded(cls, a0, kappa, freqs, t_off, rng):
        return cls(a0, kappa, tuple(freqs), tuple(rng.uniform(0, 2 * np.pi, len(freqs))), t_off)


def warm_start(learner: LearnerState, samples, cfg: ControlConfig, critic: QuadraticBasis,
               actor: ActorBasis, dt=1e-3, gamma_start=10.0, alpha=None, alpha_u=None,
               penalty_scale=1.0):
    """Offline pass of the same update laws over sampled states.

    ``samples`` is ``(SA, FA, GA)``: augmented states ``(N, 2m)`` with
    their ``F_aug`` ``(N, 2m)`` and ``G_aug`` ``(N, 2m, m_u)``.  At every
    sample the critic takes one normalized-gradient step and the actor one
    jump.  The discount rate decays geometrically from ``gamma_start`` to
    ``cfg.gamma`` so that early policy evaluation is well posed even while
    the actor does not yet stabilize the plant.
    """
    SA, FA, GA = samples
    N = len(SA)
    m = cfg.m
    thc = learner.theta_c.copy()
    thu = learner.theta_u.copy()
    alpha = learner.alpha if alpha is None else alpha
    alpha_u = learner.alpha_u if alpha_u is None else alpha_u
    g_end = max(cfg.gamma, 1e-12)
    g0 = max(gamma_start, g_end)
    gammas = g0 * np.exp(np.log(g_end / g0) * np.arange(N) / max(N - 1, 1))
    Phc = critic.batch(SA)
    Jc = critic.jacobian_batch(SA)
    Phu = actor.batch(SA)
    E = SA[:, :m]
    qe = 0.5 * np.einsum("ni,ij,nj->n", E, cfg.Q, E)
    lam, g1, umax = cfg.lam, cfg.gamma1, cfg.u_max
    k_tanh = 1.0 / (2.0 * g1 * lam)
    step = alpha * dt
    for i in range(N):
        phu = Phu[i]
        J = Jc[i]
        G = GA[i]
        u = np.minimum(np.maximum(thu.T @ phu, -umax), umax)
        omega = J @ (FA[i] + G @ u) - gammas[i] * Phc[i]
        ec = float(thc @ omega) + qe[i] + penalty_scale * penalty(u, lam, g1)
        nrm = float(omega @ omega) + 1.0
        thc = thc - (step * ec / (nrm * nrm)) * omega
        target = -lam * np.tanh(k_tanh * (G.T @ (J.T @ thc)))
        thu = thu - alpha_u * np.outer(phu, thu.T @ phu - target)
    out = LearnerState(thc, thu, learner.alpha, learner.alpha_u)
    out.check_finite()
    return out
