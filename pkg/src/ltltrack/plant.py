"""Control-affine plants, reference exosystems and the augmented error
dynamics in barrier coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr
from .barrier import BarrierMap


@dataclass(frozen=True)
class Plant:
    """``xdot = f(x) + g(x) u`` with ``n`` states and ``m_u`` inputs."""

    n: int
    m_u: int
    f: Callable
    g: Callable
    name: str = "plant"
    # optional fast paths: fused xdot(x, u) and row-stacked f, g
    fused: Callable | None = None
    f_batch: Callable | None = None
    g_batch: Callable | None = None

    def xdot(self, x, u):
        if self.fused is not None:
            return self.fused(x, u)
        return self.f(x) + self.g(x) @ np.atleast_1d(u)

    def fields_batch(self, X):
        """``f`` and ``g`` on the rows of ``X``: shapes ``(N, n)`` and
        ``(N, n, m_u)``."""
        if self.f_batch is not None and self.g_batch is not None:
            return self.f_batch(X), self.g_batch(X)
        return (np.array([self.f(x) for x in X]).reshape(len(X), self.n),
                np.array([self.g(x) for x in X]).reshape(len(X), self.n, self.m_u))


def expression_plant(f_exprs, g_exprs, name="user"):
    """Plant from expression strings in ``x1..xn``.

    ``g_exprs`` is a list of ``n`` rows; a row may be a single expression
    when there is one input.
    """
    n = len(f_exprs)
    if len(g_exprs) != n:
        raise expr.ExpressionError(f"g must have {n} rows to match f")
    names = [f"x{i + 1}" for i in range(n)]
    fv = expr.compile_vector(f_exprs, names)
    gm = expr.compile_matrix(g_exprs, names)
    m_u = gm(*np.zeros(n)).shape[1]
    rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in g_exprs]
    fb = expr.compile_batch(f_exprs, names)
    gb = expr.compile_batch([e for r in rows for e in r], names)
    return Plant(n=n, m_u=m_u, f=lambda x: fv(*x), g=lambda x: gm(*x), name=name,
                 f_batch=fb, g_batch=lambda X: gb(X).reshape(len(X), n, m_u))


def _sim_f(x):
    k = math.cos(2.0 * x[0]) + 2.0
    return np.array([-x[0] + x[1], -0.5 * x[0] - 0.5 * x[1] * (1.0 - k * k)])


def _sim_g(x):
    return np.array([[0.0], [math.cos(2.0 * x[0]) + 2.0]])


def _sim_fused(x, u):
    x1, x2 = x[0], x[1]
    k = math.cos(2.0 * x1) + 2.0
    return np.array([-x1 + x2, -0.5 * x1 - 0.5 * x2 * (1.0 - k * k) + k * u[0]])


def _sim_f_batch(X):
    k = np.cos(2.0 * X[:, 0]) + 2.0
    return np.stack([-X[:, 0] + X[:, 1], -0.5 * X[:, 0] - 0.5 * X[:, 1] * (1.0 - k * k)], axis=1)


def _sim_g_batch(X):
    out = np.zeros((len(X), 2, 1))
    out[:, 1, 0] = np.cos(2.0 * X[:, 0]) + 2.0
    return out


def builtin_sim_plant() -> Plant:
    """Two-state benchmark plant with a single input entering the second
    state through ``cos(2 x1) + 2``."""
    return Plant(n=2, m_u=1, f=_sim_f, g=_sim_g, name="sim2", fused=_sim_fused,
                 f_batch=_sim_f_batch, g_batch=_sim_g_batch)


# ------------------------------------------------------------- exosystems

class Exosystem:
    """Reference generator ``zdot = h(z)``.

    With a closed form ``z(t)`` the trajectory is evaluated exactly and its
    velocity taken from ``zdot(t)`` when given, else from ``h(z(t))``.
    Without one it is integrated from ``z0`` on demand.
    """

    def __init__(self, ident, h, n, z=None, zdot=None, z0=None, check_origin=True):
        self.id = ident
        self.n = n
        self._h = h
        self._z = z
        self._zdot = zdot
        if check_origin:
            h0 = np.asarray(h(np.zeros(n)), dtype=float)
            if np.linalg.norm(h0) > 1e-12:
                raise ValueError(f"exosystem {ident!r}: h(0) must be 0, got {h0}")
        if z is None:
            if z0 is None:
                raise ValueError(f"exosystem {ident!r} needs a closed form z(t) or z0")
            self._sol = _DenseSolution(h, np.asarray(z0, dtype=float))

    def h(self, z):
        return np.asarray(self._h(np.asarray(z, dtype=float)), dtype=float)

    def position(self, t):
        if self._z is not None:
            return self._z(t)
        return self._sol(t)

    def velocity(self, t):
        if self._zdot is not None:
            return self._zdot(t)
        return self.h(self.position(t))

    def positions(self, ts):
        return np.array([self.position(float(t)) for t in ts]).reshape(len(ts), self.n)

    def h_batch(self, Z):
        return np.array([self.h(z) for z in Z]).reshape(len(Z), self.n)


class LinearExosystem(Exosystem):
    """``zdot = H z`` with an optional closed form; batch evaluation is
    vectorized."""

    def __init__(self, ident, H, z=None, zdot=None, z0=None, z_batch=None):
        self.H = np.asarray(H, dtype=float)
        self._z_batch = z_batch
        H = self.H
        super().__init__(ident, lambda zz: H @ zz, H.shape[0], z=z, zdot=zdot, z0=z0)

    def h(self, z):
        return self.H @ z

    def positions(self, ts):
        if self._z_batch is not None:
            return self._z_batch(np.asarray(ts, dtype=float))
        return super().positions(ts)

    def h_batch(self, Z):
        return Z @ self.H.T


class _DenseSolution:
    """RK4 solution of ``zdot = h(z)`` on a fixed grid, extended lazily and
    interpolated with cubic Hermite segments."""

    step = 1e-3

    def __init__(self, h, z0):
        self.h = h
        self.zs = [z0]
        self.vs = [np.asarray(h(z0), dtype=float)]

    def _extend(self, k):
        dt = self.step
        while len(self.zs) <= k:
            z = self.zs[-1]
            k1 = self.h(z)
            k2 = self.h(z + 0.5 * dt * k1)
            k3 = self.h(z + 0.5 * dt * k2)
            k4 = self.h(z + dt * k3)
            zn = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            self.zs.append(zn)
            self.vs.append(np.asarray(self.h(zn), dtype=float))

    def __call__(self, t):
        if t < 0:
            raise ValueError("reference time must be non-negative")
        k = int(t / self.step)
        self._extend(k + 1)
        tau = t / self.step - k
        if tau == 0.0:
            return self.zs[k].copy()
        p0, p1, m0, m1 = self.zs[k], self.zs[k + 1], self.vs[k] * self.step, self.vs[k + 1] * self.step
        t2, t3 = tau * tau, tau * tau * tau
        return ((2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + tau) * m0
                + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1)


def circle_reference(ident, radius, omega, phase=0.0):
    """``radius [sin(omega t + phase), cos(omega t + phase)]``, generated by
    ``h(z) = omega [z2, -z1]``."""

    def z(t):
        a = omega * t + phase
        return np.array([radius * math.sin(a), radius * math.cos(a)])

    def zdot(t):
        a = omega * t + phase
        return np.array([radius * omega * math.cos(a), -radius * omega * math.sin(a)])

    def zb(ts):
        a = omega * ts + phase
        return radius * np.stack([np.sin(a), np.cos(a)], axis=1)

    return LinearExosystem(ident, [[0.0, omega], [-omega, 0.0]], z=z, zdot=zdot, z_batch=zb)


def zero_reference(ident, n):
    return LinearExosystem(ident, np.zeros((n, n)), z=lambda t: np.zeros(n),
                           zdot=lambda t: np.zeros(n), z_batch=lambda ts: np.zeros((len(ts), n)))


BUILTIN_REFERENCES = {
    "circle_small": lambda ident: circle_reference(ident, 0.5, 0.5),
    "circle_large_opposite": lambda ident: circle_reference(ident, 1.5, 0.5, math.pi),
    "origin2": lambda ident: zero_reference(ident, 2),
}

BUILTIN_PLANTS = {"sim2": builtin_sim_plant}


def expression_reference(ident, spec):
    """Reference from a mapping with an ``h`` expression list in
    ``z1..zn`` and either a closed form ``z`` (expressions in ``t``) or an
    initial value ``z0``.  ``{"builtin": name}`` selects a bundled one."""
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN_REFERENCES:
            raise ValueError(f"unknown builtin reference {name!r}")
        return BUILTIN_REFERENCES[name](ident)
    h_exprs = spec.get("h")
    if not h_exprs:
        raise ValueError(f"reference {ident!r} needs 'h' expressions")
    n = len(h_exprs)
    hv = expr.compile_vector(h_exprs, [f"z{i + 1}" for i in range(n)])
    zf = None
    if spec.get("z") is not None:
        if len(spec["z"]) != n:
            raise ValueError(f"reference {ident!r}: h and z dimensions differ")
        zv = expr.compile_vector(spec["z"], ["t"])
        zf = lambda t: zv(t)
    return Exosystem(ident, lambda z: hv(*z), n, z=zf, z0=spec.get("z0"))


# ----------------------------------------------------- augmented dynamics

@dataclass(frozen=True)
class AugState:
    """``e_s`` and ``z_s`` in barrier coordinates; ``s = e_s + z_s``."""

    e_s: np.ndarray
    z_s: np.ndarray

    @property
    def s(self):
        return self.e_s + self.z_s

    @property
    def vector(self):
        return np.concatenate([self.e_s, self.z_s])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        m = v.size // 2
        return cls(v[:m], v[m:])


class TrackingModel:
    """Plant, barrier map and reference needed to form ``F_aug, G_aug``."""

    def __init__(self, plant: Plant, bm: BarrierMap, ref: Exosystem):
        if bm.n != plant.n:
            raise ValueError(f"barrier map acts on {bm.n} states, plant has {plant.n}")
        if ref.n != plant.n:
            raise ValueError(f"reference has dimension {ref.n}, plant has {plant.n}")
        self.plant, self.bm, self.ref = plant, bm, ref
        self.m = bm.m
        self.m_u = plant.m_u

    def aug_state(self, x, t):
        s = self.bm.to_s(x)
        zs = self.bm.to_s(self.ref.position(t))
        return np.concatenate([s - zs, zs])

    def fields_at(self, x, z, s, zs):
        """``(F_aug, G_aug)`` from x-space ground truth and the matching
        barrier coordinates."""
        bm = self.bm
        ws = 1.0 / bm.dq_ds(s)
        F = ws * (bm.A @ self.plant.f(x))
        G = ws[:, None] * (bm.A @ self.plant.g(x))
        fd = bm.rate(zs, self.ref.h(z))
        Faug = np.concatenate([F - fd, fd])
        Gaug = np.vstack([G, np.zeros_like(G)])
        return Faug, Gaug

    def aug_fields(self, sa):
        """``(F_aug, G_aug)`` at an augmented vector."""
        m = self.m
        zs = sa[m:]
        s = sa[:m] + zs
        return self.fields_at(self.bm.to_x(s), self.bm.to_x(zs), s, zs)

    def augmented_dynamics(self, sa, u):
        Faug, Gaug = self.aug_fields(np.asarray(sa, dtype=float))
        return Faug + Gaug @ np.atleast_1d(u)
