"""Barrier change of coordinates for box constraints ``c <= A x + r <= C``.

Each constrained row ``q_i = a_i' x + r_i`` is mapped to an unconstrained
coordinate ``s_i = b(q_i, c_i, C_i)``; the inverse map always lands strictly
inside ``(c_i, C_i)``, so any trajectory in s-space is safe in x-space.
"""

from __future__ import annotations

import numpy as np

RANK_TOL = 1e-10


class SafetyDomainError(ValueError):
    """A point lies on or outside the constraint boundary.  ``row`` is the
    index of the first violated row when known."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


def _check_bounds(c0, C0):
    if np.any(np.asarray(c0) >= 0) or np.any(np.asarray(C0) <= 0):
        raise ValueError("barrier bounds must satisfy c0 < 0 < C0")


def barrier(q, c0, C0):
    """``log((C0/c0) (c0 - q) / (C0 - q))``; requires ``c0 < q < C0``."""
    q = np.asarray(q, dtype=float)
    _check_bounds(c0, C0)
    if np.any(q <= c0) or np.any(q >= C0):
        raise SafetyDomainError(f"barrier argument outside ({c0}, {C0})")
    # log1p forms keep b(0) exactly 0 and stay accurate near the origin
    out = np.log1p(-q / c0) - np.log1p(-q / C0)
    return out if out.ndim else float(out)


def barrier_inv(y, c0, C0):
    """Inverse barrier, stable for any real ``y`` and strictly inside
    ``(c0, C0)``."""
    y = np.asarray(y, dtype=float)
    c0 = np.broadcast_to(np.asarray(c0, dtype=float), y.shape)
    C0 = np.broadcast_to(np.asarray(C0, dtype=float), y.shape)
    _check_bounds(c0, C0)
    pos = y >= 0
    with np.errstate(over="ignore", invalid="ignore"):
        em = np.exp(-np.abs(y))
        # y >= 0: c0 C0 (1 - e^-y) / (c0 - C0 e^-y)
        # y <  0: c0 C0 (e^y - 1) / (c0 e^y - C0)
        num = np.where(pos, -np.expm1(-np.abs(y)), np.expm1(-np.abs(y)))
        den = np.where(pos, c0 - C0 * em, c0 * em - C0)
        out = c0 * C0 * num / den
    out = np.minimum(out, np.nextafter(C0, -np.inf))
    out = np.maximum(out, np.nextafter(c0, np.inf))
    return out if out.ndim else float(out)


def barrier_inv_deriv(y, c0, C0):
    """``(C0 c0^2 - c0 C0^2) / (c0^2 e^y - 2 c0 C0 + C0^2 e^-y)`` evaluated
    without overflow."""
    y = np.asarray(y, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    C0 = np.asarray(C0, dtype=float)
    _check_bounds(c0, C0)
    a = np.abs(y)
    em = np.exp(-a)
    num = (C0 * c0 * c0 - c0 * C0 * C0) * em
    big = np.where(y >= 0, c0 * c0, C0 * C0)
    small = np.where(y >= 0, C0 * C0, c0 * c0)
    den = big - 2 * c0 * C0 * em + small * em * em
    out = num / den
    return out if out.ndim else float(out)


class BarrierMap:
    """Box constraint ``c < A x + r < C`` with its barrier coordinates."""

    def __init__(self, A, r, c, C):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m, n = A.shape
        r = np.asarray(r, dtype=float).reshape(-1)
        c = np.asarray(c, dtype=float).reshape(-1)
        C = np.asarray(C, dtype=float).reshape(-1)
        if not (r.shape == c.shape == C.shape == (m,)):
            raise ValueError(f"r, c, C must have length {m}")
        if np.any(c >= 0) or np.any(C <= 0):
            raise ValueError("barrier bounds must satisfy c < 0 < C in every row")
        U, sv, Vt = np.linalg.svd(A, full_matrices=False)
        rank = int(np.sum(sv > RANK_TOL * max(1.0, sv[0])))
        if rank < n:
            raise ValueError(f"A must have full column rank {n}, got rank {rank}")
        self.A, self.r, self.c, self.C = A, r, c, C
        self.pinv = (Vt.T / sv) @ U.T
        self.identity = m == n and np.array_equal(A, np.eye(n)) and not np.any(r)
        self._kc = C / -c
        self._width = C - c
        for arr in (self.A, self.r, self.c, self.C, self.pinv, self._kc, self._width):
            arr.flags.writeable = False

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        return cls(np.eye(lo.size), np.zeros(lo.size), lo, hi)

    def q(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.r

    def margin(self, x):
        """Distance of ``A x + r`` to the nearest face; positive inside."""
        q = self.q(x)
        return float(np.min(np.minimum(q - self.c, self.C - q)))

    def to_s(self, x):
        q = self.q(x)
        bad = np.flatnonzero((q <= self.c) | (q >= self.C))
        if bad.size:
            i = int(bad[0])
            raise SafetyDomainError(
                f"row {i}: a'x + r = {q[i]:.6g} outside ({self.c[i]:.6g}, {self.C[i]:.6g})", row=i)
        return np.log1p(-q / self.c) - np.log1p(-q / self.C)

    def to_x(self, s):
        return self.pinv @ (barrier_inv(np.asarray(s, dtype=float), self.c, self.C) - self.r)

    def dq_ds(self, s):
        """Diagonal of ``d q / d s`` as a vector."""
        return barrier_inv_deriv(np.asarray(s, dtype=float), self.c, self.C)

    def local(self, x):
        """``(s, w, margin)`` at ``x`` where ``w = 1 / (dq/ds)``.

        Works from the distances ``q - c`` and ``C - q`` directly, which is
        cheaper than going through ``to_s`` and ``barrier_inv_deriv`` and
        avoids cancellation near the faces.  Returns ``None`` for ``s`` and
        ``w`` when ``x`` is not strictly inside.  Rows of ``x`` may be
        stacked along a leading axis.
        """
        x = np.asarray(x, dtype=float)
        q = x + self.r if self.identity else x @ self.A.T + self.r
        d1 = q - self.c
        d2 = self.C - q
        margin = min(d1.min(), d2.min())
        if not margin > 0:
            return None, None, float(margin)
        return np.log(d1 * self._kc / d2), self._width / (d1 * d2), float(margin)

    def local_rows(self, X):
        """Row-wise ``local`` for an ``(N, n)`` array: returns ``S``, ``W``
        and the per-row margins; rows outside the box get NaN in ``S, W``."""
        X = np.asarray(X, dtype=float)
        Q = X + self.r if self.identity else X @ self.A.T + self.r
        d1 = Q - self.c
        d2 = self.C - Q
        margins = np.minimum(d1.min(axis=1), d2.min(axis=1))
        with np.errstate(all="ignore"):
            S = np.log(d1 * self._kc / d2)
            W = self._width / (d1 * d2)
        bad = ~(margins > 0)
        S[bad] = np.nan
        W[bad] = np.nan
        return S, W, margins

    def rate(self, s, xdot):
        """``ds/dt`` for an x-space velocity ``xdot`` at barrier point ``s``."""
        return (self.A @ xdot) / self.dq_ds(s)

    def to_json(self):
        return {"A": self.A.tolist(), "r": self.r.tolist(),
                "c": self.c.tolist(), "C": self.C.tolist()}


def transformed_fields(s, plant, bm: BarrierMap):
    """``(F(s), G(s))`` with ``ds/dt = F(s) + G(s) u``."""
    x = bm.to_x(s)
    w = 1.0 / bm.dq_ds(s)
    F = w * (bm.A @ plant.f(x))
    G = w[:, None] * (bm.A @ plant.g(x))
    return F, G


def transformed_dynamics(s, u, plant, bm: BarrierMap):
    F, G = transformed_fields(s, plant, bm)
    return F + G @ np.atleast_1d(u)


class BarrierTrajectory:
    """A reference trajectory mapped into barrier coordinates.

    ``position(t)`` gives ``z_s(t)``.  ``fd(z_s)`` is the s-domain
    exosystem field obtained by the chain rule through ``h``.
    """

    def __init__(self, ref, bm: BarrierMap):
        self.ref = ref
        self.bm = bm

    def position(self, t):
        return self.bm.to_s(self.ref.position(t))

    def velocity(self, t):
        zs = self.position(t)
        return self.bm.rate(zs, self.ref.velocity(t))

    def fd(self, zs):
        z = self.bm.to_x(zs)
        return self.bm.rate(zs, self.ref.h(z))


def transform_trajectory(ref, bm: BarrierMap, times=None):
    """Wrap ``ref`` in barrier coordinates.  When ``times`` is given the
    reference must stay strictly inside the box at every sample."""
    if times is not None:
        for t in times:
            if bm.margin(ref.position(float(t))) <= 0:
                # imported lazily to keep barrier free of planning imports
                from .automaton import MissionRejected
                raise MissionRejected(
                    f"reference leaves the safety set at t={float(t):.6g}", t=float(t))
    return BarrierTrajectory(ref, bm)
