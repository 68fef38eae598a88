import math

import mpmath
import numpy as np
import pytest

from ltltrack import barrier
from ltltrack.automaton import MissionRejected
from ltltrack.barrier import (BarrierMap, SafetyDomainError, barrier_inv, barrier_inv_deriv,
                              transform_trajectory, transformed_dynamics)
from ltltrack.engine import rk4_step
from ltltrack.plant import builtin_sim_plant, circle_reference, zero_reference

BOX30 = BarrierMap.box(-30 * np.ones(2), 30 * np.ones(2))


def mp_barrier(q, c, C):
    mpmath.mp.dps = 40
    q, c, C = mpmath.mpf(q), mpmath.mpf(c), mpmath.mpf(C)
    return float(mpmath.log((C / c) * (c - q) / (C - q)))


def test_barrier_examples():
    assert barrier.barrier(0.0, -2.0, 2.0) == 0.0
    assert barrier.barrier(1.0, -2.0, 2.0) == pytest.approx(math.log(3.0), abs=1e-15)
    assert barrier.barrier(1.0, -2.0, 2.0) == pytest.approx(mp_barrier(1, -2, 2), abs=1e-15)


@pytest.mark.parametrize("q", [-1.9, -0.3, 0.7, 1.99])
def test_barrier_matches_high_precision(q):
    assert barrier.barrier(q, -2.0, 3.0) == pytest.approx(mp_barrier(q, -2, 3), rel=1e-13)


def test_barrier_diverges_at_faces():
    assert barrier.barrier(2.0 - 1e-9, -2.0, 2.0) > 20.0
    assert barrier.barrier(-2.0 + 1e-9, -2.0, 2.0) < -20.0
    q = np.linspace(-1.999, 1.999, 500)
    assert np.all(np.diff(barrier.barrier(q, -2.0, 2.0)) > 0)


def test_barrier_bounds_checked():
    with pytest.raises(ValueError):
        barrier.barrier(0.0, 1.0, 2.0)


def test_inverse_examples():
    assert barrier_inv(0.0, -2.0, 2.0) == 0.0
    assert barrier_inv(math.log(3.0), -2.0, 2.0) == pytest.approx(1.0, abs=1e-14)
    top = barrier_inv(700.0, -2.0, 2.0)
    assert 0 < 2.0 - top < 1e-12
    bottom = barrier_inv(-700.0, -2.0, 2.0)
    assert 0 < bottom + 2.0 < 1e-12


def test_inverse_round_trip_grid():
    for c, C in ((-30.0, 30.0), (-0.5, 4.0)):
        q = np.linspace(c, C, 1002)[1:-1]
        assert np.max(np.abs(barrier_inv(barrier.barrier(q, c, C), c, C) - q)) < 1e-9


def test_derivative_examples():
    assert barrier_inv_deriv(0.0, -2.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    for y in (-3.0, -1.0, 0.0, 1.0, 3.0):
        h = 1e-6
        fd = (barrier_inv(y + h, -2.0, 2.0) - barrier_inv(y - h, -2.0, 2.0)) / (2 * h)
        assert barrier_inv_deriv(y, -2.0, 2.0) == pytest.approx(fd, abs=1e-6)
    for y in (-50.0, 50.0):
        d = barrier_inv_deriv(y, -2.0, 2.0)
        assert 0 <= d < 1e-15


def test_to_s_tracking():
    assert np.array_equal(BOX30.to_s(np.zeros(2)), np.zeros(2))
    s = BOX30.to_s(np.array([1.0, -1.0]))
    assert s == pytest.approx([mp_barrier(1, -30, 30), mp_barrier(-1, -30, 30)], abs=1e-15)


def test_to_s_boundary():
    with pytest.raises(SafetyDomainError) as info:
        BOX30.to_s(np.array([0.0, 30.0]))
    assert info.value.row == 1


def test_to_x_round_trip_random():
    rng = np.random.default_rng(3)
    X = rng.uniform(-29.99, 29.99, (100, 2))
    err = max(np.max(np.abs(BOX30.to_x(BOX30.to_s(x)) - x)) for x in X)
    assert err < 1e-9
    assert np.array_equal(BOX30.to_x(np.zeros(2)), np.zeros(2))


def test_non_square_map():
    bm = BarrierMap(np.array([[1.0], [2.0]]), np.zeros(2), np.array([-1.0, -3.0]), np.array([1.0, 3.0]))
    for x in np.linspace(-0.99, 0.99, 25):
        xx = np.array([x])
        assert abs(bm.to_x(bm.to_s(xx))[0] - x) < 1e-9


def test_rank_and_bounds_validation():
    with pytest.raises(ValueError):
        BarrierMap(np.array([[1.0, 1.0], [2.0, 2.0]]), np.zeros(2), -np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        BarrierMap(np.eye(2), np.zeros(2), np.array([0.0, -1.0]), np.ones(2))


def test_local_matches_composition():
    rng = np.random.default_rng(4)
    for x in rng.uniform(-29, 29, (50, 2)):
        s, w, mg = BOX30.local(x)
        assert s == pytest.approx(BOX30.to_s(x), rel=1e-12, abs=1e-14)
        assert w == pytest.approx(1.0 / BOX30.dq_ds(s), rel=1e-12)
        assert mg == pytest.approx(BOX30.margin(x))
    assert BOX30.local(np.array([30.0, 0.0]))[0] is None


def test_to_x_interior_large_s():
    rng = np.random.default_rng(5)
    for r in (10.0, 100.0, 1000.0):
        for _ in range(100):
            d = rng.normal(size=2)
            assert BOX30.margin(BOX30.to_x(r * d / np.linalg.norm(d))) > 0


def test_equilibrium_maps_to_equilibrium():
    plant = builtin_sim_plant()
    s = BOX30.to_s(np.zeros(2))
    assert np.allclose(transformed_dynamics(s, np.zeros(1), plant, BOX30), 0.0)


def test_transformed_dynamics_composition():
    plant = builtin_sim_plant()
    x = np.array([0.1, 0.1])
    s = BOX30.to_s(x)
    k = math.cos(0.2) + 2
    fx = np.array([-0.1 + 0.1, -0.05 - 0.05 * (1 - k * k)])
    expect = fx / barrier_inv_deriv(s, BOX30.c, BOX30.C)
    assert transformed_dynamics(s, np.zeros(1), plant, BOX30) == pytest.approx(expect, rel=1e-12)


def test_chain_rule_along_trajectory():
    plant = builtin_sim_plant()
    bm = BarrierMap.box(-np.array([3.0, 4.0]), np.array([2.0, 5.0]))
    u = lambda t: np.array([0.5 * math.sin(3 * t)])
    dt = 1e-4
    x, t = np.array([0.4, -0.3]), 0.0
    xs, ts = [x], [t]
    for _ in range(2000):
        x = rk4_step(lambda tt, y: plant.xdot(y, u(tt)), x, dt, t)
        t += dt
        xs.append(x)
        ts.append(t)
    S = np.array([bm.to_s(v) for v in xs])
    for k in range(100, 1900, 150):
        fd = (S[k + 1] - S[k - 1]) / (2 * dt)
        assert fd == pytest.approx(transformed_dynamics(S[k], u(ts[k]), plant, bm), abs=1e-5)


def test_transform_trajectory_zero():
    zt = transform_trajectory(zero_reference("z0", 2), BOX30, times=[0.0, 1.0])
    assert np.array_equal(zt.position(3.0), np.zeros(2))
    assert np.array_equal(zt.fd(np.zeros(2)), np.zeros(2))


def test_transform_trajectory_tracking_reference():
    ref = circle_reference("z1", 0.5, 0.5)
    zt = transform_trajectory(ref, BOX30, times=np.linspace(0, 100, 1001))
    h = 1e-5
    for t in np.linspace(0.0, 4 * np.pi, 40):
        t = max(t, h)
        fd = (zt.position(t + h) - zt.position(t - h)) / (2 * h)
        assert fd == pytest.approx(zt.fd(zt.position(t)), abs=1e-5)


def test_transform_trajectory_rejects():
    ref = circle_reference("big", 40.0, 0.5)
    with pytest.raises(MissionRejected) as info:
        transform_trajectory(ref, BOX30, times=np.linspace(0, 10, 101))
    assert info.value.t == 0.0
