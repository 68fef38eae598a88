import math

import mpmath
import numpy as np
import pytest

from ltltrack import expr, plant
from ltltrack.barrier import BarrierMap, transform_trajectory, transformed_dynamics
from ltltrack.plant import (Exosystem, TrackingModel, builtin_sim_plant, circle_reference,
                            expression_plant, expression_reference)

BOX30 = BarrierMap.box(-30 * np.ones(2), 30 * np.ones(2))
SIM_F = ["-x1 + x2", "-0.5*x1 - 0.5*x2*(1 - (cos(2*x1) + 2)^2)"]
SIM_G = [["0"], ["cos(2*x1) + 2"]]


def test_sim_plant_basics():
    p = builtin_sim_plant()
    assert np.array_equal(p.f(np.zeros(2)), np.zeros(2))
    assert np.array_equal(p.g(np.zeros(2)), np.array([[0.0], [3.0]]))


def test_sim_plant_high_precision():
    mpmath.mp.dps = 40
    x1, x2 = mpmath.pi / 2, mpmath.mpf(1)
    k = mpmath.cos(2 * x1) + 2
    expect = [float(-x1 + x2), float(-x1 / 2 - x2 / 2 * (1 - k ** 2))]
    got = builtin_sim_plant().f(np.array([math.pi / 2, 1.0]))
    assert got == pytest.approx(expect, rel=1e-14)


def test_fused_and_batch_paths_agree():
    p = builtin_sim_plant()
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    Fb, Gb = p.fields_batch(X)
    for i, x in enumerate(X):
        u = rng.normal(size=1)
        assert p.xdot(x, u) == pytest.approx(p.f(x) + p.g(x) @ u, rel=1e-14)
        assert Fb[i] == pytest.approx(p.f(x), rel=1e-14)
        assert Gb[i] == pytest.approx(p.g(x), rel=1e-14)


def test_expression_plant_matches_builtin():
    ep = expression_plant(SIM_F, SIM_G)
    bp = builtin_sim_plant()
    rng = np.random.default_rng(1)
    X = rng.uniform(-3, 3, (30, 2))
    for x in X:
        assert ep.f(x) == pytest.approx(bp.f(x), rel=1e-13, abs=1e-14)
        assert ep.g(x) == pytest.approx(bp.g(x), rel=1e-13)
    Fb, Gb = ep.fields_batch(X)
    assert Fb == pytest.approx(bp.fields_batch(X)[0], rel=1e-13, abs=1e-14)
    assert Gb.shape == (30, 2, 1)


def test_expression_plant_errors():
    with pytest.raises(expr.ExpressionError):
        expression_plant(["x1", "x2"], [["1"]])
    with pytest.raises(expr.ExpressionError):
        expression_plant(["x1 + y"], [["1"]])


def test_circle_reference():
    z = circle_reference("z1", 0.5, 0.5)
    t = 1.7
    assert z.position(t) == pytest.approx([0.5 * math.sin(0.85), 0.5 * math.cos(0.85)])
    assert z.velocity(t) == pytest.approx(z.h(z.position(t)), rel=1e-14)
    ts = np.linspace(0, 10, 7)
    assert z.positions(ts) == pytest.approx(np.array([z.position(s) for s in ts]))


def test_exosystem_origin_check():
    with pytest.raises(ValueError):
        Exosystem("bad", lambda z: z + 1.0, 2, z0=np.ones(2))


def test_integrated_exosystem_matches_closed_form():
    ref = expression_reference("z", {"h": ["0.5*z2", "-0.5*z1"], "z0": [0.0, 0.5]})
    exact = circle_reference("c", 0.5, 0.5)
    for t in (0.0, 0.0005, 1.234, 9.9999):
        assert ref.position(t) == pytest.approx(exact.position(t), abs=1e-10)


def test_expression_reference_closed_form():
    ref = expression_reference("z", {"h": ["0.5*z2", "-0.5*z1"],
                                     "z": ["0.5*sin(0.5*t)", "0.5*cos(0.5*t)"]})
    assert ref.position(2.0) == pytest.approx(circle_reference("c", 0.5, 0.5).position(2.0))
    with pytest.raises(ValueError):
        expression_reference("z", {"z0": [0, 0]})
    with pytest.raises(ValueError):
        expression_reference("z", {"builtin": "nope"})


def model():
    return TrackingModel(builtin_sim_plant(), BOX30, circle_reference("z1", 0.5, 0.5))


def test_bottom_block_independent_of_u():
    m = model()
    rng = np.random.default_rng(2)
    for _ in range(10):
        sa = m.aug_state(rng.uniform(-3, 3, 2), rng.uniform(0, 10))
        _, Gaug = m.aug_fields(sa)
        assert np.all(Gaug[2:] == 0.0)
        a = m.augmented_dynamics(sa, rng.normal(size=1))
        b = m.augmented_dynamics(sa, rng.normal(size=1))
        assert np.array_equal(a[2:], b[2:])


def test_zero_error_on_invariant_reference():
    # a reference that is itself a plant trajectory with u = 0: the
    # equilibrium at the origin
    m = TrackingModel(builtin_sim_plant(), BOX30, plant.zero_reference("z0", 2))
    sa = m.aug_state(np.zeros(2), 0.0)
    assert np.allclose(m.augmented_dynamics(sa, np.zeros(1)), 0.0)


def test_augmented_composition_tracking():
    m = model()
    x0 = np.array([1.0, -1.0])
    sa = m.aug_state(x0, 0.0)
    u = np.array([0.7])
    s = BOX30.to_s(x0)
    zt = transform_trajectory(m.ref, BOX30)
    zs = zt.position(0.0)
    sdot = transformed_dynamics(s, u, m.plant, BOX30)
    fd = zt.fd(zs)
    expect = np.concatenate([sdot - fd, fd])
    assert m.augmented_dynamics(sa, u) == pytest.approx(expect, rel=1e-12, abs=1e-14)
    assert sa[2:] == pytest.approx(zs)


def test_aug_state_round_trip():
    v = np.array([0.1, -0.2, 0.3, 0.4])
    a = plant.AugState.from_vector(v)
    assert np.array_equal(a.vector, v)
    assert a.s == pytest.approx([0.4, 0.2])


def test_dimension_checks():
    with pytest.raises(ValueError):
        TrackingModel(builtin_sim_plant(), BarrierMap.box(-np.ones(3), np.ones(3)),
                      circle_reference("z", 0.5, 0.5))
