import math

import numpy as np
import pytest
from scipy.integrate import quad

from ltltrack import control
from ltltrack.control import (ControlConfig, SaturationError, TriggerState, control_penalty,
                              estimate_lipschitz, hamiltonian, optimal_control, trigger_check,
                              trigger_threshold)


def cfg(**kw):
    base = dict(Q=800 * np.eye(2), lam=5.0, gamma1=1.0, gamma=0.01, beta=0.5, L=10.0)
    base.update(kw)
    return ControlConfig(**base)


def quad_penalty(u, lam, gamma1):
    return sum(quad(lambda v: gamma1 * lam * math.atanh(v / lam), 0.0, uk,
                    epsabs=1e-14, epsrel=1e-13)[0] for uk in np.atleast_1d(u))


def test_penalty_zero():
    assert control_penalty(np.zeros(1), cfg()) == 0.0


def test_penalty_quadrature():
    c = cfg(lam=1.0)
    assert control_penalty(np.array([0.5]), c) == pytest.approx(quad_penalty(0.5, 1.0, 1.0), abs=1e-9)
    c = cfg()
    for u in (-4.9, -1.0, 0.3, 2.2, 4.99):
        assert control_penalty(np.array([u]), c) == pytest.approx(quad_penalty(u, 5.0, 1.0), abs=1e-9)


def test_penalty_vector_is_componentwise():
    c = cfg()
    u = np.array([1.0, -3.0])
    assert control_penalty(u, c) == pytest.approx(
        control_penalty(u[:1], c) + control_penalty(u[1:], c), rel=1e-15)


def test_penalty_saturation_limit():
    c = cfg(lam=2.0, gamma1=1.5)
    lim = c.gamma1 * c.lam ** 2 * math.log(2.0)
    assert control_penalty(np.array([c.lam * (1 - 1e-12)]), c) == pytest.approx(lim, rel=1e-6)
    with pytest.raises(SaturationError):
        control_penalty(np.array([2.0]), c)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(beta=0.8)
    with pytest.raises(ValueError):
        cfg(lam=0.0)
    with pytest.raises(ValueError):
        cfg(Q=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        cfg(Q=-np.eye(2))
    c = cfg()
    assert c.lambda_min == 800.0
    assert c.Q_aug.shape == (4, 4) and c.Q_aug[2:, 2:].sum() == 0


def test_hamiltonian_zero():
    c = cfg()
    assert hamiltonian(np.zeros(4), np.zeros(1), np.zeros(4), 0.0, np.zeros(4), np.zeros((4, 1)), c) == 0.0


def test_hamiltonian_recomposition():
    c = cfg()
    rng = np.random.default_rng(0)
    for _ in range(50):
        sa = rng.normal(size=4)
        u = rng.uniform(-4.9, 4.9, 1)
        gradV = rng.normal(size=4)
        V = rng.normal()
        F = rng.normal(size=4)
        G = np.vstack([rng.normal(size=(2, 1)), np.zeros((2, 1))])
        e = sa[:2]
        cost = 0.5 * (e @ c.Q @ e) + 0.5 * quad_penalty(u, 5.0, 1.0)
        expect = gradV @ F + gradV @ (G @ u) + cost - c.gamma * V
        assert hamiltonian(sa, u, gradV, V, F, G, c) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_optimal_control_examples():
    c = cfg()
    G = np.array([[1.0]])
    assert optimal_control(np.zeros(1), G, c) == pytest.approx([0.0])
    assert optimal_control(np.array([10.0]), G, c)[0] == pytest.approx(-5 * math.tanh(1.0), abs=1e-12)
    assert optimal_control(np.array([10.0]), G, c)[0] == pytest.approx(-3.80797, abs=1e-5)


def test_optimal_control_saturates():
    c = cfg()
    rng = np.random.default_rng(1)
    G = np.vstack([rng.normal(size=(2, 1)), np.zeros((2, 1))])
    for _ in range(200):
        g = rng.normal(size=4)
        g *= 1e6 / np.linalg.norm(g)
        assert np.max(np.abs(optimal_control(g, G, c))) < c.lam


def test_optimal_control_stationary():
    # the tanh law minimizes gradV'G u + 2 R(u) over the open interval
    c = cfg()
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = rng.normal(size=1) * 5
        G = np.array([[rng.uniform(0.5, 2)]])
        u = optimal_control(g, G, c)
        obj = lambda v: float(g @ (G @ np.array([v]))) + 2.0 * control_penalty(np.array([v]), c)
        grid = np.linspace(-4.999, 4.999, 20001)
        assert obj(u[0]) <= min(obj(v) for v in grid) + 1e-9


def test_trigger_examples():
    c = cfg()
    assert not trigger_check(np.zeros(4), np.ones(2), np.zeros(1), c)
    e_s = np.array([1.0, 0.0])
    assert trigger_threshold(e_s, np.zeros(1), c) == pytest.approx(0.4, rel=1e-15)
    e_trig = np.array([math.sqrt(0.5), 0.0, 0.0, 0.0])
    assert trigger_check(e_trig, e_s, np.zeros(1), c)
    assert not trigger_check(e_trig * 0.5, e_s, np.zeros(1), c)


def test_trigger_threshold_hand_value():
    c = cfg()
    rng = np.random.default_rng(3)
    for _ in range(200):
        e = rng.normal(size=2) * 4
        u = rng.uniform(-4.99, 4.99, 1)
        expect = 0.4 * float(e @ e) + quad_penalty(u, 5.0, 1.0) / 500.0
        assert abs(trigger_threshold(e, u, c) - expect) < 1e-12 * max(1.0, expect)


def test_trigger_monotone_in_error():
    c = cfg()
    rng = np.random.default_rng(4)
    for _ in range(200):
        et = rng.normal(size=4)
        u = rng.uniform(-4, 4, 1)
        e = rng.normal(size=2)
        if not trigger_check(et, e, u, c):
            assert not trigger_check(et, e * rng.uniform(1, 3), u, c)


def test_trigger_needs_L():
    with pytest.raises(ValueError):
        trigger_threshold(np.ones(2), np.zeros(1), cfg(L=None))


def test_trigger_state():
    ts = TriggerState()
    ts.fire(0.0, np.zeros(4))
    ts.fire(0.004, np.ones(4))
    assert ts.count == 2 and ts.stats()["min_gap"] == pytest.approx(0.004)
    assert np.array_equal(ts.error(np.zeros(4)), np.ones(4))
    with pytest.raises(ValueError):
        ts.fire(0.004, np.ones(4))


def test_lipschitz_estimate():
    rng = np.random.default_rng(5)
    est, raw = estimate_lipschitz(lambda x: np.array([3.0 * x[0] - 4.0 * x[1]]), [-1, -1], [1, 1],
                                  rng, pairs=2000, factor=2.0)
    assert raw <= 5.0 + 1e-12 and raw > 4.5
    assert est == pytest.approx(2 * raw)


def test_clamp():
    c = cfg()
    out = control.clamp_input(np.array([7.0, -7.0, 1.0]), c)
    assert out[0] < 5.0 and out[1] > -5.0 and out[2] == 1.0
