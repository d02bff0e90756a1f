import math

import numpy as np
import pytest

from gridfreq.errors import DomainError, UnstableClosedLoop
from gridfreq.linear import (LinearLoopConfig, RationalTf, aggregate_frequency_tf,
                             closed_loop_tf, effective_coupling, governor_tf,
                             step_response)


def _first_order():
    return RationalTf(np.array([1.0]), np.array([1.0, 1.0]))   # 1/(s+1)


def _normalize_pair(tf):
    n = tf.normalized()
    return n.num, n.den


def _coeffs_close(tf_a, tf_b, tol=1e-12):
    na, da = _normalize_pair(tf_a)
    nb, db = _normalize_pair(tf_b)
    if len(na) != len(nb) or len(da) != len(db):
        return False
    scale = max(np.max(np.abs(na)), np.max(np.abs(nb)), 1.0)
    return (np.max(np.abs(na - nb)) <= tol * scale
            and np.max(np.abs(da - db)) <= tol * max(np.max(np.abs(da)), 1.0))


# ---------------------------------------------------------------- step response

def test_step_response_first_order_lag():
    t, y = step_response(_first_order(), horizon=5.0, dt=1e-3)
    i = int(round(1.0 / 1e-3))
    assert y[i] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-6)
    assert y[-1] == pytest.approx(1.0 - math.exp(-5.0), abs=1e-6)


def test_step_response_constant_gain():
    t, y = step_response(RationalTf.const(1.0), horizon=1.0, dt=0.01)
    assert np.allclose(y, 1.0, atol=1e-12)


def test_step_response_second_order_peak_formula():
    # 1/(m s^2 + d s + r): peak overshoot exp(-pi*zeta/sqrt(1-zeta^2)) at pi/wd
    m, d, r = 2.0, 0.8, 3.0
    wn = math.sqrt(r / m)
    zeta = d / (2.0 * math.sqrt(m * r))
    wd = wn * math.sqrt(1 - zeta ** 2)
    tf = RationalTf(np.array([1.0]), np.array([m, d, r]))
    t, y = step_response(tf, horizon=20.0, dt=2e-4)
    i_peak = int(np.argmax(y))
    assert t[i_peak] == pytest.approx(math.pi / wd, abs=2e-3)
    overshoot = math.exp(-math.pi * zeta / math.sqrt(1 - zeta ** 2))
    assert y[i_peak] == pytest.approx((1.0 + overshoot) / r, rel=1e-4)


def test_step_response_halved_dt_agreement():
    tf = RationalTf(np.array([2.0, 1.0]), np.array([1.0, 1.4, 2.0]))
    t1, y1 = step_response(tf, horizon=10.0, dt=1e-3)
    t2, y2 = step_response(tf, horizon=10.0, dt=5e-4)
    assert np.max(np.abs(y1 - y2[::2])) < 1e-6


def test_improper_tf_rejected():
    with pytest.raises(DomainError):
        RationalTf(np.array([1.0, 0.0, 0.0]), np.array([1.0, 1.0]))


# ---------------------------------------------------------------- closed loop

def _loop(g_prime=200.0, k_pq=0.0, c_q=1.0):
    gov = governor_tf("hydro", 3468.0, 0.2, 1.0, 5.0, 6.0)
    gp = aggregate_frequency_tf(101.5, 255.0, [gov])
    return LinearLoopConfig(g_prime=g_prime, k_pq=k_pq, gp=gp, gq=c_q * gp, gd=gp)


def test_zero_gain_reduces_to_open_loop():
    cfg = _loop(g_prime=0.0, k_pq=-0.3)
    tf = closed_loop_tf(cfg)
    assert _coeffs_close(tf, cfg.gd)


def test_zero_coupling_reduces_to_active_only_loop():
    cfg = _loop(g_prime=250.0, k_pq=0.0)
    tf = closed_loop_tf(cfg)
    num_pad = np.concatenate([np.zeros(len(cfg.gp.den) - len(cfg.gp.num)), cfg.gp.num])
    expect = RationalTf(cfg.gd.num, cfg.gp.den + cfg.g_prime * num_pad)
    assert _coeffs_close(tf, expect)


def test_support_shrinks_the_step_peak():
    cfg0 = _loop(g_prime=0.0)
    cfg1 = _loop(g_prime=400.0)
    _, y0 = step_response(closed_loop_tf(cfg0), horizon=40.0, dt=1e-3)
    _, y1 = step_response(closed_loop_tf(cfg1), horizon=40.0, dt=1e-3)
    # step of -1450 MW: deepest deviation shrinks strictly with gain
    assert np.max(np.abs(1450.0 * y1)) < np.max(np.abs(1450.0 * y0))


def test_reconstruction_identity_constant_coupling():
    # with-EPC response times (1 + g'(Gp + Gq*K)) reproduces the open loop
    cfg = _loop(g_prime=300.0, k_pq=-0.25, c_q=0.8)
    dt = 1e-3
    n = int(round(30.0 / dt)) + 1
    u = np.ones(n)
    closed = closed_loop_tf(cfg)
    y_closed = closed.simulate(u, dt)
    mult = (RationalTf.const(1.0) + cfg.g_prime * (cfg.gp + cfg.k_pq * cfg.gq))
    y_back = mult.simulate(y_closed, dt)
    y_open = cfg.gd.simulate(u, dt)
    assert np.max(np.abs(y_back - y_open)) < 1e-9


def test_shunt_path_shares_the_denominator():
    cfg = _loop(g_prime=300.0, k_pq=-0.25, c_q=0.8)
    tf_d = closed_loop_tf(cfg, input="disturbance")
    tf_sh = closed_loop_tf(cfg, input="shunt")
    # same poles for both inputs
    pd = np.sort_complex(tf_d.poles())
    ps = np.sort_complex(tf_sh.poles())
    assert np.allclose(pd, ps, atol=1e-6)


def test_nadir_monotone_in_coupling_when_gq_matches_gp_sign():
    peaks = []
    for k in np.linspace(-0.4, 0.4, 9):
        cfg = _loop(g_prime=300.0, k_pq=k, c_q=1.0)
        _, y = step_response(closed_loop_tf(cfg), horizon=40.0, dt=2e-3)
        peaks.append(np.max(np.abs(y)))
    diffs = np.diff(peaks)
    assert np.all(diffs < 0)   # more negative coupling worsens the peak


def test_unstable_loop_detected():
    cfg = _loop(g_prime=-8000.0)   # strong positive feedback
    with pytest.raises(UnstableClosedLoop):
        closed_loop_tf(cfg)


# ---------------------------------------------------------------- coupling series

def test_effective_coupling_collapse():
    dq = np.zeros(50)
    dp = np.full(50, 120.0)
    k = effective_coupling(-0.3, dq, dp)
    assert np.allclose(k, -0.3)


def test_effective_coupling_constant_ratio():
    dp = np.full(50, 100.0)
    dq = np.full(50, 10.0)
    k = effective_coupling(-0.3, dq, dp)
    assert np.allclose(k, -0.2)


def test_effective_coupling_masks_small_dp():
    dp = np.array([0.0, 1e-6, 50.0])
    dq = np.array([5.0, 5.0, 5.0])
    k = effective_coupling(0.0, dq, dp)
    assert np.isnan(k[0]) and np.isnan(k[1])
    assert k[2] == pytest.approx(0.1)
