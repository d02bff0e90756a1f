import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridfreq.errors import InfeasibleOperatingPoint, ModelFormatError
from gridfreq.hvdc import (HvdcLink, LccParams, ShuntAutomaton, ShuntState, VscLimits,
                           VscState, initial_engaged_steps, lcc_epc_reactive_sign,
                           lcc_operating_point, shunt_automaton_step, vsc_outputs)
from gridfreq.network import ShuntBank


def _lcc(x_c=0.044, b=2, xi=0.2618, p_base=600.0):
    return LccParams(x_c=x_c, b=b, v_d0=1.0, xi_min=xi, p_base=p_base)


# ---------------------------------------------------------------- lcc

def test_lcc_direct_q_from_known_angle():
    # negligible overlap puts phi at the converter angle: tan(phi) = 0.5
    phi = math.atan(0.5)
    params = _lcc(x_c=1e-12, b=1, xi=phi, p_base=1000.0)
    q, phi_out, _, _ = lcc_operating_point(100.0, 1.0, params, "import")
    assert phi_out == pytest.approx(phi, abs=1e-9)
    assert q == pytest.approx(-50.0, rel=1e-9)


def test_lcc_zero_overlap_zero_angle():
    params = _lcc(x_c=1e-12, b=1, xi=0.0, p_base=500.0)
    q, phi, i_d, v_d = lcc_operating_point(250.0, 1.0, params, "import")
    assert v_d == pytest.approx(1.0, abs=1e-9)
    assert phi == pytest.approx(0.0, abs=1e-5)
    assert q == pytest.approx(0.0, abs=1e-3)


def test_lcc_monotone_sweep():
    params = _lcc()
    k = (3.0 / math.pi) * params.x_c * params.b
    a = math.cos(params.xi_min)
    prev = None
    for p in np.linspace(30.0, 600.0, 40):
        q, phi, i_d, v_d = lcc_operating_point(p, 1.0, params, "import")
        assert v_d == pytest.approx(a - k * i_d, abs=1e-12)      # linear droop in I_d
        assert abs(q + p * math.tan(phi)) < 1e-9 * 600.0         # consumption identity
        if prev is not None:
            assert i_d > prev[0] and v_d < prev[1] and (-q / p) > prev[2]
        prev = (i_d, v_d, -q / p)


def test_lcc_export_sign_convention():
    params = _lcc(p_base=700.0)
    q, _, _, _ = lcc_operating_point(-450.0, 1.0, params, "export")
    assert q < 0   # consumption regardless of the transfer direction
    with pytest.raises(ValueError):
        lcc_operating_point(+450.0, 1.0, params, "export")


def test_lcc_infeasible_when_voltage_collapses():
    params = _lcc(x_c=0.3, b=4, p_base=600.0)
    with pytest.raises(InfeasibleOperatingPoint):
        lcc_operating_point(600.0, 0.35, params, "import")


def test_lcc_rated_point_coupling_band():
    # defaults give tan(phi) around 0.5-0.6 at rating
    params = _lcc()
    q, phi, _, _ = lcc_operating_point(600.0, 1.0, params, "import")
    assert 0.5 <= math.tan(phi) <= 0.6


def test_epc_reactive_sign_table():
    assert lcc_epc_reactive_sign("import") == +1
    assert lcc_epc_reactive_sign("export") == -1
    params = _lcc()
    q_lo, *_ = lcc_operating_point(200.0, 1.0, params, "import")
    q_hi, *_ = lcc_operating_point(260.0, 1.0, params, "import")
    assert -q_hi > -q_lo                 # import: consumption grows with support
    q_lo, *_ = lcc_operating_point(-450.0, 1.0, params, "export")
    q_hi, *_ = lcc_operating_point(-390.0, 1.0, params, "export")
    assert -q_hi < -q_lo                 # export: consumption shrinks with support


# ---------------------------------------------------------------- shunt automaton

def _auto(q_step=60.0, n_on=0):
    bank = ShuntBank("B", q_step=q_step, n_steps=5, n_on=n_on)
    return ShuntAutomaton(bank=bank, t_sw=0.5)


def test_shunt_stays_off_below_threshold():
    auto = _auto()
    st = ShuntState()
    for _ in range(400):
        n, q = shunt_automaton_step(auto, 40.0, st, 0.01)
    assert n == 0 and q == pytest.approx(0.0, abs=1e-9)


def test_shunt_first_order_engagement():
    auto = _auto(q_step=60.0)
    st = ShuntState()
    dt = 0.01
    q_at_tau = None
    for k in range(200):
        n, q = shunt_automaton_step(auto, 80.0, st, dt, v_pcc=1.0)   # above q_hi[0] = 75
        if (k + 1) * dt == pytest.approx(0.5):
            q_at_tau = q
    assert n == 1
    assert q_at_tau == pytest.approx(0.632 * 60.0, rel=0.02)


def test_shunt_voltage_squared_scaling():
    auto = _auto()
    st = ShuntState(n_on=2, q_eng=120.0)
    _, q = shunt_automaton_step(auto, 100.0, st, 0.01, v_pcc=0.95)
    assert q == pytest.approx(st.q_eng * 0.95 ** 2, rel=1e-9)


def test_shunt_hysteresis_rejects_chatter():
    auto = _auto(q_step=60.0)
    st = ShuntState(n_on=1, q_eng=60.0)
    events = []
    t = np.arange(0, 20, 0.01)
    cons = 60.0 + 8.0 * (2 * np.abs((t / 4.0) % 1 - 0.5))   # triangle inside the band
    for c in cons:
        n, _ = shunt_automaton_step(auto, c, st, 0.01)
        events.append(n)
    assert len(set(events)) == 1


def test_shunt_never_exceeds_capacity():
    auto = _auto(q_step=60.0)
    st = ShuntState()
    for _ in range(5000):
        n, q = shunt_automaton_step(auto, 1e4, st, 0.01)
    assert n == 5
    assert q <= 5 * 60.0 + 1e-9


def test_initial_engagement_from_thresholds():
    auto = _auto(q_step=60.0)    # engage thresholds 75, 135, 195, ...
    assert initial_engaged_steps(auto, 40.0) == 0
    assert initial_engaged_steps(auto, 140.0) == 2
    assert initial_engaged_steps(auto, 1e4) == 5


# ---------------------------------------------------------------- vsc

def _vsc_link(mode="AcVoltage", q0=0.0, p0=-250.0):
    return HvdcLink(id="V", bus="B", kind="VSC", p_rated=700.0, p0=p0,
                    vsc_mode=mode, q0=q0, vsc=VscLimits(k_v=8.0, t_v=0.1))


def test_vsc_reactive_mode_is_decoupled():
    link = _vsc_link(mode="ReactivePower", q0=50.0)
    st = VscState()
    _, q1 = vsc_outputs(link, 1.0, 1.0, -250.0, st, 0.01)
    _, q2 = vsc_outputs(link, 1.0, 1.0, -100.0, st, 0.01)
    assert q1 == pytest.approx(50.0, rel=1e-9)
    assert q2 == pytest.approx(q1, rel=1e-9)


def test_vsc_voltage_mode_counteracts_rising_voltage():
    link = _vsc_link()
    st = VscState()
    qs = []
    for v in (1.0, 1.002, 1.004, 1.006):
        _, q = vsc_outputs(link, v, 1.0, -250.0, st, 0.01)
        qs.append(q)
    assert all(b < a for a, b in zip(qs, qs[1:]))


def test_vsc_reactive_current_limit_exact():
    link = _vsc_link()
    st = VscState()
    v = 0.9
    for _ in range(300):
        _, q = vsc_outputs(link, v, 1.05, -250.0, st, 0.01)   # deep dip demands i_q > 0.3
    assert st.q_saturated
    assert q == pytest.approx(0.3 * v * 700.0, rel=1e-9)


@given(p=st.floats(-700, 700), v=st.floats(0.85, 1.1), vref=st.floats(0.9, 1.1))
def test_vsc_current_circle(p, v, vref):
    link = _vsc_link()
    st = VscState()
    p_out, q_out = vsc_outputs(link, v, vref, p, st, 0.01)
    i_p = (p_out / 700.0) / v
    i_q = (q_out / 700.0) / v
    assert math.hypot(i_p, i_q) <= 1.0 + 1e-9


def test_vsc_active_priority_under_circle_limit():
    link = _vsc_link()
    link.vsc.i_q_max = 1.0     # let the circle be the binding limit
    st = VscState()
    for _ in range(200):
        p_out, q_out = vsc_outputs(link, 0.95, 1.2, 700.0 * 0.95, st, 0.01)
    i_p = (p_out / 700.0) / 0.95
    assert i_p == pytest.approx(1.0, rel=1e-9)           # full active despite q demand
    assert abs(q_out) < 1e-6


# ---------------------------------------------------------------- link records

def test_link_validation():
    with pytest.raises(ModelFormatError):
        HvdcLink(id="X", bus="B", kind="LCC", p_rated=500.0, p0=600.0)
    with pytest.raises(ModelFormatError):
        HvdcLink(id="X", bus="B", kind="VSC", p_rated=500.0, p0=100.0)  # missing mode
    link = HvdcLink(id="X", bus="B", kind="LCC", p_rated=500.0, p0=-250.0)
    assert link.mode == "export"
    assert link.epc_headroom == pytest.approx(250.0)
