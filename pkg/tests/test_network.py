import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfreq.network import (Branch, Bus, NetworkModel, ZipLoad, build_ybus,
                              network_step_solve, solve_power_flow, total_losses,
                              zip_load_power)
from gridfreq.machines import SynchronousMachine
from gridfreq.errors import ModelFormatError

from conftest import radial_model, two_bus_model


# ---------------------------------------------------------------- zip loads

def test_zip_nominal_point():
    ld = ZipLoad("B", p0=120.0, q0=30.0, zp=0.3, ip=0.4, pp=0.3, zq=0.2, iq=0.3, pq=0.5)
    p, q = zip_load_power(ld, 1.0, 0.0)
    assert p == pytest.approx(120.0, abs=1e-12)
    assert q == pytest.approx(30.0, abs=1e-12)


def test_zip_pure_impedance_quadratic():
    ld = ZipLoad("B", p0=200.0, q0=0.0, zp=1.0, ip=0.0, pp=0.0)
    p, _ = zip_load_power(ld, 0.95)
    assert p == pytest.approx(0.9025 * 200.0, rel=1e-12)


def test_zip_mixed_shares_hand_value():
    ld = ZipLoad("B", p0=100.0, q0=0.0, zp=0.3, ip=0.4, pp=0.3)
    p, _ = zip_load_power(ld, 1.02)
    assert p == pytest.approx(100.0 * (0.3 * 1.0404 + 0.4 * 1.02 + 0.3), rel=1e-12)


def test_zip_frequency_term():
    ld = ZipLoad("B", p0=100.0, q0=10.0, kpf=0.5)
    p, q = zip_load_power(ld, 1.0, df=-1.0, f_n=50.0)
    assert p == pytest.approx(100.0 * (1.0 - 0.5 / 50.0), rel=1e-12)
    assert q == pytest.approx(10.0, rel=1e-12)   # no frequency term on Q


@given(zp=st.floats(0, 1), ip=st.floats(0, 1))
def test_zip_consistent_at_nominal(zp, ip):
    if zp + ip > 1.0:
        zp, ip = zp / 2, ip / 2
    pp = 1.0 - zp - ip
    ld = ZipLoad("B", p0=77.0, q0=13.0, zp=zp, ip=ip, pp=pp, zq=pp, iq=zp, pq=ip)
    p, q = zip_load_power(ld, 1.0)
    assert p == pytest.approx(77.0, abs=1e-9)
    assert q == pytest.approx(13.0, abs=1e-9)


def test_zip_shares_must_sum_to_one():
    with pytest.raises(ModelFormatError):
        ZipLoad("B", p0=1.0, q0=0.0, zp=0.5, ip=0.0, pp=0.0)


# ---------------------------------------------------------------- power flow

def test_two_bus_closed_form_angle():
    # bus 2 held at 1 pu, pure 1 pu constant-P load: theta2 = -asin(P*x)
    model = two_bus_model()
    sol = solve_power_flow(model)
    assert sol.max_mismatch < 1e-8
    assert sol.v_ang[1] - sol.v_ang[0] == pytest.approx(-math.asin(0.1), abs=1e-9)
    assert sol.v_mag[1] == pytest.approx(1.0, abs=1e-12)


def test_zero_load_network_is_flat():
    model = NetworkModel(
        buses=[Bus("A", 400.0), Bus("B", 400.0)],
        branches=[Branch("A", "B", r=0.01, x=0.1)],
        loads=[],
        machines=[SynchronousMachine("G", "A", 1000.0, 3.0, v_set=1.0, is_slack=True)],
        s_base=1000.0)
    sol = solve_power_flow(model)
    assert np.allclose(sol.v_mag, 1.0, atol=1e-10)
    assert np.allclose(sol.v_ang, 0.0, atol=1e-10)
    assert sol.p_loss_mw == pytest.approx(0.0, abs=1e-8)


def test_radial_power_balance_identity():
    model = radial_model()
    sol = solve_power_flow(model)
    gen = sum(sol.machine_p.values())
    load = sum(sol.load_p.values())
    assert abs(gen - load - sol.p_loss_mw) / model.s_base < 1e-6


# ---------------------------------------------------------------- losses

def test_losses_zero_when_lossless():
    model = two_bus_model()
    sol = solve_power_flow(model)
    assert total_losses(model, sol.v) == pytest.approx(0.0, abs=1e-9)


def test_losses_single_branch_i2r():
    model = NetworkModel(
        buses=[Bus("A", 400.0), Bus("B", 400.0)],
        branches=[Branch("A", "B", r=0.01, x=0.1)],
        loads=[],
        machines=[SynchronousMachine("G", "A", 1000.0, 3.0, is_slack=True)],
        s_base=1000.0)
    v = np.array([1.0 + 0j, 1.0 - (0.01 + 0.1j)])   # exactly 1 pu series current
    assert total_losses(model, v) == pytest.approx(0.01 * 1000.0, rel=1e-12)


def test_losses_match_balance_on_radial():
    model = radial_model()
    sol = solve_power_flow(model)
    gen = sum(sol.machine_p.values())
    load = sum(sol.load_p.values())
    assert total_losses(model, sol.v) == pytest.approx(gen - load, abs=1e-3)


# ---------------------------------------------------------------- step solve

def test_step_solve_fixed_point_of_power_flow():
    model = radial_model()
    sol = solve_power_flow(model)
    inj = np.zeros(model.n_bus, dtype=complex)
    for m in model.machines:
        inj[model.bus_index(m.bus)] += sol.machine_p[m.id] + 1j * sol.machine_q[m.id]
    v = network_step_solve(model, inj, 0.0, v_init=sol.v)
    assert np.max(np.abs(v - sol.v)) < 1e-9


def test_step_solve_injection_raises_voltage():
    model = radial_model()
    sol = solve_power_flow(model)
    inj = np.zeros(model.n_bus, dtype=complex)
    for m in model.machines:
        inj[model.bus_index(m.bus)] += sol.machine_p[m.id] + 1j * sol.machine_q[m.id]
    v_base = network_step_solve(model, inj, 0.0, v_init=sol.v)
    bus = model.bus_index("B3")
    inj2 = inj.copy()
    inj2[bus] += 100.0
    v_up = network_step_solve(model, inj2, 0.0, v_init=sol.v)
    assert abs(v_up[bus]) > abs(v_base[bus])


def test_step_solve_trip_dip_is_local():
    # removing injection near the end of the chain dips the far bus hardest
    model = radial_model()
    sol = solve_power_flow(model)
    inj = np.zeros(model.n_bus, dtype=complex)
    for m in model.machines:
        inj[model.bus_index(m.bus)] += sol.machine_p[m.id] + 1j * sol.machine_q[m.id]
    inj2 = inj.copy()
    inj2[model.bus_index("B3")] -= 150.0 + 40.0j
    v = network_step_solve(model, inj2, 0.0, v_init=sol.v)
    dip = np.abs(sol.v) - np.abs(v)
    assert dip[model.bus_index("B3")] > dip[model.bus_index("B1")] > dip[model.bus_index("B0")] - 1e-12


def test_step_solve_deterministic():
    model = radial_model()
    sol = solve_power_flow(model)
    inj = np.zeros(model.n_bus, dtype=complex)
    inj[model.bus_index("B0")] = 900.0 + 250.0j
    v1 = network_step_solve(model, inj, 0.0, v_init=sol.v)
    v2 = network_step_solve(model, inj, 0.0, v_init=sol.v)
    assert np.array_equal(v1, v2)


def test_step_solve_rejects_nonfinite():
    model = radial_model()
    inj = np.zeros(model.n_bus, dtype=complex)
    inj[0] = np.nan
    with pytest.raises(ValueError):
        network_step_solve(model, inj)


@pytest.mark.parametrize("dq", [20.0, 60.0, 150.0])
def test_monotone_local_voltage_radial(dq):
    model = radial_model()
    sol = solve_power_flow(model)
    inj = np.zeros(model.n_bus, dtype=complex)
    for m in model.machines:
        inj[model.bus_index(m.bus)] += sol.machine_p[m.id] + 1j * sol.machine_q[m.id]
    bus = model.bus_index("B2")
    v_base = network_step_solve(model, inj, 0.0, v_init=sol.v)
    inj2 = inj.copy()
    inj2[bus] += 1j * dq
    v_up = network_step_solve(model, inj2, 0.0, v_init=sol.v)
    assert abs(v_up[bus]) >= abs(v_base[bus])


def test_ybus_symmetry_without_taps():
    model = radial_model()
    y = build_ybus(model)
    assert np.allclose(y, y.T)


def test_model_requires_single_slack():
    with pytest.raises(ModelFormatError):
        NetworkModel(
            buses=[Bus("A", 400.0)], branches=[], loads=[],
            machines=[SynchronousMachine("G1", "A", 100.0, 3.0, is_slack=True),
                      SynchronousMachine("G2", "A", 100.0, 3.0, is_slack=True)])
