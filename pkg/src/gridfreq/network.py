"""Static network model and algebraic network solutions.

Everything here works in per-unit on the system MVA base internally;
interfaces take and return MW / MVAr / Hz / pu voltage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import ModelFormatError, NonConvergence, SingularJacobian

if TYPE_CHECKING:  # pragma: no cover
    from .hvdc import HvdcLink
    from .machines import SynchronousMachine


@dataclass
class Bus:
    id: str
    base_kv: float
    zone: str = ""
    v_mag: float = 1.0
    v_ang: float = 0.0

    def __post_init__(self):
        if self.base_kv <= 0:
            raise ModelFormatError(f"bus {self.id}: base_kv must be > 0")


@dataclass
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    b_sh: float = 0.0
    tap: float = 1.0

    def __post_init__(self):
        if self.x == 0.0:
            raise ModelFormatError(f"branch {self.from_bus}-{self.to_bus}: x must be nonzero")
        if self.r < 0.0:
            raise ModelFormatError(f"branch {self.from_bus}-{self.to_bus}: r must be >= 0")


@dataclass
class ZipLoad:
    """Static load with impedance/current/power shares and optional frequency term.

    P = p0 * (zp*(v/v0)^2 + ip*(v/v0) + pp) * (1 + kpf*df/f_n)
    Q = q0 * (zq*(v/v0)^2 + iq*(v/v0) + pq)
    """

    bus: str
    p0: float
    q0: float
    v0: float = 1.0
    zp: float = 0.0
    ip: float = 0.0
    pp: float = 1.0
    zq: float = 0.0
    iq: float = 0.0
    pq: float = 1.0
    kpf: float = 0.0

    def __post_init__(self):
        for name, total in (("active", self.zp + self.ip + self.pp),
                            ("reactive", self.zq + self.iq + self.pq)):
            if abs(total - 1.0) > 1e-9:
                raise ModelFormatError(f"load at {self.bus}: {name} shares sum to {total}, not 1")
        if min(self.zp, self.ip, self.pp, self.zq, self.iq, self.pq) < 0:
            raise ModelFormatError(f"load at {self.bus}: negative share")


@dataclass
class ShuntBank:
    """Switchable capacitor bank; q_step is MVAr per step at nominal voltage."""

    bus: str
    q_step: float
    n_steps: int
    n_on: int = 0

    def __post_init__(self):
        if not 0 <= self.n_on <= self.n_steps:
            raise ModelFormatError(f"shunt at {self.bus}: n_on outside [0, n_steps]")


@dataclass
class NetworkModel:
    buses: list[Bus]
    branches: list[Branch]
    loads: list[ZipLoad]
    shunts: list[ShuntBank] = field(default_factory=list)
    machines: list["SynchronousMachine"] = field(default_factory=list)
    hvdc: list["HvdcLink"] = field(default_factory=list)
    s_base: float = 1000.0
    f_n: float = 50.0
    name: str = ""
    epc_defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        self._bus_index = {b.id: i for i, b in enumerate(self.buses)}
        if len(self._bus_index) != len(self.buses):
            raise ModelFormatError("duplicate bus ids")
        for br in self.branches:
            for b in (br.from_bus, br.to_bus):
                if b not in self._bus_index:
                    raise ModelFormatError(f"branch references unknown bus {b}")
        for ld in self.loads:
            if ld.bus not in self._bus_index:
                raise ModelFormatError(f"load references unknown bus {ld.bus}")
        for sh in self.shunts:
            if sh.bus not in self._bus_index:
                raise ModelFormatError(f"shunt references unknown bus {sh.bus}")
        for m in self.machines:
            if m.bus not in self._bus_index:
                raise ModelFormatError(f"machine {m.id} references unknown bus {m.bus}")
        for lk in self.hvdc:
            if lk.bus not in self._bus_index:
                raise ModelFormatError(f"hvdc link {lk.id} references unknown bus {lk.bus}")
        slack = [m for m in self.machines if m.is_slack]
        if self.machines and len(slack) != 1:
            raise ModelFormatError(f"exactly one slack machine required, found {len(slack)}")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: str) -> int:
        return self._bus_index[bus_id]

    def slack_machine(self) -> "SynchronousMachine":
        return next(m for m in self.machines if m.is_slack)

    def link(self, link_id: str) -> "HvdcLink":
        for lk in self.hvdc:
            if lk.id == link_id:
                return lk
        raise KeyError(link_id)

    def machine(self, machine_id: str) -> "SynchronousMachine":
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise KeyError(machine_id)


def zip_load_power(load: ZipLoad, v: float, df: float = 0.0, f_n: float = 50.0):
    """Active/reactive demand (MW, MVAr) of one load at voltage v and deviation df."""
    if np.any(np.asarray(v) <= 0):
        raise ValueError("zip_load_power requires v > 0")
    w = v / load.v0
    p = load.p0 * (load.zp * w * w + load.ip * w + load.pp) * (1.0 + load.kpf * df / f_n)
    q = load.q0 * (load.zq * w * w + load.iq * w + load.pq)
    return p, q


def build_ybus(model: NetworkModel, extra_shunt_b=None) -> np.ndarray:
    """Dense bus admittance matrix from branches; extra_shunt_b adds per-bus jB (pu)."""
    n = model.n_bus
    y = np.zeros((n, n), dtype=complex)
    for br in model.branches:
        i = model.bus_index(br.from_bus)
        j = model.bus_index(br.to_bus)
        ys = 1.0 / complex(br.r, br.x)
        bc = 1j * br.b_sh / 2.0
        t = br.tap if br.tap else 1.0
        y[i, i] += (ys + bc) / (t * t)
        y[j, j] += ys + bc
        y[i, j] += -ys / t
        y[j, i] += -ys / t
    if extra_shunt_b is not None:
        y[np.diag_indices(n)] += 1j * np.asarray(extra_shunt_b, dtype=float)
    return y


def branch_losses_mw(model: NetworkModel, v: np.ndarray) -> float:
    """Series I^2*R losses summed over branches, in MW."""
    total = 0.0
    for br in model.branches:
        i = model.bus_index(br.from_bus)
        j = model.bus_index(br.to_bus)
        t = br.tap if br.tap else 1.0
        i_series = (v[i] / t - v[j]) / complex(br.r, br.x)
        total += (abs(i_series) ** 2) * br.r
    return total * model.s_base


def total_losses(model: NetworkModel, v: np.ndarray) -> float:
    """Total active transmission losses (MW) for a converged voltage solution."""
    return branch_losses_mw(model, v)


class _LoadArrays:
    """Per-load arrays for vectorized ZIP evaluation (pu on system base)."""

    def __init__(self, model: NetworkModel):
        self.n_bus = model.n_bus
        self.f_n = model.f_n
        self.bus = np.array([model.bus_index(ld.bus) for ld in model.loads], dtype=int)
        sb = model.s_base
        self.p0 = np.array([ld.p0 / sb for ld in model.loads])
        self.q0 = np.array([ld.q0 / sb for ld in model.loads])
        self.v0 = np.array([ld.v0 for ld in model.loads])
        self.zp = np.array([ld.zp for ld in model.loads])
        self.ip = np.array([ld.ip for ld in model.loads])
        self.pp = np.array([ld.pp for ld in model.loads])
        self.zq = np.array([ld.zq for ld in model.loads])
        self.iq = np.array([ld.iq for ld in model.loads])
        self.pq = np.array([ld.pq for ld in model.loads])
        self.kpf = np.array([ld.kpf for ld in model.loads])

    def bus_pq(self, vmag: np.ndarray, df: float):
        """Aggregate (P_load, Q_load, dP/dv, dQ/dv) per bus, pu."""
        p = np.zeros(self.n_bus)
        q = np.zeros(self.n_bus)
        dp = np.zeros(self.n_bus)
        dq = np.zeros(self.n_bus)
        if self.bus.size == 0:
            return p, q, dp, dq
        v = vmag[self.bus]
        w = v / self.v0
        fterm = 1.0 + self.kpf * df / self.f_n
        pl = self.p0 * (self.zp * w * w + self.ip * w + self.pp) * fterm
        ql = self.q0 * (self.zq * w * w + self.iq * w + self.pq)
        dpl = self.p0 * (2.0 * self.zp * w + self.ip) / self.v0 * fterm
        dql = self.q0 * (2.0 * self.zq * w + self.iq) / self.v0
        np.add.at(p, self.bus, pl)
        np.add.at(q, self.bus, ql)
        np.add.at(dp, self.bus, dpl)
        np.add.at(dq, self.bus, dql)
        return p, q, dp, dq


@dataclass
class PowerFlowSolution:
    v: np.ndarray                 # complex bus voltages, pu
    v_mag: np.ndarray
    v_ang: np.ndarray
    machine_p: dict               # machine id -> MW injected
    machine_q: dict               # machine id -> MVAr injected
    link_p: dict                  # link id -> MW injected at PCC
    link_q: dict                  # link id -> MVAr injected at PCC (consumption negative)
    shunt_q: dict                 # link id -> MVAr injected by its switched bank
    shunt_n_on: dict              # link id -> engaged steps
    load_p: dict                  # bus id -> MW consumed
    load_q: dict
    p_loss_mw: float
    iterations: int
    max_mismatch: float           # pu


def _newton_power_flow(model, y, s_fixed, load_arrays, pv, pq, slack,
                       v_sched, v_init=None, tol=1e-10, max_iter=30):
    """Polar Newton-Raphson with ZIP loads; s_fixed holds device PQ injections (pu)."""
    n = model.n_bus
    vm = np.ones(n) if v_init is None else np.abs(v_init).astype(float)
    va = np.zeros(n) if v_init is None else np.angle(v_init)
    vm[slack] = v_sched[slack]
    va[slack] = 0.0
    vm[pv] = v_sched[pv]

    pvpq = np.concatenate([pv, pq])
    iterations = 0
    for iterations in range(1, max_iter + 1):
        v = vm * np.exp(1j * va)
        ibus = y @ v
        s_calc = v * np.conj(ibus)
        p_l, q_l, dp_l, dq_l = load_arrays.bus_pq(vm, 0.0)
        mis = s_fixed - (p_l + 1j * q_l) - s_calc
        f = np.concatenate([mis.real[pvpq], mis.imag[pq]])
        if np.max(np.abs(f), initial=0.0) < tol:
            break

        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_vn = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        ds_dvm = diag_v @ np.conj(y @ diag_vn) + np.conj(diag_i) @ diag_vn

        j11 = ds_dva.real[np.ix_(pvpq, pvpq)]
        j12 = ds_dvm.real[np.ix_(pvpq, pq)] + np.diag(dp_l)[np.ix_(pvpq, pq)]
        j21 = ds_dva.imag[np.ix_(pq, pvpq)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)] + np.diag(dq_l)[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"singular power-flow Jacobian at iteration {iterations}") from exc
        va[pvpq] += dx[: pvpq.size]
        vm[pq] += dx[pvpq.size:]
        if np.any(vm <= 0):
            raise NonConvergence("voltage magnitude collapsed during power flow")
    else:
        raise NonConvergence(
            f"power flow did not converge in {max_iter} iterations "
            f"(max mismatch {np.max(np.abs(f)):.3e} pu)", mismatch=float(np.max(np.abs(f))))
    v = vm * np.exp(1j * va)
    return v, iterations, float(np.max(np.abs(f), initial=0.0))


def solve_power_flow(model: NetworkModel, max_iter: int = 30, tol: float = 1e-10,
                     auto_shunts: bool = True) -> PowerFlowSolution:
    """Initial operating point: Newton-Raphson with PV machines and one slack.

    HVDC reactive consumption and switched-shunt engagement are updated in an
    outer loop until self-consistent with the solved voltages.
    """
    from . import hvdc as hvdc_mod

    n = model.n_bus
    sb = model.s_base
    if not model.machines:
        raise ModelFormatError("power flow requires at least one (slack) machine")

    slack_bus = model.bus_index(model.slack_machine().bus)
    v_sched = np.ones(n)
    machine_buses = set()
    for m in model.machines:
        bi = model.bus_index(m.bus)
        machine_buses.add(bi)
        v_sched[bi] = m.v_set
    pv = np.array(sorted(machine_buses - {slack_bus}), dtype=int)
    pq = np.array(sorted(set(range(n)) - machine_buses - {slack_bus}), dtype=int)

    load_arrays = _LoadArrays(model)

    # scheduled machine P (slack bus machines excluded from the fixed injection)
    p_mach = np.zeros(n)
    for m in model.machines:
        if model.bus_index(m.bus) != slack_bus:
            p_mach[model.bus_index(m.bus)] += m.p_mech / sb

    # initial link PQ guesses and shunt engagement states
    link_q = {lk.id: 0.0 for lk in model.hvdc}
    n_on = {lk.id: (lk.shunt.bank.n_on if lk.kind == "LCC" and lk.shunt else 0)
            for lk in model.hvdc}
    v = None
    iterations = 0
    mism = np.inf
    for _outer in range(12):
        shunt_b = np.zeros(n)
        for bank in model.shunts:
            shunt_b[model.bus_index(bank.bus)] += bank.n_on * bank.q_step / sb
        for lk in model.hvdc:
            if lk.kind == "LCC" and lk.shunt is not None:
                shunt_b[model.bus_index(lk.bus)] += n_on[lk.id] * lk.shunt.bank.q_step / sb
        y = build_ybus(model, shunt_b)

        s_fixed = p_mach.astype(complex).copy()
        for lk in model.hvdc:
            s_fixed[model.bus_index(lk.bus)] += (lk.p0 + 1j * link_q[lk.id]) / sb

        v, iterations, mism = _newton_power_flow(
            model, y, s_fixed, load_arrays, pv, pq, slack_bus, v_sched,
            v_init=v, tol=tol, max_iter=max_iter)

        # refresh converter reactive power and shunt engagement at solved voltages
        changed = False
        for lk in model.hvdc:
            vq = abs(v[model.bus_index(lk.bus)])
            q_new = hvdc_mod.link_static_q(lk, vq)
            if abs(q_new - link_q[lk.id]) > 1e-7 * sb:
                changed = True
            link_q[lk.id] = q_new
            if auto_shunts and lk.kind == "LCC" and lk.shunt is not None:
                n_new = hvdc_mod.initial_engaged_steps(lk.shunt, -q_new)
                if n_new != n_on[lk.id]:
                    n_on[lk.id] = n_new
                    changed = True
        if not changed:
            break
    if mism > 1e-8:
        raise NonConvergence(f"power flow residual {mism:.3e} pu above tolerance", mismatch=mism)

    vm = np.abs(v)
    va = np.angle(v)
    shunt_b = np.zeros(n)
    for bank in model.shunts:
        shunt_b[model.bus_index(bank.bus)] += bank.n_on * bank.q_step / sb
    for lk in model.hvdc:
        if lk.kind == "LCC" and lk.shunt is not None:
            shunt_b[model.bus_index(lk.bus)] += n_on[lk.id] * lk.shunt.bank.q_step / sb
    y = build_ybus(model, shunt_b)
    s_calc = v * np.conj(y @ v)
    p_l, q_l, _, _ = load_arrays.bus_pq(vm, 0.0)

    # machine outputs by bus: net injection minus HVDC, plus local load
    s_hvdc = np.zeros(n, dtype=complex)
    for lk in model.hvdc:
        s_hvdc[model.bus_index(lk.bus)] += (lk.p0 + 1j * link_q[lk.id]) / sb
    s_mach_bus = s_calc + (p_l + 1j * q_l) - s_hvdc

    machine_p, machine_q = {}, {}
    for bi in machine_buses:
        here = [m for m in model.machines if model.bus_index(m.bus) == bi]
        s_tot = sum(m.s_rated for m in here)
        q_bus = s_mach_bus[bi].imag * sb
        p_bus = s_mach_bus[bi].real * sb
        p_sched = sum(m.p_mech for m in here)
        for m in here:
            machine_q[m.id] = q_bus * m.s_rated / s_tot
            if bi == slack_bus:
                # slack machines share the residual proportionally to rating
                machine_p[m.id] = m.p_mech + (p_bus - p_sched) * m.s_rated / s_tot
            else:
                machine_p[m.id] = m.p_mech

    shunt_q = {}
    for lk in model.hvdc:
        if lk.kind == "LCC" and lk.shunt is not None:
            bi = model.bus_index(lk.bus)
            shunt_q[lk.id] = n_on[lk.id] * lk.shunt.bank.q_step * vm[bi] ** 2
        else:
            shunt_q[lk.id] = 0.0

    load_p, load_q = {}, {}
    for ld in model.loads:
        p, q = zip_load_power(ld, vm[model.bus_index(ld.bus)], 0.0, model.f_n)
        load_p[ld.bus] = load_p.get(ld.bus, 0.0) + p
        load_q[ld.bus] = load_q.get(ld.bus, 0.0) + q

    return PowerFlowSolution(
        v=v, v_mag=vm, v_ang=va,
        machine_p=machine_p, machine_q=machine_q,
        link_p={lk.id: lk.p0 for lk in model.hvdc},
        link_q=dict(link_q), shunt_q=shunt_q, shunt_n_on=dict(n_on),
        load_p=load_p, load_q=load_q,
        p_loss_mw=branch_losses_mw(model, v),
        iterations=iterations, max_mismatch=mism)


class NetworkSolver:
    """Current-balance Newton solver reused at every dynamic time step.

    Devices enter either as constant PQ injections, as Norton sources
    (admittance plus current source), or as per-bus shunt susceptance.
    ZIP loads are always evaluated at the iterated voltages.
    """

    def __init__(self, model: NetworkModel):
        self.model = model
        self.n = model.n_bus
        self.y_base = build_ybus(model)
        self.loads = _LoadArrays(model)

    def solve(self, s_inj_pu, shunt_b=None, norton_y=None, norton_i=None,
              v_init=None, df=0.0, pinned_bus=None, pinned_v=None,
              tol=1e-9, max_iter=40, time_label=None):
        """Solve for complex bus voltages; tol is max power mismatch in pu."""
        n = self.n
        s_const = np.asarray(s_inj_pu, dtype=complex).copy()
        y = self.y_base.copy()
        if shunt_b is not None:
            y[np.diag_indices(n)] += 1j * np.asarray(shunt_b, dtype=float)
        if norton_y is not None:
            y[np.diag_indices(n)] += np.asarray(norton_y, dtype=complex)
        i_src = np.zeros(n, dtype=complex) if norton_i is None else np.asarray(norton_i, dtype=complex)

        v = np.ones(n, dtype=complex) if v_init is None else np.asarray(v_init, dtype=complex).copy()
        if pinned_bus is not None:
            pv = v[pinned_bus] if pinned_v is None else pinned_v
            v[pinned_bus] = pv

        g = y.real
        b = y.imag
        j_lin = np.block([[g, -b], [b, g]])

        for attempt in range(2):
            ok, v_out, mism = self._newton(v, y, j_lin, s_const, i_src, df,
                                           pinned_bus, pinned_v, tol, max_iter)
            if ok:
                return v_out
            v = np.ones(n, dtype=complex)  # flat-start fallback
        raise NonConvergence(
            "network step solve did not converge"
            + (f" at t={time_label:.4f} s" if time_label is not None else "")
            + f" (max power mismatch {mism:.3e} pu)", time=time_label, mismatch=mism)

    def _newton(self, v, y, j_lin, s_const, i_src, df, pinned_bus, pinned_v, tol, max_iter):
        n = self.n
        e = v.real.copy()
        f = v.imag.copy()
        mism = np.inf
        for _ in range(max_iter):
            v = e + 1j * f
            vm = np.abs(v)
            if np.any(vm < 1e-6):
                return False, v, np.inf
            p_l, q_l, dp_l, dq_l = self.loads.bus_pq(vm, df)
            p = s_const.real - p_l
            q = s_const.imag - q_l
            dp = -dp_l
            dq = -dq_l
            v2 = vm * vm
            i_s_r = (p * e + q * f) / v2
            i_s_i = (p * f - q * e) / v2
            ybus_v = y @ v
            res_c = ybus_v - i_src - (i_s_r + 1j * i_s_i)
            s_mis = v * np.conj(res_c)
            if pinned_bus is not None:
                s_mis[pinned_bus] = 0.0
            mism = float(np.max(np.abs(s_mis), initial=0.0))
            pin_err = 0.0
            if pinned_bus is not None and pinned_v is not None:
                pin_err = abs(v[pinned_bus] - pinned_v)
            if mism < tol and pin_err < 1e-12:
                return True, v, mism

            # diagonal 2x2 blocks of the injected-current Jacobian
            de_r = (dp * e * e / vm + p + dq * e * f / vm) / v2 - 2.0 * e * i_s_r / v2
            df_r = (dp * e * f / vm + dq * f * f / vm + q) / v2 - 2.0 * f * i_s_r / v2
            de_i = (dp * e * f / vm - dq * e * e / vm - q) / v2 - 2.0 * e * i_s_i / v2
            df_i = (dp * f * f / vm + p - dq * e * f / vm) / v2 - 2.0 * f * i_s_i / v2

            jac = j_lin.copy()
            idx = np.arange(n)
            jac[idx, idx] -= de_r
            jac[idx, idx + n] -= df_r
            jac[idx + n, idx] -= de_i
            jac[idx + n, idx + n] -= df_i

            rhs = -np.concatenate([res_c.real, res_c.imag])
            if pinned_bus is not None:
                pv = (e[pinned_bus] + 1j * f[pinned_bus]) if pinned_v is None else pinned_v
                for row, val, col in ((pinned_bus, pv.real, pinned_bus),
                                      (pinned_bus + n, pv.imag, pinned_bus + n)):
                    jac[row, :] = 0.0
                    jac[row, col] = 1.0
                    rhs[row] = val - (e[pinned_bus] if row < n else f[pinned_bus])
            try:
                dx = np.linalg.solve(jac, rhs)
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian("singular Jacobian in network step solve") from exc
            e = e + dx[:n]
            f = f + dx[n:]
        return False, e + 1j * f, mism


def network_step_solve(model: NetworkModel, injections, freq_state: float = 0.0, *,
                       v_init=None, shunt_b=None, norton_y=None, norton_i=None,
                       slack_bus: str | None = None, tol: float = 1e-9,
                       solver: NetworkSolver | None = None,
                       time_label: float | None = None) -> np.ndarray:
    """Algebraic network solution for given device injections at one instant.

    injections: per-bus complex array (MW + j*MVAr) or mapping bus id -> (MW, MVAr).
    Without Norton sources, one bus must serve as the phase reference: pass
    slack_bus (defaults to the slack machine's bus) and its voltage is pinned
    at the v_init value there.
    """
    n = model.n_bus
    if isinstance(injections, dict):
        s = np.zeros(n, dtype=complex)
        for bus_id, pq in injections.items():
            s[model.bus_index(bus_id)] += complex(pq[0], pq[1])
    else:
        s = np.asarray(injections, dtype=complex)
    s = s / model.s_base
    if not np.all(np.isfinite(s)):
        raise ValueError("injections must be finite")

    pinned = None
    pinned_v = None
    if norton_y is None and norton_i is None:
        if slack_bus is None:
            slack_bus = model.slack_machine().bus
        pinned = model.bus_index(slack_bus)
        pinned_v = (v_init[pinned] if v_init is not None
                    else complex(model.buses[pinned].v_mag, 0.0))

    if solver is None:
        solver = NetworkSolver(model)
    return solver.solve(s, shunt_b=shunt_b, norton_y=norton_y, norton_i=norton_i,
                        v_init=v_init, df=freq_state, pinned_bus=pinned,
                        pinned_v=pinned_v, tol=tol, time_label=time_label)
