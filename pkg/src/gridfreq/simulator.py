"""Fixed-step phasor time-domain simulation of the AC/DC system.

Differential states (rotor angles/speeds, EMF, exciter, governor stages,
converter loops, shunt lags, frequency filters) advance with the trapezoidal
rule; the network is re-solved algebraically inside a per-step corrector
until states and voltages agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .epc import EpcConfig, LITERAL, epc_power
from .errors import InfeasibleOperatingPoint, ModelFormatError, NonConvergence, UnstableSimulation
from .network import NetworkModel, NetworkSolver, branch_losses_mw, solve_power_flow


@dataclass
class Disturbance:
    machine: str
    t_trip: float
    p_lost: float = 0.0        # MW, descriptive
    q_lost: float = 0.0        # MVAr, descriptive
    ek_lost: float = 0.0       # GWs, descriptive


@dataclass
class Scenario:
    label: str
    duration: float
    disturbance: Disturbance | None = None
    zone: str = ""

    def __post_init__(self):
        if self.disturbance is not None:
            if not 0.0 <= self.disturbance.t_trip <= self.duration:
                raise ModelFormatError("trip time must lie within the scenario duration")


@dataclass
class SimulationConfig:
    dt: float = 0.01
    record_every: int = 1
    network_tol: float = 1e-9          # pu power mismatch
    corrector_tol: float = 1e-9
    max_corrector_iter: int = 40
    freq_filter_t: float = 0.1         # s, local frequency low-pass
    divergence_hz: float = 5.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ModelFormatError("dt must be > 0")


@dataclass
class SimulationTrace:
    t: np.ndarray                      # s
    f_coi: np.ndarray                  # Hz deviation
    f_machine: np.ndarray              # (steps, n_mach) Hz deviation, NaN when offline
    v_mag: np.ndarray                  # (steps, n_bus) pu
    link_p: np.ndarray                 # (steps, n_link) MW injected
    link_q: np.ndarray                 # (steps, n_link) MVAr injected by the converter
    link_q_shunt: np.ndarray           # (steps, n_link) MVAr injected by switched banks
    link_dp_epc: np.ndarray            # (steps, n_link) MW supplementary power
    link_sat: np.ndarray               # (steps, n_link) bool, reactive limit active
    load_p: np.ndarray                 # (steps, n_load) MW
    load_q: np.ndarray                 # (steps, n_load) MVAr
    p_load_total: np.ndarray           # MW
    p_loss_total: np.ndarray           # MW
    balance_residual: np.ndarray       # pu
    bus_ids: list
    machine_ids: list
    link_ids: list
    load_buses: list
    dt: float
    t_trip: float
    f_n: float
    s_base: float
    label: str = ""
    zone: str = ""
    epc_gains: dict = field(default_factory=dict)   # link id -> MW/Hz
    tripped_machine: str | None = None
    p_lost_measured: float = 0.0       # MW output of the unit just before the trip
    ek_lost_measured: float = 0.0      # GWs removed at the trip

    def column_names(self):
        cols = ["t_s", "f_coi_hz"]
        cols += [f"f_{m}_hz" for m in self.machine_ids]
        cols += [f"v_{b}_pu" for b in self.bus_ids]
        for lid in self.link_ids:
            cols += [f"p_{lid}_mw", f"q_{lid}_mvar", f"qsh_{lid}_mvar",
                     f"dpepc_{lid}_mw", f"qsat_{lid}"]
        cols += [f"pload_{i}_{b}_mw" for i, b in enumerate(self.load_buses)]
        cols += [f"qload_{i}_{b}_mvar" for i, b in enumerate(self.load_buses)]
        cols += ["p_load_total_mw", "p_loss_total_mw", "balance_residual_pu"]
        return cols

    def as_matrix(self) -> np.ndarray:
        blocks = [self.t[:, None], self.f_coi[:, None], self.f_machine, self.v_mag]
        for j in range(len(self.link_ids)):
            blocks += [self.link_p[:, j:j + 1], self.link_q[:, j:j + 1],
                       self.link_q_shunt[:, j:j + 1], self.link_dp_epc[:, j:j + 1],
                       self.link_sat[:, j:j + 1].astype(float)]
        blocks += [self.load_p, self.load_q, self.p_load_total[:, None],
                   self.p_loss_total[:, None], self.balance_residual[:, None]]
        return np.hstack(blocks)

    def to_csv(self, path):
        header = ",".join(self.column_names())
        np.savetxt(path, self.as_matrix(), delimiter=",", header=header, comments="")

    def link_column(self, link_id: str) -> int:
        return self.link_ids.index(link_id)


def coi_frequency(f_hz, h, s_rated, online=None):
    """Inertia-weighted mean frequency sum(h*s*f)/sum(h*s) over online machines."""
    f = np.asarray(f_hz, dtype=float)
    w = np.asarray(h, dtype=float) * np.asarray(s_rated, dtype=float)
    if online is not None:
        w = np.where(np.asarray(online, dtype=bool), w, 0.0)
    if w.sum() <= 0:
        raise ValueError("COI frequency needs at least one online machine")
    return float(np.dot(w, f) / w.sum())


def _trap(x, u_old, u_new, t_const, dt):
    a = dt / (2.0 * t_const)
    return (x * (1.0 - a) + a * (u_old + u_new)) / (1.0 + a)


class Simulator:
    """One scenario run over an immutable model; owns all mutable state."""

    def __init__(self, model: NetworkModel, config: SimulationConfig | None = None):
        self.model = model
        self.cfg = config or SimulationConfig()
        self.solver = NetworkSolver(model)
        self._build_arrays()

    # ------------------------------------------------------------------ setup

    def _build_arrays(self):
        model = self.model
        sb = model.s_base
        mach = model.machines
        self.n_m = len(mach)
        self.mbus = np.array([model.bus_index(m.bus) for m in mach], dtype=int)
        self.ms = np.array([m.s_rated for m in mach])
        self.mh = np.array([m.h for m in mach])
        self.md = np.array([m.d for m in mach])
        self.m_te = np.array([m.t_e for m in mach])
        xd_sys = np.array([m.xd_p * sb / m.s_rated for m in mach])
        self.m_ym = 1.0 / (1j * xd_sys)
        self.a_ka = np.array([m.avr.k_a for m in mach])
        self.a_ta = np.array([m.avr.t_a for m in mach])
        self.a_emin = np.array([m.avr.efd_min for m in mach])
        self.a_emax = np.array([m.avr.efd_max for m in mach])

        def gov_attr(name, default):
            return np.array([getattr(m.governor, name) if m.governor else default for m in mach])

        self.g_droop = gov_attr("droop_mw_per_hz", 0.0)
        self.g_tg = gov_attr("t_g", 1.0)
        self.g_tw = gov_attr("t_w", 1.0)
        self.g_tr = gov_attr("t_r", 1.0)
        self.g_rt = gov_attr("rt_ratio", 1.0)
        self.g_kappa = gov_attr("kappa", 0.3)
        self.g_pmin = gov_attr("p_min", -math.inf)
        self.g_pmax = gov_attr("p_max", math.inf)
        self.g_rate = gov_attr("rate_limit", math.inf)
        self.hyd = np.array([bool(m.governor and m.governor.kind == "hydro") for m in mach])

        links = model.hvdc
        self.n_l = len(links)
        self.lbus = np.array([model.bus_index(lk.bus) for lk in links], dtype=int)
        self.l_is_lcc = np.array([lk.kind == "LCC" for lk in links])
        self.l_import = np.array([lk.mode == "import" for lk in links])
        self.l_prated = np.array([lk.p_rated for lk in links])
        self.l_p0 = np.array([lk.p0 for lk in links])
        self.l_q0 = np.array([lk.q0 for lk in links])
        self.l_k = np.array([(3.0 / math.pi) * lk.lcc.x_c * lk.lcc.b if lk.kind == "LCC" else 1.0
                             for lk in links])
        self.l_vd0 = np.array([lk.lcc.v_d0 if lk.kind == "LCC" else 1.0 for lk in links])
        self.l_cosxi = np.array([math.cos(lk.lcc.xi_min) if lk.kind == "LCC" else 1.0 for lk in links])
        self.l_pbase = np.array([lk.lcc.p_base if lk.kind == "LCC" else lk.p_rated for lk in links])
        self.l_voltage_mode = np.array([lk.kind == "VSC" and lk.vsc_mode == "AcVoltage" for lk in links])
        self.l_iqmax = np.array([lk.vsc.i_q_max if lk.kind == "VSC" else 0.0 for lk in links])
        self.l_imax = np.array([lk.vsc.i_max if lk.kind == "VSC" else 0.0 for lk in links])
        self.l_kv = np.array([lk.vsc.k_v if lk.kind == "VSC" else 1.0 for lk in links])
        self.l_tv = np.array([lk.vsc.t_v if lk.kind == "VSC" else 1.0 for lk in links])

        self.loads = self.solver.loads
        self.n_bus = model.n_bus
        # static capacitor banks outside the converter automata
        self.b_static = np.zeros(self.n_bus)
        for bank in model.shunts:
            self.b_static[model.bus_index(bank.bus)] += bank.n_on * bank.q_step / sb

        br = model.branches
        self.br_f = np.array([model.bus_index(b.from_bus) for b in br], dtype=int)
        self.br_t = np.array([model.bus_index(b.to_bus) for b in br], dtype=int)
        self.br_y = np.array([1.0 / complex(b.r, b.x) for b in br])
        self.br_r = np.array([b.r for b in br])
        self.br_tap = np.array([b.tap if b.tap else 1.0 for b in br])

    def _losses_mw(self, v):
        i_series = (v[self.br_f] / self.br_tap - v[self.br_t]) * self.br_y
        return float(np.sum(np.abs(i_series) ** 2 * self.br_r) * self.model.s_base)

    # ------------------------------------------------------------- initial state

    def initialize(self, epc_map: dict[str, EpcConfig]):
        model = self.model
        sb = model.s_base
        pf = solve_power_flow(model)
        self.pf = pf
        self.v = pf.v.copy()

        s_m = np.array([complex(pf.machine_p[m.id], pf.machine_q[m.id]) / sb
                        for m in model.machines])
        v_m = self.v[self.mbus]
        i_m = np.conj(s_m / v_m)
        e_src = v_m + i_m / self.m_ym
        self.delta = np.angle(e_src)
        self.eqp = np.abs(e_src)
        self.domega = np.zeros(self.n_m)
        self.online = np.ones(self.n_m, dtype=bool)
        self.p_sched = np.array([pf.machine_p[m.id] for m in model.machines])
        self.pe = self.p_sched.copy()
        self.acc = np.zeros(self.n_m)

        self.efd = self.eqp.copy()
        if np.any(self.efd > self.a_emax) or np.any(self.efd < self.a_emin):
            raise ModelFormatError("initial excitation outside AVR limits; widen efd bounds")
        self.avr_x = self.efd.copy()
        self.avr_u = self.efd.copy()
        vm0 = np.abs(self.v)
        self.v_ref_m = vm0[self.mbus] + self.efd / self.a_ka

        self.gx1 = np.zeros(self.n_m)
        self.gx2 = np.zeros(self.n_m)
        self.gx3 = np.zeros(self.n_m)
        self.gu1 = np.zeros(self.n_m)
        self.gu2 = np.zeros(self.n_m)
        self.gu3 = np.zeros(self.n_m)
        self.gy = np.zeros(self.n_m)

        self.lq = np.array([pf.link_q[lk.id] for lk in model.hvdc])
        self.l_cons = np.where(self.l_is_lcc, -self.lq, 0.0)
        self.sh_non = np.array([pf.shunt_n_on[lk.id] for lk in model.hvdc], dtype=int)
        self.sh_qeng = self.sh_non * np.array(
            [lk.shunt.bank.q_step if (lk.kind == "LCC" and lk.shunt) else 0.0 for lk in model.hvdc])
        self.sh_auto = [lk.shunt for lk in model.hvdc]

        self.v_bias = np.where(self.l_prated > 0, (self.l_q0 / self.l_prated) / np.abs(self.v[self.lbus]), 0.0)
        self.v_x = np.zeros(self.n_l)
        self.v_u = np.zeros(self.n_l)
        self.l_vref = np.array([lk.v_ref if lk.v_ref is not None else abs(self.v[model.bus_index(lk.bus)])
                                for lk in model.hvdc])
        # explicit reference targets leave the loop with a standing error
        self.v_u = self.l_kv * (self.l_vref - np.abs(self.v[self.lbus]))
        self.v_x = self.v_u.copy()
        self.sat_q = np.zeros(self.n_l, dtype=bool)
        self.lp = self.l_p0.copy()
        self.l_dp = np.zeros(self.n_l)
        self.latched = np.zeros(self.n_l, dtype=bool)

        self.epc_g = np.zeros(self.n_l)
        self.epc_cfg = [None] * self.n_l
        for i, lk in enumerate(model.hvdc):
            cfg = epc_map.get(lk.id)
            if cfg is not None:
                self.epc_cfg[i] = cfg
                self.epc_g[i] = cfg.g_prime

        self.th_prev = np.angle(self.v)
        self.dth_prev = np.zeros(self.n_bus)
        self.f_filt = np.zeros(self.n_bus)

    # --------------------------------------------------------------- device laws

    def _lcc_q(self, p_order, vm_l):
        """Vectorized LCC consumption; returns (q_inj, cons) in MVAr."""
        q = np.zeros(self.n_l)
        if not np.any(self.l_is_lcc):
            return q, np.zeros(self.n_l)
        m = self.l_is_lcc
        p_dc = np.abs(p_order[m]) / self.l_pbase[m]
        a = self.l_vd0[m] * vm_l[m] * self.l_cosxi[m]
        k = self.l_k[m]
        disc = a * a - 4.0 * k * p_dc
        if np.any(disc < 0):
            bad = np.array(self.model.hvdc)[m][disc < 0][0].id
            raise InfeasibleOperatingPoint(f"LCC {bad} cannot commutate its ordered power")
        v_d = 0.5 * (a + np.sqrt(disc))     # stable smaller-current root
        cos_phi = np.minimum(v_d / (self.l_vd0[m] * vm_l[m]), 1.0)
        tan_phi = np.sqrt(np.maximum(1.0 - cos_phi ** 2, 0.0)) / cos_phi
        cons = p_dc * tan_phi * self.l_pbase[m]
        q[m] = -cons
        cons_full = np.zeros(self.n_l)
        cons_full[m] = cons
        return q, cons_full

    def _vsc_pq(self, p_order, vm_l, dt):
        """Vectorized VSC limits/loop; returns (p, q, x_new, u_new, sat)."""
        vsc = ~self.l_is_lcc
        p = p_order.copy()
        q = np.zeros(self.n_l)
        x_new = self.v_x.copy()
        u_new = self.v_u.copy()
        sat = np.zeros(self.n_l, dtype=bool)
        if not np.any(vsc):
            return p, q, x_new, u_new, sat
        base = self.l_prated[vsc]
        v = vm_l[vsc]
        i_p_cmd = (p_order[vsc] / base) / v
        i_max = self.l_imax[vsc]
        i_p = np.clip(i_p_cmd, -i_max, i_max)
        room = np.sqrt(np.maximum(i_max ** 2 - i_p ** 2, 0.0))
        i_q_lim = np.minimum(self.l_iqmax[vsc], room)

        volt = self.l_voltage_mode[vsc]
        u = self.l_kv[vsc] * (self.l_vref[vsc] - v)
        alpha = dt / (2.0 * self.l_tv[vsc])
        x = (self.v_x[vsc] * (1.0 - alpha) + alpha * (self.v_u[vsc] + u)) / (1.0 + alpha)
        i_q_cmd = np.where(volt, self.v_bias[vsc] + x, (self.l_q0[vsc] / base) / v)
        i_q = np.clip(i_q_cmd, -i_q_lim, i_q_lim)
        sat_v = np.abs(i_q - i_q_cmd) > 1e-12
        x = np.where(volt, i_q - self.v_bias[vsc], x)   # anti-windup on the loop state

        p[vsc] = i_p * v * base
        q[vsc] = i_q * v * base
        x_new[vsc] = x
        u_new[vsc] = u
        sat[vsc] = sat_v
        return p, q, x_new, u_new, sat

    def _governor(self, df_new):
        """Candidate governor stage values for machine deviations df_new (Hz)."""
        u = -df_new
        dt = self.cfg.dt
        x1 = _trap(self.gx1, self.gu1, u, self.g_rt * self.g_tr, dt)
        y1h = u / self.g_rt + (1.0 - 1.0 / self.g_rt) * x1
        y1 = np.where(self.hyd, y1h, u)
        x2 = _trap(self.gx2, self.gu2, y1, self.g_tg, dt)
        y2 = x2
        t3 = np.where(self.hyd, 0.5 * self.g_tw, self.g_tw)
        x3 = _trap(self.gx3, self.gu3, y2, t3, dt)
        y3 = np.where(self.hyd, -2.0 * y2 + 3.0 * x3, self.g_kappa * y2 + (1.0 - self.g_kappa) * x3)
        p = np.clip(self.g_droop * y3, self.g_pmin, self.g_pmax)
        dmax = self.g_rate * dt
        p = np.clip(p, self.gy - dmax, self.gy + dmax)
        return x1, x2, x3, y1, y2, p

    # ------------------------------------------------------------------- stepping

    def _solve_network(self, s_links_pu, b_shunt, e_mag, delta, v_init, df, t_label):
        n = self.n_bus
        s_const = np.zeros(n, dtype=complex)
        np.add.at(s_const, self.lbus, s_links_pu)
        y_n = np.zeros(n, dtype=complex)
        i_n = np.zeros(n, dtype=complex)
        on = self.online
        np.add.at(y_n, self.mbus[on], self.m_ym[on])
        np.add.at(i_n, self.mbus[on], self.m_ym[on] * e_mag[on] * np.exp(1j * delta[on]))
        return self.solver.solve(s_const, shunt_b=b_shunt, norton_y=y_n, norton_i=i_n,
                                 v_init=v_init, df=df, tol=self.cfg.network_tol,
                                 max_iter=60, time_label=t_label)

    def _machine_pe(self, v, e_mag, delta):
        vm_bus = v[self.mbus]
        e = e_mag * np.exp(1j * delta)
        s = vm_bus * np.conj(self.m_ym * (e - vm_bus)) * self.model.s_base
        return s.real

    def _apply_trip(self, mach_id, t_label):
        idx = [m.id for m in self.model.machines].index(mach_id)
        if not self.online[idx]:
            return
        p_before = self.pe[idx]
        self.online[idx] = False
        # re-solve the algebraic state at the switching instant
        b_shunt = self._shunt_b()
        s_links = (self.lp + 1j * self.lq) / self.model.s_base
        f_coi = self._f_coi()
        self.v = self._solve_network(s_links, b_shunt, self.eqp, self.delta, self.v, f_coi, t_label)
        self.pe = self._machine_pe(self.v, self.eqp, self.delta)
        pm = self.p_sched + self.gy
        self.acc = self._acc(pm, self.pe)
        # the angle step at switching is not a frequency excursion
        self.th_prev = np.angle(self.v)
        self._trip_info = (mach_id, p_before, self.mh[idx] * self.ms[idx] / 1000.0)

    def _acc(self, pm, pe):
        acc = (pm - pe - self.md * self.ms * self.domega) / (2.0 * self.mh * self.ms)
        return np.where(self.online, acc, 0.0)

    def _f_coi(self):
        w = np.where(self.online, self.mh * self.ms, 0.0)
        return float(np.dot(w, self.domega) * self.model.f_n / w.sum())

    def _shunt_b(self):
        b = self.b_static.copy()
        sb = self.model.s_base
        np.add.at(b, self.lbus, self.sh_qeng / sb)
        return b

    def _epc_dp(self, f_link):
        dp = np.zeros(self.n_l)
        for i, cfg in enumerate(self.epc_cfg):
            if cfg is None or cfg.g_prime == 0.0:
                continue
            dp[i] = epc_power(f_link[i], cfg, latched=bool(self.latched[i]))
        return dp

    def run(self, scenario: Scenario, epc_map: dict[str, EpcConfig] | None = None) -> SimulationTrace:
        cfg = self.cfg
        dt = cfg.dt
        self.initialize(epc_map or {})
        self._trip_info = None

        n_steps = int(round(scenario.duration / dt))
        k_trip = None
        if scenario.disturbance is not None:
            k_trip = int(round(scenario.disturbance.t_trip / dt))

        rec_idx = list(range(0, n_steps + 1, cfg.record_every))
        if rec_idx[-1] != n_steps:
            rec_idx.append(n_steps)
        n_rec = len(rec_idx)
        rec_pos = {k: i for i, k in enumerate(rec_idx)}

        tr_t = np.zeros(n_rec)
        tr_fcoi = np.zeros(n_rec)
        tr_fm = np.full((n_rec, self.n_m), np.nan)
        tr_v = np.zeros((n_rec, self.n_bus))
        tr_lp = np.zeros((n_rec, self.n_l))
        tr_lq = np.zeros((n_rec, self.n_l))
        tr_lqs = np.zeros((n_rec, self.n_l))
        tr_dp = np.zeros((n_rec, self.n_l))
        tr_sat = np.zeros((n_rec, self.n_l), dtype=bool)
        tr_loadp = np.zeros((n_rec, len(self.model.loads)))
        tr_loadq = np.zeros((n_rec, len(self.model.loads)))
        tr_ploadtot = np.zeros(n_rec)
        tr_ploss = np.zeros(n_rec)
        tr_bal = np.zeros(n_rec)

        def record(k):
            i = rec_pos.get(k)
            if i is None:
                return
            f_coi = self._f_coi()
            tr_t[i] = k * dt
            tr_fcoi[i] = f_coi
            fm = self.domega * self.model.f_n
            tr_fm[i, :] = np.where(self.online, fm, np.nan)
            vm = np.abs(self.v)
            tr_v[i, :] = vm
            tr_lp[i, :] = self.lp
            tr_lq[i, :] = self.lq
            tr_lqs[i, :] = self.sh_qeng * vm[self.lbus] ** 2
            tr_dp[i, :] = self.l_dp
            tr_sat[i, :] = self.sat_q
            p_l, q_l, _, _ = self.loads.bus_pq(vm, f_coi)
            vload = vm[self.loads.bus]
            w = vload / self.loads.v0
            fterm = 1.0 + self.loads.kpf * f_coi / self.model.f_n
            pl = self.loads.p0 * (self.loads.zp * w * w + self.loads.ip * w + self.loads.pp) * fterm
            ql = self.loads.q0 * (self.loads.zq * w * w + self.loads.iq * w + self.loads.pq)
            sb = self.model.s_base
            tr_loadp[i, :] = pl * sb
            tr_loadq[i, :] = ql * sb
            tr_ploadtot[i] = float(np.sum(pl)) * sb
            loss = self._losses_mw(self.v)
            tr_ploss[i] = loss
            gen = float(np.sum(self.pe[self.online]))
            tr_bal[i] = (gen + float(np.sum(self.lp)) - tr_ploadtot[i] - loss) / sb

        record(0)

        sb_mvar = np.array([a.bank.q_step if a else 0.0 for a in self.sh_auto])
        tsw = np.array([a.t_sw if a else 1.0 for a in self.sh_auto])

        for k in range(n_steps):
            t_next = (k + 1) * dt
            if k_trip is not None and k == k_trip:
                # the recorded row at the trip instant keeps the pre-trip state
                self._apply_trip(scenario.disturbance.machine, k * dt)

            # switched-bank decisions from the last converged consumption
            for j, auto in enumerate(self.sh_auto):
                if auto is None:
                    continue
                n_on = self.sh_non[j]
                cons = self.l_cons[j]
                if n_on < auto.bank.n_steps and cons >= auto.q_hi[n_on]:
                    n_on += 1
                elif n_on > 0 and cons < auto.q_lo[n_on - 1]:
                    n_on -= 1
                self.sh_non[j] = n_on
            target = self.sh_non * sb_mvar
            alpha = dt / (2.0 * tsw)
            self.sh_qeng = (self.sh_qeng * (1.0 - alpha) + alpha * 2.0 * target) / (1.0 + alpha)
            b_shunt = self._shunt_b()

            v_k = self.v.copy()
            domega_k = self.domega.copy()
            delta_k = self.delta.copy()
            eqp_k = self.eqp.copy()
            gy_k = self.gy.copy()

            converged = False
            for _it in range(cfg.max_corrector_iter):
                th_k = np.angle(v_k)
                dth = np.angle(v_k * np.conj(self.v)) / dt / (2.0 * math.pi)
                f_filt_k = _trap(self.f_filt, self.dth_prev, dth, cfg.freq_filter_t, dt)

                df_m = domega_k * self.model.f_n
                gx1, gx2, gx3, y1, y2, gy_new = self._governor(df_m)
                gy_new = np.where(self.online, gy_new, self.gy)

                vm_k = np.abs(v_k)
                u_avr = self.a_ka * (self.v_ref_m - vm_k[self.mbus])
                avr_x = _trap(self.avr_x, self.avr_u, u_avr, self.a_ta, dt)
                avr_x = np.clip(avr_x, self.a_emin, self.a_emax)
                eqp_new = _trap(self.eqp, self.avr_x, avr_x, self.m_te, dt)

                pe_k = self._machine_pe(v_k, eqp_k, delta_k)
                pm_k = self.p_sched + gy_new
                acc_k = self._acc(pm_k, pe_k)
                domega_new = np.where(self.online, self.domega + 0.5 * dt * (self.acc + acc_k), self.domega)
                delta_new = np.where(self.online,
                                     self.delta + 0.5 * dt * 2.0 * math.pi * self.model.f_n
                                     * (self.domega + domega_new), self.delta)

                f_link = f_filt_k[self.lbus]
                dp = self._epc_dp(f_link)
                p_order = self.l_p0 + dp
                vm_l = vm_k[self.lbus]
                q_lcc, cons = self._lcc_q(p_order, vm_l)
                p_out, q_vsc, v_x_new, v_u_new, sat = self._vsc_pq(p_order, vm_l, dt)
                p_out = np.where(self.l_is_lcc, p_order, p_out)
                q_out = np.where(self.l_is_lcc, q_lcc, q_vsc)

                f_coi_k = float(np.dot(np.where(self.online, self.mh * self.ms, 0.0), domega_new)
                                * self.model.f_n / np.sum(np.where(self.online, self.mh * self.ms, 0.0)))
                s_links = (p_out + 1j * q_out) / self.model.s_base
                v_new = self._solve_network(s_links, b_shunt, eqp_new, delta_new, v_k, f_coi_k, t_next)

                dv = float(np.max(np.abs(v_new - v_k), initial=0.0))
                dstate = max(float(np.max(np.abs(domega_new - domega_k), initial=0.0)) * 50.0,
                             float(np.max(np.abs(delta_new - delta_k), initial=0.0)),
                             float(np.max(np.abs(eqp_new - eqp_k), initial=0.0)),
                             float(np.max(np.abs(gy_new - gy_k), initial=0.0)) / self.model.s_base)
                v_k = v_new
                domega_k, delta_k, eqp_k, gy_k = domega_new, delta_new, eqp_new, gy_new.copy()
                if dv < cfg.corrector_tol and dstate < cfg.corrector_tol:
                    converged = True
                    break
            if not converged:
                raise NonConvergence(f"corrector stalled at t={t_next:.4f} s", time=t_next)

            # commit step
            self.v = v_k
            self.domega = domega_k
            self.delta = delta_k
            self.eqp = eqp_new
            self.avr_x = avr_x
            self.avr_u = u_avr
            self.gx1, self.gx2, self.gx3 = gx1, gx2, gx3
            self.gu1, self.gu2, self.gu3 = -df_m, y1, y2
            self.gy = gy_new
            self.v_x = v_x_new
            self.v_u = v_u_new
            self.sat_q = sat
            self.lp = p_out
            self.lq = q_out
            self.l_cons = cons
            self.l_dp = dp
            if np.any(self.epc_g > 0):
                for i, c in enumerate(self.epc_cfg):
                    if c is not None and c.law == LITERAL and f_link[i] <= c.f_activ:
                        self.latched[i] = True
            self.pe = self._machine_pe(self.v, self.eqp, self.delta)
            self.acc = self._acc(self.p_sched + self.gy, self.pe)
            self.f_filt = f_filt_k
            self.dth_prev = dth
            self.th_prev = np.angle(self.v)

            f_coi = self._f_coi()
            if abs(f_coi) > cfg.divergence_hz:
                raise UnstableSimulation(f"frequency deviation {f_coi:.2f} Hz at t={t_next:.2f} s")
            record(k + 1)

        trip = scenario.disturbance
        trace = SimulationTrace(
            t=tr_t, f_coi=tr_fcoi, f_machine=tr_fm, v_mag=tr_v,
            link_p=tr_lp, link_q=tr_lq, link_q_shunt=tr_lqs, link_dp_epc=tr_dp,
            link_sat=tr_sat, load_p=tr_loadp, load_q=tr_loadq,
            p_load_total=tr_ploadtot, p_loss_total=tr_ploss, balance_residual=tr_bal,
            bus_ids=[b.id for b in self.model.buses],
            machine_ids=[m.id for m in self.model.machines],
            link_ids=[lk.id for lk in self.model.hvdc],
            load_buses=[ld.bus for ld in self.model.loads],
            dt=dt * cfg.record_every, t_trip=(trip.t_trip if trip else 0.0),
            f_n=self.model.f_n, s_base=self.model.s_base,
            label=scenario.label, zone=scenario.zone,
            epc_gains={lk.id: self.epc_g[i] for i, lk in enumerate(self.model.hvdc)
                       if self.epc_g[i] > 0},
            tripped_machine=(trip.machine if trip else None),
            p_lost_measured=(self._trip_info[1] if self._trip_info else 0.0),
            ek_lost_measured=(self._trip_info[2] if self._trip_info else 0.0),
        )
        return trace


def build_epc_config(model: NetworkModel, link_id: str, g_prime: float,
                     f_activ: float | None = None, law: str | None = None) -> EpcConfig:
    """EpcConfig for one link using the model's defaults and headroom."""
    link = model.link(link_id)
    defaults = getattr(model, "epc_defaults", {}) or {}
    return EpcConfig(
        link=link_id, g_prime=g_prime,
        f_activ=f_activ if f_activ is not None else defaults.get("f_activ", -0.4),
        p_headroom=link.epc_headroom,
        law=law if law is not None else defaults.get("law", "threshold_referenced"))


def run_simulation(model: NetworkModel, scenario: Scenario,
                   epc_assignments: dict[str, float | EpcConfig] | None = None,
                   config: SimulationConfig | None = None) -> SimulationTrace:
    """Simulate one scenario; epc_assignments maps link ids to MW/Hz gains
    (or full EpcConfig records)."""
    epc_map = {}
    for link_id, val in (epc_assignments or {}).items():
        if isinstance(val, EpcConfig):
            epc_map[link_id] = val
        else:
            epc_map[link_id] = build_epc_config(model, link_id, float(val))
    sim = Simulator(model, config)
    return sim.run(scenario, epc_map)
