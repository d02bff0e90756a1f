"""LCC and VSC converter boundary models with their reactive side effects.

LCC converters couple reactive consumption to transferred power through the
commutation equations; a per-link switched capacitor automaton compensates
the consumption in steps. VSC converters decouple the powers unless they run
in AC-voltage control, where a limited reactive-current loop reacts to the
terminal voltage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InfeasibleOperatingPoint, ModelFormatError
from .network import ShuntBank

_OVERLAP_FACTOR = 3.0 / math.pi


@dataclass
class LccParams:
    x_c: float = 0.044          # pu commutation reactance, link base
    b: int = 2                  # bridges in series
    v_d0: float = 1.0           # pu no-load direct voltage at 1 pu AC
    xi_min: float = 0.2618      # rad, minimum firing/extinction angle
    p_base: float = 0.0         # MW, per-unit base of the link (filled on load)

    def __post_init__(self):
        if self.x_c <= 0 or self.b < 1:
            raise ModelFormatError("LCC parameters require x_c > 0 and b >= 1")


@dataclass
class VscLimits:
    i_q_max: float = 0.3        # pu reactive current
    i_max: float = 1.0          # pu absolute current
    k_v: float = 8.0            # pu current per pu voltage error
    t_v: float = 0.1            # s

    def __post_init__(self):
        if not 0.0 < self.i_q_max <= self.i_max:
            raise ModelFormatError("VSC limits require 0 < i_q_max <= i_max")


@dataclass
class ShuntAutomaton:
    """Step-switched compensation bank triggered by LCC reactive consumption."""

    bank: ShuntBank
    t_sw: float = 0.5
    q_hi: list[float] = field(default_factory=list)   # MVAr engage threshold per step
    q_lo: list[float] = field(default_factory=list)   # MVAr release threshold per step

    def __post_init__(self):
        n = self.bank.n_steps
        if not self.q_hi:
            self.q_hi = [(k + 1.25) * self.bank.q_step for k in range(n)]
        if not self.q_lo:
            self.q_lo = [h - 0.6 * self.bank.q_step for h in self.q_hi]
        if len(self.q_hi) != n or len(self.q_lo) != n:
            raise ModelFormatError("shunt automaton thresholds must cover every step")
        for hi, lo in zip(self.q_hi, self.q_lo):
            if hi <= lo:
                raise ModelFormatError("shunt automaton needs q_hi > q_lo for every step")
        if any(b > a for a, b in zip(self.q_hi[1:], self.q_hi[:-1])):
            raise ModelFormatError("shunt engage thresholds must be non-decreasing")


@dataclass
class HvdcLink:
    id: str
    bus: str
    kind: str                   # "LCC" | "VSC"
    p_rated: float              # MW
    p0: float                   # MW, signed import(+)/export(-)
    name: str = ""
    acronym: str = ""
    vsc_mode: str | None = None  # "ReactivePower" | "AcVoltage"
    q0: float = 0.0             # MVAr scheduled reactive injection (VSC)
    v_ref: float | None = None  # pu, explicit AC-voltage target (VSC voltage mode)
    lcc: LccParams | None = None
    shunt: ShuntAutomaton | None = None
    vsc: VscLimits | None = None
    epc_enabled: bool = True

    def __post_init__(self):
        if self.kind not in ("LCC", "VSC"):
            raise ModelFormatError(f"link {self.id}: unknown kind {self.kind!r}")
        if abs(self.p0) > self.p_rated + 1e-9:
            raise ModelFormatError(f"link {self.id}: |p0| exceeds rating")
        if self.kind == "LCC":
            if self.lcc is None:
                self.lcc = LccParams()
            if self.lcc.p_base <= 0:
                self.lcc.p_base = self.p_rated
            if self.vsc is not None or self.vsc_mode is not None:
                raise ModelFormatError(f"link {self.id}: VSC records on an LCC link")
        else:
            if self.vsc is None:
                self.vsc = VscLimits()
            if self.vsc_mode not in ("ReactivePower", "AcVoltage"):
                raise ModelFormatError(f"link {self.id}: VSC needs a control mode")
            if self.lcc is not None or self.shunt is not None:
                raise ModelFormatError(f"link {self.id}: LCC records on a VSC link")

    @property
    def mode(self) -> str:
        return "import" if self.p0 >= 0 else "export"

    @property
    def epc_headroom(self) -> float:
        """MW available for supplementary control toward import."""
        return max(self.p_rated - abs(self.p0), 0.0)


def lcc_operating_point(p: float, v_pcc: float, params: LccParams, mode: str):
    """Quasi-stationary LCC solution at minimum converter angle.

    p is the AC-side active power in MW (signed by mode); direct current and
    voltage follow from P = Vd*Id with Vd = Vd0*cos(xi) - (3/pi)*Xc*B*Id, the
    displacement angle from cos(phi) = Vd/Vd0, and Q = P*tan(phi) consumed.

    Returns (q_mvar_injected, phi_rad, i_d_pu, v_d_pu); reactive consumption
    appears as a negative injection.
    """
    if v_pcc <= 0:
        raise ValueError("v_pcc must be > 0")
    if mode not in ("import", "export"):
        raise ValueError(f"unknown LCC mode {mode!r}")
    if mode == "import" and p < -1e-9:
        raise ValueError("import-mode LCC cannot inject negative power")
    if mode == "export" and p > 1e-9:
        raise ValueError("export-mode LCC cannot inject positive power")
    if params.p_base <= 0:
        raise ValueError("LccParams.p_base must be set")

    p_dc = abs(p) / params.p_base
    v_d0_eff = params.v_d0 * v_pcc
    xi = max(params.xi_min, 0.0)
    a = v_d0_eff * math.cos(xi)
    k = _OVERLAP_FACTOR * params.x_c * params.b

    disc = a * a - 4.0 * k * p_dc
    if disc < 0.0:
        raise InfeasibleOperatingPoint(
            f"LCC cannot deliver {abs(p):.1f} MW at v={v_pcc:.3f} pu")
    # stable smaller root of k*I^2 - a*I + P = 0 (k may be arbitrarily small)
    v_d = 0.5 * (a + math.sqrt(disc))
    i_d = p_dc / v_d
    cos_phi = v_d / v_d0_eff
    if cos_phi > 1.0 + 1e-12:
        raise InfeasibleOperatingPoint("commutation overlap drove cos(phi) above 1")
    cos_phi = min(cos_phi, 1.0)
    phi = math.acos(cos_phi)
    q_cons = p_dc * math.tan(phi) * params.p_base
    return -q_cons, phi, i_d, v_d


def lcc_epc_reactive_sign(mode: str) -> int:
    """Sign of the reactive-consumption change for positive supplementary power."""
    if mode == "import":
        return +1
    if mode == "export":
        return -1
    raise ValueError(f"unknown LCC mode {mode!r}")


@dataclass
class ShuntState:
    n_on: int = 0
    q_eng: float = 0.0          # MVAr engaged (lagging n_on * q_step)


def initial_engaged_steps(auto: ShuntAutomaton, q_consumption: float) -> int:
    """Steps engaged for a steady consumption level (no hysteresis history)."""
    return sum(1 for hi in auto.q_hi if q_consumption >= hi)


def shunt_automaton_step(auto: ShuntAutomaton, q_lcc_consumption: float,
                         state: ShuntState, dt: float, v_pcc: float = 1.0):
    """One switching/lag update; returns (n_on, q_shunt_mvar at v_pcc)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n = state.n_on
    if n < auto.bank.n_steps and q_lcc_consumption >= auto.q_hi[n]:
        n += 1
    elif n > 0 and q_lcc_consumption < auto.q_lo[n - 1]:
        n -= 1
    target = n * auto.bank.q_step
    alpha = dt / (2.0 * auto.t_sw)
    q_eng = (state.q_eng * (1.0 - alpha) + alpha * 2.0 * target) / (1.0 + alpha)
    state.n_on = n
    state.q_eng = q_eng
    return n, q_eng * v_pcc * v_pcc


@dataclass
class VscState:
    x: float = 0.0              # reactive-current loop state, pu
    u: float = 0.0              # previous loop input
    i_q_bias: float = 0.0       # pu, scheduled reactive current at the base point
    q_saturated: bool = False
    p_saturated: bool = False


def vsc_outputs(link: HvdcLink, v_pcc: float, v_ref: float, p_order: float,
                state: VscState, dt: float):
    """Converter AC-side powers (MW, MVAr) after one control step.

    Active power tracks p_order inside the absolute current circle (active
    priority); reactive power is either the schedule (ReactivePower mode) or
    a lagged proportional voltage loop, both limited by i_q_max and the
    remaining circle. Limits saturate and set flags, they never raise.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    lim = link.vsc
    base = link.p_rated
    i_p_cmd = (p_order / base) / v_pcc
    i_p = min(max(i_p_cmd, -lim.i_max), lim.i_max)
    state.p_saturated = abs(i_p - i_p_cmd) > 1e-12
    i_q_room = math.sqrt(max(lim.i_max ** 2 - i_p * i_p, 0.0))
    i_q_lim = min(lim.i_q_max, i_q_room)

    if link.vsc_mode == "ReactivePower":
        i_q_cmd = (link.q0 / base) / v_pcc
    else:
        u = lim.k_v * (v_ref - v_pcc)
        alpha = dt / (2.0 * lim.t_v)
        state.x = (state.x * (1.0 - alpha) + alpha * (state.u + u)) / (1.0 + alpha)
        state.u = u
        i_q_cmd = state.i_q_bias + state.x
    i_q = min(max(i_q_cmd, -i_q_lim), i_q_lim)
    state.q_saturated = abs(i_q - i_q_cmd) > 1e-12
    if link.vsc_mode == "AcVoltage":
        # anti-windup: keep the loop state on the delivered current
        state.x = i_q - state.i_q_bias

    p = i_p * v_pcc * base
    q = i_q * v_pcc * base
    return p, q


def link_static_q(link: HvdcLink, v_pcc: float) -> float:
    """Reactive injection (MVAr) at the scheduled operating point and voltage v."""
    if link.kind == "LCC":
        q, _, _, _ = lcc_operating_point(link.p0, v_pcc, link.lcc, link.mode)
        return q
    return link.q0
