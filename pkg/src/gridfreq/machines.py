"""Synchronous machine swing dynamics, governor response, and excitation."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

from .errors import ModelFormatError


@dataclass
class GovernorParams:
    """Proportional frequency controller with plant dynamics.

    Hydro units: transient-droop compensation (reset time t_r, temporary/permanent
    droop ratio rt_ratio), gate servo t_g and water time constant t_w.
    Thermal units: servo t_g and reheat stage t_w with high-pressure fraction kappa.
    Steady state for a held deviation df is always -droop_mw_per_hz * df.
    """

    kind: str = "hydro"
    droop_mw_per_hz: float = 0.0
    t_g: float = 0.2
    t_w: float = 1.0
    t_r: float = 5.0
    rt_ratio: float = 6.0
    kappa: float = 0.3
    p_min: float = -math.inf
    p_max: float = math.inf
    rate_limit: float = math.inf   # MW/s on the delivered output

    def __post_init__(self):
        if self.kind not in ("hydro", "thermal"):
            raise ModelFormatError(f"unknown governor kind {self.kind!r}")
        if self.droop_mw_per_hz < 0:
            raise ModelFormatError("governor droop must be >= 0")
        if min(self.t_g, self.t_w) <= 0 or (self.kind == "hydro" and self.t_r <= 0):
            raise ModelFormatError("governor time constants must be > 0")


@dataclass
class AvrParams:
    k_a: float = 70.0
    t_a: float = 0.5
    efd_min: float = -4.0
    efd_max: float = 4.0

    def __post_init__(self):
        if self.t_a <= 0:
            raise ModelFormatError("AVR time constant must be > 0")


@dataclass
class SynchronousMachine:
    id: str
    bus: str
    s_rated: float            # MVA
    h: float                  # s, on machine base
    d: float = 0.0            # pu damping on machine base
    p_mech: float = 0.0       # MW scheduled
    v_set: float = 1.0        # pu voltage target (power flow / AVR reference)
    xd_p: float = 0.3         # pu transient reactance on machine base
    t_e: float = 5.0          # s, EMF tracking lag behind the exciter
    is_fcr: bool = False
    is_slack: bool = False
    governor: GovernorParams | None = None
    avr: AvrParams = field(default_factory=AvrParams)

    def __post_init__(self):
        if self.h <= 0 or self.s_rated <= 0:
            raise ModelFormatError(f"machine {self.id}: h and s_rated must be > 0")
        if self.is_fcr and self.governor is None:
            raise ModelFormatError(f"machine {self.id}: FCR unit needs governor parameters")


def swing_derivatives(machine: SynchronousMachine, p_elec: float, p_mech: float,
                      domega: float = 0.0, f_n: float = 50.0):
    """Rotor angle and speed derivatives; powers in MW, domega in pu.

    Returns (ddelta/dt in rad/s, ddomega/dt in pu/s).
    """
    acc = (p_mech - p_elec - machine.d * machine.s_rated * domega) / (2.0 * machine.h * machine.s_rated)
    return 2.0 * math.pi * f_n * domega, acc


def system_kinetic_energy(machines, online=None) -> float:
    """Total stored kinetic energy sum(h_i * s_rated_i) in GWs."""
    if hasattr(machines, "machines"):
        machines = machines.machines
    total = 0.0
    for i, m in enumerate(machines):
        if online is not None and not online[i]:
            continue
        total += m.h * m.s_rated
    return total / 1000.0


def _trap_lag(x: float, u_old: float, u_new: float, t_const: float, dt: float) -> float:
    """Trapezoidal update of x' = (u - x)/t_const."""
    a = dt / (2.0 * t_const)
    return (x * (1.0 - a) + a * (u_old + u_new)) / (1.0 + a)


@dataclass
class GovernorState:
    x1: float = 0.0   # transient-droop compensation state (hydro)
    x2: float = 0.0   # servo state
    x3: float = 0.0   # water column / reheat state
    u1: float = 0.0   # previous stage inputs for the trapezoidal rule
    u2: float = 0.0
    u3: float = 0.0
    y: float = 0.0    # delivered output, MW


def governor_step(gov: GovernorParams, df_local: float, state: GovernorState, dt: float) -> float:
    """Advance the governor one step for measured deviation df_local (Hz); returns MW."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u = -df_local
    if gov.kind == "hydro":
        x1 = _trap_lag(state.x1, state.u1, u, gov.rt_ratio * gov.t_r, dt)
        y1 = u / gov.rt_ratio + (1.0 - 1.0 / gov.rt_ratio) * x1
        y1_old = state.u2
        x2 = _trap_lag(state.x2, y1_old, y1, gov.t_g, dt)
        y2 = x2
        y2_old = state.u3
        x3 = _trap_lag(state.x3, y2_old, y2, 0.5 * gov.t_w, dt)
        y3 = -2.0 * y2 + 3.0 * x3
        state.x1, state.x2, state.x3 = x1, x2, x3
        state.u1, state.u2, state.u3 = u, y1, y2
    else:
        x2 = _trap_lag(state.x2, state.u2, u, gov.t_g, dt)
        y2 = x2
        y2_old = state.u3
        x3 = _trap_lag(state.x3, y2_old, y2, gov.t_w, dt)
        y3 = gov.kappa * y2 + (1.0 - gov.kappa) * x3
        state.x2, state.x3 = x2, x3
        state.u2, state.u3 = u, y2
    p = gov.droop_mw_per_hz * y3
    p = min(max(p, gov.p_min), gov.p_max)
    if math.isfinite(gov.rate_limit):
        dmax = gov.rate_limit * dt
        p = min(max(p, state.y - dmax), state.y + dmax)
    state.y = p
    return p


@dataclass
class AvrState:
    x: float = 0.0        # exciter output state (clamped, anti-windup)
    u: float = 0.0        # previous gain-scaled error


def avr_step(avr: AvrParams, v_error: float, state: AvrState, dt: float) -> float:
    """First-order lag k_a/(1 + s t_a) with clamped, non-winding output."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u = avr.k_a * v_error
    x = _trap_lag(state.x, state.u, u, avr.t_a, dt)
    x = min(max(x, avr.efd_min), avr.efd_max)
    state.x = x
    state.u = u
    return x
