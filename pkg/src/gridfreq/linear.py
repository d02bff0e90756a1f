"""Linearized single-link frequency loop: transfer functions and responses.

The loop maps a power disturbance d (MW) and a shunt reactive profile (MVAr)
to the frequency deviation (Hz) through three blocks: the active-power path
G_p, the reactive side-effect path G_q (coupled through the dimensionless
ratio k_pq), and the disturbance path G_d. Allblocks are rational functions
of the Laplace variable with MW-and-Hz units fixed throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, UnstableClosedLoop


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    keep = np.abs(c) > 1e-14 * scale
    first = int(np.argmax(keep))
    return c[first:]


@dataclass
class RationalTf:
    """Ratio of real polynomials in s, coefficients in descending powers."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        self.num = _trim(self.num)
        self.den = _trim(self.den)
        if np.all(self.den == 0.0):
            raise DomainError("transfer function denominator is zero")
        if len(self.num) > len(self.den):
            raise DomainError("transfer function must be proper or bi-proper")

    @classmethod
    def const(cls, k: float) -> "RationalTf":
        return cls(np.array([float(k)]), np.array([1.0]))

    def __mul__(self, other):
        if isinstance(other, RationalTf):
            return RationalTf(np.polymul(self.num, other.num), np.polymul(self.den, other.den))
        return RationalTf(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, RationalTf):
            other = RationalTf.const(other)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return RationalTf(num, np.polymul(self.den, other.den))

    __radd__ = __add__

    def __truediv__(self, other: "RationalTf") -> "RationalTf":
        return RationalTf(np.polymul(self.num, other.den), np.polymul(self.den, other.num))

    def normalized(self) -> "RationalTf":
        lead = self.den[0]
        return RationalTf(self.num / lead, self.den / lead)

    def poles(self) -> np.ndarray:
        if len(self.den) == 1:
            return np.array([])
        return np.roots(self.den)

    def is_stable(self, margin: float = 1e-9) -> bool:
        p = self.poles()
        return bool(p.size == 0 or np.max(p.real) < margin)

    def dc_gain(self) -> float:
        return self.num[-1] / self.den[-1]

    def realization(self):
        """Controllable-canonical (A, B, C, D) with a monic denominator."""
        den = self.den / self.den[0]
        num = np.concatenate([np.zeros(len(den) - len(self.num)), self.num / self.den[0]])
        d = num[0]
        b_poly = num[1:] - d * den[1:]
        n = len(den) - 1
        if n == 0:
            return (np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), d)
        a = np.zeros((n, n))
        a[0, :] = -den[1:]
        if n > 1:
            a[1:, :-1] = np.eye(n - 1)
        b = np.zeros((n, 1))
        b[0, 0] = 1.0
        c = b_poly.reshape(1, n)
        return a, b, c, d

    def simulate(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Zero-state response to a sampled input, trapezoidal state update."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        u = np.asarray(u, dtype=float)
        a, b, c, d = self.realization()
        n = a.shape[0]
        if n == 0:
            return d * u
        half = 0.5 * dt
        m_inv = np.linalg.inv(np.eye(n) - half * a)
        e = m_inv @ (np.eye(n) + half * a)
        f = (half * (m_inv @ b)).ravel()
        cv = c.ravel()
        x = np.zeros(n)
        y = np.empty_like(u)
        for k in range(u.size):
            y[k] = cv @ x + d * u[k]
            if k + 1 < u.size:
                x = e @ x + f * (u[k] + u[k + 1])
        return y


def step_response(tf: RationalTf, horizon: float, dt: float):
    """Unit-step response on a uniform grid; returns (t, y)."""
    if dt <= 0 or horizon <= 0:
        raise ValueError("horizon and dt must be > 0")
    if not tf.is_stable(margin=1e-9):
        # allow marginally stable poles on the axis, reject growth
        if np.max(tf.poles().real) > 1e-9:
            raise UnstableClosedLoop("step response of an unstable transfer function")
    n = int(round(horizon / dt)) + 1
    t = np.arange(n) * dt
    return t, tf.simulate(np.ones(n), dt)


@dataclass
class LinearLoopConfig:
    g_prime: float                       # MW/Hz
    k_pq: float                          # dimensionless converter coupling
    gp: RationalTf                       # Hz per MW, supplementary power path
    gq: RationalTf                       # Hz per MVAr, reactive side-effect path
    gd: RationalTf                       # Hz per MW, disturbance path
    q_sh_profile: Callable[[np.ndarray], np.ndarray] | None = None


def closed_loop_tf(cfg: LinearLoopConfig, input: str = "disturbance") -> RationalTf:
    """Closed-loop transfer function to frequency deviation.

    For the disturbance input: Gd / (1 + g'*Gp + g'*k_pq*Gq); the shunt
    profile drives the parallel path Gq over the same denominator. Blocks
    that share a denominator polynomial are combined without introducing
    spurious common factors, so the degenerate cases reduce exactly.
    """
    gp, gq, gd = cfg.gp, cfg.gq, cfg.gd

    def aligned(num, n):
        return np.concatenate([np.zeros(n - len(num)), num])

    use_q = cfg.g_prime != 0.0 and cfg.k_pq != 0.0 and np.any(gq.num != 0.0)
    if not use_q or np.array_equal(gq.den, gp.den):
        loop_den = gp.den
        n = len(loop_den)
        loop_num = aligned(loop_den.copy(), n)
        if cfg.g_prime != 0.0:
            loop_num = loop_num + cfg.g_prime * aligned(gp.num, n)
            if use_q:
                loop_num = loop_num + (cfg.g_prime * cfg.k_pq) * aligned(gq.num, n)
        loop = RationalTf(loop_num, loop_den)
    else:
        loop = (RationalTf.const(1.0) + cfg.g_prime * gp
                + (cfg.g_prime * cfg.k_pq) * gq)

    source = gd if input == "disturbance" else gq
    if input not in ("disturbance", "shunt"):
        raise ValueError(f"unknown input {input!r}")
    if np.array_equal(source.den, loop.den):
        tf = RationalTf(source.num, loop.num)       # the shared factor cancels exactly
    else:
        tf = source / loop
    tf = tf.normalized()
    poles = tf.poles()
    if poles.size and np.max(poles.real) > 1e-9:
        raise UnstableClosedLoop(
            f"closed loop has a right-half-plane pole at {poles[np.argmax(poles.real)]:.4g}")
    return tf


def effective_coupling(k_pq: float, dq_sh_trace: np.ndarray, dp_epc_trace: np.ndarray,
                       eps_mw: float = 1e-3) -> np.ndarray:
    """Time series k_pq + dq_sh/dp_epc; samples with |dp_epc| < eps_mw are NaN."""
    dq = np.asarray(dq_sh_trace, dtype=float)
    dp = np.asarray(dp_epc_trace, dtype=float)
    if dq.shape != dp.shape:
        raise ValueError("traces must share one grid")
    out = np.full(dp.shape, np.nan)
    ok = np.abs(dp) >= eps_mw
    out[ok] = k_pq + dq[ok] / dp[ok]
    return out


def governor_tf(kind: str, droop_mw_per_hz: float, t_g: float, t_w: float,
                t_r: float = 5.0, rt_ratio: float = 6.0, kappa: float = 0.3) -> RationalTf:
    """MW-per-Hz governor block matching the time-domain implementation."""
    servo = RationalTf(np.array([1.0]), np.array([t_g, 1.0]))
    if kind == "hydro":
        comp = RationalTf(np.array([t_r, 1.0]), np.array([rt_ratio * t_r, 1.0]))
        water = RationalTf(np.array([-t_w, 1.0]), np.array([0.5 * t_w, 1.0]))
        chain = comp * servo * water
    elif kind == "thermal":
        reheat = RationalTf(np.array([kappa * t_w, 1.0]), np.array([t_w, 1.0]))
        chain = servo * reheat
    else:
        raise ValueError(f"unknown governor kind {kind!r}")
    return droop_mw_per_hz * chain


def aggregate_frequency_tf(e_k_gws: float, d_mw_per_hz: float,
                           governors: list[RationalTf], f_n: float = 50.0) -> RationalTf:
    """Single-mass aggregate 1/(M s + D + R(s)), Hz per MW, M = 2*E_k/f_n."""
    m = 2.0 * e_k_gws * 1000.0 / f_n
    r_sum = RationalTf.const(d_mw_per_hz)
    for g in governors:
        r_sum = r_sum + g
    den = np.polyadd(np.polymul(np.array([m, 0.0]), r_sum.den), r_sum.num)
    return RationalTf(r_sum.den, den).normalized()


def loop_from_model(model, c_q: float = 0.0, g_prime: float = 0.0, k_pq: float = 0.0,
                    trip_machine: str | None = None) -> LinearLoopConfig:
    """Aggregate loop for a network model: Gp = Gd from stored energy, damping
    from load frequency sensitivity, governor blocks from the FCR fleet;
    Gq = c_q * Gp as the calibrated reactive sensitivity."""
    e_k = 0.0
    govs = []
    for mach in model.machines:
        if trip_machine is not None and mach.id == trip_machine:
            continue
        e_k += mach.h * mach.s_rated / 1000.0
        if mach.is_fcr and mach.governor is not None:
            g = mach.governor
            govs.append(governor_tf(g.kind, g.droop_mw_per_hz, g.t_g, g.t_w,
                                    g.t_r, g.rt_ratio, g.kappa))
    d = sum(ld.p0 * ld.kpf / model.f_n for ld in model.loads)
    d += sum(m.d * m.s_rated / model.f_n for m in model.machines
             if trip_machine is None or m.id != trip_machine)
    gp = aggregate_frequency_tf(e_k, d, govs, model.f_n)
    return LinearLoopConfig(g_prime=g_prime, k_pq=k_pq, gp=gp, gq=c_q * gp, gd=gp)
