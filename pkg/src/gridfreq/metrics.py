"""Paired-trace assessment quantities for one supplementary-control run.

Case A is the governor-only reference, case B the same scenario with one
link's frequency droop enabled. All windowed integrals run from zero to the
time of case B's frequency minimum and use the trapezoidal rule on the
recorded grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, GridMismatch
from .simulator import SimulationTrace

DP_GUARD_MW = 1.0   # samples with smaller |dP| do not contribute to ratios


def _check_aligned(trace_a: SimulationTrace, trace_b: SimulationTrace):
    if trace_a.t.shape != trace_b.t.shape or not np.allclose(trace_a.t, trace_b.t, atol=1e-12):
        raise GridMismatch("traces are on different time grids")


def max_ifd(trace: SimulationTrace):
    """Most negative frequency deviation after the trip and its first time."""
    if trace.t.size == 0:
        raise ValueError("empty trace")
    mask = trace.t >= trace.t_trip - 1e-12
    f = trace.f_coi[mask]
    t = trace.t[mask]
    i = int(np.argmin(f))
    return float(f[i]), float(t[i])


def ssfd(trace: SimulationTrace, tail_fraction: float = 0.1) -> float:
    """Settled deviation: mean of the trailing fraction of the horizon."""
    n = max(int(round(trace.t.size * tail_fraction)), 1)
    return float(np.mean(trace.f_coi[-n:]))


def max_rocof(trace: SimulationTrace) -> float:
    """Largest |df/dt| (Hz/s) on the recorded grid."""
    df = np.diff(trace.f_coi) / np.diff(trace.t)
    return float(np.max(np.abs(df), initial=0.0))


def delta_p_epc(trace_a: SimulationTrace, trace_b: SimulationTrace, link: str) -> np.ndarray:
    """Active power change of the link between cases, MW per sample."""
    _check_aligned(trace_a, trace_b)
    j = trace_b.link_column(link)
    return trace_b.link_p[:, j] - trace_a.link_p[:, j]


def delta_q_epc_star(trace_a: SimulationTrace, trace_b: SimulationTrace, link: str) -> np.ndarray:
    """Side-effected reactive change (converter plus switched banks), MVAr."""
    _check_aligned(trace_a, trace_b)
    j = trace_b.link_column(link)
    qa = trace_a.link_q[:, j] + trace_a.link_q_shunt[:, j]
    qb = trace_b.link_q[:, j] + trace_b.link_q_shunt[:, j]
    return qb - qa


def _window(trace: SimulationTrace, t_min: float) -> np.ndarray:
    return trace.t <= t_min + 1e-12


def k_pq_sum(dq: np.ndarray, dp: np.ndarray, t: np.ndarray, t_min: float,
             eps_mw: float = DP_GUARD_MW) -> float:
    """Integral of dQ/dP from zero to t_min; guarded samples contribute zero."""
    sel = t <= t_min + 1e-12
    dq = np.asarray(dq, dtype=float)[sel]
    dp = np.asarray(dp, dtype=float)[sel]
    tt = np.asarray(t, dtype=float)[sel]
    active = np.abs(dp) >= eps_mw
    if not np.any(active):
        raise EmptyWindow("supplementary control never active before the nadir")
    ratio = np.zeros_like(dq)
    ratio[active] = dq[active] / dp[active]
    return float(np.trapz(ratio, tt))


def load_energy_change(trace_a: SimulationTrace, trace_b: SimulationTrace, t_min: float) -> float:
    """Integral of the total-load power difference over [0, t_min], MWs."""
    _check_aligned(trace_a, trace_b)
    sel = _window(trace_b, t_min)
    d = trace_b.p_load_total[sel] - trace_a.p_load_total[sel]
    return float(np.trapz(d, trace_b.t[sel]))


def loss_energy_change(trace_a: SimulationTrace, trace_b: SimulationTrace, t_min: float) -> float:
    """Integral of the total-loss power difference over [0, t_min], MWs."""
    _check_aligned(trace_a, trace_b)
    sel = _window(trace_b, t_min)
    d = trace_b.p_loss_total[sel] - trace_a.p_loss_total[sel]
    return float(np.trapz(d, trace_b.t[sel]))


def nadir_improvement(trace_a: SimulationTrace, trace_b: SimulationTrace) -> float:
    """min(f_B) - min(f_A) in Hz; positive when the control helps."""
    _check_aligned(trace_a, trace_b)
    return float(np.min(trace_b.f_coi) - np.min(trace_a.f_coi))


@dataclass
class MetricsReport:
    link: str
    f_nadir_a: float               # Hz deviation, case A
    f_nadir_b: float               # Hz deviation, case B
    t_min: float                   # s, case B nadir time
    df_epc_star: float             # Hz improvement
    dp_epc: np.ndarray             # MW trace
    dp_epc_peak: float             # MW
    dq_epc_star: np.ndarray        # MVAr trace
    k_pq_sum: float | None         # dimensionless * s, None when never active
    de_load: float                 # MWs
    de_loss: float                 # MWs
    ssfd: float                    # Hz, case B
    max_rocof: float               # Hz/s, case B
    saturated_fraction: float      # share of window samples with reactive limit active

    def csv_row(self):
        k = "" if self.k_pq_sum is None else f"{self.k_pq_sum:.6f}"
        return (f"{self.link},{self.df_epc_star:.6f},{self.f_nadir_a:.6f},{self.f_nadir_b:.6f},"
                f"{self.t_min:.3f},{k},{self.de_load:.3f},{self.de_loss:.3f},"
                f"{self.dp_epc_peak:.3f},{self.ssfd:.6f},{self.max_rocof:.6f},"
                f"{self.saturated_fraction:.3f}")

    CSV_HEADER = ("link,df_epc_star_hz,f_nadir_a_hz,f_nadir_b_hz,t_min_s,k_pq_sum,"
                  "de_load_mws,de_loss_mws,dp_epc_peak_mw,ssfd_hz,max_rocof_hz_s,"
                  "saturated_fraction")

    def text_block(self) -> str:
        lines = [f"link: {self.link}",
                 f"  nadir A / B:        {self.f_nadir_a:+.4f} / {self.f_nadir_b:+.4f} Hz",
                 f"  improvement:        {self.df_epc_star:+.4f} Hz",
                 f"  nadir time (B):     {self.t_min:.2f} s",
                 f"  peak support:       {self.dp_epc_peak:.1f} MW",
                 f"  K_pq integral:      "
                 + ("n/a" if self.k_pq_sum is None else f"{self.k_pq_sum:+.4f} s"),
                 f"  load energy change: {self.de_load:+.1f} MWs",
                 f"  loss energy change: {self.de_loss:+.1f} MWs",
                 f"  SSFD (B):           {self.ssfd:+.4f} Hz",
                 f"  max RoCoF (B):      {self.max_rocof:.4f} Hz/s",
                 f"  reactive-saturated: {100 * self.saturated_fraction:.0f}% of window"]
        return "\n".join(lines)


def compute_metrics(trace_a: SimulationTrace, trace_b: SimulationTrace, link: str) -> MetricsReport:
    """All paired quantities for one link's A/B comparison."""
    _check_aligned(trace_a, trace_b)
    nadir_a, _ = max_ifd(trace_a)
    nadir_b, t_min = max_ifd(trace_b)
    dp = delta_p_epc(trace_a, trace_b, link)
    dq = delta_q_epc_star(trace_a, trace_b, link)
    try:
        kpq = k_pq_sum(dq, dp, trace_b.t, t_min)
    except EmptyWindow:
        kpq = None
    sel = _window(trace_b, t_min)
    j = trace_b.link_column(link)
    sat = float(np.mean(trace_b.link_sat[sel, j]))
    return MetricsReport(
        link=link,
        f_nadir_a=nadir_a, f_nadir_b=nadir_b, t_min=t_min,
        df_epc_star=nadir_improvement(trace_a, trace_b),
        dp_epc=dp, dp_epc_peak=float(np.max(dp, initial=0.0)),
        dq_epc_star=dq, k_pq_sum=kpq,
        de_load=load_energy_change(trace_a, trace_b, t_min),
        de_loss=loss_energy_change(trace_a, trace_b, t_min),
        ssfd=ssfd(trace_b), max_rocof=max_rocof(trace_b),
        saturated_fraction=sat)
