"""Experiment orchestration: per-link A/B assessment, disturbance sweeps,
and gain-budget comparison between control distributions."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .epc import max_gain
from .errors import DomainError, GridFreqError, TargetUnreachable
from .metrics import MetricsReport, compute_metrics, max_ifd
from .network import NetworkModel, network_step_solve, NetworkSolver, zip_load_power
from .simulator import (Scenario, SimulationConfig, SimulationTrace, build_epc_config,
                        run_simulation)

log = logging.getLogger(__name__)


@dataclass
class RankingRow:
    link: str
    kind: str
    mode: str                       # import/export or VSC control mode
    df_epc_star: float              # Hz
    k_pq_sum: float | None
    de_load: float                  # MWs
    de_loss: float                  # MWs
    dp_epc_peak: float              # MW
    saturated_fraction: float
    shares_bus: bool                # another assessed link at the same PCC
    error: str | None = None


@dataclass
class RankingTable:
    rows: list[RankingRow]
    g_prime: float
    scenario: str
    nadir_a: float                  # Hz deviation, reference case
    reports: dict[str, MetricsReport] = field(default_factory=dict)

    def sorted_rows(self) -> list[RankingRow]:
        return sorted(self.rows, key=lambda r: (-r.df_epc_star, r.link))

    def csv(self) -> str:
        out = ["link,kind,mode,df_epc_star_hz,k_pq_sum,de_load_mws,de_loss_mws,"
               "dp_epc_peak_mw,saturated_fraction,shares_bus,error"]
        for r in self.sorted_rows():
            k = "" if r.k_pq_sum is None else f"{r.k_pq_sum:.6f}"
            out.append(f"{r.link},{r.kind},{r.mode},{r.df_epc_star:.6f},{k},"
                       f"{r.de_load:.3f},{r.de_loss:.3f},{r.dp_epc_peak:.3f},"
                       f"{r.saturated_fraction:.3f},{int(r.shares_bus)},{r.error or ''}")
        return "\n".join(out) + "\n"

    def text_table(self) -> str:
        head = (f"ranking for scenario {self.scenario!r}, gain {self.g_prime:g} MW/Hz, "
                f"reference nadir {self.nadir_a:+.4f} Hz")
        lines = [head, "-" * len(head),
                 f"{'link':10s} {'kind':4s} {'mode':14s} {'improve Hz':>11s} {'K_pq_sum':>9s} "
                 f"{'dE_load':>9s} {'dE_loss':>9s} {'peak MW':>8s} {'sat':>4s} {'bus*':>4s}"]
        for r in self.sorted_rows():
            k = "  n/a" if r.k_pq_sum is None else f"{r.k_pq_sum:+.3f}"
            lines.append(f"{r.link:10s} {r.kind:4s} {r.mode:14s} {r.df_epc_star:+11.4f} {k:>9s} "
                         f"{r.de_load:+9.1f} {r.de_loss:+9.1f} {r.dp_epc_peak:8.1f} "
                         f"{r.saturated_fraction:4.2f} {'yes' if r.shares_bus else '':>4s}")
        return "\n".join(lines) + "\n"


@dataclass
class Distribution:
    label: str
    links: list[tuple[str, float]]   # (link id, MW/Hz)

    def __post_init__(self):
        ids = [l for l, _ in self.links]
        if len(set(ids)) != len(ids):
            raise DomainError("distribution repeats a link")

    @property
    def total_gain(self) -> float:
        return sum(g for _, g in self.links)

    def scaled(self, factor: float) -> dict[str, float]:
        return {l: g * factor for l, g in self.links}


@dataclass
class GainBudgetResult:
    distribution: Distribution
    scale: float
    achieved_nadir: float           # Hz deviation at the returned scale
    total_peak_mw: float            # max over time of the summed support
    iterates: list[tuple[float, float]]   # (scale, nadir) visited by the search


def _b_case(model, scenario, link_id, g_prime, config):
    trace = run_simulation(model, scenario, {link_id: g_prime}, config)
    return link_id, trace


def assess_all_links(model: NetworkModel, scenario: Scenario, g_prime: float,
                     config: SimulationConfig | None = None,
                     links: list[str] | None = None,
                     trace_a: SimulationTrace | None = None,
                     workers: int = 1,
                     return_traces: bool = False):
    """Reference run plus one run per link at the same gain; ranked results.

    Gains above a link's headroom bound are clamped with a warning. Per-link
    simulation failures become table rows with an error note instead of
    aborting the remaining links.
    """
    if trace_a is None:
        trace_a = run_simulation(model, scenario, None, config)
    nadir_a, _ = max_ifd(trace_a)
    if links is None:
        links = [lk.id for lk in model.hvdc if lk.epc_enabled]

    gains = {}
    for lid in links:
        link = model.link(lid)
        g_use = g_prime
        try:
            bound = max_gain(link.epc_headroom, model.epc_defaults.get("f_activ", -0.4), nadir_a)
            if g_prime > bound:
                log.warning("gain %.0f MW/Hz exceeds the headroom bound %.0f for %s; clamped",
                            g_prime, bound, lid)
                g_use = bound
        except DomainError:
            pass                      # reference run never activates the control
        gains[lid] = g_use

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {lid: pool.submit(_b_case, model, scenario, lid, gains[lid], config)
                    for lid in links}
            for lid in links:
                try:
                    results[lid] = futs[lid].result()[1]
                except GridFreqError as exc:
                    results[lid] = exc
    else:
        for lid in links:
            try:
                results[lid] = _b_case(model, scenario, lid, gains[lid], config)[1]
            except GridFreqError as exc:
                results[lid] = exc

    bus_count = {}
    for lid in links:
        bus_count[model.link(lid).bus] = bus_count.get(model.link(lid).bus, 0) + 1

    rows, reports, traces = [], {}, {}
    for lid in links:
        link = model.link(lid)
        mode = link.mode if link.kind == "LCC" else link.vsc_mode
        shares = bus_count[link.bus] > 1
        res = results[lid]
        if isinstance(res, Exception):
            rows.append(RankingRow(lid, link.kind, mode, float("nan"), None, float("nan"),
                                   float("nan"), float("nan"), float("nan"), shares,
                                   error=str(res)))
            continue
        rep = compute_metrics(trace_a, res, lid)
        reports[lid] = rep
        traces[lid] = res
        rows.append(RankingRow(lid, link.kind, mode, rep.df_epc_star, rep.k_pq_sum,
                               rep.de_load, rep.de_loss, rep.dp_epc_peak,
                               rep.saturated_fraction, shares))

    table = RankingTable(rows=rows, g_prime=g_prime, scenario=scenario.label,
                         nadir_a=nadir_a, reports=reports)
    if return_traces:
        return table, trace_a, traces
    return table


def multi_disturbance_sweep(model: NetworkModel, scenarios: list[Scenario], g_prime: float,
                            config: SimulationConfig | None = None,
                            links: list[str] | None = None, workers: int = 1):
    """Per-scenario ranking tables plus relative improvements df*/|nadir_A|.

    Returns (tables, relative) with relative[scenario_label][link_id] in pu.
    """
    if len(scenarios) < 2:
        raise DomainError("sweep needs at least two scenarios")
    tables = {}
    relative = {}
    for sc in scenarios:
        table = assess_all_links(model, sc, g_prime, config, links=links, workers=workers)
        tables[sc.label] = table
        rel = {}
        for row in table.rows:
            rel[row.link] = (0.0 if abs(table.nadir_a) < 1e-12 or np.isnan(row.df_epc_star)
                             else row.df_epc_star / abs(table.nadir_a))
        relative[sc.label] = rel
    return tables, relative


def _nadir_at_scale(model, scenario, dist, scale, config):
    trace = run_simulation(model, scenario, dist.scaled(scale), config)
    nadir, _ = max_ifd(trace)
    peak = float(np.max(np.sum(trace.link_dp_epc, axis=1), initial=0.0))
    return nadir, peak


def gain_budget_search(model: NetworkModel, scenario: Scenario, dist: Distribution,
                       target_ifd: float, config: SimulationConfig | None = None,
                       band_hz: float = 0.005, max_doublings: int = 6,
                       max_iter: int = 40) -> GainBudgetResult:
    """Smallest uniform scaling of the distribution that holds the nadir target.

    target_ifd is the allowed deviation magnitude (Hz). Bisection over the
    scale factor; nadir depth is monotone in scale but kinked by saturations,
    so no gradient is used.
    """
    target = -abs(target_ifd)
    iterates = []

    def achieved(scale):
        nadir, peak = _nadir_at_scale(model, scenario, dist, scale, config)
        iterates.append((scale, nadir))
        return nadir, peak

    lo, hi = 0.0, 1.0
    nadir_hi, peak_hi = achieved(hi)
    doubles = 0
    while nadir_hi < target:
        # scaling up: stop once extra gain no longer moves the nadir (headroom gone)
        if doubles >= max_doublings:
            raise TargetUnreachable(
                f"nadir {nadir_hi:+.3f} Hz still below {target:+.3f} Hz at scale {hi:g}")
        lo = hi
        hi *= 2.0
        doubles += 1
        prev = nadir_hi
        nadir_hi, peak_hi = achieved(hi)
        if nadir_hi < target and abs(nadir_hi - prev) < 1e-4:
            raise TargetUnreachable("headroom exhausted: nadir no longer responds to gain")

    best = (hi, nadir_hi, peak_hi)
    for _ in range(max_iter):
        if target - band_hz <= best[1] <= target:
            break
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-6:
            break
        nadir_mid, peak_mid = achieved(mid)
        if nadir_mid >= target:
            hi = mid
            best = (mid, nadir_mid, peak_mid)
        else:
            lo = mid

    return GainBudgetResult(distribution=dist, scale=best[0], achieved_nadir=best[1],
                            total_peak_mw=best[2], iterates=iterates)


def measure_coupling_ratio(model: NetworkModel, link_id: str, dp_mw: float = 50.0) -> float:
    """Quasi-static reactive/active coupling of one link around the base point.

    Solves the network twice (base and with dp_mw extra import on the link),
    holding switched banks at their base engagement, converter reactive laws
    at their static characteristics, and returns (dQ_link + dQ_sh)/dP.
    """
    from . import hvdc as hvdc_mod
    from .network import solve_power_flow

    pf = solve_power_flow(model)
    solver = NetworkSolver(model)
    sb = model.s_base
    link = model.link(link_id)
    lbus = model.bus_index(link.bus)

    b_shunt = np.zeros(model.n_bus)
    for lk in model.hvdc:
        if lk.kind == "LCC" and lk.shunt is not None:
            b_shunt[model.bus_index(lk.bus)] += pf.shunt_n_on[lk.id] * lk.shunt.bank.q_step / sb
    for bank in model.shunts:
        b_shunt[model.bus_index(bank.bus)] += bank.n_on * bank.q_step / sb

    slack_bus = model.slack_machine().bus

    def solve_case(dp):
        inj = np.zeros(model.n_bus, dtype=complex)
        for m in model.machines:
            inj[model.bus_index(m.bus)] += pf.machine_p[m.id] + 1j * pf.machine_q[m.id]
        v = pf.v.copy()
        q_by_link = {}
        for _ in range(20):
            inj_l = inj.copy()
            for lk in model.hvdc:
                bi = model.bus_index(lk.bus)
                p = lk.p0 + (dp if lk.id == link_id else 0.0)
                vm = abs(v[bi])
                if lk.kind == "LCC":
                    q, _, _, _ = hvdc_mod.lcc_operating_point(p, vm, lk.lcc, lk.mode)
                elif lk.vsc_mode == "AcVoltage":
                    v_ref = lk.v_ref if lk.v_ref is not None else abs(pf.v[bi])
                    bias = lk.q0 / lk.p_rated / abs(pf.v[bi])
                    i_q = np.clip(bias + lk.vsc.k_v * (v_ref - vm), -lk.vsc.i_q_max, lk.vsc.i_q_max)
                    q = i_q * vm * lk.p_rated
                else:
                    q = lk.q0
                q_by_link[lk.id] = q
                inj_l[bi] += p + 1j * q
            v_new = network_step_solve(model, inj_l, 0.0, v_init=v, shunt_b=b_shunt,
                                       slack_bus=slack_bus, solver=solver)
            if np.max(np.abs(v_new - v)) < 1e-10:
                v = v_new
                break
            v = v_new
        q_sh = pf.shunt_n_on[link_id] * (link.shunt.bank.q_step if link.shunt else 0.0) \
            * abs(v[lbus]) ** 2 if link.kind == "LCC" and link.shunt else 0.0
        return q_by_link[link_id] + q_sh

    q_base = solve_case(0.0)
    q_pert = solve_case(dp_mw)
    return (q_pert - q_base) / dp_mw
