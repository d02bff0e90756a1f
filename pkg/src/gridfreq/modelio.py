"""gridfreq-v1 model, scenario, and distribution files (YAML)."""
from __future__ import annotations

import math
from pathlib import Path

import yaml

from .errors import ModelFormatError
from .harness import Distribution
from .hvdc import HvdcLink, LccParams, ShuntAutomaton, VscLimits
from .machines import AvrParams, GovernorParams, SynchronousMachine
from .network import Branch, Bus, NetworkModel, ShuntBank, ZipLoad
from .simulator import Disturbance, Scenario

FORMAT_TAG = "gridfreq-v1"


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ModelFormatError(f"{where}: missing required field {key!r}")
    return data[key]


def _load_yaml(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ModelFormatError(f"{path}: expected a mapping at top level")
    return data


def load_model(path) -> NetworkModel:
    data = _load_yaml(path)
    if data.get("format") != FORMAT_TAG:
        raise ModelFormatError(f"{path}: format tag must be {FORMAT_TAG!r}, "
                               f"got {data.get('format')!r}")

    buses = [Bus(id=str(_require(b, "id", "bus")), base_kv=float(_require(b, "base_kv", "bus")),
                 zone=str(b.get("zone", ""))) for b in data.get("buses", [])]
    branches = [Branch(from_bus=str(_require(b, "from", "branch")),
                       to_bus=str(_require(b, "to", "branch")),
                       r=float(b.get("r", 0.0)), x=float(_require(b, "x", "branch")),
                       b_sh=float(b.get("b_sh", 0.0)), tap=float(b.get("tap", 1.0)))
                for b in data.get("branches", [])]
    loads = [ZipLoad(bus=str(_require(l, "bus", "load")),
                     p0=float(_require(l, "p0", "load")), q0=float(l.get("q0", 0.0)),
                     v0=float(l.get("v0", 1.0)),
                     zp=float(l.get("zp", 0.0)), ip=float(l.get("ip", 0.0)),
                     pp=float(l.get("pp", 1.0)),
                     zq=float(l.get("zq", 0.0)), iq=float(l.get("iq", 0.0)),
                     pq=float(l.get("pq", 1.0)), kpf=float(l.get("kpf", 0.0)))
             for l in data.get("loads", [])]
    shunts = [ShuntBank(bus=str(_require(s, "bus", "shunt")),
                        q_step=float(_require(s, "q_step", "shunt")),
                        n_steps=int(_require(s, "n_steps", "shunt")),
                        n_on=int(s.get("n_on", 0)))
              for s in data.get("shunts", [])]

    machines = []
    for m in data.get("machines", []):
        where = f"machine {m.get('id', '?')}"
        gov = None
        if m.get("governor"):
            g = m["governor"]
            gov = GovernorParams(
                kind=str(g.get("kind", "hydro")),
                droop_mw_per_hz=float(g.get("droop_mw_per_hz", 0.0)),
                t_g=float(g.get("t_g", 0.2)), t_w=float(g.get("t_w", 1.0)),
                t_r=float(g.get("t_r", 5.0)), rt_ratio=float(g.get("rt_ratio", 6.0)),
                kappa=float(g.get("kappa", 0.3)),
                p_min=float(g.get("p_min", -math.inf)), p_max=float(g.get("p_max", math.inf)),
                rate_limit=float(g.get("rate_limit", math.inf)))
        avr = AvrParams()
        if m.get("avr"):
            a = m["avr"]
            avr = AvrParams(k_a=float(a.get("k_a", 70.0)), t_a=float(a.get("t_a", 0.5)),
                            efd_min=float(a.get("efd_min", -4.0)),
                            efd_max=float(a.get("efd_max", 4.0)))
        machines.append(SynchronousMachine(
            id=str(_require(m, "id", where)), bus=str(_require(m, "bus", where)),
            s_rated=float(_require(m, "s_rated", where)), h=float(_require(m, "h", where)),
            d=float(m.get("d", 0.0)), p_mech=float(m.get("p_mech", 0.0)),
            v_set=float(m.get("v_set", 1.0)), xd_p=float(m.get("xd_p", 0.3)),
            t_e=float(m.get("t_e", 5.0)), is_fcr=bool(m.get("is_fcr", False)),
            is_slack=bool(m.get("is_slack", False)), governor=gov, avr=avr))

    links = []
    for l in data.get("hvdc", []):
        where = f"hvdc link {l.get('id', '?')}"
        kind = str(_require(l, "kind", where))
        lcc = None
        shunt = None
        vsc = None
        if kind == "LCC":
            lc = l.get("lcc", {}) or {}
            lcc = LccParams(x_c=float(lc.get("x_c", 0.044)), b=int(lc.get("b", 2)),
                            v_d0=float(lc.get("v_d0", 1.0)),
                            xi_min=float(lc.get("xi_min", 0.2618)),
                            p_base=float(lc.get("p_base", 0.0)))
            if l.get("shunt"):
                s = l["shunt"]
                bank = ShuntBank(bus=str(l["bus"]), q_step=float(_require(s, "q_step", where)),
                                 n_steps=int(s.get("n_steps", 5)), n_on=int(s.get("n_on", 0)))
                shunt = ShuntAutomaton(bank=bank, t_sw=float(s.get("t_sw", 0.5)),
                                       q_hi=[float(v) for v in s.get("q_hi", [])],
                                       q_lo=[float(v) for v in s.get("q_lo", [])])
        elif kind == "VSC":
            vc = l.get("vsc", {}) or {}
            vsc = VscLimits(i_q_max=float(vc.get("i_q_max", 0.3)),
                            i_max=float(vc.get("i_max", 1.0)),
                            k_v=float(vc.get("k_v", 8.0)), t_v=float(vc.get("t_v", 0.1)))
        links.append(HvdcLink(
            id=str(_require(l, "id", where)), bus=str(_require(l, "bus", where)), kind=kind,
            p_rated=float(_require(l, "p_rated", where)), p0=float(_require(l, "p0", where)),
            name=str(l.get("name", "")), acronym=str(l.get("acronym", "")),
            vsc_mode=l.get("vsc_mode"), q0=float(l.get("q0", 0.0)),
            v_ref=(float(l["v_ref"]) if l.get("v_ref") is not None else None),
            lcc=lcc, shunt=shunt, vsc=vsc, epc_enabled=bool(l.get("epc_enabled", True))))

    epc = data.get("epc", {}) or {}
    epc_defaults = {"f_activ": float(epc.get("f_activ", -0.4)),
                    "law": str(epc.get("law", "threshold_referenced"))}

    return NetworkModel(buses=buses, branches=branches, loads=loads, shunts=shunts,
                        machines=machines, hvdc=links,
                        s_base=float(data.get("s_base", 1000.0)),
                        f_n=float(data.get("f_n", 50.0)),
                        name=str(data.get("name", Path(path).stem)),
                        epc_defaults=epc_defaults)


def save_model(model: NetworkModel, path):
    def gov_dict(g):
        if g is None:
            return None
        d = {"kind": g.kind, "droop_mw_per_hz": g.droop_mw_per_hz, "t_g": g.t_g, "t_w": g.t_w}
        if g.kind == "hydro":
            d.update(t_r=g.t_r, rt_ratio=g.rt_ratio)
        else:
            d.update(kappa=g.kappa)
        if math.isfinite(g.p_min):
            d["p_min"] = g.p_min
        if math.isfinite(g.p_max):
            d["p_max"] = g.p_max
        if math.isfinite(g.rate_limit):
            d["rate_limit"] = g.rate_limit
        return d

    data = {
        "format": FORMAT_TAG,
        "name": model.name,
        "s_base": model.s_base,
        "f_n": model.f_n,
        "buses": [{"id": b.id, "base_kv": b.base_kv, "zone": b.zone} for b in model.buses],
        "branches": [{"from": b.from_bus, "to": b.to_bus, "r": b.r, "x": b.x,
                      "b_sh": b.b_sh, "tap": b.tap} for b in model.branches],
        "loads": [{"bus": l.bus, "p0": l.p0, "q0": l.q0, "v0": l.v0,
                   "zp": l.zp, "ip": l.ip, "pp": l.pp,
                   "zq": l.zq, "iq": l.iq, "pq": l.pq, "kpf": l.kpf} for l in model.loads],
        "shunts": [{"bus": s.bus, "q_step": s.q_step, "n_steps": s.n_steps, "n_on": s.n_on}
                   for s in model.shunts],
        "machines": [{k: v for k, v in {
            "id": m.id, "bus": m.bus, "s_rated": m.s_rated, "h": m.h, "d": m.d,
            "p_mech": m.p_mech, "v_set": m.v_set, "xd_p": m.xd_p, "t_e": m.t_e,
            "is_fcr": m.is_fcr, "is_slack": m.is_slack,
            "governor": gov_dict(m.governor),
            "avr": {"k_a": m.avr.k_a, "t_a": m.avr.t_a,
                    "efd_min": m.avr.efd_min, "efd_max": m.avr.efd_max},
        }.items() if v is not None} for m in model.machines],
        "hvdc": [],
        "epc": dict(model.epc_defaults or {"f_activ": -0.4, "law": "threshold_referenced"}),
    }
    for lk in model.hvdc:
        entry = {"id": lk.id, "name": lk.name, "acronym": lk.acronym, "bus": lk.bus,
                 "kind": lk.kind, "p_rated": lk.p_rated, "p0": lk.p0,
                 "epc_enabled": lk.epc_enabled}
        if lk.kind == "LCC":
            entry["lcc"] = {"x_c": lk.lcc.x_c, "b": lk.lcc.b, "v_d0": lk.lcc.v_d0,
                            "xi_min": lk.lcc.xi_min}
            if lk.shunt is not None:
                entry["shunt"] = {"q_step": lk.shunt.bank.q_step,
                                  "n_steps": lk.shunt.bank.n_steps,
                                  "n_on": lk.shunt.bank.n_on, "t_sw": lk.shunt.t_sw,
                                  "q_hi": list(lk.shunt.q_hi), "q_lo": list(lk.shunt.q_lo)}
        else:
            entry["vsc_mode"] = lk.vsc_mode
            entry["q0"] = lk.q0
            if lk.v_ref is not None:
                entry["v_ref"] = lk.v_ref
            entry["vsc"] = {"i_q_max": lk.vsc.i_q_max, "i_max": lk.vsc.i_max,
                            "k_v": lk.vsc.k_v, "t_v": lk.vsc.t_v}
        data["hvdc"].append(entry)

    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)


def load_scenario(path) -> Scenario:
    data = _load_yaml(path)
    dist = None
    if data.get("disturbance"):
        d = data["disturbance"]
        dist = Disturbance(machine=str(_require(d, "machine", "disturbance")),
                           t_trip=float(_require(d, "t_trip", "disturbance")),
                           p_lost=float(d.get("p_lost", 0.0)),
                           q_lost=float(d.get("q_lost", 0.0)),
                           ek_lost=float(d.get("ek_lost", 0.0)))
    return Scenario(label=str(data.get("label", Path(path).stem)),
                    duration=float(_require(data, "duration", "scenario")),
                    disturbance=dist, zone=str(data.get("zone", "")))


def load_distribution(path) -> Distribution:
    data = _load_yaml(path)
    links = [(str(_require(e, "link", "distribution")), float(_require(e, "g_prime", "distribution")))
             for e in data.get("links", [])]
    if not links:
        raise ModelFormatError(f"{path}: distribution lists no links")
    return Distribution(label=str(data.get("label", Path(path).stem)), links=links)
