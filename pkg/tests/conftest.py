import numpy as np
import pytest

from gridfreq.machines import AvrParams, GovernorParams, SynchronousMachine
from gridfreq.network import Branch, Bus, NetworkModel, ZipLoad


def two_bus_model(load_shares=(0.0, 0.0, 1.0), q_load=0.0, x=0.1, r=0.0):
    """Slack at B1, synchronous condenser holding B2, one pu of load at B2."""
    zp, ip, pp = load_shares
    return NetworkModel(
        buses=[Bus("B1", 400.0), Bus("B2", 400.0)],
        branches=[Branch("B1", "B2", r=r, x=x)],
        loads=[ZipLoad("B2", p0=1000.0, q0=q_load, zp=zp, ip=ip, pp=pp,
                       zq=0.0, iq=0.0, pq=1.0)],
        machines=[
            SynchronousMachine("G1", "B1", s_rated=5000.0, h=3.0, v_set=1.0,
                               p_mech=0.0, is_slack=True),
            SynchronousMachine("C2", "B2", s_rated=1000.0, h=1.0, v_set=1.0, p_mech=0.0),
        ],
        s_base=1000.0)


def radial_model(n_feeders=3):
    """Slack plus a chain of PQ buses with ZIP loads and resistive lines."""
    buses = [Bus("B0", 400.0)] + [Bus(f"B{i}", 400.0) for i in range(1, n_feeders + 1)]
    branches = [Branch(f"B{i}", f"B{i+1}", r=0.01, x=0.05, b_sh=0.02)
                for i in range(n_feeders)]
    loads = [ZipLoad(f"B{i}", p0=300.0, q0=80.0, zp=0.4, ip=0.3, pp=0.3,
                     zq=0.5, iq=0.3, pq=0.2) for i in range(1, n_feeders + 1)]
    machines = [SynchronousMachine("G0", "B0", s_rated=2000.0, h=3.0, v_set=1.02,
                                   p_mech=0.0, is_slack=True)]
    return NetworkModel(buses=buses, branches=branches, loads=loads,
                        machines=machines, s_base=1000.0)


@pytest.fixture(scope="session")
def bundled():
    from gridfreq.bundled import bundled_model
    return bundled_model()
