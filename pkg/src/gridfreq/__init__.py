"""gridfreq: phasor-domain AC/DC frequency dynamics and HVDC fast-reserve
placement assessment."""

from .epc import EpcConfig, epc_power, gain_per_unit, max_gain
from .errors import (DomainError, EmptyWindow, GridFreqError, GridMismatch,
                     InfeasibleOperatingPoint, ModelFormatError, NonConvergence,
                     SingularJacobian, TargetUnreachable, UnstableClosedLoop,
                     UnstableSimulation)
from .harness import (Distribution, GainBudgetResult, RankingTable, assess_all_links,
                      gain_budget_search, multi_disturbance_sweep)
from .hvdc import (HvdcLink, LccParams, ShuntAutomaton, VscLimits, lcc_epc_reactive_sign,
                   lcc_operating_point, shunt_automaton_step, vsc_outputs)
from .linear import (LinearLoopConfig, RationalTf, closed_loop_tf, effective_coupling,
                     step_response)
from .machines import (AvrParams, GovernorParams, SynchronousMachine, avr_step,
                       governor_step, swing_derivatives, system_kinetic_energy)
from .metrics import (MetricsReport, compute_metrics, delta_p_epc, delta_q_epc_star,
                      k_pq_sum, load_energy_change, loss_energy_change, max_ifd,
                      nadir_improvement)
from .network import (Branch, Bus, NetworkModel, PowerFlowSolution, ShuntBank, ZipLoad,
                      network_step_solve, solve_power_flow, total_losses, zip_load_power)
from .simulator import (Disturbance, Scenario, SimulationConfig, SimulationTrace,
                        coi_frequency, run_simulation)

__version__ = "0.1.0"
