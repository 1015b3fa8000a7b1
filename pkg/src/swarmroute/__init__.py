"""Language-measure optimization of probabilistic automata and distributed
swarm route planning.

Core layers:

* :mod:`swarmroute.pfsa` / :mod:`swarmroute.measure` -- automata, language
  measures, Cesaro limits, spectral checks.
* :mod:`swarmroute.supervisor` -- centralized optimal supervision plus
  brute-force and dynamic-programming oracles.
* :mod:`swarmroute.network` -- frozen-swarm PFSA construction from agent
  geometry and a link-failure model.
* :mod:`swarmroute.distributed` -- the per-agent measure percolation engine.
* :mod:`swarmroute.mobility` -- the unfrozen simulation (real and ideal
  processes) with convergence metrics.
* :mod:`swarmroute.scenarios` / :mod:`swarmroute.cli` -- configuration,
  scenario runs, sweeps, and file outputs.
"""

from .distributed import (
    AgentLocalState,
    DistributedResult,
    DistributedRouteOptimizer,
    MeasureEngine,
    NeighborRecord,
    Schedule,
    agent_performance,
    agent_update,
    engine_from_network,
    forwarding_table,
    network_performance,
    run_to_convergence,
    sync_iteration_bound,
)
from .errors import (
    ConfigError,
    NonConvergenceError,
    NumericalError,
    PfsaFormatError,
    SwarmRouteError,
)
from .measure import (
    MeasureVector,
    SAResult,
    cesaro_limit,
    compute_measure,
    is_strongly_absorbing,
    spectral_bound_check,
    stationary_performance,
)
from .mobility import (
    ConvergenceMetrics,
    MobileSwarmState,
    SimConfig,
    SimTrace,
    best_neighbor,
    compute_metrics,
    deviation_fraction,
    run_ideal_process,
    run_real_process,
    step_positions,
)
from .network import (
    FailureModel,
    NetworkPfsa,
    Rect,
    SwarmSnapshot,
    build_network_pfsa,
    failure_prob,
    neighbor_map,
    network_roles,
    random_connected_snapshot,
)
from .pfsa import (
    DisablingSet,
    Pfsa,
    apply_policy,
    build_transition_matrix,
    dumps_pfsa,
    load_pfsa,
    loads_pfsa,
    save_pfsa,
)
from .scenarios import (
    ScenarioConfig,
    compare,
    load_scenario,
    parse_scenario,
    run,
    sweep,
)
from .supervisor import (
    OptimalSupervisor,
    PolicyIterationSolver,
    SupervisorResult,
    brute_force_optimal,
    critical_theta_sweep,
    optimal_supervisor,
    policy_iteration,
    select_theta,
    utopian_performance,
)

__version__ = "0.1.0"
