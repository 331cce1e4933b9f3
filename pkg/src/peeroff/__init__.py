"""Online peer offloading for energy-constrained edge base stations.

A library and simulator for workload routing between small-cell base
stations that share a LAN: closed-form M/M/1 delay and energy models, a
drift-plus-penalty outer loop with virtual energy-deficit queues, an
exact per-slot allocation solver, a best-response offloading game with
price-of-anarchy measurement, benchmark policies, and a reproducible
scenario generator plus CSV-exporting experiment harness.
"""

from .model import (
    ABS_TOL,
    REL_TOL,
    STABILITY_MARGIN,
    Allocation,
    DomainError,
    FeasibilityError,
    NetworkConfig,
    OffloadProfile,
    ParameterError,
    SlotState,
    SolverError,
    computation_delay,
    congestion_delay,
    downlink_rate,
    energies,
    inverse_marginal_comp_delay,
    marginal_comp_delay,
    marginal_congestion_delay,
    no_offload_profile,
    sbs_delay_cost,
    sbs_energy,
)
from .lyapunov import (
    DeficitQueues,
    PerSlotObjective,
    SlotMetrics,
    clamp_slot,
    per_slot_objective,
    run_open,
    update_deficit,
)
from .central import (
    FlowBalanceState,
    brute_force_oracle,
    categorize,
    kkt_residual,
    pre_offloading_macc,
    realize_profile,
    solve_per_slot_centralized,
    solve_with_caps,
)
from .game import (
    GameState,
    best_response,
    measure_poa,
    pair_marginals,
    pre_offloading_pmacc,
    round_robin_ne,
    sbs_cost,
    verify_ne,
)
from .scenario import (
    ArrivalModel,
    RadioParams,
    ScenarioConfig,
    Topology,
    build_scenario,
    channel_gain,
    generate_topology,
    read_stream,
    scatter_and_assign_ues,
    slot_arrivals,
    slot_link_costs,
    write_stream,
)
from .benchmarks import (
    POLICIES,
    delay_optimal_profile,
    nop_profile,
    open_a_profile,
    open_c_profile,
    ssc_profile,
)
from .harness import (
    ExperimentConfig,
    compare_policies,
    load_config,
    run_experiment,
    sweep,
)

__version__ = "0.1.0"
