"""The autonomous game: best responses, equilibrium, price of anarchy.

Each station now minimizes only its own cost. The round-robin dynamics
converge to a Nash equilibrium; comparing its system objective to the
centralized optimum of the same slot gives the per-slot price of anarchy.
"""

import numpy as np

from peeroff import (
    NetworkConfig,
    OffloadProfile,
    SlotState,
    best_response,
    measure_poa,
    no_offload_profile,
    realize_profile,
    round_robin_ne,
    sbs_cost,
    solve_per_slot_centralized,
    verify_ne,
)

# Station 0 is overloaded; station 1 is lightly loaded but carries a large
# energy backlog, station 2 is the clean receiver the planner prefers.
cfg = NetworkConfig(
    service_rates=np.full(3, 75.0),
    lan_delay=0.05,
    energy_per_task=9e-5,
    energy_budgets=np.full(3, 22.0 / 60.0),
    energy_cap=10 * 22.0 / 60.0,
    delay_cap=1e5,
    control_v=50.0,
    slot_duration=60.0,
)
st = SlotState(
    arrivals=np.array([70.0, 15.0, 35.0]),
    uplink_delay_cost=np.zeros(3),
    tx_energy=np.zeros(3),
    deficit=np.array([10.0, 300.0, 0.0]),
)

profile = no_offload_profile(st.arrivals)
print("round-robin best responses from the keep-everything profile:")
for step in range(6):
    i = step % 3
    before = sbs_cost(i, profile, cfg, st)
    row = best_response(i, profile, cfg, st)
    beta = profile.beta.copy()
    beta[i, :] = row
    profile = OffloadProfile(beta)
    after = sbs_cost(i, profile, cfg, st)
    moved = row.sum() - row[i]
    print(f"  step {step}: station {i} offloads {moved:6.3f} tasks/s, "
          f"own cost {before:9.3f} -> {after:9.3f}")

state = round_robin_ne(cfg, st)
ok, escape = verify_ne(state.profile, cfg, st)
print(f"\nequilibrium after {state.rounds} full rounds "
      f"(verified: {ok}, best unilateral escape {escape:.2e})")
with np.printoptions(precision=2, suppress=True):
    print(state.profile.beta)

star = realize_profile(solve_per_slot_centralized(cfg, st), st)
poa = measure_poa(state.profile, star, cfg, st)
print("\nplanner's routing for the same slot:")
with np.printoptions(precision=2, suppress=True):
    print(star.beta)
print(f"\nprice of anarchy this slot: {poa:.4f}")
print("a selfish sender picks sinks by delay marginals alone, dumping most")
print("of its excess on the backlogged station 1; the planner prices that")
print("station's energy and routes toward station 2 instead.")
