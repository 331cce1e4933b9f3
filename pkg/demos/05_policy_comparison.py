"""Replaying one scenario stream through every policy.

Reproduces the benchmark picture on a moderately loaded stream: pure
delay minimization is the floor, the online controller tracks it closely
while honoring budgets in the long run, per-slot hard budgets cost extra
delay, and no offloading at all is the ceiling. Also reports the
equilibrium policy and per-slot price-of-anarchy statistics.
"""

from dataclasses import replace

import numpy as np

from peeroff import POLICIES, build_scenario, load_config, run_open
from peeroff.harness import paired_poa_run

exp = load_config("configs/default.yaml")
exp.scenario.arrivals = replace(exp.scenario.arrivals, arrival_scale=0.62)
SEED, HORIZON = 1, 250

topology, states = build_scenario(exp.scenario, SEED, HORIZON)
cfg = exp.network_config(topology.n_sbs)
loads = np.array([s.arrivals for s in states])
print(f"{topology.n_sbs} stations, mean utilization "
      f"{loads.mean() / cfg.service_rates[0]:.2f}, "
      f"hot station-slots {np.mean(loads > 0.95 * 75):.1%}")

print(f"\n{'policy':>10} {'avg delay':>12} {'avg energy':>11} {'dropped':>9} "
      f"{'lan':>7}")
for name in ("d_optimal", "open_c", "open_a", "ssc", "nop"):
    metrics, _ = run_open(POLICIES[name], states, cfg, HORIZON)
    print(f"{name:>10} {np.mean([m.total_delay for m in metrics]):12.1f} "
          f"{np.mean([m.total_energy for m in metrics]):11.3f} "
          f"{np.mean([m.dropped for m in metrics]):9.2f} "
          f"{np.mean([m.lan_traffic for m in metrics]):7.3f}")

print("\npaired equilibrium-vs-optimum pass (shared queues):")
exp.horizon = 100
rows = paired_poa_run(exp, SEED)
poas = np.array([r[3] for r in rows])
print(f"  over {len(poas)} slots: mean PoA {poas.mean():.3f}, "
      f"max {poas.max():.3f}, share of slots at 1.0: "
      f"{np.mean(poas < 1.0 + 1e-9):.1%}")
