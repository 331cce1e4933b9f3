"""Cost model walk-through: M/M/1 delays, marginals, and slot energy.

Shows how the closed-form pieces behave as an edge station approaches its
service rate and as the shared LAN fills up, and why the marginal curves
(not the delays themselves) drive the offloading decisions.
"""

from peeroff import (
    computation_delay,
    congestion_delay,
    inverse_marginal_comp_delay,
    marginal_comp_delay,
    marginal_congestion_delay,
)

MU = 75.0      # tasks/s an edge CPU sustains (3 GHz / 40 Mcycles)
TAU = 0.2      # seconds to push one 0.2 Mb task through a 100 Mb/s LAN

print("=== computation delay at one station (mu = 75 tasks/s) ===")
print(f"{'load':>8} {'delay/task':>12} {'marginal':>12}")
for load in (0.0, 37.5, 60.0, 70.0, 74.0, 74.9):
    print(f"{load:8.1f} {computation_delay(load, MU):12.4f} "
          f"{marginal_comp_delay(load, MU):12.4f}")

print()
print("=== LAN congestion (tau = 0.2 s/task, capacity 5 tasks/s) ===")
print(f"{'traffic':>8} {'delay/task':>12} {'marginal':>12}")
for lam in (0.0, 1.0, 2.5, 4.0, 4.8):
    print(f"{lam:8.1f} {congestion_delay(lam, TAU):12.4f} "
          f"{marginal_congestion_delay(lam, TAU):12.4f}")

print()
print("=== the water-level inverse ===")
print("The solver fills a receiving station until its marginal delay hits a")
print("target level; the inverse marginal tells it the workload directly.")
for level in (1 / MU, 2 / MU, 4 / MU, 1.0):
    w = inverse_marginal_comp_delay(level, MU)
    print(f"  level {level:9.5f} s per task/s -> workload {w:7.3f} tasks/s "
          f"(round trip {marginal_comp_delay(w, MU):9.5f})")

print()
print("=== slot energy accounting ===")
kappa = 9e-5   # Wh per task
slot = 60.0    # seconds
budget = 22.0 / 60.0
for load in (40.0, 60.0, 67.9, 75.0):
    e = kappa * load * slot
    flag = "over" if e > budget else "under"
    print(f"  {load:5.1f} tasks/s -> {e:.4f} Wh per slot ({flag} the "
          f"{budget:.4f} Wh budget)")
print()
print(f"Sustainable load given the budget: {budget / (kappa * slot):.1f} tasks/s"
      f" of the {MU:.0f} tasks/s service rate.")
