"""Comparison policies sharing the per-slot solver interface.

Every policy maps (cfg, st) to an OffloadProfile:

nop        -- no peer offloading; each SBS retains what it can serve.
d_optimal  -- pure delay minimization (deficit queues ignored).
ssc        -- delay minimization under a hard per-slot energy budget.
open_c     -- centralized drift-plus-penalty solve.
open_a     -- round-robin best-response equilibrium of the offloading game.
"""

from __future__ import annotations

import numpy as np

from .central import realize_profile, solve_per_slot_centralized, solve_with_caps
from .game import round_robin_ne
from .model import (
    STABILITY_MARGIN,
    NetworkConfig,
    OffloadProfile,
    SlotState,
)


def nop_profile(cfg: NetworkConfig, st: SlotState) -> OffloadProfile:
    """Everyone keeps their own arrivals, clamped to the stability margin."""
    retained = np.minimum(st.arrivals, (1.0 - STABILITY_MARGIN) * cfg.service_rates)
    return OffloadProfile(np.diag(retained))


def delay_optimal_profile(cfg: NetworkConfig, st: SlotState) -> OffloadProfile:
    """Minimize the slot's delay cost, ignoring long-term energy budgets.

    With all deficit queues forced to zero the drift-plus-penalty objective
    reduces to the pure delay cost, so the centralized solver already
    computes this benchmark.
    """
    st0 = st.with_deficit(np.zeros(cfg.n_sbs))
    alloc = solve_per_slot_centralized(cfg, st0)
    return realize_profile(alloc, st0)


def ssc_profile(cfg: NetworkConfig, st: SlotState) -> OffloadProfile:
    """Delay minimization under a hard per-slot energy budget per SBS.

    The budget, net of the slot's transmission energy, caps how much
    workload each SBS may process; arrival mass that no capped placement
    can serve is dropped (visible as short profile rows).
    """
    st0 = st.with_deficit(np.zeros(cfg.n_sbs))
    caps = (cfg.energy_budgets - st0.tx_energy) / (cfg.energy_per_task * cfg.slot_duration)
    caps = np.maximum(caps, 0.0)
    alloc, _dropped = solve_with_caps(cfg, st0, caps)
    return realize_profile(alloc, st0)


def open_c_profile(cfg: NetworkConfig, st: SlotState) -> OffloadProfile:
    alloc = solve_per_slot_centralized(cfg, st)
    return realize_profile(alloc, st)


def open_a_profile(cfg: NetworkConfig, st: SlotState) -> OffloadProfile:
    return round_robin_ne(cfg, st).profile


POLICIES = {
    "nop": nop_profile,
    "d_optimal": delay_optimal_profile,
    "ssc": ssc_profile,
    "open_c": open_c_profile,
    "open_a": open_a_profile,
}
