"""Virtual energy-deficit queues and the per-slot drift-plus-penalty loop.

The outer loop turns the long-horizon problem (minimize delay subject to
per-SBS long-term energy budgets) into one convex allocation per slot:
minimize  sum_i [ V * D_i(beta) + q_i * E_i(beta) ]  over feasible beta,
then push each deficit queue by the realized energy overshoot.  Any
callable with the signature ``policy(cfg, st) -> OffloadProfile`` can be
plugged in as the per-slot solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    STABILITY_MARGIN,
    NetworkConfig,
    OffloadProfile,
    SlotState,
    congestion_delay,
    delay_components,
    energies,
)


def update_deficit(q: float, energy_used: float, budget: float) -> float:
    """One queue step: max(q + energy_used - budget, 0)."""
    return max(q + energy_used - budget, 0.0)


@dataclass
class DeficitQueues:
    """Virtual per-SBS energy deficit queues, started empty.

    Each queue accumulates the energy used beyond the per-slot budget and
    drains when a slot comes in under budget; its growth rate is what the
    per-slot objective prices.
    """

    values: np.ndarray
    history: list = field(default_factory=list)
    track_history: bool = False

    @classmethod
    def start(cls, n_sbs: int, track_history: bool = False) -> "DeficitQueues":
        return cls(values=np.zeros(n_sbs), track_history=track_history)

    def update(self, energy_used: np.ndarray, budgets: np.ndarray) -> np.ndarray:
        if self.track_history:
            self.history.append(self.values.copy())
        self.values = np.maximum(self.values + energy_used - budgets, 0.0)
        return self.values


@dataclass(frozen=True)
class PerSlotObjective:
    """Value of the weighted delay-plus-deficit-energy objective for one slot.

    decision_dependent regroups the terms the offloading profile can move:
    per-SBS workload delay and deficit-priced computation energy, plus the
    shared congestion cost.  decision_independent collects the uplink delay
    and transmission-energy terms, identical for every feasible profile.
    """

    value: float
    decision_dependent: float
    decision_independent: float


def decision_independent_cost(cfg: NetworkConfig, st: SlotState) -> float:
    return float(np.sum(cfg.control_v * st.uplink_delay_cost + st.deficit * st.tx_energy))


def decision_dependent_cost(omega: np.ndarray, lan_traffic: float,
                            cfg: NetworkConfig, st: SlotState) -> float:
    """Objective part driven by the reduced decision (omega, lambda)."""
    mu = cfg.service_rates
    v = cfg.control_v
    price = cfg.deficit_price(st.deficit)
    comp = np.sum(v * omega / (mu - omega) + price * omega)
    cong = v * lan_traffic * congestion_delay(lan_traffic, cfg.lan_delay)
    return float(comp + cong)


def per_slot_objective(profile: OffloadProfile, cfg: NetworkConfig,
                       st: SlotState) -> PerSlotObjective:
    """Evaluate sum_i (V * D_i + q_i * E_i) for a feasible profile."""
    profile.validate(cfg, margin=0.0)
    dep = decision_dependent_cost(profile.post_workloads, profile.lan_traffic, cfg, st)
    # The uplink term scales with the served fraction when arrivals were
    # clamped; recompute the independent part against this profile's state.
    indep = decision_independent_cost(cfg, st)
    return PerSlotObjective(value=dep + indep, decision_dependent=dep,
                            decision_independent=indep)


@dataclass
class SlotMetrics:
    """Everything recorded about one simulated slot."""

    t: int
    omega: np.ndarray
    energy: np.ndarray
    deficit: np.ndarray          # queue values at the START of the slot
    comp_delay: np.ndarray
    cong_delay: np.ndarray
    comm_delay: np.ndarray
    objective: float
    lan_traffic: float
    dropped: float
    solver_time_us: float
    error: str = ""
    poa: float = float("nan")
    # Hard per-slot caps are not folded into the solvers; violations are
    # counted here post hoc.
    energy_cap_violations: int = 0
    delay_cap_violations: int = 0

    @property
    def delay(self) -> np.ndarray:
        return self.comp_delay + self.cong_delay + self.comm_delay

    @property
    def total_delay(self) -> float:
        return float(self.delay.sum())

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())

    @property
    def total_deficit(self) -> float:
        return float(self.deficit.sum())


def clamp_slot(cfg: NetworkConfig, st: SlotState) -> tuple[SlotState, float]:
    """Drop the arrival mass no feasible profile could serve.

    Each SBS can retain at most (1 - margin) * mu_i of its own arrivals, so
    clamping every arrival rate to that level always restores feasibility
    (the no-offload profile serves the clamped arrivals).  Returns the
    possibly-clamped slot state and the total dropped rate, tasks/sec.
    """
    limit = (1.0 - STABILITY_MARGIN) * cfg.service_rates
    clamped = np.minimum(st.arrivals, limit)
    dropped = float(np.sum(st.arrivals - clamped))
    if dropped <= 0.0:
        return st, 0.0
    return st.with_arrivals(clamped), dropped


def run_open(policy, scenario, cfg: NetworkConfig, horizon: int,
             fallback_retain: bool = True):
    """Run the online loop for ``horizon`` slots and collect metrics.

    policy    -- callable (cfg, st) -> OffloadProfile for one slot
    scenario  -- iterable of SlotState (deficit fields are ignored; the loop
                 owns the queue trajectory, starting from all-zero queues)
    Returns (list of SlotMetrics, final deficit queue vector).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    queues = DeficitQueues.start(cfg.n_sbs)
    metrics: list[SlotMetrics] = []
    stream = iter(scenario)
    for t in range(horizon):
        try:
            raw = next(stream)
        except StopIteration:
            raise RuntimeError(f"scenario stream exhausted at slot {t} of {horizon}")
        q = queues.values
        st, dropped = clamp_slot(cfg, raw.with_deficit(q))
        error = ""
        start = time.perf_counter()
        try:
            profile = policy(cfg, st)
        except Exception as exc:  # solver failure: fall back, keep the run alive
            if not fallback_retain:
                raise
            error = f"{type(exc).__name__}: {exc}"
            profile = OffloadProfile(np.diag(st.arrivals))
        elapsed_us = (time.perf_counter() - start) * 1e6

        served = profile.served_arrivals
        dropped += float(np.sum(st.arrivals - served))
        eval_st = st if np.allclose(served, st.arrivals, rtol=1e-9, atol=1e-12) \
            else st.with_arrivals(served)
        comp, cong, comm = delay_components(profile, cfg, eval_st)
        e = energies(profile, cfg, eval_st)
        obj = per_slot_objective(profile, cfg, eval_st)
        per_sbs_delay = comp + cong + comm
        metrics.append(SlotMetrics(
            t=t,
            omega=profile.post_workloads,
            energy=e,
            deficit=q.copy(),
            comp_delay=comp,
            cong_delay=cong,
            comm_delay=comm,
            objective=obj.value,
            lan_traffic=profile.lan_traffic,
            dropped=dropped,
            solver_time_us=elapsed_us,
            error=error,
            energy_cap_violations=int(np.sum(e > cfg.energy_cap + 1e-12)),
            delay_cap_violations=int(np.sum(per_sbs_delay > cfg.delay_cap + 1e-12)),
        ))
        queues.update(e, cfg.energy_budgets)
    return metrics, queues.values
