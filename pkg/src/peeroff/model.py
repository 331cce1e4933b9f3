"""Domain types and closed-form cost functions for peer offloading.

All rates (arrivals, service, LAN traffic) are tasks/sec.  Energies are
watt-hours per slot: a task costs ``energy_per_task`` Wh, so an SBS
processing ``omega`` tasks/sec for ``slot_duration`` seconds consumes
``energy_per_task * omega * slot_duration`` Wh of computation energy on
top of its (decision-independent) downlink transmission energy.

Delays come from M/M/1 expectations and are therefore only defined on
the stable interior of the load region; every solver in this package
keeps a relative stability margin of ``STABILITY_MARGIN`` away from the
service-rate and LAN-capacity boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Solvers never load a server or the LAN closer to capacity than this
# relative margin; the M/M/1 formulas diverge on the boundary.
STABILITY_MARGIN = 1e-4

# Floating point comparison policy for invariant checks.
REL_TOL = 1e-9
ABS_TOL = 1e-12


class ParameterError(ValueError):
    """A static parameter violates its documented range."""


class DomainError(ValueError):
    """A cost function was evaluated outside its stable domain."""


class FeasibilityError(ValueError):
    """An offloading profile violates a feasibility condition."""


class SolverError(RuntimeError):
    """A per-slot solver failed to converge."""


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    """Static system parameters shared by every slot.

    service_rates   -- tasks/sec each SBS can process (CPU freq / cycles per task)
    lan_delay       -- seconds to ship one task over the uncongested LAN
    energy_per_task -- Wh consumed by processing one task
    energy_budgets  -- per-slot energy budget of each SBS, Wh
    energy_cap      -- hard per-slot energy cap, Wh (checked post hoc)
    delay_cap       -- hard per-slot delay-cost cap per SBS, sec (checked post hoc)
    control_v       -- delay weight of the drift-plus-penalty objective
    slot_duration   -- seconds per decision slot
    """

    service_rates: np.ndarray
    lan_delay: float
    energy_per_task: float
    energy_budgets: np.ndarray
    energy_cap: float
    delay_cap: float
    control_v: float
    slot_duration: float

    def __post_init__(self):
        mu = np.asarray(self.service_rates, dtype=float)
        budgets = np.asarray(self.energy_budgets, dtype=float)
        object.__setattr__(self, "service_rates", mu)
        object.__setattr__(self, "energy_budgets", budgets)
        if mu.ndim != 1 or mu.size == 0:
            raise ParameterError("service_rates must be a non-empty vector")
        if np.any(mu <= 0):
            raise ParameterError("service rates must be positive")
        if budgets.shape != mu.shape:
            raise ParameterError("energy_budgets must match service_rates in length")
        if self.lan_delay <= 0:
            raise ParameterError("lan_delay must be positive")
        if self.energy_per_task <= 0:
            raise ParameterError("energy_per_task must be positive")
        if self.control_v < 0:
            raise ParameterError("control_v must be nonnegative")
        if self.slot_duration <= 0:
            raise ParameterError("slot_duration must be positive")
        if np.any(budgets > self.energy_cap):
            raise ParameterError("per-slot budgets cannot exceed the hard energy cap")

    @property
    def n_sbs(self) -> int:
        return self.service_rates.size

    @property
    def lan_capacity(self) -> float:
        """Maximum stable LAN traffic, tasks/sec."""
        return 1.0 / self.lan_delay

    def deficit_price(self, deficit: np.ndarray) -> np.ndarray:
        """Marginal energy cost of one extra task/sec, weighted by the deficit queue.

        This is the coefficient multiplying post-offloading workload in the
        per-slot objective: kappa * q_i * slot_duration.
        """
        return self.energy_per_task * np.asarray(deficit, dtype=float) * self.slot_duration


@dataclass(frozen=True, eq=False)
class SlotState:
    """Per-slot randomness observed before the offloading decision.

    arrivals          -- pre-offloading workload phi_i, tasks/sec
    uplink_delay_cost -- decision-independent UE-to-SBS delay cost, sec
    tx_energy         -- decision-independent downlink transmission energy, Wh
    deficit           -- energy deficit queues q_i at the start of the slot, Wh
    slot_index        -- slot counter t
    """

    arrivals: np.ndarray
    uplink_delay_cost: np.ndarray
    tx_energy: np.ndarray
    deficit: np.ndarray
    slot_index: int = 0

    def __post_init__(self):
        for name in ("arrivals", "uplink_delay_cost", "tx_energy", "deficit"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.arrivals < 0) or np.any(self.deficit < 0):
            raise ParameterError("arrivals and deficit queues must be nonnegative")
        if np.any(self.uplink_delay_cost < 0) or np.any(self.tx_energy < 0):
            raise ParameterError("uplink delay and tx energy must be nonnegative")

    @property
    def n_sbs(self) -> int:
        return self.arrivals.size

    def with_arrivals(self, arrivals: np.ndarray) -> "SlotState":
        """Copy of this slot with clamped arrivals; uplink delay scales with
        the served fraction (it is linear in the per-UE task rates)."""
        arrivals = np.asarray(arrivals, dtype=float)
        old = np.where(self.arrivals > 0, self.arrivals, 1.0)
        scale = np.where(self.arrivals > 0, arrivals / old, 0.0)
        return SlotState(
            arrivals=arrivals,
            uplink_delay_cost=self.uplink_delay_cost * scale,
            tx_energy=self.tx_energy,
            deficit=self.deficit,
            slot_index=self.slot_index,
        )

    def with_deficit(self, deficit: np.ndarray) -> "SlotState":
        return SlotState(
            arrivals=self.arrivals,
            uplink_delay_cost=self.uplink_delay_cost,
            tx_energy=self.tx_energy,
            deficit=np.asarray(deficit, dtype=float),
            slot_index=self.slot_index,
        )


SOURCE = "source"
NEUTRAL = "neutral"
SINK = "sink"


@dataclass(frozen=True, eq=False)
class OffloadProfile:
    """An N x N routing matrix: row i spreads SBS i's arrivals over peers.

    beta[i, j] is the rate (tasks/sec) of SBS i's own arrivals processed
    at SBS j; beta[i, i] is the retained rate.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise ParameterError("beta must be a square matrix")
        object.__setattr__(self, "beta", beta)

    @property
    def n_sbs(self) -> int:
        return self.beta.shape[0]

    @property
    def served_arrivals(self) -> np.ndarray:
        """Row sums: the arrival mass this profile actually routes."""
        return self.beta.sum(axis=1)

    @property
    def post_workloads(self) -> np.ndarray:
        """omega_i: total workload processed at each SBS (column sums)."""
        return self.beta.sum(axis=0)

    @property
    def outbound(self) -> np.ndarray:
        """lambda_i: traffic each SBS pushes into the LAN (off-diagonal row sums)."""
        return self.served_arrivals - np.diag(self.beta)

    @property
    def lan_traffic(self) -> float:
        return float(self.outbound.sum())

    def validate(self, cfg: NetworkConfig, arrivals: np.ndarray | None = None,
                 margin: float = STABILITY_MARGIN) -> None:
        """Raise FeasibilityError naming the first violated condition."""
        beta = self.beta
        if np.any(beta < -ABS_TOL):
            raise FeasibilityError("positivity: beta has negative entries")
        if arrivals is not None:
            arrivals = np.asarray(arrivals, dtype=float)
            row = self.served_arrivals
            if np.any(np.abs(row - arrivals) > REL_TOL * np.maximum(1.0, arrivals) + ABS_TOL):
                raise FeasibilityError("conservation: row sums do not match arrivals")
        omega = self.post_workloads
        limit = (1.0 - margin) * cfg.service_rates
        if np.any(omega > limit * (1.0 + REL_TOL) + ABS_TOL):
            raise FeasibilityError("stability: post-offloading workload exceeds service rate margin")
        lam_limit = (1.0 - margin) * cfg.lan_capacity
        if self.lan_traffic > lam_limit * (1.0 + REL_TOL) + ABS_TOL:
            raise FeasibilityError("lan stability: LAN traffic exceeds capacity margin")


@dataclass(frozen=True, eq=False)
class Allocation:
    """Reduced decision: post-offloading workloads and the LAN traffic level.

    arrivals are the served pre-offloading workloads this allocation is
    balanced against (mass conservation: sum(post_workloads) == sum(arrivals)).
    multiplier is the equalized post-offloading marginal computation cost of
    the sink set; congestion_marginal is the marginal congestion delay at
    lan_traffic (both are kept for certificate checks).
    """

    post_workloads: np.ndarray
    lan_traffic: float
    categories: tuple
    arrivals: np.ndarray
    multiplier: float = float("nan")
    congestion_marginal: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "post_workloads", np.asarray(self.post_workloads, dtype=float))
        object.__setattr__(self, "arrivals", np.asarray(self.arrivals, dtype=float))
        object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def n_sbs(self) -> int:
        return self.post_workloads.size


# --- closed-form cost operations ---------------------------------------------


def downlink_rate(tx_power: float, channel_gain: float, noise_power: float,
                  bandwidth: float) -> float:
    """Shannon rate of a wireless link, bits/sec."""
    if tx_power <= 0 or channel_gain <= 0 or noise_power <= 0 or bandwidth <= 0:
        raise ParameterError("rate inputs must be positive")
    return bandwidth * np.log2(1.0 + tx_power * channel_gain / noise_power)


def congestion_delay(lam: float, tau: float) -> float:
    """Expected per-task LAN delay at traffic ``lam``: tau / (1 - tau*lam)."""
    if tau <= 0:
        raise ParameterError("tau must be positive")
    if lam < 0 or lam * tau >= 1.0:
        raise DomainError(f"LAN traffic {lam} outside stable region [0, {1.0 / tau})")
    return tau / (1.0 - tau * lam)


def computation_delay(omega: float, mu: float) -> float:
    """Expected per-task service delay of an M/M/1 server: 1 / (mu - omega)."""
    if omega < 0 or omega >= mu:
        raise DomainError(f"workload {omega} outside stable region [0, {mu})")
    return 1.0 / (mu - omega)


def marginal_comp_delay(omega, mu):
    """d(omega) = mu / (mu - omega)^2, the derivative of omega * computation_delay."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0) or np.any(omega >= mu):
        raise DomainError("workload outside stable region")
    out = mu / (mu - omega) ** 2
    return float(out) if out.ndim == 0 else out

def inverse_marginal_comp_delay(y, mu):
    """Workload at which the marginal computation delay equals ``y``.

    Inverse of marginal_comp_delay: mu - sqrt(mu / y), valid for y >= 1/mu.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 1.0 / mu):
        raise DomainError("marginal delay below the idle level 1/mu")
    out = mu - np.sqrt(mu / y)
    return float(out) if out.ndim == 0 else out


def marginal_congestion_delay(lam, tau):
    """g(lam) = tau / (1 - tau*lam)^2, the derivative of lam * congestion_delay."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam * tau >= 1.0):
        raise DomainError("LAN traffic outside stable region")
    out = tau / (1.0 - tau * lam) ** 2
    return float(out) if out.ndim == 0 else out


def delay_components(profile: OffloadProfile, cfg: NetworkConfig,
                     st: SlotState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-SBS delay cost split into (computation, congestion, communication).

    Computation: each routed flow beta_ij pays the expected service delay of
    its destination.  Congestion: each SBS's outbound traffic pays the shared
    LAN delay.  Communication: the decision-independent uplink cost.
    """
    beta = profile.beta
    omega = profile.post_workloads
    mu = cfg.service_rates
    if np.any(omega >= mu):
        raise FeasibilityError("stability: post-offloading workload exceeds service rate")
    lam = profile.lan_traffic
    if lam * cfg.lan_delay >= 1.0:
        raise FeasibilityError("lan stability: LAN traffic at or above capacity")
    service = 1.0 / (mu - omega)
    comp = beta @ service
    cong = profile.outbound * congestion_delay(lam, cfg.lan_delay)
    comm = st.uplink_delay_cost.copy()
    return comp, cong, comm


def sbs_delay_cost(i: int, profile: OffloadProfile, cfg: NetworkConfig,
                   st: SlotState) -> float:
    """Total delay cost of SBS i: routed service delays + congestion + uplink."""
    comp, cong, comm = delay_components(profile, cfg, st)
    return float(comp[i] + cong[i] + comm[i])


def energies(profile: OffloadProfile, cfg: NetworkConfig, st: SlotState) -> np.ndarray:
    """Per-SBS slot energy: transmission energy + computation energy, Wh."""
    omega = profile.post_workloads
    return st.tx_energy + cfg.energy_per_task * omega * cfg.slot_duration


def sbs_energy(i: int, profile: OffloadProfile, cfg: NetworkConfig,
               st: SlotState) -> float:
    return float(energies(profile, cfg, st)[i])


def no_offload_profile(arrivals: np.ndarray) -> OffloadProfile:
    """Everyone retains their own arrivals."""
    return OffloadProfile(np.diag(np.asarray(arrivals, dtype=float)))
