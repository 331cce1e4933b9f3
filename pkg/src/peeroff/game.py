"""Autonomous peer offloading as a best-response game.

Each SBS minimizes only its own cost: the delay its routed tasks incur
(at itself, at peers, and on the LAN) plus its deficit-priced energy for
the workload it retains.  A best response has the same water-level
structure as the centralized solve, but against pair-specific marginal
costs built from residual capacities (what is left of a peer after
everyone else's flows), and ignoring peers' energy deficits.  Round-robin
best responses run until the total cost stops moving, which is a Nash
equilibrium; the gap between that equilibrium and the centralized optimum
is the per-slot price of anarchy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lyapunov import per_slot_objective
from .model import (
    STABILITY_MARGIN,
    DomainError,
    NetworkConfig,
    OffloadProfile,
    ParameterError,
    SlotState,
    SolverError,
    congestion_delay,
)

FLOW_TOL = 1e-6
MAX_BISECT_ITERS = 200
# Heavily congested slots (several margin-clamped stations negotiating a
# near-saturated LAN) contract slowly and can need a four-digit round count.
MAX_ROUNDS = 2000


@dataclass
class GameState:
    """Converged (or last) state of the round-robin best-response dynamics."""

    profile: OffloadProfile
    rounds: int
    last_total_cost_change: float
    per_sbs_costs: np.ndarray

    @property
    def total_cost(self) -> float:
        return float(self.per_sbs_costs.sum())


def pair_capacities(i: int, beta: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Residual service rate of every SBS from player i's point of view.

    mu_ij = mu_j minus everything the other players currently route to j
    (including j's own retention when j != i).
    """
    inbound_others = beta.sum(axis=0) - beta[i, :]
    return cfg.service_rates - inbound_others


def lan_headroom(i: int, beta: np.ndarray, cfg: NetworkConfig) -> float:
    """Fraction of LAN capacity left once the other players' traffic is in."""
    outbound = beta.sum(axis=1) - np.diag(beta)
    others = float(outbound.sum() - outbound[i])
    return 1.0 - cfg.lan_delay * others


def pair_comp_marginal(i: int, j: int, beta: np.ndarray, cfg: NetworkConfig) -> float:
    """d_ij: marginal delay of pushing one more of i's tasks into SBS j."""
    mu_ij = pair_capacities(i, beta, cfg)[j]
    b = beta[i, j]
    if mu_ij <= 0 or b < 0 or b >= mu_ij:
        raise DomainError(f"residual capacity exhausted for pair ({i}, {j})")
    return float(mu_ij / (mu_ij - b) ** 2)


def pair_cong_marginal(i: int, beta: np.ndarray, cfg: NetworkConfig,
                       lam_i: float | None = None) -> float:
    """g_i: marginal LAN delay of one more offloaded task from SBS i."""
    tau = cfg.lan_delay
    headroom = lan_headroom(i, beta, cfg)
    if headroom <= 0:
        raise DomainError("LAN saturated by the other players")
    if lam_i is None:
        lam_i = float(beta[i, :].sum() - beta[i, i])
    if lam_i < 0 or tau * lam_i >= headroom:
        raise DomainError("own LAN traffic outside the stable region")
    return float(tau * headroom / (headroom - tau * lam_i) ** 2)


def pair_marginals(i: int, j: int, beta: np.ndarray,
                   cfg: NetworkConfig) -> tuple[float, float]:
    """(d_ij at the current flow, g_i at the current own traffic)."""
    return pair_comp_marginal(i, j, beta, cfg), pair_cong_marginal(i, beta, cfg)


def sbs_cost(i: int, profile: OffloadProfile, cfg: NetworkConfig,
             st: SlotState) -> float:
    """Cost of SBS i's own routing row.

    Retained tasks pay the local service delay plus the deficit-priced
    energy; offloaded tasks pay the destination's service delay plus the
    shared LAN delay.  Terms that do not depend on row i (uplink delay,
    transmission energy, the energy of inbound flows) are excluded.
    """
    beta = profile.beta
    omega = profile.post_workloads
    mu = cfg.service_rates
    if np.any(omega >= mu):
        raise DomainError("unstable workload in cost evaluation")
    lam = profile.lan_traffic
    v = cfg.control_v
    price_i = float(cfg.deficit_price(st.deficit)[i])
    dg = congestion_delay(lam, cfg.lan_delay)
    cost = beta[i, i] * (v / (mu[i] - omega[i]) + price_i)
    for j in range(cfg.n_sbs):
        if j != i:
            cost += beta[i, j] * (v / (mu[j] - omega[j]) + v * dg)
    return float(cost)


def marginal_cost_vector(i: int, beta: np.ndarray, cfg: NetworkConfig,
                         st: SlotState) -> np.ndarray:
    """Gradient of sbs_cost with respect to row i."""
    n = cfg.n_sbs
    v = cfg.control_v
    price_i = float(cfg.deficit_price(st.deficit)[i])
    lam_i = float(beta[i, :].sum() - beta[i, i])
    g_i = pair_cong_marginal(i, beta, cfg, lam_i)
    out = np.empty(n)
    for j in range(n):
        d_ij = pair_comp_marginal(i, j, beta, cfg)
        out[j] = v * d_ij + (price_i if j == i else v * g_i)
    return out


def pre_offloading_pmacc(i: int, beta: np.ndarray, cfg: NetworkConfig,
                         st: SlotState) -> np.ndarray:
    """Pair-specific marginal costs from the reset position (retain all).

    Entry j != i is the marginal delay of the first task offloaded to j;
    entry i is the marginal cost of the last retained task if i keeps all
    of its arrivals.  Saturated entries are +inf.
    """
    mu_pair = pair_capacities(i, beta, cfg)
    phi_i = float(st.arrivals[i])
    price_i = float(cfg.deficit_price(st.deficit)[i])
    v = cfg.control_v
    n = cfg.n_sbs
    xi = np.full(n, np.inf)
    for j in range(n):
        if j == i:
            if phi_i < mu_pair[i]:
                xi[i] = v * mu_pair[i] / (mu_pair[i] - phi_i) ** 2 + price_i
        elif mu_pair[j] > STABILITY_MARGIN * cfg.service_rates[j]:
            xi[j] = v / mu_pair[j]
    return xi


def _bisect_best_response(i, cfg, st, mu_pair, headroom, xi, eligible,
                          flow_tol, max_iters):
    """Scalar search for player i's water level; returns (fills, retained)."""
    v = cfg.control_v
    tau = cfg.lan_delay
    phi_i = float(st.arrivals[i])
    price_i = float(cfg.deficit_price(st.deficit)[i])
    mu = cfg.service_rates
    fill_cap = np.maximum(mu_pair - STABILITY_MARGIN * mu, 0.0)
    own_cap = max(mu_pair[i] - STABILITY_MARGIN * mu[i], 0.0)
    lam_cap = (headroom - STABILITY_MARGIN) / tau

    # When inbound flows from others leave less margin capacity than the
    # arrivals, retention is forced below phi_i regardless of marginals.
    forced = phi_i > own_cap

    def evaluate(alpha):
        fills = np.zeros(cfg.n_sbs)
        for j in eligible:
            if xi[j] < alpha:
                level = alpha / v
                if level > 1.0 / mu_pair[j]:
                    fills[j] = min(mu_pair[j] - np.sqrt(mu_pair[j] / level),
                                   fill_cap[j])
        lam_s = float(fills.sum())
        # Saturate at the LAN margin so the balance gap stays continuous.
        if lam_s > lam_cap:
            fills *= lam_cap / lam_s
            lam_s = lam_cap
        g = tau * headroom / (headroom - tau * lam_s) ** 2
        threshold = alpha + v * g
        if forced or xi[i] > threshold:
            level = (threshold - price_i) / v
            retained = 0.0
            if np.isfinite(level) and level > 0:
                retained = max(mu_pair[i] - np.sqrt(mu_pair[i] / level), 0.0)
            retained = min(retained, own_cap, phi_i)
        else:
            retained = phi_i
        return fills, retained, lam_s - (phi_i - retained)

    finite = xi[eligible]
    finite = finite[np.isfinite(finite)]
    lo = float(finite.min())
    hi = float(max(finite.max(), xi[i] if np.isfinite(xi[i]) else finite.max()))
    scale = max(1.0, abs(hi))
    hi = max(hi, lo + 1e-6 * scale)
    fills, retained, gap = evaluate(hi)
    expansions = 0
    while gap < 0 and expansions < 200:
        hi = lo + 2.0 * (hi - lo)
        fills, retained, gap = evaluate(hi)
        expansions += 1
    if gap < 0:
        raise SolverError(f"best response bracket expansion failed for SBS {i}")

    best = (fills, retained, gap)
    alpha_tol = 1e-12 * scale
    for _ in range(max_iters):
        alpha = 0.5 * (lo + hi)
        fills, retained, gap = evaluate(alpha)
        if abs(gap) < abs(best[2]):
            best = (fills, retained, gap)
        if gap > 0:
            hi = alpha
        else:
            lo = alpha
        if abs(gap) < flow_tol and (hi - lo) <= alpha_tol:
            break
    fills, retained, gap = evaluate(0.5 * (lo + hi))
    if abs(gap) >= abs(best[2]):
        fills, retained, gap = best
    if abs(gap) >= max(flow_tol, 1e-9 * max(1.0, phi_i)):
        raise SolverError(f"best response flow balance did not close for SBS {i}: "
                          f"gap={gap:.3e}")
    return fills, retained


def best_response(i: int, profile: OffloadProfile, cfg: NetworkConfig,
                  st: SlotState, flow_tol: float = FLOW_TOL,
                  max_iters: int = MAX_BISECT_ITERS) -> np.ndarray:
    """Row minimizing SBS i's own cost with all other rows held fixed."""
    if cfg.control_v <= 0:
        raise ParameterError("the best response needs a positive delay weight")
    beta = profile.beta
    phi_i = float(st.arrivals[i])
    n = cfg.n_sbs
    retain_row = np.zeros(n)
    retain_row[i] = phi_i
    if phi_i == 0.0:
        return retain_row

    mu_pair = pair_capacities(i, beta, cfg)
    headroom = lan_headroom(i, beta, cfg)
    xi = pre_offloading_pmacc(i, beta, cfg, st)
    eligible = [j for j in range(n) if j != i and np.isfinite(xi[j])]
    if headroom <= STABILITY_MARGIN or not eligible:
        return retain_row
    g0 = cfg.lan_delay / headroom
    xi_peer_min = min(xi[j] for j in eligible)
    if xi_peer_min + cfg.control_v * g0 > xi[i]:
        # Even the cheapest peer plus an empty LAN beats keeping one more
        # task locally; retain everything.
        return retain_row

    fills, retained = _bisect_best_response(
        i, cfg, st, mu_pair, headroom, xi, eligible, flow_tol, max_iters)
    outbound = phi_i - retained
    total_fill = float(fills.sum())
    if total_fill > 0:
        fills = fills * (outbound / total_fill)
    row = fills
    row[i] = phi_i - float(fills.sum())
    if row[i] < -1e-9:
        raise SolverError(f"best response produced negative retention for SBS {i}")
    row[i] = max(row[i], 0.0)
    return row


def round_robin_ne(cfg: NetworkConfig, st: SlotState,
                   eps_conv: float | None = None, max_rounds: int = MAX_ROUNDS,
                   init: OffloadProfile | None = None,
                   flow_tol: float = FLOW_TOL) -> GameState:
    """Iterate best responses in fixed index order until costs stop moving."""
    n = cfg.n_sbs
    beta = init.beta.copy() if init is not None else np.diag(st.arrivals.copy())
    profile = OffloadProfile(beta)
    costs = np.array([sbs_cost(i, profile, cfg, st) for i in range(n)])
    total = float(costs.sum())
    if eps_conv is None:
        eps_conv = 1e-6 * max(total, 1.0)

    change = float("inf")
    for rounds in range(1, max_rounds + 1):
        for i in range(n):
            old_cost = sbs_cost(i, profile, cfg, st)
            new_row = best_response(i, profile, cfg, st, flow_tol)
            beta = profile.beta.copy()
            beta[i, :] = new_row
            candidate = OffloadProfile(beta)
            new_cost = sbs_cost(i, candidate, cfg, st)
            if new_cost > old_cost + 1e-7 * max(1.0, abs(old_cost)):
                raise SolverError(
                    f"best response increased SBS {i}'s cost: "
                    f"{old_cost:.9e} -> {new_cost:.9e}")
            if new_cost < old_cost:
                profile = candidate
        costs = np.array([sbs_cost(i, profile, cfg, st) for i in range(n)])
        new_total = float(costs.sum())
        change = abs(total - new_total)
        total = new_total
        if change < eps_conv:
            profile.validate(cfg, arrivals=st.arrivals)
            return GameState(profile=profile, rounds=rounds,
                             last_total_cost_change=change, per_sbs_costs=costs)
    raise SolverError(
        f"round robin did not converge in {max_rounds} rounds "
        f"(last change {change:.3e}, tolerance {eps_conv:.3e})")


def _random_feasible_row(i, profile, cfg, st, rng):
    """A random row for player i respecting capacity and LAN margins."""
    beta = profile.beta
    n = cfg.n_sbs
    phi_i = float(st.arrivals[i])
    mu_pair = pair_capacities(i, beta, cfg)
    headroom = lan_headroom(i, beta, cfg)
    caps = np.maximum(mu_pair - 2 * STABILITY_MARGIN * cfg.service_rates, 0.0)
    caps = np.minimum(caps, phi_i)
    lan_room = max((headroom - 2 * STABILITY_MARGIN) / cfg.lan_delay, 0.0)

    weights = rng.dirichlet(np.ones(n))
    row = weights * phi_i
    # Push overflow back into retention until every margin holds.
    for j in range(n):
        if j != i and row[j] > caps[j]:
            row[i] += row[j] - caps[j]
            row[j] = caps[j]
    outbound = row.sum() - row[i]
    if outbound > lan_room:
        if outbound > 0:
            shrink = lan_room / outbound
            extra = 0.0
            for j in range(n):
                if j != i:
                    extra += row[j] * (1 - shrink)
                    row[j] *= shrink
            row[i] += extra
    if row[i] > caps[i]:
        return None
    return row


def verify_ne(profile: OffloadProfile, cfg: NetworkConfig, st: SlotState,
              tol: float = 1e-6, rng: np.random.Generator | None = None,
              n_probes: int = 50) -> tuple[bool, float]:
    """Check the equilibrium conditions and measure the best escape.

    For every player the gradient of its cost must not point toward any
    feasible deviation (probed at polytope vertices and random interior
    rows), and rerunning its best response must not find a cost drop
    beyond the tolerance.  Returns (is_equilibrium, worst improvement).
    """
    rng = rng or np.random.default_rng(0)
    n = cfg.n_sbs
    worst_improvement = 0.0
    vi_ok = True
    total_scale = max(1.0, sum(sbs_cost(i, profile, cfg, st) for i in range(n)))
    for i in range(n):
        phi_i = float(st.arrivals[i])
        if phi_i == 0:
            continue
        base_cost = sbs_cost(i, profile, cfg, st)
        scale = max(abs(base_cost), 1.0)
        grad = marginal_cost_vector(i, profile.beta, cfg, st)

        probes = []
        mu_pair = pair_capacities(i, profile.beta, cfg)
        headroom = lan_headroom(i, profile.beta, cfg)
        lan_room = max((headroom - 2 * STABILITY_MARGIN) / cfg.lan_delay, 0.0)
        for j in range(n):
            vertex = np.zeros(n)
            cap = min(phi_i, max(mu_pair[j] - 2 * STABILITY_MARGIN * cfg.service_rates[j], 0.0))
            if j != i:
                cap = min(cap, lan_room)
            vertex[j] = cap
            vertex[i] += phi_i - cap
            if vertex[i] <= mu_pair[i] - STABILITY_MARGIN * cfg.service_rates[i]:
                probes.append(vertex)
        for _ in range(n_probes):
            row = _random_feasible_row(i, profile, cfg, st, rng)
            if row is not None:
                probes.append(row)

        for probe in probes:
            direction = probe - profile.beta[i, :]
            length = float(np.linalg.norm(direction))
            if length < 1e-9 * max(1.0, phi_i):
                continue
            denom = max(float(np.linalg.norm(grad)) * length, 1e-12)
            # A cost-gap of tol leaves first-order residuals of order sqrt(tol).
            if float(grad @ direction) < -np.sqrt(tol) * denom:
                vi_ok = False

        br_row = best_response(i, profile, cfg, st)
        trial = profile.beta.copy()
        trial[i, :] = br_row
        br_cost = sbs_cost(i, OffloadProfile(trial), cfg, st)
        worst_improvement = max(worst_improvement, base_cost - br_cost)

    is_ne = vi_ok and worst_improvement <= tol * total_scale
    return is_ne, float(worst_improvement)


def measure_poa(profile_ne: OffloadProfile, profile_star: OffloadProfile,
                cfg: NetworkConfig, st: SlotState) -> float:
    """Equilibrium-to-optimum ratio of the full per-slot objective."""
    if profile_star is None:
        raise ParameterError("price of anarchy needs the centralized solution")
    num = per_slot_objective(profile_ne, cfg, st).value
    den = per_slot_objective(profile_star, cfg, st).value
    if den <= 0:
        return 1.0
    poa = num / den
    if poa < 1.0 - 1e-9:
        raise SolverError(f"equilibrium beat the centralized optimum: PoA={poa:.12f}")
    return float(poa)
