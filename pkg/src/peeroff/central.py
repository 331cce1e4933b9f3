"""Centralized per-slot solver: marginal-cost water levels via binary search.

The per-slot problem reduces to choosing post-offloading workloads omega
and the LAN traffic lambda.  At the optimum the SBSs split into sinks
(receive workload until their marginal cost rises to a common water level
alpha), neutrals (keep exactly their own arrivals), and sources (shed
workload until their marginal cost falls to alpha plus the marginal LAN
congestion cost).  The water level is pinned by flow balance: total sink
inbound equals total source outbound.  That balance gap is monotone in
alpha, so a scalar binary search solves the slot exactly.

A slow-but-independent convex minimizer (projected subgradient plus a
pairwise golden-section polish over the same reduced space) is provided
as ``brute_force_oracle`` for desk-scale validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    STABILITY_MARGIN,
    Allocation,
    NetworkConfig,
    OffloadProfile,
    ParameterError,
    SINK,
    SOURCE,
    NEUTRAL,
    SlotState,
    SolverError,
    congestion_delay,
    marginal_comp_delay,
    marginal_congestion_delay,
)

FLOW_TOL = 1e-6          # tasks/sec tolerance on the flow-balance gap
MAX_BISECT_ITERS = 200   # each iteration halves the multiplier bracket


def pre_offloading_macc(cfg: NetworkConfig, st: SlotState) -> np.ndarray:
    """Marginal cost of the last retained task at each SBS before offloading.

    xi_i = V * d_i(phi_i) + kappa * q_i * slot_duration.  An SBS whose
    arrivals reach its service rate gets +inf and can only act as a source.
    """
    mu = cfg.service_rates
    phi = st.arrivals
    price = cfg.deficit_price(st.deficit)
    xi = np.full(cfg.n_sbs, np.inf)
    ok = phi < mu
    xi[ok] = cfg.control_v * mu[ok] / (mu[ok] - phi[ok]) ** 2 + price[ok]
    return xi


@dataclass(frozen=True, eq=False)
class FlowBalanceState:
    """One evaluation of the categorization at a trial water level."""

    alpha: float
    omega: np.ndarray
    sinks: tuple
    sources: tuple
    neutrals: tuple
    lam_sink: float        # inbound to sinks (free SBSs only)
    lam_source: float      # outbound from sources (free SBSs only)
    fixed_in: float        # inbound pinned by the caller (capped solves)
    fixed_out: float       # outbound pinned by the caller
    congestion_marginal: float

    @property
    def gap(self) -> float:
        return (self.lam_sink + self.fixed_in) - (self.lam_source + self.fixed_out)

    @property
    def lan_traffic(self) -> float:
        return self.lam_source + self.fixed_out


def categorize(alpha: float, lam_guess: float | None, xi: np.ndarray,
               cfg: NetworkConfig, st: SlotState,
               upper_bounds: np.ndarray | None = None,
               pinned: np.ndarray | None = None,
               pinned_omega: np.ndarray | None = None) -> FlowBalanceState:
    """Split SBSs into sinks / neutrals / sources at a trial water level.

    Sinks are filled first; unless the caller supplies ``lam_guess``, their
    total inbound becomes the LAN-traffic level at which the marginal
    congestion cost is evaluated, and sources are then classified against
    alpha plus that margin.  ``upper_bounds`` caps how far a sink may be
    filled; ``pinned`` marks SBSs whose workload is fixed at
    ``pinned_omega`` and excluded from the balance.
    """
    mu = cfg.service_rates
    phi = st.arrivals
    v = cfg.control_v
    price = cfg.deficit_price(st.deficit)
    n = cfg.n_sbs
    if upper_bounds is None:
        upper_bounds = (1.0 - STABILITY_MARGIN) * mu
    if pinned is None:
        pinned = np.zeros(n, dtype=bool)
        pinned_omega = np.zeros(n)

    omega = phi.copy()
    sinks, sources, neutrals = [], [], []

    # Sinks: pre-offloading marginal cost strictly below the water level.
    for i in np.flatnonzero(~pinned):
        if xi[i] < alpha:
            level = (alpha - price[i]) / v
            if level < 1.0 / mu[i]:
                # Water level below the idle marginal cost: no inbound flow.
                neutrals.append(i)
                continue
            fill = min(mu[i] - np.sqrt(mu[i] / level), upper_bounds[i])
            if fill > phi[i]:
                sinks.append(i)
                omega[i] = fill
            else:
                neutrals.append(i)

    fixed_in = float(np.sum(np.maximum(pinned_omega[pinned] - phi[pinned], 0.0)))
    fixed_out = float(np.sum(np.maximum(phi[pinned] - pinned_omega[pinned], 0.0)))
    lam_sink = float(sum(omega[i] - phi[i] for i in sinks))

    # Saturate the sink inflow at the LAN stability margin instead of letting
    # the congestion marginal jump to infinity; the balance gap stays
    # continuous and monotone in alpha, and the margin still binds.
    lan_limit = (1.0 - STABILITY_MARGIN) * cfg.lan_capacity
    room = max(lan_limit - fixed_in, 0.0)
    if lam_sink > room:
        scale = room / lam_sink if lam_sink > 0 else 0.0
        for i in sinks:
            omega[i] = phi[i] + (omega[i] - phi[i]) * scale
        lam_sink = room
    lam_level = lam_sink + fixed_in if lam_guess is None else lam_guess
    g = marginal_congestion_delay(min(lam_level, lan_limit), cfg.lan_delay)

    # Sources: marginal cost above the water level plus the congestion margin.
    threshold = alpha + v * g
    for i in np.flatnonzero(~pinned):
        if i in sinks or i in neutrals:
            continue
        if xi[i] > threshold:
            level = (threshold - price[i]) / v
            retained = 0.0
            if np.isfinite(level) and level > 0:
                retained = max(mu[i] - np.sqrt(mu[i] / level), 0.0)
            omega[i] = retained
            sources.append(i)
        else:
            neutrals.append(i)

    omega[pinned] = pinned_omega[pinned]
    lam_source = float(sum(phi[i] - omega[i] for i in sources))
    return FlowBalanceState(
        alpha=alpha,
        omega=omega,
        sinks=tuple(sinks),
        sources=tuple(sources),
        neutrals=tuple(sorted(neutrals)),
        lam_sink=lam_sink,
        lam_source=lam_source,
        fixed_in=fixed_in,
        fixed_out=fixed_out,
        congestion_marginal=g,
    )


def _no_offload_allocation(cfg: NetworkConfig, st: SlotState, alpha: float) -> Allocation:
    return Allocation(
        post_workloads=st.arrivals.copy(),
        lan_traffic=0.0,
        categories=(NEUTRAL,) * cfg.n_sbs,
        arrivals=st.arrivals.copy(),
        multiplier=alpha,
        congestion_marginal=marginal_congestion_delay(0.0, cfg.lan_delay),
    )


def _state_to_allocation(state: FlowBalanceState, cfg: NetworkConfig,
                         st: SlotState) -> Allocation:
    """Rebalance the residual flow gap and package the solution.

    Sink inbound is rescaled to match source outbound exactly, so mass
    conservation holds to floating precision before a profile is realized.
    """
    omega = state.omega.copy()
    phi = st.arrivals
    lam_in = state.lam_sink + state.fixed_in
    lam_out = state.lam_source + state.fixed_out
    if lam_in > 0 and abs(lam_in - lam_out) > 0:
        scale = lam_out / lam_in
        for i in state.sinks:
            omega[i] = phi[i] + (omega[i] - phi[i]) * scale
    elif lam_in == 0.0:
        # No sinks can absorb anything; sources must retain their load.
        for i in state.sources:
            omega[i] = phi[i]
        lam_out = state.fixed_out

    categories = []
    for i in range(cfg.n_sbs):
        if omega[i] > phi[i] + 1e-12:
            categories.append(SINK)
        elif omega[i] < phi[i] - 1e-12:
            categories.append(SOURCE)
        else:
            categories.append(NEUTRAL)
    lam = float(np.sum(np.maximum(phi - omega, 0.0)))
    return Allocation(
        post_workloads=omega,
        lan_traffic=lam,
        categories=tuple(categories),
        arrivals=phi.copy(),
        multiplier=state.alpha,
        congestion_marginal=marginal_congestion_delay(
            min(lam, (1.0 - STABILITY_MARGIN) * cfg.lan_capacity), cfg.lan_delay),
    )


def _bisect_flow_balance(cfg: NetworkConfig, st: SlotState, xi: np.ndarray,
                         flow_tol: float, max_iters: int,
                         upper_bounds: np.ndarray | None = None,
                         pinned: np.ndarray | None = None,
                         pinned_omega: np.ndarray | None = None) -> FlowBalanceState:
    free = ~pinned if pinned is not None else np.ones(cfg.n_sbs, dtype=bool)
    finite = xi[free & np.isfinite(xi)]
    if finite.size == 0:
        raise SolverError("no SBS with a finite marginal cost to anchor the search")
    lo = float(finite.min())
    hi = float(finite.max())
    scale = max(1.0, abs(hi))
    alpha_tol = 1e-12 * scale

    def evaluate(alpha):
        return categorize(alpha, None, xi, cfg, st, upper_bounds, pinned, pinned_omega)

    # Widen the top of the bracket until the balance gap changes sign; the
    # initial spread of finite marginal costs is not always enough when some
    # SBS is forced to shed (infinite pre-offloading marginal cost) or when
    # caps keep sinks from absorbing at low water levels.
    hi = max(hi, lo + scale * 1e-6)
    top = evaluate(hi)
    expansions = 0
    while top.gap < 0 and expansions < 200:
        hi = lo + 2.0 * (hi - lo)
        top = evaluate(hi)
        expansions += 1
    if top.gap < 0:
        raise SolverError("flow balance bracket expansion failed")

    best = top
    for _ in range(max_iters):
        alpha = 0.5 * (lo + hi)
        state = evaluate(alpha)
        if abs(state.gap) < abs(best.gap):
            best = state
        if state.gap > 0:
            hi = alpha
        else:
            lo = alpha
        if abs(state.gap) < flow_tol and (hi - lo) <= alpha_tol:
            break
    final = evaluate(0.5 * (lo + hi))
    if abs(final.gap) < abs(best.gap):
        best = final
    if abs(best.gap) >= max(flow_tol, 1e-9 * max(1.0, best.lan_traffic)):
        raise SolverError(
            f"flow balance did not close: gap={best.gap:.3e} at alpha={best.alpha:.6e}")
    return best


def solve_per_slot_centralized(cfg: NetworkConfig, st: SlotState,
                               flow_tol: float = FLOW_TOL,
                               max_iters: int = MAX_BISECT_ITERS) -> Allocation:
    """Optimal per-slot workload allocation via water-level binary search."""
    if cfg.control_v <= 0:
        raise ParameterError("the per-slot solver needs a positive delay weight")
    margin_limit = (1.0 - STABILITY_MARGIN) * cfg.service_rates
    if np.any(st.arrivals > margin_limit * (1 + 1e-12)):
        raise SolverError("infeasible slot: arrivals exceed the service margin; "
                          "clamp them before solving")
    xi = pre_offloading_macc(cfg, st)
    g0 = cfg.control_v * marginal_congestion_delay(0.0, cfg.lan_delay)
    if xi.min() + g0 >= xi.max():
        # Offloading one task would already cost more at the cheapest SBS
        # than it saves at the most loaded one.
        return _no_offload_allocation(cfg, st, alpha=float(xi.min()))
    state = _bisect_flow_balance(cfg, st, xi, flow_tol, max_iters)
    return _state_to_allocation(state, cfg, st)


def solve_with_caps(cfg: NetworkConfig, st: SlotState, caps: np.ndarray,
                    flow_tol: float = FLOW_TOL,
                    max_iters: int = MAX_BISECT_ITERS) -> tuple[Allocation, float]:
    """Delay-optimal allocation under per-SBS workload caps.

    Used for hard per-slot energy budgets: cap_i is the largest workload
    SBS i may process this slot.  Arrival mass that no placement can serve
    (caps plus LAN capacity exhausted) is dropped first, proportionally to
    each overloaded SBS's excess.  Returns (allocation, dropped rate).
    """
    mu = cfg.service_rates
    ub = np.minimum((1.0 - STABILITY_MARGIN) * mu, np.maximum(caps, 0.0))
    phi = st.arrivals.copy()

    forced = np.maximum(phi - ub, 0.0)
    total_forced = forced.sum()
    dropped = 0.0
    if total_forced > 0:
        slack = float(np.sum(np.maximum(ub - phi, 0.0)))
        lan_room = (1.0 - STABILITY_MARGIN) * cfg.lan_capacity * (1.0 - 1e-9)
        moveable = min(total_forced, slack * (1.0 - 1e-9), lan_room)
        dropped = total_forced - moveable
        if dropped > 0:
            phi = phi - forced * (dropped / total_forced)
    work_st = st if dropped == 0.0 else st.with_arrivals(phi)

    xi = pre_offloading_macc(cfg, work_st)
    pinned = np.zeros(cfg.n_sbs, dtype=bool)
    pinned_omega = np.zeros(cfg.n_sbs)

    for _ in range(cfg.n_sbs + 1):
        free = ~pinned
        finite_xi = xi[free]
        if free.sum() == 0:
            state = categorize(0.0, None, xi, cfg, work_st, ub, pinned, pinned_omega)
            break
        g0 = cfg.control_v * marginal_congestion_delay(0.0, cfg.lan_delay)
        no_offload_ok = (np.min(finite_xi) + g0 >= np.max(finite_xi)) \
            and not np.any(np.isinf(finite_xi)) and pinned.sum() == 0
        if no_offload_ok and np.all(phi[free] <= ub[free]):
            alloc = _no_offload_allocation(cfg, work_st, alpha=float(np.min(finite_xi)))
            return alloc, dropped
        state = _bisect_flow_balance(cfg, work_st, xi, flow_tol, max_iters,
                                     ub, pinned, pinned_omega)
        violators = [i for i in np.flatnonzero(free)
                     if state.omega[i] > ub[i] + 1e-9]
        if not violators:
            break
        for i in violators:
            pinned[i] = True
            pinned_omega[i] = ub[i]
    alloc = _state_to_allocation(state, cfg, work_st)
    return alloc, dropped


def realize_profile(alloc: Allocation, st: SlotState | None = None) -> OffloadProfile:
    """Build a concrete routing matrix that realizes an allocation.

    Canonical construction: sort sources by surplus and sinks by deficit,
    both descending, and match the largest remaining pair first.  Any
    matrix with these row/column totals is equally optimal; this one is
    deterministic.
    """
    phi = alloc.arrivals if alloc.arrivals.size else st.arrivals
    omega = alloc.post_workloads
    n = phi.size
    surplus = np.maximum(phi - omega, 0.0)
    deficit = np.maximum(omega - phi, 0.0)
    total_s, total_d = surplus.sum(), deficit.sum()
    if abs(total_s - total_d) > 1e-9 * max(1.0, total_s, total_d):
        raise SolverError(
            f"allocation imbalance: surplus {total_s:.12e} vs deficit {total_d:.12e}")

    beta = np.diag(np.minimum(phi, omega))
    sources = sorted(np.flatnonzero(surplus > 1e-15), key=lambda i: (-surplus[i], i))
    sinks = sorted(np.flatnonzero(deficit > 1e-15), key=lambda j: (-deficit[j], j))
    s_rem = surplus.copy()
    d_rem = deficit.copy()
    si = ki = 0
    while si < len(sources) and ki < len(sinks):
        i, j = sources[si], sinks[ki]
        flow = min(s_rem[i], d_rem[j])
        beta[i, j] += flow
        s_rem[i] -= flow
        d_rem[j] -= flow
        if s_rem[i] <= 1e-15:
            si += 1
        if d_rem[j] <= 1e-15:
            ki += 1
    # Absorb the (sub-1e-9) residual into retentions so each row conserves
    # its arrivals exactly.
    row = beta.sum(axis=1)
    np.fill_diagonal(beta, np.diag(beta) + (phi - row))
    if np.any(np.diag(beta) < -1e-9):
        raise SolverError("profile realization produced a negative retention")
    np.fill_diagonal(beta, np.maximum(np.diag(beta), 0.0))
    return OffloadProfile(beta)


def kkt_residual(alloc: Allocation, cfg: NetworkConfig, st: SlotState,
                 upper_bounds: np.ndarray | None = None) -> float:
    """Largest relative violation of the optimality certificate.

    Sinks must sit exactly at the water level, interior sources at the
    water level plus the congestion margin, neutrals in between, and the
    allocation must conserve mass.  Cap-saturated sinks and fully drained
    sources only need one-sided conditions.
    """
    mu = cfg.service_rates
    v = cfg.control_v
    price = cfg.deficit_price(st.deficit)
    phi = alloc.arrivals
    omega = alloc.post_workloads
    alpha = alloc.multiplier
    lam = alloc.lan_traffic
    if upper_bounds is None:
        upper_bounds = (1.0 - STABILITY_MARGIN) * mu

    g = marginal_congestion_delay(min(lam, (1 - STABILITY_MARGIN) * cfg.lan_capacity),
                                  cfg.lan_delay)
    high = alpha + v * g
    scale = max(abs(alpha), 1e-12)
    worst = abs(np.sum(omega) - np.sum(phi)) / max(1.0, np.sum(phi))
    for i in range(alloc.n_sbs):
        macc = v * marginal_comp_delay(min(omega[i], mu[i] * (1 - 1e-15)), mu[i]) + price[i]
        cat = alloc.categories[i]
        if cat == SINK:
            if omega[i] >= upper_bounds[i] - 1e-9:
                worst = max(worst, max(0.0, alpha - macc) / scale)
            else:
                worst = max(worst, abs(macc - alpha) / scale)
        elif cat == SOURCE:
            if omega[i] <= 1e-12:
                worst = max(worst, max(0.0, high - macc) / max(abs(high), 1e-12))
            elif omega[i] >= upper_bounds[i] - 1e-9:
                worst = max(worst, max(0.0, macc - high) / max(abs(high), 1e-12))
            else:
                worst = max(worst, abs(macc - high) / max(abs(high), 1e-12))
        else:
            xi_i = v * marginal_comp_delay(min(phi[i], mu[i] * (1 - 1e-15)), mu[i]) + price[i]
            worst = max(worst, max(0.0, alpha - xi_i) / scale)
            worst = max(worst, max(0.0, xi_i - high) / max(abs(high), 1e-12))
    return float(worst)


# --- independent validation oracle -------------------------------------------


def _objective(omega: np.ndarray, cfg: NetworkConfig, st: SlotState) -> float:
    mu = cfg.service_rates
    lam = float(np.sum(np.maximum(st.arrivals - omega, 0.0)))
    if lam * cfg.lan_delay >= 1.0 - STABILITY_MARGIN:
        return np.inf
    if np.any(omega >= mu):
        return np.inf
    price = cfg.deficit_price(st.deficit)
    comp = np.sum(cfg.control_v * omega / (mu - omega) + price * omega)
    cong = cfg.control_v * lam * congestion_delay(lam, cfg.lan_delay)
    return float(comp + cong)


def _project_box_simplex(y: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                         total: float) -> np.ndarray:
    """Euclidean projection onto {lb <= x <= ub, sum(x) = total} by bisection."""
    lo = float(np.min(y - ub)) - 1.0
    hi = float(np.max(y - lb)) + 1.0
    for _ in range(60):
        theta = 0.5 * (lo + hi)
        x = np.clip(y - theta, lb, ub)
        if x.sum() > total:
            lo = theta
        else:
            hi = theta
    return np.clip(y - 0.5 * (lo + hi), lb, ub)


def _line_minimum(f1d, lo: float, hi: float) -> float:
    """Golden-section minimum of a convex 1-D function with f(0) finite.

    The effective domain is an interval containing 0; endpoints sitting in
    the infinite region are first shrunk toward 0, otherwise the golden
    comparisons stall on the +inf plateau.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(80):
        if np.isfinite(f1d(lo)):
            break
        lo *= invphi
    for _ in range(80):
        if np.isfinite(f1d(hi)):
            break
        hi *= invphi
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f1d(c), f1d(d)
    for _ in range(90):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f1d(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f1d(d)
    return 0.5 * (a + b)


def _pairwise_polish(omega: np.ndarray, cfg: NetworkConfig, st: SlotState,
                     lb: np.ndarray, ub: np.ndarray, sweeps: int = 200) -> np.ndarray:
    """Golden-section descent over all mass-exchange directions e_i - e_j."""
    n = omega.size
    omega = omega.copy()
    f_cur = _objective(omega, cfg, st)
    for _ in range(sweeps):
        improved = 0.0
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                lo = max(lb[i] - omega[i], omega[j] - ub[j])
                hi = min(ub[i] - omega[i], omega[j] - lb[j])
                if hi - lo <= 1e-15:
                    continue

                def f1d(delta):
                    trial = omega.copy()
                    trial[i] += delta
                    trial[j] -= delta
                    return _objective(trial, cfg, st)

                delta = _line_minimum(f1d, lo, hi)
                f_new = f1d(delta)
                if f_new < f_cur - 1e-15:
                    omega[i] += delta
                    omega[j] -= delta
                    improved += f_cur - f_new
                    f_cur = f_new
        if improved <= 1e-12 * max(1.0, abs(f_cur)):
            break
    return omega


def brute_force_oracle(cfg: NetworkConfig, st: SlotState,
                       upper_bounds: np.ndarray | None = None,
                       iters: int = 300) -> Allocation:
    """Direct convex minimization over the reduced decision space.

    Projected subgradient with diminishing steps, then a pairwise
    golden-section polish.  Desk-scale validation only (small N); it
    shares no code path with the binary-search solver.
    """
    if cfg.n_sbs > 5:
        raise ParameterError("the validation oracle is restricted to N <= 5")
    mu = cfg.service_rates
    phi = st.arrivals
    price = cfg.deficit_price(st.deficit)
    v = cfg.control_v
    lb = np.zeros(cfg.n_sbs)
    ub = (1.0 - STABILITY_MARGIN) * mu
    if upper_bounds is not None:
        ub = np.minimum(ub, np.maximum(upper_bounds, 0.0))
    total = float(phi.sum())
    if total > ub.sum():
        raise SolverError("oracle instance infeasible: arrivals exceed total capacity")

    omega = _project_box_simplex(phi.copy(), lb, ub, total)
    best = omega.copy()
    f_best = _objective(omega, cfg, st)
    radius = 0.25 * max(total, 1.0)
    for k in range(iters):
        lam = float(np.sum(np.maximum(phi - omega, 0.0)))
        g = marginal_congestion_delay(min(lam, (1 - STABILITY_MARGIN) * cfg.lan_capacity),
                                      cfg.lan_delay)
        grad = v * marginal_comp_delay(np.minimum(omega, mu * (1 - 1e-12)), mu) + price
        grad = grad - v * g * (omega < phi)
        norm = float(np.linalg.norm(grad))
        if norm == 0:
            break
        step = radius / (np.sqrt(k + 1.0) * norm)
        omega = _project_box_simplex(omega - step * grad, lb, ub, total)
        f = _objective(omega, cfg, st)
        if f < f_best:
            f_best, best = f, omega.copy()

    best = _pairwise_polish(best, cfg, st, lb, ub)
    if not np.isfinite(_objective(best, cfg, st)):
        raise SolverError("oracle failed to find a finite-cost point")

    categories = []
    for i in range(cfg.n_sbs):
        if best[i] > phi[i] + 1e-9:
            categories.append(SINK)
        elif best[i] < phi[i] - 1e-9:
            categories.append(SOURCE)
        else:
            categories.append(NEUTRAL)
    lam = float(np.sum(np.maximum(phi - best, 0.0)))
    return Allocation(
        post_workloads=best,
        lan_traffic=lam,
        categories=tuple(categories),
        arrivals=phi.copy(),
        multiplier=float("nan"),
        congestion_marginal=marginal_congestion_delay(
            min(lam, (1 - STABILITY_MARGIN) * cfg.lan_capacity), cfg.lan_delay),
    )
