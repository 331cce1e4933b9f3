"""Experimental world generation: placement, channels, and arrival processes.

A scenario is a deterministic stream of per-slot states derived from one
seed: SBSs are dropped by a Poisson point process over a rectangular
area, UEs are re-scattered every slot and attached to one of their
nearest SBSs, indoor path loss fixes the wireless rates, and one of four
arrival processes drives the per-UE task rates.  Only per-SBS aggregates
survive into the SlotState; per-UE details are transient.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .model import ParameterError, SlotState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadioParams:
    """Wireless constants for rate and energy computations."""

    bandwidth_hz: float = 20e6
    noise_dbm_per_hz: float = -174.0
    ue_tx_power_dbm: float = 10.0
    sbs_tx_power_dbm: float = 20.0
    carrier_mhz: float = 900.0
    loss_coeff: float = 20.0

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** (self.noise_dbm_per_hz / 10.0) * 1e-3 * self.bandwidth_hz

    @property
    def ue_tx_power_w(self) -> float:
        return 10.0 ** (self.ue_tx_power_dbm / 10.0) * 1e-3

    @property
    def sbs_tx_power_w(self) -> float:
        return 10.0 ** (self.sbs_tx_power_dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class Topology:
    """SBS positions inside a rectangular service area."""

    area: tuple[float, float]
    sbs_positions: np.ndarray

    @property
    def n_sbs(self) -> int:
        return self.sbs_positions.shape[0]


def generate_topology(area: tuple[float, float], ppp_density: float,
                      seed: int) -> Topology:
    """Drop SBSs by a homogeneous Poisson point process.

    The SBS count is Poisson(density * |area|) and positions are uniform.
    A draw of zero stations is rejected and redrawn with an incremented
    sub-seed so every topology is usable.
    """
    width, height = area
    if width <= 0 or height <= 0 or ppp_density <= 0:
        raise ParameterError("area dimensions and density must be positive")
    sub = 0
    while True:
        rng = np.random.default_rng((seed, sub))
        n = int(rng.poisson(ppp_density * width * height))
        if n > 0:
            xy = rng.uniform(0.0, 1.0, size=(n, 2)) * np.array([width, height])
            return Topology(area=(width, height), sbs_positions=xy)
        sub += 1
        log.info("PPP drew zero SBSs; retrying with sub-seed %d", sub)


def channel_gain(distance_m: float, freq_mhz: float = 900.0,
                 loss_coeff: float = 20.0) -> float:
    """Linear channel gain from the indoor path-loss model.

    Path loss in dB is 20*log10(f_MHz) + N_L*log10(d_m) - 28; distances
    below one meter are clamped to one meter, where the model stops being
    meaningful.
    """
    d = max(float(distance_m), 1.0)
    loss_db = 20.0 * np.log10(freq_mhz) + loss_coeff * np.log10(d) - 28.0
    return float(10.0 ** (-loss_db / 10.0))


def scatter_and_assign_ues(topology: Topology, n_ues: int,
                           rng: np.random.Generator,
                           k_nearest: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Scatter UEs uniformly and attach each to one of its nearest SBSs.

    Returns (ue_positions, assignment) where assignment[m] is the serving
    SBS index, drawn uniformly among the k nearest stations.
    """
    width, height = topology.area
    if n_ues == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int)
    pos = rng.uniform(0.0, 1.0, size=(n_ues, 2)) * np.array([width, height])
    diff = pos[:, None, :] - topology.sbs_positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    k = min(k_nearest, topology.n_sbs)
    nearest = np.argsort(dist, axis=1)[:, :k]
    pick = rng.integers(0, k, size=n_ues)
    assignment = nearest[np.arange(n_ues), pick]
    return pos, assignment


# --- arrival processes --------------------------------------------------------


@dataclass
class ArrivalModel:
    """Per-UE task rate process; one of four kinds.

    iid_uniform -- each UE redraws a rate from U[0, pi_max] every slot.
    grid        -- the area is split into a grid of cells with per-run mean
                   rates drawn from N(grid_mean, (sigma_level*grid_mean)^2),
                   scaled so the expected total load matches the iid case;
                   a UE's rate is its cell's rate.
    bursty      -- deterministic alternation: burst_on slots at pi_max, then
                   burst_off slots at pi_max/8, for every UE at once.
    markov      -- each UE index carries a two-state chain over
                   {rate_low, rate_high} with the given stay probability.
    """

    kind: str = "iid_uniform"
    pi_max: float = 4.0
    sigma_level: float = 0.5
    grid_cells: int = 4
    grid_mean: float = 10.0
    burst_on: int = 3
    burst_off: int = 12
    rate_low: float = 0.5
    rate_high: float = 3.5
    stay_prob: float = 0.9
    arrival_scale: float = 1.0

    _grid_rates: np.ndarray | None = field(default=None, repr=False)
    _markov_states: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    KINDS = ("iid_uniform", "grid", "bursty", "markov")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown arrival model kind {self.kind!r}")
        if self.pi_max <= 0:
            raise ParameterError("pi_max must be positive")

    def reset(self, rng: np.random.Generator) -> None:
        """Redraw per-run state (grid cell rates, chain states)."""
        if self.kind == "grid":
            sigma = self.sigma_level * self.grid_mean
            draws = rng.normal(self.grid_mean, sigma, size=self.grid_cells ** 2)
            draws = np.clip(draws, 0.0, None)
            # Normalize the realized cell means so the average per-UE rate
            # stays at pi_max/2 at every heterogeneity level; only the
            # spatial spread changes, not the total load.
            mean = draws.mean()
            if mean > 0:
                draws = draws * ((self.pi_max / 2.0) / mean)
            self._grid_rates = np.clip(draws, 0.0, self.pi_max)
        self._markov_states = np.zeros(0)

    def rates(self, t: int, ue_positions: np.ndarray, area: tuple[float, float],
              rng: np.random.Generator) -> np.ndarray:
        n = ue_positions.shape[0]
        if self.kind == "iid_uniform":
            out = rng.uniform(0.0, self.pi_max, size=n)
        elif self.kind == "grid":
            if self._grid_rates is None:
                self.reset(rng)
            cells = self.grid_cells
            cx = np.minimum((ue_positions[:, 0] / area[0] * cells).astype(int), cells - 1)
            cy = np.minimum((ue_positions[:, 1] / area[1] * cells).astype(int), cells - 1)
            out = self._grid_rates[cx * cells + cy]
        elif self.kind == "bursty":
            period = self.burst_on + self.burst_off
            high = (t % period) < self.burst_on
            out = np.full(n, self.pi_max if high else self.pi_max / 8.0)
        else:  # markov
            if self._markov_states.size < n:
                grown = rng.integers(0, 2, size=n - self._markov_states.size)
                self._markov_states = np.concatenate([self._markov_states, grown])
            flip = rng.uniform(size=self._markov_states.size) > self.stay_prob
            self._markov_states = np.where(flip, 1 - self._markov_states,
                                           self._markov_states)
            levels = np.array([self.rate_low, self.rate_high])
            out = levels[self._markov_states[:n].astype(int)]
        return np.clip(out * self.arrival_scale, 0.0, None)


def slot_arrivals(model: ArrivalModel, assignment: np.ndarray, n_sbs: int,
                  t: int, ue_positions: np.ndarray, area: tuple[float, float],
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-SBS arrival rates and the per-UE rates behind them."""
    ue_rates = model.rates(t, ue_positions, area, rng)
    phi = np.bincount(assignment, weights=ue_rates, minlength=n_sbs)
    return phi, ue_rates


def slot_link_costs(topology: Topology, assignment: np.ndarray,
                    ue_positions: np.ndarray, ue_rates: np.ndarray,
                    radio: RadioParams, task_bits: float,
                    downlink_bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decision-independent uplink delay cost (sec) and downlink energy (Wh).

    Uplink: every task of s bits crosses the UE's wireless link at its
    Shannon rate.  Downlink: the SBS spends its fixed transmit power for
    as long as each UE's slot traffic needs at the downlink rate.
    """
    n_sbs = topology.n_sbs
    d_u = np.zeros(n_sbs)
    e_tx = np.zeros(n_sbs)
    if assignment.size == 0:
        return d_u, e_tx
    sbs_xy = topology.sbs_positions[assignment]
    dist = np.sqrt(((ue_positions - sbs_xy) ** 2).sum(axis=1))
    gains = np.array([channel_gain(d, radio.carrier_mhz, radio.loss_coeff)
                      for d in dist])
    snr_up = radio.ue_tx_power_w * gains / radio.noise_power_w
    snr_dn = radio.sbs_tx_power_w * gains / radio.noise_power_w
    r_up = radio.bandwidth_hz * np.log2(1.0 + snr_up)
    r_dn = radio.bandwidth_hz * np.log2(1.0 + snr_dn)
    usable = (r_up > 0) & (r_dn > 0)
    if not np.all(usable):
        log.warning("dropping %d UEs with underflowed link rates",
                    int(np.sum(~usable)))
    uplink = np.where(usable, task_bits * ue_rates / np.where(r_up > 0, r_up, 1.0), 0.0)
    joules = np.where(usable,
                      radio.sbs_tx_power_w * downlink_bits / np.where(r_dn > 0, r_dn, 1.0),
                      0.0)
    d_u = np.bincount(assignment, weights=uplink, minlength=n_sbs)
    e_tx = np.bincount(assignment, weights=joules, minlength=n_sbs) / 3600.0
    return d_u, e_tx


# --- full scenario streams ----------------------------------------------------


@dataclass
class ScenarioConfig:
    """Everything needed to generate a reproducible scenario stream."""

    area: tuple[float, float] = (100.0, 100.0)
    ppp_density: float = 1e-3
    ue_range: tuple[int, int] = (200, 600)
    k_nearest: int = 3
    arrivals: ArrivalModel = field(default_factory=ArrivalModel)
    radio: RadioParams = field(default_factory=RadioParams)
    task_bits: float = 0.2e6
    downlink_max_bits: float = 1e6


def build_scenario(cfg: ScenarioConfig, seed: int,
                   horizon: int) -> tuple[Topology, list[SlotState]]:
    """Generate a topology and its deterministic slot-state stream."""
    topology = generate_topology(cfg.area, cfg.ppp_density, seed)
    # Independent sub-stream for the slot dynamics (1 tags the slot stream,
    # topology regeneration uses (seed, 0..)).
    rng = np.random.default_rng((seed, 1_000_003))
    cfg.arrivals.reset(rng)
    n = topology.n_sbs
    states = []
    lo, hi = cfg.ue_range
    for t in range(horizon):
        n_ues = int(rng.integers(lo, hi + 1))
        pos, assignment = scatter_and_assign_ues(topology, n_ues, rng, cfg.k_nearest)
        phi, ue_rates = slot_arrivals(cfg.arrivals, assignment, n, t, pos,
                                      cfg.area, rng)
        downlink_bits = rng.uniform(0.0, cfg.downlink_max_bits, size=n_ues)
        d_u, e_tx = slot_link_costs(topology, assignment, pos, ue_rates,
                                    cfg.radio, cfg.task_bits, downlink_bits)
        states.append(SlotState(arrivals=phi, uplink_delay_cost=d_u,
                                tx_energy=e_tx, deficit=np.zeros(n),
                                slot_index=t))
    return topology, states


STREAM_FIELDS = ("t", "arrivals", "uplink_delay_cost", "tx_energy")


def write_stream(path, states: list[SlotState]) -> None:
    """Serialize a slot stream as line-delimited JSON records.

    One record per line with fields in STREAM_FIELDS order; deficit queues
    are not stored because the online loop owns them.
    """
    with open(path, "w") as fh:
        for st in states:
            rec = {
                "t": st.slot_index,
                "arrivals": st.arrivals.tolist(),
                "uplink_delay_cost": st.uplink_delay_cost.tolist(),
                "tx_energy": st.tx_energy.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_stream(path) -> list[SlotState]:
    states = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            n = len(rec["arrivals"])
            states.append(SlotState(
                arrivals=np.array(rec["arrivals"]),
                uplink_delay_cost=np.array(rec["uplink_delay_cost"]),
                tx_energy=np.array(rec["tx_energy"]),
                deficit=np.zeros(n),
                slot_index=int(rec["t"]),
            ))
    return states
