"""Experiment orchestration: config files, replications, and CSV export.

Per-slot metrics go to one CSV per replication with a fixed column order:

    t, dropped, lan_traffic, objective,
    total_delay, total_comp_delay, total_cong_delay, total_comm_delay,
    total_energy, total_deficit, error,
    energy_cap_violations, delay_cap_violations,
    omega_0..omega_{N-1}, energy_0.., deficit_0.., delay_0..

Metrics CSVs are byte-identical across reruns of the same config and
seed.  Solver wall-clock times are nondeterministic by nature and are
therefore written to a separate `*_timing.csv` sidecar and summarized in
`summary.json`; everything else in the summary is deterministic.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .benchmarks import POLICIES
from .central import realize_profile, solve_per_slot_centralized
from .game import measure_poa, round_robin_ne
from .lyapunov import SlotMetrics, clamp_slot, per_slot_objective, run_open
from .model import NetworkConfig, ParameterError, energies
from .scenario import ArrivalModel, RadioParams, ScenarioConfig, build_scenario


@dataclass
class ExperimentConfig:
    """One experiment: scenario generation, network constants, run plan."""

    # network
    cpu_cycles_hz: float = 3e9
    cycles_per_task: float = 40e6
    lan_delay_s: float = 0.2
    energy_per_task_wh: float = 9e-5
    energy_budget_wh_per_hour: float = 22.0
    energy_cap_factor: float = 10.0
    delay_cap_s: float = 1e5
    control_v: float = 50.0
    slot_duration_s: float = 60.0
    # scenario
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    # run plan
    policy: str = "open_c"
    horizon: int = 600
    replications: int = 1
    seeds: tuple = (1,)
    out: str = "results"
    workers: int = 1

    @property
    def service_rate(self) -> float:
        return self.cpu_cycles_hz / self.cycles_per_task

    @property
    def budget_per_slot(self) -> float:
        return self.energy_budget_wh_per_hour * self.slot_duration_s / 3600.0

    def network_config(self, n_sbs: int) -> NetworkConfig:
        return NetworkConfig(
            service_rates=np.full(n_sbs, self.service_rate),
            lan_delay=self.lan_delay_s,
            energy_per_task=self.energy_per_task_wh,
            energy_budgets=np.full(n_sbs, self.budget_per_slot),
            energy_cap=self.energy_cap_factor * self.budget_per_slot,
            delay_cap=self.delay_cap_s,
            control_v=self.control_v,
            slot_duration=self.slot_duration_s,
        )

    def seed_for(self, replication: int) -> int:
        if replication < len(self.seeds):
            return int(self.seeds[replication])
        return int(self.seeds[-1]) + (replication - len(self.seeds) + 1)


def load_config(path: str) -> ExperimentConfig:
    """Read an experiment config from a YAML document with nested sections."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    exp = ExperimentConfig()
    net = doc.get("network", {})
    for key in ("cpu_cycles_hz", "cycles_per_task", "lan_delay_s",
                "energy_per_task_wh", "energy_budget_wh_per_hour",
                "energy_cap_factor", "delay_cap_s", "control_v",
                "slot_duration_s"):
        if key in net:
            setattr(exp, key, float(net[key]))
    scn = doc.get("scenario", {})
    scen = ScenarioConfig()
    if "area_m" in scn:
        scen.area = tuple(float(x) for x in scn["area_m"])
    for key, cast in (("ppp_density", float), ("k_nearest", int),
                      ("task_bits", float), ("downlink_max_bits", float)):
        if key in scn:
            setattr(scen, key, cast(scn[key]))
    if "ue_range" in scn:
        scen.ue_range = tuple(int(x) for x in scn["ue_range"])
    arr = scn.get("arrivals", {})
    model = ArrivalModel(**{k: v for k, v in arr.items()}) if arr else ArrivalModel()
    scen.arrivals = model
    rad = scn.get("radio", {})
    scen.radio = RadioParams(**{k: float(v) for k, v in rad.items()}) if rad \
        else RadioParams()
    exp.scenario = scen
    run = doc.get("run", {})
    if "policy" in run:
        exp.policy = str(run["policy"])
    for key, cast in (("horizon", int), ("replications", int), ("workers", int)):
        if key in run:
            setattr(exp, key, cast(run[key]))
    if "seeds" in run:
        exp.seeds = tuple(int(s) for s in run["seeds"])
    if "out" in run:
        exp.out = str(run["out"])
    if exp.horizon < 1 or exp.replications < 1:
        raise ParameterError("horizon and replications must be at least 1")
    if exp.policy not in POLICIES:
        raise ParameterError(f"unknown policy {exp.policy!r}; "
                             f"choose from {sorted(POLICIES)}")
    return exp


METRIC_COLUMNS = ("t", "dropped", "lan_traffic", "objective", "total_delay",
                  "total_comp_delay", "total_cong_delay", "total_comm_delay",
                  "total_energy", "total_deficit", "error",
                  "energy_cap_violations", "delay_cap_violations")


def _fmt(x) -> str:
    return repr(float(x))


def write_metrics_csv(path: str, metrics: list[SlotMetrics]) -> None:
    n = metrics[0].omega.size if metrics else 0
    per_sbs = [f"{name}_{i}" for name in ("omega", "energy", "deficit", "delay")
               for i in range(n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(METRIC_COLUMNS) + per_sbs)
        for m in metrics:
            row = [m.t, _fmt(m.dropped), _fmt(m.lan_traffic), _fmt(m.objective),
                   _fmt(m.total_delay), _fmt(m.comp_delay.sum()),
                   _fmt(m.cong_delay.sum()), _fmt(m.comm_delay.sum()),
                   _fmt(m.total_energy), _fmt(m.total_deficit), m.error,
                   m.energy_cap_violations, m.delay_cap_violations]
            delay = m.delay
            row += [_fmt(v) for v in m.omega]
            row += [_fmt(v) for v in m.energy]
            row += [_fmt(v) for v in m.deficit]
            row += [_fmt(v) for v in delay]
            writer.writerow(row)


def write_timing_csv(path: str, metrics: list[SlotMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "solver_time_us"])
        for m in metrics:
            writer.writerow([m.t, f"{m.solver_time_us:.3f}"])


def summarize(metrics: list[SlotMetrics]) -> dict:
    """Aggregate one replication.

    The deficit trajectory statistic is sum_i q_i(t) / t: for stable queues
    it decays toward zero, while unsatisfiable budgets keep it flat.
    """
    T = len(metrics)
    delays = np.array([m.total_delay for m in metrics])
    deficits = np.array([m.total_deficit for m in metrics])
    energies = np.array([m.total_energy for m in metrics])
    drops = np.array([m.dropped for m in metrics])
    times = np.array([m.solver_time_us for m in metrics])
    t_axis = np.maximum(np.arange(T, dtype=float), 1.0)
    deficit_over_time = deficits / t_axis
    return {
        "slots": T,
        "time_avg_delay": float(delays.mean()),
        "time_avg_energy": float(energies.mean()),
        "time_avg_dropped": float(drops.mean()),
        "final_deficit_sum": float(deficits[-1]),
        "final_time_avg_deficit": float(deficit_over_time[-1]),
        "peak_time_avg_deficit": float(deficit_over_time.max()),
        "errors": int(sum(1 for m in metrics if m.error)),
        "energy_cap_violations": int(sum(m.energy_cap_violations for m in metrics)),
        "delay_cap_violations": int(sum(m.delay_cap_violations for m in metrics)),
        "timing_us": {
            "mean": float(times.mean()),
            "std": float(times.std()),
            "max": float(times.max()),
        },
    }


def _run_single(exp: ExperimentConfig, policy_name: str, seed: int):
    topology, states = build_scenario(exp.scenario, seed, exp.horizon)
    cfg = exp.network_config(topology.n_sbs)
    policy = POLICIES[policy_name]
    metrics, final_q = run_open(policy, states, cfg, exp.horizon)
    return metrics, final_q, topology.n_sbs


def run_experiment(exp: ExperimentConfig) -> dict:
    """Run the configured policy over all replications and export metrics."""
    os.makedirs(exp.out, exist_ok=True)
    summary = {"policy": exp.policy, "horizon": exp.horizon,
               "replications": []}
    jobs = [(exp, exp.policy, exp.seed_for(r)) for r in range(exp.replications)]
    if exp.workers > 1 and exp.replications > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(_run_single_star, jobs))
    else:
        results = [_run_single(*job) for job in jobs]
    for r, (metrics, _q, n_sbs) in enumerate(results):
        seed = exp.seed_for(r)
        stem = os.path.join(exp.out, f"{exp.policy}_rep{r:03d}")
        write_metrics_csv(stem + ".csv", metrics)
        write_timing_csv(stem + "_timing.csv", metrics)
        rep = summarize(metrics)
        rep.update({"seed": seed, "n_sbs": n_sbs, "metrics_file": stem + ".csv"})
        summary["replications"].append(rep)
    with open(os.path.join(exp.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _run_single_star(job):
    return _run_single(*job)


def paired_poa_run(exp: ExperimentConfig, seed: int):
    """One pass with a shared deficit-queue trajectory for PoA measurement.

    The queue trajectory is driven by the centralized policy; each slot the
    equilibrium of the game is computed against the same queues so the two
    objectives are directly comparable.
    """
    topology, states = build_scenario(exp.scenario, seed, exp.horizon)
    cfg = exp.network_config(topology.n_sbs)
    q = np.zeros(cfg.n_sbs)
    rows = []
    for t, raw in enumerate(states):
        st, _dropped = clamp_slot(cfg, raw.with_deficit(q))
        prof_c = realize_profile(solve_per_slot_centralized(cfg, st), st)
        prof_a = round_robin_ne(cfg, st).profile
        obj_c = per_slot_objective(prof_c, cfg, st).value
        obj_a = per_slot_objective(prof_a, cfg, st).value
        poa = measure_poa(prof_a, prof_c, cfg, st)
        rows.append((t, obj_c, obj_a, poa))
        q = np.maximum(q + energies(prof_c, cfg, st) - cfg.energy_budgets, 0.0)
    return rows


def compare_policies(exp: ExperimentConfig, policies: list[str]) -> dict:
    """Replay the identical scenario stream through several policies."""
    if len(policies) < 2:
        raise ParameterError("compare needs at least two policies")
    for p in policies:
        if p not in POLICIES:
            raise ParameterError(f"unknown policy {p!r}")
    os.makedirs(exp.out, exist_ok=True)
    summary = {"policies": list(policies), "horizon": exp.horizon,
               "replications": []}
    for r in range(exp.replications):
        seed = exp.seed_for(r)
        rep = {"seed": seed, "per_policy": {}}
        for p in policies:
            metrics, _q, n_sbs = _run_single(exp, p, seed)
            stem = os.path.join(exp.out, f"compare_{p}_rep{r:03d}")
            write_metrics_csv(stem + ".csv", metrics)
            write_timing_csv(stem + "_timing.csv", metrics)
            rep["per_policy"][p] = summarize(metrics)
            rep["n_sbs"] = n_sbs
        if "open_c" in policies and "open_a" in policies:
            rows = paired_poa_run(exp, seed)
            poa_path = os.path.join(exp.out, f"compare_poa_rep{r:03d}.csv")
            with open(poa_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "objective_open_c", "objective_open_a", "poa"])
                for t, oc, oa, poa in rows:
                    writer.writerow([t, _fmt(oc), _fmt(oa), _fmt(poa)])
            poas = np.array([row[3] for row in rows])
            rep["poa"] = {"mean": float(poas.mean()), "max": float(poas.max()),
                          "min": float(poas.min()), "file": poa_path}
        summary["replications"].append(rep)
    with open(os.path.join(exp.out, "compare_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def sweep(exp: ExperimentConfig, param: str, values: list[float],
          policies: list[str] | None = None) -> dict:
    """Grid over the control parameter or the arrival heterogeneity level."""
    if param not in ("v", "sigma"):
        raise ParameterError("sweep parameter must be 'v' or 'sigma'")
    policies = policies or [exp.policy]
    os.makedirs(exp.out, exist_ok=True)
    summary = {"param": param, "values": list(values), "points": []}
    for value in values:
        point_exp = replace(exp)
        if param == "v":
            point_exp.control_v = float(value)
        else:
            arr = replace(exp.scenario.arrivals, kind="grid",
                          sigma_level=float(value))
            point_exp.scenario = replace(exp.scenario, arrivals=arr)
        point = {"value": float(value), "per_policy": {}}
        for p in policies:
            metrics, _q, n_sbs = _run_single(point_exp, p, exp.seed_for(0))
            tag = f"{param}{value:g}_{p}"
            stem = os.path.join(exp.out, f"sweep_{tag}")
            write_metrics_csv(stem + ".csv", metrics)
            point["per_policy"][p] = summarize(metrics)
        summary["points"].append(point)
    with open(os.path.join(exp.out, "sweep_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
