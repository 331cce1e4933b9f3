"""Command-line entry point.

Subcommands:
    run       one policy over the configured replications
    compare   several policies over the identical scenario stream
    sweep     grid over the control parameter V or the heterogeneity level
    validate  randomized solver-vs-oracle and equilibrium spot checks

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 solver error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import yaml

from .central import brute_force_oracle, kkt_residual, solve_per_slot_centralized
from .game import round_robin_ne, verify_ne
from .harness import ExperimentConfig, compare_policies, load_config, run_experiment, sweep
from .lyapunov import decision_dependent_cost
from .model import NetworkConfig, ParameterError, SlotState, SolverError


def _load(args) -> ExperimentConfig:
    exp = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        exp.seeds = (args.seed,)
    if getattr(args, "out", None):
        exp.out = args.out
    if getattr(args, "horizon", None):
        exp.horizon = args.horizon
    if getattr(args, "policy", None):
        exp.policy = args.policy
    return exp


def _random_instance(rng: np.random.Generator, n: int):
    mu = np.full(n, 75.0)
    cfg = NetworkConfig(
        service_rates=mu,
        lan_delay=0.2,
        energy_per_task=9e-5,
        energy_budgets=np.full(n, 22.0 / 60.0),
        energy_cap=10 * 22.0 / 60.0,
        delay_cap=1e5,
        control_v=50.0,
        slot_duration=60.0,
    )
    st = SlotState(
        arrivals=rng.uniform(0.0, 0.93, size=n) * mu,
        uplink_delay_cost=rng.uniform(0.0, 0.1, size=n),
        tx_energy=rng.uniform(0.0, 1e-4, size=n),
        deficit=rng.uniform(0.0, 20.0, size=n) * rng.integers(0, 2, size=n),
    )
    return cfg, st


def cmd_validate(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    worst_rel = 0.0
    worst_kkt = 0.0
    worst_ne = 0.0
    for k in range(args.count):
        n = int(rng.integers(2, 5))
        cfg, st = _random_instance(rng, n)
        alloc = solve_per_slot_centralized(cfg, st)
        oracle = brute_force_oracle(cfg, st)
        f_solver = decision_dependent_cost(alloc.post_workloads, alloc.lan_traffic, cfg, st)
        f_oracle = decision_dependent_cost(oracle.post_workloads, oracle.lan_traffic, cfg, st)
        rel = abs(f_solver - f_oracle) / max(abs(f_oracle), 1e-12)
        worst_rel = max(worst_rel, rel)
        worst_kkt = max(worst_kkt, kkt_residual(alloc, cfg, st))
        if k % 5 == 0:
            state = round_robin_ne(cfg, st)
            _ok, improvement = verify_ne(state.profile, cfg, st, rng=rng)
            worst_ne = max(worst_ne, improvement / max(state.total_cost, 1.0))
    print(f"validate: {args.count} random instances")
    print(f"  worst solver-vs-oracle relative objective gap: {worst_rel:.3e}")
    print(f"  worst optimality-certificate residual:         {worst_kkt:.3e}")
    print(f"  worst relative best-response escape at NE:     {worst_ne:.3e}")
    ok = worst_rel < 1e-6 and worst_kkt < 1e-6 and worst_ne < 1e-6
    print("validate: PASS" if ok else "validate: FAIL")
    return 0 if ok else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="peeroff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the first seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--horizon", type=int, help="slots to simulate")

    p_run = sub.add_parser("run", parents=[common], help="run one policy")
    p_run.add_argument("--policy", help="policy name")
    p_run.set_defaults(func=lambda a: (run_experiment(_load(a)), 0)[1])

    p_cmp = sub.add_parser("compare", parents=[common],
                           help="replay one stream through several policies")
    p_cmp.add_argument("--policies", default="open_c,open_a",
                       help="comma-separated policy names")
    p_cmp.set_defaults(func=lambda a: (
        compare_policies(_load(a), [p.strip() for p in a.policies.split(",")]), 0)[1])

    p_swp = sub.add_parser("sweep", parents=[common], help="parameter grid")
    p_swp.add_argument("--param", choices=["v", "sigma"], required=True)
    p_swp.add_argument("--values", required=True,
                       help="comma-separated numeric grid values")
    p_swp.add_argument("--policies", default=None)
    p_swp.set_defaults(func=lambda a: (
        sweep(_load(a), a.param, [float(v) for v in a.values.split(",")],
              [p.strip() for p in a.policies.split(",")] if a.policies else None), 0)[1])

    p_val = sub.add_parser("validate", help="randomized solver spot checks")
    p_val.add_argument("--count", type=int, default=25)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
