"""Command-line harness.

Subcommands: solve, optimize, benchmark, scan, transfer.  Each takes a
JSON config file plus optional --seed / --out / --verbose flags and
writes machine-readable outputs (JSONL records, CSV curves, binary
weight files).  Exit codes: 0 success, 2 validation error, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import pathlib
import sys

import numpy as np

from . import agents, bench
from .constraints import ConstraintSet, Geometry, candidate_pool
from .environment import BoundCache, RelaxationEnv, episode_length
from .hamiltonian import hamiltonian_from_config
from .relaxation import CompatMode, RelaxationOptions, solve_bound
from .solver import SolveStatus

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config line {exc.lineno}: {exc.msg}") from exc


def _hamiltonian(cfg: dict):
    if "hamiltonian" not in cfg:
        raise ConfigError("config requires a 'hamiltonian' section")
    try:
        return hamiltonian_from_config(cfg["hamiltonian"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"hamiltonian section: {exc}") from exc


def _options(cfg: dict) -> RelaxationOptions:
    mode = cfg.get("compat_mode", "pairwise")
    try:
        compat = CompatMode(mode)
    except ValueError:
        raise ConfigError(f"unknown compat_mode {mode!r}") from None
    return RelaxationOptions(compat_mode=compat, ppt=bool(cfg.get("ppt", False)),
                             eps_feas=float(cfg.get("eps_feas", 1e-9)),
                             eps_gap=float(cfg.get("eps_gap", 1e-8)))


def _seeds(cfg: dict, override) -> list:
    if override is not None:
        return [int(override)]
    seeds = cfg.get("seeds", [0])
    if isinstance(seeds, dict):
        base = int(seeds.get("base", 0))
        return [base + i for i in range(int(seeds["count"]))]
    if not seeds:
        raise ConfigError("seed list is empty")
    return [int(s) for s in seeds]


def _pool(cfg: dict, n: int):
    budget = bench.preset_budget(cfg.get("budget", "half_three_body"), n)
    geometry = Geometry(cfg.get("geometry", "ring"))
    return candidate_pool(n, budget, geometry, int(cfg.get("max_body", 4)))


def _out_dir(args) -> pathlib.Path:
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: dict, args) -> int:
    """Evaluate beta_C for an explicitly given constraint set."""
    h = _hamiltonian(cfg)
    spec = cfg.get("constraints", [])
    try:
        if isinstance(spec, str):
            c = ConstraintSet.from_text(h.n, spec)
        else:
            c = ConstraintSet(h.n, [tuple(int(q) for q in s) for s in spec])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"constraints: {exc}") from exc
    res = solve_bound(h, c, _options(cfg))
    record = {"beta": None if not math.isfinite(res.beta) else res.beta,
              "p": res.p, "status": res.status.value,
              "dual_certified": res.dual_certified,
              "unsupported_offset": res.unsupported_offset,
              "constraints": c.to_text()}
    print(json.dumps(record))
    if args.out:
        (_out_dir(args) / "solve.json").write_text(json.dumps(record, indent=1))
    if res.status is SolveStatus.FAILED or not res.dual_certified:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_optimize(cfg: dict, args) -> int:
    """Run one search (rl, mc or bfs) and report the best state found."""
    h = _hamiltonian(cfg)
    pool = _pool(cfg, h.n)
    algorithm = cfg.get("algorithm", "rl")
    seeds = _seeds(cfg, args.seed)
    opts = _options(cfg)
    out = _out_dir(args) if args.out else None
    cache = BoundCache()
    records = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        env = RelaxationEnv(h, pool, opts, cache=cache)
        cap = int(cfg.get("max_states", bench.VISIT_CAP))
        if algorithm == "bfs":
            r = agents.bfs_search(env, cap, rng)
            best_bits, best_beta, best_p = r.best_bits, r.best_beta, r.best_p
        elif algorithm == "mc":
            temp = float(cfg.get("temperature", agents.MC_TEMPERATURE_HALF_BUDGET))
            r = agents.mc_search(env, agents.McConfig(temp), cap, rng)
            best_bits, best_beta, best_p = r.best_bits, r.best_beta, r.best_p
        elif algorithm == "rl":
            high = pool.budget >= bench.preset_budget("all_three_body", h.n)
            config = agents.TrainConfig(
                episodes=int(cfg.get("episodes", 400)),
                episode_length=int(cfg.get("episode_length",
                                           episode_length(h.n, high))),
                schedule=agents.ExplorationSchedule(
                    decay=float(cfg.get("epsilon_decay", agents.default_decay(h.n)))),
                seed=seed)
            tr = agents.train(env, config)
            best_bits, best_beta = tr.best_state, tr.best_beta
            best_p = env.state_cost(best_bits)
            if out is not None:
                tr.net.save(out / f"qnet_seed{seed}.bin",
                            meta={"n": h.n, "budget": pool.budget, "seed": seed})
        else:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        rec = {"seed": seed, "algorithm": algorithm,
               "best_beta": best_beta if math.isfinite(best_beta) else None,
               "best_p": best_p,
               "best_state": pool.decode(best_bits).to_text() if best_bits else "",
               "unique_states": env.unique_visits, "solves": env.solve_count}
        records.append(rec)
        if args.verbose:
            print(json.dumps(rec))
    print(json.dumps({"best": max(records,
                                  key=lambda r: (r["best_beta"] is not None,
                                                 r["best_beta"]))}))
    if out is not None:
        with open(out / "optimize.jsonl", "w") as f:
            for rec in records:
                f.write(json.dumps(rec) + "\n")
    return EXIT_OK


def cmd_benchmark(cfg: dict, args) -> int:
    """Seed-ensemble benchmark on the isolated-group model."""
    sizes = cfg.get("sizes") or [int(cfg.get("n", 6))]
    algorithms = cfg.get("algorithms", ["bfs", "mc", "rl"])
    seeds = _seeds(cfg, args.seed)
    budget = cfg.get("budget", "half_three_body")
    cap = int(cfg.get("max_states", bench.VISIT_CAP))
    out = _out_dir(args) if args.out else None
    all_records = []
    for n in sizes:
        records, _ = bench.run_benchmark(int(n), budget, algorithms, seeds,
                                         _options(cfg), cap=cap,
                                         max_body=int(cfg.get("max_body", 4)))
        all_records.extend(records)
        if args.verbose:
            for rec in records:
                print(rec.to_json())
    summary = bench.summarize_benchmark(all_records)
    print(json.dumps(summary, indent=1))
    if out is not None:
        with open(out / "benchmark.jsonl", "w") as f:
            for rec in all_records:
                f.write(rec.to_json() + "\n")
        (out / "benchmark_summary.json").write_text(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_scan(cfg: dict, args) -> int:
    """Pattern bounds across a B/J grid."""
    n = int(cfg.get("n", 6))
    grid = cfg.get("grid")
    if not grid:
        raise ConfigError("scan requires a nonempty 'grid' of B/J values")
    rows = bench.run_scan(n, [float(g) for g in grid],
                          cfg.get("budget", "half_three_body"), _options(cfg),
                          include_search=bool(cfg.get("include_search", True)),
                          max_body=int(cfg.get("max_body", 4)))
    if args.verbose:
        for row in rows:
            print(json.dumps(row))
    if args.out:
        bench.write_scan_csv(rows, _out_dir(args) / "scan.csv")
    else:
        import csv
        w = csv.DictWriter(sys.stdout, fieldnames=[
            "b_over_j", "pattern", "beta", "p", "exact_e0", "within_budget",
            "reward", "state"])
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return EXIT_OK


def cmd_transfer(cfg: dict, args) -> int:
    """Warm-start-vs-cold-start convergence ratios across the phase grid."""
    n = int(cfg.get("n", 6))
    source = float(cfg.get("source_bj", 5.0))
    targets = [float(g) for g in cfg.get("grid", [4.0, 0.5])]
    seeds = _seeds(cfg, args.seed)
    records = bench.run_transfer(
        n, source, targets, seeds, cfg.get("budget", "half_three_body"),
        _options(cfg), source_episodes=int(cfg.get("source_episodes", 150)),
        max_episodes=int(cfg.get("max_episodes", 400)),
        max_body=int(cfg.get("max_body", 4)))
    summary = bench.summarize_transfer(records)
    print(json.dumps(summary, indent=1))
    if args.out:
        out = _out_dir(args)
        with open(out / "transfer.jsonl", "w") as f:
            for rec in records:
                f.write(rec.to_json() + "\n")
        with open(out / "transfer_ratios.csv", "w") as f:
            f.write("target_bj,runs,mean_ratio,median_ratio\n")
            for row in summary:
                f.write(f"{row['target_bj']},{row['runs']},"
                        f"{row['mean_ratio']},{row['median_ratio']}\n")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "optimize": cmd_optimize,
            "benchmark": cmd_benchmark, "scan": cmd_scan,
            "transfer": cmd_transfer}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="certbound",
        description="Certified ground-state energy bounds and relaxation search")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # solver or runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
