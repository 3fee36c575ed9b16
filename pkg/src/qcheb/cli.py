"""Command-line experiments: seeded trials, JSON summaries and CSV trial logs.

Each run writes ``<out>/<subcommand>-<config hash>/summary.json`` and
``trials.csv``. Trial ``i`` draws from ``split(seed, i)``, so reruns with the
same configuration reproduce both files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from qcheb import __version__
from qcheb import ae, chebyshev, graph, stream, vartime
from qcheb.ae import SamplerHandle
from qcheb.chebyshev import ChebParams, PowerLawBound
from qcheb.families import FAMILIES, make_family, random_stage_sampler
from qcheb.rng import make_rng, split

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
WILSON_ALPHA = 0.01


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def constants() -> dict:
    """Every tunable constant a run depends on."""
    return {
        "search_grid_factor": chebyshev.SEARCH_GRID_FACTOR,
        "stopping_window": list(chebyshev.STOPPING_WINDOW),
        "basic_final_factor": chebyshev.BASIC_FINAL_FACTOR,
        "fast_final_factor": chebyshev.FAST_FINAL_FACTOR,
        "rerun_L_divisor": chebyshev.RERUN_L_DIVISOR,
        "implicit_coarse_eps": chebyshev.IMPLICIT_COARSE_EPS,
        "implicit_stop_ratio": chebyshev.IMPLICIT_STOP_RATIO,
        "markov_factor": ae.MARKOV_FACTOR,
        "exhaustion_t": ae.EXHAUSTION_T,
        "vartime_budget_constant": vartime.DEFAULT_BUDGET_CONSTANT,
        "vartime_search_t_factor": vartime.SEARCH_T_FACTOR,
        "vartime_final_t_factor": vartime.FINAL_T_FACTOR,
        "triangle_bucket_width": "eps/4",
        "triangle_accept_band": [1 / 20, 20],
        "tv_bound_constant": graph.TV_BOUND_CONSTANT,
        "fk_delta_slope": stream.DELTA_SLOPE,
        "fk_passes_per_sample": stream.PASSES_PER_SAMPLE,
    }


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def wilson(successes: int, trials: int) -> list:
    lo, hi = proportion_confint(successes, trials, alpha=WILSON_ALPHA, method="wilson")
    return [float(lo), float(hi)]


def write_run(out: str, name: str, config: dict, rows: list[dict], target: float, extra: Optional[dict] = None) -> dict:
    h = config_hash(config)
    run_dir = Path(out) / f"{name}-{h[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "trials.csv", "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    ok = sum(1 for r in rows if r.get("success") in (1, True))
    est = np.array([float(r["estimate"]) for r in rows if "estimate" in r]) if rows else np.array([])
    cost = np.array([float(r["cost"]) for r in rows if "cost" in r]) if rows else np.array([])
    summary = {
        "subcommand": name,
        "config": config,
        "config_hash": h,
        "version": __version__,
        "constants": constants(),
        "trials": len(rows),
        "successes": ok,
        "success_frequency": ok / len(rows) if rows else None,
        "wilson_99": wilson(ok, len(rows)) if rows else None,
        "target_frequency": target,
        "passed": bool(rows) and ok / len(rows) >= target,
        "estimate_quantiles": _quantiles(est),
        "cost_mean": float(cost.mean()) if cost.size else None,
        "cost_quantiles": _quantiles(cost),
        "run_dir": str(run_dir),
    }
    if extra:
        summary.update(extra)
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _quantiles(a: np.ndarray):
    if a.size == 0:
        return None
    q = np.quantile(a, [0.05, 0.25, 0.5, 0.75, 0.95])
    return dict(zip(["q05", "q25", "q50", "q75", "q95"], [float(v) for v in q]))


def run_trials(trials: int, seed: int, fn: Callable[[int, np.random.Generator], dict]) -> list[dict]:
    return [{"trial": i, **fn(i, split(seed, i))} for i in range(trials)]


# Pipelines -----------------------------------------------------------------------


def mean_trial(family: str, ratio: float, algorithm: str, eps: float, delta: float, mu: float = 1.0):
    d = make_family(family, ratio, mu)
    L, H = mu / 16.0, 16.0 * mu

    def fn(i, rng):
        if algorithm == "classical":
            res = chebyshev.classical_baseline(d, ratio, eps, delta, rng)
            return _mean_row(res.estimate, mu, eps, res.samples)
        S = SamplerHandle(d)
        if algorithm == "basic":
            rep = chebyshev.estimate_mean_basic(S, ChebParams(ratio, L, H, eps, delta), rng)
        elif algorithm == "fast":
            rep = chebyshev.estimate_mean_fast(S, ChebParams(ratio, L, H, eps, delta), rng)
        elif algorithm == "auto":
            rep = chebyshev.estimate_mean_auto_L(S, ratio, H, eps, delta, rng)
        elif algorithm == "implicit":
            f = PowerLawBound(ratio * math.sqrt(mu), 0.5)
            rep = chebyshev.estimate_mean_implicit(S, f, L, H, eps, delta, rng)
        else:
            raise UsageError(f"unknown algorithm {algorithm!r}")
        return _mean_row(rep.estimate, mu, eps, rep.ledger.quantum_samples)

    return fn


def _mean_row(estimate, truth, eps, cost):
    return {
        "estimate": repr(float(estimate)),
        "truth": repr(float(truth)),
        "success": int(abs(estimate - truth) <= eps * truth),
        "cost": int(cost),
    }


def _load_graph(args) -> graph.Graph:
    grng = make_rng(args.graph_seed)
    if args.graph:
        try:
            return graph.Graph.from_edge_list(args.graph)
        except OSError as e:
            raise UsageError(f"cannot read graph file: {e}") from None
    if args.gnp:
        n, p = args.gnp
        return graph.Graph.gnp(int(n), float(p), grng)
    if args.planted:
        n, p, k = args.planted
        return graph.Graph.planted_clique(int(n), float(p), int(k), grng)
    if args.clique:
        return graph.Graph.complete(args.clique)
    raise UsageError("give one of --graph, --gnp, --planted or --clique")


def _load_stream(args) -> stream.TurnstileStream:
    if args.stream:
        try:
            return stream.TurnstileStream.from_file(args.stream)
        except OSError as e:
            raise UsageError(f"cannot read stream file: {e}") from None
    if args.vector:
        x = [float(v) for v in args.vector.split(",")]
        return stream.TurnstileStream.from_vector(x)
    raise UsageError("give --stream or --vector")


# Subcommands ---------------------------------------------------------------------


def cmd_ae_dist(args) -> dict:
    p, t = args.p, args.t
    law = ae.ae_outcome_distribution(p, t)
    bound = 2 * math.pi * math.sqrt(p * (1 - p)) / t + math.pi ** 2 / t ** 2

    def fn(i, rng):
        out = ae.ae_sample(p, t, rng)
        return {"y": out.y, "estimate": repr(out.p_tilde), "success": int(abs(out.p_tilde - p) <= bound)}

    rows = run_trials(args.trials, args.seed, fn)
    config = {"p": p, "t": t, "trials": args.trials, "seed": args.seed}
    extra = {"distribution": [[float(v), float(q)] for v, q in law]}
    return write_run(args.out, "ae-dist", config, rows, 8 / math.pi ** 2, extra)


def cmd_mean(args) -> dict:
    fn = mean_trial(args.family, args.delta_bound, args.algorithm, args.eps, args.delta)
    rows = run_trials(args.trials, args.seed, fn)
    config = {k: getattr(args, k) for k in ("family", "delta_bound", "algorithm", "eps", "delta", "trials", "seed")}
    return write_run(args.out, "mean", config, rows, 1 - args.delta)


def cmd_vartime(args) -> dict:
    values, probs, stages = random_stage_sampler(make_rng(args.sampler_seed), args.atoms, args.stages)
    mu = float(np.dot(values, probs))
    Delta = max(1.0, math.ceil(math.sqrt(float(np.dot(values ** 2, probs))) / mu))

    def fn(i, rng):
        VS = vartime.VariableTimeSampler(values, probs, stages)
        rep = vartime.var_eps_approx(VS, Delta, mu / 16, 16 * mu, args.eps, args.delta, rng)
        row = _mean_row(rep.estimate, mu, args.eps, rep.ledger.quantum_samples)
        row["time_used"] = repr(float(VS.time_used))
        return row

    rows = run_trials(args.trials, args.seed, fn)
    config = {k: getattr(args, k) for k in ("atoms", "stages", "sampler_seed", "eps", "delta", "trials", "seed")}
    return write_run(args.out, "vartime", config, rows, 1 - args.delta, {"Delta": Delta, "mu": mu})


def _graph_config(args) -> dict:
    return {k: getattr(args, k) for k in ("graph", "gnp", "planted", "clique", "graph_seed", "eps", "trials", "seed")}


def cmd_edges(args) -> dict:
    G = _load_graph(args)

    def fn(i, rng):
        rep = graph.estimate_edges(G, args.eps, args.delta, rng)
        q = rep.details["queries"]["total"]
        return {
            "estimate": repr(float(rep.estimate)),
            "truth": G.m,
            "success": int(abs(rep.estimate - G.m) <= args.eps * G.m),
            "cost": int(q),
        }

    rows = run_trials(args.trials, args.seed, fn)
    config = {**_graph_config(args), "delta": args.delta}
    return write_run(args.out, "edges", config, rows, 2 / 3, {"n": G.n, "m": G.m})


def cmd_triangles(args) -> dict:
    G = _load_graph(args)
    t = G.triangle_count()

    def fn(i, rng):
        rep = graph.estimate_triangles(G, args.eps, rng)
        return {
            "estimate": repr(float(rep.estimate)),
            "truth": t,
            "success": int(abs(rep.estimate - t) <= (0.8 + args.eps) * t),
            "cost": repr(float(rep.details["queries"])),
        }

    rows = run_trials(args.trials, args.seed, fn)
    return write_run(args.out, "triangles", _graph_config(args), rows, 2 / 3, {"n": G.n, "m": G.m, "t": t})


def cmd_fk(args) -> dict:
    s = _load_stream(args)
    Fk = stream.frequency_moment(s.final_vector(), args.k)

    def fn(i, rng):
        rep = stream.estimate_fk(s, args.k, args.passes_budget, args.eps, args.delta, rng)
        pl = rep.details["passes"]
        return {
            "estimate": repr(float(rep.estimate)),
            "truth": repr(Fk),
            "success": int(abs(rep.estimate - Fk) <= args.eps * Fk),
            "cost": pl["passes"],
            "memory_cells": pl["memory_cells"],
        }

    rows = run_trials(args.trials, args.seed, fn)
    config = {k: getattr(args, k) for k in ("stream", "vector", "k", "passes_budget", "eps", "delta", "trials", "seed")}
    return write_run(args.out, "fk", config, rows, 2 / 3, {"n": s.n, "F_k": Fk})


def cmd_sweep(args) -> dict:
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise UsageError("--values must be a comma-separated list of numbers") from None
    rows = []
    for j, v in enumerate(values):
        ratio = v if args.vary == "delta-bound" else args.delta_bound
        eps = v if args.vary == "eps" else args.eps
        fn = mean_trial(args.family, ratio, args.algorithm, eps, args.delta)
        trial_rows = run_trials(args.trials, args.seed + j, fn)
        costs = np.array([r["cost"] for r in trial_rows], dtype=np.float64)
        ok = sum(r["success"] for r in trial_rows)
        rows.append({
            args.vary: repr(v),
            "trials": args.trials,
            "success_frequency": repr(ok / args.trials),
            "cost": repr(float(costs.mean())),
            "cost_median": repr(float(np.median(costs))),
            "success": int(ok / args.trials >= 1 - args.delta),
            "estimate": repr(float(np.mean([float(r["estimate"]) for r in trial_rows]))),
        })
    config = {k: getattr(args, k) for k in ("family", "algorithm", "vary", "values", "delta_bound", "eps", "delta",
                                            "trials", "seed")}
    costs = [float(r["cost"]) for r in rows]
    order = np.argsort(values)
    slope = None
    if len(values) > 1 and min(values) > 0:
        x = np.log([values[i] if args.vary == "delta-bound" else 1 / values[i] for i in order])
        slope = float(np.polyfit(x, np.log([costs[i] for i in order]), 1)[0])
    return write_run(args.out, "sweep", config, rows, 1.0, {"loglog_slope": slope})


def selftest_checks() -> list[tuple[str, Callable[[], bool]]]:
    from qcheb.dist import FiniteDistribution

    def kernel_norm():
        return all(abs(ae.outcome_probabilities(p, t).sum() - 1) < 1e-10 for p in (0.1, 0.5, 0.9) for t in (3, 17, 64))

    def backends():
        return all(
            ae.ae_outcome_distribution(p, t).total_variation(ae.ae_statevector_oracle(p, t), 1e-9) < 1e-8
            for p in (0.05, 0.3, 0.77) for t in (3, 8, 21)
        )

    def edge_moment():
        G = graph.Graph.gnp(30, 0.2, make_rng(1))
        return abs(graph.edge_estimator_distribution(G).mean() - G.m) < 1e-9

    def tv_moment():
        G = graph.Graph.complete(5)
        return abs(graph.tv_estimator_distribution(G, 0).mean() * 4 - G.triangles_at(0)) < 1e-9

    def fk_point_mass():
        d = stream.fk_estimator_distribution(np.ones(8), 3, 8.0, 0.5)
        return len(d) == 1 and abs(d.mean() - 8) < 1e-12

    def fast_estimate():
        d = FiniteDistribution([0.0, 16.0], [15 / 16, 1 / 16])
        rep = chebyshev.estimate_mean_fast(SamplerHandle(d), ChebParams(4, 1 / 16, 16, 0.1, 0.01), make_rng(0))
        return abs(rep.estimate - 1) <= 0.1

    def collision_identity():
        prof = vartime.VariableTimeProfile.from_stage_masses([0.1, 0.2, 0.1], [0.3, 0.1, 0.2])
        amps = vartime.stage_amplitudes(prof, [0.3, 0.2, 0.1])
        got = vartime.collision_product(amps.b, amps.a, amps.b1[-1], prof.m)
        return abs(got - prof.p_acc) < 1e-12

    return [
        ("kernel normalisation", kernel_norm),
        ("closed form matches statevector", backends),
        ("edge estimator mean", edge_moment),
        ("triangle estimator mean", tv_moment),
        ("fk estimator on a flat vector", fk_point_mass),
        ("fast mean estimate", fast_estimate),
        ("collision product", collision_identity),
    ]


def cmd_selftest(args) -> dict:
    rows = []
    for name, check in selftest_checks():
        try:
            ok = bool(check())
        except Exception as e:  # a crashing check is a failing check
            ok = False
            name = f"{name} ({type(e).__name__}: {e})"
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        rows.append({"check": name, "success": int(ok)})
    return write_run(args.out, "selftest", {"seed": args.seed}, rows, 1.0)


# Parser ---------------------------------------------------------------------------


def _add_common(p, trials=20):
    p.add_argument("--seed", type=int, default=0, help="base seed; trial i uses split(seed, i)")
    p.add_argument("--trials", type=int, default=trials, help="number of seeded trials")
    p.add_argument("--out", default="runs", help="directory that receives the run directory")


def _add_graph(p):
    p.add_argument("--graph", help="edge-list file, one 0-indexed 'u v' pair per line")
    p.add_argument("--gnp", nargs=2, type=float, metavar=("N", "P"), help="Erdos-Renyi G(n, p)")
    p.add_argument("--planted", nargs=3, type=float, metavar=("N", "P", "K"), help="G(n, p) plus a k-clique")
    p.add_argument("--clique", type=int, metavar="K", help="complete graph on K vertices")
    p.add_argument("--graph-seed", type=int, default=0, help="seed for generated graphs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcheb", description="Experiments for simulated quantum mean estimation and its graph and streaming uses.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ae-dist", help="outcome law and samples of amplitude estimation")
    p.add_argument("--p", type=float, required=True, help="amplitude p = sin^2(theta)")
    p.add_argument("--t", type=int, required=True, help="number of grid points")
    _add_common(p, trials=100)
    p.set_defaults(func=cmd_ae_dist)

    p = sub.add_parser("mean", help="relative-error mean estimation on a test family")
    p.add_argument("--family", choices=sorted(FAMILIES), default="two-point")
    p.add_argument("--delta-bound", type=float, default=4.0, help="bound Delta on phi/mu (also the family's ratio)")
    p.add_argument("--algorithm", choices=["basic", "fast", "auto", "implicit", "classical"], default="fast")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    _add_common(p)
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("vartime", help="mean estimation of a variable-time sampler")
    p.add_argument("--atoms", type=int, default=6)
    p.add_argument("--stages", type=int, default=4)
    p.add_argument("--sampler-seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    _add_common(p)
    p.set_defaults(func=cmd_vartime)

    p = sub.add_parser("edges", help="edge counting with degree and neighbour queries")
    _add_graph(p)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=1 / 3)
    _add_common(p)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("triangles", help="constant-factor triangle counting")
    _add_graph(p)
    p.add_argument("--eps", type=float, default=0.5)
    _add_common(p, trials=3)
    p.set_defaults(func=cmd_triangles)

    p = sub.add_parser("fk", help="frequency moment of a turnstile stream")
    p.add_argument("--stream", help="file of 'i lambda' updates with 1-based indices")
    p.add_argument("--vector", help="comma-separated final vector, used instead of --stream")
    p.add_argument("--k", type=float, default=3.0)
    p.add_argument("--passes-budget", type=int, default=1, help="pass parameter P")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--delta", type=float, default=1 / 3)
    _add_common(p)
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("sweep", help="cost of mean estimation across Delta or eps")
    p.add_argument("--family", choices=sorted(FAMILIES), default="two-point")
    p.add_argument("--algorithm", choices=["basic", "fast", "auto", "implicit", "classical"], default="fast")
    p.add_argument("--vary", choices=["delta-bound", "eps"], default="delta-bound")
    p.add_argument("--values", default="2,4,8,16")
    p.add_argument("--delta-bound", type=float, default=4.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    _add_common(p, trials=10)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="quick invariant checks")
    _add_common(p, trials=1)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        summary = args.func(args)
    except (UsageError, ValueError) as e:
        print(f"qcheb {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps({k: summary[k] for k in ("run_dir", "trials", "success_frequency", "passed")}, sort_keys=True))
    return EXIT_PASS if summary["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
