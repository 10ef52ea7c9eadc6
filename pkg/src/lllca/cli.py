"""Command line: check, solve, lca, verify, witness, gen, sweep.

Exit codes: 0 success, 1 usage or malformed input, 2 infeasible parameters,
3 experiment-level failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import io
from .apps.hypergraph import hypergraph_condition
from .apps.sat import check_sat_theorem
from .conditions import ParameterError, check_general_lll, derive_params, feasible_interval, radius_for
from .csp import InstanceError
from .engine import BUDGET_CAP, resample_full, theorem7_budget
from .experiments import (
    ExperimentConfig,
    KsatSource,
    gen_block_graph,
    gen_ksat,
    ksat_setup,
    load_source,
    run_experiment,
    summarize,
    sweep,
)
from .lca import substream
from .witness import all_witness_trees, count_trees_by_size

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FAILURE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _source_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--cnf", help="DIMACS CNF file")
    g.add_argument("--gen", metavar="N,K,D", help="random k-CNF with n vars, width k, max occurrence d")
    p.add_argument("--gen-seed", type=int, default=0)


def _source(args):
    if args.cnf:
        return args.cnf
    if args.gen:
        try:
            n, k, d = (int(v) for v in args.gen.split(","))
        except ValueError:
            raise UsageError("--gen expects N,K,D") from None
        return KsatSource(n, k, d, args.gen_seed)
    raise UsageError("give --cnf or --gen")


def _trial_args(p):
    _source_args(p)
    p.add_argument("-q", type=int, default=10, help="queries per trial")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, help="slack (default: k-SAT slack of the formula)")
    p.add_argument("-r", type=int, help="radius override")
    p.add_argument("-t", type=int, help="per-query resampling budget override")
    p.add_argument("-C", type=float, help="budget constant (default 4kd)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("-o", "--output", help="record stream path (default stdout)")


def _config(args, mode):
    return ExperimentConfig(source=_source(args), mode=mode, q=args.q, delta=args.delta,
                            epsilon=args.epsilon, r=args.r, t=args.t, C=args.C, seed=args.seed,
                            trials=args.trials, output=args.output)


def _feasible(cfg, setup) -> None:
    n = setup.inst.n
    if setup.epsilon <= 0:
        raise ParameterError(f"no positive slack (epsilon={setup.epsilon})")
    if cfg.delta <= cfg.q / n**2:
        raise ParameterError(f"delta={cfg.delta} must exceed q/n^2={cfg.q / n**2}")


def _open_out(path):
    return open(path, "w") if path else sys.stdout


def cmd_check(args) -> int:
    if args.hypergraph:
        with open(args.hypergraph, "rb") as fh:
            cond = hypergraph_condition(io.parse_hypergraph(fh.read()))
        print(json.dumps({"lhs": cond.lhs, "rhs": cond.rhs, "holds": cond.holds, "epsilon": cond.epsilon}))
        return EXIT_OK
    setup = ksat_setup(load_source(_source(args)), args.epsilon)
    inst, cnf = setup.inst, setup.cnf
    thm = check_sat_theorem(cnf.k, cnf.d, args.eta, 0.0)
    lop = check_general_lll(inst, setup.measure, setup.psi, lopsided=True)
    out = {
        "n": inst.n, "m": inst.m, "k": inst.k, "d": inst.d,
        "sat_condition": {"holds": thm.holds, "lhs": thm.lhs, "rhs": thm.rhs, "slack": thm.slack},
        "lopsided_lll": {"holds": lop.holds, "max_lhs": float(lop.lhs.max()), "epsilon": lop.epsilon},
        "epsilon": setup.epsilon,
    }
    if setup.epsilon > 0 and args.q and args.delta > args.q / inst.n**2:
        params = derive_params(inst, np.full(inst.m, setup.psi), setup.epsilon)
        r = radius_for(args.q, args.delta, setup.epsilon, params.eta, inst.n)
        out["params"] = {k: getattr(params, k) for k in ("zeta", "eta", "xi", "lam")}
        out["radius"] = r
        if args.budget:
            iv = feasible_interval(args.q, args.budget, args.delta, setup.epsilon, params)
            out["feasible"] = {"r_lo": iv.r_lo, "r_hi": iv.r_hi, "radii": list(iv.radii)}
    print(json.dumps(out))
    return EXIT_OK if thm.holds or lop.holds else EXIT_INFEASIBLE


def cmd_solve(args) -> int:
    setup = ksat_setup(load_source(_source(args)), args.epsilon)
    rng = substream(args.seed, 0)
    traj = resample_full(setup.inst, setup.measure, rng, args.max_steps or BUDGET_CAP,
                         log=bool(args.trajectory))
    if args.trajectory:
        with open(args.trajectory, "w") as fh:
            fh.write(io.write_trajectory(traj))
    if not traj.terminated:
        print(json.dumps({"terminated": False, "resamples": traj.n_steps}))
        return EXIT_FAILURE
    info = {"terminated": True, "resamples": traj.n_steps, "seed": args.seed}
    if setup.epsilon > 0:
        params = derive_params(setup.inst, np.full(setup.inst.m, setup.psi), setup.epsilon)
        info["expected_bound"] = theorem7_budget(params, 0)
    print(json.dumps(info))
    if args.assignment:
        lits = [(v + 1) if traj.final[v] else -(v + 1) for v in range(setup.inst.n)]
        with open(args.assignment, "w") as fh:
            fh.write("v " + " ".join(map(str, lits)) + " 0\n")
    return EXIT_OK


def _run_trials(args, mode) -> int:
    cfg = _config(args, mode)
    setup = ksat_setup(load_source(cfg.source), cfg.epsilon)
    _feasible(cfg, setup)
    out = _open_out(cfg.output)
    try:
        w = io.RecordWriter(out, cfg)
        recs = []
        for rec in run_experiment(cfg, setup):
            w.write(rec)
            recs.append(rec)
        summary = summarize(recs)
        w.write(summary)
    finally:
        if out is not sys.stdout:
            out.close()
    print(json.dumps(summary), file=sys.stderr)
    if args.max_error is not None and summary["error_rate"]["p"] > args.max_error:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_lca(args) -> int:
    return _run_trials(args, "lca")


def cmd_verify(args) -> int:
    return _run_trials(args, "verify")


def cmd_sweep(args) -> int:
    cfg = _config(args, "verify")
    setup = ksat_setup(load_source(cfg.source), cfg.epsilon)
    _feasible(cfg, setup)
    lo, hi = args.r_min, args.r_max
    if hi is None:
        params = derive_params(setup.inst, np.full(setup.inst.m, setup.psi), setup.epsilon)
        hi = radius_for(cfg.q, cfg.delta, setup.epsilon, params.eta, setup.inst.n) + 2
    res = sweep(setup, replace(cfg, t=cfg.t or BUDGET_CAP), range(lo, hi + 1))
    out = _open_out(cfg.output)
    try:
        w = io.RecordWriter(out, cfg)
        for r, rate in zip(res.radii, res.rates):
            w.write({"r": r, "error_rate": rate.as_dict()})
        w.write({"summary": True, "spearman_rho": res.rho, "p_increasing": res.p_increasing,
                 "p_decreasing": res.p_decreasing, "monotone": res.monotone()})
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if res.monotone() else EXIT_FAILURE


def cmd_witness(args) -> int:
    setup = ksat_setup(load_source(_source(args)), args.epsilon)
    if args.count is not None:
        print(json.dumps({"root": args.count, "by_size": count_trees_by_size(setup.inst, args.count, args.max_size)}))
        return EXIT_OK
    traj = resample_full(setup.inst, setup.measure, substream(args.seed, 0))
    for t, tau in enumerate(all_witness_trees(setup.inst, traj.witness), 1):
        print(t, io.write_tree(tau))
    return EXIT_OK


def cmd_gen(args) -> int:
    out = _open_out(args.output)
    try:
        if args.kind == "ksat":
            out.write(io.write_dimacs(gen_ksat(args.n, args.k, args.d, args.seed, args.m)))
        else:
            out.write(io.write_graph(gen_block_graph(args.n, args.block, args.seed)))
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lllca", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="LLL conditions, parameters and radius for an instance")
    _source_args(c)
    c.add_argument("--hypergraph", help="edge-list hypergraph; checks the 2-coloring condition")
    c.add_argument("--epsilon", type=float)
    c.add_argument("--eta", type=float, default=0.0)
    c.add_argument("-q", type=int, default=10)
    c.add_argument("--delta", type=float, default=0.1)
    c.add_argument("--budget", type=float, help="total time budget t for the feasible radius interval")
    c.set_defaults(fn=cmd_check)

    s = sub.add_parser("solve", help="sequential resampling to a satisfying assignment")
    _source_args(s)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--trajectory", help="write the resampling log here")
    s.add_argument("--assignment", help="write the assignment here")
    s.set_defaults(fn=cmd_solve)

    for name, fn, text in (("lca", cmd_lca, "answer random queries"),
                           ("verify", cmd_verify, "answer queries, complete the run, compare")):
        t = sub.add_parser(name, help=text)
        _trial_args(t)
        t.add_argument("--max-error", type=float, help="exit 3 if the error rate exceeds this")
        t.set_defaults(fn=fn)

    w = sub.add_parser("sweep", help="error rate across radii with a fixed budget")
    _trial_args(w)
    w.add_argument("--r-min", type=int, default=0)
    w.add_argument("--r-max", type=int, help="default: computed radius + 2")
    w.set_defaults(fn=cmd_sweep)

    x = sub.add_parser("witness", help="witness trees of a run, or tree counts")
    _source_args(x)
    x.add_argument("--epsilon", type=float)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--count", type=int, metavar="ROOT", help="count trees rooted at this constraint")
    x.add_argument("--max-size", type=int, default=4)
    x.set_defaults(fn=cmd_witness)

    g = sub.add_parser("gen", help="generate instances")
    g.add_argument("kind", choices=["ksat", "graph"])
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-k", type=int, default=8)
    g.add_argument("-d", type=int, default=20)
    g.add_argument("-m", type=int)
    g.add_argument("--block", type=int, default=4, help="side of each K_{b,b} block (graph)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output")
    g.set_defaults(fn=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, io.FormatError, InstanceError, FileNotFoundError) as e:
        print(f"lllca: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as e:
        print(f"lllca: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
