"""Command-line front end: ``hawkesnet <command> [options]``.

Exit codes: 0 on success, 2 on invalid arguments, unreadable inputs or
estimation failures reported by the library.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import io
from .errors import HawkesError
from .estimate import GraphEstimate, SkeletonEstimate, estimate_graph, estimate_skeleton
from .graph import Skeleton, WeightedGraph, analyze
from .kernelfit import assemble_parametric, fit_kernel, suggest_family
from .simulate import SimConfig, simulate
from .study import StudyConfig, coverage_table, fit_table, run_study, skeleton_table


class UsageError(Exception):
    """Invalid flag value; the message starts with the flag name."""


def _positive(flag, x):
    if not (math.isfinite(x) and x > 0):
        raise UsageError(f"{flag}: must be a finite number > 0 (got {x:g})")
    return x


def _alpha(flag, x, allow_one=True):
    if not (0 < x < 1 or (allow_one and x == 1)):
        raise UsageError(f"{flag}: must lie in (0, 1{']' if allow_one else ')'} (got {x:g})")
    return x


def _float_list(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _edge(text):
    try:
        i, j = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an edge 'i,j', got {text!r}") from None
    return (i, j)


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("HAWKESNET_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"HAWKESNET_SEED: expected an integer (got {env!r})") from None


def _load(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what}: no such file {path!r}")
    return path


def _write(path, text):
    Path(path).write_text(text)


# -- commands ------------------------------------------------------------------

def cmd_simulate(args, out):
    m = io.read_model(_load(args.model, "--model"))
    _positive("--horizon", args.horizon)
    if args.burn_in is not None and not (math.isfinite(args.burn_in) and args.burn_in >= 0):
        raise UsageError(f"--burn-in: must be >= 0 (got {args.burn_in:g})")
    seed = _seed(args)
    if not 0 <= seed < 2**64:
        raise UsageError(f"--seed: must be an unsigned 64-bit integer (got {seed})")
    s = simulate(m, SimConfig(args.horizon, burn_in=args.burn_in, seed=seed))
    io.write_stream(s, args.out)
    print(f"wrote {len(s)} events to {args.out}", file=out)
    print("component,events", file=out)
    for j, n in enumerate(s.counts(), start=1):
        print(f"{j},{n}", file=out)
    print(f"truncated families: {s.truncations}", file=out)


def _check_bins(flag, delta, support, horizon):
    _positive(flag, delta)
    _positive("--support", support)
    if delta > support:
        raise UsageError(f"{flag}: bin width {delta:g} exceeds --support {support:g}")
    if support >= horizon:
        raise UsageError(f"--support: {support:g} must be below the stream horizon {horizon:g}")


def cmd_skeleton(args, out):
    s = io.read_stream(_load(args.input, "--in"))
    _check_bins("--delta-skel", args.delta_skel, args.support, s.horizon)
    _alpha("--alpha-skel", args.alpha_skel)
    est = estimate_skeleton(s, args.delta_skel, args.support, args.alpha_skel, ridge=args.ridge)
    io.write_json(est, args.out)
    if args.dot:
        _write(args.dot, io.export_dot(est))
    print(f"{len(est.edges)} edges", file=out)
    print("from,to,a_hat,sigma,included", file=out)
    for i in range(1, est.d + 1):
        for j in range(1, est.d + 1):
            print(f"{i},{j},{est.a_hat[i - 1, j - 1]:.4f},{est.sigma_hat[i - 1, j - 1]:.4f},"
                  f"{int((i, j) in est.edges)}", file=out)


def _read_skeleton(path, d) -> Skeleton:
    doc = json.loads(Path(_load(path, "--skeleton")).read_text())
    if doc.get("type") is None and "kernels" in doc:
        return Skeleton(d, frozenset(io.model_from_dict(doc).kernels))
    obj = io.from_dict(doc)
    if isinstance(obj, (SkeletonEstimate, GraphEstimate)):
        obj = obj.skeleton
    elif isinstance(obj, WeightedGraph):
        obj = obj.skeleton()
    if obj.d != d:
        raise UsageError(f"--skeleton: has d={obj.d} but the stream has d={d}")
    return obj


def cmd_graph(args, out):
    s = io.read_stream(_load(args.input, "--in"))
    skel = _read_skeleton(args.skeleton, s.d)
    _check_bins("--delta-graph", args.delta_graph, args.support, s.horizon)
    _alpha("--alpha-graph", args.alpha_graph, allow_one=False)
    if args.alpha_vertex is not None:
        _alpha("--alpha-vertex", args.alpha_vertex, allow_one=False)
    est = estimate_graph(s, skel, args.delta_graph, args.support, args.alpha_graph, args.alpha_vertex,
                         ridge=args.ridge, two_sided=not args.one_sided)
    io.write_json(est, args.out)
    if args.dot:
        _write(args.dot, io.export_dot(est))
    if args.grid_csv:
        _write(args.grid_csv, io.kernel_grid_csv(est))
    for j, msg in est.failures.items():
        print(f"warning: vertex {j} not estimated: {msg}", file=sys.stderr)
    red = est.redundant_vertices()
    if red:
        print(f"warning: redundant vertices {sorted(red)}; consider raising --alpha-graph/--alpha-vertex "
              f"or the skeleton's alpha", file=sys.stderr)
    print("vertex,eta_hat,sigma,ci_lo,ci_hi,significant", file=out)
    for v in est.vertices:
        print(f"{v.j},{v.eta_hat:.4f},{v.sigma:.4f},{v.ci.lo:.4f},{v.ci.hi:.4f},{int(v.significant)}", file=out)
    print("from,to,a_hat,sigma,ci_lo,ci_hi,significant", file=out)
    for (i, j), e in est.edges.items():
        print(f"{i},{j},{e.a_hat:.4f},{e.sigma:.4f},{e.ci.lo:.4f},{e.ci.hi:.4f},{int(e.significant)}", file=out)


def cmd_fit(args, out):
    est = io.read_json(_load(args.graph, "--graph"))
    if not isinstance(est, GraphEstimate):
        raise UsageError(f"--graph: {args.graph!r} is not a graph estimate")
    stream = io.read_stream(_load(args.input, "--in")) if args.input else None
    edges = sorted(est.significant_edges())
    fits = {}
    print("from,to,family,a_hat,theta,sse,converged", file=out)
    for e in edges:
        grid = list(est.edges[e].grid)
        family = args.family
        if family == "auto":
            family = suggest_family(grid, est.delta).best
        f = fit_kernel(grid, est.delta, family, edge=e)
        fits[e] = f
        theta = " ".join(f"{x:.4g}" for x in f.theta_hat) if f.family != "grid" else f"{len(f.theta_hat)} cells"
        print(f"{e[0]},{e[1]},{f.family},{f.a_hat:.4f},{theta},{f.sse:.4g},{int(f.converged)}", file=out)
    pm = assemble_parametric(est, fits, stream)
    if pm.clamped:
        print(f"warning: negative immigration intensities clamped for {list(pm.clamped)}", file=sys.stderr)
    if pm.supercritical:
        print(f"warning: fitted model is not subcritical (spectral radius {pm.spectral_radius:.4f})",
              file=sys.stderr)
    if args.out:
        io.write_model(pm.model, args.out)
        print(f"wrote model to {args.out}", file=out)


def _fmt_row(xs):
    return ",".join(f"{x:.2f}" for x in xs)


def cmd_analyze(args, out):
    if (args.model is None) == (args.graph is None):
        raise UsageError("--model/--graph: give exactly one of them")
    if args.model:
        g = WeightedGraph.from_model(io.read_model(_load(args.model, "--model")))
    else:
        obj = io.read_json(_load(args.graph, "--graph"))
        if isinstance(obj, GraphEstimate):
            g = obj.to_weighted_graph(significant_only=True)
        elif isinstance(obj, WeightedGraph):
            g = obj
        else:
            raise UsageError(f"--graph: {args.graph!r} carries no weights")
    r = analyze(g)
    print(f"spectral radius: {r.spectral_radius:.6f}", file=out)
    print(f"subcritical: {'yes' if r.subcritical else 'no'}", file=out)
    print("weakly connected components: "
          + " ".join("{" + ",".join(map(str, c)) + "}" for c in r.weak_components), file=out)
    print(f"strongly connected: {'yes' if r.strongly_connected else 'no'}", file=out)
    print(f"sources: {sorted(r.sources)}", file=out)
    print(f"sinks: {sorted(r.sinks)}", file=out)
    print(f"redundant: {sorted(r.redundant)}", file=out)
    if r.cascade is not None:
        print("vertex," + ",".join(str(j) for j in range(1, g.d + 1)), file=out)
        print("cascade," + _fmt_row(r.cascade), file=out)
        print("feedback," + _fmt_row(r.feedback), file=out)
        if r.undefined_feedback:
            print(f"feedback undefined (reported as 0) for {sorted(r.undefined_feedback)}", file=out)


def cmd_study(args, out):
    m = io.read_model(_load(args.model, "--model"))
    if args.nsim < 1:
        raise UsageError(f"--nsim: must be >= 1 (got {args.nsim})")
    if args.jobs < 1:
        raise UsageError(f"--jobs: must be >= 1 (got {args.jobs})")
    _positive("--horizon", args.horizon)
    for dk in args.delta_skel:
        _check_bins("--delta-skel", dk, args.support, args.horizon)
    for ak in args.alpha_skel:
        _alpha("--alpha-skel", ak)
    _check_bins("--delta-graph", args.delta_graph, args.support, args.horizon)
    _alpha("--alpha-graph", args.alpha_graph, allow_one=False)
    for i, j in args.fit_edge:
        if not (1 <= i <= m.d and 1 <= j <= m.d):
            raise UsageError(f"--fit-edge: {i},{j} outside [1, {m.d}]")
    cfg = StudyConfig(
        nsim=args.nsim, horizon=args.horizon, burn_in=args.burn_in, support=args.support,
        delta_skel=args.delta_skel, alpha_skel=args.alpha_skel, delta_graph=args.delta_graph,
        alpha_graph=args.alpha_graph, coverage=args.coverage, fit_edges=tuple(args.fit_edge),
        seed=_seed(args))
    report = run_study(m, cfg, jobs=args.jobs)
    outp = Path(args.out)
    _write(outp, skeleton_table(report))
    print(skeleton_table(report), end="", file=out)
    if report.coverage_rows:
        p = outp.with_name(outp.stem + "_coverage.csv")
        _write(p, coverage_table(report))
        print(coverage_table(report), end="", file=out)
    if report.fit_rows:
        _write(outp.with_name(outp.stem + "_fits.csv"), fit_table(report))
    print(f"replications: {report.n_ok} ok, {len(report.failures)} failed; "
          f"truncated families: {report.truncations}", file=out)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkesnet", description="Hawkes skeleton and graph estimation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a model by branching construction")
    s.add_argument("--model", required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--burn-in", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("skeleton", help="estimate the Hawkes skeleton of an event stream")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--delta-skel", type=float, default=1.0)
    s.add_argument("--support", type=float, default=5.0)
    s.add_argument("--alpha-skel", type=float, default=0.05)
    s.add_argument("--ridge", action="store_true", help="regularize a singular design instead of failing")
    s.add_argument("--out", required=True)
    s.add_argument("--dot")
    s.set_defaults(func=cmd_skeleton)

    s = sub.add_parser("graph", help="estimate vertex and edge weights given a skeleton")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--skeleton", required=True)
    s.add_argument("--delta-graph", type=float, default=0.1)
    s.add_argument("--support", type=float, default=5.0)
    s.add_argument("--alpha-graph", type=float, default=0.05)
    s.add_argument("--alpha-vertex", type=float)
    s.add_argument("--one-sided", action="store_true", help="intervals with half-width sigma * z_{1-alpha}")
    s.add_argument("--ridge", action="store_true")
    s.add_argument("--out", required=True)
    s.add_argument("--dot")
    s.add_argument("--grid-csv")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("fit", help="fit parametric kernels to a graph estimate")
    s.add_argument("--graph", required=True)
    s.add_argument("--family", choices=["auto", "gamma", "uniform", "exp", "grid"], default="auto")
    s.add_argument("--in", dest="input", help="event stream for the empirical intensity")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze", help="graph analytics of a model or estimated graph")
    s.add_argument("--model")
    s.add_argument("--graph")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("study", help="Monte-Carlo simulation study")
    s.add_argument("--model", required=True)
    s.add_argument("--nsim", type=int, default=50)
    s.add_argument("--horizon", type=float, default=500.0)
    s.add_argument("--burn-in", type=float)
    s.add_argument("--support", type=float, default=5.0)
    s.add_argument("--delta-skel", type=_float_list, default=(1.0,))
    s.add_argument("--alpha-skel", type=_float_list, default=(0.005, 0.01, 0.05, 0.1, 0.25))
    s.add_argument("--delta-graph", type=float, default=0.25)
    s.add_argument("--alpha-graph", type=float, default=0.05)
    s.add_argument("--coverage", choices=["all", "true", "none"], default="all")
    s.add_argument("--fit-edge", type=_edge, action="append", default=[])
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args, out)
    except UsageError as exc:
        print(f"hawkesnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (HawkesError, OSError) as exc:
        print(f"hawkesnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
