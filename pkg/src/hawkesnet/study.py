"""Monte-Carlo replication study: simulate, estimate skeleton and graph, fit kernels.

Every replication derives its own seed from ``(seed, replication index)``,
so the report is identical for any number of worker processes.
"""
from __future__ import annotations

import io as _io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import HawkesError
from .estimate import estimate_graph, estimate_skeleton
from .graph import Skeleton
from .kernelfit import fit_kernel
from .model import HawkesModel, branching_matrix
from .simulate import SimConfig, simulate

log = logging.getLogger(__name__)

HEAVY, LIGHT = 1.0, 0.2
SKELETON_COLUMNS = ["delta.skel", "alpha.skel", "nedges", "total", "heavy", "light", "super.light", "zero"]
COVERAGE_COLUMNS = ["applied.skeleton", "vertex.weight.coverage", "edge.weight.coverage"]
FIT_COLUMNS = ["rep", "from", "to", "family", "a_hat", "theta1", "theta2", "sse", "converged"]


@dataclass(frozen=True)
class StudyConfig:
    nsim: int = 50
    horizon: float = 500.0
    burn_in: float | None = None
    support: float = 5.0
    delta_skel: tuple = (1.0,)
    alpha_skel: tuple = (0.005, 0.01, 0.05, 0.1, 0.25)
    delta_graph: float = 0.25
    alpha_graph: float = 0.05
    coverage: str = "all"  # "all", "true" or "none"
    fit_edges: tuple = ()
    seed: int = 0


def replication_seed(seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep),))
    return int(ss.generate_state(1, np.uint64)[0])


def weight_class(a: float) -> str:
    if a >= HEAVY:
        return "heavy"
    if a >= LIGHT:
        return "light"
    return "super.light"


def _coverage_counts(est, A, eta):
    vcov = sum(1 for v in est.vertices if eta[v.j - 1] in v.ci)
    ecov = sum(1 for (i, j), e in est.edges.items() if A[i - 1, j - 1] in e.ci)
    return vcov, len(est.vertices), ecov, len(est.edges)


def _replicate(args):
    from .io import model_from_dict

    model_doc, cfg, rep = args
    m = model_from_dict(model_doc)
    A = branching_matrix(m)
    true_edges = frozenset(m.kernels)
    try:
        stream = simulate(m, SimConfig(cfg.horizon, burn_in=cfg.burn_in, seed=replication_seed(cfg.seed, rep)))
        skel_rows, skeletons = {}, {}
        for dk in cfg.delta_skel:
            for ak in cfg.alpha_skel:
                se = estimate_skeleton(stream, dk, cfg.support, ak)
                hits = {"heavy": 0, "light": 0, "super.light": 0}
                for e in true_edges & se.edges:
                    hits[weight_class(A[e[0] - 1, e[1] - 1])] += 1
                zero = m.d * m.d - len(true_edges | se.edges)
                skel_rows[(dk, ak)] = (len(se.edges), hits, zero)
                if dk == cfg.delta_skel[0]:
                    skeletons[f"alpha.skel = {ak:g}"] = se.skeleton
        cov_rows, graphs = {}, {}
        if cfg.coverage != "none" or cfg.fit_edges:
            applied = {}
            if cfg.coverage == "all":
                applied.update(skeletons)
            applied["true skeleton"] = Skeleton(m.d, true_edges)
            for name, sk in applied.items():
                est = estimate_graph(stream, sk, cfg.delta_graph, cfg.support, cfg.alpha_graph)
                graphs[name] = est
                if cfg.coverage != "none":
                    cov_rows[name] = _coverage_counts(est, A, m.eta)
        fits = []
        for i, j in cfg.fit_edges:
            est = graphs["true skeleton"].edges.get((i, j))
            if est is None:
                continue
            family = m.kernels[(i, j)].w.family if (i, j) in m.kernels else "gamma"
            f = fit_kernel(list(est.grid), cfg.delta_graph, family, edge=(i, j))
            th = tuple(f.theta_hat) + (math.nan, math.nan)
            fits.append((rep, i, j, family, f.a_hat, th[0], th[1], f.sse, f.converged))
        return {"ok": True, "skel": skel_rows, "cov": cov_rows, "fits": fits,
                "truncations": stream.truncations}
    except (HawkesError, np.linalg.LinAlgError) as exc:
        return {"ok": False, "rep": rep, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class StudyReport:
    config: StudyConfig
    skeleton_rows: list = field(default_factory=list)
    coverage_rows: list = field(default_factory=list)
    fit_rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    truncations: int = 0

    @property
    def n_ok(self) -> int:
        return self.config.nsim - len(self.failures)


def run_study(m: HawkesModel, cfg: StudyConfig, jobs: int = 1) -> StudyReport:
    """Run ``cfg.nsim`` replications on ``jobs`` worker processes and aggregate."""
    from .io import model_to_dict

    doc = model_to_dict(m)
    tasks = [(doc, cfg, rep) for rep in range(cfg.nsim)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, cfg.nsim // (4 * jobs))))
    else:
        results = [_replicate(t) for t in tasks]

    report = StudyReport(cfg)
    ok = [r for r in results if r["ok"]]
    for r in results:
        if not r["ok"]:
            log.warning("replication %d failed: %s", r["rep"], r["error"])
            report.failures.append((r["rep"], r["error"]))
    report.truncations = sum(r["truncations"] for r in ok)
    n = len(ok)
    true_edges = list(m.kernels)
    A = branching_matrix(m)
    n_class = {"heavy": 0, "light": 0, "super.light": 0}
    for i, j in true_edges:
        n_class[weight_class(A[i - 1, j - 1])] += 1
    n_zero = m.d * m.d - len(true_edges)

    def rate(x, total):
        return x / total if total else math.nan

    for dk in cfg.delta_skel:
        for ak in cfg.alpha_skel:
            rows = [r["skel"][(dk, ak)] for r in ok]
            hits = {c: sum(h[c] for _, h, _ in rows) for c in n_class}
            report.skeleton_rows.append({
                "delta.skel": dk, "alpha.skel": ak,
                "nedges": rate(sum(ne for ne, _, _ in rows), n),
                "total": rate(sum(hits.values()), n * len(true_edges)),
                "heavy": rate(hits["heavy"], n * n_class["heavy"]),
                "light": rate(hits["light"], n * n_class["light"]),
                "super.light": rate(hits["super.light"], n * n_class["super.light"]),
                "zero": rate(sum(z for _, _, z in rows), n * n_zero),
            })
    if ok and cfg.coverage != "none":
        for name in ok[0]["cov"]:
            c = np.sum([r["cov"][name] for r in ok], axis=0)
            report.coverage_rows.append({
                "applied.skeleton": name,
                "vertex.weight.coverage": rate(c[0], c[1]),
                "edge.weight.coverage": rate(c[2], c[3]),
            })
    for r in ok:
        report.fit_rows.extend(r["fits"])
    return report


def _cell(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(x)
    return "nan" if not math.isfinite(x) else f"{x:.4f}"


def _table(columns, rows) -> str:
    buf = _io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        vals = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        buf.write(",".join(_cell(v) for v in vals) + "\n")
    return buf.getvalue()


def skeleton_table(report: StudyReport) -> str:
    rows = [dict(r, **{"delta.skel": f"{r['delta.skel']:g}", "alpha.skel": f"{r['alpha.skel']:g}"})
            for r in report.skeleton_rows]
    return _table(SKELETON_COLUMNS, rows)


def coverage_table(report: StudyReport) -> str:
    return _table(COVERAGE_COLUMNS, report.coverage_rows)


def fit_table(report: StudyReport) -> str:
    return _table(FIT_COLUMNS, report.fit_rows)


def fit_summary(report: StudyReport) -> dict:
    """Median ``(a_hat, theta1, theta2)`` per fitted edge."""
    out = {}
    for edge in sorted({(r[1], r[2]) for r in report.fit_rows}):
        rows = np.array([[r[4], r[5], r[6]] for r in report.fit_rows if (r[1], r[2]) == edge])
        out[edge] = tuple(float(x) for x in np.median(rows, axis=0))
    return out
