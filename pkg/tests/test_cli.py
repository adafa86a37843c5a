import io as _io
import json
import math

import numpy as np
import pytest

from hawkesnet import io
from hawkesnet.cli import main
from hawkesnet.model import GammaDensity, HawkesModel, example_model
from hawkesnet.study import StudyConfig, coverage_table, fit_summary, replication_seed, run_study, \
    skeleton_table, weight_class

from conftest import univariate


def run(argv):
    buf = _io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    model = d / "m.json"
    io.write_model(example_model(), model)
    stream = d / "s.csv"
    code, _ = run(["simulate", "--model", model, "--horizon", 500, "--seed", 1, "--out", stream])
    assert code == 0
    return d, model, stream


def test_simulate_deterministic(files, tmp_path):
    _, model, stream = files
    again = tmp_path / "again.csv"
    code, text = run(["simulate", "--model", model, "--horizon", 500, "--seed", 1, "--out", again])
    assert code == 0
    assert again.read_bytes() == stream.read_bytes()
    assert text.startswith("wrote ") and "component,events" in text


def test_seed_from_environment(files, tmp_path, monkeypatch):
    _, model, stream = files
    monkeypatch.setenv("HAWKESNET_SEED", "1")
    p = tmp_path / "env.csv"
    assert run(["simulate", "--model", model, "--horizon", 500, "--out", p])[0] == 0
    assert p.read_bytes() == stream.read_bytes()
    monkeypatch.setenv("HAWKESNET_SEED", "oops")
    assert run(["simulate", "--model", model, "--horizon", 500, "--out", p])[0] == 2


def test_negative_horizon_names_flag(files, tmp_path, capsys):
    _, model, _ = files
    code, _ = run(["simulate", "--model", model, "--horizon", -1, "--seed", 1, "--out", tmp_path / "x.csv"])
    assert code == 2
    assert "--horizon" in capsys.readouterr().err


def test_supercritical_model(tmp_path, capsys):
    m = tmp_path / "super.json"
    m.write_text(json.dumps({"d": 1, "eta": [1.0], "kernels": [
        {"from": 1, "to": 1, "a": 1.2, "family": "exp", "params": {"rate": 1.0}}]}))
    code, _ = run(["simulate", "--model", m, "--horizon", 10, "--seed", 1, "--out", tmp_path / "x.csv"])
    assert code == 2
    assert "NotSubcritical" in capsys.readouterr().err


def test_missing_file_names_flag(tmp_path, capsys):
    code, _ = run(["simulate", "--model", tmp_path / "nope.json", "--horizon", 10, "--out", tmp_path / "x"])
    assert code == 2
    assert "--model" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert run(["simulate"])[0] == 2
    assert run(["bogus"])[0] == 2


def test_skeleton(files, tmp_path):
    _, _, stream = files
    out = tmp_path / "sk.json"
    dot = tmp_path / "sk.dot"
    code, text = run(["skeleton", "--in", stream, "--delta-skel", 1, "--support", 5, "--alpha-skel", 0.05,
                      "--out", out, "--dot", dot])
    assert code == 0
    est = io.read_json(out)
    assert {(1, 2), (2, 4), (8, 9)} <= est.edges
    assert text.splitlines()[0] == f"{len(est.edges)} edges"
    assert len(text.splitlines()) == 2 + 100
    assert dot.read_text().startswith("digraph")


def test_skeleton_alpha_one_full(files, tmp_path):
    _, _, stream = files
    code, text = run(["skeleton", "--in", stream, "--alpha-skel", 1, "--out", tmp_path / "sk.json"])
    assert code == 0 and text.startswith("100 edges")


@pytest.mark.parametrize("extra,flag", [
    (["--delta-skel", 6], "--delta-skel"),
    (["--alpha-skel", 0], "--alpha-skel"),
    (["--support", 600], "--support"),
])
def test_skeleton_preconditions(files, tmp_path, capsys, extra, flag):
    _, _, stream = files
    code, _ = run(["skeleton", "--in", stream, "--out", tmp_path / "x.json", *extra])
    assert code == 2
    assert flag in capsys.readouterr().err


def test_graph_fit_analyze_pipeline(files, tmp_path):
    _, model, stream = files
    out, dot, grid = tmp_path / "g.json", tmp_path / "g.dot", tmp_path / "grid.csv"
    code, text = run(["graph", "--in", stream, "--skeleton", model, "--delta-graph", 0.1,
                      "--out", out, "--dot", dot, "--grid-csv", grid])
    assert code == 0
    est = io.read_json(out)
    assert set(est.edges) == set(example_model().kernels)
    assert "vertex,eta_hat" in text and dot.exists()
    assert len(grid.read_text().splitlines()) == 1 + 50 * len(est.edges)

    fitted = tmp_path / "fit.json"
    code, text = run(["fit", "--graph", out, "--in", stream, "--out", fitted])
    assert code == 0
    pm = io.read_model(fitted)
    assert pm.d == 10
    assert set(pm.kernels) <= est.significant_edges()

    code, text = run(["analyze", "--graph", out])
    assert code == 0 and "spectral radius" in text


def test_graph_with_skeleton_json(files, tmp_path):
    _, _, stream = files
    sk = tmp_path / "sk.json"
    assert run(["skeleton", "--in", stream, "--out", sk])[0] == 0
    code, _ = run(["graph", "--in", stream, "--skeleton", sk, "--out", tmp_path / "g.json", "--one-sided"])
    assert code == 0
    assert io.read_json(tmp_path / "g.json").two_sided is False


def test_graph_dimension_mismatch(files, tmp_path, capsys):
    _, _, stream = files
    sk = tmp_path / "sk.json"
    io.write_json(io.from_dict({"type": "skeleton", "d": 3, "edges": [[1, 2]]}), sk)
    code, _ = run(["graph", "--in", stream, "--skeleton", sk, "--out", tmp_path / "g.json"])
    assert code == 2 and "--skeleton" in capsys.readouterr().err


def exact_grid_estimate(files, tmp_path):
    """Graph estimate whose edge (1, 2) grid holds exact samples of 1.5 * Gamma(6, 4)."""
    _, _, stream = files
    g = tmp_path / "g.json"
    sk = tmp_path / "sk.json"
    io.write_json(io.from_dict({"type": "skeleton", "d": 10, "edges": [[1, 2]]}), sk)
    assert run(["graph", "--in", stream, "--skeleton", sk, "--out", g])[0] == 0
    doc = json.loads(g.read_text())
    k = np.arange(1, 51) * 0.1
    doc["edges"][0]["grid"] = list(1.5 * GammaDensity(6.0, 4.0).pdf(k))
    doc["edges"][0]["significant"] = True
    g.write_text(json.dumps(doc))
    return g


@pytest.mark.parametrize("family", ["gamma", "auto"])
def test_fit_exact_grid(files, tmp_path, family):
    g = exact_grid_estimate(files, tmp_path)
    code, text = run(["fit", "--graph", g, "--family", family, "--out", tmp_path / "m.json"])
    assert code == 0
    row = text.splitlines()[1].split(",")
    assert row[:3] == ["1", "2", "gamma"]
    assert float(row[3]) == pytest.approx(1.5, abs=1e-4)
    assert [float(x) for x in row[4].split()] == pytest.approx([6.0, 4.0], rel=1e-3)
    m = io.read_model(tmp_path / "m.json")
    w = m.kernels[(1, 2)].w
    assert (w.shape, w.rate) == pytest.approx((6.0, 4.0), rel=1e-4)


def test_fit_rejects_non_graph(files, tmp_path, capsys):
    d, model, _ = files
    code, _ = run(["fit", "--graph", model])
    assert code == 2


def test_analyze_model(files):
    _, model, _ = files
    code, text = run(["analyze", "--model", model])
    assert code == 0
    lines = text.splitlines()
    assert "subcritical: yes" in lines
    cascade = [float(x) for x in next(ln for ln in lines if ln.startswith("cascade,")).split(",")[1:]]
    feedback = [float(x) for x in next(ln for ln in lines if ln.startswith("feedback,")).split(",")[1:]]
    assert len(cascade) == len(feedback) == 10
    assert sum(cascade) == pytest.approx(1.0, abs=0.02)
    assert feedback[6] == pytest.approx(0.65, abs=0.005)
    assert run(["analyze"])[0] == 2


# -- study -------------------------------------------------------------------------

def test_replication_seed():
    assert replication_seed(0, 3) == replication_seed(0, 3)
    assert len({replication_seed(0, r) for r in range(100)}) == 100
    assert replication_seed(1, 0) != replication_seed(0, 1)


@pytest.mark.parametrize("a,cls", [(1.5, "heavy"), (1.0, "heavy"), (0.5, "light"), (0.2, "light"),
                                   (0.1, "super.light")])
def test_weight_class(a, cls):
    assert weight_class(a) == cls


def test_study_single_replication(files, tmp_path):
    _, model, _ = files
    out = tmp_path / "study.csv"
    code, text = run(["study", "--model", model, "--nsim", 1, "--horizon", 200, "--alpha-skel", "0.05,0.25",
                      "--coverage", "true", "--fit-edge", "1,2", "--seed", 3, "--out", out])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "delta.skel,alpha.skel,nedges,total,heavy,light,super.light,zero"
    for row in rows[1:]:
        rates = [float(x) for x in row.split(",")[4:]]
        assert all(r in (0.0, 1.0) or 0 < r < 1 for r in rates)
        assert float(row.split(",")[4]) in (0.0, 1.0)  # a single sample of three heavy edges is all or none
    cov = (tmp_path / "study_coverage.csv").read_text().splitlines()
    assert cov[0] == "applied.skeleton,vertex.weight.coverage,edge.weight.coverage"
    assert cov[1].startswith("true skeleton,")
    fits = (tmp_path / "study_fits.csv").read_text().splitlines()
    assert fits[1].startswith("0,1,2,gamma,")


def test_study_rejects_bad_flags(files, tmp_path, capsys):
    _, model, _ = files
    for extra, flag in ((["--nsim", 0], "--nsim"), (["--jobs", 0], "--jobs"),
                        (["--fit-edge", "11,1"], "--fit-edge"), (["--alpha-skel", "0.05,x"], "--alpha-skel")):
        code, _ = run(["study", "--model", model, "--out", tmp_path / "s.csv", *extra])
        assert code == 2
        assert flag in capsys.readouterr().err


def test_study_monotone_in_alpha():
    k = example_model().kernels
    m = HawkesModel(3, (1.0, 1.0, 1.0), {(1, 2): k[(1, 2)], (2, 3): k[(9, 7)]})
    cfg = StudyConfig(nsim=10, horizon=300.0, alpha_skel=(0.01, 0.1, 0.5), coverage="none", seed=5)
    rep = run_study(m, cfg)
    nedges = [r["nedges"] for r in rep.skeleton_rows]
    zero = [r["zero"] for r in rep.skeleton_rows]
    assert nedges == sorted(nedges) and zero == sorted(zero, reverse=True)
    assert skeleton_table(rep).splitlines()[1].startswith("1,0.01,")
    assert rep.n_ok == 10 and not rep.coverage_rows


def test_study_report_helpers():
    m = univariate(a=0.5)
    rep = run_study(m, StudyConfig(nsim=4, horizon=200.0, alpha_skel=(0.05,), coverage="true",
                                   fit_edges=((1, 1),), seed=2))
    assert coverage_table(rep).splitlines()[1].startswith("true skeleton,")
    (edge, med), = fit_summary(rep).items()
    assert edge == (1, 1) and len(med) == 3
    assert all(math.isfinite(x) for x in med)


def test_study_failures_are_counted():
    # a 4-unit horizon with support 3 leaves too few bins for the regression
    m = univariate(a=0.5)
    rep = run_study(m, StudyConfig(nsim=3, horizon=4.0, support=3.0, delta_skel=(1.0,), alpha_skel=(0.05,),
                                   coverage="none", seed=0))
    assert len(rep.failures) == 3 and rep.n_ok == 0
    assert all("InsufficientData" in msg for _, msg in rep.failures)
