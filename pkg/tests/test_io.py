import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from hawkesnet.errors import BadComponent, InvalidConfig, ParseError, SchemaError, UnsortedEvents
from hawkesnet.estimate import estimate_graph, estimate_skeleton
from hawkesnet.graph import Skeleton, WeightedGraph
from hawkesnet.io import (
    export_dot,
    export_graph,
    format_stream,
    from_dict,
    kernel_grid_csv,
    model_from_dict,
    model_to_dict,
    parse_stream,
    read_json,
    read_model,
    read_stream,
    write_json,
    write_model,
    write_stream,
)
from hawkesnet.model import branching_matrix
from hawkesnet.simulate import EventStream


# -- streams -----------------------------------------------------------------------

def test_empty_file_with_header():
    s = parse_stream("time,component\n")
    assert s.d == 0 and len(s.times) == 0
    assert parse_stream("time,component\n", d=3).d == 3


def test_three_event_fixture(tmp_path):
    p = tmp_path / "three.csv"
    p.write_text("time,component\n0.5,1\n1.25,2\n1.25,1\n")
    s = read_stream(p)
    assert s.d == 2 and s.horizon == 1.25
    assert_array_equal(s.times, [0.5, 1.25, 1.25])
    assert_array_equal(s.components, [1, 1, 2])


def test_unsorted_reports_physical_line():
    text = "# d=2\ntime,component\n1,1\n2,1\n3,2\n\n2.5,1\n"
    with pytest.raises(UnsortedEvents) as exc:
        parse_stream(text)
    assert exc.value.line == 7


@pytest.mark.parametrize("text,err,line", [
    ("time,comp\n1,1\n", ParseError, 1),
    ("", ParseError, 1),
    ("time,component\n1,1,3\n", ParseError, 2),
    ("time,component\nabc,1\n", ParseError, 2),
    ("time,component\n-1,1\n", ParseError, 2),
    ("time,component\nnan,1\n", ParseError, 2),
    ("time,component\n1,x\n", BadComponent, 2),
    ("time,component\n1,0\n", BadComponent, 2),
    ("# d=2\ntime,component\n1,1\n2,3\n", BadComponent, 4),
    ("# horizon=5\ntime,component\n1,1\n6,1\n", ParseError, 4),
])
def test_malformed_streams(text, err, line):
    with pytest.raises(err) as exc:
        parse_stream(text)
    assert exc.value.line == line


def test_declared_metadata_and_override():
    text = "# d=4 horizon=10\ntime,component\n1,1\n"
    s = parse_stream(text)
    assert (s.d, s.horizon) == (4, 10.0)
    s = parse_stream(text, d=5, horizon=20.0)
    assert (s.d, s.horizon) == (5, 20.0)


event_lists = st.lists(
    st.tuples(st.floats(1e-6, 1e6, allow_nan=False), st.integers(1, 6)), max_size=60)


@settings(max_examples=100, deadline=None)
@given(event_lists)
def test_stream_roundtrip(events):
    horizon = max((t for t, _ in events), default=1.0) * 2
    s = EventStream.from_events(6, horizon, events)
    text = format_stream(s)
    back = parse_stream(text)
    assert back.d == 6 and back.horizon == s.horizon
    np.testing.assert_allclose(back.times, s.times, rtol=1e-11)
    # a second pass is exact: the 12-digit decimal form is a fixed point
    assert format_stream(back) == text
    assert parse_stream(text).counts().tolist() == s.counts().tolist()


def test_stream_file_roundtrip(tmp_path, stream10):
    p = tmp_path / "s.csv"
    write_stream(stream10, p)
    back = read_stream(p)
    assert back.d == 10 and back.horizon == stream10.horizon
    assert_array_equal(back.components, stream10.components)
    np.testing.assert_allclose(back.times, stream10.times, rtol=1e-11)


# -- models -------------------------------------------------------------------------

def test_model_roundtrip(tmp_path, model10):
    p = tmp_path / "m.json"
    write_model(model10, p)
    back = read_model(p)
    assert back == model10
    assert_array_equal(branching_matrix(back), branching_matrix(model10))


def test_shipped_model_file(model10):
    from pathlib import Path

    assert read_model(Path(__file__).parent.parent / "models" / "example10.json") == model10


def base_doc():
    return {"d": 2, "eta": [1.0, 0.5],
            "kernels": [{"from": 1, "to": 2, "a": 0.5, "family": "exp", "params": {"rate": 2.0}}]}


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["kernels"][0].update(a=-0.5), "$.kernels[0].a"),
    (lambda d: d["kernels"][0].update(color="red"), "$.kernels[0]"),
    (lambda d: d.update(extra=1), "$"),
    (lambda d: d["kernels"][0]["params"].update(rate=-1), "$.kernels[0].params.rate"),
    (lambda d: d["kernels"][0]["params"].update(shape=1), "$.kernels[0].params"),
    (lambda d: d["kernels"][0].update(family="weibull"), "$.kernels[0].family"),
    (lambda d: d["kernels"][0].update(to=3), "$.kernels[0].to"),
    (lambda d: d.update(eta=[1.0]), "$.eta"),
    (lambda d: d.update(eta=[0.0, 0.0]), "$.eta"),
    (lambda d: d["kernels"].append(dict(d["kernels"][0])), "$.kernels[1]"),
    (lambda d: d["kernels"][0].update(family="uniform", params={"lo": 2.0, "hi": 1.0}), "$.kernels[0].params"),
    (lambda d: d.pop("kernels"), "$"),
])
def test_model_schema_errors(mutate, path):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(SchemaError) as exc:
        model_from_dict(doc)
    assert exc.value.path == path


def test_model_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        read_model(p)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.data())
def test_model_dict_roundtrip(d, data):
    eta = data.draw(st.lists(st.floats(0.01, 5.0), min_size=d, max_size=d))
    pairs = data.draw(st.sets(st.tuples(st.integers(1, d), st.integers(1, d))))
    kernels = []
    for i, j in sorted(pairs):
        fam = data.draw(st.sampled_from(["gamma", "exp", "uniform"]))
        params = {"gamma": {"shape": 2.0, "rate": 3.0}, "exp": {"rate": 1.5},
                  "uniform": {"lo": 0.5, "hi": 1.5}}[fam]
        kernels.append({"from": i, "to": j, "a": 0.9 / d, "family": fam, "params": params})
    doc = {"d": d, "eta": eta, "kernels": kernels}
    m = model_from_dict(doc)
    assert model_from_dict(json.loads(json.dumps(model_to_dict(m)))) == m


# -- estimates and graphs ----------------------------------------------------------

def test_skeleton_and_graph_roundtrip(tmp_path):
    sk = Skeleton(2, frozenset({(1, 2), (2, 2)}))
    g = WeightedGraph(2, (1.0, 0.5), {(1, 2): 0.3})
    for obj in (sk, g):
        assert from_dict(json.loads(export_graph(obj, "json"))) == obj
        write_json(obj, tmp_path / "x.json")
        assert read_json(tmp_path / "x.json") == obj


def test_estimate_roundtrips(tmp_path, stream10, model10):
    se = estimate_skeleton(stream10, 1.0, 5.0, 0.05)
    write_json(se, tmp_path / "se.json")
    back = read_json(tmp_path / "se.json")
    assert back.edges == se.edges
    assert_array_equal(back.a_hat, se.a_hat)
    assert_array_equal(back.sigma_hat, se.sigma_hat)

    ge = estimate_graph(stream10, Skeleton(10, frozenset(model10.kernels)), 0.1, 5.0, 0.05)
    write_json(ge, tmp_path / "ge.json")
    back = read_json(tmp_path / "ge.json")
    assert back.vertices == ge.vertices
    assert back.edges == ge.edges
    assert back.skeleton == ge.skeleton
    assert back.empirical_intensity == ge.empirical_intensity


def test_nan_entries_survive_json(tmp_path):
    events = [(t, 1) for t in np.sort(np.random.default_rng(1).uniform(0, 100, 300))]
    s = EventStream.from_events(2, 100.0, events)
    ge = estimate_graph(s, Skeleton(2, frozenset({(2, 1)})), 1.0, 2.0, 0.05)
    assert math.isnan(ge.edges[(2, 1)].a_hat)
    write_json(ge, tmp_path / "g.json")
    assert "NaN" not in (tmp_path / "g.json").read_text()
    back = read_json(tmp_path / "g.json")
    assert math.isnan(back.edges[(2, 1)].a_hat) and back.failures == ge.failures


def test_unknown_document(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"type": "banana"}')
    with pytest.raises(SchemaError):
        read_json(p)
    p.write_text('{"type": "skeleton"}')
    with pytest.raises(SchemaError):
        read_json(p)


def test_kernel_grid_csv(stream10, model10):
    ge = estimate_graph(stream10, Skeleton(10, frozenset({(1, 2)})), 0.1, 5.0, 0.05)
    rows = kernel_grid_csv(ge).splitlines()
    assert rows[0] == "from,to,k,t,h_hat"
    assert len(rows) == 51
    f, t, k, tt, h = rows[3].split(",")
    assert (f, t, k, tt) == ("1", "2", "3", "0.3")
    assert float(h) == ge.edges[(1, 2)].grid[2]


# tiny DOT grammar: statements are node or edge lines with an optional attribute list
_ID = r'(?:-?\d+(?:\.\d+)?|"[^"]*"|[A-Za-z_]\w*)'
_ATTRS = rf'(?:\s*\[{_ID}={_ID}(?:,\s*{_ID}={_ID})*\])?'
_STMT = re.compile(rf'^\s*(?:node\s*\[{_ID}={_ID}\]|{_ID}(?:\s*->\s*{_ID})?{_ATTRS});$')


def assert_valid_dot(text):
    lines = text.strip().splitlines()
    assert re.match(rf"^digraph {_ID} \{{$", lines[0])
    assert lines[-1] == "}"
    for line in lines[1:-1]:
        assert _STMT.match(line), line


def test_dot_exports(stream10, model10):
    sk = Skeleton(3, frozenset({(1, 2), (3, 3)}))
    g = WeightedGraph.from_model(model10)
    se = estimate_skeleton(stream10, 1.0, 5.0, 0.05)
    ge = estimate_graph(stream10, Skeleton(10, frozenset(model10.kernels)), 0.1, 5.0, 0.05)
    for obj in (sk, g, se, ge):
        assert_valid_dot(export_dot(obj))
    text = export_graph(ge, "dot")
    for (i, j), e in ge.edges.items():
        line = next(ln for ln in text.splitlines() if re.match(rf"\s*{i} -> {j} ", ln))
        assert ("style=dashed" in line) == (not e.significant)
    for v in ge.vertices:
        line = next(ln for ln in text.splitlines() if re.match(rf"\s*{v.j} \[", ln))
        assert ("width=0.4" in line) == (not v.significant)
    widths = {}
    for ln in text.splitlines():
        m = re.match(r"\s*(\d+) -> (\d+) .*penwidth=([\d.]+)", ln)
        if m:
            widths[(int(m.group(1)), int(m.group(2)))] = float(m.group(3))
    heavy, light = widths[(1, 2)], widths[(4, 5)]
    assert heavy > light


def test_export_errors():
    with pytest.raises(InvalidConfig):
        export_graph(Skeleton(1, frozenset()), "png")
    with pytest.raises(TypeError):
        export_dot(42)
