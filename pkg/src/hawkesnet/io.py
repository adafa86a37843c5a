"""Reading and writing event streams, model specifications, estimates and graph exports.

Formats
-------
Event streams are CSV with header ``time,component``; optional leading
comment lines ``# d=<int> horizon=<float>`` declare the dimension and the
observation horizon.  Models are JSON documents::

    {"d": 2, "eta": [1.0, 0.5],
     "kernels": [{"from": 1, "to": 2, "a": 0.5, "family": "exp", "params": {"rate": 2.0}}]}

Estimates are JSON with NaN written as ``null``.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import re
from pathlib import Path

import jsonschema
import numpy as np

from .errors import BadComponent, InvalidConfig, ParseError, SchemaError, UnsortedEvents
from .estimate import EdgeEstimate, GraphEstimate, Interval, SkeletonEstimate, VertexEstimate
from .graph import Skeleton, WeightedGraph
from .model import Excitation, HawkesModel, make_kernel
from .simulate import EventStream

_HEADER = ["time", "component"]
_META = re.compile(r"#\s*(.*)$")


# -- event streams ---------------------------------------------------------------

def _parse_meta(text, lineno):
    out = {}
    for tok in text.split():
        key, sep, val = tok.partition("=")
        if not sep:
            continue
        try:
            if key == "d":
                out["d"] = int(val)
            elif key == "horizon":
                out["horizon"] = float(val)
        except ValueError:
            raise ParseError(f"bad value for {key!r}: {val!r}", lineno) from None
    return out


def parse_stream(text: str, d: int | None = None, horizon: float | None = None) -> EventStream:
    """Parse CSV stream text; ``d`` and ``horizon`` override declared values.

    Without a declaration or override, ``d`` is the largest component seen
    and ``horizon`` the last event time.
    """
    lines = text.splitlines()
    meta, lineno = {}, 0
    while lineno < len(lines) and (lines[lineno].startswith("#") or not lines[lineno].strip()):
        m = _META.match(lines[lineno])
        if m:
            meta.update(_parse_meta(m.group(1), lineno + 1))
        lineno += 1
    if lineno >= len(lines):
        raise ParseError("missing header 'time,component'", lineno + 1 if lines else 1)
    header = [c.strip() for c in lines[lineno].split(",")]
    if header != _HEADER:
        raise ParseError(f"expected header 'time,component', got {lines[lineno]!r}", lineno + 1)
    d = meta.get("d") if d is None else d
    horizon = meta.get("horizon") if horizon is None else horizon
    times, comps = [], []
    last = -math.inf
    for idx in range(lineno + 1, len(lines)):
        raw = lines[idx].strip()
        num = idx + 1
        if not raw or raw.startswith("#"):
            continue
        parts = raw.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, got {len(parts)}", num)
        try:
            t = float(parts[0])
        except ValueError:
            raise ParseError(f"bad time {parts[0]!r}", num) from None
        if not math.isfinite(t) or t <= 0:
            raise ParseError(f"time must be finite and > 0, got {parts[0]!r}", num)
        try:
            c = int(parts[1])
        except ValueError:
            raise BadComponent(f"bad component {parts[1]!r}", num) from None
        if c < 1 or (d is not None and c > d):
            raise BadComponent(f"component {c} outside [1, {d if d is not None else 'd'}]", num)
        if horizon is not None and t > horizon:
            raise ParseError(f"time {t} beyond horizon {horizon}", num)
        if t < last:
            raise UnsortedEvents(f"time {t} precedes previous time {last}", num)
        last = t
        times.append(t)
        comps.append(c)
    if d is None:
        d = max(comps, default=0)
    if horizon is None:
        horizon = times[-1] if times else 0.0
    t = np.array(times, dtype=float)
    c = np.array(comps, dtype=np.int64)
    order = np.lexsort((c, t))
    return EventStream(int(d), float(horizon), t[order], c[order])


def read_stream(path, d: int | None = None, horizon: float | None = None) -> EventStream:
    return parse_stream(Path(path).read_text(), d=d, horizon=horizon)


def format_stream(stream: EventStream) -> str:
    buf = _io.StringIO()
    buf.write(f"# d={stream.d} horizon={stream.horizon!r}\n")
    buf.write("time,component\n")
    for t, c in zip(stream.times.tolist(), stream.components.tolist()):
        buf.write(f"{t:.12g},{c}\n")
    return buf.getvalue()


def write_stream(stream: EventStream, path) -> None:
    Path(path).write_text(format_stream(stream))


# -- models ----------------------------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["d", "eta", "kernels"],
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "eta": {"type": "array", "items": _NONNEG},
        "kernels": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to", "a", "family", "params"],
                "properties": {
                    "from": {"type": "integer", "minimum": 1},
                    "to": {"type": "integer", "minimum": 1},
                    "a": _POS,
                    "family": {"enum": ["gamma", "uniform", "exp", "grid"]},
                    "params": {"type": "object"},
                },
                "allOf": [
                    {"if": {"properties": {"family": {"const": "gamma"}}},
                     "then": {"properties": {"params": {
                         "additionalProperties": False, "required": ["shape", "rate"],
                         "properties": {"shape": _POS, "rate": _POS}}}}},
                    {"if": {"properties": {"family": {"const": "uniform"}}},
                     "then": {"properties": {"params": {
                         "additionalProperties": False, "required": ["lo", "hi"],
                         "properties": {"lo": _NONNEG, "hi": _POS}}}}},
                    {"if": {"properties": {"family": {"const": "exp"}}},
                     "then": {"properties": {"params": {
                         "additionalProperties": False, "required": ["rate"],
                         "properties": {"rate": _POS}}}}},
                    {"if": {"properties": {"family": {"const": "grid"}}},
                     "then": {"properties": {"params": {
                         "additionalProperties": False, "required": ["delta", "values"],
                         "properties": {"delta": _POS,
                                        "values": {"type": "array", "minItems": 1, "items": _NONNEG}}}}}},
                ],
            },
        },
    },
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def model_from_dict(doc) -> HawkesModel:
    """Validate a model document and build the model; errors carry a JSON path."""
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise SchemaError(err.message, _json_path(err.absolute_path))
    d = doc["d"]
    if len(doc["eta"]) != d:
        raise SchemaError(f"eta has {len(doc['eta'])} entries, expected {d}", "$.eta")
    if not any(x > 0 for x in doc["eta"]):
        raise SchemaError("at least one immigration intensity must be positive", "$.eta")
    kernels = {}
    for n, k in enumerate(doc["kernels"]):
        where = f"$.kernels[{n}]"
        for key in ("from", "to"):
            if k[key] > d:
                raise SchemaError(f"component {k[key]} exceeds d={d}", f"{where}.{key}")
        pair = (k["from"], k["to"])
        if pair in kernels:
            raise SchemaError(f"duplicate kernel {pair}", where)
        try:
            w = make_kernel(k["family"], k["params"])
        except (InvalidConfig, TypeError) as exc:
            raise SchemaError(str(exc), f"{where}.params") from None
        kernels[pair] = Excitation(float(k["a"]), w)
    return HawkesModel(d, tuple(float(x) for x in doc["eta"]), kernels)


def model_to_dict(m: HawkesModel) -> dict:
    return {
        "d": m.d,
        "eta": list(m.eta),
        "kernels": [
            {"from": i, "to": j, "a": exc.a, "family": exc.w.family, "params": exc.w.params()}
            for (i, j), exc in m.kernels.items()
        ],
    }


def read_model(path) -> HawkesModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return model_from_dict(doc)


def write_model(m: HawkesModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=2) + "\n")


# -- estimates and graphs --------------------------------------------------------

def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _unnum(x):
    return math.nan if x is None else float(x)


def _matrix(A):
    return [[_num(v) for v in row] for row in np.asarray(A)]


def _unmatrix(rows):
    return np.array([[_unnum(v) for v in row] for row in rows], dtype=float)


def _edges(edges):
    return [list(e) for e in sorted(edges)]


def to_dict(obj) -> dict:
    """JSON-ready representation of a skeleton, graph or estimate."""
    if isinstance(obj, Skeleton):
        return {"type": "skeleton", "d": obj.d, "edges": _edges(obj.edges)}
    if isinstance(obj, WeightedGraph):
        return {"type": "graph", "d": obj.d, "vertex_weights": list(obj.vertex_weights),
                "edges": [[i, j, a] for (i, j), a in sorted(obj.edge_weights.items())]}
    if isinstance(obj, SkeletonEstimate):
        return {
            "type": "skeleton_estimate", "d": obj.d, "delta": obj.delta, "support": obj.support,
            "p": obj.p, "alpha_skel": obj.alpha_skel, "edges": _edges(obj.edges),
            "a_hat": _matrix(obj.a_hat), "sigma_hat": _matrix(obj.sigma_hat),
            "eta_hat": None if obj.eta_hat is None else [_num(x) for x in obj.eta_hat],
        }
    if isinstance(obj, GraphEstimate):
        return {
            "type": "graph_estimate", "d": obj.d, "delta": obj.delta, "support": obj.support,
            "p": obj.p, "alpha_graph": obj.alpha_graph, "alpha_vertex": obj.alpha_vertex,
            "two_sided": obj.two_sided, "horizon": obj.horizon,
            "skeleton": _edges(obj.skeleton.edges),
            "empirical_intensity": list(obj.empirical_intensity),
            "vertices": [
                {"j": v.j, "eta_hat": _num(v.eta_hat), "sigma": _num(v.sigma),
                 "ci": [_num(v.ci.lo), _num(v.ci.hi)], "significant": v.significant}
                for v in obj.vertices
            ],
            "edges": [
                {"from": e.i, "to": e.j, "a_hat": _num(e.a_hat), "sigma": _num(e.sigma),
                 "ci": [_num(e.ci.lo), _num(e.ci.hi)], "significant": e.significant,
                 "grid": [_num(x) for x in e.grid]}
                for e in obj.edges.values()
            ],
            "failures": {str(k): v for k, v in obj.failures.items()},
        }
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_dict(doc):
    """Inverse of :func:`to_dict`."""
    kind = doc.get("type")
    if kind == "skeleton":
        return Skeleton(doc["d"], frozenset(tuple(e) for e in doc["edges"]))
    if kind == "graph":
        return WeightedGraph(doc["d"], tuple(doc["vertex_weights"]),
                             {(i, j): a for i, j, a in doc["edges"]})
    if kind == "skeleton_estimate":
        eta = doc.get("eta_hat")
        return SkeletonEstimate(
            doc["d"], doc["delta"], doc["support"], doc["p"], doc["alpha_skel"],
            _unmatrix(doc["a_hat"]), _unmatrix(doc["sigma_hat"]),
            frozenset(tuple(e) for e in doc["edges"]),
            None if eta is None else np.array([_unnum(x) for x in eta]))
    if kind == "graph_estimate":
        vertices = tuple(
            VertexEstimate(v["j"], _unnum(v["eta_hat"]), _unnum(v["sigma"]),
                           Interval(*map(_unnum, v["ci"])), v["significant"])
            for v in doc["vertices"])
        edges = {
            (e["from"], e["to"]): EdgeEstimate(
                e["from"], e["to"], _unnum(e["a_hat"]), _unnum(e["sigma"]),
                Interval(*map(_unnum, e["ci"])), e["significant"], tuple(map(_unnum, e["grid"])))
            for e in doc["edges"]}
        return GraphEstimate(
            d=doc["d"], delta=doc["delta"], support=doc["support"], p=doc["p"],
            alpha_graph=doc["alpha_graph"], alpha_vertex=doc["alpha_vertex"],
            two_sided=doc.get("two_sided", True),
            skeleton=Skeleton(doc["d"], frozenset(tuple(e) for e in doc["skeleton"])),
            vertices=vertices, edges=edges,
            empirical_intensity=tuple(doc["empirical_intensity"]), horizon=doc["horizon"],
            failures={int(k): v for k, v in doc.get("failures", {}).items()})
    raise SchemaError(f"unknown document type {kind!r}", "$.type")


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(to_dict(obj), indent=2, allow_nan=False) + "\n")


def read_json(path):
    try:
        return from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    except (KeyError, TypeError, ValueError, InvalidConfig) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed document: {exc}") from None


def kernel_grid_csv(est: GraphEstimate) -> str:
    """Long-format CSV ``from,to,k,t,h_hat`` of the retained grid estimates."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["from", "to", "k", "t", "h_hat"])
    for (i, j), e in est.edges.items():
        for k, h in enumerate(e.grid, start=1):
            w.writerow([i, j, k, f"{k * est.delta:.12g}", repr(h) if math.isfinite(h) else "nan"])
    return buf.getvalue()


# -- DOT -------------------------------------------------------------------------

def _fmt(x):
    return f"{x:.3g}"


def export_dot(g, name: str = "hawkes") -> str:
    """Graphviz DOT text.

    Edge pen widths scale with the estimated weight; edges that are not
    significantly positive are dashed; vertices whose weight is not
    significant are drawn small.
    """
    lines = [f"digraph {name} {{", "  node [shape=circle];"]
    if isinstance(g, Skeleton):
        for v in range(1, g.d + 1):
            lines.append(f"  {v};")
        for i, j in g.sorted_edges():
            lines.append(f"  {i} -> {j};")
    elif isinstance(g, WeightedGraph):
        top = max(g.edge_weights.values(), default=1.0)
        for v, eta in enumerate(g.vertex_weights, start=1):
            lines.append(f'  {v} [label="{v}\\n{_fmt(eta)}"];')
        for (i, j), a in sorted(g.edge_weights.items()):
            lines.append(f'  {i} -> {j} [label="{_fmt(a)}", penwidth={0.5 + 4.5 * a / top:.3f}];')
    elif isinstance(g, SkeletonEstimate):
        for v in range(1, g.d + 1):
            lines.append(f"  {v};")
        for i, j in g.sorted_edges():
            lines.append(f'  {i} -> {j} [label="{_fmt(g.a_hat[i - 1, j - 1])}"];')
    elif isinstance(g, GraphEstimate):
        finite = [e.a_hat for e in g.edges.values() if math.isfinite(e.a_hat) and e.a_hat > 0]
        top = max(finite, default=1.0)
        for v in g.vertices:
            if v.significant:
                lines.append(f'  {v.j} [label="{v.j}\\n{_fmt(v.eta_hat)}\\n[{_fmt(v.ci.lo)}, {_fmt(v.ci.hi)}]", '
                             f'width=1.0];')
            else:
                lines.append(f'  {v.j} [label="{v.j}", width=0.4, fixedsize=true];')
        for (i, j), e in g.edges.items():
            a = e.a_hat if math.isfinite(e.a_hat) else 0.0
            style = "solid" if e.significant else "dashed"
            pw = 0.5 + 4.5 * max(a, 0.0) / top
            lines.append(f'  {i} -> {j} [label="{_fmt(a)}", penwidth={pw:.3f}, style={style}];')
    else:
        raise TypeError(f"cannot export {type(g).__name__} as DOT")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(g, format: str = "json") -> str:
    if format == "json":
        return json.dumps(to_dict(g), indent=2, allow_nan=False) + "\n"
    if format == "dot":
        return export_dot(g)
    raise InvalidConfig(f"unknown export format {format!r}")
