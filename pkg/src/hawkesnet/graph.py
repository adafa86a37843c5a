"""Hawkes skeletons, weighted Hawkes graphs and their graph-theoretic analytics.

Predicates (parents, ancestors, connectivity) are computed by direct
traversal; subcriticality is decided from the spectral radius of the
adjacency matrix, which is equivalent to finiteness of all closed-walk
weight sums.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    AllImmigrationZero,
    EnumerationBudgetExceeded,
    InvalidConfig,
    NonFiniteEntries,
    NotSubcritical,
)
from .model import SUBCRITICAL_TOL, HawkesModel


@dataclass(frozen=True)
class Skeleton:
    d: int
    edges: frozenset = frozenset()

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (1 <= i <= self.d and 1 <= j <= self.d):
                raise InvalidConfig(f"edge {(i, j)} outside [1, {self.d}]^2")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def full(cls, d):
        return cls(d, frozenset((i, j) for i in range(1, d + 1) for j in range(1, d + 1)))

    def sorted_edges(self):
        return sorted(self.edges)


@dataclass(frozen=True)
class WeightedGraph:
    """Skeleton with vertex weights (immigration) and edge weights (branching)."""

    d: int
    vertex_weights: tuple
    edge_weights: Mapping = field(default_factory=dict)

    def __post_init__(self):
        vw = tuple(float(x) for x in self.vertex_weights)
        if len(vw) != self.d:
            raise InvalidConfig(f"{len(vw)} vertex weights for d={self.d}")
        if any(not x >= 0 for x in vw):
            raise InvalidConfig("vertex weights must be >= 0")
        ew = {}
        for (i, j), a in dict(self.edge_weights).items():
            i, j, a = int(i), int(j), float(a)
            if not (1 <= i <= self.d and 1 <= j <= self.d):
                raise InvalidConfig(f"edge {(i, j)} outside [1, {self.d}]^2")
            if not a > 0:
                raise InvalidConfig(f"edge weight of {(i, j)} must be > 0 (got {a})")
            ew[(i, j)] = a
        object.__setattr__(self, "vertex_weights", vw)
        object.__setattr__(self, "edge_weights", MappingProxyType(dict(sorted(ew.items()))))

    @classmethod
    def from_model(cls, m: HawkesModel):
        return cls(m.d, m.eta, {e: exc.a for e, exc in m.kernels.items()})

    @classmethod
    def from_matrix(cls, A, vertex_weights):
        A = np.asarray(A, dtype=float)
        return cls(A.shape[0], tuple(vertex_weights), edges_from_matrix(A))

    @property
    def skeleton(self) -> Skeleton:
        return Skeleton(self.d, frozenset(self.edge_weights))

    @property
    def edges(self):
        return frozenset(self.edge_weights)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.d, self.d))
        for (i, j), a in self.edge_weights.items():
            A[i - 1, j - 1] = a
        return A


@dataclass(frozen=True)
class Walk:
    vertices: tuple
    weight: float

    @property
    def length(self):
        return len(self.vertices) - 1


class Connectivity(NamedTuple):
    weak_components: tuple
    strongly_connected: bool
    fully_connected: bool


class CascadeFeedback(NamedTuple):
    cascade: np.ndarray
    feedback: np.ndarray
    #: vertices whose feedback denominator vanishes (reported as 0)
    undefined_feedback: frozenset


@dataclass(frozen=True)
class GraphAnalytics:
    spectral_radius: float
    subcritical: bool
    offspring_matrix: np.ndarray | None
    cascade: np.ndarray | None
    feedback: np.ndarray | None
    undefined_feedback: frozenset
    weak_components: tuple
    strongly_connected: bool
    fully_connected: bool
    sources: frozenset
    sinks: frozenset
    redundant: frozenset


def edges_from_matrix(A) -> dict:
    """Sparse ``{(i, j): a}`` map (1-based) of the positive entries of ``A``."""
    A = np.asarray(A, dtype=float)
    rows, cols = np.nonzero(A > 0)
    return {(int(r) + 1, int(c) + 1): float(A[r, c]) for r, c in zip(rows, cols)}


def _as_graph(g):
    if isinstance(g, HawkesModel):
        return WeightedGraph.from_model(g)
    if isinstance(g, (Skeleton, WeightedGraph)):
        return g
    raise TypeError(f"expected Skeleton, WeightedGraph or HawkesModel, got {type(g).__name__}")


def _adjacency_lists(g):
    g = _as_graph(g)
    out = {v: [] for v in range(1, g.d + 1)}
    inc = {v: [] for v in range(1, g.d + 1)}
    for i, j in sorted(g.edges):
        out[i].append(j)
        inc[j].append(i)
    return g, out, inc


def parents(g, j: int) -> frozenset:
    g = _as_graph(g)
    return frozenset(i for i, k in g.edges if k == j)


def children(g, i: int) -> frozenset:
    g = _as_graph(g)
    return frozenset(j for k, j in g.edges if k == i)


def _reach(start, nbrs):
    """Vertices reachable from ``start`` by walks of length >= 1."""
    seen = set()
    queue = deque(nbrs[start])
    while queue:
        v = queue.popleft()
        if v in seen:
            continue
        seen.add(v)
        queue.extend(nbrs[v])
    return seen


def ancestors(g, j: int) -> frozenset:
    """All ``i`` with a walk of length >= 1 from ``i`` to ``j``."""
    _, _, inc = _adjacency_lists(g)
    return frozenset(_reach(j, inc))


def descendants(g, i: int) -> frozenset:
    _, out, _ = _adjacency_lists(g)
    return frozenset(_reach(i, out))


def classify_connectivity(g) -> Connectivity:
    g, out, inc = _adjacency_lists(g)
    undirected = {v: out[v] + inc[v] for v in out}
    comps, unseen = [], set(range(1, g.d + 1))
    while unseen:
        root = min(unseen)
        comp = _reach(root, undirected) | {root}
        comps.append(tuple(sorted(comp)))
        unseen -= comp
    strong = all(_reach(v, out) | {v} == set(range(1, g.d + 1)) for v in range(1, g.d + 1))
    full = len(g.edges) == g.d * g.d
    return Connectivity(tuple(comps), strong, full)


def sources_sinks_redundant(g):
    """``(sources, sinks, redundant)`` vertex sets.

    Redundant vertices need vertex weights, so a bare ``Skeleton`` reports
    an empty redundant set.
    """
    g = _as_graph(g)
    verts = range(1, g.d + 1)
    sources = frozenset(v for v in verts if not (parents(g, v) - {v}))
    sinks = frozenset(v for v in verts if not (children(g, v) - {v}))
    if isinstance(g, Skeleton):
        return sources, sinks, frozenset()
    eta = g.vertex_weights
    redundant = frozenset(
        v for v in verts if eta[v - 1] == 0 and all(eta[i - 1] == 0 for i in ancestors(g, v))
    )
    return sources, sinks, redundant


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square nonnegative matrix.

    The matrix is split into its strongly connected blocks; each block is
    irreducible, so its Perron root is a simple eigenvalue and is resolved
    accurately by a dense eigensolver.  Blocks without a cycle contribute 0.
    """
    if isinstance(A, (WeightedGraph, HawkesModel)):
        A = _as_graph(A).adjacency()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidConfig(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteEntries("matrix contains non-finite entries")
    if A.size == 0:
        return 0.0
    ncomp, labels = connected_components(csr_matrix(A != 0), directed=True, connection="strong")
    rho = 0.0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        block = A[np.ix_(idx, idx)]
        if idx.size == 1:
            rho = max(rho, abs(block[0, 0]))
        else:
            rho = max(rho, float(np.max(np.abs(np.linalg.eigvals(block)))))
    return float(rho)


def is_subcritical(g, tol=SUBCRITICAL_TOL) -> bool:
    """``rho(A) < 1 - tol``; equivalent to finite closed-walk weight sums."""
    if isinstance(g, (Skeleton,)):
        raise TypeError("subcriticality needs edge weights")
    A = g if isinstance(g, np.ndarray) else _as_graph(g).adjacency()
    return spectral_radius(A) < 1.0 - tol


def enumerate_walks(g, i: int, j: int, max_len: int, budget: int = 10**7) -> list:
    """All walks from ``i`` to ``j`` of length ``0..max_len`` with their weights.

    Walks are ordered by length, then lexicographically.  ``budget`` bounds
    the number of partial walks explored.
    """
    g = _as_graph(g)
    if max_len < 0:
        raise InvalidConfig("max_len must be >= 0")
    weights = g.edge_weights if isinstance(g, WeightedGraph) else {e: 1.0 for e in g.edges}
    _, out, inc = _adjacency_lists(g)
    # steps needed to reach j; prunes prefixes that cannot finish in time
    dist = {j: 0}
    queue = deque([j])
    while queue:
        v = queue.popleft()
        for u in inc[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    found = []
    explored = 0
    stack = [((i,), 1.0)]
    while stack:
        path, w = stack.pop()
        explored += 1
        if explored > budget:
            raise EnumerationBudgetExceeded(f"more than {budget} partial walks explored")
        v = path[-1]
        remaining = max_len - (len(path) - 1)
        if v == j:
            found.append(Walk(path, w))
        if remaining == 0:
            continue
        for u in reversed(out[v]):
            if dist.get(u, math.inf) <= remaining - 1:
                stack.append((path + (u,), w * weights[(v, u)]))
    found.sort(key=lambda walk: (walk.length, walk.vertices))
    return found


def offspring_matrix(A) -> np.ndarray:
    """Expected total offspring ``E = (I - A)^{-1} = sum_g A^g``."""
    if isinstance(A, (WeightedGraph, HawkesModel)):
        A = _as_graph(A).adjacency()
    A = np.asarray(A, dtype=float)
    rho = spectral_radius(A)
    if rho >= 1.0 - SUBCRITICAL_TOL:
        raise NotSubcritical(f"spectral radius {rho:.12g} is not below 1")
    d = A.shape[0]
    I = np.eye(d)
    E = np.linalg.solve(I - A, I)
    resid = np.max(np.abs((I - A) @ E - I)) if d else 0.0
    if resid >= 1e-8:
        raise NotSubcritical(f"(I - A) is ill-conditioned: residual {resid:.3g}")
    return E


def cascade_feedback(g) -> CascadeFeedback:
    """Cascade and feedback coefficients of a subcritical weighted graph.

    ``cascade[i]`` is the share of all events that belong to families of
    type-``i`` immigrants; ``feedback[j]`` is the share of component ``j``'s
    activity caused by its own immigrants, directly or through closed walks.
    Feedback is reported as 0 where no immigrant can reach the vertex.
    """
    g = _as_graph(g)
    eta = np.asarray(g.vertex_weights)
    if not eta.sum() > 0:
        raise AllImmigrationZero("all vertex weights are zero")
    E = offspring_matrix(g.adjacency())
    family_size = eta * E.sum(axis=1)
    cascade = family_size / family_size.sum()
    received = eta @ E
    undefined = frozenset(int(j) + 1 for j in np.flatnonzero(received == 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        feedback = np.where(received > 0, eta * np.diag(E) / received, 0.0)
    return CascadeFeedback(cascade, feedback, undefined)


def analyze(g) -> GraphAnalytics:
    g = _as_graph(g)
    if isinstance(g, Skeleton):
        raise TypeError("graph analytics need vertex and edge weights")
    A = g.adjacency()
    rho = spectral_radius(A)
    sub = rho < 1.0 - SUBCRITICAL_TOL
    conn = classify_connectivity(g)
    sources, sinks, redundant = sources_sinks_redundant(g)
    E = c = f = None
    undefined = frozenset()
    if sub:
        E = offspring_matrix(A)
        if sum(g.vertex_weights) > 0:
            c, f, undefined = cascade_feedback(g)
    return GraphAnalytics(
        spectral_radius=rho,
        subcritical=sub,
        offspring_matrix=E,
        cascade=c,
        feedback=f,
        undefined_feedback=undefined,
        weak_components=conn.weak_components,
        strongly_connected=conn.strongly_connected,
        fully_connected=conn.fully_connected,
        sources=sources,
        sinks=sinks,
        redundant=redundant,
    )
