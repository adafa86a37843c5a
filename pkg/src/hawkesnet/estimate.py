"""Discretized conditional-least-squares estimation of Hawkes skeletons and graphs.

Event streams are binned into counts ``X_k`` on ``((k-1)Delta, k*Delta]`` and
each count vector is regressed on its ``p = ceil(s / Delta)`` predecessors
plus an intercept.  Rescaled by ``1 / Delta`` the coefficients estimate the
reproduction intensities ``h_ij(k*Delta)`` and the immigration intensities.

Layout of the coefficient matrix ``H`` (shape ``(d*p + 1, d)``): row
``(k-1)*d + (i-1)`` holds ``h_{i, .}(k*Delta)``, the last row holds ``eta``.
Column ``j-1`` therefore collects everything that drives component ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np
from scipy import linalg, special

from .errors import (
    DimensionGuardExceeded,
    InsufficientData,
    InvalidConfig,
    InvalidDelta,
    OutOfRange,
    RankDeficientDesign,
)
from .graph import Skeleton, WeightedGraph, ancestors
from .simulate import EventStream


def normal_quantile(beta: float) -> float:
    """``beta``-quantile of the standard normal distribution."""
    if not (0.0 < beta < 1.0):
        raise OutOfRange(f"probability must lie in (0, 1), got {beta!r}")
    return float(special.ndtri(beta))


def _upper_quantile(alpha: float) -> float:
    """``z_{1-alpha}``, with ``alpha = 1`` mapped to ``-inf`` (accept everything)."""
    if alpha == 1.0:
        return -math.inf
    if not (0.0 < alpha < 1.0):
        raise OutOfRange(f"significance parameter must lie in (0, 1], got {alpha!r}")
    return normal_quantile(1.0 - alpha)


def _ci_quantile(alpha: float, two_sided: bool) -> float:
    if alpha == 1.0:
        return 0.0
    return normal_quantile(1.0 - alpha / 2) if two_sided else _upper_quantile(alpha)


@dataclass(frozen=True)
class BinCounts:
    """``counts[k-1, j-1]`` = number of type-``j`` events in ``((k-1)delta, k*delta]``."""

    delta: float
    counts: np.ndarray
    discarded: int = 0

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def d(self) -> int:
        return self.counts.shape[1]


def bin_counts(stream: EventStream, delta: float) -> BinCounts:
    """Bin ``stream`` into ``floor(T / delta)`` bins; events past the last full bin are dropped."""
    if not (isinstance(delta, (int, float)) and math.isfinite(delta) and delta > 0):
        raise InvalidDelta(f"bin width must be > 0 (got {delta!r})")
    if delta > stream.horizon:
        raise InvalidDelta(f"bin width {delta} exceeds the horizon {stream.horizon}")
    n = int(math.floor(stream.horizon / delta + 1e-9))
    if stream.d == 0:
        return BinCounts(float(delta), np.zeros((n, 0), dtype=np.int64), 0)
    k = np.ceil(stream.times / delta).astype(np.int64) - 1
    inside = k < n
    counts = np.zeros((n, stream.d), dtype=np.int64)
    np.add.at(counts, (k[inside], stream.components[inside] - 1), 1)
    counts.setflags(write=False)
    return BinCounts(float(delta), counts, int(np.count_nonzero(~inside)))


def n_lags(delta: float, support: float) -> int:
    p = math.ceil(support / delta - 1e-9)
    if p < 1:
        raise InvalidConfig(f"support {support} too small for bin width {delta}")
    return p


def design_matrix(X: np.ndarray, p: int):
    """Lagged design ``Z`` and response ``Y`` of the count autoregression.

    Row ``t`` of ``Z`` (bin ``k = p + 1 + t``) is
    ``(X_{k-1}, X_{k-2}, ..., X_{k-p}, 1)``; row ``t`` of ``Y`` is ``X_k``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    rows = n - p
    if rows <= 0:
        raise InsufficientData(f"{n} bins cannot support {p} lags")
    Z = np.empty((rows, d * p + 1))
    for lag in range(1, p + 1):
        Z[:, (lag - 1) * d: lag * d] = X[p - lag: n - lag]
    Z[:, -1] = 1.0
    return Z, X[p:]


class _LeastSquares:
    """Pivoted-QR solver exposing ``(Z'Z)^{-1} Z'`` products without forming the inverse."""

    def __init__(self, Z, ridge=False, component=None):
        rows, cols = Z.shape
        self.rows, self.cols = rows, cols
        self.ridge = 0.0
        Q, R, piv = linalg.qr(Z, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = np.finfo(float).eps * max(rows, cols) * (diag[0] if diag.size else 0.0)
        if diag.size < cols or diag[-1] <= tol:
            if not ridge:
                where = f" for component {component}" if component is not None else ""
                raise RankDeficientDesign(
                    f"design matrix{where} is rank deficient "
                    f"(smallest pivot {diag[-1] if diag.size else 0:.3g} <= {tol:.3g})",
                    component=component,
                )
            self.ridge = 1e-10 * float(np.sum(Z * Z)) / cols
            aug = np.vstack([Z, math.sqrt(self.ridge) * np.eye(cols)])
            Q, R, piv = linalg.qr(aug, mode="economic", pivoting=True)
            Q = Q[:rows]
        self.Q, self.R, self.piv = Q, R, piv

    def project(self, S):
        """``S (Z'Z)^{-1} Z'`` for a selector matrix ``S`` of shape ``(m, cols)``."""
        S = np.atleast_2d(S)
        X = linalg.solve_triangular(self.R, S[:, self.piv].T, trans="T")
        return X.T @ self.Q.T

    def solve(self, Y):
        """Least-squares coefficients ``(Z'Z)^{-1} Z' Y``."""
        coef = linalg.solve_triangular(self.R, self.Q.T @ Y)
        out = np.empty_like(coef)
        out[self.piv] = coef
        return out


@dataclass(frozen=True)
class CLSFit:
    """Multivariate conditional-least-squares fit of one binned stream."""

    delta: float
    support: float
    p: int
    H: np.ndarray
    ridge: float = 0.0

    @property
    def d(self) -> int:
        return self.H.shape[1]

    @property
    def eta_hat(self) -> np.ndarray:
        return self.H[-1].copy()

    def grid_block(self, k: int) -> np.ndarray:
        """``d x d`` matrix of ``h_ij(k * delta)`` estimates (row = source)."""
        d = self.d
        return self.H[(k - 1) * d: k * d].copy()

    def kernel_grid(self, i: int, j: int) -> np.ndarray:
        """``h_ij(k * delta)`` estimates for ``k = 1..p``."""
        d = self.d
        return self.H[np.arange(self.p) * d + (i - 1), j - 1].copy()

    @property
    def grid_estimates(self) -> dict:
        """``{(i, j, k): h_ij(k * delta)}`` for all pairs and lags (1-based)."""
        d = self.d
        return {
            (i + 1, j + 1, k + 1): float(self.H[k * d + i, j])
            for k in range(self.p) for i in range(d) for j in range(d)
        }

    @classmethod
    def from_grid(cls, delta, support, p, grid_estimates, eta_hat):
        d = len(eta_hat)
        H = np.zeros((d * p + 1, d))
        for (i, j, k), v in grid_estimates.items():
            H[(k - 1) * d + (i - 1), j - 1] = v
        H[-1] = eta_hat
        return cls(delta, support, p, H)


def _check_rows(rows, cols):
    if rows <= cols:
        raise InsufficientData(f"{rows} regression rows for {cols} coefficients")


def cls_fit(b: BinCounts, support: float, ridge: bool = False) -> CLSFit:
    """Multivariate Hawkes estimator ``H = (1/delta) (Z'Z)^{-1} Z'Y``."""
    p = n_lags(b.delta, support)
    Z, Y = design_matrix(b.counts, p)
    _check_rows(*Z.shape)
    ls = _LeastSquares(Z, ridge=ridge)
    H = ls.solve(Y) / b.delta
    return CLSFit(b.delta, float(support), p, H, ls.ridge)


def residuals(b: BinCounts, fit: CLSFit) -> np.ndarray:
    Z, Y = design_matrix(b.counts, fit.p)
    return Y - b.delta * Z @ fit.H


def covariance_naive(b: BinCounts, fit: CLSFit, max_dim: int = 2000) -> np.ndarray:
    """Full sandwich covariance of ``vec(H')`` evaluated literally.

    ``S2 = (1/delta^2) (G kron I) W (G kron I)`` with ``G = (Z'Z)^{-1}`` and
    ``W = sum_k w_k w_k'``, ``w_k = (z_k kron I) u_k``.  Intended for small
    problems and as a reference for the fast variance computations.
    """
    d, p = fit.d, fit.p
    dim = d * (d * p + 1)
    if dim > max_dim:
        raise DimensionGuardExceeded(f"covariance would be {dim} x {dim} (limit {max_dim})")
    Z, Y = design_matrix(b.counts, p)
    U = Y - b.delta * Z @ fit.H
    Id = np.eye(d)
    G = np.linalg.inv(Z.T @ Z)
    W = np.zeros((dim, dim))
    for z, u in zip(Z, U):
        w = np.kron(z[:, None], Id) @ u
        W += np.outer(w, w)
    GI = np.kron(G, Id)
    return GI @ W @ GI / b.delta**2


def _lag_sum_selector(width: int, p: int) -> np.ndarray:
    """``S[l, (k-1)*width + l] = 1`` for ``k = 1..p``, plus a zero intercept column."""
    S = np.zeros((width, width * p + 1))
    for k in range(p):
        S[np.arange(width), k * width + np.arange(width)] = 1.0
    return S


def skeleton_sigmas(b: BinCounts, fit: CLSFit, _ls: _LeastSquares | None = None) -> np.ndarray:
    """Standard errors of the branching-coefficient estimates ``a_ij``.

    With ``C = S (Z'Z)^{-1} Z'`` (``S`` sums the lag blocks of source ``i``)
    and residuals ``U`` the variance is ``sigma_ij^2 = sum_t C[i,t]^2 U[t,j]^2``.
    Neither the full covariance nor the ``W`` matrix is formed.
    """
    Z, Y = design_matrix(b.counts, fit.p)
    ls = _ls or _LeastSquares(Z, ridge=fit.ridge > 0)
    U = Y - b.delta * Z @ fit.H
    C = ls.project(_lag_sum_selector(fit.d, fit.p))
    return np.sqrt((C * C) @ (U * U))


@dataclass(frozen=True)
class SkeletonEstimate:
    d: int
    delta: float
    support: float
    p: int
    alpha_skel: float
    a_hat: np.ndarray
    sigma_hat: np.ndarray
    edges: frozenset
    eta_hat: np.ndarray | None = None

    @property
    def skeleton(self) -> Skeleton:
        return Skeleton(self.d, self.edges)

    def sorted_edges(self):
        return sorted(self.edges)


def estimate_skeleton(stream: EventStream, delta_skel: float, support: float, alpha_skel: float,
                      ridge: bool = False) -> SkeletonEstimate:
    """Test every ordered pair for excitement; keep ``(i, j)`` if ``a_ij > sigma_ij z_{1-alpha}``."""
    if not (0 < delta_skel <= support < stream.horizon):
        raise InvalidConfig(
            f"need 0 < delta_skel <= support < horizon (got {delta_skel}, {support}, {stream.horizon})")
    z = _upper_quantile(alpha_skel)
    b = bin_counts(stream, delta_skel)
    p = n_lags(b.delta, support)
    Z, Y = design_matrix(b.counts, p)
    _check_rows(*Z.shape)
    ls = _LeastSquares(Z, ridge=ridge)
    fit = CLSFit(b.delta, float(support), p, ls.solve(Y) / b.delta, ls.ridge)
    a_hat = b.delta * (_lag_sum_selector(fit.d, p) @ fit.H)
    sigma = skeleton_sigmas(b, fit, _ls=ls)
    keep = np.ones_like(a_hat, dtype=bool) if z == -math.inf else a_hat > sigma * z
    rows, cols = np.nonzero(keep)
    edges = frozenset((int(i) + 1, int(j) + 1) for i, j in zip(rows, cols))
    return SkeletonEstimate(stream.d, b.delta, float(support), p, float(alpha_skel),
                            a_hat, sigma, edges, fit.eta_hat)


class Interval(NamedTuple):
    lo: float
    hi: float

    def __contains__(self, x):
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class VertexEstimate:
    j: int
    eta_hat: float
    sigma: float
    ci: Interval
    significant: bool


@dataclass(frozen=True)
class EdgeEstimate:
    i: int
    j: int
    a_hat: float
    sigma: float
    ci: Interval
    significant: bool
    grid: tuple

    @property
    def edge(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class GraphEstimate:
    """Parent-restricted estimate of vertex and edge weights with confidence intervals.

    ``failures`` maps vertices whose regression could not be solved to the
    error message; their estimates are NaN.
    """

    d: int
    delta: float
    support: float
    p: int
    alpha_graph: float
    alpha_vertex: float
    two_sided: bool
    skeleton: Skeleton
    vertices: tuple
    edges: Mapping
    empirical_intensity: tuple
    horizon: float
    failures: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "edges", MappingProxyType(dict(sorted(self.edges.items()))))
        object.__setattr__(self, "failures", MappingProxyType(dict(self.failures)))

    @property
    def eta_hat(self) -> np.ndarray:
        return np.array([v.eta_hat for v in self.vertices])

    def a_hat_matrix(self) -> np.ndarray:
        A = np.zeros((self.d, self.d))
        for (i, j), e in self.edges.items():
            A[i - 1, j - 1] = e.a_hat
        return A

    def significant_edges(self) -> frozenset:
        return frozenset(e for e, est in self.edges.items() if est.significant)

    def to_weighted_graph(self, significant_only: bool = True) -> WeightedGraph:
        """Weighted graph of the estimate; insignificant weights become zero by default."""
        eta = [max(v.eta_hat, 0.0) if (v.significant or not significant_only) else 0.0
               for v in self.vertices]
        eta = [x if math.isfinite(x) else 0.0 for x in eta]
        ew = {e: est.a_hat for e, est in self.edges.items()
              if est.a_hat > 0 and (est.significant or not significant_only)}
        return WeightedGraph(self.d, tuple(eta), ew)

    def redundant_vertices(self) -> frozenset:
        g = self.to_weighted_graph(significant_only=True)
        eta = g.vertex_weights
        return frozenset(
            v for v in range(1, self.d + 1)
            if eta[v - 1] == 0 and all(eta[i - 1] == 0 for i in ancestors(g, v))
        )


def _nan_interval():
    return Interval(math.nan, math.nan)


def estimate_graph(stream: EventStream, skel: Skeleton, delta_graph: float, support: float,
                   alpha_graph: float, alpha_vertex: float | None = None,
                   ridge: bool = False, two_sided: bool = True) -> GraphEstimate:
    """Regress each component on the lagged counts of its skeleton parents.

    Edge weights sum the lag coefficients of one parent; standard errors
    use the per-component sandwich ``sum_t (c_t u_t)^2``.

    Intervals are ``estimate +- sigma * z`` with ``z = z_{1-alpha/2}``
    (level ``1 - alpha``); ``two_sided=False`` uses ``z_{1-alpha}`` instead.
    An edge is significant when it passes the one-sided test
    ``a_hat > sigma * z_{1-alpha_graph}``; a vertex is significant when its
    interval excludes zero.
    """
    if skel.d != stream.d:
        raise InvalidConfig(f"skeleton has d={skel.d}, stream has d={stream.d}")
    if not (0 < delta_graph <= support < stream.horizon):
        raise InvalidConfig(
            f"need 0 < delta_graph <= support < horizon (got {delta_graph}, {support}, {stream.horizon})")
    alpha_vertex = alpha_graph if alpha_vertex is None else alpha_vertex
    z_edge = _upper_quantile(alpha_graph)
    _upper_quantile(alpha_vertex)
    ci_edge = _ci_quantile(alpha_graph, two_sided)
    ci_vertex = _ci_quantile(alpha_vertex, two_sided)
    b = bin_counts(stream, delta_graph)
    delta = b.delta
    p = n_lags(delta, support)
    X = np.asarray(b.counts, dtype=float)
    vertices, edges, failures = [], {}, {}
    for j in range(1, stream.d + 1):
        pa = sorted(i for i, k in skel.edges if k == j)
        dj = len(pa)
        try:
            Zj, _ = design_matrix(X[:, [i - 1 for i in pa]] if dj else np.zeros((b.n, 0)), p)
            Yj = X[p:, j - 1]
            _check_rows(*Zj.shape)
            ls = _LeastSquares(Zj, ridge=ridge, component=j)
        except (RankDeficientDesign, InsufficientData) as exc:
            failures[j] = str(exc)
            vertices.append(VertexEstimate(j, math.nan, math.nan, _nan_interval(), False))
            for i in pa:
                edges[(i, j)] = EdgeEstimate(i, j, math.nan, math.nan, _nan_interval(), False,
                                             (math.nan,) * p)
            continue
        Hj = ls.solve(Yj) / delta
        U = Yj - delta * Zj @ Hj
        S = np.zeros((dj + 1, dj * p + 1))
        S[:dj] = _lag_sum_selector(dj, p)
        S[dj, -1] = 1.0
        C = ls.project(S)
        var = (C * C) @ (U * U)
        eta_hat = float(Hj[-1])
        sig_v = math.sqrt(var[dj]) / delta
        ci = Interval(eta_hat - ci_vertex * sig_v, eta_hat + ci_vertex * sig_v)
        vertices.append(VertexEstimate(j, eta_hat, sig_v, ci, bool(ci.lo > 0 or ci.hi < 0)))
        for l, i in enumerate(pa):
            grid = Hj[np.arange(p) * dj + l]
            a_hat = float(delta * grid.sum())
            sig = math.sqrt(var[l])
            edges[(i, j)] = EdgeEstimate(
                i, j, a_hat, sig, Interval(a_hat - ci_edge * sig, a_hat + ci_edge * sig),
                bool(z_edge == -math.inf or a_hat > z_edge * sig), tuple(float(x) for x in grid))
    return GraphEstimate(
        d=stream.d, delta=delta, support=float(support), p=p,
        alpha_graph=float(alpha_graph), alpha_vertex=float(alpha_vertex),
        two_sided=bool(two_sided), skeleton=skel, vertices=tuple(vertices), edges=edges,
        empirical_intensity=tuple(float(x) for x in stream.empirical_intensity()),
        horizon=float(stream.horizon), failures=failures,
    )
