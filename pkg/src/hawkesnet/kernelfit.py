"""Parametric fits of reproduction intensities to grid estimates.

For an edge with grid estimates ``h_k = h_hat(k * delta)`` we minimize
``sum_k weight_k (a * w_theta(k * delta) - h_k)^2`` over the branching
coefficient ``a >= 0`` and the kernel parameters ``theta``.

Smooth families (gamma, exponential) are fit by Levenberg-Marquardt in log
coordinates, so positivity holds by construction.  The uniform window is
fit by exhaustive search over grid-aligned windows: its objective is
piecewise constant in the endpoints, so derivatives carry no information.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special

from .errors import AllImmigrationZero, InvalidConfig, MissingFit, TooFewPoints
from .model import (
    Excitation,
    ExponentialDecay,
    GammaDensity,
    GridKernel,
    HawkesModel,
    KernelSpec,
    UniformWindow,
)

SMOOTH_FAMILIES = ("gamma", "exp")
RANKED_FAMILIES = ("gamma", "uniform", "exp")
_N_PARAMS = {"gamma": 3, "exp": 2, "uniform": 3}


@dataclass(frozen=True)
class KernelFit:
    """Least-squares fit of ``a * w_theta`` to one edge's grid estimates.

    ``theta_hat`` is ``(shape, rate)`` for gamma, ``(lo, hi)`` for uniform,
    ``(rate,)`` for exp and the normalized cell values for grid.
    ``history`` lists the objective after every accepted step of the
    winning start.
    """

    edge: tuple | None
    family: str
    a_hat: float
    theta_hat: tuple
    sse: float
    converged: bool
    iterations: int
    grad_norm: float = 0.0
    delta: float = 0.0
    history: tuple = field(default=(), repr=False)

    @property
    def kernel(self) -> KernelSpec:
        if self.family == "gamma":
            return GammaDensity(*self.theta_hat)
        if self.family == "exp":
            return ExponentialDecay(*self.theta_hat)
        if self.family == "uniform":
            return UniformWindow(*self.theta_hat)
        if self.family == "grid":
            return GridKernel(self.delta, self.theta_hat)
        raise InvalidConfig(f"unknown kernel family {self.family!r}")

    def excitation(self) -> Excitation:
        return Excitation(self.a_hat, self.kernel)


def _grid_arrays(grid, delta):
    if not (delta > 0 and math.isfinite(delta)):
        raise InvalidConfig(f"grid spacing must be > 0 (got {delta!r})")
    if isinstance(grid, Mapping):
        ks = np.array(sorted(grid), dtype=float)
        h = np.array([grid[k] for k in sorted(grid)], dtype=float)
    else:
        h = np.asarray(grid, dtype=float)
        ks = np.arange(1, h.size + 1, dtype=float)
    if not np.all(np.isfinite(h)):
        raise InvalidConfig("grid estimates must be finite")
    return ks * delta, h


def _log_density(family, phi, t):
    """``log w(t)`` and its derivatives with respect to the log-parameters ``phi[1:]``."""
    if family == "gamma":
        k, r = np.exp(phi[1]), np.exp(phi[2])
        logw = k * phi[2] + (k - 1) * np.log(t) - r * t - special.gammaln(k)
        dk = k * (np.log(t) + phi[2] - special.digamma(k))
        dr = k - r * t
        return logw, np.stack([dk, dr], axis=1)
    if family == "exp":
        r = np.exp(phi[1])
        return phi[1] - r * t, (1.0 - r * t)[:, None]
    raise InvalidConfig(f"family {family!r} has no smooth parametrization")


def residuals_jacobian(family, phi, t, h):
    """Residuals ``a w(t) - h`` and their Jacobian in ``phi = (log a, log theta)``."""
    logw, dlogw = _log_density(family, phi, t)
    m = np.exp(phi[0] + logw)
    J = np.empty((t.size, len(phi)))
    J[:, 0] = m
    J[:, 1:] = m[:, None] * dlogw
    return m - h, J


def objective(family, phi, t, h, weights=None):
    r, _ = residuals_jacobian(family, np.asarray(phi, float), t, h)
    wts = 1.0 if weights is None else weights
    return float(np.sum(wts * r * r))


def objective_gradient(family, phi, t, h, weights=None):
    r, J = residuals_jacobian(family, np.asarray(phi, float), t, h)
    wts = np.ones_like(r) if weights is None else weights
    return 2.0 * J.T @ (wts * r)


class _LMResult(NamedTuple):
    phi: np.ndarray
    obj: float
    grad_norm: float
    converged: bool
    iterations: int
    history: tuple


def _levenberg_marquardt(family, phi0, t, h, weights, max_iter=500, gtol=1e-6):
    sw = np.sqrt(weights)
    phi = np.asarray(phi0, dtype=float)

    def evaluate(p):
        with np.errstate(over="ignore", invalid="ignore"):
            r, J = residuals_jacobian(family, p, t, h)
        r, J = sw * r, sw[:, None] * J
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
            return math.inf, r, J
        return float(r @ r), r, J

    obj, r, J = evaluate(phi)
    history = [obj]
    lam, it, converged = 1e-3, 0, False
    grad = 2.0 * J.T @ r
    while it < max_iter:
        gnorm = float(np.linalg.norm(grad))
        if gnorm < gtol * (1.0 + obj):
            converged = True
            break
        it += 1
        JtJ = J.T @ J
        accepted, small = False, False
        while lam < 1e16:
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                step = np.linalg.solve(A, -J.T @ r)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = phi + step
            c_obj, c_r, c_J = evaluate(cand)
            if c_obj <= obj:
                accepted = True
                small = np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(phi)))
                phi, obj, r, J = cand, c_obj, c_r, c_J
                grad = 2.0 * J.T @ r
                history.append(obj)
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 4.0
        if not accepted or small:
            converged = float(np.linalg.norm(grad)) < gtol * (1.0 + obj)
            break
    gnorm = float(np.linalg.norm(grad))
    return _LMResult(phi, obj, gnorm, converged or gnorm < gtol * (1.0 + obj), it, tuple(history))


def _moments(t, h, delta):
    pos = np.maximum(h, 0.0)
    mass = float(pos.sum())
    if mass <= 0:
        return 0.0, float(t.mean()), float(t.var() + delta**2 / 12)
    q = pos / mass
    mu = float(q @ t)
    var = float(q @ (t - mu) ** 2) + delta**2 / 12
    return delta * mass, mu, var


def default_starts(family, t, h, delta):
    """Moment-matching start followed by four perturbations, as ``(a, *theta)``."""
    a0, mu, var = _moments(t, h, delta)
    a0 = max(a0, 1e-8)
    if family == "gamma":
        k, r = mu * mu / var, mu / var
        return [(a0, k, r), (a0, 2 * k, 2 * r), (a0, k / 2, r / 2), (a0, k, 2 * r), (a0, k, r / 2)]
    if family == "exp":
        r = 1.0 / mu
        return [(a0, r), (a0, r / 2), (a0, 2 * r), (a0, r / 4), (a0, 4 * r)]
    raise InvalidConfig(f"family {family!r} has no smooth parametrization")


def _min_points(family, n):
    need = _N_PARAMS.get(family, 1) + 3
    if n < need:
        raise TooFewPoints(f"{family} fit needs at least {need} grid points, got {n}")


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidConfig("weights must be a nonnegative vector matching the grid")
    return w


def _admissible(family, theta, t, delta):
    """The grid can only see densities that live on it and are wider than a cell."""
    try:
        w = GammaDensity(*theta) if family == "gamma" else ExponentialDecay(*theta)
    except InvalidConfig:
        return False
    sd = math.sqrt(theta[0]) / theta[1] if family == "gamma" else 1.0 / theta[0]
    return bool(w.cdf(t[-1] + delta / 2) >= 0.5 and sd >= delta / 2)


def _fit_smooth(family, t, h, delta, init, weights, edge):
    starts = [tuple(init)] if init is not None else default_starts(family, t, h, delta)
    best, rejected = None, False
    for s in starts:
        if len(s) != _N_PARAMS[family] or min(s) <= 0:
            raise InvalidConfig(f"start {s} is not a valid (a, theta) for {family}")
        res = _levenberg_marquardt(family, np.log(np.asarray(s, dtype=float)), t, h, weights)
        if not math.isfinite(res.obj):
            continue
        if not _admissible(family, tuple(np.exp(res.phi[1:])), t, delta):
            rejected = True
            continue
        if best is None or res.obj < best.obj:
            best = res
    zero_sse = float(np.sum(weights * h * h))
    if best is None or zero_sse <= best.obj:
        # an inadmissible optimum that beat the zero kernel is reported as not converged
        converged = not (rejected and (best is None or zero_sse > 0))
        theta = tuple(starts[0][1:])
        return KernelFit(edge, family, 0.0, theta, zero_sse, converged, 0 if best is None else best.iterations,
                         0.0, delta, (zero_sse,))
    p = np.exp(best.phi)
    return KernelFit(edge, family, float(p[0]), tuple(float(x) for x in p[1:]), best.obj,
                     best.converged, best.iterations, best.grad_norm, delta, best.history)


def _fit_uniform(t, h, delta, weights, edge):
    """Best window ``[k_lo * delta, k_hi * delta]`` with height fit in closed form.

    The window is closed, so the grid points at both endpoints lie inside.
    """
    n = t.size
    wh = weights * h
    cw = np.concatenate([[0.0], np.cumsum(weights)])
    cwh = np.concatenate([[0.0], np.cumsum(wh)])
    total = float(np.sum(weights * h * h))
    best = (total, 0.0, 0, 1)
    for lo in range(n):
        for hi in range(lo + 1, n):
            sw = cw[hi + 1] - cw[lo]
            if sw <= 0:
                continue
            swh = cwh[hi + 1] - cwh[lo]
            c = max(swh / sw, 0.0)
            sse = total - 2 * c * swh + c * c * sw
            if sse < best[0] - 1e-15 * max(total, 1e-300):
                best = (sse, c, lo, hi)
    sse, c, lo, hi = best
    w_lo, w_hi = float(t[lo]), float(t[hi])
    if c == 0:
        w_lo, w_hi = float(t[0]), float(t[-1])
    return KernelFit(edge, "uniform", float(c * (w_hi - w_lo)), (w_lo, w_hi), max(float(sse), 0.0),
                     True, 0, 0.0, delta, (max(float(sse), 0.0),))


def _fit_grid(t, h, delta, weights, edge):
    pos = np.maximum(h, 0.0)
    a = delta * float(pos.sum())
    values = pos / a if a > 0 else np.full(h.size, 1.0 / (delta * h.size))
    m = a * values
    sse = float(np.sum(weights * (m - h) ** 2))
    return KernelFit(edge, "grid", a, tuple(float(v) for v in values), sse, True, 0, 0.0, delta, (sse,))


def fit_kernel(grid, delta: float, family: str, init: Sequence[float] | None = None,
               weights=None, edge: tuple | None = None) -> KernelFit:
    """Fit ``a * w_theta`` to grid estimates ``h_hat(k * delta)``.

    Parameters
    ----------
    grid : mapping or sequence
        ``{k: h_hat(k * delta)}`` or values for ``k = 1, 2, ...``.
    family : {"gamma", "exp", "uniform", "grid"}
    init : sequence, optional
        Single start ``(a, *theta)`` for the smooth families; five default
        starts are tried otherwise.
    weights : array, optional
        Per-point weights, e.g. inverse variances of the grid estimates.
    """
    t, h = _grid_arrays(grid, delta)
    _min_points(family, t.size)
    w = _weights(weights, t.size)
    if family in SMOOTH_FAMILIES:
        return _fit_smooth(family, t, h, delta, init, w, edge)
    if family == "uniform":
        return _fit_uniform(t, h, delta, w, edge)
    if family == "grid":
        return _fit_grid(t, h, delta, w, edge)
    raise InvalidConfig(f"unknown kernel family {family!r}")


class FamilyRank(NamedTuple):
    family: str
    sse: float
    aicc: float
    fit: KernelFit


class FamilySuggestion(NamedTuple):
    ranking: tuple
    low_signal: bool
    f_statistic: float

    @property
    def best(self) -> str:
        return self.ranking[0].family


#: Minimum F statistic of the best family against the zero kernel.
LOW_SIGNAL_F = 10.0


def suggest_family(grid, delta: float, families: Sequence[str] = RANKED_FAMILIES) -> FamilySuggestion:
    """Rank parametric families by small-sample corrected AIC of their fit.

    The suggestion is flagged ``low_signal`` when even the best family does
    not beat the zero kernel clearly (F statistic below ``LOW_SIGNAL_F``).
    """
    t, h = _grid_arrays(grid, delta)
    n = t.size
    for fam in families:
        _min_points(fam, n)
    total = float(h @ h)
    floor = max(1e-16 * total, 1e-300)
    ranks = []
    for fam in families:
        fit = fit_kernel(grid, delta, fam)
        k = _N_PARAMS[fam]
        sse = max(fit.sse, floor)
        aicc = n * math.log(sse / n) + 2 * k + 2 * k * (k + 1) / max(n - k - 1, 1)
        ranks.append(FamilyRank(fam, fit.sse, aicc, fit))
    ranks.sort(key=lambda r: (r.aicc, RANKED_FAMILIES.index(r.family) if r.family in RANKED_FAMILIES else 99))
    top = ranks[0]
    k = _N_PARAMS[top.family]
    sse = max(top.sse, floor)
    f = ((total - top.sse) / k) / (sse / max(n - k, 1)) if total > 0 else 0.0
    return FamilySuggestion(tuple(ranks), bool(f < LOW_SIGNAL_F), float(f))


@dataclass(frozen=True)
class ParametricModel:
    """Fully parametric Hawkes model assembled from graph estimate and kernel fits.

    ``eta_raw`` is the unclamped ``lambda_emp (I - A)``; ``clamped`` lists
    components whose negative value was set to zero.  ``supercritical`` is
    set when ``rho(A) >= 1``; such a model must not be simulated.
    """

    model: HawkesModel
    eta_raw: tuple
    lambda_emp: tuple
    clamped: tuple
    spectral_radius: float
    supercritical: bool

    @property
    def A(self) -> np.ndarray:
        from .model import branching_matrix

        return branching_matrix(self.model)


def assemble_parametric(graph_est, fits: Mapping, stream=None, edges=None) -> ParametricModel:
    """Combine per-edge fits with ``eta = lambda_emp (I - A)``.

    ``edges`` defaults to the significant edges of ``graph_est``; every one
    needs an entry in ``fits``.  ``lambda_emp`` comes from ``stream`` when
    given and from the estimate's stored empirical intensity otherwise.
    """
    from .graph import spectral_radius

    d = graph_est.d
    edges = sorted(graph_est.significant_edges() if edges is None else edges)
    missing = [e for e in edges if e not in fits]
    if missing:
        raise MissingFit(f"no kernel fit for edge(s) {missing}")
    lam = np.asarray(stream.empirical_intensity() if stream is not None else graph_est.empirical_intensity,
                     dtype=float)
    if lam.shape != (d,):
        raise InvalidConfig(f"empirical intensity has shape {lam.shape}, expected ({d},)")
    A = np.zeros((d, d))
    kernels = {}
    for e in edges:
        fit = fits[e]
        if fit.a_hat > 0:
            A[e[0] - 1, e[1] - 1] = fit.a_hat
            kernels[e] = fit.excitation()
    eta_raw = lam @ (np.eye(d) - A)
    clamped = tuple(int(j) + 1 for j in np.nonzero(eta_raw < 0)[0])
    if clamped:
        warnings.warn(f"negative parametric immigration intensity clamped to 0 for {clamped}",
                      RuntimeWarning, stacklevel=2)
    eta = np.maximum(eta_raw, 0.0)
    if not np.any(eta > 0):
        raise AllImmigrationZero("every parametric immigration intensity is zero")
    rho = spectral_radius(A)
    model = HawkesModel(d, tuple(eta), kernels)
    return ParametricModel(model, tuple(float(x) for x in eta_raw), tuple(float(x) for x in lam),
                           clamped, float(rho), bool(rho >= 1.0))
