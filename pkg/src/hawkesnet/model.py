"""Hawkes model specifications and exact model-level quantities.

Components are numbered ``1..d`` everywhere in the public interface.  A
reproduction kernel ``(i, j)`` describes the effect *from* component ``i``
*on* component ``j``; the branching matrix is therefore indexed
``A[i - 1, j - 1]`` with the source in the row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np
from scipy import special

from .errors import InvalidConfig, NotSubcritical

#: ``rho(A)`` must stay below ``1 - SUBCRITICAL_TOL`` before ``(I - A)`` is inverted.
SUBCRITICAL_TOL = 1e-9


class KernelSpec:
    """Base class for displacement densities supported on ``t >= 0``."""

    family: str = ""
    n_params: int = 0

    def pdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def __call__(self, t):
        return self.pdf(t)

    def tail_horizon(self, tail=1e-8) -> float:
        """Time beyond which the density carries less than ``tail`` mass."""
        return float(self.quantile(1.0 - tail))


@dataclass(frozen=True)
class GammaDensity(KernelSpec):
    shape: float
    rate: float

    family = "gamma"
    n_params = 2

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0 and math.isfinite(self.shape) and math.isfinite(self.rate)):
            raise InvalidConfig(f"gamma kernel needs shape, rate > 0 (got {self.shape}, {self.rate})")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (special.xlogy(self.shape - 1.0, t) + self.shape * math.log(self.rate)
                    - self.rate * t - special.gammaln(self.shape))
            out = np.where(t >= 0, np.exp(logp), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t > 0, special.gammainc(self.shape, self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def quantile(self, q):
        return special.gammaincinv(self.shape, q) / self.rate

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def params(self):
        return {"shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class UniformWindow(KernelSpec):
    lo: float
    hi: float

    family = "uniform"
    n_params = 2

    def __post_init__(self):
        if not (0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise InvalidConfig(f"uniform kernel needs 0 <= lo < hi (got {self.lo}, {self.hi})")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where((t >= self.lo) & (t <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return out if out.ndim else float(out)

    def quantile(self, q):
        return self.lo + q * (self.hi - self.lo)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class ExponentialDecay(KernelSpec):
    rate: float

    family = "exp"
    n_params = 1

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidConfig(f"exponential kernel needs rate > 0 (got {self.rate})")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            out = np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def quantile(self, q):
        return -math.log1p(-q) / self.rate

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class GridKernel(KernelSpec):
    """Piecewise-constant density: ``values[k-1]`` on ``((k-1)*delta, k*delta]``."""

    delta: float
    values: tuple

    family = "grid"

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidConfig(f"grid kernel needs delta > 0 (got {self.delta})")
        if not v or min(v) < 0 or not all(math.isfinite(x) for x in v):
            raise InvalidConfig("grid kernel needs a nonempty list of finite values >= 0")
        mass = self.delta * math.fsum(v)
        if abs(mass - 1.0) > 1e-9:
            raise InvalidConfig(f"grid kernel must integrate to 1 (delta * sum(values) = {mass!r})")

    @property
    def n_params(self):
        return len(self.values)

    def _cells(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.ceil(t / self.delta).astype(np.int64) - 1
        inside = (t > 0) & (idx >= 0) & (idx < len(self.values))
        return t, np.where(inside, idx, 0), inside

    def pdf(self, t):
        t, idx, inside = self._cells(t)
        out = np.where(inside, np.asarray(self.values)[idx], 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        edges = self.delta * np.arange(len(self.values) + 1)
        cum = np.concatenate([[0.0], np.cumsum(self.values) * self.delta])
        out = np.interp(t, edges, cum, left=0.0, right=1.0)
        return out if out.ndim else float(out)

    def quantile(self, q):
        cum = np.concatenate([[0.0], np.cumsum(self.values) * self.delta])
        cum[-1] = 1.0
        edges = self.delta * np.arange(len(self.values) + 1)
        k = int(np.searchsorted(cum, q, side="left"))
        k = min(max(k, 1), len(self.values))
        cell = self.values[k - 1] * self.delta
        frac = 0.0 if cell == 0 else (q - cum[k - 1]) / cell
        return float(edges[k - 1] + min(max(frac, 0.0), 1.0) * self.delta)

    def sample(self, rng, size):
        probs = np.asarray(self.values) * self.delta
        cells = rng.choice(len(probs), size=size, p=probs / probs.sum())
        return (cells + 1.0 - rng.random(size)) * self.delta

    def tail_horizon(self, tail=1e-8):
        return self.delta * len(self.values)

    def params(self):
        return {"delta": self.delta, "values": list(self.values)}


KERNEL_FAMILIES = {
    "gamma": GammaDensity,
    "uniform": UniformWindow,
    "exp": ExponentialDecay,
    "grid": GridKernel,
}


def make_kernel(family: str, params: Mapping) -> KernelSpec:
    try:
        cls = KERNEL_FAMILIES[family]
    except KeyError:
        raise InvalidConfig(f"unknown kernel family {family!r}") from None
    return cls(**params)


def kernel_eval(w: KernelSpec, t):
    """Evaluate the displacement density ``w`` at time(s) ``t``."""
    return w.pdf(t)


class Excitation(NamedTuple):
    """Reproduction intensity ``h = a * w`` of one ordered pair."""

    a: float
    w: KernelSpec

    def __call__(self, t):
        return self.a * self.w.pdf(t)


@dataclass(frozen=True)
class HawkesModel:
    """A multitype Hawkes process with constant immigration.

    Parameters
    ----------
    d : int
        Number of event types.
    eta : sequence of float
        Immigration intensities, events per unit time, one per type.
    kernels : mapping
        ``(i, j) -> Excitation(a, w)`` for every pair with ``a > 0``.
    """

    d: int
    eta: tuple
    kernels: Mapping = field(default_factory=dict)

    def __post_init__(self):
        eta = tuple(float(x) for x in self.eta)
        object.__setattr__(self, "eta", eta)
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise InvalidConfig(f"d must be a positive integer (got {self.d!r})")
        if len(eta) != self.d:
            raise InvalidConfig(f"eta has {len(eta)} entries, expected d={self.d}")
        if any(not math.isfinite(x) or x < 0 for x in eta):
            raise InvalidConfig("immigration intensities must be finite and >= 0")
        if not any(x > 0 for x in eta):
            raise InvalidConfig("at least one immigration intensity must be positive")
        kernels = {}
        for key, exc in dict(self.kernels).items():
            i, j = (int(key[0]), int(key[1]))
            if not (1 <= i <= self.d and 1 <= j <= self.d):
                raise InvalidConfig(f"kernel pair {key} outside [1, {self.d}]^2")
            if not isinstance(exc, Excitation):
                exc = Excitation(*exc)
            if not (exc.a > 0 and math.isfinite(exc.a)):
                raise InvalidConfig(f"branching coefficient of {key} must be finite and > 0 (got {exc.a})")
            if not isinstance(exc.w, KernelSpec):
                raise InvalidConfig(f"kernel of {key} is not a KernelSpec")
            kernels[(i, j)] = Excitation(float(exc.a), exc.w)
        object.__setattr__(self, "kernels", MappingProxyType(dict(sorted(kernels.items()))))

    @property
    def eta_array(self) -> np.ndarray:
        return np.array(self.eta)

    def h(self, i: int, j: int, t):
        exc = self.kernels.get((i, j))
        if exc is None:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        return exc(t)

    def outgoing(self, i: int):
        """``[(j, a, w), ...]`` for the kernels leaving component ``i``, sorted by ``j``."""
        return [(j, exc.a, exc.w) for (src, j), exc in self.kernels.items() if src == i]

    def max_support(self, q=0.999) -> float:
        """Largest ``q``-quantile over all displacement densities (0 without kernels)."""
        return max((float(exc.w.quantile(q)) for exc in self.kernels.values()), default=0.0)


def branching_matrix(m: HawkesModel) -> np.ndarray:
    """``d x d`` matrix with ``a_{i,j}`` at ``[i-1, j-1]``; zero where no kernel exists."""
    A = np.zeros((m.d, m.d))
    for (i, j), exc in m.kernels.items():
        A[i - 1, j - 1] = exc.a
    return A


def _check_subcritical(A):
    from .graph import spectral_radius

    rho = spectral_radius(A)
    if rho >= 1.0 - SUBCRITICAL_TOL:
        raise NotSubcritical(f"spectral radius {rho:.12g} is not below 1")
    return rho


def stationary_intensity(m: HawkesModel) -> np.ndarray:
    """Mean event rate per component, the row vector solving ``lam (I - A) = eta``."""
    A = branching_matrix(m)
    _check_subcritical(A)
    return np.linalg.solve((np.eye(m.d) - A).T, m.eta_array)


def example_model() -> HawkesModel:
    """The ten-type benchmark model with three rate regimes and two weak components.

    Immigration at components 1, 7 and 10; heavy Gamma(6, 4) edges with
    weight 1.5, light uniform-window edges on ``[1, 2]`` with weight 0.5 and
    one super-light uniform edge ``(5, 7)`` with weight 0.1.
    """
    gamma = GammaDensity(6.0, 4.0)
    window = UniformWindow(1.0, 2.0)
    kernels = {}
    for e in [(1, 2), (2, 4), (8, 9)]:
        kernels[e] = Excitation(1.5, gamma)
    for e in [(1, 1), (2, 3), (3, 5), (4, 3), (4, 5), (4, 6), (5, 3), (7, 8), (9, 7)]:
        kernels[e] = Excitation(0.5, window)
    kernels[(5, 7)] = Excitation(0.1, window)
    eta = [1.0 if i in (1, 7, 10) else 0.0 for i in range(1, 11)]
    return HawkesModel(10, tuple(eta), kernels)
