"""Exact simulation of multitype Hawkes processes by the branching construction.

Immigrants of each type arrive as homogeneous Poisson processes; every
immigrant founds a family in which each type-``i`` event spawns
``Poisson(a_ij)`` type-``j`` children displaced by draws from ``w_ij``.

Each family draws from its own random stream, keyed by
``(seed, type, immigrant index)``, so results do not depend on the order in
which families are simulated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfig, NotSubcritical
from .model import SUBCRITICAL_TOL, HawkesModel, branching_matrix


@dataclass(frozen=True)
class EventStream:
    """Typed events on ``(0, horizon]`` sorted by time, then component.

    ``components`` are 1-based.  ``truncations`` counts families whose
    simulation was cut short by a safety cap.
    """

    d: int
    horizon: float
    times: np.ndarray
    components: np.ndarray
    truncations: int = 0

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        comps = np.ascontiguousarray(self.components, dtype=np.int64)
        if times.shape != comps.shape or times.ndim != 1:
            raise InvalidConfig("times and components must be 1-d arrays of equal length")
        if self.d < 0 or (self.d == 0 and times.size):
            raise InvalidConfig("d must be positive for a nonempty stream")
        if times.size:
            if np.any(np.diff(times) < 0):
                raise InvalidConfig("event times are not sorted")
            if times[0] <= 0 or times[-1] > self.horizon:
                raise InvalidConfig(f"event times must lie in (0, {self.horizon}]")
            if comps.min() < 1 or comps.max() > self.d:
                raise InvalidConfig(f"components must lie in [1, {self.d}]")
        times.setflags(write=False)
        comps.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_events(cls, d, horizon, events, truncations=0):
        """Build from an iterable of ``(time, component)``; sorts stably."""
        events = list(events)
        t = np.array([e[0] for e in events], dtype=float)
        c = np.array([e[1] for e in events], dtype=np.int64)
        order = np.lexsort((c, t))
        return cls(d, float(horizon), t[order], c[order], truncations)

    def __len__(self):
        return int(self.times.size)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.d == other.d and self.horizon == other.horizon
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.components, other.components))

    __hash__ = None

    def events(self):
        return list(zip(self.times.tolist(), self.components.tolist()))

    def counts(self) -> np.ndarray:
        """Number of events per component (length ``d``)."""
        return np.bincount(self.components - 1, minlength=self.d)[: self.d]

    def times_of(self, j: int) -> np.ndarray:
        return self.times[self.components == j]

    def empirical_intensity(self) -> np.ndarray:
        return self.counts() / self.horizon


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    burn_in: float | None = None
    seed: int = 0
    generation_cap: int = 10**6
    family_event_cap: int = 10**7

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidConfig(f"horizon must be > 0 (got {self.horizon!r})")
        if self.burn_in is not None and not (math.isfinite(self.burn_in) and self.burn_in >= 0):
            raise InvalidConfig(f"burn_in must be >= 0 (got {self.burn_in!r})")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer (got {self.seed!r})")
        if self.generation_cap < 1 or self.family_event_cap < 1:
            raise InvalidConfig("generation_cap and family_event_cap must be >= 1")


class Family(NamedTuple):
    times: np.ndarray
    components: np.ndarray
    generations: int
    truncated: bool


def default_burn_in(m: HawkesModel) -> float:
    """20 times the largest 99.9% displacement quantile of the model."""
    return 20.0 * m.max_support(0.999)


def family_rng(seed: int, root_type: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, root_type, index)))


def simulate_family(m: HawkesModel, root_type: int, root_time: float, cfg: SimConfig, rng,
                    until: float | None = None) -> Family:
    """Root event plus all descendants, generation by generation.

    Children later than ``until`` are dropped together with their
    offspring, which cannot fall before ``until`` either.
    """
    outgoing = {i: m.outgoing(i) for i in range(1, m.d + 1)}
    cur_t = np.array([float(root_time)])
    cur_c = np.array([int(root_type)], dtype=np.int64)
    out_t, out_c = [cur_t], [cur_c]
    total, gen, truncated = 1, 0, False
    while cur_t.size:
        if gen >= cfg.generation_cap:
            truncated = True
            break
        nxt_t, nxt_c = [], []
        for i in np.unique(cur_c).tolist():
            if not outgoing[i]:
                continue
            parents = cur_t[cur_c == i]
            for j, a, w in outgoing[i]:
                n = rng.poisson(a, parents.size)
                k = int(n.sum())
                if not k:
                    continue
                child = np.repeat(parents, n) + w.sample(rng, k)
                if until is not None:
                    child = child[child <= until]
                nxt_t.append(child)
                nxt_c.append(np.full(child.size, j, dtype=np.int64))
        gen += 1
        if not nxt_t:
            break
        cur_t = np.concatenate(nxt_t)
        cur_c = np.concatenate(nxt_c)
        if total + cur_t.size > cfg.family_event_cap:
            keep = cfg.family_event_cap - total
            cur_t, cur_c = cur_t[:keep], cur_c[:keep]
            truncated = True
        out_t.append(cur_t)
        out_c.append(cur_c)
        total += cur_t.size
        if truncated:
            break
    return Family(np.concatenate(out_t), np.concatenate(out_c), gen, truncated)


def simulate(m: HawkesModel, cfg: SimConfig) -> EventStream:
    """Simulate ``m`` on ``(0, cfg.horizon]`` after a burn-in period.

    Immigrants arrive on ``(-burn_in, horizon]``; only events in
    ``(0, horizon]`` are returned.  The output is a deterministic function
    of ``(m, cfg)``.
    """
    from .graph import spectral_radius

    A = branching_matrix(m)
    rho = spectral_radius(A)
    if rho >= 1.0 - SUBCRITICAL_TOL:
        raise NotSubcritical(f"spectral radius {rho:.12g} is not below 1")
    T = float(cfg.horizon)
    burn = default_burn_in(m) if cfg.burn_in is None else float(cfg.burn_in)
    seed = int(cfg.seed)
    has_offspring = {i: bool(m.outgoing(i)) for i in range(1, m.d + 1)}

    chunks_t, chunks_c = [], []
    truncations = 0
    for i0 in range(1, m.d + 1):
        rate = m.eta[i0 - 1]
        if rate <= 0:
            continue
        imm = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, i0)))
        n = imm.poisson(rate * (T + burn))
        roots = np.sort(T - imm.uniform(0.0, T + burn, n))
        if not has_offspring[i0]:
            chunks_t.append(roots)
            chunks_c.append(np.full(n, i0, dtype=np.int64))
            continue
        for idx, t0 in enumerate(roots.tolist()):
            fam = simulate_family(m, i0, t0, cfg, family_rng(seed, i0, idx), until=T)
            truncations += fam.truncated
            chunks_t.append(fam.times)
            chunks_c.append(fam.components)

    if chunks_t:
        t = np.concatenate(chunks_t)
        c = np.concatenate(chunks_c)
        keep = (t > 0) & (t <= T)
        t, c = t[keep], c[keep]
        order = np.lexsort((c, t))
        t, c = t[order], c[order]
    else:
        t, c = np.empty(0), np.empty(0, dtype=np.int64)
    return EventStream(m.d, T, t, c, truncations)
