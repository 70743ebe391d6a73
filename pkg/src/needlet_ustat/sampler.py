"""Poisson and fixed-size point configurations drawn from a density on the circle.

Every configuration comes from its own counter-based stream keyed by
(master seed, replicate key), so the result never depends on which worker
draws it or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from ._kernels import squeeze_accept
from .errors import InvalidParameterError

TABLE_SIZE = 1 << 16


def _key(key) -> tuple:
    return tuple(int(k) for k in (key if isinstance(key, (tuple, list)) else (key,)))


def replicate_rng(seed: int, key=()) -> np.random.Generator:
    """Independent Philox stream for ``key`` (a tuple of nonnegative ints) under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=_key(key))))


@dataclass(frozen=True)
class PointConfiguration:
    points: np.ndarray
    mode: str  # "poisson" or "fixed"
    scale: float  # R_t for Poisson mode, m for fixed mode
    density: object = field(repr=False, compare=False)
    seed: int = 0
    key: tuple = ()

    @property
    def count(self) -> int:
        return int(self.points.size)

    def __len__(self):
        return self.count


def _envelope(density):
    cache = density.cache
    if "envelope" not in cache:
        table = np.ascontiguousarray(density.grid_values(TABLE_SIZE))
        err = density.interpolation_bound(TABLE_SIZE) + 1e-12 * float(np.abs(table).max())
        fmax = float(table.max()) + err
        cache["envelope"] = (table, err, fmax, np.ascontiguousarray(density.spectrum, dtype=complex))
    return cache["envelope"]


def draw_iid(density, rng: np.random.Generator, n: int) -> np.ndarray:
    """n independent points from the density by rejection against fmax * uniform."""
    n = int(n)
    if n <= 0:
        return np.zeros(0)
    if density.is_uniform():
        return mf.TWO_PI * rng.random(n)
    table, err, fmax, F = _envelope(density)
    accept_rate = 1.0 / (mf.TWO_PI * fmax)
    chunks, have = [], 0
    while have < n:
        need = n - have
        batch = int(need / accept_rate * 1.02) + 64
        prop = mf.TWO_PI * rng.random(batch)
        u = rng.random(batch)
        ok, _ = squeeze_accept(prop, u, table, err, fmax, F)
        pts = prop[ok][:need]
        chunks.append(pts)
        have += pts.size
    return np.concatenate(chunks)


def sample_poisson(density, R_t: float, seed: int, key=()) -> PointConfiguration:
    """Poisson process with intensity R_t * f: N ~ Poisson(R_t), then N i.i.d. points."""
    if not R_t > 0:
        raise InvalidParameterError("R_t must be positive")
    rng = replicate_rng(seed, key)
    count = rng.poisson(R_t)
    pts = draw_iid(density, rng, count)
    return PointConfiguration(pts, "poisson", float(R_t), density, int(seed), _key(key))


def sample_coupled(density, m: int, seed: int, key=()):
    """(poissonized, fixed) sharing one i.i.d. stream: first N_m and first m points."""
    if int(m) < 1:
        raise InvalidParameterError("m must be at least 1")
    m = int(m)
    rng = replicate_rng(seed, key)
    count = int(rng.poisson(m))
    stream = draw_iid(density, rng, max(m, count))
    k = _key(key)
    pois = PointConfiguration(stream[:count], "poisson", float(m), density, int(seed), k)
    fixed = PointConfiguration(stream[:m], "fixed", float(m), density, int(seed), k)
    return pois, fixed
