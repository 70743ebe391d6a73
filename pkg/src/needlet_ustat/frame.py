"""Needlet frames: window function, cubature levels and needlet evaluation.

A needlet at level j and cubature point xi_{j,k} is

    psi_{j,k}(x) = sqrt(lambda_{j,k}) * sum_{q in Lambda_j} b(sqrt(lambda_q) / B^j) P_q(x, xi_{j,k})

where Lambda_j collects the eigenspaces with eigenvalue in [B^(2(j-1)), B^(2(j+1))]
and the cubature rule at level j is exact on products of two functions of
frequency below B^(j+1). Level 0 also carries the constant projector so the
levels sum to the identity on L^2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate as sp_integrate
from scipy.interpolate import CubicHermiteSpline

from . import manifold as mf
from .errors import InvalidParameterError, ResourceError


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _bump_scalar(u):
    return math.exp(-1.0 / (1.0 - u * u)) if abs(u) < 1.0 else 0.0


@lru_cache(maxsize=1)
def _bump_table(n_cells=4096):
    """Cumulative bump integral on [-1, 1] with 8-point Gauss-Legendre per cell."""
    edges = np.linspace(-1.0, 1.0, n_cells + 1)
    gx, gw = np.polynomial.legendre.leggauss(8)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * gx[None, :]
    cell = (_bump(pts) * gw[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    norm = cum[-1]
    return edges, cum / norm, norm


def smooth_step_direct(u: float) -> float:
    """Normalized bump integral from -1 to u, by adaptive quadrature (slow, reference)."""
    _, _, norm = _bump_table()
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    with warnings.catch_warnings():
        # the requested tolerance sits at the rounding level, quad may say so
        warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
        val, _ = sp_integrate.quad(_bump_scalar, -1.0, u, epsabs=1e-16, epsrel=1e-14, limit=200)
    return val / norm


@lru_cache(maxsize=1)
def _smooth_step_spline():
    edges, cum, norm = _bump_table()
    return CubicHermiteSpline(edges, cum, _bump(edges) / norm)


def smooth_step(u):
    """Cached version of :func:`smooth_step_direct`, vectorized."""
    u = np.asarray(u, dtype=float)
    out = _smooth_step_spline()(np.clip(u, -1.0, 1.0))
    out = np.where(u <= -1.0, 0.0, np.where(u >= 1.0, 1.0, out))
    return out


@dataclass(frozen=True)
class WindowFunction:
    """Smooth window b supported in [1/B, B] with sum_j b^2(t B^-j) = 1 for t >= 1."""

    B: float

    def transition(self, t, step=smooth_step):
        # 1 on t <= 1/B, 0 on t >= 1, smooth in between
        t = np.asarray(t, dtype=float)
        B = self.B
        u = 1.0 - 2.0 * B / (B - 1.0) * (t - 1.0 / B)
        return np.where(t <= 1.0 / B, 1.0, np.where(t >= 1.0, 0.0, step(u)))

    def evaluate_sq(self, t):
        t = np.asarray(t, dtype=float)
        val = self.transition(t / self.B) - self.transition(t)
        return np.where(t > 0, np.maximum(val, 0.0), 0.0)

    def evaluate(self, t):
        return np.sqrt(self.evaluate_sq(t))

    __call__ = evaluate

    def evaluate_direct(self, t):
        """Window values from adaptive quadrature instead of the cached spline."""
        step = np.vectorize(smooth_step_direct, otypes=[float])
        t = np.asarray(t, dtype=float)
        val = self.transition(t / self.B, step) - self.transition(t, step)
        return np.sqrt(np.where(t > 0, np.maximum(val, 0.0), 0.0))


def build_window(B: float) -> WindowFunction:
    if not B > 1:
        raise InvalidParameterError("B must exceed 1")
    return WindowFunction(float(B))


@dataclass(frozen=True)
class FrameLevel:
    j: int
    points: np.ndarray
    weights: np.ndarray
    qs: np.ndarray
    window_values: np.ndarray

    @property
    def K(self) -> int:
        return self.points.shape[0]

    @property
    def band(self) -> int:
        """Largest eigenspace index carrying a nonzero window value."""
        nz = self.qs[self.window_values > 0]
        return int(nz.max()) if nz.size else 0


@dataclass(frozen=True)
class NeedletFrame:
    window: WindowFunction
    manifold: mf.ManifoldModel
    levels: tuple = field(repr=False)

    @property
    def B(self) -> float:
        return self.window.B

    @property
    def j_max(self) -> int:
        return len(self.levels) - 1

    def level(self, j: int) -> FrameLevel:
        if not 0 <= j <= self.j_max:
            raise InvalidParameterError(f"level {j} outside frame range 0..{self.j_max}")
        return self.levels[j]

    def K(self, j: int) -> int:
        return self.level(j).K

    def band(self, j: int) -> int:
        return self.level(j).band

    def evaluate(self, j: int, x, ks=None) -> np.ndarray:
        """Needlet values, shape (len(ks), *x.shape); all k when ``ks`` is None."""
        lev = self.level(j)
        x = np.asarray(x, dtype=float)
        idx = np.arange(lev.K) if ks is None else np.atleast_1d(ks)
        xi = lev.points[idx]
        if isinstance(self.manifold, mf.Circle):
            diff = x.reshape((1,) + x.shape) - xi.reshape((-1,) + (1,) * x.ndim)
            return cosine_series(self.cosine_profile(j), diff)
        out = np.zeros((idx.size,) + x.shape)
        xx = x.reshape((1,) + x.shape)
        yy = xi.reshape((-1,) + (1,) * x.ndim)
        for q, bq in zip(lev.qs, lev.window_values):
            if bq > 0:
                out += bq * self.manifold.projector_kernel(int(q), xx, yy)
        out *= np.sqrt(lev.weights[idx]).reshape((-1,) + (1,) * x.ndim)
        return out

    def cosine_profile(self, j: int) -> np.ndarray:
        """Coefficients c_q with psi_{j,k}(x) = sum_q c_q cos(q (x - xi_{j,k})) on the circle."""
        if not isinstance(self.manifold, mf.Circle):
            raise TypeError("cosine profile only exists on the circle")
        lev = self.level(j)
        c = np.zeros(lev.band + 1)
        lam = lev.weights[0]
        for q, bq in zip(lev.qs, lev.window_values):
            if bq > 0:
                c[q] = math.sqrt(lam) * bq * (1.0 / mf.TWO_PI if q == 0 else 1.0 / math.pi)
        return c


def cosine_series(c, theta):
    """sum_q c_q cos(q theta) by Clenshaw's recurrence."""
    y = np.cos(theta)
    b1 = np.zeros_like(y)
    b2 = np.zeros_like(y)
    for ck in c[:0:-1]:
        b1, b2 = ck + 2.0 * y * b1 - b2, b1
    return c[0] + y * b1 - b2


def build_frame(
    manifold: mf.ManifoldModel, B: float, j_max: int, memory_budget: float = 2e9
) -> NeedletFrame:
    window = build_window(B)
    if j_max < 0:
        raise InvalidParameterError("j_max must be nonnegative")
    levels = []
    need = 0.0
    for j in range(j_max + 1):
        qs = mf.eigen_window_indices(manifold, B, j)
        vals = [float(window(math.sqrt(manifold.eigenvalue(q)) / B**j)) for q in qs]
        if j == 0:
            qs, vals = [0] + qs, [1.0] + vals
        bandwidth = int(math.ceil(B ** (j + 1) - 1e-12))
        points, weights = manifold.quadrature_rule(bandwidth)
        # dense needlet matrix on its own exact product grid
        need += 8.0 * points.size * (2 * bandwidth + 1) * 2
        levels.append(FrameLevel(j, points, weights, np.asarray(qs, dtype=int), np.asarray(vals)))
    if need > memory_budget:
        raise ResourceError(
            f"j_max={j_max} needs about {need / 1e9:.2f} GB for needlet matrices, budget {memory_budget / 1e9:.2f} GB"
        )
    return NeedletFrame(window, manifold, tuple(levels))


def _bandwidth_for(*bands) -> int:
    # rule with bandwidth Q is exact up to total degree 2Q
    return max(1, int(math.ceil(sum(bands) / 2)))


def needlet_coefficients(frame: NeedletFrame, f, j: int) -> np.ndarray:
    """beta_{j,k} for every k at level j."""
    fb = getattr(f, "bandwidth", None)
    g = lambda x: frame.evaluate(j, x) * f(x)
    if fb is None:
        return mf.integrate(frame.manifold, g)
    return mf.integrate(frame.manifold, g, bandwidth=_bandwidth_for(frame.band(j), fb))


def needlet_coefficient(frame: NeedletFrame, f, j: int, k: int) -> float:
    if not 0 <= k < frame.K(j):
        raise InvalidParameterError(f"k={k} outside 0..{frame.K(j) - 1}")
    fb = getattr(f, "bandwidth", None)
    g = lambda x: frame.evaluate(j, x, [k])[0] * f(x)
    if fb is None:
        return float(mf.integrate(frame.manifold, g))
    return float(mf.integrate(frame.manifold, g, bandwidth=_bandwidth_for(frame.band(j), fb)))


def dense_grid(frame: NeedletFrame, j: int, oversample: int = 32) -> np.ndarray:
    n = max(1024, oversample * frame.K(j))
    nodes, _ = frame.manifold.refined_rule(int(math.ceil(math.log2(n))))
    return nodes


def localization_envelope(frame: NeedletFrame, j: int, k: int, x, eta: float, C: float = 1.0):
    d = frame.manifold.dimension
    lev = frame.level(j)
    dist = frame.manifold.geodesic(x, lev.points[k])
    return C * frame.B ** (j * d / 2) / (1.0 + frame.B ** (j * d) * dist) ** eta


def check_localization(frame: NeedletFrame, j: int, k: int, eta: int, grid=None):
    """Smallest envelope constant C on a dense grid and the residual violation."""
    if eta < 2:
        raise InvalidParameterError("eta must be at least 2")
    x = dense_grid(frame, j) if grid is None else np.asarray(grid)
    x = np.concatenate([x, [frame.level(j).points[k]]])
    vals = np.abs(frame.evaluate(j, x, [k])[0])
    env = localization_envelope(frame, j, k, x, eta)
    C_fit = float(np.max(vals / env))
    violation = float(max(0.0, np.max(vals / (C_fit * env) - 1.0)))
    return C_fit, violation


def lp_norm(frame: NeedletFrame, j: int, k: int, p: float) -> float:
    if not p >= 1:
        raise InvalidParameterError("p must be at least 1")
    psi = lambda x: frame.evaluate(j, x, [k])[0]
    if math.isinf(p):
        x = np.concatenate([dense_grid(frame, j, 64), [frame.level(j).points[k]]])
        return float(np.max(np.abs(psi(x))))
    if float(p).is_integer() and int(p) % 2 == 0:
        val = mf.integrate(frame.manifold, lambda x: psi(x) ** int(p),
                           bandwidth=_bandwidth_for(*[frame.band(j)] * int(p)))
    else:
        val = mf.integrate(frame.manifold, lambda x: np.abs(psi(x)) ** p)
    return float(val) ** (1.0 / p)


def product_integral(frame: NeedletFrame, j: int, ks) -> float:
    ks = list(ks)
    g = lambda x: np.prod(frame.evaluate(j, x, ks), axis=0)
    return float(mf.integrate(frame.manifold, g, bandwidth=_bandwidth_for(*[frame.band(j)] * len(ks))))


def product_integral_bound(frame: NeedletFrame, j: int, ks, eta: int = 3):
    """Integral of a product of needlets and the localization bound it should obey.

    Returns ``(lhs, rhs)`` with rhs = C B^{dj(q-1)} / (1 + B^{dj} Delta)^{eta(q-1)},
    Delta the smallest pairwise distance of the cubature points and C the
    largest fitted envelope constant among the factors.
    """
    ks = list(ks)
    q = len(ks)
    if q < 2:
        raise InvalidParameterError("need at least two needlets")
    lhs = product_integral(frame, j, ks)
    d = frame.manifold.dimension
    pts = frame.level(j).points[ks]
    delta = min(
        float(frame.manifold.geodesic(pts[a], pts[b])) for a in range(q) for b in range(a + 1, q)
    )
    C = max(check_localization(frame, j, k, eta)[0] for k in set(ks))
    Bd = frame.B ** (d * j)
    rhs = C * Bd ** (q - 1) / (1.0 + Bd * delta) ** (eta * (q - 1))
    return lhs, rhs


def corollary_sums(frame: NeedletFrame, j: int, q: int, c=None):
    """Full sum over all q-tuples of weighted needlet products vs its diagonal part."""
    K = frame.K(j)
    c = np.ones(K) if c is None else np.asarray(c, dtype=float)
    bw = _bandwidth_for(*[frame.band(j)] * q)
    full = mf.integrate(frame.manifold, lambda x: (c @ frame.evaluate(j, x)) ** q, bandwidth=bw)
    diag = mf.integrate(frame.manifold, lambda x: (c[:, None] ** q * frame.evaluate(j, x) ** q).sum(0),
                        bandwidth=bw)
    return float(full), float(diag)


def random_band_limited(manifold: mf.ManifoldModel, qs, rng: np.random.Generator):
    """Random real combination of eigenfunctions with indices in ``qs``.

    Returns ``(f, coef)`` where ``coef[q]`` holds the basis coefficients of
    eigenspace q, and ``f`` is a vectorized callable with a ``bandwidth``.
    """
    coef = {int(q): rng.standard_normal(manifold.multiplicity(int(q))) for q in qs}

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for q, a in coef.items():
            out += np.tensordot(a, manifold.eigenfunctions(q, x), axes=1)
        return out

    f.bandwidth = max(coef) if coef else 0
    return f, coef


def frame_validation_rows(frame: NeedletFrame, ps=(2, 4, math.inf), eta: int = 3, ks=None, seed: int = 0):
    """Rows (j, k, p, lp_norm, C_fit, tightness_residual) for the ``frame validate`` command."""
    rng = np.random.default_rng(seed)
    qs = [q for q in range(1, int(frame.B ** frame.j_max) + 1)]
    f, coef = random_band_limited(frame.manifold, qs, rng)
    energy = sum(float(a @ a) for a in coef.values())
    total = sum(float(np.sum(needlet_coefficients(frame, f, j) ** 2)) for j in range(frame.j_max + 1))
    tight = abs(total - energy) / energy
    rows = []
    for j in range(frame.j_max + 1):
        for k in ([0] if ks is None else ks):
            if k >= frame.K(j):
                continue
            C_fit, _ = check_localization(frame, j, k, eta)
            for p in ps:
                rows.append((j, k, p, lp_norm(frame, j, k, p), C_fit, tight))
    return rows
