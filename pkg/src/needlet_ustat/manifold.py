"""Compact manifolds with an explicit Laplacian eigenstructure.

Only the circle is shipped. The :class:`ManifoldModel` base class fixes the
surface the rest of the package relies on, so another manifold (the sphere
with spherical harmonics and a Gauss-Legendre x trapezoid product rule, say)
only has to fill in the abstract methods.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, NonConvergenceError

TWO_PI = 2.0 * math.pi


class ManifoldModel(abc.ABC):
    """A compact manifold M with L = -Laplace-Beltrami.

    Eigenspaces are indexed by an integer ``q >= 0`` in nondecreasing order of
    eigenvalue. Points are represented as numpy arrays whose trailing axis
    holds the coordinates (for ``dimension == 1`` the trailing axis is dropped
    and points are plain floats).
    """

    dimension: int
    volume: float

    @abc.abstractmethod
    def eigenvalue(self, q: int) -> float:
        ...

    @abc.abstractmethod
    def multiplicity(self, q: int) -> int:
        ...

    @abc.abstractmethod
    def eigenfunctions(self, q: int, x) -> np.ndarray:
        """Real orthonormal basis of eigenspace ``q`` at ``x``, shape (mult, *x.shape)."""

    @abc.abstractmethod
    def projector_kernel(self, q: int, x, y) -> np.ndarray:
        """P_q(x, y) = sum of u(x) u(y) over the real basis of eigenspace q."""

    @abc.abstractmethod
    def geodesic(self, x, y) -> np.ndarray:
        ...

    @abc.abstractmethod
    def quadrature_rule(self, bandwidth: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and positive weights exact for u_q u_q' with q, q' <= bandwidth."""

    @abc.abstractmethod
    def refined_rule(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Rule with about 2**level nodes, used by adaptive integration."""

    @abc.abstractmethod
    def sample_uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def eigen_index_set(self, q_max: int) -> list[tuple[int, float, int]]:
        return [(q, self.eigenvalue(q), self.multiplicity(q)) for q in range(q_max + 1)]

    def max_index_below(self, lam: float) -> int:
        """Largest q with eigenvalue <= lam (-1 if none)."""
        q = -1
        while self.eigenvalue(q + 1) <= lam:
            q += 1
        return q


@dataclass(frozen=True)
class Circle(ManifoldModel):
    """The unit circle S^1 of circumference 2*pi, points given as angles."""

    dimension: int = 1
    volume: float = TWO_PI

    def eigenvalue(self, q):
        return float(q * q)

    def multiplicity(self, q):
        return 1 if q == 0 else 2

    def max_index_below(self, lam):
        if lam < 0:
            return -1
        return int(math.floor(math.sqrt(lam) + 1e-12))

    def eigenfunctions(self, q, x):
        x = np.asarray(x, dtype=float)
        if q == 0:
            return np.full((1,) + x.shape, 1.0 / math.sqrt(TWO_PI))
        s = 1.0 / math.sqrt(math.pi)
        return np.stack([s * np.cos(q * x), s * np.sin(q * x)])

    def projector_kernel(self, q, x, y):
        diff = np.subtract(x, y)
        if q == 0:
            return np.full(np.shape(diff), 1.0 / TWO_PI)
        return np.cos(q * diff) / math.pi

    def geodesic(self, x, y):
        # |x - y| first, so the value is exactly symmetric in its arguments
        diff = np.mod(np.abs(np.subtract(x, y)), TWO_PI)
        return np.minimum(diff, TWO_PI - diff)

    def uniform_rule(self, n_nodes: int):
        nodes = TWO_PI * np.arange(n_nodes) / n_nodes
        return nodes, np.full(n_nodes, TWO_PI / n_nodes)

    def quadrature_rule(self, bandwidth):
        # M equispaced nodes integrate trigonometric polynomials of degree < M
        return self.uniform_rule(2 * int(bandwidth) + 1)

    def refined_rule(self, level):
        return self.uniform_rule(2 ** int(level))

    def sample_uniform(self, rng, size):
        return TWO_PI * rng.random(size)


def make_circle() -> Circle:
    return Circle()


def eigen_window_indices(model: ManifoldModel, B: float, j: int) -> list[int]:
    """All eigenspace indices q with eigenvalue in [B^(2(j-1)), B^(2(j+1))]."""
    if not B > 1:
        raise InvalidParameterError("B must exceed 1")
    lo, hi = B ** (2 * (j - 1)), B ** (2 * (j + 1))
    q_hi = model.max_index_below(hi * (1 + 1e-14))
    return [q for q in range(q_hi + 1) if lo * (1 - 1e-14) <= model.eigenvalue(q) <= hi * (1 + 1e-14)]


def integrate(
    model: ManifoldModel,
    g: Callable[[np.ndarray], np.ndarray],
    bandwidth: int | None = None,
    rtol: float = 1e-9,
    start_level: int = 6,
    max_level: int = 20,
):
    """Integrate ``g`` over M against the Riemannian volume.

    With ``bandwidth`` the exact rule ``quadrature_rule(bandwidth)`` is used;
    it is exact whenever g is a combination of eigenfunctions with index at
    most ``2 * bandwidth`` on the circle. Without it, node counts are doubled
    until two successive values agree to ``rtol``.

    ``g`` may return extra leading axes; the last axis must match the nodes.
    """
    if bandwidth is not None:
        nodes, weights = model.quadrature_rule(bandwidth)
        return np.asarray(g(nodes)) @ weights

    prev = None
    for level in range(start_level, max_level + 1):
        nodes, weights = model.refined_rule(level)
        vals = np.asarray(g(nodes))
        cur = vals @ weights
        if prev is not None:
            mass = np.abs(vals) @ weights
            err = np.abs(cur - prev)
            if np.all(err <= rtol * np.maximum(np.abs(cur), 1e-3 * mass) + 1e-300):
                return cur
        prev = cur
    raise NonConvergenceError(
        f"refinement did not converge within 2**{max_level} nodes; integrand is likely not smooth"
    )
