"""Needlet U-statistics: fast evaluation, exact variance and chaos magnitudes.

The level-j kernel is h_j(x_1, ..., x_n) = sum_k psi_{j,k}(x_1) ... psi_{j,k}(x_n), so the
sum over ordered n-tuples of distinct points is sum_k n! e_n(psi_{j,k}(x_1), ..., psi_{j,k}(x_N))
with e_n the elementary symmetric polynomial. Power sums are formed once per k
and turned into e_n by Newton's identities.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import manifold as mf
from . import spectral as sp
from .errors import InvalidParameterError, RegimeError, ResourceError, TruncationError


# ---------------------------------------------------------------- evaluation

def elementary_from_power_sums(p: np.ndarray) -> np.ndarray:
    """e_0..e_n from power sums p_1..p_n (rows of ``p``), column-wise."""
    p = np.atleast_2d(p)
    n = p.shape[0]
    e = np.zeros((n + 1,) + p.shape[1:])
    e[0] = 1.0
    for m in range(1, n + 1):
        acc = np.zeros(p.shape[1:])
        for i in range(1, m + 1):
            acc += (-1) ** (i - 1) * e[m - i] * p[i - 1]
        e[m] = acc / m
    return e


def needlet_power_sums(frame, j: int, x, n: int, method: str = "auto") -> np.ndarray:
    """p_m(k) = sum_i psi_{j,k}(x_i)^m, shape (n, K_j)."""
    x = np.asarray(x, dtype=float)
    if method == "auto":
        method = "spectral" if isinstance(frame.manifold, mf.Circle) else "dense"
    if method == "spectral":
        return sp.needlet_power_sums(frame, j, x, n)
    V = frame.evaluate(j, x)
    return np.stack([(V ** m).sum(axis=1) for m in range(1, n + 1)])


def ustat_from_points(frame, j: int, x, n: int, method: str = "auto") -> float:
    if n < 1:
        raise InvalidParameterError("order n must be at least 1")
    x = np.asarray(x, dtype=float)
    if x.size < n:
        return 0.0
    e = elementary_from_power_sums(needlet_power_sums(frame, j, x, n, method))
    return float(math.factorial(n) * e[n].sum())


def evaluate_kernel_ustat(frame, config, j: int, n: int, method: str = "auto") -> float:
    """Sum of h_j over ordered n-tuples of distinct points of ``config``."""
    pts = config.points if hasattr(config, "points") else config
    return ustat_from_points(frame, j, pts, n, method)


def brute_force_ustat(frame, points, j: int, n: int) -> float:
    """Explicit enumeration of all ordered n-tuples of distinct points (oracle)."""
    x = np.asarray(getattr(points, "points", points), dtype=float)
    V = frame.evaluate(j, x)
    total = 0.0
    for tup in itertools.permutations(range(x.size), int(n)):
        total += float(np.prod(V[:, list(tup)], axis=1).sum())
    return total


# ---------------------------------------------------------------- Gram data

@dataclass(frozen=True)
class GramData:
    """Inner products of level-j needlets against f dx, plus local fourth moments.

    ``fourth_block[k, a, b, c]`` holds int psi_k psi_{k+oa} psi_{k+ob} psi_{k+oc} f
    for offsets o = ``offsets``; entries outside ``mask`` (pairwise lattice
    distance above the radius) are dropped and stored as zero.
    """

    j: int
    G: np.ndarray
    beta: np.ndarray
    radius: int
    offsets: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    fourth_block: np.ndarray | None = field(repr=False)
    kept_energy: float
    total_energy: float
    nodes: np.ndarray = field(repr=False)
    node_weights: np.ndarray = field(repr=False)  # quadrature weight times f
    psi: np.ndarray = field(repr=False)  # needlets at the nodes, (K, X)
    f_min: float = 0.0
    f_max: float = 0.0

    @property
    def K(self) -> int:
        return self.G.shape[0]

    @property
    def dropped_energy(self) -> float:
        return max(0.0, self.total_energy - self.kept_energy)

    @property
    def dropped_fraction(self) -> float:
        return self.dropped_energy / self.total_energy if self.total_energy > 0 else 0.0

    @property
    def complete(self) -> bool:
        return bool(self.mask.all()) and 2 * self.radius + 1 >= self.K

    def fourth_moment(self, k1, k2, k3, k4) -> float:
        """Stored value of int psi_k1 psi_k2 psi_k3 psi_k4 f (0 if the tuple was dropped)."""
        K = self.K
        pos = {int(o) % K: i for i, o in enumerate(self.offsets)}
        try:
            a, b, c = (pos[(k - k1) % K] for k in (k2, k3, k4))
        except KeyError:
            return 0.0
        return float(self.fourth_block[k1 % K, a, b, c]) if self.mask[a, b, c] else 0.0

    def fourth_moment_direct(self, k1, k2, k3, k4) -> float:
        P = self.psi
        return float(np.sum(self.node_weights * P[k1] * P[k2] * P[k3] * P[k4]))


def _circular(d, K):
    d = np.abs(d) % K
    return np.minimum(d, K - d)


def neighbor_mask(offsets: np.ndarray, K: int, radius: int) -> np.ndarray:
    a = offsets[:, None, None]
    b = offsets[None, :, None]
    c = offsets[None, None, :]
    return (
        (_circular(a - b, K) <= radius)
        & (_circular(a - c, K) <= radius)
        & (_circular(b - c, K) <= radius)
    )


def _node_rule(frame, density, j, order):
    band = frame.band(j)
    fb = getattr(density, "bandwidth", None)
    if fb is None:
        raise InvalidParameterError("density must be band-limited (carry a bandwidth)")
    bw = max(1, int(math.ceil((order * band + fb) / 2)))
    nodes, w = frame.manifold.quadrature_rule(bw)
    return nodes, w * density(nodes)


def compute_gram(
    frame,
    density,
    j: int,
    truncation_radius: int = 24,
    tol: float = 1e-4,
    fourth: bool = True,
    memory_budget: float = 1.5e9,
) -> GramData:
    """Gram matrix, coefficients and the truncated fourth-moment tensor at level j.

    The dropped part of the tensor is measured exactly in the l2 sense: the
    full sum of squares equals int int f(x) f(y) (sum_k psi_k(x) psi_k(y))^4 dx dy,
    so dropped = full - kept. Raises when the dropped fraction exceeds ``tol``.
    """
    if truncation_radius < 1:
        raise InvalidParameterError("truncation_radius must be at least 1")
    K = frame.K(j)
    nodes, fw = _node_rule(frame, density, j, 4 if fourth else 2)
    psi = frame.evaluate(j, nodes)
    G = (psi * fw) @ psi.T
    G = 0.5 * (G + G.T)
    beta = psi @ fw
    # entries at the rounding level are zero; each needlet value sums about band terms
    floor = 64 * np.finfo(float).eps * max(1, frame.band(j)) * (np.abs(psi) @ np.abs(fw))
    beta[np.abs(beta) <= floor] = 0.0
    rad = min(int(truncation_radius), (K - 1) // 2)
    offsets = np.arange(-rad, rad + 1)
    mask = neighbor_mask(offsets, K, rad)
    O = offsets.size
    block = None
    kept = total = 0.0
    if fourth:
        need = 8.0 * K * O**3 + 8.0 * O * O * nodes.size
        if need > memory_budget:
            raise ResourceError(
                f"fourth-moment block at j={j}, radius {rad} needs about {need / 1e9:.2f} GB"
            )
        block = np.empty((K, O, O, O))
        for k in range(K):
            Vs = psi[(k + offsets) % K]
            T = (Vs * (fw * psi[k]))[:, None, :] * Vs[None, :, :]
            block[k] = (T.reshape(O * O, -1) @ Vs.T).reshape(O, O, O)
        block *= mask[None]
        kept = float(np.sum(block**2))
        kern = psi.T @ psi
        total = float(fw @ (kern**4) @ fw)
        frac = max(0.0, total - kept) / total if total > 0 else 0.0
        if frac > tol:
            raise TruncationError(
                f"truncation radius {rad} at j={j} drops {frac:.3g} of the fourth-moment energy "
                f"(tolerance {tol:g}); use a larger truncation_radius"
            )
    return GramData(j, G, beta, rad, offsets, mask, block, kept, total, nodes, fw, psi,
                    float(getattr(density, "f_min", 0.0)), float(getattr(density, "f_max", 0.0)))


# ---------------------------------------------------------------- variance

@dataclass(frozen=True)
class UStatReport:
    j: int
    n: int
    R_t: float
    mean: float
    sigma_sq: float
    chaos_norms: np.ndarray
    Lambda: np.ndarray | None = None
    value: float | None = None
    normalized: float | None = None

    def __post_init__(self):
        if not math.isclose(self.sigma_sq, float(np.sum(self.chaos_norms)), rel_tol=1e-12):
            raise AssertionError("sigma_sq must equal the sum of the chaos norms")

    def with_value(self, value: float) -> "UStatReport":
        return replace(self, value=float(value), normalized=float((value - self.mean) / math.sqrt(self.sigma_sq)))

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / math.sqrt(self.sigma_sq)


def chaos_sums(gram: GramData, n: int) -> np.ndarray:
    """S_p = sum_{k1,k2} beta_k1^{n-p} beta_k2^{n-p} G[k1,k2]^p for p = 1..n."""
    out = np.empty(n)
    for p in range(1, n + 1):
        b = gram.beta ** (n - p)
        out[p - 1] = float(b @ (gram.G**p) @ b)
    return out


def exact_variance(gram: GramData, R_t: float, n: int, j: int | None = None) -> UStatReport:
    if n < 1:
        raise InvalidParameterError("order n must be at least 1")
    if not R_t > 0:
        raise InvalidParameterError("R_t must be positive")
    S = chaos_sums(gram, n)
    logR = math.log(R_t)
    norms = np.empty(n)
    for p in range(1, n + 1):
        logc = math.lgamma(p + 1) + 2 * math.log(math.comb(n, p)) + (2 * n - p) * logR
        norms[p - 1] = math.exp(logc) * S[p - 1] if S[p - 1] != 0 else 0.0
    sigma_sq = float(np.sum(norms))
    if not sigma_sq > 0:
        raise InvalidParameterError("variance vanishes: degenerate kernel")
    mean = float(math.exp(n * logR) * np.sum(gram.beta**n))
    return UStatReport(gram.j if j is None else j, n, float(R_t), mean, sigma_sq, norms)


def chaos_lambda_log(R_t: float, B: float, s: float, d: int, n: int, j: int) -> np.ndarray:
    p = np.arange(1, n + 1)
    return (2 * n - p) * math.log(R_t) - j * (s * (2 * n - 2 * p) + d * (n - p - 1)) * math.log(B)


def chaos_lambda(R_t: float, B: float, s: float, d: int, n: int, j: int) -> np.ndarray:
    """Lambda_{j,p} = R_t^{2n-p} B^{-j(s(2n-2p) + d(n-p-1))}, p = 1..n."""
    if n < 1:
        raise InvalidParameterError("order n must be at least 1")
    with np.errstate(over="ignore"):
        return np.exp(chaos_lambda_log(R_t, B, s, d, n, j))


class Dominance(enum.Enum):
    FirstChaos = "FirstChaos"
    LastChaos = "LastChaos"
    AllEquivalent = "AllEquivalent"


def effective_sample_variance_log(R_t: float, B: float, s: float, d: int, j: int) -> float:
    """log of R_t B^{-j(2s+d)}."""
    return math.log(R_t) - j * (2 * s + d) * math.log(B)


def classify_dominance(schedule, B: float, s: float, d: int, n: int, j_probe) -> Dominance:
    """Which chaos dominates along the probe levels for intensities ``schedule(j)``."""
    js = np.asarray(list(j_probe), dtype=float)
    if js.size < 2:
        raise InvalidParameterError("need at least two probe levels")
    logrho = np.array([effective_sample_variance_log(float(schedule(int(j))), B, s, d, int(j)) for j in js])
    thr = 0.1 * math.log(B)
    steps = np.diff(logrho) / np.diff(js)
    if np.any(steps > thr) and np.any(steps < -thr):
        raise RegimeError("schedule does not determine a regime")
    slope = float(np.polyfit(js, logrho, 1)[0])
    if slope > thr:
        return Dominance.FirstChaos
    if slope < -thr:
        return Dominance.LastChaos
    return Dominance.AllEquivalent
