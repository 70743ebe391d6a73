"""Probability densities with prescribed needlet-coefficient decay.

A density is planted as 1/vol + amplitude * sum_{j0 <= j <= J} sum_k c_{j,k} psi_{j,k}
with per-level r-norms ||c_j||_r = B^{-j(s + d(1/2 - 1/r))}. Random signs seed
the pattern; it is then pushed to a fixed point of "synthesize, analyze,
rescale each level", so the recovered coefficients beta_{j,k} reproduce the
planted pattern instead of a redundancy-smeared version of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import frame as fr
from . import manifold as mf
from . import spectral as sp
from .errors import InvalidParameterError, TruncationError

FORMAT_TAG = "needlet-besov-density"
FORMAT_VERSION = 1


def level_exponent(s: float, r: float, d: int) -> float:
    """Decay exponent s + d(1/2 - 1/r) of the per-level coefficient r-norm."""
    return s + d * (0.5 - 1.0 / r)


def r_norm(v, r):
    v = np.abs(np.asarray(v, dtype=float))
    if math.isinf(r):
        return float(v.max()) if v.size else 0.0
    return float(np.sum(v**r) ** (1.0 / r))


@dataclass(frozen=True)
class BesovDensity:
    frame: fr.NeedletFrame = field(repr=False)
    j0: int
    j_max: int
    s: float
    r: float
    q: float
    amplitude: float
    seed: int
    coefficients: dict = field(repr=False)
    spectrum: np.ndarray = field(repr=False)
    f_min: float
    f_max: float
    cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def bandwidth(self) -> int:
        return self.spectrum.size - 1

    def __call__(self, x):
        return sp.evaluate(self.spectrum, x)

    def grid_values(self, n_grid: int) -> np.ndarray:
        return sp.evaluate_grid(self.spectrum, n_grid)

    def interpolation_bound(self, n_grid: int) -> float:
        """Upper bound on |f - linear interpolant| for an equispaced grid of n_grid nodes."""
        h = mf.TWO_PI / n_grid
        q = np.arange(self.spectrum.size)
        return float(h * h / 8.0 * 2.0 * np.sum(q * q * np.abs(self.spectrum)))

    def beta(self, j: int) -> np.ndarray:
        return sp.analyze(self.frame, self.spectrum, j)

    def is_uniform(self) -> bool:
        return not np.any(self.spectrum[1:])


def _min_max(F: np.ndarray, oversample: int = 16):
    n = 1 << max(10, int(math.ceil(math.log2(oversample * (2 * F.size + 1)))))
    g = sp.evaluate_grid(F, n)
    return float(g.min()), float(g.max())


def _planted_pattern(frame, s, r, j0, j_max, seed, n_iter, tol):
    d = frame.manifold.dimension
    a = level_exponent(s, r, d)
    target = {j: frame.B ** (-j * a) for j in range(j0, j_max + 1)}
    rng = np.random.Generator(np.random.Philox(seed))
    K = {j: frame.K(j) for j in target}
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    coef = {j: rng.choice([-1.0, 1.0], K[j]) * target[j] * K[j] ** (-inv_r) for j in target}
    for _ in range(n_iter):
        F = sp.synthesize(frame, coef)
        new = {}
        for j in coef:
            beta = sp.analyze(frame, F, j)
            new[j] = beta * (target[j] / r_norm(beta, r))
        change = max(float(np.max(np.abs(new[j] - coef[j]))) / float(np.max(np.abs(coef[j]))) for j in coef)
        coef = new
        if change < tol:
            break
    return coef


def build_besov_density(
    frame: fr.NeedletFrame,
    s: float,
    r: float,
    amplitude: float,
    seed: int,
    j0: int = 1,
    j_max: int | None = None,
    q: float = math.inf,
    n_iter: int = 200,
    tol: float = 1e-10,
) -> BesovDensity:
    """Plant a density whose level-j coefficient r-norms decay like B^{-j(s + d(1/2 - 1/r))}.

    ``j_max`` defaults to two levels below the top of the frame, so the frame
    still resolves every frequency of the density.
    """
    if not isinstance(frame.manifold, mf.Circle):
        raise NotImplementedError("density synthesis is implemented for the circle")
    d = frame.manifold.dimension
    if not 1 <= r <= math.inf:
        raise InvalidParameterError("r must lie in [1, inf]")
    if s < d / r:
        raise InvalidParameterError(f"need s >= d/r, got s={s}, d/r={d / r}")
    if amplitude < 0:
        raise InvalidParameterError("amplitude must be nonnegative")
    j_max = frame.j_max - 2 if j_max is None else int(j_max)
    if not 0 <= j0 <= j_max <= frame.j_max:
        raise InvalidParameterError(f"need 0 <= j0 <= j_max <= {frame.j_max}")
    vol = frame.manifold.volume

    if amplitude == 0:
        coef = {j: np.zeros(frame.K(j)) for j in range(j0, j_max + 1)}
    else:
        coef = _planted_pattern(frame, s, r, j0, j_max, seed, n_iter, tol)
    F = amplitude * sp.synthesize(frame, coef)
    F[0] += 1.0 / vol
    # renormalize (the planted part has zero mean unless level 0 is planted)
    F = F / (F[0].real * vol)
    f_min, f_max = _min_max(F)
    if f_min <= 0.01 / vol:
        raise InvalidParameterError(
            f"density minimum {f_min:.4g} is below 0.01/vol = {0.01 / vol:.4g}; use a smaller amplitude"
        )
    return BesovDensity(frame, j0, j_max, float(s), float(r), float(q), float(amplitude), int(seed),
                        coef, F, f_min, f_max)


def uniform_density(frame: fr.NeedletFrame) -> BesovDensity:
    return build_besov_density(frame, s=1.0, r=2.0, amplitude=0.0, seed=0, j0=0, j_max=0)


def lr_norm(density: BesovDensity, r: float) -> float:
    man = density.frame.manifold
    if math.isinf(r):
        return max(abs(density.f_min), abs(density.f_max))
    if float(r).is_integer() and int(r) % 2 == 0:
        bw = int(math.ceil(r * density.bandwidth / 2)) + 1
        return float(mf.integrate(man, lambda x: density(x) ** r, bandwidth=bw)) ** (1.0 / r)
    val = mf.integrate(man, lambda x: np.abs(density(x)) ** r)
    return float(val) ** (1.0 / r)


def level_norms(density: BesovDensity, r: float | None = None) -> np.ndarray:
    """(sum_k |beta_{j,k}|^r)^{1/r} for every level of the frame."""
    r = density.r if r is None else r
    return np.array([r_norm(density.beta(j), r) for j in range(density.frame.j_max + 1)])


def besov_norm(density: BesovDensity, s: float, r: float, q: float = math.inf, rtol_tail: float = 1e-6) -> float:
    """||f||_{L^r} plus the weighted coefficient sequence norm over all frame levels.

    Level 0 is left out of the detail part since it carries the constant.
    Raises when the top frame level still holds more than ``rtol_tail`` of the
    detail part, which means the frame does not resolve the density.
    """
    frame = density.frame
    d = frame.manifold.dimension
    a = level_exponent(s, r, d)
    norms = level_norms(density, r)
    js = np.arange(frame.j_max + 1)
    with np.errstate(divide="ignore"):
        logw = js * a * math.log(frame.B) + np.log(norms)
    terms = np.exp(logw[1:])
    if math.isinf(q):
        detail = float(terms.max()) if terms.size else 0.0
        tail = float(terms[-1]) if terms.size else 0.0
    else:
        detail = float(np.sum(terms**q) ** (1.0 / q))
        tail = float(terms[-1])
    if detail > 0 and tail > rtol_tail * detail:
        raise TruncationError(
            f"top level {frame.j_max} carries {tail / detail:.3g} of the Besov sum; build the frame with a larger j_max"
        )
    return lr_norm(density, r) + detail


def decay_slope(density: BesovDensity, js=None) -> float:
    """Least-squares slope of log level norm against j."""
    js = np.arange(density.j0 + 1, density.j_max) if js is None else np.asarray(js)
    norms = level_norms(density)[js]
    return float(np.polyfit(js, np.log(norms), 1)[0])


def save_density(density: BesovDensity, path) -> None:
    lines = [
        f"# {FORMAT_TAG} v{FORMAT_VERSION}",
        f"B = {density.frame.B!r}",
        f"frame_j_max = {density.frame.j_max}",
        f"j0 = {density.j0}",
        f"j_max = {density.j_max}",
        f"s = {density.s!r}",
        f"r = {density.r!r}",
        f"q = {density.q!r}",
        f"amplitude = {density.amplitude!r}",
        f"seed = {density.seed}",
        f"f_min = {density.f_min!r}",
        f"f_max = {density.f_max!r}",
    ]
    for j in sorted(density.coefficients):
        c = density.coefficients[j]
        lines.append(f"level {j} {c.size} " + " ".join(repr(float(v)) for v in c))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_density(path, manifold: mf.ManifoldModel | None = None) -> BesovDensity:
    header, levels = {}, {}
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {FORMAT_TAG} v{FORMAT_VERSION}":
            raise InvalidParameterError(f"{path}: unsupported density file header {first!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("level "):
                parts = line.split()
                j, n = int(parts[1]), int(parts[2])
                vals = np.array([float(v) for v in parts[3:]])
                if vals.size != n:
                    raise InvalidParameterError(f"{path}: level {j} lists {vals.size} of {n} values")
                levels[j] = vals
            else:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
    man = mf.make_circle() if manifold is None else manifold
    frame = fr.build_frame(man, float(header["B"]), int(header["frame_j_max"]))
    amp = float(header["amplitude"])
    vol = man.volume
    F = amp * sp.synthesize(frame, levels)
    F[0] += 1.0 / vol
    F = F / (F[0].real * vol)
    f_min, f_max = _min_max(F)
    return BesovDensity(frame, int(header["j0"]), int(header["j_max"]), float(header["s"]),
                        float(header["r"]), float(header["q"]), amp, int(header["seed"]), levels, F,
                        f_min, f_max)
