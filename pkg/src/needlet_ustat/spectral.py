"""Fourier-side computations for needlets on the circle.

A real trigonometric polynomial is stored by its half spectrum ``F`` with
f(x) = F[0] + 2 Re sum_{q>=1} F[q] e^{iqx}. On the circle every needlet at
level j is a rotate of one even profile, so synthesis from coefficients and
analysis into coefficients are both a single FFT over the K_j lattice points.
"""
from __future__ import annotations

import math

import numpy as np

from . import manifold as mf
from ._kernels import binned_moments, half_spectrum_value

TWO_PI = mf.TWO_PI


def _require_circle(frame):
    if not isinstance(frame.manifold, mf.Circle):
        raise TypeError("spectral routines need the circle")


def synthesize(frame, coeffs: dict, size: int | None = None) -> np.ndarray:
    """Half spectrum of sum_j sum_k coeffs[j][k] psi_{j,k}."""
    _require_circle(frame)
    top = max((frame.band(j) for j in coeffs), default=0)
    F = np.zeros(max(top, 0 if size is None else size - 1) + 1, dtype=complex)
    for j, a in coeffs.items():
        c = frame.cosine_profile(j)
        K = frame.K(j)
        A = np.fft.fft(np.asarray(a, dtype=float))
        q = np.arange(c.size)
        F[0] += c[0] * A[0].real
        F[1 : c.size] += 0.5 * c[1:] * A[q[1:] % K]
    return F


def analyze(frame, F: np.ndarray, j: int) -> np.ndarray:
    """beta_{j,k} = int psi_{j,k} f for f given by its half spectrum."""
    _require_circle(frame)
    c = frame.cosine_profile(j)
    K = frame.K(j)
    L = min(c.size, F.size)
    fold = np.zeros(K, dtype=complex)
    np.add.at(fold, np.arange(1, L) % K, c[1:L] * F[1:L])
    # sum_q c_q F_q e^{2 pi i q k / K}
    tot = np.fft.ifft(fold) * K
    return TWO_PI * (c[0] * F[0].real + tot.real)


def evaluate(F: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    q = np.arange(1, F.size)
    if F.size == 1:
        return np.full(x.shape, F[0].real)
    ph = np.exp(1j * np.multiply.outer(x, q))
    return F[0].real + 2.0 * (ph @ F[1:]).real


def evaluate_grid(F: np.ndarray, n_grid: int) -> np.ndarray:
    """Values on the equispaced grid 2 pi i / n_grid; needs n_grid > 2 * bandwidth."""
    if n_grid <= 2 * (F.size - 1):
        raise ValueError("grid too coarse for the spectrum")
    full = np.zeros(n_grid // 2 + 1, dtype=complex)
    full[: F.size] = F
    return np.fft.irfft(full, n_grid) * n_grid


def evaluate_point(F: np.ndarray, x: float) -> float:
    return float(half_spectrum_value(np.asarray(F, dtype=complex), float(x)))


def from_samples(vals: np.ndarray, bandwidth: int) -> np.ndarray:
    """Half spectrum from values on an equispaced grid (n_grid > 2 * bandwidth)."""
    return np.fft.rfft(vals)[: bandwidth + 1] / vals.size


def multiply(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    a = np.concatenate([np.conj(F[:0:-1]), F])
    b = np.concatenate([np.conj(G[:0:-1]), G])
    full = np.convolve(a, b)
    mid = full.size // 2
    return full[mid:].copy()


def profile_powers(c: np.ndarray, n: int) -> list:
    """Half spectra of phi^m for m = 1..n, where phi(x) = sum_q c_q cos(qx)."""
    base = np.asarray(c, dtype=complex).copy()
    base[1:] *= 0.5
    out = [base]
    for _ in range(1, n):
        out.append(multiply(out[-1], base))
    return [p.real.copy() for p in out]


def exp_sums_direct(x, L: int) -> np.ndarray:
    """S_l = sum_i e^{i l x_i} for l = 0..L."""
    x = np.asarray(x, dtype=float)
    S = np.zeros(L + 1, dtype=complex)
    if x.size == 0:
        return S
    z = np.exp(1j * x)
    cur = np.ones_like(z)
    for ell in range(L + 1):
        S[ell] = cur.sum()
        cur = cur * z
    return S


def _binning(L: int, tol: float = 1e-17):
    n_bins = 1 << max(6, int(math.ceil(math.log2(4 * max(L, 1)))))
    half = L * math.pi / n_bins
    n_mom, term = 1, 1.0
    while term > tol:
        term *= half / n_mom
        n_mom += 1
    return n_bins, n_mom


def exp_sums_binned(x, L: int) -> np.ndarray:
    """Same as :func:`exp_sums_direct`, via per-bin Taylor moments (O(N) + FFTs)."""
    x = np.ascontiguousarray(x, dtype=float)
    n_bins, n_mom = _binning(L)
    M = binned_moments(x, n_bins, n_mom)
    ell = np.arange(L + 1)
    # sum_b e^{i l c_b} M[b, m] with c_b = 2 pi (b + 1/2) / G
    T = np.fft.ifft(M, axis=0) * n_bins
    T = T[ell % n_bins, :] * np.exp(1j * math.pi * ell / n_bins)[:, None]
    fac = np.ones((L + 1, n_mom), dtype=complex)
    for m in range(1, n_mom):
        fac[:, m] = fac[:, m - 1] * (1j * ell) / m
    return (T * fac).sum(axis=1)


def exp_sums(x, L: int, direct_below: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size < direct_below:
        return exp_sums_direct(x, L)
    return exp_sums_binned(x, L)


def needlet_power_sums(frame, j: int, x, n: int, S=None) -> np.ndarray:
    """p_m(k) = sum_i psi_{j,k}(x_i)^m for m = 1..n, shape (n, K_j)."""
    _require_circle(frame)
    c = frame.cosine_profile(j)
    K = frame.K(j)
    powers = profile_powers(c, n)
    L = n * (c.size - 1)
    if S is None:
        S = exp_sums(x, L)
    out = np.empty((n, K))
    for m, d in enumerate(powers):
        fold = np.zeros(K, dtype=complex)
        np.add.at(fold, np.arange(1, d.size) % K, d[1:] * S[1 : d.size])
        # psi_k(x) = phi(x - xi_k), so the phase is e^{-i l xi_k}
        tot = np.fft.fft(fold)
        out[m] = d[0] * S[0].real + 2.0 * tot.real
    return out
