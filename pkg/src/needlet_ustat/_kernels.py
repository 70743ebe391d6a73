"""Compiled inner loops for large point sets on the circle."""
import math

import numba
import numpy as np

TWO_PI = 2.0 * math.pi


@numba.njit(cache=True)
def binned_moments(x, n_bins, n_mom):
    """M[b, m] = sum over points in bin b of u^m, u the offset from the bin centre."""
    M = np.zeros((n_bins, n_mom))
    h = TWO_PI / n_bins
    for i in range(x.shape[0]):
        t = x[i] / h
        b = int(math.floor(t))
        if b >= n_bins:
            b = n_bins - 1
        elif b < 0:
            b = 0
        u = x[i] - (b + 0.5) * h
        p = 1.0
        for m in range(n_mom):
            M[b, m] += p
            p *= u
    return M


@numba.njit(cache=True)
def half_spectrum_value(F, x):
    # F[0] + 2 Re sum_q F[q] e^{iqx}, via a rotating phasor
    c = math.cos(x)
    s = math.sin(x)
    zr, zi = 1.0, 0.0
    acc = 0.0
    for q in range(1, F.shape[0]):
        zr, zi = zr * c - zi * s, zr * s + zi * c
        acc += F[q].real * zr - F[q].imag * zi
    return F[0].real + 2.0 * acc


@numba.njit(cache=True)
def squeeze_accept(prop, u, table, err, fmax, F):
    """Accept flag for proposals ``prop`` with uniforms ``u`` against f / fmax.

    ``table`` holds f on a periodic equispaced grid; linear interpolation is
    within ``err`` of f, so only proposals inside that band need the exact sum.
    """
    n_tab = table.shape[0]
    h = TWO_PI / n_tab
    out = np.zeros(prop.shape[0], dtype=np.bool_)
    n_exact = 0
    for i in range(prop.shape[0]):
        t = prop[i] / h
        a = int(math.floor(t))
        w = t - a
        a = a % n_tab
        b = (a + 1) % n_tab
        approx = (1.0 - w) * table[a] + w * table[b]
        level = u[i] * fmax
        if level < approx - err:
            out[i] = True
        elif level >= approx + err:
            out[i] = False
        else:
            n_exact += 1
            out[i] = level < half_spectrum_value(F, prop[i])
    return out, n_exact
