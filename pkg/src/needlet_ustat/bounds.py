"""Star-contractions, L^4 norms and the Stein-Malliavin bound for needlet U-statistics.

The p-th chaos kernel is h_p = C(n,p) R^{n-p} sum_k beta_k^{n-p} psi_k^{(x)p}. Squaring a
contraction of two such kernels gives a sum over four needlet indices of
beta powers times Gram entries and fourth moments:

    ||h_p *_r^l h_q||^2 = C(n,p)^2 C(n,q)^2 R^{4n-p-q-r+l} / sigma^4
        * sum_{k1..k4} b_p(k1) b_q(k2) b_p(k3) b_q(k4) G13^{p-r} G24^{q-r} G12^l G34^l M4^{r-l}

with b_p = beta^{n-p}. Sums without a fourth-moment factor are traces of
matrix products and are exact. The rest run over the stored neighbour block;
their truncation error is measured against an exact integral identity where
one exists and bounded by Cauchy-Schwarz otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ustat as us
from .errors import InvalidParameterError, TruncationError


# ---------------------------------------------------------------- index sets

def max1_indices(n: int):
    """(p, p, r, l) with 2 <= p <= n, 1 <= r <= p, 1 <= l <= min(r, p-1)."""
    return [(p, p, r, l) for p in range(2, n + 1) for r in range(1, p + 1) for l in range(1, min(r, p - 1) + 1)]


def max2_indices(n: int):
    """(p, q, r, l) with 1 <= p < q <= n, 1 <= r <= p, 1 <= l <= r."""
    return [(p, q, r, l) for q in range(2, n + 1) for p in range(1, q) for r in range(1, p + 1) for l in range(1, r + 1)]


def admissible_indices(n: int):
    return max1_indices(n) + max2_indices(n)


def check_indices(n, p, q, r, l):
    ok = 1 <= p <= q <= n and 1 <= r <= p and 1 <= l <= r
    if ok and p == q:
        ok = l <= q - 1
    if not ok:
        raise InvalidParameterError(
            f"(p,q,r,l)=({p},{q},{r},{l}) is outside the contraction ranges for n={n}"
        )


# ---------------------------------------------------------------- raw sums

def _weights(gram, n, p):
    return gram.beta ** (n - p)


def _cycle_trace(bp, bq, A, Bm, C):
    """sum b_p(1) b_q(2) b_p(3) b_q(4) A13 B24 C12 C34 over all index tuples."""
    X = (bp[:, None] * A) * bp[None, :]  # 1-3
    Y = (bq[:, None] * Bm) * bq[None, :]  # 2-4
    # cycle 1 -A- 3 -C- 4 -B- 2 -C- 1, as the trace of X C Y C
    return float(np.sum((X @ C) * (Y @ C).T))


_EPS = 64 * np.finfo(float).eps


def _block_terms(gram, bp, bq, ea, eb, ec, em):
    """Per-tuple products over the neighbour block, shape (K, O, O, O)."""
    K = gram.K
    offs = gram.offsets
    G = gram.G
    out = np.empty_like(gram.fourth_block)
    for k in range(K):
        idx = (k + offs) % K
        g1 = G[k, idx]
        Gs = G[np.ix_(idx, idx)]
        # tuple (k, idx[a], idx[b], idx[c]) = (k1, k2, k3, k4)
        t = (bp[k] * bq[idx])[:, None, None] * bp[idx][None, :, None] * bq[idx][None, None, :]
        t = t * (g1[None, :, None] ** ea)  # G13
        t = t * (Gs[:, None, :] ** eb)  # G24
        t = t * (g1[:, None, None] ** ec)  # G12
        t = t * (Gs[None, :, :] ** ec)  # G34
        t = t * gram.fourth_block[k] ** em
        out[k] = t
    return out * gram.mask[None]


def _one_moment_identity(gram, bp, bq, ea, eb, ec):
    """Exact full sum when exactly one fourth-moment factor is present.

    With alpha = b_p psi(z) and gamma = b_q psi(z) the inner sum is a 4-cycle
    trace at each node z, integrated against f. Returns (value, roundoff scale).
    """
    P = gram.psi
    w = gram.node_weights
    G = gram.G
    C = G**ec
    if ea == 0 and eb == 0:
        alpha = bp[:, None] * P
        gamma = bq[:, None] * P
        vals = np.sum(alpha * (C @ gamma), axis=0) ** 2
        scale = np.sum(np.abs(alpha) * (np.abs(C) @ np.abs(gamma)), axis=0) ** 2
        return float(w @ vals), float(np.abs(w) @ scale)
    A, Bm = G**ea, G**eb
    aA, aB, aC = np.abs(A), np.abs(Bm), np.abs(C)
    total = scale = 0.0
    for i in range(P.shape[1]):
        total += w[i] * _cycle_trace(bp * P[:, i], bq * P[:, i], A, Bm, C)
        scale += abs(w[i]) * _cycle_trace(np.abs(bp * P[:, i]), np.abs(bq * P[:, i]), aA, aB, aC)
    return total, scale


def _moment_sup(gram):
    # Cauchy-Schwarz twice: |int psi1 psi2 psi3 psi4 f| <= max_k int psi_k^4 f
    c = int(np.searchsorted(gram.offsets, 0))
    return float(np.max(gram.fourth_block[:, c, c, c]))


def contraction_sum(gram, n, p, q, r, l):
    """Raw quadruple sum, a bound on its truncation error and its rounding scale.

    Sums with at most one fourth-moment factor come from exact identities and
    carry no truncation error; the others run over the stored block and are
    charged a Cauchy-Schwarz bound on the dropped tuples.
    """
    check_indices(n, p, q, r, l)
    bp, bq = _weights(gram, n, p), _weights(gram, n, q)
    ea, eb, ec, em = p - r, q - r, l, r - l
    G = gram.G
    if em == 0:
        val = _cycle_trace(bp, bq, G**ea, G**eb, G**ec)
        scale = _cycle_trace(np.abs(bp), np.abs(bq), np.abs(G) ** ea, np.abs(G) ** eb, np.abs(G) ** ec)
        return val, 0.0, _EPS * scale
    if em == 1:
        val, scale = _one_moment_identity(gram, bp, bq, ea, eb, ec)
        return val, 0.0, _EPS * scale
    if gram.fourth_block is None:
        raise InvalidParameterError("Gram data was built without fourth moments")
    terms = _block_terms(gram, bp, bq, ea, eb, ec, em)
    val = float(terms.sum())
    roundoff = _EPS * float(np.abs(terms).sum())
    if gram.complete:
        return val, 0.0, roundoff
    # Cauchy-Schwarz over the dropped tuples
    pre_full = _cycle_trace(bp**2, bq**2, G ** (2 * ea), G ** (2 * eb), G ** (2 * ec))
    pre_kept = float(np.sum(_block_terms(gram, bp, bq, ea, eb, ec, 0) ** 2))
    pre_drop = max(0.0, pre_full - pre_kept)
    err = math.sqrt(pre_drop * gram.dropped_energy) * _moment_sup(gram) ** (em - 1)
    return val, err, roundoff


def l4_sum(gram, n, p):
    """sum b(k1) b(k2) b(k3) b(k4) M4^p with b = beta^{n-p}: (value, truncation error, rounding scale)."""
    if not 1 <= p <= n:
        raise InvalidParameterError(f"need 1 <= p <= n, got p={p}, n={n}")
    b = _weights(gram, n, p)
    P, w = gram.psi, gram.node_weights
    if p == 1:
        lin = b @ P
        return float(w @ lin**4), 0.0, _EPS * float(np.abs(w) @ (np.abs(b) @ np.abs(P)) ** 4)
    if p == 2:
        kern = (P.T * b) @ P
        akern = (np.abs(P).T * np.abs(b)) @ np.abs(P)
        return float(w @ kern**4 @ w), 0.0, _EPS * float(np.abs(w) @ akern**4 @ np.abs(w))
    if gram.fourth_block is None:
        raise InvalidParameterError("Gram data was built without fourth moments")
    K = gram.K
    offs = gram.offsets
    val = absval = 0.0
    for k in range(K):
        idx = (k + offs) % K
        t = b[k] * b[idx][:, None, None] * b[idx][None, :, None] * b[idx][None, None, :]
        t = t * gram.fourth_block[k] ** p * gram.mask
        val += float(t.sum())
        absval += float(np.abs(t).sum())
    if gram.complete:
        return val, 0.0, _EPS * absval
    full_b = float(np.sum(b**2)) ** 4
    err = math.sqrt(full_b * gram.dropped_energy) * _moment_sup(gram) ** (p - 1)
    return val, err, _EPS * absval


# ---------------------------------------------------------------- normalized norms

def _log_binom(n, p):
    return math.log(math.comb(n, p))


def _checked(val, err, roundoff, rtol, what):
    """Reject sums whose truncation error exceeds rtol of the value; zero rounding-level values."""
    if abs(val) <= roundoff and err <= roundoff:
        return 0.0
    if err > rtol * abs(val):
        raise TruncationError(
            f"{what}: truncation error bound {err:.3g} exceeds {rtol:g} of the value {val:.3g}; "
            "rebuild the Gram data with a larger truncation_radius"
        )
    if val < -roundoff:
        raise ArithmeticError(f"{what}: negative squared norm {val:.3g}")
    return max(val, 0.0)


def contraction_norm_sq(gram, R_t, n, j, p, q, r, l, sigma_sq=None, rtol: float = 0.01) -> float:
    """||h~_p *_r^l h~_q||^2 in L^2(mu_t^{p+q-r-l}), kernels divided by sigma_j."""
    check_indices(n, p, q, r, l)
    if sigma_sq is None:
        sigma_sq = us.exact_variance(gram, R_t, n).sigma_sq
    raw, err, rnd = contraction_sum(gram, n, p, q, r, l)
    raw = _checked(raw, err, rnd, rtol, f"contraction {(p, q, r, l)} at j={j}")
    if raw == 0.0:
        return 0.0
    logc = 2 * _log_binom(n, p) + 2 * _log_binom(n, q) + (4 * n - p - q - r + l) * math.log(R_t) - 2 * math.log(sigma_sq)
    return math.exp(logc) * raw


def l4_norm_4(gram, R_t, n, j, p, sigma_sq=None, rtol: float = 0.01) -> float:
    """||h~_p||^4 in L^4(mu_t^p)."""
    if sigma_sq is None:
        sigma_sq = us.exact_variance(gram, R_t, n).sigma_sq
    raw, err, rnd = l4_sum(gram, n, p)
    raw = _checked(raw, err, rnd, rtol, f"L4 norm p={p} at j={j}")
    if raw == 0.0:
        return 0.0
    logc = 4 * _log_binom(n, p) + (4 * n - 3 * p) * math.log(R_t) - 2 * math.log(sigma_sq)
    return math.exp(logc) * raw


def stein_malliavin_rhs(contractions: dict, l4: dict, n: int) -> float:
    """Bound with C_0 = 1: max_1 + max_2 of contraction norms plus max_p ||h~_p||_{L^4}^2."""
    need = admissible_indices(n)
    missing = [t for t in need if t not in contractions] + [("l4", p) for p in range(1, n + 1) if p not in l4]
    if missing:
        raise InvalidParameterError(f"missing entries: {missing}")
    m1 = max((math.sqrt(contractions[t]) for t in max1_indices(n)), default=0.0)
    m2 = max((math.sqrt(contractions[t]) for t in max2_indices(n)), default=0.0)
    m4 = max(math.sqrt(l4[p]) for p in range(1, n + 1))
    return m1 + m2 + m4


# ---------------------------------------------------------------- closed-form rates

def _logsumexp(v):
    v = np.asarray(v, dtype=float)
    m = float(np.max(v))
    return m + math.log(float(np.sum(np.exp(v - m))))


def rate_terms_log(R_t, B, s, d, n, j, regime):
    """Logs of every summand of the regime-(i) or regime-(ii) bound."""
    lB = math.log(B)
    lrho = math.log(R_t) - j * (2 * s + d) * lB  # effective sample variance
    lsize = math.log(R_t) - j * d * lB  # effective sample size
    lscale = -j * d / 2 * lB
    out = []
    for p in range(2, n + 1):
        for r in range(1, p + 1):
            for l in range(1, min(r, p - 1) + 1):
                if regime == "i":
                    out.append((1 - p) * lrho + (l - r) / 2 * lsize + lscale)
                else:
                    out.append((n - p) * lrho + (r - l) / 2 * (-lsize) + lscale)
    for q in range(2, n + 1):
        for p in range(1, q):
            for r in range(1, p + 1):
                for l in range(1, r + 1):
                    if regime == "i":
                        out.append((1 - (p + q) / 2) * lrho + (l - r) / 2 * lsize + lscale)
                    else:
                        out.append((n - (p + q) / 2) * lrho + (r - l) / 2 * (-lsize) + lscale)
    for p in range(1, n + 1):
        if regime == "i":
            out.append((1 - p) * lrho - p / 2 * lsize + lscale)
        else:
            out.append((n - p) * lrho + p / 2 * (-lsize) + lscale)
    return np.array(out)


def simple_rate_log(R_t, B, s, d, j, regime) -> float:
    if regime == "i":
        return -0.5 * math.log(R_t) + j * s * math.log(B)
    return -j * d / 2 * math.log(B)


def rate_bounds(R_t, B, s, d, n, j, regime):
    """(full, simple): the summed bound and its dominant term."""
    if regime not in ("i", "ii"):
        raise InvalidParameterError("regime must be 'i' or 'ii'")
    full = math.exp(_logsumexp(rate_terms_log(R_t, B, s, d, n, j, regime)))
    return full, math.exp(simple_rate_log(R_t, B, s, d, j, regime))


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class BoundReport:
    j: int
    n: int
    R_t: float
    sigma_sq: float
    contraction_norms: dict = field(repr=False)
    l4_norms: dict = field(repr=False)
    stein_malliavin_bound: float
    rate_bound_i: float
    rate_bound_ii: float
    simple_rate: float
    truncation_errors: dict = field(repr=False, default_factory=dict)


def bound_report(gram, R_t, n, j, B, s, d, regime="ii", rtol: float = 0.01) -> BoundReport:
    var = us.exact_variance(gram, R_t, n, j)
    cn, errs = {}, {}
    for t in admissible_indices(n):
        cn[t] = contraction_norm_sq(gram, R_t, n, j, *t, sigma_sq=var.sigma_sq, rtol=rtol)
        errs[t] = contraction_sum(gram, n, *t)[1]
    l4 = {p: l4_norm_4(gram, R_t, n, j, p, sigma_sq=var.sigma_sq, rtol=rtol) for p in range(1, n + 1)}
    rhs = stein_malliavin_rhs(cn, l4, n)
    full_i, _ = rate_bounds(R_t, B, s, d, n, j, "i")
    full_ii, _ = rate_bounds(R_t, B, s, d, n, j, "ii")
    simple = math.exp(simple_rate_log(R_t, B, s, d, j, regime))
    return BoundReport(j, n, float(R_t), var.sigma_sq, cn, l4, rhs, full_i, full_ii, simple, errs)


# ---------------------------------------------------------------- direct quadrature oracle

_LETTERS = "abcdefghijklmnopqrstuvw"


def _kernel_tensor(P, b, p):
    """sum_k b_k psi_k(x_1) ... psi_k(x_p) on the node grid, shape (X,)*p."""
    subs = ",".join(["k"] + ["k" + _LETTERS[i] for i in range(p)])
    return np.einsum(subs + "->" + _LETTERS[:p], b, *([P] * p))


def direct_contraction_norm_sq(frame, density, R_t, n, j, p, q, r, l, sigma_sq):
    """Nested quadrature of (h~_p *_r^l h~_q)^2 over M^{p+q-r-l}, without Gram data."""
    check_indices(n, p, q, r, l)
    nodes, fw = us._node_rule(frame, density, j, 4)
    P = frame.evaluate(j, nodes)
    beta = P @ fw
    mu = R_t * fw
    ap = math.comb(n, p) * R_t ** (n - p) / math.sqrt(sigma_sq)
    aq = math.comb(n, q) * R_t ** (n - q) / math.sqrt(sigma_sq)
    hp = ap * _kernel_tensor(P, beta ** (n - p), p)
    hq = aq * _kernel_tensor(P, beta ** (n - q), q)
    xs = _LETTERS[: p - r]
    ys = _LETTERS[p - r : p - r + q - r]
    zs = _LETTERS[p - r + q - r : p + q - r - l]
    ws = _LETTERS[p + q - r - l : p + q - r]
    outer = xs + ys + zs
    subs = f"{xs}{zs}{ws},{ys}{zs}{ws}," + ",".join(ws) if ws else f"{xs}{zs},{ys}{zs}"
    ops = [hp, hq] + [mu] * len(ws)
    con = np.einsum(subs + "->" + outer, *ops)
    sq = con**2
    for _ in outer:
        sq = sq @ mu if sq.ndim > 1 else np.array(sq @ mu)
    return float(sq)


def direct_l4_norm_4(frame, density, R_t, n, j, p, sigma_sq):
    nodes, fw = us._node_rule(frame, density, j, 4)
    P = frame.evaluate(j, nodes)
    beta = P @ fw
    mu = R_t * fw
    h = math.comb(n, p) * R_t ** (n - p) / math.sqrt(sigma_sq) * _kernel_tensor(P, beta ** (n - p), p)
    v = h**4
    for _ in range(p):
        v = v @ mu
    return float(v)
