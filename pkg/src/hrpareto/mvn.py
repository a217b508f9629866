"""Univariate and multivariate Gaussian distribution functions.

``mvn_cdf`` dispatches on dimension: k = 0 is exactly 1, k = 1 uses the
complementary error function, k = 2 uses the Drezner-Wesolowsky/Genz
Gauss-Legendre scheme (absolute error around 1e-15, with a quadrature fallback
for tiny orthant probabilities), k = 3 integrates bivariate CDFs against the
density of one coordinate, and k >= 4 uses randomized quasi-Monte Carlo on
Genz's separation-of-variables transform with a shifted Richtmyer lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import BudgetExceeded, CovNotPD, DimensionMismatch, OutOfRange

N_REPLICATES = 12
# two-sided 99% Student-t quantile with N_REPLICATES - 1 degrees of freedom
_T99 = 3.105806516
EXACT_BVN_ERROR = 1e-14
MAX_DIM = 25
_CLIP = 38.0


def std_normal_cdf(x):
    """Standard normal CDF (accepts scalars or arrays, including +-inf)."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise OutOfRange("probability must lie in the open interval (0, 1)")
    out = special.ndtri(p_arr)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# bivariate

_GL_X = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                  0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                  0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                  0.07652652113349733])
_GL_W = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                  0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                  0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                  0.1527533871307259])
_X20 = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_W20 = np.concatenate([_GL_W, _GL_W])


def _bvnu(dh, dk, r):
    """Upper orthant ``P(X > dh, Y > dk)`` for unit-variance correlation ``r``.

    Vectorized; arguments broadcast.  Infinite limits are clipped to +-38,
    where the normal tail is below double precision resolution.
    """
    h, k, r = np.broadcast_arrays(np.asarray(dh, float), np.asarray(dk, float),
                                  np.asarray(r, float))
    h = np.clip(h, -_CLIP, _CLIP)
    k = np.clip(k, -_CLIP, _CLIP)
    r = np.clip(r, -1.0, 1.0)
    out = np.empty(h.shape)
    tp = 2.0 * math.pi

    mid = np.abs(r) < 0.925
    if np.any(mid):
        hm, km, rm = h[mid], k[mid], r[mid]
        hk = hm * km
        hs = 0.5 * (hm * hm + km * km)
        asr = 0.5 * np.arcsin(rm)
        sn = np.sin(asr[:, None] * _X20)
        val = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ _W20
        out[mid] = val * asr / tp + special.ndtr(-hm) * special.ndtr(-km)

    hi = ~mid
    if np.any(hi):
        hh, kk, rr = h[hi], k[hi].copy(), r[hi]
        neg = rr < 0
        kk[neg] = -kk[neg]
        hk = hh * kk
        bvn = np.zeros(hh.shape)
        inner = np.abs(rr) < 1
        if np.any(inner):
            hI, kI, rI, hkI = hh[inner], kk[inner], rr[inner], hk[inner]
            as_ = (1.0 - rI) * (1.0 + rI)
            a = np.sqrt(as_)
            bs = (hI - kI) ** 2
            c = (4.0 - hkI) / 8.0
            d = (12.0 - hkI) / 80.0
            asr = -(bs / as_ + hkI) / 2.0
            b1 = np.where(asr > -100.0,
                          a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0
                                             + c * d * as_ * as_), 0.0)
            b = np.sqrt(bs)
            sp = math.sqrt(tp) * special.ndtr(-b / a)
            b1 = np.where(hkI > -100.0,
                          b1 - np.exp(-hkI / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0),
                          b1)
            a = a / 2.0
            xs = (a[:, None] * _X20) ** 2
            asr2 = -(bs[:, None] / xs + hkI[:, None]) / 2.0
            ok = asr2 > -100.0
            sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-(hkI[:, None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(ok, np.exp(np.where(ok, asr2, 0.0)) * (sp2 - ep), 0.0)
            bvn[inner] = (a * (terms @ _W20) - b1) / tp
        pos = ~neg
        res = np.empty(hh.shape)
        res[pos] = bvn[pos] + special.ndtr(-np.maximum(hh[pos], kk[pos]))
        if np.any(neg):
            hn, kn, bn = hh[neg], kk[neg], bvn[neg]
            lower = np.where(hn < 0, special.ndtr(kn) - special.ndtr(hn),
                             special.ndtr(-hn) - special.ndtr(-kn))
            res[neg] = np.where(hn >= kn, -bn, lower - bn)
        out[hi] = res
    return np.clip(out, 0.0, 1.0)


def _bvn_tail_quad(h: float, k: float, r: float) -> float:
    """Relative-accurate log lower-orthant probability for tiny values."""
    if h > k:
        h, k = k, h
    s = math.sqrt(max(1.0 - r * r, 1e-300))
    # P = int_{-inf}^h phi(x) Phi((k - r x)/s) dx, substitute x = h - y
    base = -0.5 * h * h - 0.5 * math.log(2 * math.pi)
    shift = float(special.log_ndtr((k - r * h) / s))

    def f(y):
        return math.exp(h * y - 0.5 * y * y
                        + float(special.log_ndtr((k - r * h + r * y) / s)) - shift)

    scale = 1.0 / max(abs(h), 1.0)
    val, _ = integrate.quad(lambda t: f(t * scale) * scale, 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return base + shift + math.log(val)


def log_bvn_cdf(h, k, r) -> np.ndarray:
    """``log P(X <= h, Y <= k)`` for standard bivariate normal with correlation ``r``."""
    scalar = np.ndim(h) == 0 and np.ndim(k) == 0 and np.ndim(r) == 0
    h, k, r = np.broadcast_arrays(np.atleast_1d(np.asarray(h, float)),
                                  np.atleast_1d(np.asarray(k, float)),
                                  np.atleast_1d(np.asarray(r, float)))
    p = _bvnu(-h, -k, r)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    tiny = p < 1e-12
    if np.any(tiny):
        for idx in zip(*np.nonzero(tiny)):
            hi, ki, ri = float(h[idx]), float(k[idx]), float(r[idx])
            if hi == -np.inf or ki == -np.inf:
                out[idx] = -np.inf
            else:
                out[idx] = _bvn_tail_quad(hi, ki, ri)
    return out[0] if scalar else out


def bvn_cdf(h, k, r):
    out = np.exp(log_bvn_cdf(h, k, r))
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# trivariate: condition on one coordinate and integrate bivariate CDFs

_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)
_TVN_GRID = 65
_TVN_MAX_PANELS = 256
TVN_SMOOTH_PANELS = 16
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _tvn_coefficients(b: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Per-row conditioning coefficients; the pivot is the coordinate outside
    the most correlated pair, which keeps the conditional variances large."""
    m = b.shape[0]
    strength = np.stack([np.abs(R[:, 1, 2]), np.abs(R[:, 0, 2]), np.abs(R[:, 0, 1])], axis=1)
    perm = np.array([[0, 1, 2], [1, 0, 2], [2, 0, 1]])[np.argmax(strength, axis=1)]
    rows = np.arange(m)[:, None]
    bb = b[rows, perm]
    RR = R[rows[:, :, None], perm[:, :, None], perm[:, None, :]]
    r12, r13, r23 = RR[:, 0, 1], RR[:, 0, 2], RR[:, 1, 2]
    s2 = np.sqrt(1.0 - r12 ** 2)
    s3 = np.sqrt(1.0 - r13 ** 2)
    rho = np.clip((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0)
    return np.stack([bb[:, 0], bb[:, 1], bb[:, 2], r12, r13, s2, s3, rho], axis=1)


def _tvn_log_integrand(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    h = (c[:, 1:2] - c[:, 3:4] * x) / c[:, 5:6]
    k = (c[:, 2:3] - c[:, 4:5] * x) / c[:, 6:7]
    lg = log_bvn_cdf(h.ravel(), k.ravel(), np.repeat(c[:, 7], x.shape[1])).reshape(x.shape)
    return lg - 0.5 * x * x - _LOG_SQRT_2PI


@lru_cache(maxsize=None)
def _panel_rule(panels: int):
    start = np.arange(panels) / panels
    u = (start[:, None] + (_GL20_X[None, :] + 1.0) / (2 * panels)).ravel()
    return u, np.tile(_GL20_W / (2 * panels), panels)


def _pivot_quadrature(hi, log_integrand, rel_tol, panels):
    """Integrate ``exp(log_integrand(x, rows))`` over ``x <= hi`` row by row.

    ``log_integrand`` is log-concave in ``x``: a coarse grid locates the
    window carrying all but ``e^-46`` of the mass, then composite 20-point
    Gauss-Legendre panels are doubled per row until successive estimates
    agree to ``rel_tol``.  A fixed ``panels`` skips the adaptation.
    """
    m = hi.shape[0]
    # below -_CLIP the mass sits within a few units of hi
    hi = np.clip(hi, -1e6, _CLIP)
    lo = np.minimum(-_CLIP, hi - 8.0)
    rows = np.arange(m)
    grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, _TVN_GRID)[None, :]
    lf = log_integrand(grid, rows)
    keep = lf >= lf.max(axis=1, keepdims=True) - 46.0
    first = np.argmax(keep, axis=1)
    last = _TVN_GRID - 1 - np.argmax(keep[:, ::-1], axis=1)
    step = (hi - lo) / (_TVN_GRID - 1)
    wlo = np.maximum(lo, grid[rows, first] - step)
    width = np.minimum(hi, grid[rows, last] + step) - wlo

    def estimate(P, idx):
        u, w = _panel_rule(P)
        x = wlo[idx, None] + width[idx, None] * u[None, :]
        return (special.logsumexp(log_integrand(x, idx), b=w[None, :], axis=1)
                + np.log(width[idx]))

    if panels is not None:
        return estimate(panels, rows), np.full(m, np.nan)
    P = 2
    prev = estimate(P, rows)
    out = prev.copy()
    err = np.full(m, np.inf)
    active = rows
    while active.size and 2 * P <= _TVN_MAX_PANELS:
        cur = estimate(2 * P, active)
        e = np.abs(np.expm1(prev - cur))
        out[active] = cur
        err[active] = e
        done = e <= rel_tol
        active, prev = active[~done], cur[~done]
        P *= 2
    return out, err


def log_tvn_cdf(b, R, *, rel_tol: float = 1e-10, panels: int | None = None):
    """Log orthant probabilities of standard trivariate normals, row by row.

    ``b`` is (m, 3) and ``R`` (m, 3, 3) correlation matrices.  One coordinate
    is integrated out numerically against the exact bivariate CDF of the
    other two.  A fixed ``panels`` gives a smooth function of the inputs.
    Returns ``(log_value, rel_error)``; ``rel_error`` is nan for fixed panels.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    c = _tvn_coefficients(b, R)
    return _pivot_quadrature(c[:, 0], lambda x, idx: _tvn_log_integrand(x, c[idx]),
                             rel_tol, panels)


# ----------------------------------------------------------------------------
# general dimension

@dataclass(frozen=True)
class MvnSpec:
    """``P(X <= upper)`` for ``X ~ N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        k = upper.shape[0]
        if k == 0:
            mean = np.zeros(0)
            cov = np.zeros((0, 0))
        if mean.shape != (k,) or cov.shape != (k, k):
            raise DimensionMismatch("mean, cov and upper dimensions disagree")
        if k > MAX_DIM:
            raise DimensionMismatch(f"dimension {k} exceeds the supported maximum {MAX_DIM}")
        if k and not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
            raise CovNotPD("covariance is not symmetric")
        if k:
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise CovNotPD("covariance is not positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "upper", upper)

    @property
    def k(self) -> int:
        return self.upper.shape[0]

    def standardized(self) -> tuple[np.ndarray, np.ndarray]:
        """Standardized upper limits and correlation matrix."""
        sd = np.sqrt(np.diag(self.cov))
        corr = self.cov / np.outer(sd, sd)
        return (self.upper - self.mean) / sd, corr


@dataclass(frozen=True)
class CdfEstimate:
    value: float
    abs_error: float
    n_points: int
    converged: bool = True
    log_value: float = float("nan")


@lru_cache(maxsize=None)
def _primes(n: int) -> np.ndarray:
    """First ``n`` primes."""
    if n == 0:
        return np.zeros(0, dtype=int)
    limit = max(16, int(n * (math.log(n + 1) + math.log(math.log(n + 3)) + 2)))
    while True:
        sieve = np.ones(limit + 1, dtype=bool)
        sieve[:2] = False
        for i in range(2, int(limit ** 0.5) + 1):
            if sieve[i]:
                sieve[i * i::i] = False
        primes = np.nonzero(sieve)[0]
        if primes.size >= n:
            return primes[:n]
        limit *= 2


def _reorder_cholesky(b: np.ndarray, R: np.ndarray):
    """Genz variable reordering: most constraining variable first.

    Returns the permuted upper limits and the lower Cholesky factor of the
    permuted correlation matrix.
    """
    k = b.shape[0]
    b = b.copy()
    c = R.copy()
    L = np.zeros((k, k))
    y = np.zeros(k)
    perm = np.arange(k)
    for j in range(k):
        best, best_p, best_cjj = j, np.inf, 1.0
        for i in range(j, k):
            v = c[i, i] - np.dot(L[i, :j], L[i, :j])
            if v <= 0:
                raise CovNotPD("correlation matrix is numerically singular")
            s = math.sqrt(v)
            ti = (b[i] - np.dot(L[i, :j], y[:j])) / s
            p = float(special.ndtr(ti))
            if p < best_p - 1e-15:
                best, best_p, best_cjj = i, p, s
        if best != j:
            b[[j, best]] = b[[best, j]]
            perm[[j, best]] = perm[[best, j]]
            c[[j, best], :] = c[[best, j], :]
            c[:, [j, best]] = c[:, [best, j]]
            L[[j, best], :j] = L[[best, j], :j]
        L[j, j] = best_cjj
        for i in range(j + 1, k):
            L[i, j] = (c[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
        tj = (b[j] - np.dot(L[j, :j], y[:j])) / L[j, j]
        # mean of a standard normal truncated to (-inf, tj]
        lp = float(special.log_ndtr(tj))
        y[j] = -math.exp(-0.5 * tj * tj - 0.5 * math.log(2 * math.pi) - lp) if tj > -_CLIP else tj
    return b, L


def _sov_log_integrand(w: np.ndarray, b: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Log of the separation-of-variables integrand at points ``w`` (P, k-1)."""
    k = b.shape[0]
    P = w.shape[0]
    ys = np.zeros((P, k))
    logf = np.zeros(P)
    for j in range(k):
        s = ys[:, :j] @ L[j, :j]
        lej = special.log_ndtr((b[j] - s) / L[j, j])
        logf += lej
        if j < k - 1:
            with np.errstate(divide="ignore"):
                lw = np.log(w[:, j])
            ys[:, j] = special.ndtri_exp(np.maximum(lw + lej, -1e300))
            ys[:, j] = np.maximum(ys[:, j], -1e10)
    return logf


def _qmc(b: np.ndarray, R: np.ndarray, tol: float, rel_tol: float, max_points: int,
         seed: int, n_points: int | None):
    k = b.shape[0]
    bp, L = _reorder_cholesky(b, R)
    if k == 1:
        lv = float(special.log_ndtr(bp[0]))
        return math.exp(lv), 0.0, 0, True, lv
    gen = np.sqrt(_primes(k - 1).astype(float)) % 1.0
    rng = np.random.default_rng(seed)
    shifts = rng.random((N_REPLICATES, k - 1))
    P = n_points if n_points is not None else 1024
    while True:
        idx = np.arange(1, P + 1, dtype=float)[:, None]
        base = idx * gen[None, :]
        means = np.empty(N_REPLICATES)
        logmeans = np.empty(N_REPLICATES)
        for r in range(N_REPLICATES):
            x = np.abs(2.0 * ((base + shifts[r]) % 1.0) - 1.0)
            lf = _sov_log_integrand(x, bp, L)
            m = lf.max()
            logmeans[r] = m + math.log(np.mean(np.exp(lf - m)))
        ref = logmeans.max()
        means = np.exp(logmeans - ref)
        mean_s = float(means.mean())
        se_s = float(means.std(ddof=1) / math.sqrt(N_REPLICATES))
        value = mean_s * math.exp(ref)
        err = _T99 * se_s * math.exp(ref)
        log_value = ref + math.log(mean_s) if mean_s > 0 else -np.inf
        done = err <= max(tol, rel_tol * value)
        if n_points is not None or done or 2 * P > max_points:
            return value, err, P * N_REPLICATES, bool(done), log_value
        P *= 2


def mvn_cdf(spec: MvnSpec, tol: float = 1e-6, max_points: int = 200_000, seed: int = 0,
            *, rel_tol: float = 0.0, method: str = "auto", n_points: int | None = None,
            strict: bool = False) -> CdfEstimate:
    """``P(X <= upper)`` for ``X ~ N(mean, cov)``.

    Parameters
    ----------
    spec : MvnSpec
    tol : float
        Absolute error target for the quasi-Monte Carlo path.
    max_points : int
        Maximum lattice size per replicate.
    seed : int
        Seed of the random lattice shifts; equal seeds give identical results.
    rel_tol : float
        Optional relative error target; iteration stops at
        ``abs_error <= max(tol, rel_tol * value)``.
    method : {"auto", "qmc"}
        ``"qmc"`` forces the lattice rule even for k <= 3.
    n_points : int, optional
        Fixed lattice size (no adaptation).  Makes the estimate a smooth
        function of the inputs, which finite differences rely on.
    strict : bool
        Raise :class:`BudgetExceeded` instead of returning a flagged estimate.
    """
    if tol <= 0:
        raise OutOfRange("tol must be positive")
    k = spec.k
    if k == 0:
        return CdfEstimate(1.0, 0.0, 0, True, 0.0)
    b, R = spec.standardized()
    if method == "auto" and k == 1:
        lv = float(special.log_ndtr(b[0]))
        return CdfEstimate(math.exp(lv), 1e-16, 0, True, lv)
    if method == "auto" and k == 2:
        lv = float(log_bvn_cdf(b[0], b[1], R[0, 1]))
        return CdfEstimate(math.exp(lv), EXACT_BVN_ERROR, 2 * _X20.size, True, lv)
    if method == "auto" and k == 3:
        lv, rel = _tvn(b, R, rel_tol, n_points)
        value = math.exp(lv)
        return CdfEstimate(value, max(value * rel, EXACT_BVN_ERROR), 0, True, lv)
    if method not in ("auto", "qmc"):
        raise OutOfRange(f"unknown method {method!r}")
    value, err, npts, ok, lv = _qmc(b, R, tol, rel_tol, max_points, seed, n_points)
    value = min(max(value, 0.0), 1.0)
    if strict and not ok:
        raise BudgetExceeded(f"mvn_cdf: error {err:.3g} above tolerance after {npts} points")
    return CdfEstimate(value, err, npts, ok, lv)


def _tvn(b, R, rel_tol, n_points):
    panels = TVN_SMOOTH_PANELS if n_points is not None else None
    lv, rel = log_tvn_cdf(b[None], R[None], rel_tol=min(max(rel_tol, 1e-13), 1e-10),
                          panels=panels)
    # fixed-panel mode has no internal error estimate; it is far below 1e-10
    return float(lv[0]), 1e-12 if panels else max(float(rel[0]), 1e-15)


def log_mvn_cdf_std(b: np.ndarray, R: np.ndarray, *, tol: float = 1e-6, rel_tol: float = 1e-7,
                    max_points: int = 200_000, seed: int = 0,
                    n_points: int | None = None) -> tuple[float, float, bool]:
    """Log orthant probability for standardized limits ``b`` and correlation ``R``.

    Returns ``(log_value, abs_error_of_value, converged)``.
    """
    k = b.shape[0]
    if k == 0:
        return 0.0, 0.0, True
    if k == 1:
        return float(special.log_ndtr(b[0])), 1e-16, True
    if k == 2:
        return float(log_bvn_cdf(b[0], b[1], R[0, 1])), EXACT_BVN_ERROR, True
    if k == 3:
        lv, rel = _tvn(b, R, rel_tol, n_points)
        return lv, math.exp(lv) * rel, True
    value, err, _, ok, lv = _qmc(b, R, tol, rel_tol, max_points, seed, n_points)
    return lv, err, ok
