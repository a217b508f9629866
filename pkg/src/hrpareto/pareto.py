"""The Hüsler-Reiss Pareto law: normalization, density, moments and sampling.

Notation: for face ``i`` the reduced quantities are ``Q_i`` (``Q`` with row
and column ``i`` removed), ``l_i``, ``mu_i = Q_i^{-1} l_i`` and
``Sigma_i = Q_i^{-1}``.  The normalization constant is

    C_a(Q, l) = (2 pi)^{(d-1)/2} / alpha * sum_i a_i^{-alpha} det(Q_i)^{-1/2}
                exp(l_i . mu_i / 2) Phi_{d-1}(log(a_{-i} / a_i); mu_i, Sigma_i)

and is always handled on the log scale.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import fd
from .core import (
    GenHrParams,
    HrParams,
    _frozen,
    check_threshold,
    extract,
    gen_reduce,
    matrix_coords,
    coords_matrix,
    standardize,
    validate_hr,
)
from .errors import (
    CovNotPD,
    DimensionMismatch,
    MomentDoesNotExist,
    NonPositiveComponent,
)
from .mvn import TVN_SMOOTH_PANELS, log_bvn_cdf, log_mvn_cdf_std, log_tvn_cdf

LOG_2PI = math.log(2.0 * math.pi)
CHUNK_ROWS = 4096
# lattice size used whenever log C must be a smooth function of the parameters
# (finite differences, optimization); only relevant for d >= 4
SMOOTH_POINTS = 8192


# ----------------------------------------------------------------------------
# normalization constant

def _drop(i: int, d: int) -> np.ndarray:
    return np.delete(np.arange(d), i)


def _face_log_terms(a: np.ndarray, Q: np.ndarray, l: np.ndarray, *, tol: float = 1e-6,
                    n_points: int | None = None, seed: int = 0):
    """Per-face log terms of ``C_a`` for a batch of parameters.

    ``Q`` is (m, d, d) and ``l`` is (m, d).  Returns ``(logt, rel_err)`` with
    shape (m, d): the log of each summand and the relative error of its
    Gaussian orthant factor.
    """
    m, d = l.shape
    alpha = -l.sum(axis=1)
    la = np.log(a)
    logt = np.empty((m, d))
    rel = np.zeros((m, d))
    for i in range(d):
        idx = _drop(i, d)
        Qi = Q[:, idx][:, :, idx]
        li = l[:, idx]
        try:
            Li = np.linalg.cholesky(Qi)
        except np.linalg.LinAlgError:
            raise CovNotPD("reduced precision matrix is not positive definite") from None
        logdet = 2.0 * np.log(np.diagonal(Li, axis1=1, axis2=2)).sum(axis=1)
        Si = np.linalg.inv(Qi)
        Si = 0.5 * (Si + np.swapaxes(Si, 1, 2))
        mu = np.einsum("mij,mj->mi", Si, li)
        quad = np.einsum("mi,mi->m", li, mu)
        sd = np.sqrt(np.diagonal(Si, axis1=1, axis2=2))
        b = ((la[idx] - la[i])[None, :] - mu) / sd
        k = d - 1
        if k == 1:
            lphi = special.log_ndtr(b[:, 0])
            rel[:, i] = 1e-15
        elif k == 2:
            r = Si[:, 0, 1] / (sd[:, 0] * sd[:, 1])
            lphi = log_bvn_cdf(b[:, 0], b[:, 1], r)
            rel[:, i] = 1e-13
        elif k == 3:
            R = Si / (sd[:, :, None] * sd[:, None, :])
            panels = TVN_SMOOTH_PANELS if n_points is not None else None
            lphi, err = log_tvn_cdf(b, R, rel_tol=min(max(tol, 1e-13), 1e-10), panels=panels)
            rel[:, i] = np.nan_to_num(err, nan=1e-12)
        else:
            lphi = np.empty(m)
            for j in range(m):
                R = Si[j] / np.outer(sd[j], sd[j])
                lv, err, _ = log_mvn_cdf_std(b[j], R, tol=1e-300, rel_tol=tol,
                                             seed=seed, n_points=n_points)
                lphi[j] = lv
                rel[j, i] = err / math.exp(lv) if np.isfinite(lv) and lv > -700 else 0.0
        logt[:, i] = (0.5 * k * LOG_2PI - np.log(alpha) - alpha * la[i]
                      - 0.5 * logdet + 0.5 * quad + lphi)
    return logt, rel


def log_norm_const_batch(a, Q, l, *, tol: float = 1e-6, n_points: int | None = None,
                         seed: int = 0) -> np.ndarray:
    """``log C_a(Q, l)`` for stacked parameters (no validation)."""
    a = np.asarray(a, dtype=float)
    Q = np.asarray(Q, dtype=float)
    l = np.asarray(l, dtype=float)
    logt, _ = _face_log_terms(a, Q, l, tol=tol, n_points=n_points, seed=seed)
    return special.logsumexp(logt, axis=1)


def log_norm_const(a, p: HrParams, *, tol: float = 1e-6, n_points: int | None = None,
                   seed: int = 0) -> float:
    a = check_threshold(a, p.d)
    return float(log_norm_const_batch(a, p.Q[None], p.l[None], tol=tol,
                                      n_points=n_points, seed=seed)[0])


def norm_const(a, p: HrParams, tol: float = 1e-6, *, seed: int = 0) -> tuple[float, float]:
    """``(C_a(Q, l), abs_error)``.

    For d <= 4 the Gaussian orthant factors are evaluated deterministically
    (to about 1e-10 relative or better); for d >= 5 ``tol`` is the relative
    accuracy requested from the lattice rule.
    """
    a = check_threshold(a, p.d)
    logt, rel = _face_log_terms(a, p.Q[None], p.l[None], tol=tol, seed=seed)
    terms = np.exp(logt[0])
    return float(terms.sum()), float(np.sum(terms * rel[0]))


def norm_const_mc(a, p: HrParams, n: int = 1_000_000, seed: int = 0, *,
                  inflate: float = 2.0) -> tuple[float, float]:
    """Importance-sampling estimate of ``C_a(Q, l)`` with its standard error.

    Independent of any Gaussian orthant probability: write ``log z = w + s 1``
    with ``w`` orthogonal to ``1``.  The ``s`` integral is explicit,
    ``int_{s0(w)}^inf exp(-alpha s) ds = exp(-alpha s0(w)) / alpha`` with
    ``s0(w) = min_i(log a_i - w_i)``, and ``w`` is drawn from its Gaussian
    factor with covariance inflated by ``inflate**2`` so that the weights have
    finite variance.
    """
    a = check_threshold(a, p.d)
    d = p.d
    Qp = np.linalg.pinv(p.Q, hermitian=True)
    Qp = 0.5 * (Qp + Qp.T)
    lperp = p.l - p.l.mean()
    mean = Qp @ lperp
    vals, vecs = np.linalg.eigh(Qp)
    vals, vecs = vals[1:], vecs[:, 1:]
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, d - 1))
    eta = inflate * eps
    w = mean + (eta * np.sqrt(vals)) @ vecs.T
    s0 = np.min(np.log(a) - w, axis=1)
    lw = (-0.5 * np.sum(eta ** 2, axis=1) + 0.5 * np.sum(eps ** 2, axis=1)
          - p.alpha * s0)
    ref = lw.max()
    wt = np.exp(lw - ref)
    # |det Q| restricted to 1-perp equals the product of the nonzero eigenvalues
    log_pdet = -float(np.sum(np.log(vals)))
    logk = (0.5 * math.log(d) - math.log(p.alpha) + 0.5 * (d - 1) * LOG_2PI
            + (d - 1) * math.log(inflate) - 0.5 * log_pdet
            + 0.5 * float(lperp @ Qp @ lperp) + ref)
    k = math.exp(logk)
    return k * float(wt.mean()), k * float(wt.std(ddof=1) / math.sqrt(n))


# ----------------------------------------------------------------------------
# densities

def _log_unnormalized(logz: np.ndarray, Q: np.ndarray, l: np.ndarray) -> np.ndarray:
    return (-0.5 * np.einsum("...i,ij,...j->...", logz, Q, logz) + logz @ l
            - logz.sum(axis=-1))


def _positive_rows(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise NonPositiveComponent("all components must be positive")
    return z


def log_density(z, a, p: HrParams, *, log_c: float | None = None) -> np.ndarray | float:
    """Log density of ``HRPar_a(Q, l)`` at one point or at the rows of ``z``.

    Points with ``z <= a`` componentwise lie outside the support and get ``-inf``.
    """
    z = _positive_rows(z)
    a = check_threshold(a, p.d)
    if z.shape[-1] != p.d:
        raise DimensionMismatch(f"points must have {p.d} components")
    if log_c is None:
        log_c = log_norm_const(a, p)
    logz = np.log(z)
    out = _log_unnormalized(logz, p.Q, p.l) - log_c
    inside = np.all(z <= a, axis=-1)
    out = np.where(inside, -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def log_norm_const_gen(a, p: GenHrParams, **kw) -> float:
    """``log C_a(alpha, Q, l) = log C_{a^alpha}(Q, l) - sum log alpha``."""
    a = check_threshold(a, p.d)
    hr = HrParams(Q=p.Q, l=p.l)
    return log_norm_const(a ** p.alpha, hr, **kw) - float(np.sum(np.log(p.alpha)))


def log_density_gen(z, a, p: GenHrParams, *, log_c: float | None = None):
    z = _positive_rows(z)
    a = check_threshold(a, p.d)
    if log_c is None:
        log_c = log_norm_const_gen(a, p)
    y = np.log(z) * p.alpha
    out = (-0.5 * np.einsum("...i,ij,...j->...", y, p.Q, y) + y @ p.l
           - np.log(z).sum(axis=-1) - log_c)
    out = np.where(np.all(z <= a, axis=-1), -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# faces and simulation

@dataclass(frozen=True)
class Face:
    index: int
    others: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    chol_Q: np.ndarray
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class FacePartition:
    """Face probabilities ``P(Theta in S_i)`` of the standardized angular law."""

    probs: np.ndarray
    faces: tuple


def face_partition(p: HrParams, *, tol: float = 1e-8, seed: int = 0) -> FacePartition:
    """Face probabilities for threshold ``1_d`` together with cached face quantities."""
    d = p.d
    logt, _ = _face_log_terms(np.ones(d), p.Q[None], p.l[None], tol=tol, seed=seed)
    probs = np.exp(logt[0] - special.logsumexp(logt[0]))
    faces = []
    for i in range(d):
        idx = _drop(i, d)
        Qi = p.Q[np.ix_(idx, idx)]
        Li = np.linalg.cholesky(Qi)
        Si = np.linalg.inv(Qi)
        Si = 0.5 * (Si + Si.T)
        faces.append(Face(i, idx, _frozen(Qi), _frozen(p.l[idx]), _frozen(Li),
                          _frozen(Si @ p.l[idx]), _frozen(Si)))
    return FacePartition(probs=_frozen(probs / probs.sum()), faces=tuple(faces))


def _truncation_order(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Most constraining coordinate first, the rest in ascending order."""
    lp = special.log_ndtr(-mean / np.sqrt(np.diag(cov)))
    first = int(np.argmin(lp))
    return np.concatenate([[first], np.delete(np.arange(mean.shape[0]), first)]).astype(int)


def _ghk_draws(mean, L, n, rng):
    """Sequential conditional inversion for ``N(mean, L L^T)`` restricted to ``<= 0``.

    Returns the draws and ``log w`` where ``w`` is the product of the
    conditional truncation probabilities excluding the (constant) first one.
    """
    k = mean.shape[0]
    eps = np.zeros((n, k))
    logw = np.zeros(n)
    U = rng.random((n, k))
    for j in range(k):
        b = (-mean[j] - eps[:, :j] @ L[j, :j]) / L[j, j]
        lp = special.log_ndtr(b)
        with np.errstate(divide="ignore"):
            lu = np.log(U[:, j])
        eps[:, j] = special.ndtri_exp(lp + lu)
        if j > 0:
            logw += lp
    g = mean + eps @ L.T
    return np.minimum(g, 0.0), logw


def sample_truncated_gaussian(mean, cov, n: int, rng: np.random.Generator, *,
                              exact: bool = True) -> np.ndarray:
    """Draws from ``N(mean, cov)`` conditioned on all coordinates ``<= 0``.

    Each coordinate is drawn in turn from its conditional normal law truncated
    at 0 by inversion, ``G_j = m + s * Phi^{-1}(Phi(-m/s) U)``.  On its own this
    sequential scheme is only a proposal: its density is the target divided by
    the product ``w`` of conditional truncation probabilities.  With
    ``exact=True`` every proposal is accepted with probability
    ``w / max(w)`` which yields exact draws; ``exact=False`` returns the raw
    proposal (biased unless k = 1).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = mean.shape[0]
    if n == 0:
        return np.zeros((0, k))
    order = _truncation_order(mean, cov)
    inv = np.argsort(order)
    m = mean[order]
    L = np.linalg.cholesky(cov[np.ix_(order, order)])
    if not exact or k == 1:
        g, _ = _ghk_draws(m, L, n, rng)
        return g[:, inv]
    out = np.empty((n, k))
    filled = 0
    rate = 0.5
    while filled < n:
        need = n - filled
        batch = int(min(max(need / max(rate, 1e-3) * 1.1 + 16, 64), 1 << 20))
        g, logw = _ghk_draws(m, L, batch, rng)
        with np.errstate(divide="ignore"):
            accept = np.log(rng.random(batch)) < logw
        got = g[accept]
        rate = max(accept.mean(), 1e-4)
        take = min(got.shape[0], need)
        out[filled:filled + take] = got[:take]
        filled += take
    return out[:, inv]


def _sample_std_chunk(fp: FacePartition, n: int, rng: np.random.Generator, exact: bool):
    d = fp.probs.shape[0]
    R = 1.0 / (1.0 - rng.random(n))
    cum = np.cumsum(fp.probs)
    face = np.minimum(np.searchsorted(cum / cum[-1], rng.random(n), side="right"), d - 1)
    logtheta = np.zeros((n, d))
    for f in fp.faces:
        rows = np.nonzero(face == f.index)[0]
        if rows.size == 0:
            continue
        g = sample_truncated_gaussian(f.mean, f.cov, rows.size, rng, exact=exact)
        logtheta[np.ix_(rows, f.others)] = g
    return R[:, None] * np.exp(logtheta)


def _chunk_seeds(seed: int, n: int):
    n_chunks = (n + CHUNK_ROWS - 1) // CHUNK_ROWS
    return [(np.random.SeedSequence(seed, spawn_key=(c,)),
             min(CHUNK_ROWS, n - c * CHUNK_ROWS)) for c in range(n_chunks)]


def sample_standard(n: int, p_std: HrParams, seed: int = 0, *, workers: int = 1,
                    exact: bool = True) -> np.ndarray:
    """Draws with threshold ``1_d`` and exponent 1 (``p_std`` must satisfy both)."""
    fp = face_partition(p_std)
    jobs = _chunk_seeds(seed, n)

    def run(job):
        ss, m = job
        return _sample_std_chunk(fp, m, np.random.default_rng(ss), exact)

    if not jobs:
        return np.zeros((0, p_std.d))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.vstack(parts)


def sample(n: int, a, p: HrParams, seed: int = 0, *, workers: int = 1,
           exact: bool = True) -> np.ndarray:
    """``n`` draws from ``HRPar_a(Q, l)``, realized as ``a * Zt**(1/alpha)``.

    Rows are produced in fixed-size chunks, each with its own seed derived
    from ``seed``, so the output does not depend on ``workers``.
    """
    if n < 0:
        raise DimensionMismatch("n must be non-negative")
    a = check_threshold(a, p.d)
    zt = sample_standard(n, standardize(p, a), seed, workers=workers, exact=exact)
    return a * zt ** (1.0 / p.alpha)


def sample_gen(n: int, a, p: GenHrParams, seed: int = 0, *, workers: int = 1) -> np.ndarray:
    """Draws from the generalized model via ``Z = a * Zt**(1/alpha)``."""
    a = check_threshold(a, p.d)
    p_std, expo = gen_reduce(p, a)
    zt = sample_standard(n, p_std, seed, workers=workers)
    return a * zt ** expo


def classify_faces(z, a=None, alpha: float | np.ndarray = 1.0) -> np.ndarray:
    """Index of the face of each row of the standardized sample ``(z/a)**alpha``.

    Ties go to the smallest index.
    """
    z = np.asarray(z, dtype=float)
    zs = z if a is None else (z / np.asarray(a)) ** np.asarray(alpha)
    return np.argmax(zs, axis=-1)


# ----------------------------------------------------------------------------
# moments

@dataclass(frozen=True)
class Moments:
    mean_log: np.ndarray
    cov_log: np.ndarray
    centered_second: np.ndarray


def _log_c_of_l(a, Q, n_points, seed):
    def f(Ls):
        return log_norm_const_batch(a, np.broadcast_to(Q, (Ls.shape[0],) + Q.shape),
                                    Ls, n_points=n_points, seed=seed)
    return f


def moments(a, p: HrParams, *, seed: int = 0, rel_step: float = fd.REL_STEP) -> Moments:
    """Mean and covariance of ``log Z`` and ``E[(log Z - mean) (log Z - mean)^T]``.

    Obtained by central differences of ``log C`` in ``l`` (first and second
    order) and in the coordinates of ``Q`` (for the centered second moment,
    where ``log Z`` is centered by its own coordinate average).
    """
    a = check_threshold(a, p.d)
    d = p.d
    npts = SMOOTH_POINTS * 4 if d >= 4 else None
    _, g, H = fd.grad_hess(_log_c_of_l(a, p.Q, npts, seed), p.l, fd.steps(p.l, rel_step))
    qc = matrix_coords(p.Q)

    def fq(V):
        Qs = coords_matrix(V, d)
        return log_norm_const_batch(a, Qs, np.broadcast_to(p.l, (V.shape[0], d)),
                                    n_points=npts, seed=seed)

    _, gq = fd.grad_hess(fq, qc, fd.steps(qc, rel_step), hessian=False)
    # d log C / d coords(Q) = E[coords(-1/2 c c^T)]
    centered = -2.0 * coords_matrix(gq, d)
    return Moments(mean_log=_frozen(g), cov_log=_frozen(0.5 * (H + H.T)),
                   centered_second=_frozen(0.5 * (centered + centered.T)))


def fractional_moment(a, p: HrParams, u) -> float:
    """``E[prod Z_i^{u_i}] = C_a(Q, l + u) / C_a(Q, l)`` for ``sum u < alpha``."""
    a = check_threshold(a, p.d)
    u = np.asarray(u, dtype=float)
    if u.shape != (p.d,):
        raise DimensionMismatch(f"u must have length {p.d}")
    if np.sum(u) >= p.alpha:
        raise MomentDoesNotExist(f"sum(u) = {np.sum(u):.6g} must be below alpha = {p.alpha:.6g}")
    ls = np.vstack([p.l + u, p.l])
    lc = log_norm_const_batch(a, np.broadcast_to(p.Q, (2, p.d, p.d)), ls,
                              n_points=SMOOTH_POINTS * 4 if p.d >= 4 else None)
    return math.exp(lc[0] - lc[1])


# ----------------------------------------------------------------------------
# spectral (log-normal) parametrization

def from_spectral(m, Sigma, alpha: float) -> HrParams:
    """HR parameters of the limit of ``R * Z`` with ``log Z ~ N(m, Sigma)``, ``R`` alpha-Pareto."""
    m = np.asarray(m, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    d = m.shape[0]
    if Sigma.shape != (d, d):
        raise DimensionMismatch("Sigma must be d x d")
    if not alpha > 0:
        raise NonPositiveComponent("alpha must be positive")
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise CovNotPD("Sigma is not positive definite") from None
    one = np.ones(d)
    Si1 = np.linalg.solve(Sigma, one)
    Sim = np.linalg.solve(Sigma, m)
    s = float(one @ Si1)
    Sinv = np.linalg.inv(Sigma)
    Q = Sinv - np.outer(Si1, Si1) / s
    Q = 0.5 * (Q + Q.T)
    l = Sim - (alpha + float(m @ Si1)) / s * Si1
    return validate_hr(Q, l)


def theta_log_c(a, d: int, *, n_points: int | None = None, seed: int = 0):
    """``theta -> log C_a`` on ParamVector coordinates, vectorized over rows."""
    if d >= 4 and n_points is None:
        n_points = SMOOTH_POINTS

    def f(T):
        Q, l = extract(T, d)
        return log_norm_const_batch(a, Q, l, n_points=n_points, seed=seed)
    return f
