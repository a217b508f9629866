"""Maximum likelihood for the standard and generalized models, and the LRT.

The standard model is a full exponential family in ``theta = (Q, l)``:
``L_n(theta) / n = <theta, Tbar_n> - log C_a(theta) - mean(sum log z)``,
strictly concave on an open convex set.  ``fit_hr`` runs a damped Newton
ascent directly in the flat coordinates of ``theta`` (the domain is convex,
so a backtracking step that stays inside it is always available).  Derivatives
of ``log C`` come from central differences evaluated on one batched stencil.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from . import fd
from .core import (
    GenHrParams,
    HrParams,
    SufficientStat,
    _frozen,
    check_threshold,
    complement_basis,
    coords_matrix,
    embed,
    extract,
    in_parameter_space,
    matrix_coords,
    mean_sufficient_stat,
    validate_gen,
    validate_hr,
)
from .errors import (
    EmptySample,
    MarginNotExceeded,
    NoMle,
    NotConverged,
    RowInsideThreshold,
)
from .pareto import log_norm_const_batch, sample_gen, theta_log_c


# ----------------------------------------------------------------------------
# sample statistics

@dataclass(frozen=True)
class SampleStats:
    n: int
    Tbar: SufficientStat
    Vn: np.ndarray
    Nn: np.ndarray
    On: np.ndarray
    logz: np.ndarray = field(repr=False)


def _check_sample(sample, a) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(sample, dtype=float)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptySample("sample must be a non-empty (n, d) array")
    a = check_threshold(a, z.shape[1])
    if np.any(~(z > 0)):
        raise RowInsideThreshold("sample contains non-positive entries")
    inside = np.all(z <= a, axis=1)
    if np.any(inside):
        raise RowInsideThreshold(f"row {int(np.argmax(inside))} lies inside [0, a]")
    return z, a


def sample_stats(sample, a) -> SampleStats:
    z, a = _check_sample(sample, a)
    lz = np.log(z)
    n = z.shape[0]
    c = lz - lz.mean(axis=0)
    ls = lz - np.log(a)
    return SampleStats(n=n, Tbar=mean_sufficient_stat(lz), Vn=_frozen(c.T @ c / n),
                       Nn=_frozen(np.mean(ls > 0, axis=0)),
                       On=_frozen(np.mean(np.maximum(ls, 0.0), axis=0)), logz=_frozen(lz))


@dataclass(frozen=True)
class Existence:
    ok: bool
    min_eigenvalue: float
    threshold: float

    def __bool__(self):
        return self.ok


def existence_check(stats: SampleStats) -> Existence:
    """MLE exists iff ``Vn`` is positive definite on the complement of ``1_d``."""
    U = complement_basis(stats.Vn.shape[0])
    ev = float(np.linalg.eigvalsh(U.T @ stats.Vn @ U)[0])
    thr = 1e-10 * float(np.trace(stats.Vn))
    return Existence(ok=bool(ev > thr), min_eigenvalue=ev, threshold=thr)


# ----------------------------------------------------------------------------
# standard model

@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-6
    max_iter: int = 100
    tol_ll: float = 1e-9
    max_iters: int = 200
    n_points: int | None = None
    seed: int = 0


@dataclass
class FitReport:
    params: HrParams | GenHrParams
    loglik: float
    info: np.ndarray
    std_errors: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    trace: list = field(default_factory=list)
    a: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"params": self.params.to_dict(), "loglik": float(self.loglik),
               "std_errors": [float(s) for s in self.std_errors],
               "converged": bool(self.converged), "iterations": int(self.iterations),
               "gradient_norm": float(self.gradient_norm)}
        if self.a is not None:
            out["params"]["a"] = [float(v) for v in self.a]
        return out


def _initial_hr(stats: SampleStats, a: np.ndarray) -> np.ndarray:
    lz = stats.logz
    d = lz.shape[1]
    alpha = 1.0 / float(np.mean(np.max(lz - np.log(a), axis=1)))
    U = complement_basis(d)
    Q0 = U @ np.linalg.inv(U.T @ stats.Vn @ U) @ U.T
    l0 = Q0 @ lz.mean(axis=0) - alpha / d
    return embed(0.5 * (Q0 + Q0.T), l0)


def _newton(f, t: np.ndarray, theta: np.ndarray, d: int, opts: FitOptions):
    """Maximize ``theta . t - f(theta)`` over the parameter domain."""
    it = 0
    trace = []
    while True:
        lc, g, H = fd.grad_hess(f, theta)
        H = 0.5 * (H + H.T)
        score = t - g
        gnorm = float(np.linalg.norm(score))
        obj = float(theta @ t - lc)
        trace.append(obj)
        if gnorm <= opts.tol:
            return theta, H, gnorm, it, True, trace
        if it >= opts.max_iter:
            return theta, H, gnorm, it, False, trace
        it += 1
        w, V = np.linalg.eigh(H)
        w = np.maximum(w, 1e-8 * max(1.0, float(np.max(np.abs(w)))))
        step = V @ ((V.T @ score) / w)
        slope = float(score @ step)
        s = 1.0
        while True:
            cand = theta + s * step
            Q, l = extract(cand, d)
            if in_parameter_space(Q, l):
                new = float(cand @ t - f(cand[None])[0])
                if np.isfinite(new) and new >= obj + 1e-4 * s * slope - 1e-13 * abs(obj):
                    break
            s *= 0.5
            if s < 1e-12:
                return theta, H, gnorm, it, False, trace
        theta = cand


def _hr_from_theta(theta, d) -> HrParams:
    Q, l = extract(theta, d)
    return validate_hr(0.5 * (Q + Q.T), l)


def fit_hr(sample, a, opts: FitOptions | None = None, *, init: HrParams | None = None,
           stats: SampleStats | None = None) -> FitReport:
    """Maximum likelihood estimate of ``(Q, l)`` for threshold ``a``.

    Raises :class:`NoMle` when the existence criterion fails and
    :class:`NotConverged` (carrying the best iterate in ``.report``) when the
    score residual does not reach ``opts.tol`` within ``opts.max_iter`` steps.
    """
    opts = opts or FitOptions()
    if stats is None:
        z, a = _check_sample(sample, a)
        stats = sample_stats(z, a)
    else:
        a = check_threshold(a, stats.Vn.shape[0])
    ex = existence_check(stats)
    if not ex:
        raise NoMle(f"sample covariance is singular on the complement of 1 "
                    f"(min eigenvalue {ex.min_eigenvalue:.3g})")
    d = stats.Vn.shape[0]
    n = stats.n
    f = theta_log_c(a, d, n_points=opts.n_points, seed=opts.seed)
    t = embed(stats.Tbar.mat, stats.Tbar.vec)
    theta0 = embed(init.Q, init.l) if init is not None else _initial_hr(stats, a)
    Q0, l0 = extract(theta0, d)
    if not in_parameter_space(Q0, l0):
        theta0 = _initial_hr(stats, a)
    theta, H, gnorm, it, ok, trace = _newton(f, t, theta0, d, opts)
    params = _hr_from_theta(theta, d)
    lc = float(f(theta[None])[0])
    loglik = n * (float(theta @ t) - lc) - float(stats.logz.sum())
    info = _psd(H)
    se = np.sqrt(np.diag(np.linalg.inv(info)) / n)
    rep = FitReport(params=params, loglik=loglik, info=info, std_errors=se, converged=ok,
                    iterations=it, gradient_norm=gnorm, trace=trace, a=a)
    if not ok:
        raise NotConverged(f"score residual {gnorm:.3g} above tolerance {opts.tol:.3g}", rep)
    return rep


def _psd(H: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    w = np.maximum(w, 1e-12 * max(1.0, float(np.max(np.abs(w)))))
    return (V * w) @ V.T


def hr_loglik(sample, a, p: HrParams) -> float:
    from .pareto import log_density
    return float(np.sum(log_density(np.asarray(sample, float), a, p)))


# ----------------------------------------------------------------------------
# generalized model

ALPHA_MIN, ALPHA_MAX = 1e-6, 1e6


def gen_chart_dim(d: int) -> int:
    return d + d * (d - 1) // 2 + (d - 1)


def gen_to_chart(p: GenHrParams) -> np.ndarray:
    """``[alpha, coords(Q), U^T l]``; ``l = -1/d + U c`` keeps ``l . 1 = -1``."""
    U = complement_basis(p.d)
    return np.concatenate([p.alpha, matrix_coords(p.Q), U.T @ p.l])


def chart_to_gen(x: np.ndarray, d: int):
    """Inverse of :func:`gen_to_chart` (batched, unvalidated)."""
    x = np.asarray(x, dtype=float)
    m = d * (d - 1) // 2
    U = complement_basis(d)
    alpha = x[..., :d]
    Q = coords_matrix(x[..., d:d + m], d)
    l = -1.0 / d + x[..., d + m:] @ U.T
    return alpha, Q, l


def _gen_loglik_std(X: np.ndarray, S: np.ndarray, s: np.ndarray, n: int, sum_u: float,
                    d: int, n_points=None, seed=0) -> np.ndarray:
    """Generalized log-likelihood on standardized data for chart points ``X``.

    ``S = sum_k u_k u_k^T`` and ``s = sum_k u_k`` with ``u = log(z / a)``.
    """
    alpha, Q, l = chart_to_gen(X, d)
    quad = np.einsum("mij,mi,mj,ij->m", Q, alpha, alpha, S)
    lin = np.einsum("mi,mi,i->m", l, alpha, s)
    logc = log_norm_const_batch(np.ones(d), Q, l, n_points=n_points, seed=seed)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -0.5 * quad + lin - sum_u - n * logc + n * np.sum(np.log(alpha), axis=1)
    out = np.where(np.all(alpha > 0, axis=1), out, -np.inf)
    return out


def _alpha_block(alpha, Q, l, S, s, n, tol=1e-12, max_iter=100):
    """Exact maximizer in ``alpha`` of ``-1/2 a^T (Q o S) a + (l o s)^T a + n sum log a``."""
    A = Q * S
    b = l * s

    def obj(x):
        return -0.5 * x @ A @ x + b @ x + n * np.sum(np.log(x))

    x = alpha.copy()
    for _ in range(max_iter):
        g = -A @ x + b + n / x
        H = -A - n * np.diag(1.0 / x ** 2)
        step = -np.linalg.solve(H, g)
        t = 1.0
        while np.any(x + t * step <= 0):
            t *= 0.5
        f0 = obj(x)
        while obj(x + t * step) < f0 - 1e-14 * abs(f0) and t > 1e-12:
            t *= 0.5
        x = x + t * step
        if np.linalg.norm(g) * max(1.0, float(np.max(x))) < tol * n:
            break
    return x


@dataclass(frozen=True)
class _GenState:
    alpha: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    hr_theta: np.ndarray | None = None


def _renormalize(alpha, Q, l):
    c = -float(np.sum(l))
    return alpha * c, Q / c ** 2, l / c


def moment_init(sample, a, opts: FitOptions | None = None) -> GenHrParams:
    """Moment estimate ``alpha_j = N_j / O_j`` followed by a standard fit of ``(z/a)^alpha``."""
    z, a = _check_sample(sample, a)
    stats = sample_stats(z, a)
    return _moment_init(z, a, stats, opts or FitOptions())[0]


def marginal_alpha(stats: SampleStats) -> tuple[np.ndarray, np.ndarray]:
    """Per-margin tail index estimates ``N/O`` and their asymptotic standard errors."""
    if np.any(stats.On <= 0):
        raise MarginNotExceeded("some margin never exceeds its threshold")
    alpha = stats.Nn / stats.On
    return alpha, alpha / np.sqrt(stats.n * stats.Nn)


def _moment_init(z, a, stats, opts):
    alpha0, _ = marginal_alpha(stats)
    w = (z / a) ** alpha0
    rep = fit_hr(w, np.ones(z.shape[1]), opts)
    al, Q, l_std = _renormalize(alpha0, rep.params.Q, rep.params.l)
    l = l_std + Q @ (al * np.log(a))
    return validate_gen(al, Q, l), _GenState(al, Q, l_std, embed(rep.params.Q, rep.params.l))


def _gen_total_loglik(alpha, Q, l_std, S, s, n, sum_u, sum_log_a, d, opts):
    x = np.concatenate([alpha, matrix_coords(Q), complement_basis(d).T @ l_std])
    return float(_gen_loglik_std(x[None], S, s, n, sum_u, d, opts.n_points, opts.seed)[0]) \
        - n * sum_log_a


def fit_gen(sample, a, opts: FitOptions | None = None, *,
            hr_fit: FitReport | None = None) -> FitReport:
    """Alternating maximization for the generalized model.

    Starts from the better of the moment initializer and the standard-model
    fit embedded as a constant-``alpha`` point, so the returned likelihood is
    never below the standard fit.  ``trace`` holds ``-L_n`` after every
    half-step.
    """
    opts = opts or FitOptions()
    z, a = _check_sample(sample, a)
    stats = sample_stats(z, a)
    if not existence_check(stats):
        raise NoMle("sample covariance is singular on the complement of 1")
    d = z.shape[1]
    n = z.shape[0]
    u = np.log(z / a)
    S = u.T @ u
    s = u.sum(axis=0)
    sum_u = float(u.sum())
    sum_log_a = float(np.sum(np.log(a)))

    def total(st):
        return _gen_total_loglik(st.alpha, st.Q, st.l, S, s, n, sum_u, sum_log_a, d, opts)

    starts = []
    try:
        starts.append(_moment_init(z, a, stats, opts)[1])
    except (NotConverged, MarginNotExceeded):
        pass
    if hr_fit is None:
        hr_fit = fit_hr(z, a, opts, stats=stats)
    hp = hr_fit.params
    ah = hp.alpha
    Qg, lg = hp.Q / ah ** 2, hp.l / ah
    alpha_h = np.full(d, ah)
    l_std = lg - Qg @ (alpha_h * np.log(a))
    starts.append(_GenState(alpha_h, Qg, l_std, embed(ah ** 2 * Qg, ah * l_std)))
    vals = [total(st) for st in starts]
    state = starts[int(np.argmax(vals))]
    best = max(vals)
    trace = [-best]
    converged = False
    it = 0
    while it < opts.max_iters:
        it += 1
        prev = best
        # alpha block
        alpha = _alpha_block(state.alpha, state.Q, state.l, S, s, n)
        if np.any(alpha < ALPHA_MIN) or np.any(alpha > ALPHA_MAX):
            raise NotConverged("tail index left the admissible range")
        cand = replace(state, alpha=alpha)
        v = total(cand)
        if v >= best - 1e-9 * abs(best):
            state, best = cand, max(v, best)
        trace.append(-best)
        # (Q, l) block: a standard fit of w = (z/a)^alpha, then renormalize
        w = np.exp(u * state.alpha)
        init = None
        if state.hr_theta is not None:
            Qi, li = extract(state.hr_theta, d)
            if in_parameter_space(Qi, li):
                init = HrParams(Q=Qi, l=li)
        try:
            rep = fit_hr(w, np.ones(d), opts, init=init)
        except NotConverged as exc:
            rep = exc.report
        ra, rQ, rl = _renormalize(state.alpha, rep.params.Q, rep.params.l)
        cand = _GenState(ra, rQ, rl, embed(rep.params.Q, rep.params.l))
        v = total(cand)
        if v >= best - 1e-9 * abs(best):
            state, best = cand, max(v, best)
        trace.append(-best)
        if best - prev < opts.tol_ll * n:
            converged = True
            break
    l_orig = state.l + state.Q @ (state.alpha * np.log(a))
    params = validate_gen(state.alpha, state.Q, l_orig)
    # observed information on the chart [alpha, Q coords, l coords]
    x0 = np.concatenate([state.alpha, matrix_coords(state.Q),
                         complement_basis(d).T @ state.l])

    def f(X):
        return _gen_loglik_std(X, S, s, n, sum_u, d, opts.n_points, opts.seed) / n

    _, g, H = fd.grad_hess(f, x0)
    info = _psd(-H)
    se = np.sqrt(np.diag(np.linalg.inv(info)) / n)
    rep = FitReport(params=params, loglik=best, info=info, std_errors=se,
                    converged=converged, iterations=it, gradient_norm=float(np.linalg.norm(g)),
                    trace=trace, a=a)
    if not converged:
        raise NotConverged("alternating scheme did not converge", rep)
    return rep


# ----------------------------------------------------------------------------
# likelihood ratio test and information

@dataclass(frozen=True)
class LrtResult:
    stat: float
    df: int
    p_value: float
    fit_hr: FitReport
    fit_gen: FitReport

    def to_dict(self) -> dict:
        return {"stat": self.stat, "df": self.df, "p_value": self.p_value}


def chi2_sf(x: float, df: int) -> float:
    return float(special.gammaincc(0.5 * df, 0.5 * x)) if x > 0 else 1.0


def lrt_equal_alpha(sample, a, opts: FitOptions | None = None) -> LrtResult:
    """Likelihood ratio test of equal tail indices (``df = d - 1``)."""
    opts = opts or FitOptions()
    z, a = _check_sample(sample, a)
    hr = fit_hr(z, a, opts)
    gen = fit_gen(z, a, opts, hr_fit=hr)
    stat = max(0.0, 2.0 * (gen.loglik - hr.loglik))
    df = z.shape[1] - 1
    return LrtResult(stat=stat, df=df, p_value=chi2_sf(stat, df), fit_hr=hr, fit_gen=gen)


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    std_error: np.ndarray | None = None


def fisher_info(p: HrParams | GenHrParams, a, *, n_mc: int = 200_000,
                seed: int = 0) -> FisherInfo:
    """Per-observation Fisher information.

    Standard model: Hessian of ``log C_a`` in ParamVector coordinates
    (``= Var T``), projected onto the PSD cone.  Generalized model: Monte
    Carlo mean of the score outer product on the chart of :func:`gen_to_chart`.
    """
    d = p.d
    a = check_threshold(a, d)
    if isinstance(p, HrParams):
        f = theta_log_c(a, d)
        _, _, H = fd.grad_hess(f, embed(p.Q, p.l))
        return FisherInfo(_psd(H))
    z = sample_gen(n_mc, a, p, seed)
    u = np.log(z / a)
    l_std = p.l - p.Q @ (p.alpha * np.log(a))
    x0 = np.concatenate([p.alpha, matrix_coords(p.Q), complement_basis(d).T @ l_std])
    h = fd.steps(x0)
    k = x0.shape[0]
    pts = np.vstack([x0 + np.diag(h), x0 - np.diag(h)])
    alpha, Q, l = chart_to_gen(pts, d)
    y = u[None, :, :] * alpha[:, None, :]
    ll = (-0.5 * np.einsum("mni,mij,mnj->mn", y, Q, y) + np.einsum("mni,mi->mn", y, l)
          - log_norm_const_batch(np.ones(d), Q, l)[:, None]
          + np.sum(np.log(alpha), axis=1)[:, None])
    score = ((ll[:k] - ll[k:]) / (2 * h[:, None])).T
    outer = score[:, :, None] * score[:, None, :]
    M = outer.mean(axis=0)
    se = outer.std(axis=0, ddof=1) / math.sqrt(n_mc)
    return FisherInfo(0.5 * (M + M.T), se)


__all__ = [
    "SampleStats", "sample_stats", "Existence", "existence_check", "FitOptions", "FitReport",
    "fit_hr", "moment_init", "marginal_alpha", "fit_gen", "LrtResult", "lrt_equal_alpha",
    "FisherInfo", "fisher_info", "chi2_sf", "gen_to_chart", "chart_to_gen", "hr_loglik",
]
