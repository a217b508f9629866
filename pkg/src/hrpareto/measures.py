"""Limit measures of ``R * Z`` (Breiman construction) for five spectral laws.

``R`` is standard alpha-Pareto and ``Z`` is independent with a lighter tail.
The limit measure has density ``lambda(z) = int f_Z(z/u) alpha u^{-d-alpha-1} du``
and tail function ``V(x) = E[max_i (Z_i / x_i)^alpha]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate, special

from .core import HrParams, _frozen
from .errors import (
    ConstraintViolation,
    CovNotPD,
    DimensionMismatch,
    EmptySample,
    NonPositiveComponent,
    NumericalError,
    OutOfRange,
    OutOfSupport,
)
from .pareto import CHUNK_ROWS, from_spectral, log_norm_const

LOG_2PI = math.log(2.0 * math.pi)
MC_DRAWS = 1_000_000
MAX_WEIBULL_DIM = 15


def _pd_matrix(S, name="Sigma") -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"{name} must be square")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
        raise CovNotPD(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise CovNotPD(f"{name} is not positive definite") from None
    return _frozen(0.5 * (S + S.T))


def _pos(v, name) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not np.all(v > 0) or not np.all(np.isfinite(v)):
        raise NonPositiveComponent(f"{name} must be positive")
    return _frozen(v)


@dataclass(frozen=True)
class Gaussian:
    Sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Sigma", _pd_matrix(self.Sigma))

    @property
    def d(self):
        return self.Sigma.shape[0]


@dataclass(frozen=True)
class LogNormal:
    m: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Sigma", _pd_matrix(self.Sigma))
        m = _frozen(np.asarray(self.m, dtype=float))
        if m.shape != (self.Sigma.shape[0],):
            raise DimensionMismatch("m must match Sigma")
        object.__setattr__(self, "m", m)

    @property
    def d(self):
        return self.Sigma.shape[0]


@dataclass(frozen=True)
class Frechet:
    lam: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _pos(self.lam, "lambda"))
        if not self.beta > 0:
            raise NonPositiveComponent("beta must be positive")

    @property
    def d(self):
        return self.lam.shape[0]


@dataclass(frozen=True)
class Weibull:
    lam: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _pos(self.lam, "lambda"))
        if not self.beta > 0:
            raise NonPositiveComponent("beta must be positive")

    @property
    def d(self):
        return self.lam.shape[0]


@dataclass(frozen=True)
class Gamma:
    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _pos(self.theta, "theta"))
        object.__setattr__(self, "beta", _pos(self.beta, "beta"))
        if self.theta.shape != self.beta.shape:
            raise DimensionMismatch("theta and beta must have equal length")

    @property
    def d(self):
        return self.theta.shape[0]


SpectralFamily = Gaussian | LogNormal | Frechet | Weibull | Gamma
FAMILY_NAMES = {"gaussian": Gaussian, "lognormal": LogNormal, "frechet": Frechet,
                "weibull": Weibull, "gamma": Gamma}


@dataclass(frozen=True)
class LogNormalLimit:
    """``lambda(z) = C exp(-1/2 log z^T Q log z + l^T log z) / prod z``."""

    params: HrParams
    log_C: float


@dataclass(frozen=True)
class MeasureModel:
    family: SpectralFamily
    alpha: float
    lognormal: LogNormalLimit | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise NonPositiveComponent("alpha must be positive")
        fam = self.family
        if isinstance(fam, Frechet) and not fam.beta > self.alpha:
            raise ConstraintViolation("Frechet spectral law needs beta > alpha")
        if isinstance(fam, Weibull) and not self.alpha > fam.beta:
            raise ConstraintViolation("Weibull spectral law needs alpha > beta")
        if isinstance(fam, LogNormal) and self.lognormal is None:
            object.__setattr__(self, "lognormal", _lognormal_limit(fam, self.alpha))

    @property
    def d(self) -> int:
        return self.family.d


def _lognormal_log_c(m, S, alpha) -> float:
    Si1 = np.linalg.solve(S, np.ones(len(m)))
    Sim = np.linalg.solve(S, m)
    s = float(Si1.sum())
    _, logdet = np.linalg.slogdet(S)
    d = len(m)
    return (math.log(alpha) - 0.5 * (d - 1) * LOG_2PI - 0.5 * logdet - 0.5 * math.log(s)
            - 0.5 * float(m @ Sim) + (float(m @ Si1) + alpha) ** 2 / (2.0 * s))


def _mixture_integral(fam: SpectralFamily, alpha: float, z: np.ndarray, *,
                      window: tuple[float, float] = (-60.0, 60.0), peak: float = 0.0) -> float:
    """``int_0^inf f_Z(z/u) alpha u^{-d-alpha-1} du`` by adaptive quadrature (log-u scale)."""
    d = len(z)

    def integrand(t):
        u = math.exp(t)
        return math.exp(_log_spectral_density(fam, z / u) + math.log(alpha)
                        - (d + alpha) * t)

    val, _ = integrate.quad(integrand, *window, limit=400, epsabs=0, epsrel=1e-11,
                            points=[peak])
    return val


def _lognormal_limit(fam: LogNormal, alpha: float) -> LogNormalLimit:
    p = from_spectral(fam.m, fam.Sigma, alpha)
    log_c = _lognormal_log_c(fam.m, fam.Sigma, alpha)
    # cross-check the constant against the defining integral at one point
    z = np.exp(fam.m + 0.3)
    lz = np.log(z)
    closed = log_c + (-0.5 * lz @ p.Q @ lz + p.l @ lz - lz.sum())
    # in t = log u the integrand is Gaussian; integrate around its peak
    Si1 = np.linalg.solve(fam.Sigma, np.ones(len(z)))
    s = float(Si1.sum())
    peak = (float(Si1 @ (lz - fam.m)) - alpha) / s
    half = 40.0 / math.sqrt(s)
    num = _mixture_integral(fam, alpha, z, window=(peak - half, peak + half), peak=peak)
    if not num > 0 or abs(math.exp(closed) / num - 1.0) > 1e-6:
        raise NumericalError("log-normal limit constant failed its quadrature check")
    return LogNormalLimit(params=p, log_C=log_c)


def _log_spectral_density(fam: SpectralFamily, y: np.ndarray) -> float:
    """Log density of the spectral vector ``Z`` at ``y`` (used for quadrature checks)."""
    if isinstance(fam, Gaussian):
        Si = np.linalg.inv(fam.Sigma)
        _, ld = np.linalg.slogdet(fam.Sigma)
        return -0.5 * len(y) * LOG_2PI - 0.5 * ld - 0.5 * float(y @ Si @ y)
    if np.any(y <= 0):
        return -np.inf
    if isinstance(fam, LogNormal):
        ly = np.log(y) - fam.m
        _, ld = np.linalg.slogdet(fam.Sigma)
        return (-0.5 * len(y) * LOG_2PI - 0.5 * ld
                - 0.5 * float(ly @ np.linalg.solve(fam.Sigma, ly)) - float(np.log(y).sum()))
    if isinstance(fam, Frechet):
        b, s = fam.beta, y / fam.lam
        return float(np.sum(math.log(b) - np.log(fam.lam) - (b + 1) * np.log(s) - s ** (-b)))
    if isinstance(fam, Weibull):
        b, s = fam.beta, y / fam.lam
        return float(np.sum(math.log(b) - np.log(fam.lam) + (b - 1) * np.log(s) - s ** b))
    th, be = fam.theta, fam.beta
    return float(np.sum(th * np.log(be) - special.gammaln(th) + (th - 1) * np.log(y) - be * y))


def _support(fam, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != fam.d:
        raise DimensionMismatch(f"points must have {fam.d} components")
    if isinstance(fam, Gaussian):
        if np.any(np.all(z == 0, axis=-1)):
            raise OutOfSupport("z must be nonzero")
    elif np.any(~(z > 0)):
        raise OutOfSupport("z must have strictly positive components")
    return z


def log_lambda_density(model: MeasureModel, z) -> np.ndarray | float:
    fam, alpha = model.family, model.alpha
    z = _support(fam, z)
    d = fam.d
    if isinstance(fam, Gaussian):
        Si = np.linalg.inv(fam.Sigma)
        _, ld = np.linalg.slogdet(fam.Sigma)
        q = np.einsum("...i,ij,...j->...", z, Si, z)
        out = (math.log(alpha) - 0.5 * d * LOG_2PI - 0.5 * ld - math.log(2.0)
               + special.gammaln(0.5 * (alpha + d)) - 0.5 * (alpha + d) * np.log(0.5 * q))
    elif isinstance(fam, LogNormal):
        lim = model.lognormal
        lz = np.log(z)
        Q, l = lim.params.Q, lim.params.l
        out = (lim.log_C - 0.5 * np.einsum("...i,ij,...j->...", lz, Q, lz) + lz @ l
               - lz.sum(axis=-1))
    elif isinstance(fam, Frechet):
        b = fam.beta
        S = np.sum((z / fam.lam) ** (-b), axis=-1)
        out = (math.log(alpha) + (d - 1) * math.log(b) + special.gammaln(d - alpha / b)
               + np.sum(b * np.log(fam.lam) - (b + 1) * np.log(z), axis=-1)
               + (alpha / b - d) * np.log(S))
    elif isinstance(fam, Weibull):
        b = fam.beta
        S = np.sum((z / fam.lam) ** b, axis=-1)
        out = (math.log(alpha) + (d - 1) * math.log(b) + special.gammaln(d + alpha / b)
               + np.sum((b - 1) * np.log(z) - b * np.log(fam.lam), axis=-1)
               - (alpha / b + d) * np.log(S))
    else:
        th, be = fam.theta, fam.beta
        ts = float(th.sum())
        out = (math.log(alpha) + special.gammaln(alpha + ts) - np.sum(special.gammaln(th))
               + np.sum(th * np.log(be) + (th - 1) * np.log(z), axis=-1)
               - (alpha + ts) * np.log(z @ be))
    return float(out) if np.ndim(out) == 0 else out


def lambda_density(model: MeasureModel, z) -> np.ndarray | float:
    """Density of the limit measure at ``z`` (one point or rows of an array)."""
    out = np.exp(log_lambda_density(model, z))
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# spectral sampling

def spectral_sample(fam: SpectralFamily, n: int, rng: np.random.Generator) -> np.ndarray:
    d = fam.d
    if isinstance(fam, Gaussian):
        return rng.standard_normal((n, d)) @ np.linalg.cholesky(fam.Sigma).T
    if isinstance(fam, LogNormal):
        return np.exp(fam.m + rng.standard_normal((n, d)) @ np.linalg.cholesky(fam.Sigma).T)
    if isinstance(fam, Frechet):
        return fam.lam * (-np.log(rng.random((n, d)))) ** (-1.0 / fam.beta)
    if isinstance(fam, Weibull):
        return fam.lam * (-np.log(rng.random((n, d)))) ** (1.0 / fam.beta)
    return rng.gamma(fam.theta, 1.0 / fam.beta, size=(n, d))


def _chunked(n: int, seed: int, fn) -> list:
    n_chunks = (n + CHUNK_ROWS - 1) // CHUNK_ROWS
    out = []
    for c in range(n_chunks):
        m = min(CHUNK_ROWS, n - c * CHUNK_ROWS)
        out.append(fn(m, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))))
    return out


def breiman_sample(model: MeasureModel, n: int, seed: int = 0,
                   nonstandard_alpha=None) -> np.ndarray:
    """Draws of ``R * Z`` with ``P(R > r) = r^{-alpha}``.

    With ``nonstandard_alpha`` the draws are ``R^{1/alpha_i} Z_i`` with
    ``R`` standard 1-Pareto instead.
    """
    d = model.d
    if n < 0:
        raise DimensionMismatch("n must be non-negative")
    if nonstandard_alpha is not None:
        nonstandard_alpha = _pos(nonstandard_alpha, "nonstandard_alpha")
        if nonstandard_alpha.shape != (d,):
            raise DimensionMismatch(f"nonstandard_alpha must have length {d}")

    def chunk(m, rng):
        U = 1.0 - rng.random(m)
        Z = spectral_sample(model.family, m, rng)
        if nonstandard_alpha is None:
            R = U ** (-1.0 / model.alpha)
            return R[:, None] * Z
        return (1.0 / U)[:, None] ** (1.0 / nonstandard_alpha) * Z

    if n == 0:
        return np.zeros((0, d))
    return np.vstack(_chunked(n, seed, chunk))


# ----------------------------------------------------------------------------
# tail function

@dataclass(frozen=True)
class TailValue:
    value: float
    error: float
    method: str


def _check_x(model, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise DimensionMismatch(f"x must have length {model.d}")
    if not np.all(x > 0):
        raise OutOfSupport("x must be positive")
    return x


def _mc_draws(model: MeasureModel, n: int, seed: int) -> np.ndarray:
    """Draws of ``max(Z, 0)**alpha``, reused across evaluation points."""
    parts = _chunked(n, seed, lambda m, rng: spectral_sample(model.family, m, rng))
    Z = np.vstack(parts)
    return np.maximum(Z, 0.0) ** model.alpha


def tail_V_mc(model: MeasureModel, x, n: int = MC_DRAWS, seed: int = 0) -> TailValue:
    """Monte Carlo ``E[max_i (Z_i^+ / x_i)^alpha]`` with its standard error."""
    x = _check_x(model, x)
    W = _mc_draws(model, n, seed)
    v = np.max(W / x ** model.alpha, axis=1)
    return TailValue(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n)), "monte-carlo")


def tail_V(model: MeasureModel, x, *, n_mc: int = MC_DRAWS, seed: int = 0,
           tol: float = 1e-8) -> TailValue:
    """``V(x) = Lambda([0, x]^c)``.

    Closed form for the Fréchet, Weibull and log-normal families; Monte Carlo
    (standard error reported in ``error``) for Gaussian and Gamma.
    """
    fam, alpha = model.family, model.alpha
    x = _check_x(model, x)
    if isinstance(fam, Frechet):
        b = fam.beta
        S = float(np.sum((x / fam.lam) ** (-b)))
        return TailValue(math.gamma(1 - alpha / b) * S ** (alpha / b), 0.0, "closed-form")
    if isinstance(fam, Weibull):
        d = fam.d
        if d > MAX_WEIBULL_DIM:
            raise OutOfRange(f"Weibull tail function limited to d <= {MAX_WEIBULL_DIM}")
        b = fam.beta
        s = (x / fam.lam) ** b
        total = 0.0
        for r in range(1, d + 1):
            sign = 1.0 if r % 2 else -1.0
            for J in combinations(range(d), r):
                total += sign * float(np.sum(s[list(J)])) ** (-alpha / b)
        return TailValue(math.gamma(1 + alpha / b) * total, 0.0, "closed-form")
    if isinstance(fam, LogNormal):
        lim = model.lognormal
        from .pareto import norm_const
        c, err = norm_const(x, lim.params, tol=tol)
        k = math.exp(lim.log_C)
        return TailValue(k * c, k * err, "closed-form")
    return tail_V_mc(model, x, n_mc, seed)


def spectral_alpha_moments(model: MeasureModel, *, n_mc: int = MC_DRAWS,
                           seed: int = 0) -> np.ndarray:
    """``sigma_i^alpha = E[(Z_i^+)^alpha]`` in closed form for every family."""
    fam, a = model.family, model.alpha
    if isinstance(fam, LogNormal):
        return np.exp(a * fam.m + 0.5 * a * a * np.diag(fam.Sigma))
    if isinstance(fam, Frechet):
        return fam.lam ** a * math.gamma(1 - a / fam.beta)
    if isinstance(fam, Weibull):
        return fam.lam ** a * math.gamma(1 + a / fam.beta)
    if isinstance(fam, Gamma):
        return np.exp(special.gammaln(fam.theta + a) - special.gammaln(fam.theta)
                      - a * np.log(fam.beta))
    s = np.diag(fam.Sigma)
    return s ** (a / 2) * 2 ** (a / 2) * math.gamma((a + 1) / 2) / (2 * math.sqrt(math.pi))


def ev_copula(model: MeasureModel, u, *, n_mc: int = MC_DRAWS, seed: int = 0) -> float:
    """Extreme-value copula ``exp(-V(sigma_1 (-log u_1)^{-1/alpha}, ...))``.

    Margins of ``exp(-V)`` are ``exp(-sigma_i^alpha x^{-alpha})``, hence the
    negative exponent.  Monte Carlo families reuse one set of draws for all
    evaluation points, which keeps the estimate exactly max-stable.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (model.d,):
        raise DimensionMismatch(f"u must have length {model.d}")
    if not np.all((u > 0) & (u < 1)):
        raise OutOfRange("u must lie in (0, 1)^d")
    sig = spectral_alpha_moments(model) ** (1.0 / model.alpha)
    x = sig * (-np.log(u)) ** (-1.0 / model.alpha)
    v = tail_V(model, x, n_mc=n_mc, seed=seed).value
    return math.exp(-v)


def empirical_exceedance_ratio(sample, x, k: int) -> float:
    """Share of the ``k`` largest rows (max-norm) whose rescaled value is not ``<= x``.

    Rows are rescaled by the ``(k+1)``-th largest max-norm; the result estimates
    ``V(max(x, 1)) / V(1)``.
    """
    X = np.asarray(sample, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptySample("sample is empty")
    n = X.shape[0]
    x = np.asarray(x, dtype=float)
    if x.shape != (X.shape[1],):
        raise DimensionMismatch("x must match the sample dimension")
    if np.any(x < 0):
        raise OutOfRange("x must be non-negative")
    if not 1 <= k < n:
        raise OutOfRange("k must satisfy 1 <= k < n")
    norms = np.max(X, axis=1)
    order = np.argsort(norms)[::-1]
    u = norms[order[k]]
    top = X[order[:k]] / u
    return float(np.mean(np.any(top > x, axis=1)))
