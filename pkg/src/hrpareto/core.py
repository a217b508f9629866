"""Parameter types, sufficient statistics and transformation algebra.

The natural parameter of the Hüsler-Reiss Pareto family is a pair ``(Q, l)``
living in the Euclidean space ``E = {(A, b) : A = A^T, A 1 = 0}`` with the
Frobenius-plus-dot inner product.  Coordinates on ``E`` are obtained from an
orthonormal (Helmert) basis ``U`` of the hyperplane orthogonal to ``1_d``:
``A <-> U^T A U`` (a symmetric (d-1)x(d-1) matrix, stored as its upper
triangle with off-diagonal entries scaled by sqrt(2)), followed by ``b``.
With this choice the flat dot product of coordinate vectors equals the inner
product on ``E``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import helmert

from .errors import (
    DimensionMismatch,
    ExponentNonPositive,
    KernelViolation,
    NonPositiveBeta,
    NonPositiveComponent,
    NonPositiveOnComplement,
    NotSymmetric,
    ValidationError,
)

SYM_TOL = 1e-10
KERNEL_TOL = 1e-10
EIG_TOL = 1e-12


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def complement_basis(d: int) -> np.ndarray:
    """Orthonormal d x (d-1) basis of ``{v : v . 1_d = 0}`` (read-only)."""
    if d < 2:
        raise ValidationError(f"dimension must be >= 2, got {d}")
    U = helmert(d, full=False).T.copy()
    U.setflags(write=False)
    return U


def centering_matrix(d: int) -> np.ndarray:
    return np.eye(d) - np.full((d, d), 1.0 / d)


def _check_square(Q: np.ndarray) -> int:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"Q must be square, got shape {Q.shape}")
    d = Q.shape[0]
    if d < 2:
        raise ValidationError("dimension must be >= 2")
    return d


def _clean_q(Q) -> np.ndarray:
    """Symmetrize and re-project ``Q`` onto ``{Q 1 = 0}`` within tolerance."""
    Q = np.asarray(Q, dtype=float)
    d = _check_square(Q)
    if not np.all(np.isfinite(Q)):
        raise ValidationError("Q has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(Q))))
    if np.max(np.abs(Q - Q.T)) > SYM_TOL * scale:
        raise NotSymmetric("Q is not symmetric")
    Q = 0.5 * (Q + Q.T)
    if np.max(np.abs(Q.sum(axis=1))) > KERNEL_TOL * scale:
        raise KernelViolation("Q 1_d != 0")
    P = centering_matrix(d)
    Q = P @ Q @ P
    Q = 0.5 * (Q + Q.T)
    U = complement_basis(d)
    eig = np.linalg.eigvalsh(U.T @ Q @ U)
    if eig[0] <= EIG_TOL * scale:
        if eig[0] < -EIG_TOL * scale:
            raise NonPositiveOnComplement(
                f"Q is not positive definite on the complement of 1_d "
                f"(smallest eigenvalue {eig[0]:.3g})")
        # a second null direction: rank(Q) < d-1
        raise KernelViolation("Q has a kernel larger than span(1_d)")
    return Q


def in_parameter_space(Q: np.ndarray, l: np.ndarray) -> bool:
    """Cheap membership test used by optimizers (no cleaning, no raising)."""
    if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(l)):
        return False
    if float(np.sum(l)) >= 0.0:
        return False
    U = complement_basis(Q.shape[0])
    try:
        np.linalg.cholesky(U.T @ Q @ U)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class HrParams:
    """Natural parameter ``(Q, l)`` of a Hüsler-Reiss Pareto law.

    Build through :func:`validate_hr` (or ``HrParams.create``) so that the
    invariants are checked; the arrays are stored read-only.
    """

    Q: np.ndarray
    l: np.ndarray

    @classmethod
    def create(cls, Q, l) -> "HrParams":
        return validate_hr(Q, l)

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def alpha(self) -> float:
        return -float(np.sum(self.l))

    def to_gen(self) -> "GenHrParams":
        """Same law written as a generalized model with constant tail index."""
        a = self.alpha
        return GenHrParams(alpha=_frozen(np.full(self.d, a)),
                           Q=_frozen(self.Q / a ** 2), l=_frozen(self.l / a))

    def to_dict(self) -> dict:
        return {"d": self.d, "Q": self.Q.tolist(), "l": self.l.tolist()}


@dataclass(frozen=True)
class GenHrParams:
    """Parameter ``(alpha, Q, l)`` of the generalized model, ``l . 1 = -1``."""

    alpha: np.ndarray
    Q: np.ndarray
    l: np.ndarray

    @classmethod
    def create(cls, alpha, Q, l) -> "GenHrParams":
        return validate_gen(alpha, Q, l)

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    def is_constant_alpha(self, rtol: float = 1e-12) -> bool:
        return bool(np.ptp(self.alpha) <= rtol * np.max(self.alpha))

    def to_hr(self) -> HrParams:
        """Equivalent standard model; only defined for constant ``alpha``."""
        if not self.is_constant_alpha():
            raise ValidationError("tail indices differ; no standard-model equivalent")
        a = float(np.mean(self.alpha))
        return HrParams(Q=_frozen(a ** 2 * self.Q), l=_frozen(a * self.l))

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha.tolist(), "Q": self.Q.tolist(),
                "l": self.l.tolist()}


def validate_hr(Q, l) -> HrParams:
    """Validate ``(Q, l)`` and return an immutable :class:`HrParams`.

    Raises
    ------
    NotSymmetric, KernelViolation, NonPositiveOnComplement, ExponentNonPositive
    """
    l = np.asarray(l, dtype=float)
    Qc = _clean_q(Q)
    if l.shape != (Qc.shape[0],):
        raise DimensionMismatch(f"l must have length {Qc.shape[0]}, got shape {l.shape}")
    if not np.all(np.isfinite(l)):
        raise ValidationError("l has non-finite entries")
    if np.sum(l) >= 0:
        raise ExponentNonPositive(f"l . 1_d = {np.sum(l):.6g} must be negative")
    return HrParams(Q=_frozen(Qc), l=_frozen(l))


def validate_gen(alpha, Q, l) -> GenHrParams:
    alpha = np.asarray(alpha, dtype=float)
    l = np.asarray(l, dtype=float)
    Qc = _clean_q(Q)
    d = Qc.shape[0]
    if alpha.shape != (d,) or l.shape != (d,):
        raise DimensionMismatch("alpha and l must have length d")
    if not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
        raise NonPositiveComponent("tail indices must be positive")
    if abs(np.sum(l) + 1.0) > 1e-10:
        raise ExponentNonPositive(f"generalized model requires l . 1_d = -1, got {np.sum(l):.12g}")
    return GenHrParams(alpha=_frozen(alpha), Q=_frozen(Qc), l=_frozen(l))


def check_threshold(a, d: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or (d is not None and a.shape[0] != d):
        raise DimensionMismatch(f"threshold must be a vector of length {d}")
    if not np.all(a > 0) or not np.all(np.isfinite(a)):
        raise NonPositiveComponent("threshold entries must be positive and finite")
    return a


def _positive_vector(u, d: int, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (d,):
        raise DimensionMismatch(f"{name} must have length {d}")
    if not np.all(u > 0):
        raise NonPositiveComponent(f"{name} must be positive")
    return u


# ----------------------------------------------------------------------------
# sufficient statistic

@dataclass(frozen=True)
class SufficientStat:
    """``T(z) = (-1/2 c c^T, log z)`` with ``c`` the centered log vector."""

    mat: np.ndarray
    vec: np.ndarray


def sufficient_stat(z) -> SufficientStat:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatch("z must be a vector")
    if not np.all(z > 0):
        raise NonPositiveComponent("all components of z must be positive")
    lz = np.log(z)
    c = lz - lz.mean()
    return SufficientStat(mat=_frozen(-0.5 * np.outer(c, c)), vec=_frozen(lz))


def mean_sufficient_stat(logz: np.ndarray) -> SufficientStat:
    """Sample average of ``T`` from an (n, d) array of log observations."""
    n = logz.shape[0]
    c = logz - logz.mean(axis=1, keepdims=True)
    return SufficientStat(mat=_frozen(-0.5 * (c.T @ c) / n), vec=_frozen(logz.mean(axis=0)))


# ----------------------------------------------------------------------------
# coordinates on E

def param_dim(d: int) -> int:
    return d * (d + 1) // 2


@lru_cache(maxsize=None)
def _triu(d: int):
    return np.triu_indices(d - 1)


def _sym_to_coords(S: np.ndarray) -> np.ndarray:
    k = S.shape[-1]
    iu, ju = _triu(k + 1)
    w = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return S[..., iu, ju] * w


def _coords_to_sym(v: np.ndarray, k: int) -> np.ndarray:
    iu, ju = _triu(k + 1)
    w = np.where(iu == ju, 1.0, 1.0 / np.sqrt(2.0))
    S = np.zeros(v.shape[:-1] + (k, k))
    S[..., iu, ju] = v * w
    S[..., ju, iu] = v * w
    return S


def matrix_coords(A: np.ndarray) -> np.ndarray:
    """Coordinates of a symmetric, zero-row-sum matrix (batched over leading axes)."""
    U = complement_basis(A.shape[-1])
    return _sym_to_coords(U.T @ A @ U)


def coords_matrix(v: np.ndarray, d: int) -> np.ndarray:
    U = complement_basis(d)
    return U @ _coords_to_sym(np.asarray(v, dtype=float), d - 1) @ U.T


def embed(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flat coordinates of ``(A, b)`` in ``E``; ``embed(x) . embed(y) = <x, y>``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.concatenate([matrix_coords(A), b], axis=-1)


def extract(theta: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    m = d * (d - 1) // 2
    if theta.shape[-1] != m + d:
        raise DimensionMismatch(f"expected {m + d} coordinates for d={d}")
    return coords_matrix(theta[..., :m], d), theta[..., m:].copy()


def inner_product(x: tuple, y: tuple) -> float:
    """``<(A, a), (A', a')> = sum A_ij A'_ij + sum a_k a'_k``."""
    return float(np.sum(np.asarray(x[0]) * np.asarray(y[0])) + np.dot(x[1], y[1]))


def center_project(M) -> np.ndarray:
    """Orthogonal projection ``P M P`` onto symmetric matrices annihilating ``1_d``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("M must be square")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T)) > SYM_TOL * scale:
        raise NotSymmetric("M is not symmetric")
    P = centering_matrix(M.shape[0])
    return P @ M @ P


# ----------------------------------------------------------------------------
# transformations

def scale_transform(p: HrParams, a, u) -> tuple[HrParams, np.ndarray]:
    """Law of ``u Z`` for ``Z ~ HRPar_a(Q, l)``: ``HRPar_{ua}(Q, l + Q log u)``."""
    a = check_threshold(a, p.d)
    u = _positive_vector(u, p.d, "u")
    l_new = p.l + p.Q @ np.log(u)
    return HrParams(Q=p.Q, l=_frozen(l_new)), u * a


def power_transform(p: HrParams, a, beta: float) -> tuple[HrParams, np.ndarray]:
    """Law of ``Z**beta``: ``HRPar_{a**beta}(Q / beta**2, l / beta)``."""
    a = check_threshold(a, p.d)
    beta = float(beta)
    if not beta > 0:
        raise NonPositiveBeta(f"beta must be positive, got {beta}")
    return HrParams(Q=_frozen(p.Q / beta ** 2), l=_frozen(p.l / beta)), a ** beta


def standardize(p: HrParams, a) -> HrParams:
    """Parameters of ``Zt`` with ``Z = a * Zt**(1/alpha)``; ``Zt`` has threshold 1 and exponent 1."""
    a = check_threshold(a, p.d)
    alpha = p.alpha
    return HrParams(Q=_frozen(p.Q / alpha ** 2),
                    l=_frozen((p.l - p.Q @ np.log(a)) / alpha))


def gen_scale_transform(p: GenHrParams, a, u) -> tuple[GenHrParams, np.ndarray]:
    a = check_threshold(a, p.d)
    u = _positive_vector(u, p.d, "u")
    l_new = p.l + p.Q @ (p.alpha * np.log(u))
    return GenHrParams(alpha=p.alpha, Q=p.Q, l=_frozen(l_new)), u * a


def gen_power_transform(p: GenHrParams, a, beta) -> tuple[GenHrParams, np.ndarray]:
    a = check_threshold(a, p.d)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p.d,):
        raise DimensionMismatch(f"beta must have length {p.d}")
    if not np.all(beta > 0):
        raise NonPositiveBeta("beta must be positive")
    return GenHrParams(alpha=_frozen(p.alpha / beta), Q=p.Q, l=p.l), a ** beta


def gen_transforms(p: GenHrParams, a, u, beta) -> tuple[GenHrParams, np.ndarray]:
    """Law of ``(u Z)**beta``: scaling by ``u`` followed by powers ``beta``."""
    q, a1 = gen_scale_transform(p, a, u)
    return gen_power_transform(q, a1, beta)


def gen_reduce(p: GenHrParams, a) -> tuple[HrParams, np.ndarray]:
    """Reduction ``Z = a * Zt**(1/alpha)`` with ``Zt ~ HRPar_1(Q, l - Q D_alpha log a)``.

    Returns the standard-model parameters of ``Zt`` (exponent 1) and the
    componentwise back-transform exponents ``1/alpha``.
    """
    a = check_threshold(a, p.d)
    l_std = p.l - p.Q @ (p.alpha * np.log(a))
    return HrParams(Q=p.Q, l=_frozen(l_std)), 1.0 / p.alpha
