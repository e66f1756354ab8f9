"""Dense symmetric linear algebra over lattice sites.

Matrices are plain ``numpy`` arrays.  Deleting the row and column of a site
gives a :class:`HattedMatrix`, which remembers the deleted site.  Floating
point factorizations go through LAPACK (``scipy.linalg``); determinants of
integer matrices use exact fraction-free elimination.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

#: A pivot counts as zero when ``|pivot| <= PIVOT_RTOL * max|diag|``.
PIVOT_RTOL = 1e-12


class SingularMatrixError(ArithmeticError):
    pass


class NotPositiveDefiniteError(ArithmeticError):
    pass


class HattedMatrix(np.ndarray):
    """A ``(V-1) x (V-1)`` array that records which site was deleted."""

    deleted_site: int

    def __new__(cls, values, deleted_site: int):
        obj = np.asarray(values, dtype=float).view(cls)
        obj.deleted_site = int(deleted_site)
        return obj

    def __array_finalize__(self, obj):
        self.deleted_site = getattr(obj, "deleted_site", -1)


def hat_indices(V: int, x0: int) -> np.ndarray:
    """Sites other than ``x0`` in increasing order (row order of hatted matrices)."""
    return np.delete(np.arange(V), x0)


def delete_site(A: np.ndarray, x0: int) -> HattedMatrix:
    A = np.asarray(A)
    V = A.shape[0]
    if A.ndim != 2 or A.shape[1] != V:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not 0 <= x0 < V:
        raise IndexError(f"site {x0} out of range for a {V}x{V} matrix")
    keep = hat_indices(V, x0)
    return HattedMatrix(A[np.ix_(keep, keep)], x0)


def _scale(A: np.ndarray) -> float:
    s = float(np.max(np.abs(np.diag(A)))) if A.size else 0.0
    if s == 0.0 and A.size:
        s = float(np.max(np.abs(A)))
    return s if s > 0.0 else 1.0


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with the scale-aware pivot test.

    Raises :class:`NotPositiveDefiniteError` if LAPACK fails or any pivot
    ``L_ii**2`` is at or below ``PIVOT_RTOL`` times the largest diagonal entry.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, 0))
    try:
        low = sla.cholesky(A, lower=True, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    pivots = np.diag(low) ** 2
    if np.min(pivots) <= PIVOT_RTOL * _scale(A):
        raise NotPositiveDefiniteError(f"pivot {np.min(pivots):.3e} below tolerance")
    return low


def is_positive_definite(A: np.ndarray) -> bool:
    try:
        cholesky(A)
    except NotPositiveDefiniteError:
        return False
    return True


def logdet(A: np.ndarray) -> float:
    """``ln det A`` for positive definite ``A``, from the Cholesky factor."""
    low = cholesky(A)
    return 2.0 * float(np.sum(np.log(np.diag(low))))


def slogdet(A: np.ndarray) -> tuple[float, float]:
    """Sign and log-modulus of ``det A`` for any square ``A`` (LU based)."""
    sign, ld = np.linalg.slogdet(np.asarray(A, dtype=float))
    return float(sign), float(ld)


def inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a nondegenerate matrix; symmetric input gives symmetric output."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
        lu, piv = sla.lu_factor(A, check_finite=True)
    if n and np.min(np.abs(np.diag(lu))) <= PIVOT_RTOL * _scale(A):
        raise SingularMatrixError("matrix is numerically singular")
    inv = sla.lu_solve((lu, piv), np.eye(n))
    if np.array_equal(A, A.T):
        inv = 0.5 * (inv + inv.T)
    return inv


def hat_inverse_from_full(Ainv: np.ndarray, x0: int) -> HattedMatrix:
    """Inverse of the ``x0``-deleted matrix from the inverse of the full one.

    Uses the rank-one correction
    ``(A_hat^-1)_xy = (A^-1)_xy - (A^-1)_{x x0} (A^-1)_{y x0} / (A^-1)_{x0 x0}``.
    """
    Ainv = np.asarray(Ainv, dtype=float)
    pivot = Ainv[x0, x0]
    if abs(pivot) <= PIVOT_RTOL * _scale(Ainv):
        raise ZeroDivisionError("(A^-1)_{x0 x0} vanishes")
    col = Ainv[:, x0]
    corrected = Ainv - np.outer(col, col) / pivot
    return delete_site(corrected, x0)


def int_det(M) -> int:
    """Exact determinant of an integer matrix by Bareiss elimination."""
    a = [[int(v) for v in row] for row in np.asarray(M).tolist()]
    n = len(a)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        akk = a[k][k]
        for i in range(k + 1, n):
            aik = a[i][k]
            row_i, row_k = a[i], a[k]
            for j in range(k + 1, n):
                # exact: Bareiss guarantees divisibility
                row_i[j] = (row_i[j] * akk - aik * row_k[j]) // prev
            row_i[k] = 0
        prev = akk
    return sign * a[n - 1][n - 1]


@dataclass
class AuxReport:
    """Relative residuals of the site-deletion identities for one matrix."""

    residuals: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.residuals.values())


def _rel(lhs, rhs) -> float:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    diff = float(np.max(np.abs(lhs - rhs)))
    return diff / scale if scale > 0 else diff


def verify_aux_identities(A: np.ndarray, x0: int, c: float, tolerance: float = 1e-9) -> AuxReport:
    """Check the deletion/splitting identities for ``A`` and ``A_tilde = A + c e_x0 e_x0^T``.

    Residuals reported (all relative):

    ``hat_inverse``       hatted inverse from the full inverse vs. direct inversion;
    ``det_ratio``         ``det A = det A_hat / (A^-1)_{x0x0}``;
    ``rank_one_inverse``  ``A^-1 = At^-1 + c/(1 - c At^-1_{x0x0}) At^-1_{.x0} At^-1_{.x0}^T``;
    ``x0_schur``          ``1/(A^-1)_{x0x0} = -c + 1/(At^-1)_{x0x0}`` and equality of the
                          normalized ``x0`` columns;
    ``det_split``         ``det A = det At - c det A_hat``.

    Determinant identities are compared after dividing by ``det A_hat`` so
    that large matrices do not overflow.
    """
    A = np.asarray(A, dtype=float)
    At = A.copy()
    At[x0, x0] += c
    Ahat = delete_site(A, x0)
    Ainv = inverse(A)
    Atinv = inverse(At)
    Ahat_inv = inverse(Ahat)

    s_hat, l_hat = slogdet(Ahat)
    s_a, l_a = slogdet(A)
    s_t, l_t = slogdet(At)
    if s_hat == 0 or s_a == 0 or s_t == 0:
        raise SingularMatrixError("singular intermediate matrix")
    det_a_over_hat = s_a * s_hat * np.exp(l_a - l_hat)
    det_t_over_hat = s_t * s_hat * np.exp(l_t - l_hat)

    rep = AuxReport(tolerance=tolerance)
    rep.residuals["hat_inverse"] = _rel(hat_inverse_from_full(Ainv, x0), Ahat_inv)
    rep.residuals["det_ratio"] = _rel(det_a_over_hat, 1.0 / Ainv[x0, x0])
    col = Atinv[:, x0]
    rebuilt = Atinv + c / (1.0 - c * Atinv[x0, x0]) * np.outer(col, col)
    rep.residuals["rank_one_inverse"] = _rel(Ainv, rebuilt)
    rep.residuals["x0_schur"] = max(
        _rel(1.0 / Ainv[x0, x0], -c + 1.0 / Atinv[x0, x0]),
        _rel(Ainv[:, x0] / Ainv[x0, x0], Atinv[:, x0] / Atinv[x0, x0]),
    )
    rep.residuals["det_split"] = _rel(det_a_over_hat, det_t_over_hat - c)
    return rep
