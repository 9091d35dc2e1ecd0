"""Instrumented matrix decompositions and triangular solvers.

Classical Gram-Schmidt QR, Cholesky and LDL factorizations of small
dense complex matrices, each threading an :class:`~mimodet.kernels.OpCount`
so the executed real-multiplication totals can be compared against the
closed-form complexity model. Counts are structure-only: two matrices of
the same size always produce identical tallies.

Measured totals (exact for every U):

* Gram-Schmidt QR : U^2 (4U + 2) real mults, U sqrts, U reciprocals
* Cholesky        : (2U^3 + 3U^2 - 5U) / 3, U sqrts, U reciprocals
* LDL             : (2U^3 + 12U^2 - 14U) / 3, no sqrts, U reciprocals

The LDL routine keeps its pivots in complex form and caches the
D-weighted columns, so every product it executes is a full complex
multiplication; that is what puts its total above Cholesky's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import (
    OpCount,
    cmul,
    cmul_vec,
    counted_recip,
    counted_sqrt,
    csub,
    dot_h,
    dot_u,
    norm_sq,
    rcmul,
    rcmul_vec,
    sub_vec,
)

PIVOT_RTOL = 1e-12


class DecompositionError(ValueError):
    """Base class for factorization and solver failures."""


class NearSingularError(DecompositionError):
    """A Gram-Schmidt column collapsed below the singularity tolerance."""


class NotPositiveDefiniteError(DecompositionError):
    """A Cholesky/LDL pivot was not positive."""


class SingularTriangularError(DecompositionError):
    """A triangular solve hit a (near-)zero diagonal entry."""


class SingularMatrixError(DecompositionError):
    """Gauss-Jordan elimination found no usable pivot."""


@dataclass
class QrFactors:
    q: np.ndarray
    r: np.ndarray


@dataclass
class CholFactor:
    l: np.ndarray


@dataclass
class LdlFactors:
    l: np.ndarray
    d: np.ndarray  # real positive diagonal of D


def _as_square_complex(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _require_hermitian(a: np.ndarray) -> None:
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(a - a.conj().T).max() > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian within 1e-12 relative")


def gram_schmidt_qr(a: np.ndarray, acc: OpCount) -> QrFactors:
    """Classical Gram-Schmidt QR of a square complex matrix.

    Column i is normalized by its Euclidean norm (one square root and
    one reciprocal per column), then removed from all later columns.
    Raises :class:`NearSingularError` if a column norm falls below
    1e-12 times the largest input magnitude.
    """
    a = _as_square_complex(a)
    n = a.shape[0]
    tol = PIVOT_RTOL * max(np.abs(a).max(), 1e-300)
    q = a.copy()
    r = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        nrm2 = norm_sq(q[:, i], acc)
        nrm = counted_sqrt(nrm2, acc)
        if nrm <= tol:
            raise NearSingularError(f"column {i} collapsed during orthogonalization")
        r[i, i] = nrm
        inv = counted_recip(nrm, acc)
        q[:, i] = rcmul_vec(inv, q[:, i], acc)
        for j in range(i + 1, n):
            rij = dot_h(q[:, i], q[:, j], acc)
            r[i, j] = rij
            q[:, j] = sub_vec(q[:, j], cmul_vec(rij, q[:, i], acc), acc)
    return QrFactors(q, r)


def cholesky(a: np.ndarray, acc: OpCount) -> CholFactor:
    """Cholesky factor L with A = L L^H for Hermitian positive-definite A.

    Raises :class:`NotPositiveDefiniteError` on a non-positive pivot.
    """
    a = _as_square_complex(a)
    _require_hermitian(a)
    n = a.shape[0]
    tol = PIVOT_RTOL * max(np.abs(a).max(), 1e-300)
    l = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        piv = a[i, i].real - norm_sq(l[i, :i], acc)
        acc.sub += 1
        if piv <= tol:
            raise NotPositiveDefiniteError(f"pivot {i} is not positive ({piv:.3e})")
        lii = counted_sqrt(piv, acc)
        l[i, i] = lii
        inv = counted_recip(lii, acc)
        for k in range(i + 1, n):
            s = dot_h(l[i, :i], l[k, :i], acc)
            l[k, i] = rcmul(inv, csub(a[k, i], s, acc), acc)
    return CholFactor(l)


def ldl(a: np.ndarray, acc: OpCount) -> LdlFactors:
    """LDL^H factorization with unit lower-triangular L and real D > 0.

    Pivots stay complex in the working state and the D-weighted columns
    W = L D are cached, so each inner-product term, column scaling and
    W fill is one complex multiplication. Raises
    :class:`NotPositiveDefiniteError` on a non-positive pivot.
    """
    a = _as_square_complex(a)
    _require_hermitian(a)
    n = a.shape[0]
    tol = PIVOT_RTOL * max(np.abs(a).max(), 1e-300)
    l = np.eye(n, dtype=np.complex128)
    w = np.zeros((n, n), dtype=np.complex128)
    d = np.zeros(n, dtype=np.complex128)
    for j in range(n):
        dj = csub(a[j, j], dot_h(w[j, :j], l[j, :j], acc), acc)
        if dj.real <= tol:
            raise NotPositiveDefiniteError(f"pivot {j} is not positive ({dj.real:.3e})")
        d[j] = dj
        inv = counted_recip(dj, acc)
        for k in range(j + 1, n):
            num = csub(a[k, j], dot_h(w[j, :j], l[k, :j], acc), acc)
            lkj = cmul(num, inv, acc)
            l[k, j] = lkj
            w[k, j] = cmul(lkj, dj, acc)
    return LdlFactors(l, d.real.copy())


def forward_sub(l: np.ndarray, b: np.ndarray, acc: OpCount) -> np.ndarray:
    """Solve L z = b for lower-triangular L by forward substitution."""
    l = _as_square_complex(l)
    n = l.shape[0]
    tol = PIVOT_RTOL * max(np.abs(l).max(), 1e-300)
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        if abs(l[i, i]) <= tol:
            raise SingularTriangularError(f"zero diagonal at row {i}")
        s = csub(b[i], dot_u(l[i, :i], x[:i], acc), acc)
        x[i] = cmul(s, counted_recip(l[i, i], acc), acc)
    return x


def backward_sub(u: np.ndarray, b: np.ndarray, acc: OpCount) -> np.ndarray:
    """Solve U x = b for upper-triangular U by backward substitution."""
    u = _as_square_complex(u)
    n = u.shape[0]
    tol = PIVOT_RTOL * max(np.abs(u).max(), 1e-300)
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        if abs(u[i, i]) <= tol:
            raise SingularTriangularError(f"zero diagonal at row {i}")
        s = csub(b[i], dot_u(u[i, i + 1 :], x[i + 1 :], acc), acc)
        x[i] = cmul(s, counted_recip(u[i, i], acc), acc)
    return x


def invert_direct(a: np.ndarray) -> np.ndarray:
    """Uncounted Gauss-Jordan inverse with partial pivoting (test oracle)."""
    a = _as_square_complex(a)
    n = a.shape[0]
    tol = PIVOT_RTOL * max(np.abs(a).max(), 1e-300)
    aug = np.hstack([a.copy(), np.eye(n, dtype=np.complex128)])
    for col in range(n):
        p = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[p, col]) <= tol:
            raise SingularMatrixError(f"no pivot in column {col}")
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return np.ascontiguousarray(aug[:, n:])
