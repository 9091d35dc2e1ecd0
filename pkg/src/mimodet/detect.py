"""Uplink symbol detectors.

Exact-inversion linear detection (ZF and MMSE through QR, Cholesky, LDL
or a direct-inverse oracle), the three approximate inversion-based
detectors (truncated Neumann series, Gauss-Seidel sweeps, conjugate
gradient), the ADMM box-constrained detector, and the interference-free
SIMO lower bound.

Every detector solves a system against the regularized Gramian
G = H^H H + reg*I with right-hand side x_mf = H^H y, and reports the
operations it executed. The matched-filter product (4NU real mults) is
charged where it is computed, separately from the per-iteration work,
so inversion-only comparisons remain possible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import phy
from .decomp import (
    SingularTriangularError,
    backward_sub,
    cholesky,
    forward_sub,
    gram_schmidt_qr,
    invert_direct,
    ldl,
)
from .kernels import (
    OpCount,
    add_vec,
    cmul,
    counted_recip,
    csub,
    dot_h,
    dot_u,
    dscale_vec,
    hermitian,
    matmul,
    norm_sq,
    rcmul,
    rcmul_vec,
    sub_vec,
)


class DetectError(RuntimeError):
    """Raised when a detector cannot produce an estimate."""


class CgBreakdownError(DetectError):
    """Conjugate gradient met a non-positive curvature direction."""


class Kind(enum.Enum):
    ZF = "zf"
    MMSE = "mmse"
    NSA = "nsa"
    GS = "gs"
    CG = "cg"
    ADMIN = "admin"
    SIMO = "simo"


class Backend(enum.Enum):
    QR = "qr"
    CHOLESKY = "chol"
    LDL = "ldl"
    DIRECT = "direct"


_EXACT = (Kind.ZF, Kind.MMSE)
_ITERATIVE = (Kind.NSA, Kind.GS, Kind.CG, Kind.ADMIN)


@dataclass(frozen=True)
class DetectorSpec:
    """Algorithm selector: kind, backend (exact kinds), iterations, beta.

    ``backend`` is ignored for NSA/GS/CG, ``iterations`` for ZF/MMSE.
    ADMIN regularizes with ``beta`` when given, else
    ``beta_scale * sigma2``.
    """

    kind: Kind
    backend: Backend = Backend.CHOLESKY
    iterations: int = 1
    beta: float | None = None
    beta_scale: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.beta_scale <= 0:
            raise ValueError("beta_scale must be positive")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def params(self) -> str:
        if self.kind in _EXACT:
            return f"backend={self.backend.value}"
        if self.kind is Kind.ADMIN:
            beta = "sigma2" if self.beta is None and self.beta_scale == 1.0 else (
                f"{self.beta_scale!r}*sigma2" if self.beta is None else repr(self.beta)
            )
            return f"t={self.iterations},beta={beta}"
        if self.kind is Kind.SIMO:
            return "mrc"
        return f"t={self.iterations}"

    def admin_beta(self, sigma2: float) -> float:
        beta = self.beta if self.beta is not None else self.beta_scale * sigma2
        if beta <= 0:
            raise ValueError("ADMIN needs beta > 0 (sigma2 = 0 with no explicit beta)")
        return beta


@dataclass
class DetectResult:
    """Soft symbol estimates plus the operation tally that produced them."""

    x_soft: np.ndarray
    ops: OpCount
    diverged: bool = False


def matched_filter(h: np.ndarray, y: np.ndarray, acc: OpCount) -> np.ndarray:
    """x_mf = H^H y, the right-hand side of every Gramian system."""
    n, u = h.shape
    if y.shape[0] != n:
        raise ValueError(f"matched_filter: H is {h.shape} but y has length {y.shape[0]}")
    out = np.empty(u, dtype=np.complex128)
    for i in range(u):
        out[i] = dot_h(h[:, i], y, acc)
    return out


def gramian(h: np.ndarray, reg: float, acc: OpCount) -> np.ndarray:
    """G = H^H H + reg*I, computed on the upper triangle and mirrored.

    The diagonal is forced real, so the result is Hermitian to machine
    precision and positive definite whenever reg > 0.
    """
    n, u = h.shape
    if n < u:
        raise ValueError(f"gramian needs N >= U, got {n} < {u}")
    if reg < 0:
        raise ValueError("regularization must be non-negative")
    g = np.empty((u, u), dtype=np.complex128)
    for i in range(u):
        g[i, i] = dot_h(h[:, i], h[:, i], acc).real + reg
        acc.add += 1
        for j in range(i + 1, u):
            v = dot_h(h[:, i], h[:, j], acc)
            g[i, j] = v
            g[j, i] = v.conjugate()
    return g


def exact_solve(g: np.ndarray, b: np.ndarray, backend: Backend, acc: OpCount) -> np.ndarray:
    """Solve G x = b through the chosen decomposition backend."""
    if backend is Backend.QR:
        f = gram_schmidt_qr(g, acc)
        return backward_sub(f.r, matmul(hermitian(f.q), b, acc), acc)
    if backend is Backend.CHOLESKY:
        f = cholesky(g, acc)
        return backward_sub(hermitian(f.l), forward_sub(f.l, b, acc), acc)
    if backend is Backend.LDL:
        f = ldl(g, acc)
        z = forward_sub(f.l, b, acc)
        z = _apply_d_inverse(f.d, z, acc)
        return backward_sub(hermitian(f.l), z, acc)
    if backend is Backend.DIRECT:
        return invert_direct(g) @ b  # oracle path, deliberately uncounted
    raise ValueError(f"unknown backend {backend}")


def _apply_d_inverse(d: np.ndarray, z: np.ndarray, acc: OpCount) -> np.ndarray:
    d_inv = np.empty_like(d)
    for i in range(d.shape[0]):
        d_inv[i] = counted_recip(d[i], acc)
    return dscale_vec(d_inv, z, acc)


def detect_linear(
    h: np.ndarray, y: np.ndarray, sigma2: float, spec: DetectorSpec
) -> DetectResult:
    """ZF or MMSE estimate G^-1 H^H y via the backend named in ``spec``."""
    if spec.kind not in _EXACT:
        raise ValueError(f"detect_linear cannot run {spec.kind}")
    acc = OpCount()
    reg = sigma2 if spec.kind is Kind.MMSE else 0.0
    g = gramian(h, reg, acc)
    x_mf = matched_filter(h, y, acc)
    return DetectResult(exact_solve(g, x_mf, spec.backend, acc), acc)


def nsa_solve(
    g: np.ndarray, x_mf: np.ndarray, t: int, acc: OpCount
) -> tuple[np.ndarray, bool]:
    """Truncated Neumann series applied to x_mf, terms 0 .. t-1.

    Splits G into its diagonal X and off-diagonal E and accumulates
    u_{k+1} = -X^-1 (E u_k) starting from u_0 = X^-1 x_mf. Sets the
    divergence flag when the final term outgrew the previous one; the
    estimate is still returned.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    u = g.shape[0]
    d_inv = np.empty(u)
    for i in range(u):
        d_inv[i] = counted_recip(g[i, i].real, acc)
    e = g.copy()
    np.fill_diagonal(e, 0.0)
    term = dscale_vec(d_inv, x_mf, acc)
    total = term.copy()
    diverged = False
    for k in range(1, t):
        prev = float(np.linalg.norm(term))
        term = -dscale_vec(d_inv, matmul(e, term, acc), acc)
        total = add_vec(total, term, acc)
        if k == t - 1 and float(np.linalg.norm(term)) > prev:
            diverged = True
    return total, diverged


def detect_nsa(h: np.ndarray, y: np.ndarray, sigma2: float, t: int) -> DetectResult:
    acc = OpCount()
    g = gramian(h, sigma2, acc)
    x_mf = matched_filter(h, y, acc)
    x, diverged = nsa_solve(g, x_mf, t, acc)
    return DetectResult(x, acc, diverged)


def gs_solve(
    g: np.ndarray,
    x_mf: np.ndarray,
    t: int,
    acc: OpCount,
    diag_init: bool = False,
) -> np.ndarray:
    """t Gauss-Seidel sweeps on G x = x_mf.

    (D + L) is applied by forward substitution inside each sweep, never
    formed. The default start is x = 0, so sweep 1 returns
    (D + L)^-1 x_mf; ``diag_init`` switches to x = X^-1 x_mf.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    u = g.shape[0]
    tol = 1e-12 * max(np.abs(g).max(), 1e-300)
    d_inv = np.empty(u)
    for i in range(u):
        if abs(g[i, i]) <= tol:
            raise SingularTriangularError(f"zero Gramian diagonal at {i}")
        d_inv[i] = counted_recip(g[i, i].real, acc)
    x = dscale_vec(d_inv, x_mf, acc) if diag_init else np.zeros(u, dtype=np.complex128)
    for _ in range(t):
        for i in range(u):
            s = csub(x_mf[i], dot_u(g[i, :i], x[:i], acc), acc)
            s = csub(s, dot_u(g[i, i + 1 :], x[i + 1 :], acc), acc)
            x[i] = rcmul(d_inv[i], s, acc)
    return x


def detect_gs(
    h: np.ndarray, y: np.ndarray, sigma2: float, t: int, diag_init: bool = False
) -> DetectResult:
    acc = OpCount()
    g = gramian(h, sigma2, acc)
    x_mf = matched_filter(h, y, acc)
    return DetectResult(gs_solve(g, x_mf, t, acc, diag_init), acc)


def cg_solve(g: np.ndarray, x_mf: np.ndarray, t: int, acc: OpCount) -> np.ndarray:
    """t conjugate-gradient steps on G x = x_mf from x = 0, r = p = x_mf."""
    if t < 1:
        raise ValueError("t must be >= 1")
    u = g.shape[0]
    x = np.zeros(u, dtype=np.complex128)
    r = x_mf.copy()
    p = x_mf.copy()
    rs = norm_sq(r, acc)
    for _ in range(t):
        if rs == 0.0:
            break
        gp = matmul(g, p, acc)
        curvature = dot_h(p, gp, acc).real
        if curvature <= 0.0:
            raise CgBreakdownError("p^H G p <= 0; Gramian is not positive definite")
        alpha = rs * counted_recip(curvature, acc)
        acc.real_mul += 1
        x = add_vec(x, rcmul_vec(alpha, p, acc), acc)
        r = sub_vec(r, rcmul_vec(alpha, gp, acc), acc)
        rs_new = norm_sq(r, acc)
        beta = rs_new * counted_recip(rs, acc)
        acc.real_mul += 1
        p = add_vec(r, rcmul_vec(beta, p, acc), acc)
        rs = rs_new
    return x


def detect_cg(h: np.ndarray, y: np.ndarray, sigma2: float, t: int) -> DetectResult:
    acc = OpCount()
    g = gramian(h, sigma2, acc)
    x_mf = matched_filter(h, y, acc)
    return DetectResult(cg_solve(g, x_mf, t, acc), acc)


def _clip_box(v: np.ndarray, box: float) -> np.ndarray:
    return np.clip(v.real, -box, box) + 1j * np.clip(v.imag, -box, box)


def admin_solve(
    g_admin: np.ndarray,
    x_mf: np.ndarray,
    t: int,
    beta: float,
    box: float,
    acc: OpCount,
    trace: list | None = None,
) -> np.ndarray:
    """ADMM loop for the box-constrained detector.

    Factors G = H^H H + beta*I once with LDL and reuses the factors for
    every x-solve. Scaled updates with unit step: z clips x + lambda to
    the per-axis box, lambda accumulates x - z. With z and lambda
    starting at zero the first solve consumes x_mf unchanged, which is
    exactly the MMSE estimate with sigma2 replaced by beta. ``trace``,
    when given, collects (x, z, lambda) after each iteration.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    f = ldl(g_admin, acc)
    lh = hermitian(f.l)

    def solve(rhs: np.ndarray) -> np.ndarray:
        z = forward_sub(f.l, rhs, acc)
        z = _apply_d_inverse(f.d, z, acc)
        return backward_sub(lh, z, acc)

    x = solve(x_mf)
    z = _clip_box(x, box)
    lam = sub_vec(x, z, acc)
    if trace is not None:
        trace.append((x.copy(), z.copy(), lam.copy()))
    for _ in range(1, t):
        rhs = add_vec(x_mf, rcmul_vec(beta, sub_vec(z, lam, acc), acc), acc)
        x = solve(rhs)
        z = _clip_box(add_vec(x, lam, acc), box)
        lam = add_vec(lam, sub_vec(x, z, acc), acc)
        if trace is not None:
            trace.append((x.copy(), z.copy(), lam.copy()))
    return x


def detect_admin(
    h: np.ndarray,
    y: np.ndarray,
    sigma2: float,
    t: int,
    beta: float,
    box: float,
) -> DetectResult:
    acc = OpCount()
    g = gramian(h, beta, acc)
    x_mf = matched_filter(h, y, acc)
    return DetectResult(admin_solve(g, x_mf, t, beta, box, acc), acc)


def simo_bound(
    n: int,
    constellation: phy.Constellation,
    snr_db: float,
    trials: int,
    seed: int,
) -> float:
    """Single-user N-antenna matched-filter BER at the given SNR.

    Per trial: h ~ CN(0, I_N), one symbol, y = h s + noise with
    sigma2 = 1 / snr_lin (the U = 1 case of the package convention),
    detected by slicing h^H y / ||h||^2. This is the interference-free
    lower bound on any multiuser detector's error rate.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    sigma2 = phy.sigma2_from_snr(snr_db, 1)
    rng = phy.substream(seed, 0)
    b = constellation.bits_per_symbol
    bits = rng.integers(0, 2, size=trials * b, dtype=np.uint8)
    s = phy.modulate(bits, constellation)
    g = rng.standard_normal((2, trials, n))
    h = (g[0] + 1j * g[1]) / np.sqrt(2.0)
    g = rng.standard_normal((2, trials, n))
    noise = np.sqrt(sigma2 / 2.0) * (g[0] + 1j * g[1])
    y = h * s[:, None] + noise
    z = np.einsum("ij,ij->i", h.conj(), y) / np.einsum("ij,ij->i", h.conj(), h).real
    _, bits_hat = phy.hard_slice(z, constellation)
    return float(np.count_nonzero(bits_hat != bits)) / (trials * b)
