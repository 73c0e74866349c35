"""Proximal operators for the nonconvex sparsity penalties.

The scalar building block is prox(a) = argmin_x lam*|x|^q + (x - a)^2 / 2 with
q in [0, 1). Its solution is a thresholding map with a jump: below the
threshold kappa(lam, q) the minimizer is 0, above it the minimizer is the
largest positive stationary point, which is never smaller than c(lam, q).
Entry-wise application gives the l_q penalty path; applying the scalar map to
row norms and rescaling gives the l_{2,p} (whole-row) path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

_ROOT_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ProxParams:
    """Penalty weight and exponent for the scalar thresholding map.

    lam is the rescaled weight (penalty coefficient divided by the quadratic
    curvature); q is the exponent, in [0, 1). The row-wise path passes its
    exponent p through the same slot.
    """

    lam: float
    q: float

    def __post_init__(self):
        if not (self.lam >= 0.0):
            raise ValueError(f"penalty weight must be nonnegative, got {self.lam}")
        if not (0.0 <= self.q < 1.0):
            raise ValueError(f"exponent must lie in [0, 1), got {self.q}")


def c_value(lam: float, q: float) -> float:
    """Magnitude the minimizer jumps to at the threshold: (2 lam (1-q))^(1/(2-q)).

    Degenerates to 0 when lam = 0 (the prox is the identity upstream).
    """
    return (2.0 * lam * (1.0 - q)) ** (1.0 / (2.0 - q))


def kappa_value(lam: float, q: float) -> float:
    """Decision threshold (2-q) lam^(1/(2-q)) (2(1-q))^((q-1)/(2-q)).

    This is the tie point where the zero solution and the jump target c(lam, q)
    reach the same objective value; algebraically it equals c + lam*q*c^(q-1),
    so the stationarity residual at c is exactly kappa - a. At q = 0 it
    reduces to the hard threshold sqrt(2 lam), where c and kappa coincide.
    """
    return (2.0 - q) * lam ** (1.0 / (2.0 - q)) * (2.0 * (1.0 - q)) ** ((q - 1.0) / (2.0 - q))


def _residual(x: float, a: float, lam: float, q: float) -> float:
    return x - a + lam * q * x ** (q - 1.0)


def varpi_root(a: float, lam: float, q: float) -> float:
    """Largest positive root of x - a + lam*q*x^(q-1) = 0.

    Valid for q in (0, 1) and a above the threshold (two stationary points
    exist; the larger one is the minimizer). Newton from x0 = a is monotone
    for this convex residual; iterates that leave (0, a] or fail to converge
    fall back to bisection on [c(lam, q), a].
    """
    if not (0.0 < q < 1.0):
        raise ValueError(f"varpi_root needs q in (0, 1), got {q}")
    if not (a > 0.0):
        raise ValueError(f"varpi_root needs a > 0, got {a}")

    x = a
    step_tol = 1e-12 * max(1.0, a)
    converged = False
    for _ in range(100):
        h = _residual(x, a, lam, q)
        hp = 1.0 + lam * q * (q - 1.0) * x ** (q - 2.0)
        if hp <= 0.0:
            break
        x_next = x - h / hp
        if not (0.0 < x_next <= a):
            break
        if abs(x_next - x) <= step_tol:
            x = x_next
            converged = True
            break
        x = x_next

    if not converged or abs(_residual(x, a, lam, q)) > _ROOT_RESIDUAL_TOL:
        x = _bisect_root(a, lam, q)
    if abs(_residual(x, a, lam, q)) > _ROOT_RESIDUAL_TOL:
        raise NumericalError(
            f"root solve failed for a={a}, lam={lam}, q={q}: residual "
            f"{_residual(x, a, lam, q):.3e}"
        )
    return x


def _bisect_root(a: float, lam: float, q: float) -> float:
    # the residual is negative at c and positive at a, with exactly the
    # largest root in between
    lo = c_value(lam, q)
    hi = a
    if _residual(lo, a, lam, q) >= 0.0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _residual(mid, a, lam, q) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, a):
            break
    return hi


def prox_scalar(a: float, params: ProxParams) -> float:
    """Thresholding map argmin_x lam*|x|^q + (x - a)^2 / 2.

    Returns 0 at or below the threshold (ties resolve to 0, favoring
    sparsity); above it returns sgn(a) times the largest stationary point,
    which for q = 0 is a itself. lam = 0 short-circuits to the identity.
    """
    lam, q = params.lam, params.q
    if lam == 0.0:
        return float(a)
    if abs(a) <= kappa_value(lam, q):
        return 0.0
    if q == 0.0:
        return float(a)
    return math.copysign(varpi_root(abs(a), lam, q), a)


def prox_elementwise(A: np.ndarray, params: ProxParams) -> np.ndarray:
    """Apply prox_scalar to every entry independently."""
    A = np.asarray(A, dtype=float)
    if params.lam == 0.0:
        return A.copy()
    if params.q == 0.0:
        return np.where(np.abs(A) > kappa_value(params.lam, params.q), A, 0.0)
    out = np.empty_like(A)
    flat_in = A.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = prox_scalar(float(flat_in[i]), params)
    return out


def prox_rowwise(B: np.ndarray, params: ProxParams) -> np.ndarray:
    """Shrink or zero whole rows: each row becomes prox(||b||) * b / ||b||.

    Rows are never rotated; zero rows stay zero.
    """
    B = np.asarray(B, dtype=float)
    if params.lam == 0.0:
        return B.copy()
    out = np.zeros_like(B)
    for i in range(B.shape[0]):
        nrm = float(np.linalg.norm(B[i]))
        if nrm == 0.0:
            continue
        shrunk = prox_scalar(nrm, params)
        if shrunk != 0.0:
            out[i] = (shrunk / nrm) * B[i]
    return out


def lq_penalty(A: np.ndarray, q: float) -> float:
    """Element-wise penalty sum |a_ij|^q; q = 0 counts nonzero entries."""
    A = np.asarray(A, dtype=float)
    if q == 0.0:
        return float(np.count_nonzero(A))
    return float(np.sum(np.abs(A) ** q))


def l2p_penalty(A: np.ndarray, p: float) -> float:
    """Row-wise penalty sum ||row_i||_2^p; p = 0 counts nonzero rows."""
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    if p == 0.0:
        return float(np.count_nonzero(norms))
    return float(np.sum(norms**p))
