"""Orthonormal-frame primitives and the conjugate-gradient inner solver.

Points live on the manifold {W in R^{d x m} : W^T W = I}. Tangent vectors at W
are the matrices xi with sym(W^T xi) = 0. The smooth objective minimized here
is the per-gateway projection subproblem

    g(W) = data_const - Tr(W^T S W)
           + (beta1/2)||W - U||_F^2 + (beta2/2)||W - V||_F^2
           + (beta3/2)||W - Z||_F^2 + (tau1/2)||W - W_prev||_F^2

which equals the reconstruction error ||(I - W W^T) X||_F^2 plus the quadratic
penalties whenever W is exactly orthonormal (S = X X^T, data_const = Tr(X^T X)).
The tau1 proximal term is part of both the objective and the gradient so the
two stay consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, RetractionError

ORTHO_TOL = 1e-8


def sym(A: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2 of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"sym expects a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def orthonormality_defect(W: np.ndarray) -> float:
    """Max-abs entry of W^T W - I; zero for an exactly orthonormal frame."""
    W = np.asarray(W, dtype=float)
    m = W.shape[1]
    return float(np.max(np.abs(W.T @ W - np.eye(m))))


def tangency_defect(W: np.ndarray, xi: np.ndarray) -> float:
    """Max-abs entry of sym(W^T xi); zero iff xi is tangent at W."""
    _check_same_shape(W, xi, "tangency_defect")
    return float(np.max(np.abs(sym(W.T @ xi))))


def project_tangent(W: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Project an ambient matrix onto the tangent space at W.

    Returns G - W sym(W^T G); idempotent, and the result satisfies
    sym(W^T result) = 0 when W is orthonormal.
    """
    W = np.asarray(W, dtype=float)
    G = np.asarray(G, dtype=float)
    _check_same_shape(W, G, "project_tangent")
    return G - W @ sym(W.T @ G)


def transport(W_new: np.ndarray, xi_old: np.ndarray) -> np.ndarray:
    """Move a tangent direction to the tangent space at W_new by re-projection."""
    return project_tangent(W_new, xi_old)


def qr_orthonormalize(M: np.ndarray) -> np.ndarray:
    """Thin-QR Q factor with column signs fixed so diag(R) >= 0.

    The sign fix makes the factor unique (hence deterministic across runs) and
    turns the map into the identity on matrices that are already orthonormal.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise DimensionError(f"expected a tall d x m matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M)
    diag = np.diag(R)
    if np.min(np.abs(diag)) <= 1e-12 * max(1.0, float(np.max(np.abs(diag)))):
        raise RetractionError("rank-deficient matrix: thin QR has a (near-)zero diagonal entry")
    return Q * np.where(diag < 0.0, -1.0, 1.0)


def qr_retract(W: np.ndarray, D: np.ndarray, t: float) -> np.ndarray:
    """Retraction: thin-QR orthonormalization of W + t*D."""
    W = np.asarray(W, dtype=float)
    D = np.asarray(D, dtype=float)
    _check_same_shape(W, D, "qr_retract")
    if not math.isfinite(t):
        raise ValueError(f"retraction step must be finite, got {t!r}")
    return qr_orthonormalize(W + t * D)


def random_orthonormal(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded initializer: Q factor of a Gaussian d x m matrix."""
    if not (0 < m <= d):
        raise DimensionError(f"need 0 < m <= d, got d={d}, m={m}")
    return qr_orthonormalize(rng.standard_normal((d, m)))


@dataclass(frozen=True)
class WSubproblemContext:
    """Fixed data for one gateway's W-subproblem.

    S is the d x d Gram matrix X X^T (must be symmetric); data_const caches
    Tr(X^T X) so the objective can be evaluated in O(d^2 m) via the trace
    identity instead of forming (I - W W^T) X.
    """

    S: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    W_prev: np.ndarray
    beta1: float
    beta2: float
    beta3: float
    tau1: float
    data_const: float

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DimensionError(f"S must be square, got shape {S.shape}")
        if float(np.max(np.abs(S - S.T))) > 1e-10:
            raise ValueError("S must be symmetric within 1e-10")
        d = S.shape[0]
        for name in ("U", "V", "Z", "W_prev"):
            M = getattr(self, name)
            if M.shape != self.U.shape or M.shape[0] != d:
                raise DimensionError(f"{name} has shape {M.shape}, expected ({d}, m)")


def _check_ctx(W: np.ndarray, ctx: WSubproblemContext) -> None:
    if W.shape != ctx.U.shape:
        raise DimensionError(f"W has shape {W.shape}, context expects {ctx.U.shape}")


def objective_g(W: np.ndarray, ctx: WSubproblemContext) -> float:
    """Smooth W-subproblem objective (trace identity plus quadratic penalties)."""
    W = np.asarray(W, dtype=float)
    _check_ctx(W, ctx)
    val = ctx.data_const - float(np.sum(W * (ctx.S @ W)))
    val += 0.5 * ctx.beta1 * float(np.sum((W - ctx.U) ** 2))
    val += 0.5 * ctx.beta2 * float(np.sum((W - ctx.V) ** 2))
    val += 0.5 * ctx.beta3 * float(np.sum((W - ctx.Z) ** 2))
    val += 0.5 * ctx.tau1 * float(np.sum((W - ctx.W_prev) ** 2))
    return val


def euclidean_gradient(W: np.ndarray, ctx: WSubproblemContext) -> np.ndarray:
    """Euclidean gradient of objective_g.

    -2 S W + beta1 (W-U) + beta2 (W-V) + beta3 (W-Z) + tau1 (W-W_prev).
    """
    W = np.asarray(W, dtype=float)
    _check_ctx(W, ctx)
    G = -2.0 * (ctx.S @ W)
    G += ctx.beta1 * (W - ctx.U)
    G += ctx.beta2 * (W - ctx.V)
    G += ctx.beta3 * (W - ctx.Z)
    G += ctx.tau1 * (W - ctx.W_prev)
    return G


@dataclass(frozen=True)
class CgOptions:
    max_iters: int = 100
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30


@dataclass(frozen=True)
class CgResult:
    W: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    stalled: bool
    objective_trace: tuple


def cg_minimize_w(W_init: np.ndarray, ctx: WSubproblemContext,
                  opts: CgOptions = CgOptions()) -> CgResult:
    """Conjugate gradient on the orthonormal-frame manifold for objective_g.

    Riemannian gradient = tangent projection of the Euclidean gradient;
    Fletcher-Reeves weight ||eta_k||^2 / ||eta_{k-1}||^2 (steepest descent on
    the first iteration); previous search directions are re-projected at the
    new point before combining; steps come from Armijo backtracking and a QR
    retraction. Directions that fail the descent test restart at -eta.

    Stops when ||eta||_F <= grad_tol or after max_iters accepted steps. A line
    search that exhausts its backtracks returns the current iterate with
    stalled=True. The accepted objective sequence never increases.
    """
    W = np.asarray(W_init, dtype=float)
    _check_ctx(W, ctx)
    g = objective_g(W, ctx)
    if not math.isfinite(g):
        raise NumericalError("objective is non-finite at the initial point")

    eta = project_tangent(W, euclidean_gradient(W, ctx))
    eta_sq = float(np.sum(eta * eta))
    xi = -eta
    stalled = False
    iterations = 0
    trace = [g]

    for _ in range(opts.max_iters):
        if math.sqrt(eta_sq) <= opts.grad_tol:
            break
        slope = float(np.sum(eta * xi))
        if slope >= 0.0:
            # not a descent direction: restart with steepest descent
            xi = -eta
            slope = -eta_sq

        t = opts.initial_step
        accepted = False
        W_try = W
        g_try = g
        for _ in range(opts.max_backtracks):
            W_try = qr_retract(W, xi, t)
            g_try = objective_g(W_try, ctx)
            if not math.isfinite(g_try):
                raise NumericalError("objective became non-finite during line search")
            if g_try <= g + opts.armijo_c * t * slope:
                accepted = True
                break
            t *= opts.backtrack_factor
        if not accepted:
            stalled = True
            break

        eta_new = project_tangent(W_try, euclidean_gradient(W_try, ctx))
        eta_new_sq = float(np.sum(eta_new * eta_new))
        xi = -eta_new + (eta_new_sq / eta_sq) * transport(W_try, xi)
        W, g, eta, eta_sq = W_try, g_try, eta_new, eta_new_sq
        iterations += 1
        trace.append(g)

    return CgResult(
        W=W,
        objective=g,
        grad_norm=math.sqrt(eta_sq),
        iterations=iterations,
        converged=math.sqrt(eta_sq) <= opts.grad_tol,
        stalled=stalled,
        objective_trace=tuple(trace),
    )


def _check_same_shape(A: np.ndarray, B: np.ndarray, where: str) -> None:
    if np.shape(A) != np.shape(B):
        raise DimensionError(f"{where}: shapes {np.shape(A)} and {np.shape(B)} differ")
