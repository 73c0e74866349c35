"""One gateway's block updates: W on the manifold, then the two prox steps.

Each update minimizes its own subproblem with a small proximal pull toward
the previous iterate, so a full W -> U -> V sweep never increases the local
objective for a fixed global Z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import HyperParams
from .data import GatewayDataset
from .errors import InfeasibleError
from .manifold import (
    WSubproblemContext,
    cg_minimize_w,
    orthonormality_defect,
    random_orthonormal,
)
from .proximal import ProxParams, l2p_penalty, lq_penalty, prox_elementwise, prox_rowwise

# looser than the manifold invariant (1e-8): guards objective evaluation only
_FEASIBLE_TOL = 1e-6


@dataclass(frozen=True)
class GatewayState:
    """Current iterates (W, U, V) of one gateway plus its immutable data."""

    gateway_id: int
    data: GatewayDataset
    W: np.ndarray
    U: np.ndarray
    V: np.ndarray


def init_state(data: GatewayDataset, m: int, seed: int) -> GatewayState:
    """Seeded start: W0 = QR factor of a Gaussian d x m draw, U0 = V0 = W0.

    All gateways of one experiment share the seed, so they start from the
    same frame (which also serves as the initial global Z).
    """
    W0 = random_orthonormal(data.d, m, np.random.default_rng(seed))
    return GatewayState(gateway_id=data.gateway_id, data=data,
                        W=W0, U=W0.copy(), V=W0.copy())


def build_w_context(state: GatewayState, Z: np.ndarray, hp: HyperParams) -> WSubproblemContext:
    return WSubproblemContext(
        S=state.data.gram, U=state.U, V=state.V, Z=np.asarray(Z, dtype=float),
        W_prev=state.W, beta1=hp.beta1, beta2=hp.beta2, beta3=hp.beta3,
        tau1=hp.tau1, data_const=state.data.data_const,
    )


def update_w(state: GatewayState, Z: np.ndarray, hp: HyperParams) -> np.ndarray:
    """Manifold CG on the W-subproblem, warm-started at the current W."""
    result = cg_minimize_w(state.W, build_w_context(state, Z, hp), hp.cg_options())
    return result.W


def update_u(state: GatewayState, W_new: np.ndarray, hp: HyperParams) -> np.ndarray:
    """Element-wise prox of the blend (beta1 W_new + tau2 U) / (beta1 + tau2)."""
    blend = (hp.beta1 * W_new + hp.tau2 * state.U) / (hp.beta1 + hp.tau2)
    return prox_elementwise(blend, ProxParams(lam=hp.lambda2 / (hp.beta1 + hp.tau2), q=hp.q))


def update_v(state: GatewayState, W_new: np.ndarray, hp: HyperParams) -> np.ndarray:
    """Row-wise prox of the blend (beta2 W_new + tau3 V) / (beta2 + tau3)."""
    blend = (hp.beta2 * W_new + hp.tau3 * state.V) / (hp.beta2 + hp.tau3)
    return prox_rowwise(blend, ProxParams(lam=hp.lambda1 / (hp.beta2 + hp.tau3), q=hp.p))


def local_round(state: GatewayState, Z: np.ndarray, hp: HyperParams) -> GatewayState:
    """Gauss-Seidel sweep W -> U -> V against a fixed global Z."""
    W_new = update_w(state, Z, hp)
    U_new = update_u(state, W_new, hp)
    V_new = update_v(state, W_new, hp)
    return replace(state, W=W_new, U=U_new, V=V_new)


def local_objective(state: GatewayState, Z: np.ndarray, hp: HyperParams) -> float:
    """Reconstruction error plus penalties and coupling terms for one gateway.

    Raises InfeasibleError when W is off the manifold (the indicator term
    would be infinite).
    """
    W, U, V = state.W, state.U, state.V
    if orthonormality_defect(W) > _FEASIBLE_TOL:
        raise InfeasibleError(
            f"gateway {state.gateway_id}: W is not orthonormal "
            f"(defect {orthonormality_defect(W):.3e})")
    Z = np.asarray(Z, dtype=float)
    recon = state.data.data_const - float(np.sum(W * (state.data.gram @ W)))
    val = recon
    val += hp.lambda1 * l2p_penalty(V, hp.p)
    val += hp.lambda2 * lq_penalty(U, hp.q)
    val += 0.5 * hp.beta1 * float(np.sum((W - U) ** 2))
    val += 0.5 * hp.beta2 * float(np.sum((W - V) ** 2))
    val += 0.5 * hp.beta3 * float(np.sum((W - Z) ** 2))
    return val
