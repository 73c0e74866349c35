"""Thresholding maps checked against brute-force and bisection oracles."""

import numpy as np
import pytest

from fedssp.proximal import (
    ProxParams,
    c_value,
    kappa_value,
    l2p_penalty,
    lq_penalty,
    prox_elementwise,
    prox_rowwise,
    prox_scalar,
    varpi_root,
)


def scalar_objective(x, a, lam, q):
    """lam*|x|^q + (x-a)^2 / 2, with the q=0 penalty counting nonzeros."""
    x = np.asarray(x, dtype=float)
    if q == 0.0:
        pen = lam * (x != 0.0).astype(float)
    else:
        pen = lam * np.abs(x) ** q
    return pen + 0.5 * (x - a) ** 2


def grid_minimum(a, lam, q, step=1e-3):
    """Brute force: coarse grid, refinement near the argmin, exact origin."""
    span = abs(a) + 1.0
    xs = np.arange(-span, span + step, step)
    best = xs[int(np.argmin(scalar_objective(xs, a, lam, q)))]
    fine = np.arange(best - step, best + step, step * 1e-3)
    cand = np.concatenate([xs, fine, [0.0]])
    return float(np.min(scalar_objective(cand, a, lam, q)))


def bisect_stationary(a, lam, q, iters=200):
    """Largest positive root of x - a + lam*q*x^(q-1), bracketed on [c, a]."""

    def h(x):
        return x - a + lam * q * x ** (q - 1.0)

    lo, hi = c_value(lam, q), a
    assert h(lo) < 0.0 < h(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if h(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_thresholds_hand_values():
    # c = (2*lam*(1-q))^(1/(2-q)); kappa at lam=1, q=1/2 works out to 3/2
    assert c_value(1.0, 0.5) == pytest.approx(1.0, rel=1e-12)
    assert kappa_value(1.0, 0.5) == pytest.approx(1.5, rel=1e-12)


def test_thresholds_collapse_at_q_zero():
    for lam in [1e-3, 0.1, 1.0, 7.5]:
        hard = np.sqrt(2.0 * lam)
        assert c_value(lam, 0.0) == pytest.approx(hard, rel=1e-12)
        assert kappa_value(lam, 0.0) == pytest.approx(hard, rel=1e-12)


def test_varpi_matches_bisection():
    rng = np.random.default_rng(3)
    for _ in range(200):
        q = rng.choice([0.25, 0.5, 2.0 / 3.0, 0.9])
        lam = 10.0 ** rng.uniform(-3, 1)
        a = kappa_value(lam, q) * rng.uniform(1.001, 5.0)
        root = varpi_root(a, lam, q)
        ref = bisect_stationary(a, lam, q)
        assert root == pytest.approx(ref, abs=1e-8 * max(1.0, a))


def test_varpi_is_stationary():
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = rng.choice([0.25, 0.5, 2.0 / 3.0, 0.9])
        lam = 10.0 ** rng.uniform(-3, 1)
        a = kappa_value(lam, q) * rng.uniform(1.01, 10.0)
        x = varpi_root(a, lam, q)
        assert abs(x - a + lam * q * x ** (q - 1.0)) <= 1e-8


def test_prox_scalar_never_beaten_by_grid():
    rng = np.random.default_rng(5)
    for _ in range(120):
        q = rng.choice([0.0, 0.25, 0.5, 2.0 / 3.0, 0.9])
        lam = 10.0 ** rng.uniform(-3, 1)
        a = rng.uniform(-12.0, 12.0)
        out = prox_scalar(a, ProxParams(lam=lam, q=float(q)))
        assert scalar_objective(out, a, lam, q) <= grid_minimum(a, lam, q) + 1e-8


def test_prox_dead_zone_and_jump():
    for q in [0.25, 0.5, 2.0 / 3.0]:
        for lam in [0.05, 1.0, 4.0]:
            params = ProxParams(lam=lam, q=q)
            kap = kappa_value(lam, q)
            # at and below the breakpoint everything collapses to zero
            assert prox_scalar(kap, params) == 0.0
            assert prox_scalar(-kap, params) == 0.0
            assert prox_scalar(0.5 * kap, params) == 0.0
            # just above, the output jumps past c instead of leaving zero smoothly
            out = prox_scalar(kap + 1e-6, params)
            assert out >= c_value(lam, q) - 1e-12


def test_prox_hard_threshold_at_q_zero():
    params = ProxParams(lam=2.0, q=0.0)
    edge = np.sqrt(4.0)
    assert prox_scalar(edge + 1e-9, params) == edge + 1e-9
    assert prox_scalar(edge, params) == 0.0
    assert prox_scalar(-edge + 1e-9, params) == 0.0
    assert prox_scalar(-edge - 1e-9, params) == -edge - 1e-9


def test_prox_identity_at_lambda_zero():
    rng = np.random.default_rng(6)
    for a in rng.uniform(-5, 5, size=20):
        assert prox_scalar(a, ProxParams(lam=0.0, q=0.5)) == a


def test_prox_odd_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        q = rng.choice([0.0, 0.5, 0.9])
        params = ProxParams(lam=10.0 ** rng.uniform(-2, 1), q=float(q))
        a = rng.uniform(0.0, 8.0)
        assert prox_scalar(-a, params) == -prox_scalar(a, params)


def test_prox_monotone_above_breakpoint():
    params = ProxParams(lam=1.0, q=0.5)
    kap = kappa_value(1.0, 0.5)
    outs = [prox_scalar(a, params) for a in np.linspace(kap + 1e-6, 10.0, 80)]
    assert all(b >= a for a, b in zip(outs, outs[1:]))


def test_elementwise_matches_scalar_map():
    rng = np.random.default_rng(8)
    for q in [0.0, 0.5, 0.9]:
        params = ProxParams(lam=0.3, q=q)
        A = rng.uniform(-3, 3, size=(6, 4))
        out = prox_elementwise(A, params)
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                assert out[i, j] == prox_scalar(A[i, j], params)


def test_rowwise_preserves_direction_or_zeroes():
    rng = np.random.default_rng(9)
    B = rng.standard_normal((8, 5))
    B[3] = 0.0
    params = ProxParams(lam=0.4, q=0.5)
    out = prox_rowwise(B, params)
    assert np.all(out[3] == 0.0)
    for i in range(B.shape[0]):
        if i == 3:
            continue
        norm_in = np.linalg.norm(B[i])
        norm_out = np.linalg.norm(out[i])
        assert norm_out == pytest.approx(prox_scalar(norm_in, params), abs=1e-12)
        if norm_out > 0:
            cos = out[i] @ B[i] / (norm_out * norm_in)
            assert cos == pytest.approx(1.0, abs=1e-12)


def test_penalty_hand_values():
    A = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert lq_penalty(A, 0.5) == pytest.approx(1.0 + np.sqrt(2.0) + np.sqrt(3.0))
    assert lq_penalty(A, 0.0) == 3.0
    B = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert l2p_penalty(B, 0.5) == pytest.approx(np.sqrt(5.0))
    assert l2p_penalty(B, 0.0) == 1.0


def test_params_validate_ranges():
    with pytest.raises(ValueError):
        ProxParams(lam=-1.0, q=0.5)
    with pytest.raises(ValueError):
        ProxParams(lam=1.0, q=1.0)
    with pytest.raises(ValueError):
        ProxParams(lam=1.0, q=-0.1)
