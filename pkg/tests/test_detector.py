"""Subspace residual scores, quantile thresholds, and confusion metrics."""

import numpy as np
import pytest

from fedssp.detector import (
    classify,
    compute_metrics,
    evaluate,
    fit_threshold,
    score,
)
from fedssp.errors import DataError, DimensionError
from fedssp.manifold import random_orthonormal


def test_in_span_samples_score_zero():
    rng = np.random.default_rng(0)
    W = random_orthonormal(10, 3, rng)
    X = W @ rng.standard_normal((3, 25))
    assert float(np.max(score(W, X))) <= 1e-20


def test_orthogonal_bump_scores_its_mass():
    # x = Wy + r with r orthogonal to span(W): the residual is exactly ||r||^2
    rng = np.random.default_rng(1)
    W = random_orthonormal(10, 3, rng)
    y = rng.standard_normal((3, 8))
    R = (np.eye(10) - W @ W.T) @ rng.standard_normal((10, 8))
    got = score(W, W @ y + R)
    assert np.allclose(got, np.sum(R * R, axis=0), atol=1e-12)


def test_scores_invariant_to_basis_change():
    # any nonsingular recombination of the frame spans the same subspace
    rng = np.random.default_rng(2)
    W = random_orthonormal(12, 4, rng)
    M = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
    X = rng.standard_normal((12, 30))
    assert np.allclose(score(W, X), score(W @ M, X), atol=1e-10)


def test_score_shape_errors():
    rng = np.random.default_rng(3)
    W = random_orthonormal(6, 2, rng)
    with pytest.raises(DimensionError):
        score(W, rng.standard_normal((7, 5)))
    with pytest.raises(DimensionError):
        score(W, rng.standard_normal(6))


def test_threshold_interpolates_like_hand_formula():
    # scores 1..100 at q=0.95: rank (n-1)q = 94.05 -> 95 + 0.05 * (96 - 95)
    scores = np.arange(1.0, 101.0)
    assert fit_threshold(scores, 0.95) == pytest.approx(95.05, abs=1e-12)
    assert fit_threshold(scores, 1.0) == pytest.approx(100.0)


def test_threshold_input_validation():
    with pytest.raises(DataError):
        fit_threshold(np.array([]))
    for q in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            fit_threshold(np.array([1.0, 2.0]), q)


def test_classification_is_strictly_above():
    scores = np.array([0.5, 1.0, 1.5])
    pred = classify(scores, 1.0)
    assert pred.tolist() == [False, False, True]
    with pytest.raises(ValueError):
        classify(scores, float("nan"))


def test_metrics_hand_case_all_flagged():
    # 90 true anomalies and 10 normals, everything flagged: precision 90,
    # recall 100, F1 = 2 * 90 * 100 / 190
    pred = np.ones(100, dtype=bool)
    truth = np.concatenate([np.ones(90, dtype=bool), np.zeros(10, dtype=bool)])
    rep = compute_metrics(pred, truth)
    assert (rep.tp, rep.fp, rep.tn, rep.fn) == (90, 10, 0, 0)
    assert rep.acc == pytest.approx(90.0)
    assert rep.pre == pytest.approx(90.0)
    assert rep.recall == pytest.approx(100.0)
    assert rep.fnr == pytest.approx(0.0)
    assert rep.f1 == pytest.approx(2.0 * 90.0 * 100.0 / 190.0)
    assert rep.degenerate == ()


def test_metrics_hand_case_mixed():
    pred = np.array([True, True, False, False, True])
    truth = np.array([True, False, True, False, False])
    rep = compute_metrics(pred, truth)
    assert (rep.tp, rep.fp, rep.tn, rep.fn) == (1, 2, 1, 1)
    assert rep.acc == pytest.approx(40.0)
    assert rep.pre == pytest.approx(100.0 / 3.0)
    assert rep.recall == pytest.approx(50.0)
    assert rep.fnr == pytest.approx(50.0)


def test_metrics_identities_on_random_draws():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        pred = rng.random(n) < 0.5
        truth = rng.random(n) < 0.5
        pred[0] = truth[0] = True  # force nondegenerate positive counts
        rep = compute_metrics(pred, truth)
        assert rep.tp + rep.fp + rep.tn + rep.fn == n
        assert rep.recall + rep.fnr == pytest.approx(100.0, abs=1e-9)
        if rep.pre + rep.recall > 0:
            assert rep.f1 == pytest.approx(
                2.0 * rep.pre * rep.recall / (rep.pre + rep.recall), abs=1e-9)


def test_metrics_degenerate_flags():
    rep = compute_metrics(np.array([False, False]), np.array([False, False]))
    assert set(rep.degenerate) == {"pre", "recall", "fnr", "f1"}
    assert rep.pre == rep.recall == rep.fnr == rep.f1 == 0.0
    assert rep.acc == pytest.approx(100.0)


def test_metrics_input_validation():
    with pytest.raises(DimensionError):
        compute_metrics(np.array([True]), np.array([True, False]))
    with pytest.raises(ValueError):
        compute_metrics(np.array([], dtype=bool), np.array([], dtype=bool))


def test_report_record_keys():
    rep = compute_metrics(np.array([True]), np.array([True]), threshold=2.5)
    rec = rep.to_record()
    assert set(rec) == {"acc", "pre", "recall", "fnr", "f1", "threshold",
                        "tp", "fp", "tn", "fn", "degenerate"}
    assert rec["threshold"] == 2.5


def test_evaluate_end_to_end_separable():
    # normals live in the span, anomalies carry an orthogonal bump, so a
    # threshold between the two groups classifies perfectly
    rng = np.random.default_rng(5)
    W = random_orthonormal(10, 3, rng)
    X_norm = W @ rng.standard_normal((3, 50))
    bump = (np.eye(10) - W @ W.T) @ rng.standard_normal((10, 20))
    X_anom = W @ rng.standard_normal((3, 20)) + 3.0 * bump
    X = np.hstack([X_norm, X_anom])
    labels = np.concatenate([np.zeros(50, dtype=bool), np.ones(20, dtype=bool)])
    thr = fit_threshold(score(W, X_norm), 0.95)
    rep = evaluate(W, X, labels, thr)
    assert rep.recall == pytest.approx(100.0)
    assert rep.fn == 0
    # the quantile threshold concedes at most the top 5% of normals
    assert rep.fp <= 3
    assert rep.f1 >= 90.0


def test_evaluate_label_count_mismatch():
    rng = np.random.default_rng(6)
    W = random_orthonormal(6, 2, rng)
    with pytest.raises(DimensionError):
        evaluate(W, rng.standard_normal((6, 5)), np.zeros(4), 0.5)
