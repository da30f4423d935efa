"""Detector objectives, gradients (vs finite differences), prediction rules."""

import numpy as np
import pytest

from evodetect.detectors import (
    BinaryDetector,
    MulticlassDetector,
    append_ones,
    biased_init,
    biased_init_multiclass,
    detector_from_text,
    fit_incremental,
    l1ls_gradient,
    l1ls_objective,
    l21_norm,
    mcl1ls_gradient,
    mcl1ls_objective,
    mcl21ls_gradient,
    mcl21ls_objective,
    predict_binary,
    predict_binary_batch,
    predict_multiclass,
    predict_multiclass_batch,
    sigma_rows,
    weights_to_text,
)
from evodetect.model import BinaryLabel
from evodetect.solver import LrSchedule, StopRule


def central_diff(f, w, h=1e-6):
    """Finite-difference gradient oracle, elementwise central differences."""
    w = np.asarray(w, dtype=float)
    g = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        up, down = w.copy(), w.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (f(up) - f(down)) / (2 * h)
    return g


def away_from_kinks(rng, shape, low=0.1, high=1.0):
    """Weights with every entry's magnitude in [low, high]: off the |.| kink."""
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


class TestObjectives:
    def test_l1ls_value_by_hand(self):
        # X=I2, Y=[1,-1], w=0, lam=0.5: residual 1+1, penalty 0
        assert l1ls_objective(np.eye(2), [1.0, -1.0], [0.0, 0.0], 0.5) == 2.0

    def test_l1ls_penalty_term(self):
        # residual 0 (w reproduces Y exactly), penalty 0.5*(1+1)
        v = l1ls_objective(np.eye(2), [1.0, -1.0], [1.0, -1.0], 0.5)
        assert v == pytest.approx(1.0)

    def test_l21_norm_by_hand(self):
        # two rows of norm sqrt(2) each
        assert l21_norm([[1.0, 1.0], [1.0, 1.0]]) == pytest.approx(2 * np.sqrt(2))

    def test_l21_single_row(self):
        assert l21_norm([[3.0, 4.0]]) == pytest.approx(5.0)

    def test_sigma_rows_floor_on_zero_row(self):
        s = sigma_rows(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert s[0] == pytest.approx(1e7)
        assert s[1] == pytest.approx(0.2)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            l1ls_objective(np.eye(2), [1.0, -1.0], [0.0, 0.0], -0.1)

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 2\).*\(3,\)"):
            l1ls_objective(np.eye(2), [1.0, -1.0], [0.0, 0.0, 0.0], 0.1)


class TestGradients:
    """Analytic gradients vs the central-difference oracle."""

    def test_l1ls_gradient_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, d = int(rng.integers(2, 15)), int(rng.integers(1, 8))
            X, Y = rng.standard_normal((n, d)), rng.standard_normal(n)
            w = away_from_kinks(rng, d)
            lam = float(rng.uniform(0.01, 2.0))
            got = l1ls_gradient(X, Y, w, lam)
            want = central_diff(lambda v: l1ls_objective(X, Y, v, lam), w)
            assert np.allclose(got, want, rtol=1e-4, atol=1e-6)

    def test_mcl1ls_gradient_matches_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n, d, C = int(rng.integers(2, 12)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
            X, Y = rng.standard_normal((n, d)), rng.standard_normal((n, C))
            W = away_from_kinks(rng, (d, C))
            lam = float(rng.uniform(0.01, 2.0))
            got = mcl1ls_gradient(X, Y, W, lam)
            want = central_diff(lambda V: mcl1ls_objective(X, Y, V, lam), W)
            assert np.allclose(got, want, rtol=1e-4, atol=1e-6)

    def test_mcl21ls_gradient_matches_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            n, d, C = int(rng.integers(2, 12)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
            X, Y = rng.standard_normal((n, d)), rng.standard_normal((n, C))
            W = away_from_kinks(rng, (d, C))  # row norms >= 0.1: smooth region
            lam = float(rng.uniform(0.01, 2.0))
            got = mcl21ls_gradient(X, Y, W, lam)
            want = central_diff(lambda V: mcl21ls_objective(X, Y, V, lam), W)
            assert np.allclose(got, want, rtol=1e-4, atol=1e-6)

    def test_zero_lambda_reduces_to_least_squares_gradient(self):
        rng = np.random.default_rng(10)
        X, Y, w = rng.standard_normal((6, 3)), rng.standard_normal(6), rng.standard_normal(3)
        got = l1ls_gradient(X, Y, w, 0.0)
        assert np.allclose(got, -2.0 * X.T @ (Y - X @ w))


class TestPrediction:
    def test_binary_sign_rule(self):
        det = BinaryDetector(
            w=np.array([2.0, -1.0]), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        # score = 2x - 1
        label, score = predict_binary(np.array([0.9]), det)
        assert label == BinaryLabel(+1) and score == pytest.approx(0.8)
        label, score = predict_binary(np.array([0.2]), det)
        assert label == BinaryLabel(-1)

    def test_binary_zero_score_flags_anomaly(self):
        det = BinaryDetector(
            w=np.array([2.0, -1.0]), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        label, score = predict_binary(np.array([0.5]), det)
        assert score == 0.0
        assert label == BinaryLabel(-1)

    def test_binary_batch_agrees_with_single(self):
        rng = np.random.default_rng(11)
        det = BinaryDetector(
            w=rng.standard_normal(4), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        X = rng.uniform(0, 1, size=(20, 3))
        labels, scores = predict_binary_batch(X, det)
        for i in range(20):
            single, s = predict_binary(X[i], det)
            assert single.value == labels[i]
            assert s == pytest.approx(scores[i])

    def test_multiclass_argmax(self):
        W = np.zeros((3, 3))
        W[0] = [5.0, 0.0, -5.0]  # attribute 0 dominates
        det = MulticlassDetector(
            W=W, lam=0.01, penalty="l21", schedule=LrSchedule(), stop=StopRule(),
            class_names=("normal", "cpu", "disk"),
        )
        label, scores = predict_multiclass(np.array([1.0, 0.0]), det)
        assert label.class_index == 0 and label.class_name == "normal"

    def test_multiclass_tie_prefers_largest_class_index(self):
        # identical columns: every class scores the same; anomaly routing wins
        W = np.ones((3, 4))
        det = MulticlassDetector(
            W=W, lam=0.01, penalty="l21", schedule=LrSchedule(), stop=StopRule()
        )
        label, scores = predict_multiclass(np.array([0.3, 0.7]), det)
        assert len(set(scores)) == 1
        assert label.class_index == 3

    def test_multiclass_batch_agrees_with_single(self):
        rng = np.random.default_rng(12)
        det = MulticlassDetector(
            W=rng.standard_normal((4, 3)), lam=0.01, penalty="l1",
            schedule=LrSchedule(), stop=StopRule(),
        )
        X = rng.uniform(0, 1, size=(25, 3))
        idx, scores = predict_multiclass_batch(X, det)
        for i in range(25):
            single, s = predict_multiclass(X[i], det)
            assert single.class_index == idx[i]
            assert np.allclose(s, scores[i])

    def test_dimension_mismatch_rejected(self):
        det = BinaryDetector(
            w=np.array([1.0, 1.0]), lam=0.0, schedule=LrSchedule(), stop=StopRule()
        )
        with pytest.raises(ValueError, match="expects 1"):
            predict_binary(np.array([0.1, 0.2]), det)


class TestBiasedInit:
    def test_binary_shift_reproduces_gaussian_plus_alpha(self):
        # same seed: biased init equals the raw draw plus alpha
        g = np.random.default_rng(42).standard_normal(4)
        w = biased_init(3, 2.0, np.random.default_rng(42))
        assert np.allclose(w, g + 2.0)

    def test_multiclass_shift_direction(self):
        g = np.random.default_rng(5).standard_normal((4, 3))
        W = biased_init_multiclass(3, 3, 0.5, np.random.default_rng(5))
        assert np.allclose(W[:, 0], g[:, 0] + 0.5)
        assert np.allclose(W[:, 1:], g[:, 1:] - 0.5)

    def test_zero_alpha_is_plain_gaussian(self):
        g = np.random.default_rng(6).standard_normal(4)
        assert np.allclose(biased_init(3, 0.0, np.random.default_rng(6)), g)

    def test_bias_makes_untrained_detector_lean_normal(self):
        rng = np.random.default_rng(13)
        det = BinaryDetector(
            w=biased_init(10, 3.0, rng), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        X = np.random.default_rng(14).uniform(0, 1, size=(200, 10))
        labels, _ = predict_binary_batch(X, det)
        assert np.mean(labels == +1) > 0.9


class TestFit:
    def test_zero_lambda_matches_normal_equations(self):
        # lam=0 is ordinary least squares; lstsq is the oracle
        rng = np.random.default_rng(20)
        X = rng.standard_normal((50, 10))
        Y = X @ rng.standard_normal(10) + 0.1 * rng.standard_normal(50)
        Xp = append_ones(X)
        w_star, *_ = np.linalg.lstsq(Xp, Y, rcond=None)
        best = float(np.sum((Y - Xp @ w_star) ** 2))

        det = BinaryDetector(
            w=np.zeros(11), lam=0.0, schedule=LrSchedule(),
            stop=StopRule(tol=1e-10, max_iters=20000),
        )
        fitted = fit_incremental(det, X, Y)
        got = float(np.sum((Y - Xp @ fitted.w) ** 2))
        assert got <= best * 1.01

    def test_multiclass_zero_lambda_matches_normal_equations(self):
        rng = np.random.default_rng(21)
        X = rng.standard_normal((40, 6))
        Y = rng.standard_normal((40, 3))
        Xp = append_ones(X)
        W_star, *_ = np.linalg.lstsq(Xp, Y, rcond=None)
        best = float(np.sum((Y - Xp @ W_star) ** 2))

        det = MulticlassDetector(
            W=np.zeros((7, 3)), lam=0.0, penalty="l21", schedule=LrSchedule(),
            stop=StopRule(tol=1e-10, max_iters=20000),
        )
        fitted = fit_incremental(det, X, Y)
        got = float(np.sum((Y - Xp @ fitted.W) ** 2))
        assert got <= best * 1.01

    def test_warm_start_keeps_schedule_state(self):
        rng = np.random.default_rng(22)
        X = rng.standard_normal((30, 4)) * 5  # steep: forces rate shrinks
        Y = rng.standard_normal(30)
        det = BinaryDetector(
            w=np.zeros(5), lam=0.1, schedule=LrSchedule(), stop=StopRule()
        )
        once = fit_incremental(det, X, Y)
        assert once.schedule.current_lr < det.schedule.current_lr
        twice = fit_incremental(once, X, Y)
        assert twice.schedule.current_lr <= once.schedule.current_lr

    def test_incremental_fit_reduces_objective_on_new_data(self):
        rng = np.random.default_rng(23)
        X1, X2 = rng.uniform(0, 1, (30, 5)), rng.uniform(0, 1, (30, 5))
        w_true = np.array([3.0, -2.0, 0.0, 0.0, 1.0])
        det = BinaryDetector(
            w=biased_init(5, 0.5, rng), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        Y1 = np.sign(X1 @ w_true - 1.0)
        Y2 = np.sign(X2 @ w_true - 1.0)
        det = fit_incremental(det, X1, Y1)
        before = l1ls_objective(append_ones(X2), Y2, det.w, det.lam)
        det2 = fit_incremental(det, X2, Y2)
        after = l1ls_objective(append_ones(X2), Y2, det2.w, det2.lam)
        assert after <= before

    def test_empty_batch_rejected(self):
        det = BinaryDetector(
            w=np.zeros(3), lam=0.0, schedule=LrSchedule(), stop=StopRule()
        )
        with pytest.raises(ValueError):
            fit_incremental(det, np.zeros((0, 2)), np.zeros(0))


class TestSnapshots:
    def test_binary_round_trip_is_exact(self):
        rng = np.random.default_rng(30)
        det = BinaryDetector(
            w=rng.standard_normal(6), lam=0.01, schedule=LrSchedule(), stop=StopRule()
        )
        back = detector_from_text(weights_to_text(det))
        assert isinstance(back, BinaryDetector)
        assert np.array_equal(back.w, det.w)  # repr round-trips floats exactly
        assert back.lam == det.lam

    def test_multiclass_round_trip_is_exact(self):
        rng = np.random.default_rng(31)
        det = MulticlassDetector(
            W=rng.standard_normal((5, 4)), lam=0.1, penalty="l21",
            schedule=LrSchedule(), stop=StopRule(),
            class_names=("normal", "memory", "cpu", "disk"),
        )
        back = detector_from_text(
            weights_to_text(det), class_names=("normal", "memory", "cpu", "disk")
        )
        assert isinstance(back, MulticlassDetector)
        assert np.array_equal(back.W, det.W)
        assert back.kind == "mcl21ls"
        assert back.lam == det.lam

    def test_header_carries_model_facts(self):
        det = MulticlassDetector(
            W=np.zeros((3, 2)), lam=0.5, penalty="l1",
            schedule=LrSchedule(), stop=StopRule(),
        )
        header = weights_to_text(det).splitlines()[0]
        assert "kind=mcl1ls" in header
        assert "d=2" in header and "C=2" in header
        assert "lambda=0.5" in header

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            detector_from_text("not a snapshot\n1 2 3\n")

    def test_truncated_body_rejected(self):
        det = BinaryDetector(
            w=np.ones(4), lam=0.0, schedule=LrSchedule(), stop=StopRule()
        )
        text = weights_to_text(det)
        truncated = "\n".join(text.splitlines()[:-1]) + "\n"
        with pytest.raises(ValueError, match="does not match header"):
            detector_from_text(truncated)
