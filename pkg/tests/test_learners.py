"""Kernel machines: SVM dual solver, one-vs-one voting, ridge regression."""

import numpy as np
import pytest

from migk import (
    MI_KERNEL,
    KernelConfig,
    OvoModel,
    SvmModel,
    ValidationError,
    gram,
    krr_predict,
    krr_train,
    ovo_predict,
    ovo_train,
    svm_decision,
    svm_predict,
    svm_train,
)

import oracles
from conftest import make_binary_dataset


def random_psd_gram(rng, n, scale=1.0):
    """A random normalized-kernel-like PSD matrix with unit diagonal."""
    points = rng.normal(size=(n, 3)) * scale
    sq = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-0.5 * sq)


def random_labels(rng, n):
    y = rng.choice([-1.0, 1.0], size=n)
    if (y > 0).all():
        y[0] = -1.0
    if (y < 0).all():
        y[0] = 1.0
    return y


class TestSvmTrain:
    def test_two_point_identity_gram(self):
        model = svm_train(np.eye(2), [1.0, -1.0], C=1.0)
        np.testing.assert_allclose(model.dual_coef, [1.0, -1.0], atol=1e-12)
        assert model.bias == pytest.approx(0.0, abs=1e-12)
        assert model.objective == pytest.approx(1.0, rel=1e-12)
        score0, label0 = svm_predict(model, np.array([1.0, 0.0]))
        score1, label1 = svm_predict(model, np.array([0.0, 1.0]))
        assert (label0, label1) == (1, -1)
        assert score0 == pytest.approx(1.0) and score1 == pytest.approx(-1.0)

    def test_equality_constraint_holds(self, rng):
        for _ in range(10):
            n = int(rng.integers(4, 12))
            K = random_psd_gram(rng, n)
            y = random_labels(rng, n)
            model = svm_train(K, y, C=float(rng.choice([0.1, 1.0, 10.0])))
            assert abs(model.dual_coef.sum()) <= 1e-8

    def test_box_constraint_holds(self, rng):
        K = random_psd_gram(rng, 9)
        y = random_labels(rng, 9)
        C = 1.0
        model = svm_train(K, y, C=C)
        alpha = model.dual_coef * y
        assert alpha.min() >= -1e-12
        assert alpha.max() <= C + 1e-12

    def test_matches_interior_point_reference(self, rng):
        for _ in range(6):
            n = int(rng.integers(4, 9))
            K = random_psd_gram(rng, n)
            y = random_labels(rng, n)
            C = float(rng.choice([0.5, 1.0, 10.0]))
            model = svm_train(K, y, C=C, tol=1e-8)
            _, ref_obj = oracles.reference_qp_solve(K, y, C)
            assert model.objective == pytest.approx(ref_obj, abs=1e-6)

    def test_objective_dominates_feasible_points(self, rng):
        K = random_psd_gram(rng, 8)
        y = random_labels(rng, 8)
        C = 1.0
        model = svm_train(K, y, C=C, tol=1e-8)
        pos = np.flatnonzero(y > 0)
        neg = np.flatnonzero(y < 0)
        for _ in range(50):
            alpha = rng.uniform(0.0, C, size=8)
            # project onto the equality constraint by rescaling one class
            s_pos = alpha[pos].sum()
            s_neg = alpha[neg].sum()
            if s_pos == 0.0 or s_neg == 0.0:
                continue
            target = min(s_pos, s_neg)
            alpha[pos] *= target / s_pos
            alpha[neg] *= target / s_neg
            feasible_obj = oracles.svm_dual_objective(alpha.tolist(), y.tolist(), K.tolist())
            assert model.objective >= feasible_obj - 1e-6

    def test_kkt_gap_within_tolerance(self, rng):
        K = random_psd_gram(rng, 10)
        y = random_labels(rng, 10)
        model = svm_train(K, y, C=1.0, tol=1e-5)
        assert model.kkt_gap <= 1e-5

    def test_permutation_equivariance(self, rng):
        n = 8
        K = random_psd_gram(rng, n)
        y = random_labels(rng, n)
        perm = rng.permutation(n)
        base = svm_train(K, y, C=1.0, tol=1e-8)
        permuted = svm_train(K[np.ix_(perm, perm)], y[perm], C=1.0, tol=1e-8)
        rows = rng.normal(size=(5, n)) * 0.2
        for row in rows:
            s1 = svm_decision(base, row)
            s2 = svm_decision(permuted, row[perm])
            # pair selection order differs under permutation; only the
            # optimum itself is shared, to solver tolerance
            assert s2 == pytest.approx(s1, abs=1e-6)

    def test_trains_on_bag_gram(self, rng):
        ds = make_binary_dataset(n_bags=10, seed=4)
        g = gram(ds, MI_KERNEL, KernelConfig())
        model = svm_train(g, ds.labels, C=10.0)
        assert model.bag_ids == ds.bag_ids
        scores = svm_decision(model, g.values)
        pred = np.where(scores >= 0.0, 1.0, -1.0)
        assert float((pred == ds.labels).mean()) == 1.0

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            svm_train(np.eye(2), [1.0, 1.0], C=1.0)  # one class
        with pytest.raises(ValidationError):
            svm_train(np.eye(2), [1.0, 2.0], C=1.0)  # bad labels
        with pytest.raises(ValidationError):
            svm_train(np.eye(2), [1.0, -1.0], C=0.0)
        with pytest.raises(ValidationError):
            svm_train(np.eye(3), [1.0, -1.0], C=1.0)  # length mismatch
        with pytest.raises(ValidationError):
            svm_train(np.zeros((2, 3)), [1.0, -1.0], C=1.0)  # not square

    def test_check_psd_rejects_indefinite(self):
        K = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValidationError):
            svm_train(K, [1.0, -1.0], C=1.0, check_psd=True)

    def test_iteration_cap_warns(self, rng):
        K = random_psd_gram(rng, 10)
        y = random_labels(rng, 10)
        with pytest.warns(RuntimeWarning):
            svm_train(K, y, C=10.0, tol=1e-12, max_iter=1)

    def test_digest_tracks_inputs(self, rng):
        K = random_psd_gram(rng, 6)
        y = random_labels(rng, 6)
        m1 = svm_train(K, y, C=1.0)
        m2 = svm_train(K, y, C=1.0)
        m3 = svm_train(K, y, C=10.0)
        assert m1.digest == m2.digest
        assert m1.digest != m3.digest


class TestSvmPredict:
    def test_zero_score_maps_to_positive(self):
        model = SvmModel(np.array([0.0, 0.0]), 0.0, 1.0, ("a", "b"), 0.0, 0.0)
        score, label = svm_predict(model, np.array([0.3, 0.3]))
        assert score == 0.0 and label == 1

    def test_midpoint_symmetry(self):
        model = svm_train(np.eye(2), [1.0, -1.0], C=1.0)
        for a, b in [(0.8, 0.2), (0.4, 0.9), (0.0, 1.0)]:
            s_ab, _ = svm_predict(model, np.array([a, b]))
            s_ba, _ = svm_predict(model, np.array([b, a]))
            assert s_ba == pytest.approx(-s_ab, rel=1e-12, abs=1e-15)

    def test_misaligned_row_rejected(self):
        model = svm_train(np.eye(2), [1.0, -1.0], C=1.0)
        with pytest.raises(ValidationError):
            svm_predict(model, np.array([1.0, 0.0, 0.0]))

    def test_block_and_row_forms_agree(self, rng):
        model = svm_train(random_psd_gram(rng, 5), random_labels(rng, 5), C=1.0)
        block = rng.normal(size=(3, 5))
        scores = svm_decision(model, block)
        for i in range(3):
            assert scores[i] == pytest.approx(svm_decision(model, block[i]), rel=1e-15)


def block_gram(sizes, inside=0.9, outside=0.1):
    n = sum(sizes)
    K = np.full((n, n), outside)
    start = 0
    for s in sizes:
        K[start:start + s, start:start + s] = inside
        start += s
    np.fill_diagonal(K, 1.0)
    return K


class TestOvo:
    def test_three_separated_classes_vote_correctly(self):
        K = block_gram([3, 3, 3])
        y = [1.0] * 3 + [2.0] * 3 + [3.0] * 3
        model = ovo_train(K, y, C=10.0)
        assert model.classes == (1, 2, 3)
        assert len(model.models) == 3
        for i in range(9):
            assert ovo_predict(model, K[i]) == int(y[i])

    def test_pairwise_models_see_only_their_classes(self):
        K = block_gram([2, 2, 2])
        y = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0]
        model = ovo_train(K, y, C=1.0, bag_ids=tuple("abcdef"))
        for (a, b), sub, cols in model.models:
            assert all(int(y[c]) in (a, b) for c in cols)
            assert sub.n == len(cols)

    def test_two_class_input_matches_binary_svm(self, rng):
        K = random_psd_gram(rng, 8)
        y_multi = np.where(random_labels(rng, 8) > 0, 1.0, 2.0)
        y_bin = np.where(y_multi == 1.0, 1.0, -1.0)
        ovo = ovo_train(K, y_multi, C=1.0)
        svm = svm_train(K, y_bin, C=1.0)
        for row in K:
            _, bin_label = svm_predict(svm, row)
            want = 1 if bin_label > 0 else 2
            assert ovo_predict(ovo, row) == want

    def test_vote_tie_breaks_by_score_strength(self):
        def bias_only(bias):
            return SvmModel(np.zeros(2), bias, 1.0, ("x", "y"), 0.0, 0.0)

        # a three-way vote tie: (1,2) -> 1, (2,3) -> 2, (1,3) -> 3
        model = OvoModel(
            classes=(1, 2, 3),
            models=(
                ((1, 2), bias_only(0.5), (0, 1)),
                ((2, 3), bias_only(0.3), (2, 3)),
                ((1, 3), bias_only(-0.7), (4, 5)),
            ),
        )
        assert ovo_predict(model, np.zeros(6)) == 3

    def test_full_tie_breaks_by_lowest_class(self):
        def bias_only(bias):
            return SvmModel(np.zeros(2), bias, 1.0, ("x", "y"), 0.0, 0.0)

        model = OvoModel(
            classes=(1, 2, 3),
            models=(
                ((1, 2), bias_only(0.5), (0, 1)),
                ((2, 3), bias_only(0.5), (2, 3)),
                ((1, 3), bias_only(-0.5), (4, 5)),
            ),
        )
        assert ovo_predict(model, np.zeros(6)) == 1

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            ovo_train(np.eye(3), [1.0, 1.0, 1.0], C=1.0)  # single class
        with pytest.raises(ValidationError):
            ovo_train(np.eye(2), [1.5, 2.0], C=1.0)  # non-integer labels
        with pytest.raises(ValidationError):
            ovo_train(np.eye(3), [1.0, 2.0], C=1.0)  # length mismatch


class TestKrr:
    def test_identity_gram_zero_ridge_reproduces_targets(self):
        y = np.array([0.2, 0.8, 0.5])
        model = krr_train(np.eye(3), y, lam=0.0)
        np.testing.assert_allclose(model.beta, y, atol=1e-12)
        np.testing.assert_allclose(krr_predict(model, np.eye(3)), y, atol=1e-12)

    def test_large_ridge_shrinks_to_zero(self, rng):
        K = random_psd_gram(rng, 6)
        y = rng.uniform(size=6)
        model = krr_train(K, y, lam=1e8)
        preds = krr_predict(model, K)
        assert np.abs(preds).max() < 1e-6

    def test_two_by_two_hand_solution(self):
        K = np.array([[1.0, 0.5], [0.5, 1.0]])
        model = krr_train(K, [1.0, 0.0], lam=0.1)
        np.testing.assert_allclose(model.beta, [55 / 48, -25 / 48], rtol=1e-12)

    def test_singular_system_advises_larger_ridge(self):
        with pytest.raises(ValidationError, match="lambda"):
            krr_train(np.ones((2, 2)), [1.0, 0.0], lam=0.0)

    def test_residual_invariant(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 10))
            K = random_psd_gram(rng, n)
            y = rng.uniform(size=n)
            model = krr_train(K, y, lam=0.1)
            system = K + 0.1 * np.eye(n)
            residual = float(np.linalg.norm(system @ model.beta - y))
            assert residual <= 1e-8 * np.linalg.norm(y)
            assert model.residual == pytest.approx(residual, abs=1e-15)

    def test_prediction_clipping(self):
        model = krr_train(np.eye(2), [5.0, -3.0], lam=0.0)
        raw = krr_predict(model, np.eye(2))
        clipped = krr_predict(model, np.eye(2), clip=(0.0, 1.0))
        np.testing.assert_allclose(raw, [5.0, -3.0])
        np.testing.assert_allclose(clipped, [1.0, 0.0])

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            krr_train(np.eye(2), [1.0], lam=0.1)
        with pytest.raises(ValidationError):
            krr_train(np.eye(2), [1.0, 0.0], lam=-0.1)
        model = krr_train(np.eye(2), [1.0, 0.0], lam=0.1)
        with pytest.raises(ValidationError):
            krr_predict(model, np.array([1.0, 0.0, 0.0]))

    def test_digest_tracks_inputs(self, rng):
        K = random_psd_gram(rng, 5)
        y = rng.uniform(size=5)
        m1 = krr_train(K, y, lam=0.1)
        m2 = krr_train(K, y, lam=0.1)
        m3 = krr_train(K, y, lam=1.0)
        assert m1.digest == m2.digest
        assert m1.digest != m3.digest
