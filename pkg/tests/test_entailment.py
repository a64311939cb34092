import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordinalkit.entailment import (AblationConfig, MatchScorer, VerbaliserSet, ablate_verbalisers,
                                   augment, compose, constrained_label_argmax, infer_entailment,
                                   infer_entailment_batch, train_binary_scorer)
from ordinalkit.errors import ConfigError, DegenerateTrainingError
from ordinalkit.metrics import metric_report
from ordinalkit.model import TrainConfig, generate_synthetic, predict, train
from ordinalkit.simplex import LabelSpace, is_prob, one_hot

SCORER_CFG = TrainConfig(lr=0.1, epochs=200, batch_size=64)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(125, 6, 5, 0.2, seed=0)


@pytest.fixture(scope="module")
def separable():
    return generate_synthetic(2000, 10, 5, 0.0, seed=0)


@pytest.fixture(scope="module")
def informative():
    return VerbaliserSet.default("informative", LabelSpace.of_size(5))


@pytest.fixture(scope="module")
def trained(separable, informative):
    scorer, _ = train_binary_scorer(augment(separable, informative), SCORER_CFG)
    return scorer


class TestVerbalisers:
    def test_informative_similarity_structure(self, informative):
        V = informative.blocks
        G = V @ V.T
        idx = np.arange(5)
        np.testing.assert_allclose(G, 1 - np.abs(idx[:, None] - idx[None, :]) / 5, atol=1e-12)

    def test_uninformative_orthonormal(self):
        V = VerbaliserSet.default("uninformative", 5).blocks
        np.testing.assert_allclose(V @ V.T, np.eye(5), atol=1e-12)

    def test_templates(self, informative):
        assert informative.templates[2] == "indicates neutral sentiment"
        assert VerbaliserSet.default("uninformative", 3).templates == ("cat", "lion", "zebra")

    def test_validation(self):
        with pytest.raises(ConfigError):
            VerbaliserSet("mixed", ("a", "b"))
        with pytest.raises(ConfigError):
            VerbaliserSet("informative", ("a", "a"))
        with pytest.raises(ConfigError):
            VerbaliserSet("informative", tuple("abcdef"), dim=4)


class TestAugment:
    def test_counts(self, small, informative):
        samples = augment(small, informative, split=None)
        assert len(samples) == 625 and samples.indicator.sum() == 125
        over = augment(small, informative, oversample_positive=True, split=None)
        assert len(over) == 750 and over.indicator.sum() == 250

    def test_hundred_rows(self, informative):
        data = generate_synthetic(100, 4, 5, 0.2, seed=1, test_fraction=0.0)
        samples = augment(data, informative)
        assert len(samples) == 500 and samples.indicator.sum() == 100
        over = augment(data, informative, oversample_positive=True)
        assert len(over) == 600 and over.indicator.sum() == 200

    def test_indicator_is_one_hot_of_label(self, small, informative):
        samples = augment(small, informative, split=None)
        ind = samples.indicator.reshape(-1, 5)
        for row, y in zip(ind, small.y):
            np.testing.assert_array_equal(row, one_hot(int(y), 5))

    def test_source_candidate_bijection(self, small, informative):
        samples = augment(small, informative, split=None)
        pairs = set(zip(samples.source.tolist(), samples.candidate.tolist()))
        assert len(pairs) == len(samples)
        s = samples[7]
        np.testing.assert_array_equal(s.payload, compose(small.X[s.source], informative.blocks[s.candidate - 1]))

    def test_dropout_extra_positive(self, small, informative):
        over = augment(small, informative, oversample_positive=True, seed=2, split=None)
        extra = over.payload[625:, :small.D]
        zeroed = (extra == 0) & (small.X != 0)
        assert np.all(zeroed.sum(axis=1) == 1)  # 5% of 6 features rounds to one
        again = augment(small, informative, oversample_positive=True, seed=2, split=None)
        np.testing.assert_array_equal(over.payload, again.payload)

    def test_cardinality_mismatch(self, small):
        with pytest.raises(ConfigError):
            augment(small, VerbaliserSet.default("informative", 3))


class TestScorer:
    def test_single_class_rejected(self, small, informative):
        samples = augment(small, informative)
        pos = samples.take(samples.indicator == 1)
        with pytest.raises(DegenerateTrainingError):
            train_binary_scorer(pos, SCORER_CFG)

    def test_gradient_finite_differences(self, rng):
        D, m, n = 3, 4, 25
        scorer = MatchScorer(rng.normal(size=D), rng.normal(size=m), rng.normal(size=(D, m)),
                             np.array([-0.5]), np.array([0.3]))
        payload = rng.normal(size=(n, D + m))
        t = rng.integers(0, 2, size=n)
        _, grads = scorer.bce(payload, t)
        h = 1e-6
        for p, g in zip(scorer.params(), grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up, _ = scorer.bce(payload, t)
                flat[i] = orig - h
                down, _ = scorer.bce(payload, t)
                flat[i] = orig
                num = (up - down) / (2 * h)
                assert abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), 1e-4) < 1e-5

    def test_full_batch_order_invariant(self, small, informative):
        samples = augment(small, informative)
        cfg = TrainConfig(lr=0.5, epochs=20, batch_size=None, optimizer="gd")
        a, _ = train_binary_scorer(samples, cfg)
        perm = np.random.default_rng(0).permutation(len(samples))
        b, _ = train_binary_scorer(samples.take(perm), cfg)
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_allclose(p, q, rtol=1e-10, atol=1e-12)

    def test_binary_accuracy_held_out(self, separable, informative, trained):
        held = augment(separable, informative, split="test")
        acc = np.mean((trained(held.payload) > 0) == (held.indicator == 1))
        assert acc > 0.9

    def test_curvature_stays_non_negative(self, trained):
        assert trained.curvature >= 0.0


class TestInference:
    def test_prob_vector(self, rng, informative, trained):
        for x in rng.normal(size=(20, 10)):
            label, p = infer_entailment(x, informative, trained)
            assert is_prob(p) and 1 <= label <= 5

    def test_dominant_candidate(self, informative):
        target = informative.blocks[3]

        def scorer(payload):
            return 10.0 if np.allclose(payload[-target.size:], target) else -10.0

        label, p = infer_entailment(np.zeros(4), informative, scorer)
        assert label == 4 and p[3] > 0.99

    def test_exactly_K_calls(self, informative):
        calls = []

        def scorer(payload):
            calls.append(1)
            return 0.0

        label, p = infer_entailment(np.zeros(3), informative, scorer)
        assert len(calls) == 5
        assert label == 1

    def test_constant_shift_invariance(self, rng, informative, trained):
        x = rng.normal(size=10)
        shifted = lambda payload: trained(payload) + 7.5
        np.testing.assert_allclose(infer_entailment(x, informative, trained)[1],
                                   infer_entailment(x, informative, shifted)[1], atol=1e-12)

    def test_batch_matches_single(self, separable, informative, trained):
        X, _ = separable.part("test")
        labels, P = infer_entailment_batch(X[:30], informative, trained)
        for x, lab, p in zip(X[:30], labels, P):
            single = infer_entailment(x, informative, trained)
            assert single[0] == lab
            np.testing.assert_allclose(single[1], p, atol=1e-12)

    def test_pipeline_close_to_direct_model(self, separable, informative, trained):
        X, y = separable.part("test")
        pred, _ = infer_entailment_batch(X, informative, trained)
        direct = train("linear", separable, TrainConfig(epochs=100)).model
        mae_pipe = metric_report(pred, y, 5).mae
        mae_direct = metric_report(predict(direct, X), y, 5).mae
        assert abs(mae_pipe - mae_direct) < 0.1


class TestConstrainedArgmax:
    def test_true_label_oracle(self, small):
        space = small.space
        for x, y in zip(small.X, small.y):
            oracle = lambda _x, k, y=y: 0.0 if k == y else -math.inf
            assert constrained_label_argmax(oracle, x, space) == y

    def test_constant_oracle_tie(self):
        assert constrained_label_argmax(lambda x, k: 1.0, None, LabelSpace.of_size(5)) == 1

    def test_nan_scores_rank_last(self):
        scores = {1: math.nan, 2: -3.0, 3: math.nan}
        assert constrained_label_argmax(lambda x, k: scores[k], None, 3) == 2

    def test_oracle_errors_propagate(self):
        def oracle(x, k):
            if k == 3:
                raise KeyError("boom")
            return 0.0

        with pytest.raises(KeyError):
            constrained_label_argmax(oracle, None, 4)

    def test_matches_entailment_argmax(self, separable, informative, trained):
        X, _ = separable.part("test")
        oracle = lambda x, k: float(trained(compose(x, informative.blocks[k - 1])))
        for x in X[:100]:
            assert constrained_label_argmax(oracle, x, separable.space) == infer_entailment(x, informative,
                                                                                          trained)[0]

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.one_of(st.floats(allow_nan=True, allow_infinity=True)), min_size=2, max_size=9))
    def test_always_in_label_set(self, scores):
        K = len(scores)
        assert 1 <= constrained_label_argmax(lambda x, k: scores[k - 1], None, K) <= K


class TestAblation:
    def test_reports_complete(self):
        data = generate_synthetic(400, 5, 3, 0.3, seed=0)
        cfg = AblationConfig(train=TrainConfig(lr=0.1, epochs=3, batch_size=64), fractions=(0.5, 1.0),
                             seeds=(0, 1, 2, 3, 4), dim=8)
        result = ablate_verbalisers(data, cfg)
        assert set(result.reports) == {(m, f) for m in ("informative", "uninformative") for f in (0.5, 1.0)}
        agg = result.aggregate("informative", 0.5)
        assert agg.n == 5
        assert set(agg.std) >= {"f1_weighted", "mae", "mse", "ob1"}
        assert isinstance(result.gap(1.0), float)
