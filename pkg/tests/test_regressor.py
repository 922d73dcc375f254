import numpy as np
import pytest

from eqn.errors import DataError, NumericalError, UsageError
from eqn.featurize import FeatureVector, FeaturizerConfig, featurize
from eqn.regressor import (
    Checkpoint,
    LinearModel,
    MlpModel,
    TrainConfig,
    featurizer_fingerprint,
    gradient_check,
    init_model,
    load_checkpoint,
    mse_loss,
    predict,
    predict_batch,
    save_checkpoint,
    to_matrix,
    train,
)

RAW = FeaturizerConfig(dim=256, weighting="raw-count")


def fv(values: dict[int, float]) -> FeatureVector:
    return FeatureVector.from_entries({k: float(v) for k, v in values.items()})


def scalar_inputs():
    features = [fv({}), fv({0: 1.0}), fv({0: 2.0})]
    targets = [[0.0], [10.0], [20.0]]
    return features, targets


class TestLinearTraining:
    def test_exact_fit_learns_slope_ten(self):
        features, targets = scalar_inputs()
        cfg = TrainConfig(epochs=300, learning_rate=0.3, batch_size=3, seed=0, l2=0.0)
        model, report = train(features, targets, [], [], cfg, "linear", dim=2)
        assert report.train_losses[-1] < 1e-4
        assert model.weights[0, 0] == pytest.approx(10.0, abs=0.05)
        assert model.biases[0] == pytest.approx(0.0, abs=0.05)

    def test_predict_extrapolates(self):
        features, targets = scalar_inputs()
        cfg = TrainConfig(epochs=300, learning_rate=0.3, batch_size=3, seed=0, l2=0.0)
        model, _ = train(features, targets, [], [], cfg, "linear", dim=2)
        assert predict(model, fv({0: 3.0}))[0] == pytest.approx(30.0, abs=0.2)

    def test_constant_targets_land_in_biases(self):
        rng = np.random.default_rng(0)
        features = [fv({int(i): 1.0 for i in rng.choice(64, size=5, replace=False)}) for _ in range(40)]
        targets = [[5.0, 5.0]] * 40
        cfg = TrainConfig(epochs=500, learning_rate=0.1, batch_size=40, seed=0, l2=0.01)
        model, _ = train(features, targets, [], [], cfg, "linear", dim=64)
        assert np.allclose(model.biases, 5.0, atol=0.1)
        assert np.abs(model.weights).max() < 0.1

    def test_divergence_raises_with_advice(self):
        features, targets = scalar_inputs()
        cfg = TrainConfig(epochs=50, learning_rate=1e4, batch_size=1, seed=0)
        with pytest.raises(NumericalError, match="learning rate"):
            train(features, targets, [], [], cfg, "linear", dim=2)

    def test_patience_without_validation_rejected(self):
        features, targets = scalar_inputs()
        cfg = TrainConfig(epochs=5, patience=2)
        with pytest.raises(UsageError):
            train(features, targets, [], [], cfg, "linear", dim=2)

    def test_full_batch_loss_non_increasing(self):
        rng = np.random.default_rng(1)
        features = [fv({int(i): 1.0 for i in rng.choice(32, size=4, replace=False)}) for _ in range(30)]
        targets = rng.uniform(0, 10, size=(30, 3))
        cfg = TrainConfig(epochs=40, learning_rate=0.01, batch_size=30, seed=0, l2=0.0)
        _, report = train(features, targets, [], [], cfg, "linear", dim=32)
        diffs = np.diff(report.train_losses)
        assert np.all(diffs <= 1e-12)

    def test_growing_l2_shrinks_weights(self):
        rng = np.random.default_rng(2)
        features = [fv({int(i): 1.0 for i in rng.choice(32, size=4, replace=False)}) for _ in range(30)]
        targets = rng.uniform(0, 10, size=(30, 2))
        norms = []
        for l2 in (1e-4, 1e-3, 1e-2, 1e-1):
            cfg = TrainConfig(epochs=100, learning_rate=0.02, batch_size=30, seed=0, l2=l2)
            model, _ = train(features, targets, [], [], cfg, "linear", dim=32)
            norms.append(float(np.linalg.norm(model.weights)))
        assert all(a > b for a, b in zip(norms, norms[1:]))

    def test_seeded_reproducibility_bit_identical(self):
        rng = np.random.default_rng(3)
        features = [fv({int(i): 1.0 for i in rng.choice(64, size=6, replace=False)}) for _ in range(50)]
        targets = rng.uniform(0, 10, size=(50, 3))
        cfg = TrainConfig(epochs=15, learning_rate=0.02, batch_size=8, seed=42)
        m1, _ = train(features[:40], targets[:40], features[40:], targets[40:], cfg, "mlp", dim=64)
        m2, _ = train(features[:40], targets[:40], features[40:], targets[40:], cfg, "mlp", dim=64)
        for a, b in zip(m1.params(), m2.params()):
            assert np.array_equal(a, b)

    def test_model_selection_prefers_best_validation_epoch(self):
        rng = np.random.default_rng(4)
        features = [fv({int(i): 1.0 for i in rng.choice(32, size=4, replace=False)}) for _ in range(40)]
        targets = rng.uniform(0, 10, size=(40, 2))
        cfg = TrainConfig(epochs=30, learning_rate=0.05, batch_size=8, seed=0)
        model, report = train(features[:30], targets[:30], features[30:], targets[30:], cfg, "linear", dim=32)
        x_val = to_matrix(features[30:], 32)
        best = min(report.val_losses)
        assert report.val_losses[report.best_epoch] == best
        assert mse_loss(model, x_val, targets[30:]) == pytest.approx(best, abs=1e-12)


class TestMlpTraining:
    def test_beats_constant_predictor_baseline(self):
        # Bag-of-words over 3 topic word groups; targets follow the group mix.
        rng = np.random.default_rng(5)
        cfg_feat = FeaturizerConfig(dim=512, weighting="raw-count")
        features, targets = [], []
        for _ in range(240):
            mix = rng.dirichlet([1.0, 1.0, 1.0])
            words = rng.choice(3, size=30, p=mix)
            text = " ".join(f"topic{w}_{rng.integers(0, 10)}" for w in words)
            features.append(featurize(text, cfg_feat))
            targets.append((10.0 * mix).tolist())
        split = 200
        cfg = TrainConfig(epochs=40, learning_rate=0.01, batch_size=32, seed=1, hidden_size=32, l2=1e-4)
        _, report = train(
            features[:split], targets[:split], features[split:], targets[split:], cfg, "mlp", dim=512
        )
        train_mean = np.mean(targets[:split], axis=0)
        val = np.asarray(targets[split:])
        baseline = float(np.mean((val - train_mean) ** 2) / 2.0)
        assert min(report.val_losses) < baseline

    def test_warm_start_resumes_from_given_model(self):
        features, targets = scalar_inputs()
        cfg = TrainConfig(epochs=1, learning_rate=1e-9, batch_size=3, seed=0, l2=0.0)
        start = LinearModel(np.full((1, 2), 7.0), np.array([3.0]))
        model, _ = train(features, targets, [], [], cfg, "linear", dim=2, initial=start)
        assert model.weights[0, 0] == pytest.approx(7.0, abs=1e-6)
        assert start.weights[0, 0] == 7.0  # the initial model is not mutated


class TestPredict:
    def test_zero_vector_returns_biases_exactly(self):
        model = LinearModel(np.ones((3, 8)), np.array([1.0, 2.0, 3.0]))
        assert predict(model, fv({})).tolist() == [1.0, 2.0, 3.0]
        mlp = init_model("mlp", 8, 2, TrainConfig(hidden_size=4), np.random.default_rng(0))
        assert predict(mlp, fv({})).tolist() == [0.0, 0.0]

    def test_batch_equals_per_sample_map(self):
        rng = np.random.default_rng(6)
        model = MlpModel(
            rng.normal(size=(5, 16)), rng.normal(size=5), rng.normal(size=(3, 5)), rng.normal(size=3)
        )
        features = [
            fv({int(i): float(rng.uniform(0, 3)) for i in rng.choice(16, size=4, replace=False)})
            for _ in range(10)
        ]
        batch = predict_batch(model, features)
        for i, one in enumerate(features):
            assert np.array_equal(batch[i], predict(model, one))

    def test_feature_index_out_of_model_range(self):
        model = LinearModel(np.zeros((2, 4)), np.zeros(2))
        with pytest.raises(DataError):
            predict(model, fv({9: 1.0}))


class TestGradientCheck:
    def batch(self, rng, dim, c, n=8):
        features = [
            fv({int(i): float(rng.uniform(0.5, 2.0)) for i in rng.choice(dim, size=5, replace=False)})
            for _ in range(n)
        ]
        targets = rng.uniform(0, 10, size=(n, c))
        return features, targets

    def test_fresh_mlp_under_1e4(self):
        rng = np.random.default_rng(7)
        model = init_model("mlp", 32, 3, TrainConfig(hidden_size=8), rng)
        features, targets = self.batch(rng, 32, 3)
        assert gradient_check(model, features, targets) < 1e-4

    def test_randomized_mlp_under_1e4(self):
        rng = np.random.default_rng(8)
        model = MlpModel(
            rng.normal(scale=0.3, size=(8, 32)),
            rng.normal(scale=0.1, size=8),
            rng.normal(scale=0.3, size=(3, 8)),
            rng.normal(scale=0.1, size=3),
        )
        features, targets = self.batch(rng, 32, 3)
        assert gradient_check(model, features, targets) < 1e-4

    def test_linear_under_1e6(self):
        rng = np.random.default_rng(9)
        model = LinearModel(rng.normal(scale=0.3, size=(3, 32)), rng.normal(size=3))
        features, targets = self.batch(rng, 32, 3)
        assert gradient_check(model, features, targets) < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        model = LinearModel(rng.normal(size=(2, 16)), rng.normal(size=2))
        features, targets = self.batch(rng, 16, 2)
        assert gradient_check(model, features, targets) == gradient_check(model, features, targets)


class TestCheckpoint:
    def make(self, backend="linear"):
        rng = np.random.default_rng(11)
        cfg = FeaturizerConfig(dim=64, weighting="tfidf")
        idf = [float(v) for v in rng.uniform(1.0, 3.0, size=64)]
        model = init_model(backend, 64, 3, TrainConfig(hidden_size=4), rng)
        return Checkpoint(backend, model, ("a", "b", "c"), cfg, idf)

    def test_round_trip(self, tmp_path):
        for backend in ("linear", "mlp"):
            ckpt = self.make(backend)
            path = tmp_path / f"{backend}.ckpt"
            save_checkpoint(ckpt, path)
            loaded = load_checkpoint(path)
            assert loaded.backend == backend
            assert loaded.labels == ("a", "b", "c")
            assert loaded.featurizer == ckpt.featurizer
            assert loaded.fingerprint == ckpt.fingerprint
            assert np.allclose(loaded.idf, ckpt.idf)
            for a, b in zip(loaded.model.params(), ckpt.model.params()):
                assert np.array_equal(a, b)

    def test_deterministic_bytes(self, tmp_path):
        ckpt = self.make()
        save_checkpoint(ckpt, tmp_path / "a.ckpt")
        save_checkpoint(ckpt, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(path)

    def test_fingerprint_tracks_featurizer_state(self):
        cfg = FeaturizerConfig(dim=64)
        assert featurizer_fingerprint(cfg, None) != featurizer_fingerprint(cfg, [1.0] * 64)
        assert featurizer_fingerprint(cfg, [1.0] * 64) == featurizer_fingerprint(cfg, [1.0] * 64)
        other = FeaturizerConfig(dim=64, seed=5)
        assert featurizer_fingerprint(cfg, None) != featurizer_fingerprint(other, None)


def test_to_matrix_round_trip():
    features = [fv({1: 2.0, 5: 1.0}), fv({}), fv({7: 3.0})]
    x = to_matrix(features, 8)
    dense = x.toarray()
    assert dense[0, 1] == 2.0 and dense[0, 5] == 1.0
    assert dense[1].sum() == 0.0
    assert dense[2, 7] == 3.0
