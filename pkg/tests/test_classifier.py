import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amava.classifier import (
    Branch,
    MlpParams,
    MovementClass,
    Scaler,
    TrainConfig,
    classify,
    cross_entropy_loss,
    forward,
    init_params,
    load_model,
    loss_and_grads,
    save_model,
    scaler_fit,
    scaler_transform,
    train,
)
from amava.corpus import make_feature_dataset
from amava.errors import DegenerateVarianceError, MissingClassError, ModelFormatError
from amava.frames import MotionFeatures


def zero_params() -> MlpParams:
    return MlpParams(
        W1=np.zeros((32, 2)), b1=np.zeros(32),
        W2=np.zeros((16, 32)), b2=np.zeros(16),
        W3=np.zeros((3, 16)), b3=np.zeros(3),
    )


class TestScaler:
    def test_two_point_fit(self):
        scaler = scaler_fit([(0.0, 0.0), (2.0, 2.0)])
        assert np.allclose(scaler.mean, [1.0, 1.0])
        assert np.allclose(scaler.std, [1.0, 1.0])  # population std of {0, 2}

    def test_mean_by_hand(self):
        scaler = scaler_fit([(1.0, 10.0), (3.0, 30.0), (5.0, 50.0)])
        assert np.allclose(scaler.mean, [3.0, 30.0])

    def test_constant_rows_rejected(self):
        with pytest.raises(DegenerateVarianceError):
            scaler_fit([(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)])

    def test_transform_centering_and_scaling(self):
        scaler = Scaler(mean=np.array([1.0, 1.0]), std=np.array([2.0, 2.0]))
        assert np.allclose(scaler_transform(scaler, np.array([1.0, 1.0])), [0.0, 0.0])
        assert np.allclose(scaler_transform(scaler, np.array([3.0, 3.0])), [1.0, 1.0])
        assert np.allclose(scaler_transform(scaler, np.array([5.0, -3.0])), [2.0, -2.0])

    def test_transform_motion_features(self):
        scaler = Scaler(mean=np.array([2.0, 4.0]), std=np.array([2.0, 4.0]))
        out = scaler_transform(scaler, MotionFeatures(4.0, 8.0))
        assert np.allclose(out, [1.0, 1.0])


class TestForward:
    def test_zero_params_uniform(self):
        probs = forward(zero_params(), np.array([0.7, -1.2]))
        assert np.allclose(probs, [1 / 3, 1 / 3, 1 / 3])

    def test_bias_only_softmax_by_hand(self):
        params = zero_params()
        params.b3[:] = np.array([np.log(2.0), 0.0, 0.0], dtype=np.float32)
        probs = forward(params, np.array([5.0, 5.0]))
        # logits (ln 2, 0, 0) -> (2, 1, 1)/4
        assert np.allclose(probs, [0.5, 0.25, 0.25], atol=1e-7)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_sums_to_one_positive(self, seed):
        rng = np.random.default_rng(seed)
        params = init_params(seed % 1000)
        x = rng.normal(0, 3, size=2)
        probs = forward(params, x)
        assert abs(probs.sum() - 1.0) <= 1e-9
        assert np.all(probs > 0)


class TestClassify:
    def _scaler(self):
        return Scaler(mean=np.zeros(2), std=np.ones(2))

    def _params_with_logits(self, logits):
        params = zero_params()
        params.b3[:] = np.asarray(logits, dtype=np.float32)
        return params

    def test_low_wins(self):
        params = self._params_with_logits([2.0, 0.0, 0.0])
        cls, branch = classify(params, self._scaler(), MotionFeatures(0.0, 0.0))
        assert cls is MovementClass.LOW
        assert branch is Branch.LOW

    def test_medium_routes_high(self):
        params = self._params_with_logits([0.0, 2.0, 0.0])
        cls, branch = classify(params, self._scaler(), MotionFeatures(0.0, 0.0))
        assert cls is MovementClass.MEDIUM
        assert branch is Branch.HIGH

    def test_tie_breaks_toward_higher_movement(self):
        params = self._params_with_logits([1.0, 1.0, 0.0])
        cls, branch = classify(params, self._scaler(), MotionFeatures(0.0, 0.0))
        assert cls is MovementClass.MEDIUM
        assert branch is Branch.HIGH

    @given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_argmax_invariant_under_monotone_logit_maps(self, scale, offset):
        params = self._params_with_logits([0.3, 1.7, -0.4])
        mapped = self._params_with_logits(
            [0.3 * scale + offset, 1.7 * scale + offset, -0.4 * scale + offset]
        )
        features = MotionFeatures(1.0, 1.0)
        assert classify(params, self._scaler(), features) == classify(
            mapped, self._scaler(), features
        )


class TestGradients:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(123)
        params = init_params(123)
        tensors = [t.astype(np.float64) for t in params.tensors()]
        x = rng.normal(0, 1, size=(8, 2))
        y = rng.integers(0, 3, size=8)

        _, grads = loss_and_grads(tensors, x, y, dropout_mask=None)

        h = 1e-4
        worst = 0.0
        for t_idx, tensor in enumerate(tensors):
            flat = tensor.ravel()
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + h
                up = cross_entropy_loss(tensors, x, y)
                flat[j] = original - h
                down = cross_entropy_loss(tensors, x, y)
                flat[j] = original
                numeric = (up - down) / (2 * h)
                analytic = grads[t_idx].ravel()[j]
                denom = max(abs(numeric) + abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / denom)
        assert worst <= 1e-3


class TestTraining:
    def test_separable_dataset_reaches_95(self):
        features, labels = make_feature_dataset(n_per_class=200, seed=7)
        params, scaler, report = train(features, labels, TrainConfig(seed=7))
        assert report.test_accuracy >= 0.95

    def test_deterministic_under_seed(self):
        features, labels = make_feature_dataset(n_per_class=60, seed=3)
        cfg = TrainConfig(seed=42, max_epochs=40)
        _, _, first = train(features, labels, cfg)
        _, _, second = train(features, labels, cfg)
        assert first.test_accuracy == second.test_accuracy
        assert first.epochs_run == second.epochs_run
        assert first.val_losses == second.val_losses

    def test_missing_class_rejected(self):
        features, labels = make_feature_dataset(n_per_class=30, seed=1)
        keep = np.array([lbl is not MovementClass.MEDIUM for lbl in labels])
        with pytest.raises(MissingClassError):
            train(features[keep], labels[keep], TrainConfig(seed=1))

    def test_training_loss_improves_on_separable_data(self):
        features, labels = make_feature_dataset(n_per_class=100, seed=5)
        _, _, report = train(features, labels, TrainConfig(seed=5, max_epochs=30))
        assert report.train_losses[-1] < report.train_losses[0]

    @pytest.mark.parametrize("k,patience", [(4, 5), (7, 3), (1, 2)])
    def test_early_stopping_stops_at_k_plus_patience(self, k, patience):
        features, labels = make_feature_dataset(n_per_class=30, seed=2)

        def stub_val_loss(params, x_val, y_val, epoch):
            # improves through epoch k, strictly increases afterwards
            return 10.0 - epoch if epoch <= k else 10.0 - k + (epoch - k)

        cfg = TrainConfig(seed=2, patience=patience, max_epochs=100)
        _, _, report = train(features, labels, cfg, val_loss_fn=stub_val_loss)
        assert report.epochs_run == k + patience
        assert report.best_epoch == k


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        features, labels = make_feature_dataset(n_per_class=40, seed=9)
        params, scaler, _ = train(features, labels, TrainConfig(seed=9, max_epochs=15))
        path = tmp_path / "model.amv"
        save_model(params, scaler, path)
        loaded_params, loaded_scaler = load_model(path)
        for original, loaded in zip(params.tensors(), loaded_params.tensors()):
            assert original.tobytes() == loaded.tobytes()

        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.normal(0, 2, size=2)
            assert np.array_equal(forward(params, x), forward(loaded_params, x))

        # a second round trip is exact including the scaler floats
        path2 = tmp_path / "model2.amv"
        save_model(loaded_params, loaded_scaler, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "model.amv"
        params, scaler = init_params(0), Scaler(np.zeros(2) + 1, np.ones(2))
        save_model(params, scaler, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.amv"
        path.write_bytes(b"NOT-A-MODEL" + b"\x00" * 100)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_wrong_shape_names_tensor(self, tmp_path):
        import struct

        path = tmp_path / "model.amv"
        blob = bytearray(b"AMAVA-MLP1")
        blob += struct.pack("<4f", 0.0, 0.0, 1.0, 1.0)
        blob += struct.pack("<II", 31, 2) + b"\x00" * (31 * 2 * 4)
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError, match="W1"):
            load_model(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "model.amv"
        save_model(init_params(1), Scaler(np.ones(2), np.ones(2)), path)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(ModelFormatError):
            load_model(path)


class TestBranchAccuracyOnClips:
    def test_held_out_synthetic_clips(self, trained_model):
        """Desk-scale stand-in for live benchmarking: 40 clips, binary branch."""
        from amava.corpus import make_clip_corpus
        from amava.frames import FrameBatch, downscale, extract_features

        params, scaler, _ = trained_model
        clips = make_clip_corpus(n_static=20, n_translating=20, seed=21, size=(480, 360))
        correct = 0
        for (first, second), label in clips:
            batch = FrameBatch((downscale(first), downscale(second)), 0)
            features = extract_features(batch)
            _, branch = classify(params, scaler, features)
            correct += branch.value == label
        assert correct / len(clips) >= 0.95
