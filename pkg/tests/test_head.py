import numpy as np
import pytest

from drivelabel.crf import CrfParams
from drivelabel.errors import DegenerateTrainingError, DimensionMismatchError, WeightsFileError
from drivelabel.features import FeatureGrid
from drivelabel.head import (
    HeadWeights,
    TrainConfig,
    calibrate_temperature,
    load_weights,
    loss_and_grad,
    predict,
    predict_refined,
    save_weights,
    train_head,
)
from drivelabel.trajectory import patch_grid_to_mask


def separable_data(rng, frames=8, rows=6, cols=6, dim=16, margin=3.0):
    """Linearly separable clusters: positives at +mu, negatives at -mu."""
    mu = np.zeros(dim)
    mu[0] = margin
    out = []
    for _ in range(frames):
        labels = rng.random((rows, cols)) > 0.5
        noise = rng.standard_normal((rows, cols, dim)) * 0.3
        values = np.where(labels[..., None], mu, -mu) + noise
        out.append((FeatureGrid(values=values.astype(np.float32)), labels))
    return out


class TestTrainHead:
    def test_separable_clusters_learned(self, rng):
        data = separable_data(rng)
        cfg = TrainConfig(learning_rate=0.5, batch_size=2, epochs=50, seed=0)
        weights = train_head(data[:6], data[6:], cfg)
        correct = total = 0
        for grid, labels in data:
            pred, _ = predict(grid, weights)
            correct += (pred == labels).sum()
            total += labels.size
        assert correct / total >= 0.99

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_gradient_matches_central_differences(self, rng):
        """Analytic gradient vs finite differences on a 5-patch toy batch."""
        x = rng.standard_normal((5, 7))
        y = (rng.random(5) > 0.5).astype(np.float64)
        w = rng.standard_normal(7) * 0.5
        b = 0.3
        for decay in (0.0, 0.01):
            loss, gw, gb = loss_and_grad(w, b, x, y, decay)
            eps = 1e-6
            for i in range(7):
                dw = np.zeros(7)
                dw[i] = eps
                lp, _, _ = loss_and_grad(w + dw, b, x, y, decay)
                lm, _, _ = loss_and_grad(w - dw, b, x, y, decay)
                fd = (lp - lm) / (2 * eps)
                assert gw[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)
            lp, _, _ = loss_and_grad(w, b + eps, x, y, decay)
            lm, _, _ = loss_and_grad(w, b - eps, x, y, decay)
            assert gb == pytest.approx((lp - lm) / (2 * eps), rel=1e-5, abs=1e-9)

    def test_full_batch_loss_non_increasing(self, rng):
        data = separable_data(rng, frames=4)
        x = np.concatenate([g.values.reshape(-1, 16) for g, _ in data]).astype(np.float64)
        y = np.concatenate([l.ravel() for _, l in data]).astype(np.float64)
        w = np.zeros(16)
        b = 0.0
        lr = 0.05
        losses = []
        for _ in range(50):
            loss, gw, gb = loss_and_grad(w, b, x, y)
            losses.append(loss)
            w -= lr * gw
            b -= lr * gb
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_single_class_labels_rejected(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((4, 4, 8)).astype(np.float32))
        ones = np.ones((4, 4), dtype=bool)
        with pytest.raises(DegenerateTrainingError):
            train_head([(grid, ones)], [(grid, ones)], TrainConfig())

    def test_reproducible(self, rng):
        data = separable_data(rng)
        cfg = TrainConfig(learning_rate=0.2, batch_size=2, epochs=10, seed=5)
        w1 = train_head(data[:6], data[6:], cfg)
        w2 = train_head(data[:6], data[6:], cfg)
        assert w1.weight.tobytes() == w2.weight.tobytes()
        assert w1.bias == w2.bias

    def test_patch_batch_mode(self, rng):
        data = separable_data(rng)
        cfg = TrainConfig(learning_rate=0.5, batch_size=64, batch_mode="patches", epochs=30, seed=0)
        weights = train_head(data[:6], data[6:], cfg)
        pred, _ = predict(data[0][0], weights)
        assert (pred == data[0][1]).mean() >= 0.95


class TestPredict:
    def test_zero_weights_give_half(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((3, 3, 4)).astype(np.float32))
        weights = HeadWeights(weight=np.zeros(4), bias=0.0)
        mask, prob = predict(grid, weights)
        assert np.allclose(prob, 0.5)
        assert mask.all()  # ties at the threshold count as drivable

    def test_probabilities_in_open_interval(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((3, 3, 4)).astype(np.float32))
        weights = HeadWeights(weight=rng.standard_normal(4), bias=0.1)
        _, prob = predict(grid, weights)
        assert np.all((prob > 0.0) & (prob < 1.0))

    def test_dim_mismatch(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((3, 3, 4)).astype(np.float32))
        with pytest.raises(DimensionMismatchError):
            predict(grid, HeadWeights(weight=np.zeros(5), bias=0.0))

    def test_threshold_scale_consistency(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((5, 5, 6)).astype(np.float32))
        weights = HeadWeights(weight=rng.standard_normal(6), bias=-0.2)
        mask, prob = predict(grid, weights, threshold=0.7)
        z = grid.values.reshape(-1, 6).astype(np.float64) @ weights.weight + weights.bias
        logit = np.log(0.7 / 0.3)
        assert (mask.ravel() == (z >= logit - 1e-12)).all()

    def test_temperature_keeps_default_threshold_mask(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((5, 5, 6)).astype(np.float32))
        w = rng.standard_normal(6)
        plain = HeadWeights(weight=w, bias=0.05)
        tempered = HeadWeights(weight=w, bias=0.05, metadata={"temperature": 3.0})
        m1, p1 = predict(grid, plain)
        m2, p2 = predict(grid, tempered)
        assert (m1 == m2).all()
        assert not np.allclose(p1, p2)


class TestPredictRefined:
    def test_zero_pairwise_equals_upsampled_predict(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((4, 4, 6)).astype(np.float32))
        weights = HeadWeights(weight=rng.standard_normal(6) * 2.0, bias=0.0)
        image = rng.integers(0, 255, (56, 56, 3), dtype=np.uint8)
        params = CrfParams(a=0.0, b=0.0)
        mask, _ = predict_refined(grid, weights, image, params, horizon_row=0, confidence_cap=1.0 - 1e-9)
        patch_mask, _ = predict(grid, weights)
        assert (mask == patch_grid_to_mask(patch_mask, 14)).all()

    def test_no_drivable_above_horizon(self, rng):
        grid = FeatureGrid(values=rng.standard_normal((4, 4, 6)).astype(np.float32))
        weights = HeadWeights(weight=np.zeros(6), bias=5.0)  # everything drivable
        image = np.full((56, 56, 3), 120, dtype=np.uint8)
        mask, _ = predict_refined(grid, weights, image, CrfParams(), horizon_row=21)
        assert not mask[:21].any()
        assert mask[21:].any()


class TestWeightsFile:
    def test_roundtrip(self, tmp_path, rng):
        weights = HeadWeights(
            weight=rng.standard_normal(16).astype(np.float32).astype(np.float64),
            bias=0.25,
            metadata={"epoch": 3, "val_iou": 0.9, "dim": 16},
        )
        path = tmp_path / "head.tdhw"
        save_weights(path, weights)
        loaded = load_weights(path)
        assert np.allclose(loaded.weight, weights.weight, atol=1e-7)
        assert loaded.bias == pytest.approx(weights.bias, abs=1e-7)
        assert loaded.metadata["epoch"] == 3

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "head.tdhw"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(WeightsFileError):
            load_weights(path)

    def test_truncated(self, tmp_path):
        import struct

        path = tmp_path / "head.tdhw"
        path.write_bytes(b"TDHW" + struct.pack("<II", 1, 100))
        with pytest.raises(WeightsFileError):
            load_weights(path)


def test_calibration_improves_val_nll(rng):
    data = separable_data(rng)
    cfg = TrainConfig(learning_rate=0.5, batch_size=2, epochs=40, seed=0)
    weights = train_head(data[:6], data[6:], cfg)
    calibrated = calibrate_temperature(weights, data[6:])
    assert calibrated.metadata["temperature"] > 0
    m1, _ = predict(data[7][0], weights)
    m2, _ = predict(data[7][0], calibrated)
    assert (m1 == m2).all()
