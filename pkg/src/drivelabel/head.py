"""Linear projection head over frozen patch features.

Per-patch logistic regression trained with mini-batch SGD against generated
labels; the best epoch is selected by validation IoU. The weights file format
(binary, little-endian):

    magic   4 bytes  b"TDHW"
    version u32      1
    dim     u32
    weight  dim float32
    bias    float32
    trailer UTF-8 JSON metadata until end of file
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTrainingError, DimensionMismatchError, WeightsFileError
from .features import FeatureGrid

MAGIC = b"TDHW"
VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    batch_mode: str = "frames"  # "frames": batches of frames; "patches": batches of patches
    epochs: int = 50
    seed: int = 0
    weight_decay: float = 0.0  # L2 penalty; keeps probabilities calibrated
    val_horizon_patch_rows: int = 0  # top patch rows excluded from the validation score

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_mode not in ("frames", "patches"):
            raise ValueError(f"unknown batch_mode {self.batch_mode!r}")

    def fingerprint(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class HeadWeights:
    weight: np.ndarray  # (dim,) float64
    bias: float
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.weight)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_grad(
    weight: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, weight_decay: float = 0.0
):
    """Mean binary cross-entropy (plus optional L2 on the weights) and gradient.

    Args:
        x: (n, dim) features; y: (n,) 0/1 targets.

    Returns:
        (loss, grad_weight, grad_bias)
    """
    z = x @ weight + bias
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)))
    r = (p - y) / len(y)
    gw = x.T @ r
    if weight_decay > 0.0:
        loss += 0.5 * weight_decay * float(weight @ weight)
        gw = gw + weight_decay * weight
    return loss, gw, float(r.sum())


def _patch_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    tp = int((pred & gt).sum())
    fp = int((pred & ~gt).sum())
    fn = int((~pred & gt).sum())
    if tp + fp + fn == 0:
        return 1.0
    return tp / (tp + fp + fn)


def train_head(
    train: list[tuple[FeatureGrid, np.ndarray]],
    val: list[tuple[FeatureGrid, np.ndarray]],
    cfg: TrainConfig,
) -> HeadWeights:
    """Fit the head on (grid, label-mask) pairs; keep the best-validation epoch.

    Deterministic for a fixed seed: shuffling comes from one seeded generator
    and gradients are accumulated in a fixed order.

    Raises:
        DegenerateTrainingError: training labels are all one class.
    """
    if not train or not val:
        raise DegenerateTrainingError("train and validation sets must be non-empty")
    dim = train[0][0].dim
    for grid, label in train + val:
        if grid.dim != dim:
            raise DimensionMismatchError("inconsistent feature dims in training data")
        if np.asarray(label).shape != (grid.rows, grid.cols):
            raise DimensionMismatchError("label shape does not match grid")

    frames_x = [g.values.reshape(-1, dim).astype(np.float64) for g, _ in train]
    frames_y = [np.asarray(l, dtype=bool).ravel().astype(np.float64) for _, l in train]
    all_y = np.concatenate(frames_y)
    if all_y.min() == all_y.max():
        raise DegenerateTrainingError("training labels contain a single class")

    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(dim)
    b = 0.0
    best = HeadWeights(weight=w.copy(), bias=b, metadata={"epoch": 0, "val_iou": -1.0})

    if cfg.batch_mode == "patches":
        pool_x = np.concatenate(frames_x)
        pool_y = all_y

    crop = cfg.val_horizon_patch_rows
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_mode == "frames":
            order = rng.permutation(len(frames_x))
            for start in range(0, len(order), cfg.batch_size):
                sel = order[start : start + cfg.batch_size]
                x = np.concatenate([frames_x[i] for i in sel])
                y = np.concatenate([frames_y[i] for i in sel])
                _, gw, gb = loss_and_grad(w, b, x, y, cfg.weight_decay)
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
        else:
            order = rng.permutation(len(pool_y))
            for start in range(0, len(order), cfg.batch_size):
                sel = order[start : start + cfg.batch_size]
                _, gw, gb = loss_and_grad(w, b, pool_x[sel], pool_y[sel], cfg.weight_decay)
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb

        tp = fp = fn = 0
        for grid, gt in val:
            pred, _ = predict(grid, HeadWeights(weight=w, bias=b))
            p = pred[crop:, :]
            g = np.asarray(gt, dtype=bool)[crop:, :]
            tp += int((p & g).sum())
            fp += int((p & ~g).sum())
            fn += int((~p & g).sum())
        val_iou = 1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)
        if val_iou > best.metadata["val_iou"]:
            best = HeadWeights(
                weight=w.copy(),
                bias=float(b),
                metadata={"epoch": epoch, "val_iou": float(val_iou)},
            )

    best.metadata.update({"dim": dim, "config": cfg.fingerprint()})
    return best


def predict(
    grid: FeatureGrid, weights: HeadWeights, threshold: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch drivability probability and thresholded mask (p >= threshold).

    Applies the calibration temperature when the weights carry one; at the
    default 0.5 threshold the mask itself is temperature-invariant.
    """
    if grid.dim != weights.dim:
        raise DimensionMismatchError(
            f"grid dim {grid.dim} does not match weights dim {weights.dim}"
        )
    z = grid.values.reshape(-1, grid.dim).astype(np.float64) @ weights.weight + weights.bias
    z = z / float(weights.metadata.get("temperature", 1.0))
    p = _sigmoid(z).reshape(grid.rows, grid.cols)
    return p >= threshold, p


def calibrate_temperature(
    weights: HeadWeights, val: list[tuple[FeatureGrid, np.ndarray]]
) -> HeadWeights:
    """Fit a softmax temperature on validation data by minimizing cross-entropy.

    Downstream refinement consumes the head output as a likelihood, so the
    probabilities should be calibrated, not just correctly ranked. Returns a
    copy of the weights with ``temperature`` recorded in the metadata.
    """
    zs, ys = [], []
    for grid, gt in val:
        z = grid.values.reshape(-1, grid.dim).astype(np.float64) @ weights.weight + weights.bias
        zs.append(z)
        ys.append(np.asarray(gt, dtype=bool).ravel())
    z = np.concatenate(zs)
    y = np.concatenate(ys).astype(np.float64)

    def nll(log_t: float) -> float:
        p = _sigmoid(z / math.exp(log_t))
        eps = 1e-12
        return float(-np.mean(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)))

    lo, hi = -2.0, 3.0
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - golden * (b - a), a + golden * (b - a)
    fc, fd = nll(c), nll(d)
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - golden * (b - a)
            fc = nll(c)
        else:
            a, c, fc = c, d, fd
            d = a + golden * (b - a)
            fd = nll(d)
    temperature = math.exp((a + b) / 2.0)
    metadata = dict(weights.metadata)
    metadata["temperature"] = float(temperature)
    return HeadWeights(weight=weights.weight.copy(), bias=weights.bias, metadata=metadata)


def predict_refined(
    grid: FeatureGrid,
    weights: HeadWeights,
    image: np.ndarray,
    crf_params,
    horizon_row: int = 0,
    confidence_cap: float = 0.85,
) -> tuple[np.ndarray, np.ndarray]:
    """CRF-refined full-resolution prediction, horizon-cropped.

    Head probabilities are clamped to [1 - cap, cap] before the unary logs:
    the refinement stage weighs the head against image evidence, and an
    uncapped, saturated unary would veto image-level corrections of isolated
    feature errors. Returns (mask, marginals).
    """
    from .crf import build_unary, crf_refine

    _, prob = predict(grid, weights)
    prob = np.clip(prob, 1.0 - confidence_cap, confidence_cap)
    unary = build_unary(prob, image.shape[:2], crf_params.epsilon)
    mask, marginals = crf_refine(unary, image, crf_params)
    if horizon_row > 0:
        mask = mask.copy()
        mask[: min(horizon_row, mask.shape[0]), :] = False
    return mask, marginals


def save_weights(path, weights: HeadWeights) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, weights.dim))
        f.write(np.asarray(weights.weight, dtype="<f4").tobytes())
        f.write(struct.pack("<f", weights.bias))
        f.write(json.dumps(weights.metadata, sort_keys=True).encode("utf-8"))


def load_weights(path) -> HeadWeights:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise WeightsFileError(f"{path}: bad magic")
    version, dim = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise WeightsFileError(f"{path}: unsupported version {version}")
    need = 12 + dim * 4 + 4
    if len(data) < need:
        raise WeightsFileError(f"{path}: truncated payload")
    weight = np.frombuffer(data[12 : 12 + dim * 4], dtype="<f4").astype(np.float64)
    (bias,) = struct.unpack("<f", data[12 + dim * 4 : need])
    trailer = data[need:]
    metadata = json.loads(trailer.decode("utf-8")) if trailer else {}
    return HeadWeights(weight=weight, bias=float(bias), metadata=metadata)
