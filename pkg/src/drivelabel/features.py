"""Patch-feature grids and the similarity math that turns them into likelihoods.

The on-disk grid format (binary, little-endian) is the contract between this
pipeline and any feature exporter:

    magic   4 bytes  b"TDFG"
    version u32      1
    rows    u32
    cols    u32
    dim     u32
    values  rows*cols*dim float32, row-major, patch-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadHeaderError,
    BadMagicError,
    BadVersionError,
    DegenerateFrameError,
    DimensionMismatchError,
    EmptySampleError,
    NonFiniteValuesError,
    TrailingDataError,
    TruncatedFileError,
    ZeroNormError,
)

MAGIC = b"TDFG"
VERSION = 1
NORM_EPS = 1e-12
MAX_EPS = 1e-6


@dataclass(frozen=True)
class FeatureGrid:
    """Dense grid of per-patch feature vectors for one frame."""

    values: np.ndarray  # (rows, cols, dim) float32

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise BadHeaderError(f"feature grid must be (rows, cols, dim), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteValuesError("feature grid contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class SimilarityMap:
    """Per-patch scalar similarity field, optionally max-normalized."""

    values: np.ndarray  # (rows, cols) float64
    normalized: bool = False
    zero_norm_patches: int = 0


def save_feature_grid(path, grid: FeatureGrid) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", VERSION, grid.rows, grid.cols, grid.dim))
        f.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def load_feature_grid(path) -> FeatureGrid:
    """Load a feature grid, validating magic, version, dims and payload size."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 20:
        raise TruncatedFileError(f"{path}: header truncated at {len(data)} bytes")
    version, rows, cols, dim = struct.unpack("<IIII", data[4:20])
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    if min(rows, cols, dim) < 1:
        raise BadHeaderError(f"{path}: zero dimension in header ({rows}, {cols}, {dim})")
    expected = rows * cols * dim * 4
    payload = data[20:]
    if len(payload) < expected:
        raise TruncatedFileError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise TrailingDataError(f"{path}: {len(payload) - expected} trailing bytes")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols, dim)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValuesError(f"{path}: payload contains non-finite values")
    return FeatureGrid(values=values.copy())


def mean_feature(grid: FeatureGrid, sample: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the feature vectors selected by a patch mask.

    Accumulates in float64 regardless of the stored precision.

    Raises:
        EmptySampleError: the sample selects no patches.
    """
    sample = np.asarray(sample, dtype=bool)
    if sample.shape != (grid.rows, grid.cols):
        raise DimensionMismatchError(
            f"sample {sample.shape} does not match grid {(grid.rows, grid.cols)}"
        )
    n = int(sample.sum())
    if n == 0:
        raise EmptySampleError("sample mask selects no patches")
    return grid.values[sample].astype(np.float64).sum(axis=0) / n


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= NORM_EPS or nb <= NORM_EPS:
        raise ZeroNormError(f"zero-norm vector in cosine similarity ({na}, {nb})")
    return float(a @ b / (na * nb))


def similarity_map(grid: FeatureGrid, mean: np.ndarray) -> SimilarityMap:
    """Cosine similarity of every patch feature against a reference vector.

    Patches with (numerically) zero norm get similarity -1 and are counted in
    ``zero_norm_patches`` instead of failing the frame.
    """
    mean = np.asarray(mean, dtype=np.float64)
    nm = float(np.linalg.norm(mean))
    if nm <= NORM_EPS:
        raise ZeroNormError("reference vector has zero norm")
    flat = grid.values.reshape(-1, grid.dim).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    ok = norms > NORM_EPS
    values = np.full(flat.shape[0], -1.0)
    values[ok] = (flat[ok] @ mean) / (norms[ok] * nm)
    return SimilarityMap(
        values=values.reshape(grid.rows, grid.cols),
        normalized=False,
        zero_norm_patches=int((~ok).sum()),
    )


def normalize_map(smap: SimilarityMap) -> SimilarityMap:
    """Divide by the frame maximum and clamp to [0, 1].

    Negative similarities end up clamped to zero: downstream stages treat the
    normalized value as a likelihood, for which negative values have no
    meaning. Already-normalized maps are returned unchanged.

    Raises:
        DegenerateFrameError: the maximum similarity is not positive enough
            to normalize by (no patch resembles the reference).
    """
    if smap.normalized:
        return smap
    fmax = float(smap.values.max())
    if fmax <= MAX_EPS:
        raise DegenerateFrameError(f"frame maximum similarity {fmax} too small")
    values = np.clip(smap.values / fmax, 0.0, 1.0)
    return SimilarityMap(values=values, normalized=True, zero_norm_patches=smap.zero_norm_patches)
