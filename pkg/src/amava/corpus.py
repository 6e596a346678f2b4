"""Synthetic labeled corpus for training and benchmarking the classifier.

Two generators live here. `make_feature_dataset` samples (frame_diff,
flow_mag) rows directly from disjoint per-class regions of feature space,
giving a separable training set with known ground truth. `make_clip_pair`
renders actual frame pairs — a static textured scene with sensor noise, or
the same texture translated sideways — so the full frames -> features ->
classifier path can be benchmarked end to end.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .classifier import MovementClass
from .frames import GrayFrame

# Feature-space class regions: low is quiet on both features, high is busy
# on both, medium fills the band between them.
LOW_REGION = ((0.0, 5.0), (0.0, 0.5))
MEDIUM_REGION = ((5.0, 30.0), (0.5, 3.0))
HIGH_REGION = ((30.0, 120.0), (3.0, 10.0))

_REGIONS = {
    MovementClass.LOW: LOW_REGION,
    MovementClass.MEDIUM: MEDIUM_REGION,
    MovementClass.HIGH: HIGH_REGION,
}

CSV_HEADER = ("frame_diff", "flow_mag", "label")


def make_feature_dataset(n_per_class: int = 200, seed: int = 0):
    """Sample labeled (frame_diff, flow_mag) rows from the class regions.

    Returns (features, labels): an (N, 2) float array and an (N,) array of
    MovementClass values, interleaved deterministically by seed.
    """
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for cls in (MovementClass.LOW, MovementClass.MEDIUM, MovementClass.HIGH):
        (d_lo, d_hi), (m_lo, m_hi) = _REGIONS[cls]
        d = rng.uniform(d_lo, d_hi, size=n_per_class)
        m = rng.uniform(m_lo, m_hi, size=n_per_class)
        feats.append(np.column_stack([d, m]))
        labels.extend([cls] * n_per_class)
    features = np.vstack(feats)
    labels = np.array(labels, dtype=object)
    order = rng.permutation(len(labels))
    return features[order], labels[order]


def write_dataset_csv(path, features, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for (d, m), label in zip(features, labels):
            writer.writerow([repr(float(d)), repr(float(m)), label.value])


def read_dataset_csv(path):
    """Load a dataset CSV back into (features, labels)."""
    feats = []
    labels = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            if not row:
                continue
            d, m, label = row
            feats.append((float(d), float(m)))
            labels.append(MovementClass(label.strip()))
    return np.array(feats, dtype=np.float64), np.array(labels, dtype=object)


def _texture(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Random mid-contrast texture, lightly smoothed so flow has structure."""
    raw = rng.integers(0, 256, size=(height, width)).astype(np.float64)
    # 3x3 box blur keeps local gradients while killing single-pixel salt.
    kernel = np.ones((3, 3)) / 9.0
    padded = np.pad(raw, 1, mode="edge")
    smooth = sum(
        padded[i : i + height, j : j + width] * kernel[i, j]
        for i in range(3)
        for j in range(3)
    )
    return smooth


def make_clip_pair(
    kind: str,
    seed: int = 0,
    size: tuple[int, int] = (480, 360),
    shift_px: int = 5,
    noise_sigma: float = 1.0,
    t0_ms: float = 0.0,
) -> tuple[GrayFrame, GrayFrame]:
    """Render a two-frame clip of the given kind.

    kind "static": one texture observed twice with independent sensor noise.
    kind "translating": the texture slides shift_px pixels horizontally.
    """
    width, height = size
    rng = np.random.default_rng(seed)
    if kind == "static":
        base = _texture(rng, height, width)
        a = base + rng.normal(0.0, noise_sigma, size=base.shape)
        b = base + rng.normal(0.0, noise_sigma, size=base.shape)
    elif kind == "translating":
        wide = _texture(rng, height, width + shift_px)
        a = wide[:, shift_px : width + shift_px]
        b = wide[:, 0:width]
    else:
        raise ValueError(f"unknown clip kind {kind!r}")
    first = GrayFrame(np.clip(np.rint(a), 0, 255).astype(np.uint8), t0_ms)
    second = GrayFrame(np.clip(np.rint(b), 0, 255).astype(np.uint8), t0_ms + 500.0)
    return first, second


def make_clip_corpus(
    n_static: int = 20,
    n_translating: int = 20,
    seed: int = 0,
    size: tuple[int, int] = (480, 360),
):
    """Labeled clip pairs: static clips are low movement, translating high."""
    clips = []
    for i in range(n_static):
        clips.append((make_clip_pair("static", seed=seed * 1000 + i, size=size), "low"))
    for i in range(n_translating):
        clips.append(
            (make_clip_pair("translating", seed=seed * 1000 + 500 + i, size=size), "high")
        )
    return clips


def write_default_dataset(path, n_per_class: int = 200, seed: int = 0) -> Path:
    path = Path(path)
    features, labels = make_feature_dataset(n_per_class=n_per_class, seed=seed)
    write_dataset_csv(path, features, labels)
    return path
