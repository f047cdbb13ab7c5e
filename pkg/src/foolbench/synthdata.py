"""Deterministic stroke-rendered digit corpus for fully offline runs.

Each digit class is a set of polyline skeletons on the unit square; samples
get a random affine jitter (rotation, scale, shear, translation), endpoint
noise, stroke-width and brightness variation, and pixel noise. The result is
a learnable 10-class 28x28 grayscale corpus that exercises the exact same
IDX/training/attack paths as real digit data.
"""

import numpy as np

from .dataset import LabeledDataset, save_dataset

# Polyline skeletons per digit, unit coordinates (x right, y down).
def _circle(cx, cy, rx, ry, n=14, start=0.0, end=2 * np.pi):
    t = np.linspace(start, end, n)
    return np.stack([cx + rx * np.sin(t), cy - ry * np.cos(t)], axis=1)


_SKELETONS = {
    0: [_circle(0.5, 0.5, 0.26, 0.36)],
    1: [np.array([[0.36, 0.26], [0.52, 0.13], [0.52, 0.88]])],
    2: [
        np.concatenate(
            [
                _circle(0.5, 0.3, 0.24, 0.18, n=9, start=-0.5 * np.pi, end=0.55 * np.pi),
                np.array([[0.26, 0.86], [0.78, 0.86]]),
            ]
        )
    ],
    3: [
        _circle(0.48, 0.3, 0.22, 0.18, n=11, start=-0.6 * np.pi, end=0.75 * np.pi),
        _circle(0.48, 0.68, 0.25, 0.2, n=11, start=-0.75 * np.pi, end=0.6 * np.pi),
    ],
    4: [
        np.array([[0.6, 0.12], [0.24, 0.62], [0.82, 0.62]]),
        np.array([[0.64, 0.3], [0.64, 0.88]]),
    ],
    5: [
        np.array([[0.74, 0.13], [0.32, 0.13], [0.29, 0.47]]),
        _circle(0.48, 0.66, 0.25, 0.21, n=11, start=-0.9 * np.pi, end=0.6 * np.pi),
    ],
    6: [
        np.array([[0.66, 0.12], [0.44, 0.36], [0.33, 0.62]]),
        _circle(0.5, 0.67, 0.19, 0.2),
    ],
    7: [np.array([[0.22, 0.14], [0.78, 0.14], [0.42, 0.88]])],
    8: [
        _circle(0.5, 0.3, 0.18, 0.17),
        _circle(0.5, 0.66, 0.22, 0.21),
    ],
    9: [
        _circle(0.5, 0.32, 0.2, 0.2),
        np.array([[0.7, 0.34], [0.66, 0.6], [0.56, 0.88]]),
    ],
}


def _segment_distances(px, py, p0, p1):
    # distance from every pixel center to segment p0-p1
    d = p1 - p0
    length2 = (d * d).sum()
    if length2 < 1e-12:
        return np.hypot(px - p0[0], py - p0[1])
    t = ((px - p0[0]) * d[0] + (py - p0[1]) * d[1]) / length2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (p0[0] + t * d[0]), py - (p0[1] + t * d[1]))


def render_digit(digit, rng, size=28):
    """One jittered sample of a digit class, uint8 (size, size, 1)."""
    angle = rng.normal(0.0, 0.14)
    scale = rng.uniform(0.82, 1.12)
    shear = rng.normal(0.0, 0.1)
    tx, ty = rng.normal(0.0, 0.045, size=2)
    thickness = rng.uniform(0.55, 1.05)  # stroke half-width, pixels
    brightness = rng.uniform(0.72, 1.0)

    cos_a, sin_a = np.cos(angle), np.sin(angle)
    ys, xs = np.mgrid[0:size, 0:size]
    canvas = np.zeros((size, size))
    for stroke in _SKELETONS[digit]:
        pts = stroke + rng.normal(0.0, 0.018, size=stroke.shape)
        # affine about the glyph center
        rel = pts - 0.5
        x = scale * (cos_a * rel[:, 0] - sin_a * rel[:, 1] + shear * rel[:, 1]) + 0.5 + tx
        y = scale * (sin_a * rel[:, 0] + cos_a * rel[:, 1]) + 0.5 + ty
        pts = np.stack([x, y], axis=1) * size
        for a, b in zip(pts[:-1], pts[1:]):
            dist = _segment_distances(xs + 0.5, ys + 0.5, a, b)
            ink = np.clip((thickness + 0.7 - dist) / 0.7, 0.0, 1.0)
            np.maximum(canvas, ink, out=canvas)

    canvas = canvas * 255.0 * brightness
    canvas += rng.normal(0.0, 7.0, size=canvas.shape)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)[:, :, None]


def generate_corpus(n_images, seed=0, size=28) -> LabeledDataset:
    """A balanced, shuffled corpus of ``n_images`` stroke digits."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n_images, dtype=np.int64) % 10
    rng.shuffle(labels)
    images = np.empty((n_images, size, size, 1), dtype=np.uint8)
    for i, lab in enumerate(labels):
        images[i] = render_digit(int(lab), rng, size=size)
    return LabeledDataset(images, labels, num_classes=10)


def write_corpus(out_dir, n_train=10000, n_val=2000, seed=0, size=28):
    """Generate train/val splits and write them as IDX pairs under ``out_dir``.

    Returns the four file paths (train images/labels, val images/labels).
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    train = generate_corpus(n_train, seed=seed, size=size)
    val = generate_corpus(n_val, seed=seed + 1, size=size)
    paths = {
        "train_images": os.path.join(out_dir, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(out_dir, "train-labels-idx1-ubyte"),
        "val_images": os.path.join(out_dir, "t10k-images-idx3-ubyte"),
        "val_labels": os.path.join(out_dir, "t10k-labels-idx1-ubyte"),
    }
    save_dataset(train, paths["train_images"], paths["train_labels"])
    save_dataset(val, paths["val_images"], paths["val_labels"])
    return paths
