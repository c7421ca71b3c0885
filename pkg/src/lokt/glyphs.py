"""Procedural stroke-glyph rendering for the desk-scale image corpora.

Every corpus in this project is drawn on the fly: a glyph is a set of
polylines in the unit square, rasterised as bright anti-aliased strokes on
a dark background. Per-sample affine jitter, stroke-width jitter and pixel
noise give each rendered image its own appearance while keeping the class
structure. Images come out as float32 arrays of shape (1, size, size) in
[-1, 1].
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DIGIT_GLYPHS",
    "LETTER_GLYPHS",
    "render_glyph",
    "render_corpus",
]


def _ring(cx, cy, rx, ry, n=10, start=0.0):
    ts = np.linspace(start, start + 2 * np.pi, n + 1)
    return np.stack([cx + rx * np.cos(ts), cy + ry * np.sin(ts)], axis=1)


def _arc(cx, cy, rx, ry, t0, t1, n=6):
    ts = np.linspace(t0, t1, n + 1)
    return np.stack([cx + rx * np.cos(ts), cy + ry * np.sin(ts)], axis=1)


def _line(*pts):
    return np.asarray(pts, dtype=float)


# Each glyph is a list of polylines; coordinates are (x, y) with y pointing
# down, inside a [0.15, 0.85] box so jitter rarely clips strokes.
DIGIT_GLYPHS: dict[int, list[np.ndarray]] = {
    0: [_ring(0.5, 0.5, 0.20, 0.30)],
    1: [_line((0.38, 0.32), (0.54, 0.20), (0.54, 0.80))],
    2: [
        _arc(0.5, 0.35, 0.20, 0.15, np.pi, 2 * np.pi),
        _line((0.70, 0.35), (0.30, 0.80), (0.72, 0.80)),
    ],
    3: [
        _arc(0.47, 0.34, 0.19, 0.14, 0.75 * np.pi, 2.25 * np.pi),
        _arc(0.47, 0.65, 0.21, 0.16, 1.75 * np.pi, 3.25 * np.pi),
    ],
    4: [_line((0.62, 0.20), (0.30, 0.58), (0.76, 0.58)), _line((0.62, 0.20), (0.62, 0.80))],
    5: [
        _line((0.70, 0.20), (0.34, 0.20), (0.33, 0.48)),
        _arc(0.49, 0.63, 0.19, 0.17, 1.6 * np.pi, 3.1 * np.pi),
    ],
    6: [
        _line((0.62, 0.20), (0.40, 0.45)),
        _ring(0.48, 0.62, 0.17, 0.18),
    ],
    7: [_line((0.28, 0.20), (0.72, 0.20), (0.44, 0.80))],
    8: [_ring(0.5, 0.34, 0.16, 0.14), _ring(0.5, 0.64, 0.19, 0.17)],
    9: [
        _ring(0.50, 0.37, 0.17, 0.17),
        _line((0.66, 0.42), (0.58, 0.80)),
    ],
}

LETTER_GLYPHS: dict[str, list[np.ndarray]] = {
    "A": [_line((0.28, 0.80), (0.50, 0.20), (0.72, 0.80)), _line((0.37, 0.58), (0.63, 0.58))],
    "C": [_arc(0.52, 0.50, 0.22, 0.30, 0.4 * np.pi, 1.6 * np.pi)],
    "E": [
        _line((0.68, 0.20), (0.32, 0.20), (0.32, 0.80), (0.68, 0.80)),
        _line((0.32, 0.50), (0.60, 0.50)),
    ],
    "F": [_line((0.68, 0.20), (0.32, 0.20), (0.32, 0.80)), _line((0.32, 0.50), (0.62, 0.50))],
    "H": [
        _line((0.32, 0.20), (0.32, 0.80)),
        _line((0.68, 0.20), (0.68, 0.80)),
        _line((0.32, 0.50), (0.68, 0.50)),
    ],
    "K": [
        _line((0.32, 0.20), (0.32, 0.80)),
        _line((0.68, 0.20), (0.34, 0.52), (0.70, 0.80)),
    ],
    "L": [_line((0.34, 0.20), (0.34, 0.80), (0.70, 0.80))],
    "M": [_line((0.28, 0.80), (0.30, 0.20), (0.50, 0.55), (0.70, 0.20), (0.72, 0.80))],
    "P": [
        _line((0.34, 0.80), (0.34, 0.20), (0.56, 0.20)),
        _arc(0.56, 0.33, 0.15, 0.13, -0.5 * np.pi, 0.5 * np.pi),
        _line((0.56, 0.46), (0.34, 0.46)),
    ],
    "T": [_line((0.28, 0.22), (0.72, 0.22)), _line((0.50, 0.22), (0.50, 0.80))],
    "U": [_line((0.32, 0.20), (0.32, 0.62)), _arc(0.50, 0.62, 0.18, 0.18, np.pi, 2 * np.pi), _line((0.68, 0.62), (0.68, 0.20))],
    "V": [_line((0.30, 0.20), (0.50, 0.80), (0.70, 0.20))],
    "X": [_line((0.30, 0.20), (0.70, 0.80)), _line((0.70, 0.20), (0.30, 0.80))],
    "Z": [_line((0.30, 0.22), (0.70, 0.22), (0.30, 0.80), (0.70, 0.80))],
}


def _segment_field(grid, a, b, width, sharp):
    # distance from every pixel centre to segment ab, turned into intensity
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        d = np.hypot(grid[..., 0] - a[0], grid[..., 1] - a[1])
    else:
        t = np.clip(((grid - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[..., None] * ab
        d = np.hypot(grid[..., 0] - proj[..., 0], grid[..., 1] - proj[..., 1])
    return np.clip((width - d) * sharp + 0.5, 0.0, 1.0)


def render_glyph(strokes, size, rng=None, jitter=True):
    """Rasterise one glyph; returns (size, size) float32 in [0, 1]."""
    pts_list = [np.array(p, dtype=float) for p in strokes]
    width = 0.045
    if jitter:
        assert rng is not None
        theta = rng.uniform(-0.22, 0.22)
        scale = rng.uniform(0.85, 1.12)
        shear = rng.uniform(-0.12, 0.12)
        shift = rng.uniform(-0.06, 0.06, size=2)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        mat = rot @ np.array([[1.0, shear], [0.0, 1.0]]) * scale
        pts_list = [((p - 0.5) @ mat.T) + 0.5 + shift for p in pts_list]
        width = rng.uniform(0.038, 0.058)

    coords = (np.arange(size) + 0.5) / size
    gx, gy = np.meshgrid(coords, coords)
    grid = np.stack([gx, gy], axis=-1)

    img = np.zeros((size, size), dtype=np.float32)
    sharp = size * 1.6
    for pts in pts_list:
        for i in range(len(pts) - 1):
            img = np.maximum(img, _segment_field(grid, pts[i], pts[i + 1], width, sharp))

    if jitter:
        img = img * rng.uniform(0.82, 1.0) + rng.normal(0.0, 0.03, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_corpus(glyph_table, per_class, size, seed):
    """Render `per_class` jittered samples of every glyph in the table.

    Returns (images, labels): images (n, 1, size, size) float32 in [-1, 1],
    labels int64 indexing glyphs in iteration order of the table.
    """
    rng = np.random.default_rng(seed)
    keys = list(glyph_table.keys())
    images = np.empty((len(keys) * per_class, 1, size, size), dtype=np.float32)
    labels = np.empty(len(keys) * per_class, dtype=np.int64)
    i = 0
    for cls, key in enumerate(keys):
        for _ in range(per_class):
            images[i, 0] = render_glyph(glyph_table[key], size, rng)
            labels[i] = cls
            i += 1
    order = rng.permutation(len(labels))
    return images[order] * 2.0 - 1.0, labels[order]
