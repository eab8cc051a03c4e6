"""Numpy fallback for the compiled kernels.

Semantics are bit-identical to ``seeker._kernels``: both compute squared
distances as ``dx*dx + dy*dy`` in float64 and break ties toward the lowest
mask index, so a resolved stack never depends on which implementation ran.
"""
from __future__ import annotations

import numpy as np


def assign_nearest(stack: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Resolve contested pixels in a mask stack in place.

    ``stack`` is (n, h, w) uint8.  Every pixel claimed by two or more masks
    is kept only in the mask whose seed point (px[i], py[i]) is nearest to
    the pixel center (x + 0.5, y + 0.5); ties go to the lowest index.
    Pixels claimed by zero or one mask are untouched.  Returns ``stack``.
    """
    n, h, w = stack.shape
    if n < 2:
        return stack
    counts = stack.sum(axis=0, dtype=np.int32)
    ys, xs = np.nonzero(counts >= 2)
    if ys.size == 0:
        return stack
    xc = xs + 0.5
    yc = ys + 0.5
    dx = xc[None, :] - px[:, None]
    dy = yc[None, :] - py[:, None]
    d2 = dx * dx + dy * dy
    claimed = stack[:, ys, xs].astype(bool)
    d2[~claimed] = np.inf
    winner = np.argmin(d2, axis=0)  # first minimum = lowest index on ties
    keep = np.zeros_like(claimed)
    keep[winner, np.arange(ys.size)] = True
    stack[:, ys, xs] = (claimed & keep).astype(np.uint8)
    return stack


def rle_encode(flat: np.ndarray) -> np.ndarray:
    """Run-length encode a flat 0/1 array.

    Runs alternate zero/one and start with zeros, so the first entry is 0
    when the array begins with a set pixel.
    """
    flat = np.asarray(flat, dtype=np.uint8).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(bounds).astype(np.int64)
    if flat[0] == 1:
        runs = np.concatenate(([np.int64(0)], runs))
    return runs


def rle_decode(runs: np.ndarray, total: int) -> np.ndarray:
    """Inverse of :func:`rle_encode`; raises if runs do not sum to ``total``."""
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise ValueError("negative run length")
    if int(runs.sum()) != total:
        raise ValueError(f"rle length mismatch: runs sum to {int(runs.sum())}, expected {total}")
    values = np.arange(runs.size, dtype=np.int64) % 2
    return np.repeat(values, runs).astype(np.uint8)
