# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: contested-pixel assignment and the RLE codec.

Must stay semantically identical to seeker._kernels_py (same float64
distance expression, same lowest-index tie break).
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def assign_nearest(cnp.uint8_t[:, :, ::1] stack, double[::1] px, double[::1] py):
    """In-place nearest-seed resolution of pixels claimed by >= 2 masks."""
    cdef Py_ssize_t n = stack.shape[0]
    cdef Py_ssize_t h = stack.shape[1]
    cdef Py_ssize_t w = stack.shape[2]
    cdef Py_ssize_t x, y, i, claims, winner
    cdef double best, d2, dx, dy, xc, yc

    if n < 2:
        return np.asarray(stack)
    for y in range(h):
        yc = y + 0.5
        for x in range(w):
            claims = 0
            for i in range(n):
                if stack[i, y, x]:
                    claims += 1
            if claims < 2:
                continue
            xc = x + 0.5
            winner = -1
            best = 0.0
            for i in range(n):
                if not stack[i, y, x]:
                    continue
                dx = xc - px[i]
                dy = yc - py[i]
                d2 = dx * dx + dy * dy
                if winner < 0 or d2 < best:
                    winner = i
                    best = d2
            for i in range(n):
                if i != winner:
                    stack[i, y, x] = 0
    return np.asarray(stack)


def rle_encode(flat):
    """Run-length encode a flat 0/1 array (zero runs first)."""
    cdef cnp.uint8_t[::1] data = np.ascontiguousarray(flat, dtype=np.uint8).ravel()
    cdef Py_ssize_t size = data.shape[0]
    cdef list runs = []
    cdef Py_ssize_t i
    cdef cnp.uint8_t current = 0
    cdef long long run = 0

    if size == 0:
        return np.zeros(0, dtype=np.int64)
    for i in range(size):
        if data[i] == current:
            run += 1
        else:
            runs.append(run)
            current = data[i]
            run = 1
    runs.append(run)
    return np.asarray(runs, dtype=np.int64)


def rle_decode(runs, Py_ssize_t total):
    """Inverse of rle_encode; raises on a run-sum mismatch."""
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(runs, dtype=np.int64)
    cdef Py_ssize_t nruns = r.shape[0]
    cdef Py_ssize_t i, j
    cdef long long acc = 0

    for i in range(nruns):
        if r[i] < 0:
            raise ValueError("negative run length")
        acc += r[i]
    if acc != total:
        raise ValueError(f"rle length mismatch: runs sum to {acc}, expected {total}")

    out = np.zeros(total, dtype=np.uint8)
    cdef cnp.uint8_t[::1] o = out
    cdef Py_ssize_t pos = 0
    cdef cnp.uint8_t value = 0
    for i in range(nruns):
        if value:
            for j in range(pos, pos + r[i]):
                o[j] = 1
        pos += r[i]
        value = 1 - value
    return out
