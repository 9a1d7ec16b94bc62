"""Pure numpy versions of the compiled kernels in ``semac._kernels``."""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 20


def nearest_index(Y: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Index of the closest row of ``V`` for each row of ``Y``; ties to the smallest."""
    Y = np.ascontiguousarray(Y, dtype=complex)
    V = np.ascontiguousarray(V, dtype=complex)
    if V.shape[1] != Y.shape[1]:
        raise ValueError("sequence lengths differ")
    if V.shape[0] == 0:
        raise ValueError("empty table")
    out = np.empty(Y.shape[0], dtype=np.int64)
    step = max(1, _CHUNK // max(V.shape[0], 1))
    for s in range(0, Y.shape[0], step):
        diff = Y[s:s + step, None, :] - V[None, :, :]
        dist = np.sum(diff.real ** 2 + diff.imag ** 2, axis=2)
        out[s:s + step] = np.argmin(dist, axis=1)  # first minimum wins
    return out


def pair_scan(V: np.ndarray, f: np.ndarray, eps: float, feas_tol: float,
              merge_tol: float):
    """Worst margin and offending pairs over all pairs with distinct outputs."""
    V = np.ascontiguousarray(V, dtype=complex)
    f = np.ascontiguousarray(f, dtype=float)
    M = V.shape[0]
    if f.shape[0] != M:
        raise ValueError("one output per sequence required")
    worst = np.inf
    chunks = []
    step = max(1, _CHUNK // max(M, 1))
    for s in range(0, M, step):
        rows = np.arange(s, min(s + step, M))
        diff = V[rows, None, :] - V[None, :, :]
        dist = np.sum(diff.real ** 2 + diff.imag ** 2, axis=2)
        gap = np.abs(f[rows, None] - f[None, :])
        upper = np.arange(M)[None, :] > rows[:, None]
        live = upper & (gap > 0)
        margin = dist - eps * gap
        if live.any():
            worst = min(worst, float(margin[live].min()))
        bad = live & ((margin < -feas_tol) | (dist < merge_tol ** 2))
        r, c = np.nonzero(bad)
        chunks.append(np.stack([rows[r], c], axis=1).astype(np.int64))
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return float(worst), pairs


def class_max_gap(F: np.ndarray, code_a: np.ndarray, code_b: np.ndarray,
                  n_classes_b: int, n_classes: int) -> np.ndarray:
    """Largest output gap per difference class (see the compiled version)."""
    F = np.asarray(F, dtype=float)
    QA, QB = F.shape
    code_a = np.asarray(code_a).reshape(QA, QA)
    code_b = np.asarray(code_b).reshape(QB, QB)
    out = np.zeros(n_classes, dtype=float)
    for ia in range(QA):
        for ja in range(ia, QA):
            gap = np.abs(F[ia][:, None] - F[ja][None, :])
            idx = code_a[ia, ja] * n_classes_b + code_b
            np.maximum.at(out, idx.ravel(), gap.ravel())
    return out
