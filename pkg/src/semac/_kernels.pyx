# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: nearest-point decoding, pair scans, class requirements.

Pure-Python equivalents live in :mod:`semac._fallback`; :mod:`semac.kernels`
selects between them at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def nearest_index(const double complex[:, ::1] Y, const double complex[:, ::1] V):
    """Index of the closest row of ``V`` for each row of ``Y``; ties to the smallest."""
    cdef Py_ssize_t T = Y.shape[0], M = V.shape[0], L = Y.shape[1]
    cdef Py_ssize_t t, i, l
    cdef double best, dist, dr, di
    cdef cnp.int64_t arg
    out = np.empty(T, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    if V.shape[1] != L:
        raise ValueError("sequence lengths differ")
    if M == 0:
        raise ValueError("empty table")
    with nogil:
        for t in range(T):
            best = 1e308
            arg = 0
            for i in range(M):
                dist = 0.0
                for l in range(L):
                    dr = Y[t, l].real - V[i, l].real
                    di = Y[t, l].imag - V[i, l].imag
                    dist = dist + dr * dr + di * di
                    if dist >= best:
                        break
                if dist < best:
                    best = dist
                    arg = i
            res[t] = arg
    return out


cdef Py_ssize_t _scan(const double complex[:, ::1] V, const double[::1] f, double eps,
                      double feas_tol, double merge2, Py_ssize_t row, Py_ssize_t col,
                      cnp.int64_t[:, ::1] buf, double* worst, Py_ssize_t* stop_row,
                      Py_ssize_t* stop_col) noexcept nogil:
    cdef Py_ssize_t M = V.shape[0], L = V.shape[1], cap = buf.shape[0]
    cdef Py_ssize_t i, j, l, n = 0
    cdef double gap, dist, dr, di, margin
    i = row
    while i < M:
        j = col if i == row else i + 1
        while j < M:
            gap = fabs(f[i] - f[j])
            if gap > 0.0:
                dist = 0.0
                for l in range(L):
                    dr = V[i, l].real - V[j, l].real
                    di = V[i, l].imag - V[j, l].imag
                    dist = dist + dr * dr + di * di
                margin = dist - eps * gap
                if margin < worst[0]:
                    worst[0] = margin
                if margin < -feas_tol or dist < merge2:
                    if n == cap:
                        stop_row[0] = i
                        stop_col[0] = j
                        return n
                    buf[n, 0] = i
                    buf[n, 1] = j
                    n += 1
            j += 1
        i += 1
    stop_row[0] = M
    stop_col[0] = M
    return n


def pair_scan(const double complex[:, ::1] V, const double[::1] f, double eps,
              double feas_tol, double merge_tol):
    """Worst margin and offending pairs over all pairs with distinct outputs.

    A pair ``(i, j)``, ``i < j``, offends when its squared distance falls
    short of ``eps * |f_i - f_j|`` by more than ``feas_tol`` or its distance
    is below ``merge_tol``.
    """
    cdef Py_ssize_t M = V.shape[0]
    cdef Py_ssize_t row = 0, col = 1, stop_row = 0, stop_col = 0, n
    cdef double worst = np.inf
    cdef double merge2 = merge_tol * merge_tol
    chunks = []
    buf = np.empty((4096, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] view = buf
    if f.shape[0] != M:
        raise ValueError("one output per sequence required")
    while row < M:
        with nogil:
            n = _scan(V, f, eps, feas_tol, merge2, row, col, view, &worst,
                      &stop_row, &stop_col)
        chunks.append(buf[:n].copy())
        row, col = stop_row, stop_col
        if n == buf.shape[0] and buf.shape[0] < (1 << 22):
            buf = np.empty((2 * buf.shape[0], 2), dtype=np.int64)
            view = buf
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return float(worst), pairs


def class_max_gap(const double[:, ::1] F, const cnp.int64_t[::1] code_a,
                  const cnp.int64_t[::1] code_b, Py_ssize_t n_classes_b,
                  Py_ssize_t n_classes):
    """Largest output gap per difference class.

    ``F[ia, ib]`` is the output of the combination whose first node group
    has joint index ``ia`` and second group ``ib``.  ``code_a[ia * QA + ja]``
    is the class code of group A for the ordered pair ``(ia, ja)``; likewise
    ``code_b``.  The class of a pair is ``code_a * n_classes_b + code_b``.
    Only pairs with ``ia <= ja`` are visited; callers symmetrise with the
    negated classes.
    """
    cdef Py_ssize_t QA = F.shape[0], QB = F.shape[1]
    cdef Py_ssize_t ia, ja, ib, jb, base, idx
    cdef double g, fi
    out = np.zeros(n_classes, dtype=np.float64)
    cdef double[::1] res = out
    if code_a.shape[0] != QA * QA or code_b.shape[0] != QB * QB:
        raise ValueError("code tables do not match the output grid")
    with nogil:
        for ia in range(QA):
            for ja in range(ia, QA):
                base = code_a[ia * QA + ja] * n_classes_b
                for ib in range(QB):
                    fi = F[ia, ib]
                    for jb in range(QB):
                        g = fabs(fi - F[ja, jb])
                        idx = base + code_b[ib * QB + jb]
                        if g > res[idx]:
                            res[idx] = g
    return out
