"""Receiver side: constellation table, joint ML decoding, tabular outputs.

The table lists the noiseless sequence of every enumerated combination
together with its output.  Entries whose sequences coincide, or whose
separation requirement is violated, are merged into clusters that answer
with the mean output of their members.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

__all__ = [
    "ConstellationTable",
    "build_table",
    "ml_decode",
    "tabular_map",
    "table_to_json",
    "table_from_json",
    "MERGE_TOL",
]

MERGE_TOL = 1e-6
FEAS_TOL = 1e-7


@dataclass
class ConstellationTable:
    """Entries ``sequences[e]`` with ``outputs[e]``; ``cluster[e]`` labels merged groups.

    ``cluster_output[c]`` is the mean output of the entries in cluster ``c``;
    ``sources`` maps each input row to its entry.
    """

    sequences: np.ndarray
    outputs: np.ndarray
    cluster: np.ndarray
    cluster_output: np.ndarray
    sources: np.ndarray
    merge_tol: float = MERGE_TOL

    def __len__(self) -> int:
        return int(self.outputs.size)

    @property
    def L(self) -> int:
        return self.sequences.shape[1]

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_output.size)

    @property
    def n_merged(self) -> int:
        """Entries that share a cluster with some other entry."""
        counts = np.bincount(self.cluster, minlength=self.n_clusters)
        return int(np.sum(counts[self.cluster] > 1))

    def entry_outputs(self) -> np.ndarray:
        """Answer of each entry after merging."""
        return self.cluster_output[self.cluster]


def _union_find(n: int, pairs: np.ndarray) -> np.ndarray:
    parent = np.arange(n)

    def root(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = root(int(a)), root(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([root(a) for a in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def build_table(sequences: np.ndarray, outputs: np.ndarray, epsilon: float,
                merge_tol: float = MERGE_TOL, feas_tol: float = FEAS_TOL,
                offending: Optional[np.ndarray] = None) -> ConstellationTable:
    """Table from noiseless sequences ``(n, L)`` and their outputs ``(n,)``.

    Rows with identical sequence and output collapse to one entry.  Entries
    with distinct outputs closer than ``merge_tol``, or short of
    ``epsilon * |f_i - f_j|`` by more than ``feas_tol``, are merged.
    ``offending`` may supply those entry pairs when the caller has already
    certified them, which skips the quadratic scan.
    """
    seq = np.ascontiguousarray(np.atleast_2d(sequences), dtype=complex)
    out = np.asarray(outputs, dtype=float).ravel()
    if seq.shape[0] != out.size:
        raise ValueError(f"{seq.shape[0]} sequences but {out.size} outputs")
    if out.size == 0:
        raise ValueError("cannot build a table with no entries")
    key = np.concatenate([seq.real, seq.imag, out[:, None]], axis=1)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")          # keep first-seen entry order
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    entries = first[order]
    sources = rank[inverse.ravel()]
    seq, out = np.ascontiguousarray(seq[entries]), out[entries]
    if offending is None:
        _, offending = kernels.pair_scan(seq, out, float(epsilon), feas_tol, merge_tol)
    cluster = _union_find(out.size, np.asarray(offending, dtype=np.int64).reshape(-1, 2))
    sums = np.bincount(cluster, weights=out)
    counts = np.bincount(cluster)
    return ConstellationTable(seq, out, cluster, sums / counts, sources, merge_tol)


def ml_decode(y: np.ndarray, table: ConstellationTable) -> np.ndarray:
    """Entry index minimising ``sum_l |y_l - v_l|^2``; ties go to the smaller index.

    ``y`` may be a single ``(L,)`` sequence or a batch ``(n, L)``.
    """
    y = np.asarray(y, dtype=complex)
    single = y.ndim == 1
    Y = np.ascontiguousarray(np.atleast_2d(y))
    idx = kernels.nearest_index(Y, table.sequences)
    return int(idx[0]) if single else idx


def tabular_map(index, table: ConstellationTable):
    """Output of the decoded entry, or its cluster mean when merged."""
    vals = table.cluster_output[table.cluster[np.asarray(index)]]
    return float(vals) if np.ndim(vals) == 0 else vals


def table_to_json(table: ConstellationTable) -> str:
    doc = {
        "merge_tol": table.merge_tol,
        "sequences": [[[float(z.real), float(z.imag)] for z in row] for row in table.sequences],
        "outputs": table.outputs.tolist(),
        "cluster": table.cluster.tolist(),
        "cluster_output": table.cluster_output.tolist(),
        "sources": table.sources.tolist(),
    }
    return json.dumps(doc)


def table_from_json(text: str) -> ConstellationTable:
    doc = json.loads(text)
    seq = np.array([[complex(re, im) for re, im in row] for row in doc["sequences"]],
                   dtype=complex).reshape(len(doc["outputs"]), -1)
    return ConstellationTable(seq, np.asarray(doc["outputs"], dtype=float),
                              np.asarray(doc["cluster"], dtype=np.int64),
                              np.asarray(doc["cluster_output"], dtype=float),
                              np.asarray(doc["sources"], dtype=np.int64), doc["merge_tol"])
