"""Dense semidefinite programs over Hermitian matrix variables.

Problems are stated with complex Hermitian variables and linear trace
constraints ``<A, V> (>=, <=, =) b``.  :func:`embed_complex` maps such a
program to an equivalent real-symmetric one, which is handed to the Clarabel
interior-point solver.  :func:`solve` re-checks every returned point against
the original constraint list with its own arithmetic before labelling it
optimal.

Constraint coefficients come in two flavours, both stored in blocks of ``m``
rows: dense Hermitian stacks of shape ``(m, n, n)``, or low-rank factor
stacks ``G`` of shape ``(m, n, r)`` standing for ``A = sum_r g_r g_r^H``.
Every constraint in the modulation and power problems is rank one, so the
factored form avoids materialising ``m`` full matrices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

__all__ = [
    "Tolerances",
    "ConicProgram",
    "ConicSolution",
    "ConstraintBlock",
    "embed_complex",
    "solve",
    "inner",
    "OPTIMAL",
    "INFEASIBLE",
    "INACCURATE",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
INACCURATE = "inaccurate"

_SENSES = (">=", "<=", "=")
_ROW_CHUNK = 2048


@dataclass(frozen=True)
class Tolerances:
    feas_tol: float = 1e-7
    psd_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 300


@dataclass
class ConstraintBlock:
    """``m`` constraints sharing one sense.

    ``coeffs`` maps a variable index to either a dense ``(m, n, n)`` stack or,
    when ``factored`` is set for that variable, an ``(m, n, r)`` factor stack.
    """

    coeffs: Dict[int, np.ndarray]
    factored: Dict[int, bool]
    sense: str
    bounds: np.ndarray

    @property
    def m(self) -> int:
        return self.bounds.size


@dataclass
class ConicProgram:
    """Minimise ``sum_v <C_v, V_v>`` subject to blocks of trace constraints.

    Variables are Hermitian (complex programs) or real symmetric (after
    :func:`embed_complex`).  Variables with ``psd=False`` are free.
    """

    sizes: List[int] = field(default_factory=list)
    psd: List[bool] = field(default_factory=list)
    names: List[str] = field(default_factory=list)
    objective: Dict[int, np.ndarray] = field(default_factory=dict)
    blocks: List[ConstraintBlock] = field(default_factory=list)
    real: bool = False
    embedded_from: Optional[List[int]] = None

    def add_variable(self, n: int, psd: bool = True, name: str = "") -> int:
        if n < 1:
            raise ValueError(f"variable dimension must be positive, got {n}")
        self.sizes.append(int(n))
        self.psd.append(bool(psd))
        self.names.append(name or f"V{len(self.sizes) - 1}")
        return len(self.sizes) - 1

    def set_objective(self, coeffs: Dict[int, np.ndarray], maximize: bool = False):
        """Linear objective; ``maximize`` flips the sign internally."""
        obj = {}
        for v, C in coeffs.items():
            C = np.asarray(C)
            self._check_square(v, C)
            obj[v] = -C if maximize else C
        self.objective = obj
        self._maximize = maximize

    @property
    def maximize(self) -> bool:
        return getattr(self, "_maximize", False)

    def add_constraints(self, coeffs: Dict[int, np.ndarray], sense: str, bounds,
                        factored: Optional[Dict[int, bool]] = None) -> None:
        """Append a block of constraints ``sum_v <A_v, V_v> sense b``."""
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}, got {sense!r}")
        bounds = np.atleast_1d(np.asarray(bounds, dtype=float))
        factored = dict(factored or {})
        checked = {}
        for v, A in coeffs.items():
            A = np.asarray(A)
            if v >= len(self.sizes):
                raise ValueError(f"unknown variable index {v}")
            n = self.sizes[v]
            if A.ndim == 2:
                A = A[None]
            if A.shape[0] != bounds.size or A.shape[1] != n:
                raise ValueError(
                    f"coefficient block for {self.names[v]} has shape {A.shape}, "
                    f"expected ({bounds.size}, {n}, ...)")
            if not factored.get(v, False) and A.shape[2] != n:
                raise ValueError(f"dense coefficients for {self.names[v]} must be square")
            checked[v] = A
            factored.setdefault(v, False)
        self.blocks.append(ConstraintBlock(checked, factored, sense, bounds))

    def _check_square(self, v, C):
        if v >= len(self.sizes) or C.shape != (self.sizes[v], self.sizes[v]):
            raise ValueError(f"objective matrix for variable {v} has shape {C.shape}")

    @property
    def n_constraints(self) -> int:
        return sum(b.m for b in self.blocks)


@dataclass
class ConicSolution:
    values: List[np.ndarray]
    objective: float
    status: str
    max_violation: float
    min_eigenvalue: float
    gap: float
    iterations: int = 0
    solver_status: str = ""
    best_violation: Optional[float] = None


def inner(A: np.ndarray, V: np.ndarray, factored: bool = False) -> np.ndarray:
    """Real trace inner products ``<A_p, V>`` for a stack of coefficients."""
    if factored:
        # g^H V g summed over factor columns
        return np.einsum("mir,ij,mjr->m", A.conj(), V, A).real
    return np.einsum("mij,ij->m", A.conj(), V).real


def _embed_matrix(A: np.ndarray) -> np.ndarray:
    re, im = A.real, A.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _embed_factors(G: np.ndarray) -> np.ndarray:
    re, im = G.real, G.imag
    u = np.concatenate([re, im], axis=1)
    w = np.concatenate([-im, re], axis=1)
    return np.concatenate([u, w], axis=2)


def embed_complex(program: ConicProgram) -> ConicProgram:
    """Real-symmetric program equivalent to a Hermitian one.

    ``H`` becomes ``[[Re H, -Im H], [Im H, Re H]]``.  Inner products double
    under this map, so bounds and objective coefficients are doubled as
    well, keeping optimal points and objective values aligned.
    """
    if program.real:
        return program
    out = ConicProgram(real=True, embedded_from=list(program.sizes))
    for n, psd, name in zip(program.sizes, program.psd, program.names):
        out.add_variable(2 * n, psd, name)
    out.objective = {v: _embed_matrix(np.asarray(C, dtype=complex))
                     for v, C in program.objective.items()}
    out._maximize = program.maximize
    for block in program.blocks:
        coeffs = {}
        for v, A in block.coeffs.items():
            A = np.asarray(A, dtype=complex)
            coeffs[v] = _embed_factors(A) if block.factored[v] else _embed_matrix(A)
        out.blocks.append(ConstraintBlock(coeffs, dict(block.factored), block.sense,
                                          2.0 * block.bounds))
    return out


def restore_complex(Z: np.ndarray) -> np.ndarray:
    """Inverse of the embedding, averaging the redundant copies."""
    n = Z.shape[0] // 2
    a, b = Z[:n, :n], Z[n:, n:]
    c, d = Z[n:, :n], Z[:n, n:]
    return 0.5 * (a + b) + 0.5j * (c - d)


def _svec_index(n: int):
    """Row/column indices in Clarabel's column-major upper-triangle order."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.asarray(rows), np.asarray(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def _svec_rows(A: np.ndarray, factored: bool, idx) -> np.ndarray:
    """``svec`` of each coefficient in a stack, chunked to bound memory."""
    rows, cols, scale = idx
    out = np.empty((A.shape[0], rows.size))
    for start in range(0, A.shape[0], _ROW_CHUNK):
        chunk = A[start:start + _ROW_CHUNK]
        dense = np.einsum("mir,mjr->mij", chunk, chunk) if factored else chunk
        out[start:start + _ROW_CHUNK] = dense[:, rows, cols] * scale
    return out


def _assemble(program: ConicProgram):
    """Clarabel data ``(q, A, b, cones, offsets)`` for a real program."""
    import clarabel

    idx = [_svec_index(n) for n in program.sizes]
    widths = [i[0].size for i in idx]
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    nx = int(offsets[-1])

    rows_by_sense = {s: [] for s in _SENSES}
    bounds_by_sense = {s: [] for s in _SENSES}
    for block in program.blocks:
        parts = []
        for v in range(len(program.sizes)):
            if v in block.coeffs:
                parts.append(sp.csr_matrix(
                    _svec_rows(block.coeffs[v], block.factored[v], idx[v])))
            else:
                parts.append(sp.csr_matrix((block.m, widths[v])))
        mat = sp.hstack(parts, format="csr")
        rows_by_sense[block.sense].append(mat)
        bounds_by_sense[block.sense].append(block.bounds)

    q = np.zeros(nx)
    for v, C in program.objective.items():
        rows, cols, scale = idx[v]
        q[offsets[v]:offsets[v + 1]] = C[rows, cols].real * scale

    def stack(s):
        if not rows_by_sense[s]:
            return sp.csr_matrix((0, nx)), np.zeros(0)
        return sp.vstack(rows_by_sense[s], format="csr"), np.concatenate(bounds_by_sense[s])

    A_eq, b_eq = stack("=")
    A_ge, b_ge = stack(">=")
    A_le, b_le = stack("<=")

    # free variables never touched by any row are pinned to zero
    used = np.zeros(nx, dtype=bool)
    for M in (A_eq, A_ge, A_le):
        used[np.unique(M.indices)] = True
    used |= q != 0
    pin = []
    for v in range(len(program.sizes)):
        if not program.psd[v]:
            cols = np.arange(offsets[v], offsets[v + 1])
            pin.extend(cols[~used[cols]].tolist())

    blocks_A = [A_eq, -A_ge, A_le]
    blocks_b = [b_eq, -b_ge, b_le]
    cones = []
    n_zero = A_eq.shape[0] + len(pin)
    if pin:
        P = sp.csr_matrix((np.ones(len(pin)), (np.arange(len(pin)), pin)),
                          shape=(len(pin), nx))
        blocks_A.insert(1, P)
        blocks_b.insert(1, np.zeros(len(pin)))
    if n_zero:
        cones.append(clarabel.ZeroConeT(n_zero))
    n_nonneg = A_ge.shape[0] + A_le.shape[0]
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    for v in range(len(program.sizes)):
        if program.psd[v]:
            w = widths[v]
            blocks_A.append(-sp.eye(w, nx, k=int(offsets[v]), format="csr"))
            blocks_b.append(np.zeros(w))
            cones.append(clarabel.PSDTriangleConeT(program.sizes[v]))
    A = sp.vstack(blocks_A, format="csc")
    b = np.concatenate(blocks_b)
    return q, A, b, cones, idx, offsets


def _unpack(x, program, idx, offsets):
    values = []
    for v, n in enumerate(program.sizes):
        rows, cols, scale = idx[v]
        Z = np.zeros((n, n))
        Z[rows, cols] = x[offsets[v]:offsets[v + 1]] / scale
        Z = Z + np.triu(Z, 1).T
        values.append(Z)
    return values


def _run_clarabel(program: ConicProgram, tol: Tolerances):
    import clarabel

    q, A, b, cones, idx, offsets = _assemble(program)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = tol.max_iter
    settings.tol_feas = 1e-10
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.max_threads = 1
    P = sp.csc_matrix((q.size, q.size))
    result = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    return result, _unpack(np.asarray(result.x), program, idx, offsets)


def residuals(program: ConicProgram, values: Sequence[np.ndarray]):
    """Independent re-check: worst constraint violation and smallest PSD eigenvalue."""
    worst = 0.0
    for block in program.blocks:
        total = np.zeros(block.m)
        for v, A in block.coeffs.items():
            total += inner(A, values[v], block.factored[v])
        if block.sense == ">=":
            viol = block.bounds - total
        elif block.sense == "<=":
            viol = total - block.bounds
        else:
            viol = np.abs(total - block.bounds)
        if viol.size:
            worst = max(worst, float(viol.max()))
    min_eig = np.inf
    for v, V in enumerate(values):
        if program.psd[v]:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(V).min()))
    return worst, (min_eig if np.isfinite(min_eig) else 0.0)


def objective_value(program: ConicProgram, values: Sequence[np.ndarray]) -> float:
    total = 0.0
    for v, C in program.objective.items():
        total += float(np.real(np.sum(np.conj(C) * values[v])))
    return -total if program.maximize else total


def _phase_one(program: ConicProgram, tol: Tolerances) -> float:
    """Smallest uniform relaxation of all linear constraints that admits a point."""
    relaxed = ConicProgram(sizes=list(program.sizes), psd=list(program.psd),
                           names=list(program.names), real=program.real)
    s = relaxed.add_variable(1, psd=True, name="slack")
    one = np.ones((1, 1))
    for block in program.blocks:
        ones = np.ones((block.m, 1, 1))
        if block.sense in (">=", "="):
            relaxed.blocks.append(ConstraintBlock(
                {**block.coeffs, s: ones}, {**block.factored, s: False}, ">=", block.bounds))
        if block.sense in ("<=", "="):
            relaxed.blocks.append(ConstraintBlock(
                {**block.coeffs, s: -ones}, {**block.factored, s: False}, "<=", block.bounds))
    relaxed.objective = {s: one}
    result, values = _run_clarabel(relaxed, tol)
    return float(values[s][0, 0])


def solve(program: ConicProgram, tol: Tolerances = Tolerances()) -> ConicSolution:
    """Solve a conic program and verify the result independently.

    The status is ``optimal`` only if the point passes the residual checks
    of ``tol`` on the caller's own (unembedded) program.  Certified primal
    infeasibility yields ``infeasible`` together with the smallest uniform
    constraint relaxation that would restore feasibility.
    """
    if not program.sizes:
        raise ValueError("program has no variables")
    real = embed_complex(program)
    result, values = _run_clarabel(real, tol)
    status_name = str(result.status)
    if program.real:
        restored = values
    else:
        restored = [restore_complex(Z) for Z in values]

    if "Infeasible" in status_name and "Dual" not in status_name:
        best = _phase_one(real, tol) / (1.0 if program.real else 2.0)
        log.info("conic program infeasible; best uniform violation %.3g", best)
        worst, min_eig = residuals(program, restored)
        return ConicSolution(restored, np.nan, INFEASIBLE, worst, min_eig, np.inf,
                             result.iterations, status_name, best)

    worst, min_eig = residuals(program, restored)
    obj = objective_value(program, restored)
    scale = 1.0 if program.real else 2.0
    p, d = result.obj_val / scale, result.obj_val_dual / scale
    gap = abs(p - d) / (1.0 + abs(p)) if np.isfinite(p) and np.isfinite(d) else np.inf
    ok = (worst <= tol.feas_tol and min_eig >= -tol.psd_tol and gap <= tol.gap_tol
          and "Solved" in status_name)
    status = OPTIMAL if ok else INACCURATE
    if not ok:
        log.info("conic solve %s: violation %.2e, min eig %.2e, gap %.2e",
                    status_name, worst, min_eig, gap)
    return ConicSolution(restored, obj, status, worst, min_eig, gap,
                         result.iterations, status_name)
