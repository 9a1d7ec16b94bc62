"""Multi-slot modulation design by lifting, relaxation and low-rank recovery.

The design problem asks for per-node modulation matrices ``X_k`` (``Q x L``,
unit-norm columns) such that the received sequences of any two combinations
with different outputs are at least ``Delta f`` apart in squared distance.
Lifting ``W = X X^H`` turns each separation requirement into a linear trace
constraint; dropping the rank condition gives a semidefinite program.  The
per-node diagonal blocks of its solution are projected back to rank ``L`` by
the closed-form rule in :func:`recover_modulation`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import conic
from .funcspace import SYMMETRIC_SHARED, CombinationSet, ConstraintSet, InputDomain

__all__ = [
    "ModulationDesign",
    "LiftedSolution",
    "SpectralFactorization",
    "SeparationReport",
    "InfeasibleDesignError",
    "difference_outer",
    "solve_lifted_design",
    "reduce_rank",
    "spectral_tail",
    "recover_modulation",
    "project_block",
    "factorize_block",
    "CLOSED_FORM",
    "WATERFILL",
    "frobenius_objective",
    "polish_design",
    "design_modulation",
    "RELAXED",
    "REDUCED",
    "verify_separation",
    "design_to_json",
    "design_from_json",
]

RANK_TOL = 1e-8
_TIE_TOL = 1e-10


class InfeasibleDesignError(RuntimeError):
    """No lifted design meets every separation requirement.

    ``lifted`` carries the best-margin solution so callers can fall back to
    merging overlapped outputs.
    """

    def __init__(self, message, lifted=None):
        super().__init__(message)
        self.lifted = lifted


@dataclass
class LiftedSolution:
    W: np.ndarray
    Q: int
    K: int
    shared: bool
    margin: float
    slacks: np.ndarray = field(repr=False)
    status: str = conic.OPTIMAL

    def block(self, k: int) -> np.ndarray:
        """Diagonal ``Q x Q`` block of node ``k``; the single block when shared."""
        if self.shared:
            return self.W
        Q = self.Q
        return self.W[k * Q:(k + 1) * Q, k * Q:(k + 1) * Q]

    @property
    def n_blocks(self) -> int:
        return 1 if self.shared else self.K


@dataclass
class SpectralFactorization:
    """Ordered eigen-decomposition of one diagonal block."""

    u: np.ndarray
    sigma: np.ndarray
    rank: int
    scale: np.ndarray


@dataclass
class ModulationDesign:
    """Per-node modulation matrices ``X_k`` of shape ``(Q, L)``."""

    X_nodes: List[np.ndarray]
    L: int
    shared: bool = False
    epsilon: float = float("nan")
    report: Optional[dict] = None

    @property
    def Q(self) -> int:
        return self.X_nodes[0].shape[0]

    @property
    def K(self) -> int:
        return len(self.X_nodes)

    @property
    def X(self) -> np.ndarray:
        """Stacked ``(Q*K, L)`` modulation matrix."""
        return np.vstack(self.X_nodes)

    def column_norms(self) -> np.ndarray:
        return np.array([np.sum(np.abs(Xk) ** 2, axis=0) for Xk in self.X_nodes])

    def sequences(self, combinations: CombinationSet) -> np.ndarray:
        """Noiseless aligned sequences ``a_i X`` for each combination."""
        X = self.X
        idx = combinations.indices
        Q = self.Q
        rows = np.arange(idx.shape[1]) * Q + idx
        return X[rows].sum(axis=1)


def difference_outer(a_i, a_j) -> np.ndarray:
    """``(a_i - a_j)(a_i - a_j)^T``."""
    a_i, a_j = np.asarray(a_i, dtype=float), np.asarray(a_j, dtype=float)
    if a_i.shape != a_j.shape:
        raise ValueError(f"selector lengths differ: {a_i.shape} vs {a_j.shape}")
    d = a_i - a_j
    return np.outer(d, d)


def _hermitian_basis(Q: int, n: int, offset: int) -> np.ndarray:
    """Real-valued probes of a ``Q x Q`` block: ``<H, W>`` gives Re/Im entries."""
    probes = []
    for a in range(Q):
        for b in range(a, Q):
            H = np.zeros((n, n), dtype=complex)
            H[offset + a, offset + b] += 0.5
            H[offset + b, offset + a] += 0.5
            probes.append(H)
            if a != b:
                H = np.zeros((n, n), dtype=complex)
                H[offset + a, offset + b] = 0.5j
                H[offset + b, offset + a] = -0.5j
                probes.append(H)
    return np.asarray(probes)


def _design_program(constraints, combinations, L, eig_cap):
    domain = combinations.domain
    Q, K = domain.Q, domain.K
    shared = combinations.mode == SYMMETRIC_SHARED
    n = Q if shared else Q * K
    vec = combinations.design_vectors()
    d = vec[constraints.i] - vec[constraints.j]
    m = d.shape[0]

    prog = conic.ConicProgram()
    w = prog.add_variable(n, psd=True, name="W")
    t = prog.add_variable(1, psd=False, name="margin")
    prog.add_constraints({w: d[:, :, None], t: -np.ones((m, 1, 1))}, ">=",
                         constraints.delta_f, factored={w: True})
    n_blocks = 1 if shared else K
    caps = np.zeros((n_blocks, n, n))
    for k in range(n_blocks):
        caps[k, k * Q:(k + 1) * Q, k * Q:(k + 1) * Q] = np.eye(Q)
    prog.add_constraints({w: caps}, "<=", np.full(n_blocks, float(L)))
    if eig_cap:
        # W_k + S_k = I with S_k >= 0, i.e. every eigenvalue of W_k at most one
        for k in range(n_blocks):
            s = prog.add_variable(Q, psd=True, name=f"S{k}")
            probes = _hermitian_basis(Q, n, k * Q)
            local = _hermitian_basis(Q, Q, 0)
            rhs = np.einsum("mij,ij->m", local.conj(), np.eye(Q)).real
            prog.add_constraints({w: probes, s: local}, "=", rhs)
    return prog, w, t, d


def _lifted_from(sol, w, t, d, constraints, combinations):
    domain = combinations.domain
    W = sol.values[w]
    W = 0.5 * (W + W.conj().T)
    margin = float(sol.values[t].real[0, 0])
    slacks = np.einsum("mi,ij,mj->m", d, W, d).real - constraints.delta_f
    return LiftedSolution(W, domain.Q, domain.K, combinations.mode == SYMMETRIC_SHARED,
                          margin, slacks, sol.status)


def solve_lifted_design(constraints: ConstraintSet, combinations: CombinationSet,
                        L: int, tol: conic.Tolerances = conic.Tolerances(),
                        eig_cap: bool = False) -> LiftedSolution:
    """Max-margin lifted design.

    Maximises ``t`` subject to ``<W, D_ij> >= Delta f_ij + t`` for every
    constrained pair, ``Tr(W_k) <= L`` for every node block and ``W >= 0``.
    In symmetric-shared mode ``W`` is a single ``Q x Q`` block and ``D_ij``
    is built from histogram differences.  ``eig_cap`` adds ``W_k <= I``.

    Raises
    ------
    InfeasibleDesignError
        If the best achievable margin is negative beyond ``feas_tol``.
    """
    if L < 1:
        raise ValueError(f"slot count must be >= 1, got {L}")
    domain = combinations.domain
    Q, K = domain.Q, domain.K
    shared = combinations.mode == SYMMETRIC_SHARED
    n = Q if shared else Q * K
    if len(constraints) == 0:
        return LiftedSolution(np.zeros((n, n), dtype=complex), Q, K, shared, np.inf,
                              np.zeros(0))

    prog, w, t, d = _design_program(constraints, combinations, L, eig_cap)
    prog.set_objective({t: np.ones((1, 1))}, maximize=True)
    sol = conic.solve(prog, tol)
    lifted = _lifted_from(sol, w, t, d, constraints, combinations)
    if sol.status == conic.INFEASIBLE or lifted.margin < -tol.feas_tol:
        raise InfeasibleDesignError(
            f"no lifted design separates all outputs (best margin {lifted.margin:.3g})",
            lifted)
    return lifted


def spectral_tail(W: np.ndarray, L: int) -> float:
    """Sum of the eigenvalues of ``W`` beyond the ``L`` largest."""
    sigma = np.linalg.eigvalsh(0.5 * (W + W.conj().T))[::-1]
    return float(np.clip(sigma[L:], 0.0, None).sum())


KEEP_LEVELS = (0.5, 0.25, 0.125, 0.0625, 0.0)


def _convex_iteration(constraints, combinations, L, start, floor, max_iter, target, tol):
    """Repeatedly minimise the trace outside the top-``L`` eigenspace."""
    best, best_tail = start, spectral_tail(start.W, L)
    current = start.W
    n = current.shape[0]
    for _ in range(max_iter):
        if best_tail <= target:
            break
        prog, w, t, d = _design_program(constraints, combinations, L, eig_cap=True)
        prog.add_constraints({t: np.ones((1, 1, 1))}, ">=", [floor])
        _, U = np.linalg.eigh(0.5 * (current + current.conj().T))
        top = U[:, ::-1][:, :L]
        prog.set_objective({w: np.eye(n) - top @ top.conj().T})
        sol = conic.solve(prog, tol)
        if sol.status == conic.INFEASIBLE:
            break
        lifted = _lifted_from(sol, w, t, d, constraints, combinations)
        current = lifted.W
        tail = spectral_tail(current, L)
        improved = tail < 0.99 * best_tail
        if tail < best_tail:
            best, best_tail = lifted, tail
        if not improved:
            break
    return best, best_tail


def reduce_rank(constraints: ConstraintSet, combinations: CombinationSet, L: int,
                levels=KEEP_LEVELS, max_iter: int = 30, rel_tol: float = 1e-9,
                tol: conic.Tolerances = conic.Tolerances()) -> LiftedSolution:
    """Lifted design of rank at most ``L`` with eigenvalue-capped blocks.

    First the max-margin problem is solved with ``W_k <= I`` added, giving
    margin ``t1``.  Then, holding ``t >= keep * t1``, the trace of ``W``
    outside its current top-``L`` eigenspace is minimised repeatedly, a
    convex-concave heuristic that drives the spectral tail to zero.  ``keep``
    walks down ``levels`` until a rank-``L`` point is reached; if none is,
    the iterate with the smallest tail is returned.
    """
    base = solve_lifted_design(constraints, combinations, L, tol, eig_cap=True)
    if len(constraints) == 0:
        return base
    target = rel_tol * max(float(np.trace(base.W).real), 1e-300)
    best, best_tail = base, spectral_tail(base.W, L)
    for keep in levels:
        lifted, tail = _convex_iteration(constraints, combinations, L, base,
                                         keep * base.margin, max_iter, target, tol)
        if tail < best_tail:
            best, best_tail = lifted, tail
        if tail <= target:
            break
    return best


def _lead_index(u: np.ndarray) -> int:
    mag = np.abs(u)
    return int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])


def _ordered_eigh(Wk: np.ndarray):
    """Eigenpairs in descending order with the deterministic tie-break.

    Tied eigenvalues are ordered by the index of their vector's largest
    entry; each vector is then rotated so that entry is real positive.
    """
    Wk = 0.5 * (Wk + Wk.conj().T)
    sigma, U = np.linalg.eigh(Wk)
    sigma = np.clip(sigma, 0.0, None)[::-1]
    U = U[:, ::-1]
    top = sigma[0] if sigma.size else 0.0
    order = list(range(sigma.size))
    start = 0
    while start < sigma.size:
        stop = start + 1
        while stop < sigma.size and sigma[start] - sigma[stop] <= _TIE_TOL * max(top, 1.0):
            stop += 1
        order[start:stop] = sorted(order[start:stop], key=lambda c: _lead_index(U[:, c]))
        start = stop
    sigma, U = sigma[order], U[:, order]
    lead = U[[_lead_index(U[:, c]) for c in range(U.shape[1])], np.arange(U.shape[1])]
    phase = np.where(np.abs(lead) > 0, lead / np.abs(lead), 1.0)
    return sigma, U / phase[None, :]


def factorize_block(Wk: np.ndarray, rank_tol: float = RANK_TOL) -> SpectralFactorization:
    sigma, U = _ordered_eigh(Wk)
    top = sigma[0] if sigma.size else 0.0
    rank = int(np.sum(sigma > rank_tol * top)) if top > 0 else 0
    scale = np.minimum(np.sqrt(sigma), 1.0)
    return SpectralFactorization(U, sigma, rank, scale)


CLOSED_FORM = "closed-form"
WATERFILL = "waterfill"


def _waterfill(sigma: np.ndarray, budget: float) -> np.ndarray:
    """``max(sigma - mu, 0)`` with the smallest ``mu >= 0`` keeping the sum within budget."""
    if sigma.sum() <= budget:
        return sigma.copy()
    s = np.sort(sigma)[::-1]
    csum = np.cumsum(s)
    for r in range(s.size, 0, -1):
        mu = (csum[r - 1] - budget) / r
        if mu < s[r - 1]:
            break
    return np.clip(sigma - mu, 0.0, None)


def project_block(Wk: np.ndarray, L: int, rank_tol: float = RANK_TOL,
                  rule: str = CLOSED_FORM):
    """Rank-``L`` recovery of one block.

    ``rule="closed-form"``: ``X = sum_{i <= min(L, rank)} min(sqrt(sigma_i), 1) u_i e_i^T``
    with ``e_i`` the ``i``-th unit vector of length ``L``.

    ``rule="waterfill"``: the exact minimiser of ``||W_k - X X^H||_F`` over
    unit-bounded columns.  The leading eigenvalues are water-filled to total
    at most ``L`` and the slots are mixed by a normalised DFT, which spreads
    the energy evenly so every column norm is ``sum(y) / L <= 1``.  The two
    rules agree whenever no leading eigenvalue exceeds one.
    """
    if rule not in (CLOSED_FORM, WATERFILL):
        raise ValueError(f"unknown projection rule {rule!r}")
    fac = factorize_block(Wk, rank_tol)
    Q = Wk.shape[0]
    X = np.zeros((Q, L), dtype=complex)
    r = min(L, fac.rank)
    if rule == CLOSED_FORM or r == 0 or fac.sigma[0] <= 1.0:
        X[:, :r] = fac.u[:, :r] * fac.scale[:r][None, :]
        return X, fac
    y = _waterfill(fac.sigma[:r], float(L))
    X[:, :r] = fac.u[:, :r] * np.sqrt(y)[None, :]
    F = np.exp(-2j * np.pi * np.outer(np.arange(L), np.arange(L)) / L) / np.sqrt(L)
    return X @ F, fac


def _align_nodes(X_nodes: List[np.ndarray], W: np.ndarray, Q: int, sweeps: int = 3):
    """Rotate each node's slots to agree with the off-diagonal blocks of ``W``.

    ``X_k V`` with ``V`` unitary has the same Gram matrix as ``X_k`` and, as
    ``X_k^H X_k`` is diagonal with entries at most one, column norms that are
    still at most one; so any such rotation is an equally good per-node
    recovery.  ``V`` is the unitary polar factor of the least-squares fit
    ``X_k^+ W_km (X_m^H)^+`` summed over the other nodes, which is exact
    whenever ``W`` itself has rank at most ``L``.  Node 0 is the reference;
    subsequent sweeps refine against all other nodes.
    """
    K = len(X_nodes)
    X_nodes = [X.copy() for X in X_nodes]
    pinv = [np.linalg.pinv(X, rcond=1e-8) for X in X_nodes]
    rotations = [np.eye(X_nodes[0].shape[1], dtype=complex) for _ in range(K)]
    for sweep in range(sweeps):
        for k in range(1, K):
            M = np.zeros_like(rotations[k])
            # the first sweep only trusts nodes already rotated
            for m in range(k if sweep == 0 else K):
                if m == k:
                    continue
                Wkm = W[k * Q:(k + 1) * Q, m * Q:(m + 1) * Q]
                M += pinv[k] @ Wkm @ pinv[m].conj().T @ rotations[m]
            U, _, Vh = np.linalg.svd(M)
            rotations[k] = U @ Vh
    return [X @ R for X, R in zip(X_nodes, rotations)]


def recover_modulation(lifted: LiftedSolution, L: int, epsilon: float = float("nan"),
                       rank_tol: float = RANK_TOL, align: bool = True,
                       rule: str = CLOSED_FORM):
    """Per-node modulation matrices from the lifted solution.

    Each diagonal block is projected independently by :func:`project_block`
    with the given ``rule``.  With several distinct nodes, ``align`` then
    rotates the slot basis of nodes ``1..K-1`` (see :func:`_align_nodes`),
    which leaves every per-node objective and column norm bound intact.

    Returns
    -------
    design : ModulationDesign
    factors : list of SpectralFactorization
        One per diagonal block.
    """
    X_nodes, factors = [], []
    for k in range(lifted.n_blocks):
        X, fac = project_block(lifted.block(k), L, rank_tol, rule)
        X_nodes.append(X)
        factors.append(fac)
    if lifted.shared:
        X_nodes = [X_nodes[0]] * lifted.K
    elif align and lifted.K > 1:
        X_nodes = _align_nodes(X_nodes, lifted.W, lifted.Q)
    return ModulationDesign(X_nodes, L, lifted.shared, epsilon), factors


def _column_lmi(prog: conic.ConicProgram, Q: int) -> int:
    """PSD variable ``[[1, x^H], [x, I]]`` encoding ``||x||^2 <= 1``."""
    y = prog.add_variable(Q + 1, psd=True)
    corner = np.zeros((1, Q + 1, Q + 1), dtype=complex)
    corner[0, 0, 0] = 1.0
    probes = np.concatenate([corner, _hermitian_basis(Q, Q + 1, 1)])
    lower = np.zeros((Q + 1, Q + 1), dtype=complex)
    lower[1:, 1:] = np.eye(Q)
    rhs = np.einsum("mij,ij->m", probes.conj(), lower).real
    rhs[0] = 1.0
    prog.add_constraints({y: probes}, "=", rhs)
    return y


def _polish_step(X_nodes, shared, d, delta_f, tol):
    """One convex-restriction step; returns the new node matrices and margin."""
    Q, L = X_nodes[0].shape
    n_var_nodes = 1 if shared else len(X_nodes)
    Xbar = X_nodes[0] if shared else np.vstack(X_nodes)
    g = d @ Xbar                      # (m, L) current pairwise differences
    m = d.shape[0]
    prog = conic.ConicProgram()
    t = prog.add_variable(1, psd=False, name="margin")
    coeffs = {t: -np.ones((m, 1, 1))}
    ys = {}
    for k in range(n_var_nodes):
        dk = d[:, k * Q:(k + 1) * Q]
        for ell in range(L):
            y = _column_lmi(prog, Q)
            ys[k, ell] = y
            A = np.zeros((m, Q + 1, Q + 1), dtype=complex)
            A[:, 1:, 0] = g[:, ell, None] * dk
            A[:, 0, 1:] = np.conj(g[:, ell, None]) * dk
            coeffs[y] = A
    bounds = delta_f + np.sum(np.abs(g) ** 2, axis=1)
    prog.add_constraints(coeffs, ">=", bounds)
    prog.set_objective({t: np.ones((1, 1))}, maximize=True)
    sol = conic.solve(prog, tol)
    if sol.status == conic.INFEASIBLE:
        return None, -np.inf
    new = []
    for k in range(n_var_nodes):
        cols = [sol.values[ys[k, ell]][1:, 0] for ell in range(L)]
        Xk = np.stack(cols, axis=1)
        # the LMI allows tiny overshoot; pull columns back inside the unit ball
        norms = np.sqrt(np.sum(np.abs(Xk) ** 2, axis=0))
        Xk = Xk / np.maximum(norms, 1.0)[None, :]
        new.append(Xk)
    if shared:
        new = [new[0]] * len(X_nodes)
    return new, float(sol.values[t].real[0, 0])


def _polish_from(design, d, delta_f, constraints, combinations, max_iter, rel_tol, tol):
    scale = float(delta_f.max())
    current = design
    worst = verify_separation(design, constraints, combinations).worst_margin
    for _ in range(max_iter):
        X_new, _ = _polish_step(current.X_nodes, current.shared, d, delta_f, tol)
        if X_new is None:
            break
        candidate = ModulationDesign(X_new, design.L, design.shared, design.epsilon)
        margin = verify_separation(candidate, constraints, combinations).worst_margin
        if margin > worst:
            gain = margin - worst
            current, worst = candidate, margin
            if gain > rel_tol * scale:
                continue
        break
    return current, worst


def _random_design(template: ModulationDesign, rng: np.random.Generator) -> ModulationDesign:
    Q, L = template.Q, template.L
    n_nodes = 1 if template.shared else template.K
    nodes = []
    for _ in range(n_nodes):
        Xk = rng.standard_normal((Q, L)) + 1j * rng.standard_normal((Q, L))
        Xk /= np.sqrt(np.sum(np.abs(Xk) ** 2, axis=0))[None, :]
        nodes.append(Xk)
    if template.shared:
        nodes = nodes * template.K
    return ModulationDesign(nodes, template.L, template.shared, template.epsilon)


def polish_design(design: ModulationDesign, constraints: ConstraintSet,
                  combinations: CombinationSet, max_iter: int = 25, rel_tol: float = 1e-4,
                  restarts: int = 8, seed: int = 0,
                  tol: conic.Tolerances = conic.Tolerances()) -> ModulationDesign:
    """Raise the worst separation margin by local search in ``X``.

    Each step replaces ``||d^T X||^2`` by its tangent lower bound at the
    current point and maximises the worst margin under the unit column-norm
    bounds, so every iterate stays feasible and the true margin never
    decreases.  Stops when the gain falls below ``rel_tol`` (relative to the
    largest requirement).

    If requirements are still violated, up to ``restarts`` further searches
    start from seeded random points; the best result overall is returned.
    """
    if len(constraints) == 0:
        return design
    vec = combinations.design_vectors()
    d = vec[constraints.i] - vec[constraints.j]
    args = (d, constraints.delta_f, constraints, combinations, max_iter, rel_tol, tol)
    best, worst = _polish_from(design, *args)
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        if worst >= -tol.feas_tol:
            break
        candidate, margin = _polish_from(_random_design(design, rng), *args)
        if margin > worst:
            best, worst = candidate, margin
    return best


def frobenius_objective(W: np.ndarray, X: np.ndarray) -> float:
    """``||W - X X^H||_F^2``."""
    R = W - X @ X.conj().T
    return float(np.sum(np.abs(R) ** 2))


@dataclass
class SeparationReport:
    margins: np.ndarray
    violated: np.ndarray
    tol: float

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else float("inf")

    @property
    def n_violated(self) -> int:
        return int(self.violated.size)

    def summary(self) -> dict:
        return {"worst_margin": _finite_or_none(self.worst_margin),
                "violated_pairs": self.n_violated,
                "pairs": int(self.margins.size)}


def verify_separation(design: ModulationDesign, constraints: ConstraintSet,
                      combinations: CombinationSet, tol: float = 1e-7) -> SeparationReport:
    """Margins ``||(a_i - a_j)^T X||^2 - Delta f_ij`` for every constrained pair."""
    v = design.sequences(combinations)
    diff = v[constraints.i] - v[constraints.j]
    margins = np.sum(np.abs(diff) ** 2, axis=1) - constraints.delta_f
    violated = np.flatnonzero(margins < -tol)
    return SeparationReport(margins, violated, tol)


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


RELAXED = "relaxed"
REDUCED = "reduced"


def design_modulation(combinations: CombinationSet, constraints: ConstraintSet, L: int,
                      epsilon: float = float("nan"), method: str = REDUCED,
                      polish: bool = True, seed: int = 0, rule: str = CLOSED_FORM,
                      tol: conic.Tolerances = conic.Tolerances()) -> ModulationDesign:
    """Full design pipeline: lifted program, recovery, optional polish, check.

    ``method="relaxed"`` solves the plain relaxation and projects each block;
    ``method="reduced"`` first drives the lifted solution towards rank ``L``
    with :func:`reduce_rank`.  ``rule`` selects the block projection (see
    :func:`project_block`).  If the lifted program has no feasible point,
    the best-margin solution is used and the report is flagged
    ``"best-effort"`` instead of raising; callers decide whether merged
    outputs are acceptable.
    """
    if method not in (RELAXED, REDUCED):
        raise ValueError(f"unknown design method {method!r}")
    status = "feasible"
    try:
        if method == REDUCED:
            lifted = reduce_rank(constraints, combinations, L, tol=tol)
        else:
            lifted = solve_lifted_design(constraints, combinations, L, tol)
    except InfeasibleDesignError as err:
        if err.lifted is None:
            raise
        lifted = err.lifted
        status = "best-effort"
    design, _ = recover_modulation(lifted, L, epsilon, rule=rule)
    if polish:
        design = polish_design(design, constraints, combinations, seed=seed, tol=tol)
    check = verify_separation(design, constraints, combinations, tol=tol.feas_tol)
    if check.n_violated:
        status = "best-effort"
    report = dict(check.summary())
    report.update({
        "status": status,
        "method": method,
        "projection": rule,
        "polished": bool(polish),
        "lifted_margin": _finite_or_none(lifted.margin),
        "spectral_tail": spectral_tail(lifted.W, L),
    })
    design.report = report
    return design


def _encode_matrix(X: np.ndarray):
    return [[[float(z.real), float(z.imag)] for z in row] for row in X]


def _decode_matrix(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def design_to_json(design: ModulationDesign) -> str:
    doc = {
        "Q": design.Q,
        "K": design.K,
        "L": design.L,
        "shared": design.shared,
        "epsilon": design.epsilon,
        "X": [_encode_matrix(X) for X in design.X_nodes],
        "margin_report": design.report,
    }
    return json.dumps(doc, indent=1)


def design_from_json(text: str) -> ModulationDesign:
    doc = json.loads(text)
    X_nodes = [_decode_matrix(rows) for rows in doc["X"]]
    for X in X_nodes:
        if X.shape != (doc["Q"], doc["L"]):
            raise ValueError(f"node matrix has shape {X.shape}, expected ({doc['Q']}, {doc['L']})")
    if len(X_nodes) != doc["K"]:
        raise ValueError(f"expected {doc['K']} node matrices, got {len(X_nodes)}")
    return ModulationDesign(X_nodes, doc["L"], doc["shared"], doc["epsilon"],
                            doc.get("margin_report"))
