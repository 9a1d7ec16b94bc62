"""Power and phase adaptation for fixed modulations under fading.

Every node keeps a fixed QAM pattern and the transmitter chooses per-slot
complex power coefficients ``p_l`` so that the faded, superimposed
sequences stay separated.  Writing ``P_l = p_l p_l^H`` gives a
semidefinite relaxation whose solution is factored directly when it has
rank one and rounded by Gaussian randomization otherwise.

The number of combination pairs grows as ``Q^(2K)``, but a pair enters the
constraints only through its per-node symbol differences.  Pairs are
therefore grouped into *difference classes*: all pairs with the same
difference pattern share one constraint whose requirement is the largest
``Delta f`` among them.  This is an exact reformulation and it does not
depend on the channel, so it is built once per modulation and function.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import conic, kernels
from .funcspace import (CombinatorialOverflowError, EmptyConstraintSetError, TargetFunction,
                        _all_index_tuples, default_epsilon)

__all__ = [
    "FixedModulation",
    "DifferenceClasses",
    "PowerPlan",
    "PowerInfeasibleError",
    "RandomizationError",
    "qam_points",
    "fixed_modulation",
    "build_B",
    "build_C",
    "build_difference_classes",
    "class_values",
    "solve_power_sdp",
    "recover_power",
    "adapt_power",
    "plan_sequences",
    "plan_to_json",
    "plan_from_json",
]

RANK1 = "rank1"
RANDOMIZED = "randomized"
DEFAULT_CLASS_CAP = 5 * 10**7
_CHUNK = 1 << 18


class PowerInfeasibleError(ValueError):
    """Some pair of outputs cannot be separated under the given channel."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class RandomizationError(RuntimeError):
    """No randomized candidate reached feasibility within the scale limit."""


def qam_points(Q: int) -> np.ndarray:
    """Square ``Q``-QAM with unit mean energy, row-major over (real, imag) levels."""
    m = int(round(np.sqrt(Q)))
    if m * m != Q or m < 2:
        raise ValueError(f"square QAM needs Q to be a square >= 4, got {Q}")
    levels = 2.0 * np.arange(m) - (m - 1)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


_PATTERNS = {"4-QAM": 4, "QPSK": 4, "16-QAM": 16, "64-QAM": 64}


@dataclass(frozen=True)
class FixedModulation:
    """Per-slot stacked patterns ``x_l`` of length ``N = Q K`` (node-major)."""

    patterns: np.ndarray
    name: str
    Q: int
    K: int

    def __post_init__(self):
        pat = np.asarray(self.patterns, dtype=complex)
        if pat.ndim != 2 or pat.shape[1] != self.Q * self.K:
            raise ValueError(f"patterns must have shape (L, {self.Q * self.K}), got {pat.shape}")
        object.__setattr__(self, "patterns", pat)

    @property
    def L(self) -> int:
        return self.patterns.shape[0]

    def node_points(self, k: int) -> np.ndarray:
        """``(L, Q)`` symbols of node ``k``."""
        return self.patterns[:, k * self.Q:(k + 1) * self.Q]


def fixed_modulation(name: str, K: int, L: int) -> FixedModulation:
    """The named QAM pattern used by every node in every slot."""
    key = name.upper()
    if key not in _PATTERNS:
        raise ValueError(f"unknown fixed modulation {name!r}; known: {sorted(_PATTERNS)}")
    Q = _PATTERNS[key]
    row = np.tile(qam_points(Q), K)
    return FixedModulation(np.tile(row, (L, 1)), key, Q, K)


def build_B(h: np.ndarray, x: np.ndarray, Q: int) -> np.ndarray:
    """``(diag(h) kron I_Q) diag(x) (I_K kron 1_Q)``, an ``N x K`` matrix."""
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    x = np.asarray(x, dtype=complex).ravel()
    K = h.size
    if x.size != Q * K:
        raise ValueError(f"pattern length {x.size} does not match Q*K = {Q * K}")
    B = np.zeros((Q * K, K), dtype=complex)
    for k in range(K):
        B[k * Q:(k + 1) * Q, k] = h[k] * x[k * Q:(k + 1) * Q]
    return B


def build_C(B: np.ndarray, a_i: np.ndarray, a_j: np.ndarray) -> np.ndarray:
    """``B^H d d^T B`` for ``d = a_i - a_j``."""
    d = np.asarray(a_i, dtype=float) - np.asarray(a_j, dtype=float)
    g = B.conj().T @ d
    return np.outer(g, g.conj())


@dataclass
class DifferenceClasses:
    """Constraint classes keyed by per-node difference patterns.

    ``deltas[k]`` holds the distinct ``(L,)`` difference vectors of node
    ``k``; ``codes[c, k]`` indexes into it for class ``c``.  ``requirement``
    is ``epsilon`` times the largest output gap among the pairs of the class.
    """

    deltas: List[np.ndarray]
    codes: np.ndarray
    requirement: np.ndarray
    epsilon: float
    Q: int
    K: int
    pair_codes: List[np.ndarray] = field(repr=False)

    def __len__(self) -> int:
        return int(self.requirement.size)

    def example_pair(self, c: int, function: TargetFunction):
        """A combination pair of class ``c`` attaining its requirement."""
        per_node = [np.argwhere(self.pair_codes[k] == self.codes[c, k]) for k in range(self.K)]
        grids = np.meshgrid(*[np.arange(len(p)) for p in per_node], indexing="ij")
        sel = [g.ravel() for g in grids]
        qi = np.stack([per_node[k][sel[k], 0] for k in range(self.K)], axis=1)
        qj = np.stack([per_node[k][sel[k], 1] for k in range(self.K)], axis=1)
        gap = np.abs(function.of_indices(qi) - function.of_indices(qj))
        best = int(np.argmax(gap))
        return tuple(int(q) for q in qi[best]), tuple(int(q) for q in qj[best])


def _node_codes(points: np.ndarray):
    """Distinct slot-wise differences of one node's ``(L, Q)`` symbols."""
    L, Q = points.shape
    diff = points[:, :, None] - points[:, None, :]          # (L, Q, Q)
    flat = diff.reshape(L, Q * Q).T                           # (Q*Q, L)
    key = np.round(np.concatenate([flat.real, flat.imag], axis=1), 12)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return flat[first], inverse.reshape(Q, Q).astype(np.int64)


def _group_codes(pair_codes, n_codes, nodes, Q):
    """Mixed-radix class code of a node group for every ordered pair of joint indices."""
    if not nodes:
        return np.zeros(1, dtype=np.int64), 1
    idx = _all_index_tuples(Q, len(nodes))                    # (Q^g, g)
    code = np.zeros((idx.shape[0], idx.shape[0]), dtype=np.int64)
    radix = 1
    for pos in range(len(nodes) - 1, -1, -1):
        k = nodes[pos]
        code += radix * pair_codes[k][idx[:, pos][:, None], idx[:, pos][None, :]]
        radix *= n_codes[k]
    return code.ravel(), radix


def build_difference_classes(modulation: FixedModulation, function: TargetFunction,
                             epsilon: Optional[float] = None,
                             class_cap: int = DEFAULT_CLASS_CAP) -> DifferenceClasses:
    """Exact class reduction of the full pairwise constraint set.

    Raises
    ------
    CombinatorialOverflowError
        If the class grid exceeds ``class_cap``.
    EmptyConstraintSetError
        If no pair has differing outputs.
    """
    Q, K = modulation.Q, modulation.K
    if function.domain.Q != Q or function.domain.K != K:
        raise ValueError("modulation and function disagree on Q or K")
    eps = default_epsilon(function) if epsilon is None else float(epsilon)
    deltas, pair_codes = [], []
    for k in range(K):
        d, code = _node_codes(modulation.node_points(k))
        deltas.append(d)
        pair_codes.append(code)
    n_codes = [d.shape[0] for d in deltas]
    n_classes = int(np.prod(n_codes, dtype=np.int64))
    if n_classes > class_cap:
        raise CombinatorialOverflowError(
            f"{n_classes} difference classes exceed the cap of {class_cap}")
    half = K // 2
    group_a, group_b = list(range(half)), list(range(half, K))
    code_a, _ = _group_codes(pair_codes, n_codes, group_a, Q)
    code_b, n_b = _group_codes(pair_codes, n_codes, group_b, Q)
    outputs = function.of_indices(_all_index_tuples(Q, K)).astype(float)
    F = np.ascontiguousarray(outputs.reshape(Q ** half, Q ** (K - half)))
    gaps = kernels.class_max_gap(F, code_a, code_b, n_b, n_classes)

    # the swapped pair (j, i) lands in the negated class with the same gap
    neg_codes = [np.empty(n, dtype=np.int64) for n in n_codes]
    for k in range(K):
        neg_codes[k][pair_codes[k].ravel()] = pair_codes[k].T.ravel()
    cls = np.arange(n_classes, dtype=np.int64)
    digits = np.unravel_index(cls, n_codes)
    neg = np.ravel_multi_index(tuple(neg_codes[k][digits[k]] for k in range(K)), n_codes)
    gaps = np.maximum(gaps, gaps[neg])
    keep = np.flatnonzero((gaps > 0) & (cls <= neg))
    if keep.size == 0:
        raise EmptyConstraintSetError("no pair of combinations has distinct outputs")
    codes = np.stack([digits[k][keep] for k in range(K)], axis=1)
    return DifferenceClasses(deltas, codes, eps * gaps[keep], eps, Q, K, pair_codes)


def class_values(classes: DifferenceClasses, G: np.ndarray,
                 subset: Optional[np.ndarray] = None) -> np.ndarray:
    """``sum_r sum_l |sum_k delta_k[c_k, l] G[r, k, l]|^2`` for every class.

    With ``G[0] = h * p`` this is the separation achieved by a power plan;
    with ``G[r] = h * sqrt(lambda_r) v_r`` it is the lifted value
    ``sum_l <P_l, C_l>``.
    """
    G = np.asarray(G, dtype=complex)
    if G.ndim == 2:
        G = G[None]
    codes = classes.codes if subset is None else classes.codes[subset]
    out = np.zeros(codes.shape[0])
    L = G.shape[2]
    for s in range(0, codes.shape[0], _CHUNK):
        blk = codes[s:s + _CHUNK]
        for ell in range(L):
            # per node lookup tables of delta * g, one column per rank
            acc = 0
            for k in range(classes.K):
                acc = acc + classes.deltas[k][blk[:, k], ell][:, None] * G[None, :, k, ell]
            out[s:s + _CHUNK] += np.sum(acc.real ** 2 + acc.imag ** 2, axis=1)
    return out


def _class_factors(classes, H, subset):
    """Factor ``conj(u)`` of ``C_l = conj(u) u^T`` per slot for a class subset."""
    codes = classes.codes[subset]
    L = H.shape[1]
    out = np.empty((L, codes.shape[0], classes.K, 1), dtype=complex)
    for ell in range(L):
        for k in range(classes.K):
            out[ell, :, k, 0] = np.conj(classes.deltas[k][codes[:, k], ell] * H[k, ell])
    return out


def _lifted_factors(P: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``G[r, k, l] = h_{k,l} sqrt(lambda_r) v_r[k]`` from the eigenpairs of ``P_l``."""
    L, K, _ = P.shape
    G = np.zeros((K, K, L), dtype=complex)
    for ell in range(L):
        lam, V = np.linalg.eigh(0.5 * (P[ell] + P[ell].conj().T))
        lam = np.clip(lam, 0.0, None)
        G[:, :, ell] = (V * np.sqrt(lam)[None, :]).T * H[:, ell][None, :]
    return G


@dataclass
class PowerSDPResult:
    P: np.ndarray
    optimum: float
    status: str
    active: np.ndarray
    rounds: int
    worst_margin: float


def _check_separable(classes, H, function):
    reach = np.zeros(len(classes))
    for ell in range(H.shape[1]):
        for k in range(classes.K):
            reach += np.abs(classes.deltas[k][classes.codes[:, k], ell] * H[k, ell]) ** 2
    dead = np.flatnonzero(reach <= 1e-24)
    if dead.size:
        c = int(dead[np.argmax(classes.requirement[dead])])
        pair = classes.example_pair(c, function) if function is not None else None
        raise PowerInfeasibleError(
            f"channel leaves a pair with distinct outputs inseparable: {pair}", pair)


def solve_power_sdp(classes: DifferenceClasses, H: np.ndarray,
                    function: Optional[TargetFunction] = None, batch: int = 256,
                    max_rounds: int = 60, tol: conic.Tolerances = conic.Tolerances()
                    ) -> PowerSDPResult:
    """Minimise ``sum_l Tr(P_l)`` subject to every class requirement.

    ``H`` is the ``K x L`` channel matrix.  Classes are added to the active
    set in batches of the most violated ones until the solution satisfies
    every class within ``feas_tol``; the active-set optimum then equals the
    full optimum.

    Raises
    ------
    PowerInfeasibleError
        If some class has zero reach under ``H`` (an inseparable pair).
    """
    H = np.asarray(H, dtype=complex)
    K, L = H.shape
    if K != classes.K:
        raise ValueError(f"channel has {K} nodes, classes have {classes.K}")
    _check_separable(classes, H, function)
    req = classes.requirement
    # seed with the classes that a flat allocation serves worst
    flat = class_values(classes, _lifted_factors(np.tile(np.eye(K), (L, 1, 1)), H))
    active = np.unique(np.argsort(flat / req, kind="stable")[:batch])
    P = np.zeros((L, K, K), dtype=complex)
    optimum, status, rounds = 0.0, conic.INFEASIBLE, 0
    worst = -np.inf
    for rounds in range(1, max_rounds + 1):
        prog = conic.ConicProgram()
        ps = [prog.add_variable(K, psd=True, name=f"P{ell}") for ell in range(L)]
        fac = _class_factors(classes, H, active)
        prog.add_constraints({ps[ell]: fac[ell] for ell in range(L)}, ">=", req[active],
                             factored={v: True for v in ps})
        prog.set_objective({v: np.eye(K) for v in ps})
        sol = conic.solve(prog, tol)
        status = sol.status
        if status == conic.INFEASIBLE:
            break
        P = np.stack([sol.values[v] for v in ps])
        optimum = float(sum(np.trace(P[ell]).real for ell in range(L)))
        margin = class_values(classes, _lifted_factors(P, H)) - req
        worst = float(margin.min())
        bad = np.flatnonzero(margin < -tol.feas_tol)
        bad = bad[~np.isin(bad, active)]
        if bad.size == 0:
            break
        order = np.argsort(margin[bad] / req[bad], kind="stable")[:batch]
        active = np.union1d(active, bad[order])
    return PowerSDPResult(P, optimum, status, active, rounds, worst)


@dataclass
class PowerPlan:
    """Per-slot power vectors ``p`` of shape ``(L, K)`` and diagnostics."""

    p: np.ndarray
    method: str
    sdp_optimum: float
    worst_margin: float
    P: Optional[np.ndarray] = field(default=None, repr=False)
    scale: float = 1.0

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.p) ** 2))

    @property
    def L(self) -> int:
        return self.p.shape[0]

    @property
    def K(self) -> int:
        return self.p.shape[1]


def _plan_margins(classes, H, p):
    return class_values(classes, (H * p.T)[None]) - classes.requirement


def _required_scale(values, req):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(values > 0, req / values, np.inf)
    return max(1.0, float(ratio.max())) if ratio.size else 1.0


def recover_power(sdp: PowerSDPResult, classes: DifferenceClasses, H: np.ndarray,
                  n_samples: int = 100, rank_tol: float = 1e-6, c_max: float = 1e3,
                  seed: int = 0, tol: conic.Tolerances = conic.Tolerances()) -> PowerPlan:
    """Power vectors from the lifted solution.

    Rank-one blocks (second eigenvalue below ``rank_tol`` times the first)
    are factored directly.  Otherwise ``n_samples`` candidate tuples are
    drawn from ``CN(0, P_l)`` per slot, each is scaled by the smallest
    ``c >= 1`` that meets every requirement, and the candidate of least
    total power is kept.

    Raises
    ------
    RandomizationError
        If no candidate is feasible with ``c <= c_max``.
    """
    H = np.asarray(H, dtype=complex)
    P = sdp.P
    L, K, _ = P.shape
    req = classes.requirement
    eig = [np.linalg.eigh(0.5 * (P[ell] + P[ell].conj().T)) for ell in range(L)]
    rank_one = all(lam[-2] <= rank_tol * max(lam[-1], 1e-300) if K > 1 else True
                   for lam, _ in eig)
    if rank_one:
        p = np.stack([np.sqrt(max(lam[-1], 0.0)) * V[:, -1] for lam, V in eig])
        values = class_values(classes, (H * p.T)[None])
        c2 = _required_scale(values, req - tol.feas_tol)
        p = np.sqrt(c2) * p
        worst = float((c2 * values - req).min())
        return PowerPlan(p, RANK1, sdp.optimum, worst, P, float(np.sqrt(c2)))

    roots = [V * np.sqrt(np.clip(lam, 0.0, None))[None, :] for lam, V in eig]
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    best, best_power, best_c2 = None, np.inf, 1.0
    for stream in streams:
        rng = np.random.default_rng(stream)
        z = (rng.standard_normal((L, K)) + 1j * rng.standard_normal((L, K))) / np.sqrt(2.0)
        p = np.stack([roots[ell] @ z[ell] for ell in range(L)])
        power = float(np.sum(np.abs(p) ** 2))
        G = (H * p.T)[None]
        # cheap bound on the active set before the full check
        c2 = _required_scale(class_values(classes, G, sdp.active), req[sdp.active])
        if c2 * power >= best_power or c2 > c_max ** 2:
            continue
        c2 = _required_scale(class_values(classes, G), req)
        if c2 > c_max ** 2 or c2 * power >= best_power:
            continue
        best, best_power, best_c2 = p, c2 * power, c2
    if best is None:
        raise RandomizationError(
            f"no randomized candidate became feasible with scale <= {c_max:g}")
    p = np.sqrt(best_c2) * best
    worst = float(_plan_margins(classes, H, p).min())
    return PowerPlan(p, RANDOMIZED, sdp.optimum, worst, P, float(np.sqrt(best_c2)))


def adapt_power(classes: DifferenceClasses, H: np.ndarray,
                function: Optional[TargetFunction] = None, n_samples: int = 100,
                seed: int = 0, tol: conic.Tolerances = conic.Tolerances()) -> PowerPlan:
    """Solve the relaxation for channel ``H`` and recover a power plan."""
    sdp = solve_power_sdp(classes, H, function, tol=tol)
    if sdp.status == conic.INFEASIBLE:
        raise PowerInfeasibleError("power relaxation reported infeasible")
    return recover_power(sdp, classes, H, n_samples=n_samples, seed=seed, tol=tol)


def plan_sequences(plan: PowerPlan, modulation: FixedModulation, H: np.ndarray,
                   indices: np.ndarray) -> np.ndarray:
    """Noiseless received sequences ``(n, L)`` for combinations ``indices``."""
    H = np.asarray(H, dtype=complex)
    idx = np.atleast_2d(indices)
    out = np.zeros((idx.shape[0], modulation.L), dtype=complex)
    for k in range(modulation.K):
        sym = modulation.node_points(k)[:, idx[:, k]].T          # (n, L)
        out += sym * (H[k, :] * plan.p[:, k])[None, :]
    return out


def _pairs(z: np.ndarray):
    return [[float(v.real), float(v.imag)] for v in np.ravel(z)]


def plan_to_json(plan: PowerPlan, H: Optional[np.ndarray] = None) -> str:
    doc = {
        "method": plan.method,
        "total_power": plan.total_power,
        "sdp_optimum": plan.sdp_optimum,
        "worst_margin": plan.worst_margin,
        "scale": plan.scale,
        "L": plan.L,
        "K": plan.K,
        "p": [_pairs(row) for row in plan.p],
    }
    if H is not None:
        doc["channel"] = [_pairs(row) for row in np.asarray(H)]
    return json.dumps(doc, indent=1)


def plan_from_json(text: str) -> PowerPlan:
    doc = json.loads(text)
    p = np.array([[complex(re, im) for re, im in row] for row in doc["p"]], dtype=complex)
    if p.shape != (doc["L"], doc["K"]):
        raise ValueError(f"power vectors have shape {p.shape}, expected ({doc['L']}, {doc['K']})")
    return PowerPlan(p, doc["method"], doc["sdp_optimum"], doc["worst_margin"],
                     scale=doc.get("scale", 1.0))
