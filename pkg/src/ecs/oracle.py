"""Brute-force references: truncated-matrix diagonalization and K_s enumeration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .elliptic import s_coeff
from .lattice import (
    CoefficientMap,
    LatticeVector,
    ModelParams,
    bound_b,
    elementary_shifts,
    free_energy_many,
    pairs,
    relative_shell,
)

MAX_BASIS = 20000


class OracleError(RuntimeError):
    pass


class SelectionAmbiguity(OracleError):
    def __init__(self, message: str, candidates: Sequence[complex]):
        super().__init__(message)
        self.candidates = list(candidates)


@dataclass
class TruncatedOperator:
    """``M(m, m') = E0(m) delta(m, m') - gamma sum S_nu delta(m', m - nu E_jk)`` on a box."""

    base: LatticeVector
    basis: List[LatticeVector]
    matrix: np.ndarray
    cutoff: int

    @property
    def size(self) -> int:
        return len(self.basis)

    def index_of(self, m: Sequence[int]) -> int:
        rel = tuple(int(a) - b for a, b in zip(m, self.base))
        return self.basis.index(rel)


def build_truncated_operator(
    n: Sequence[int], params: ModelParams, cutoff: int, nu_cutoff: Optional[int] = None, max_basis: int = MAX_BASIS
) -> TruncatedOperator:
    """Dense operator on relative vectors with ``max |m_j - n_j| <= cutoff``.

    ``nu_cutoff`` defaults to ``2 * cutoff`` so every shift that stays in the box is kept.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    n = tuple(int(v) for v in n)
    basis = relative_shell(params.N, cutoff)
    if len(basis) > max_basis:
        raise OracleError(f"basis size {len(basis)} exceeds maximum {max_basis}")
    index = {d: i for i, d in enumerate(basis)}
    pts = np.array(basis) + np.array(n)
    M = np.diag(free_energy_many(pts, params)).astype(float)
    nu_cut = 2 * cutoff if nu_cutoff is None else nu_cutoff
    g = params.gamma
    for j, k, nu in elementary_shifts(params.N, nu_cut):
        s = s_coeff(nu, params.nome)
        if s == 0.0:
            continue
        for row, d in enumerate(basis):
            src = list(d)
            src[j] -= nu
            src[k] += nu
            col = index.get(tuple(src))
            if col is not None:
                M[row, col] -= g * s
    return TruncatedOperator(n, basis, M, cutoff)


def oracle_eigenpair(op: TruncatedOperator, n: Optional[Sequence[int]] = None, imag_tol: float = 1e-8):
    """Eigenpair attached to ``n``, with the eigenvector rescaled so its ``n`` component is 1.

    The pair is chosen by the diagonal entry ``P_nn`` of its spectral
    projector ``P = v u^T / (u^T v)`` (``u`` left, ``v`` right eigenvector):
    the pair with ``P_nn`` closest to 1 wins. At ``q = 0`` the operator is
    triangular and ``P_nn`` is exactly 1 for ``E0(n)`` and 0 otherwise, so this
    follows the eigenvalue continuously in ``q``. Two cruder selectors fail on
    this strongly non-normal matrix: the magnitude of the normalized right
    eigenvector at ``n`` (coefficients grow along upward shifts) and the
    largest ``|P_nn|`` (nearly defective pairs have huge projectors).

    Returns ``(eigenvalue, CoefficientMap, info)``.
    """
    n = op.base if n is None else tuple(n)
    center = op.index_of(n)
    vals, left, right = scipy.linalg.eig(op.matrix, left=True, right=True)
    norm = np.einsum("ij,ij->j", left, right)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = left[center, :] * right[center, :] / norm
    score = np.abs(np.nan_to_num(proj, nan=np.inf) - 1.0)
    order = np.argsort(score)
    best, second = order[0], order[1] if len(order) > 1 else None
    if second is not None and score[second] - score[best] < 1e-6:
        raise SelectionAmbiguity(
            f"eigenvectors tie at n: {vals[best]} vs {vals[second]}", [vals[best], vals[second]]
        )
    lam = vals[best]
    v = right[:, best] / right[center, best]
    scale = max(1.0, abs(lam))
    flagged = abs(lam.imag) > imag_tol * scale or np.max(np.abs(v.imag)) > imag_tol * max(1.0, np.max(np.abs(v)))
    info = {
        "projector_weight": complex(proj[best]),
        "score": float(score[best]),
        "runner_up_score": float(score[second]) if second is not None else math.inf,
        "imag_flag": bool(flagged),
        "basis_size": op.size,
    }
    cmap = CoefficientMap(op.base, {d: float(x.real) for d, x in zip(op.basis, v) if x != 0})
    return float(lam.real), cmap, info


def oracle_eigenvalues(op: TruncatedOperator) -> np.ndarray:
    return scipy.linalg.eigvals(op.matrix)


def nearest_eigenvalues(op: TruncatedOperator, target: float, count: int) -> np.ndarray:
    vals = oracle_eigenvalues(op)
    return np.sort(vals[np.argsort(np.abs(vals - target))[:count]].real)


# --------------------------------------------------------------------------- K_s


def _shift_table(params: ModelParams, nu_cutoff: int) -> Dict[LatticeVector, float]:
    """``vector -> sum of |gamma| S_nu`` over single shifts landing on that vector."""
    N = params.N
    table: Dict[LatticeVector, float] = {}
    for j, k, nu in elementary_shifts(N, nu_cutoff):
        s = s_coeff(nu, params.nome)
        if s == 0.0:
            continue
        v = [0] * N
        v[j] += nu
        v[k] -= nu
        v = tuple(v)
        table[v] = table.get(v, 0.0) + abs(params.gamma) * s
    return table


def k_s_distribution(s: int, params: ModelParams, nu_cutoff: int, max_terms: int = 5_000_000) -> Dict[LatticeVector, float]:
    """All values ``K_s(m)`` (truncated at ``|nu| <= nu_cutoff``) by repeated convolution."""
    if s < 1:
        raise ValueError("s must be >= 1")
    table = _shift_table(params, nu_cutoff)
    if len(table) ** min(s, 2) * s > max_terms * 10:
        raise OracleError("K_s enumeration too large")
    dist = {(0,) * params.N: 1.0}
    for _ in range(s):
        new: Dict[LatticeVector, float] = {}
        for m, w in dist.items():
            for v, t in table.items():
                key = tuple(a + b for a, b in zip(m, v))
                new[key] = new.get(key, 0.0) + w * t
        if len(new) > max_terms:
            raise OracleError("K_s support too large")
        dist = new
    return dist


def _tail_sums(params: ModelParams, nu_cutoff: int, eps: float) -> Tuple[float, float]:
    """``(A, T)``: total weight and its ``|nu| > nu_cutoff`` part for ``w(v) = |gamma| S_nu e^{eps sum_j j v_j}``."""
    q = params.q
    logq = math.log(q)
    total = 0.0
    tail = 0.0
    for j, k in pairs(params.N):
        shift = j - k  # sum_l l (E_jk)_l, negative for j < k
        for nu in range(1, 100_000):
            den = 1 - q ** (2 * nu)
            up = nu * math.exp(eps * nu * shift) / den
            down = nu * math.exp(nu * (2 * logq - eps * shift)) / den
            total += abs(params.gamma) * (up + down)
            if nu > nu_cutoff:
                tail += abs(params.gamma) * (up + down)
            if up + down < 1e-30 * max(total, 1.0):
                break
    return total, tail


def k_s_tail_bound(s: int, params: ModelParams, nu_cutoff: int, eps: float, m: Sequence[int]) -> float:
    """Bound on the contribution of sequences with some ``|nu| > nu_cutoff``.

    With weights ``w(v) = |gamma| S_nu e^{eps sum_j j v_j}``,
    ``A = sum_v w(v)`` and ``T = sum_{|nu|>L} w(v)``, the missing part of
    ``K_s(m)`` is at most ``e^{-eps sum j m_j} (A^s - (A - T)^s)``.
    ``A`` is finite for ``0 < eps < beta/(N-1)``.
    """
    if params.q == 0:
        return 0.0
    if not 0 < eps < params.beta / (params.N - 1):
        raise ValueError("need 0 < eps < beta/(N-1)")
    total, tail = _tail_sums(params, nu_cutoff, eps)
    weight = math.exp(-eps * sum((i + 1) * v for i, v in enumerate(m)))
    return weight * (total**s - (total - tail) ** s)


def k_s_tail_table(s: int, params: ModelParams, nu_cutoff: int, grid: int = 24) -> List[Tuple[float, float]]:
    """``(eps, A^s - (A-T)^s)`` on a grid of admissible ``eps``; see :func:`best_tail`."""
    if params.q == 0:
        return []
    top = params.beta / (params.N - 1)
    out = []
    for eps in top * np.linspace(0.02, 0.98, grid):
        total, tail = _tail_sums(params, nu_cutoff, float(eps))
        out.append((float(eps), total**s - (total - tail) ** s))
    return out


def best_tail(table: Sequence[Tuple[float, float]], m: Sequence[int]) -> float:
    """Smallest tail bound over the tabulated ``eps`` for the vector ``m``."""
    if not table:
        return 0.0
    x = sum((i + 1) * v for i, v in enumerate(m))
    return min(math.exp(-eps * x) * c for eps, c in table)


def k_s_enumerate(s: int, m: Sequence[int], params: ModelParams, nu_cutoff: int, eps: Optional[float] = None):
    """``(K_s(m), tail_bound)`` with ``K_s`` by exact enumeration over ``|nu| <= nu_cutoff``.

    Without ``eps`` the tail bound is minimized over a grid of contour shifts.
    """
    m = tuple(int(v) for v in m)
    value = k_s_distribution(s, params, nu_cutoff).get(m, 0.0)
    if params.q == 0:
        return value, 0.0
    if eps is None:
        return value, best_tail(k_s_tail_table(s, params, nu_cutoff), m)
    return value, k_s_tail_bound(s, params, nu_cutoff, eps, m)


def k2_zero_closed_form(params: ModelParams, terms: int = 400) -> float:
    """``K_2(0) = gamma^2 * #pairs * sum_{nu != 0} S_nu S_{-nu}`` written through ``q``."""
    q = params.q
    acc = math.fsum(
        2.0 * nu * nu * q ** (2 * nu) / (1 - q ** (2 * nu)) ** 2 for nu in range(1, terms) if q ** (2 * nu) > 1e-300
    ) if q > 0 else 0.0
    return params.gamma**2 * len(pairs(params.N)) * acc


def k_s_bound(m: Sequence[int], params: ModelParams, s: int, b_param: float) -> float:
    """``q^{2 sum_j j m_j/(N+b)} B^s``."""
    expo = 2.0 * sum((i + 1) * v for i, v in enumerate(m)) / (params.N + b_param)
    return params.q**expo * bound_b(params, b_param) ** s


def k_s_conjecture_report(s_values: Sequence[int], params: ModelParams, nu_cutoff: int = 8) -> List[dict]:
    """``K_s(0)`` against ``Btilde^s q^{2 ceil(s/N)}``; informational only."""
    N, q = params.N, params.q
    x = q ** (2.0 / N)
    bt = N * (N - 1) * abs(params.gamma) / (1 - x) ** 3
    zero = (0,) * N
    rows = []
    for s in s_values:
        k = k_s_distribution(s, params, nu_cutoff).get(zero, 0.0)
        conj = bt**s * q ** (2 * math.ceil(s / N))
        rows.append(
            {
                "s": s,
                "K_s(0)": k,
                "conjectured_bound": conj,
                "ratio": k / conj if conj else math.nan,
                "holds": bool(k <= conj),
                "normalized": k / q ** (2 * math.ceil(s / N)) if q > 0 else math.nan,
            }
        )
    return rows
