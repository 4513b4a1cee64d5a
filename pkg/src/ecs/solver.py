"""Eigenvalue and coefficient solvers for the lattice eigenproblem.

Notation: ``x_p = E0(p) - E0(n)`` on a finite shell around ``n``, ``A = gamma*S``
the pushforward shift matrix, and ``D(z) = diag(1/(x_p - z))`` with the entry at
``n`` (or at every resonant partner, in the degenerate case) set to zero.

* ``Phi(z) = -sum_{s>=0} [A (D A)^s delta_n](n)`` gives the self-consistency
  equation ``E = E0(n) + Etilde`` with ``Etilde = Phi(Etilde)``.
* ``G(z; m) = sum_{s>=0} [(D A)^s delta_n](m)`` gives the coefficients.

Both are summed as a transfer-matrix walk over the shell. Because every
denominator depends only on the current lattice point, paths with equal
endpoints can be merged; Taylor coefficients in ``z`` are carried as a stack,
so ``Phi^{(r)}`` and ``G^{(r)}`` come out of the same walk.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import lagrange
from .elliptic import s_coeff
from .lattice import (
    EXHAUSTIVE_SEARCH,
    N2_CLOSED_FORM,
    CoefficientMap,
    HypothesisConstants,
    LatticeVector,
    ModelParams,
    ResonanceEncountered,
    Shell,
    alpha_bound,
    bound_b,
    elementary_shifts,
    enclosure_radius,
    find_resonances,
    free_energy,
    hypothesis_constants,
    is_partition,
    resonance_tolerance,
)


class NoConvergence(RuntimeError):
    """An iteration did not reach its tolerance."""


class TruncationTooSmall(RuntimeError):
    """The shell is too small for the requested truncation."""


class BoundViolation(AssertionError):
    """A rigorous enclosure failed although its hypotheses were met."""


class BranchAmbiguity(RuntimeError):
    """Two eigenvectors overlap equally with the tracked branch."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Truncation of the series and the lattice.

    ``s_max`` caps the power of gamma in the perturbative recursion. The
    walk for ``Phi`` and ``G`` uses ``phi_depth`` when given; otherwise it runs
    until the next term drops below ``series_tol`` (relative), at most
    ``max_depth`` steps.
    """

    s_max: int = 8
    nu_cutoff: int = 8
    shell_radius: int = 12
    phi_depth: Optional[int] = None
    series_tol: float = 1e-17
    max_depth: int = 2000

    def __post_init__(self):
        for name in ("s_max", "nu_cutoff", "shell_radius", "max_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.phi_depth is not None and self.phi_depth < 1:
            raise ValueError("phi_depth must be >= 1")


@dataclass
class PhiEvaluation:
    """``Phi`` at ``z`` and its Taylor coefficients ``(1/r!) Phi^{(r)}(z)``."""

    z: complex
    value: float
    derivative_values: np.ndarray
    truncation_tail_estimate: float
    depth: int


@dataclass
class GateRecord:
    B: float
    gate_passed: bool
    enclosure: Optional[float] = None
    enclosure_ok: Optional[bool] = None


@dataclass
class SpectralResult:
    base: LatticeVector
    eigenvalue: float
    method: str
    coefficients: CoefficientMap
    constants: Optional[HypothesisConstants] = None
    gate: Optional[GateRecord] = None
    eta_terms: List[float] = field(default_factory=list)
    orders: Dict[str, list] = field(default_factory=dict)
    diagnostics: Dict[str, object] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def shift(self) -> float:
        return self.eigenvalue - self.diagnostics.get("E0", 0.0)


# --------------------------------------------------------------------------- shell setup


@lru_cache(maxsize=64)
def _shell(n: LatticeVector, params: ModelParams, radius: int, nu_cutoff: int) -> Shell:
    return Shell(n, params, radius, nu_cutoff)


def get_shell(n: Sequence[int], params: ModelParams, policy: TruncationPolicy) -> Shell:
    return _shell(tuple(int(v) for v in n), params, policy.shell_radius, policy.nu_cutoff)


def _check_no_resonance(shell: Shell, allowed: Sequence[int] = ()) -> None:
    """Raise if a point reachable from the start set has ``E0(p) == E0(n)``.

    Points that no shift with nonzero weight can reach (for instance downward
    partners at ``q = 0``) never receive amplitude and are ignored.
    """
    starts = [shell.center] + list(allowed)
    tol = resonance_tolerance(shell.n, shell.params)
    bad = (np.abs(shell.energy_offset) < tol) & shell.reachable(starts)
    bad[starts] = False
    if np.any(bad):
        p = tuple(int(v) for v in shell.points[np.argmax(bad)])
        raise ResonanceEncountered(f"resonance: E0{p} == E0{shell.n}; use the degenerate solver", p)


def default_constants(n: Sequence[int], params: ModelParams, radius: int = 12) -> Optional[HypothesisConstants]:
    """n2-closed-form for two particles with non-integer lambda, else a shell search.

    Returns ``None`` when the search meets a resonance that the shift graph
    cannot reach (possible at ``q = 0``); the gate is then not evaluated.
    """
    try:
        if params.N == 2 and abs(params.lam - round(params.lam)) > 1e-12:
            return hypothesis_constants(n, params, N2_CLOSED_FORM)
        return hypothesis_constants(n, params, EXHAUSTIVE_SEARCH, radius)
    except ResonanceEncountered:
        if params.q == 0.0:
            return None
        raise


def _gate(params: ModelParams, consts: Optional[HypothesisConstants]) -> Optional[GateRecord]:
    if consts is None:
        return None
    B = bound_b(params)
    ok = B < (consts.delta - abs(consts.a)) / 3.0
    return GateRecord(B, ok, enclosure_radius(B, consts) if ok else None)


def _flags(n: Sequence[int]) -> List[str]:
    return [] if is_partition(n) else ["non-partition"]


# --------------------------------------------------------------------------- the walk


def _walk(
    shell: Shell,
    z: complex,
    R: int,
    policy: TruncationPolicy,
    starts: np.ndarray,
    zero_at: Sequence[int],
    readout: Sequence[int],
    want_g: bool = True,
):
    """Sum ``-[A (D A)^s start](readout)`` and ``[(D A)^s start]`` over ``s``.

    ``starts`` has shape ``(K, size)``; Taylor stacks have a leading axis of
    length ``R + 1``. Returns ``(phi, g, depth, tail)`` with ``phi`` of shape
    ``(R+1, K, len(readout))`` and ``g`` of shape ``(R+1, K, size)``.
    """
    complex_mode = isinstance(z, complex) and z.imag != 0
    dtype = complex if complex_mode else float
    z = z if complex_mode else float(np.real(z))
    den = shell.energy_offset.astype(dtype) - z
    live = shell.reachable(list(zero_at))
    tol_hit = (np.abs(den) < resonance_tolerance(shell.n, shell.params)) & live
    for i in zero_at:
        tol_hit[i] = False
    if np.any(tol_hit):
        p = tuple(int(v) for v in shell.points[np.argmax(tol_hit)])
        raise ResonanceEncountered(f"denominator E0{p} - E0{shell.n} - z vanishes at z={z}", p)
    d = np.zeros(shell.size, dtype=dtype)
    mask = live.copy()
    mask[list(zero_at)] = False
    d[mask] = 1.0 / den[mask]
    dpow = np.array([d ** (k + 1) for k in range(R + 1)])  # (R+1, size)
    A = (shell.params.gamma * shell.shift_matrix).tocsr()
    K = starts.shape[0]
    w = np.zeros((R + 1, K, shell.size), dtype=dtype)
    w[0] = starts
    g = w.copy() if want_g else None
    phi = np.zeros((R + 1, K, len(readout)), dtype=dtype)
    depth_cap = policy.phi_depth if policy.phi_depth is not None else policy.max_depth
    tail = math.inf
    s = 0
    quiet = 0
    while s < depth_cap:
        flat = w.reshape(-1, shell.size)
        u = (A @ flat.T).T.reshape(w.shape)
        phi_term = -u[:, :, list(readout)]
        phi += phi_term
        nxt = np.zeros_like(w)
        for r in range(R + 1):
            for k in range(r + 1):
                nxt[r] += dpow[k] * u[r - k]
        if want_g:
            g += nxt
        w = nxt
        s += 1
        size_phi = float(np.max(np.abs(phi_term))) if phi_term.size else 0.0
        size_w = float(np.max(np.abs(w)))
        scale_phi = max(1.0, float(np.max(np.abs(phi))))
        scale_g = max(1.0, float(np.max(np.abs(g)))) if want_g else 1.0
        tail = max(size_phi / scale_phi, size_w / scale_g if want_g else 0.0)
        if policy.phi_depth is None:
            if size_w == 0.0 or not math.isfinite(size_w):
                break
            if tail < policy.series_tol:
                quiet += 1
                if quiet >= 3:
                    break
            else:
                quiet = 0
    if not math.isfinite(tail):
        raise NoConvergence("Phi/G walk diverged")
    return phi, g, s, tail


def phi_series(
    z, n: Sequence[int], params: ModelParams, policy: TruncationPolicy = TruncationPolicy(), R: int = 0
) -> PhiEvaluation:
    """``Phi_n`` at ``z`` with Taylor coefficients through order ``R``."""
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    phi, _, depth, tail = _walk(
        shell, z, R, policy, shell.delta()[None, :], [shell.center], [shell.center], want_g=False
    )
    vals = phi[:, 0, 0]
    if not np.iscomplexobj(vals):
        vals = vals.astype(float)
    return PhiEvaluation(z, vals[0], vals, tail, depth)


def g_series(
    z, m: Sequence[int], n: Sequence[int], params: ModelParams, policy: TruncationPolicy = TruncationPolicy(), R: int = 0
):
    """``G_n(z; m)`` (``R = 0``) or its Taylor coefficients through order ``R``."""
    stack = g_series_all(z, n, params, policy, R)
    shell = get_shell(n, params, policy)
    rel = tuple(int(a) - b for a, b in zip(m, shell.n))
    if rel not in shell.index:
        raise TruncationTooSmall(f"m = {tuple(m)} is outside the shell")
    col = stack[:, shell.index[rel]]
    return col[0] if R == 0 else col


def g_series_all(z, n: Sequence[int], params: ModelParams, policy: TruncationPolicy = TruncationPolicy(), R: int = 0):
    """Taylor stack of ``G_n(z; .)`` on the whole shell, shape ``(R+1, size)``."""
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    _, g, _, _ = _walk(shell, z, R, policy, shell.delta()[None, :], [shell.center], [shell.center])
    return g[:, 0, :]


def phi_series_reference(
    z: float, n: Sequence[int], params: ModelParams, depth: int, nu_cutoff: int, radius: int, R: int = 0
) -> np.ndarray:
    """Path-by-path evaluation of ``(1/r!) Phi^{(r)}(z)`` through ``gamma^depth``.

    Enumerates every shift sequence returning to ``n`` inside the window and
    expands the denominator product with Leibniz compositions. Exponential
    cost; meant for cross-checking the walk on small cases.
    """
    n = tuple(int(v) for v in n)
    E0n = free_energy(n, params)
    shifts = [(j, k, nu, s_coeff(nu, params.nome)) for j, k, nu in elementary_shifts(params.N, nu_cutoff)]
    shifts = [s for s in shifts if s[3] != 0.0]
    gamma = params.gamma
    cache: Dict[LatticeVector, float] = {}
    out = np.zeros(R + 1)

    def xval(p):
        if p not in cache:
            cache[p] = free_energy(p, params) - E0n
        return cache[p]

    def dfs(p, weight, dens, steps):
        for j, k, nu, s in shifts:
            q_ = list(p)
            q_[j] += nu
            q_[k] -= nu
            q_ = tuple(q_)
            if max(abs(a - b) for a, b in zip(q_, n)) > radius:
                continue
            w = weight * gamma * s
            if q_ == n:
                if steps + 1 >= 2:
                    inner = dens
                    for r in range(R + 1):
                        acc = 0.0
                        for comp in lagrange.leibniz_derivative_weights(len(inner), r):
                            acc += math.prod(1.0 / (x - z) ** (1 + c) for x, c in zip(inner, comp))
                        out[r] += -w * acc
                continue
            if steps + 1 < depth:
                dfs(q_, w, dens + [xval(q_)], steps + 1)

    dfs(n, 1.0, [], 0)
    return out


# --------------------------------------------------------------------------- perturbative


def perturbative_solve(n: Sequence[int], params: ModelParams, policy: TruncationPolicy = TruncationPolicy()) -> SpectralResult:
    """Order-by-order recursion in gamma, resummed at the physical gamma.

    Resonances are searched among shell points reachable from ``n`` before
    any division happens.
    """
    n = tuple(int(v) for v in n)
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    S = shell.shift_matrix
    x = shell.energy_offset
    inv = np.zeros(shell.size)
    mask = shell.reachable().copy()
    mask[shell.center] = False
    inv[mask] = 1.0 / x[mask]
    alphas = [shell.delta()]
    Es = [free_energy(n, params)]
    leak = [0.0]
    for s in range(1, policy.s_max + 1):
        Sa = S @ alphas[s - 1]
        Es.append(-float(Sa[shell.center]))
        acc = Sa.copy()
        for sp in range(1, s):
            acc += Es[sp] * alphas[s - sp]
        a_s = inv * acc
        a_s[shell.center] = 0.0
        alphas.append(a_s)
        leak.append(float(np.dot(shell.leak, np.abs(alphas[s - 1]))))
    g = params.gamma
    E = math.fsum(g**s * Es[s] for s in range(len(Es)))
    alpha = sum(g**s * alphas[s] for s in range(len(alphas)))
    result = SpectralResult(
        base=n,
        eigenvalue=E,
        method="perturbative",
        coefficients=shell.to_map(alpha),
        orders={"E": Es, "alpha": [shell.to_map(a) for a in alphas]},
        diagnostics={"E0": Es[0], "leak": leak, "shell_size": shell.size, "last_term": abs(g ** policy.s_max * Es[-1])},
        flags=_flags(n),
    )
    return result


# --------------------------------------------------------------------------- implicit


def implicit_solve(
    n: Sequence[int],
    params: ModelParams,
    policy: TruncationPolicy = TruncationPolicy(),
    constants: Optional[HypothesisConstants] = None,
    max_iter: int = 200,
    tol: float = 1e-14,
    damping: float = 0.5,
) -> SpectralResult:
    """Fixed point ``Etilde = Phi_n(Etilde)`` started at ``a``; coefficients ``G_n(Etilde; .)``."""
    n = tuple(int(v) for v in n)
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    consts = constants if constants is not None else default_constants(n, params, policy.shell_radius)
    gate = _gate(params, consts)
    if gate is not None and not (gate.B < consts.delta - abs(consts.a)):
        warnings.warn("B >= Delta - |a|: fixed-point convergence is not guaranteed", RuntimeWarning)
    E0 = free_energy(n, params)
    et = float(consts.a) if consts is not None else 0.0
    omega = 1.0
    prev_step = None
    history = [et]
    converged = False
    for it in range(1, max_iter + 1):
        val = phi_series(et, n, params, policy).value
        new = (1 - omega) * et + omega * val
        step = new - et
        if prev_step is not None and omega == 1.0 and step * prev_step < 0 and abs(step) > 0.9 * abs(prev_step):
            omega = damping
        et = new
        history.append(et)
        prev_step = step
        if abs(step) < tol * max(1.0, abs(E0 + et)):
            converged = True
            break
    if not converged:
        raise NoConvergence(f"fixed point not reached in {max_iter} iterations (last step {prev_step:.3e})")
    g = g_series_all(et, n, params, policy)[0]
    if gate is not None and gate.gate_passed:
        gate.enclosure_ok = abs(et - consts.a) <= gate.enclosure * (1 + 1e-12) + 1e-15
    return SpectralResult(
        base=n,
        eigenvalue=E0 + et,
        method="implicit",
        coefficients=shell.to_map(np.real(g)),
        constants=consts,
        gate=gate,
        diagnostics={"E0": E0, "iterations": it, "damping": omega, "history": history, "shell_size": shell.size},
        flags=_flags(n),
    )


# --------------------------------------------------------------------------- explicit


def lagrange_inputs(a: float, n, params, policy, order: int):
    """``phi_r`` about ``a`` (``phi_0 = Phi(a) - a``) and the Taylor stack of ``G``."""
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    phi, g, depth, tail = _walk(shell, float(a), order, policy, shell.delta()[None, :], [shell.center], [shell.center])
    coeffs = np.real(phi[:, 0, 0]).astype(float)
    coeffs[0] -= a
    return coeffs, np.real(g[:, 0, :]), depth, tail


def explicit_solve(
    n: Sequence[int],
    params: ModelParams,
    policy: TruncationPolicy = TruncationPolicy(),
    constants: Optional[HypothesisConstants] = None,
    eta_order: int = 8,
    a: Optional[float] = None,
) -> SpectralResult:
    """Lagrange series about ``a``: ``E = E0 + a + sum_m xi_m`` and the matching ``alpha``."""
    n = tuple(int(v) for v in n)
    shell = get_shell(n, params, policy)
    _check_no_resonance(shell)
    consts = constants if constants is not None else default_constants(n, params, policy.shell_radius)
    if a is None:
        a = consts.a if consts is not None else 0.0
    a = float(a)
    E0 = free_energy(n, params)
    M = int(eta_order)
    coeffs, gstack, depth, tail = lagrange_inputs(a, n, params, policy, M)
    phi = lagrange.FormalSeries(a, list(coeffs))
    xi = lagrange.revert(phi, M)
    eta_terms = [float(v) for v in xi.coefficients[1:]]
    table = lagrange.substitution_table([0.0] + eta_terms, M)
    alpha_terms = [sum(table[r][i] * gstack[r] for r in range(M + 1)) for i in range(M + 1)]
    alpha = np.sum(alpha_terms, axis=0)
    E = E0 + a + math.fsum(eta_terms)
    gate = _gate(params, consts)
    diagnostics = {"E0": E0, "walk_depth": depth, "walk_tail": tail, "phi_coefficients": coeffs.tolist(), "shell_size": shell.size, "a": a}
    result = SpectralResult(
        base=n,
        eigenvalue=E,
        method="explicit",
        coefficients=shell.to_map(alpha),
        constants=consts,
        gate=gate,
        eta_terms=eta_terms,
        diagnostics=diagnostics,
        flags=_flags(n),
    )
    if gate is not None and gate.gate_passed:
        gate.enclosure_ok = abs(E - E0 - consts.a) <= gate.enclosure * (1 + 1e-12) + 1e-15
        if not gate.enclosure_ok:
            raise BoundViolation(f"|E - E0 - a| = {abs(E - E0 - consts.a)} exceeds enclosure {gate.enclosure}")
        worst = 0.0
        for rel, val in result.coefficients.entries.items():
            worst = max(worst, abs(val) / alpha_bound(rel, params, consts))
        diagnostics["alpha_bound_ratio"] = worst
    return result


def alpha_terms(result: SpectralResult, params: ModelParams, policy: TruncationPolicy) -> List[CoefficientMap]:
    """Per-order pieces of the explicit coefficient series (for diagnostics)."""
    a = result.diagnostics["a"]
    M = len(result.eta_terms)
    _, gstack, _, _ = lagrange_inputs(a, result.base, params, policy, M)
    table = lagrange.substitution_table([0.0] + list(result.eta_terms), M)
    shell = get_shell(result.base, params, policy)
    return [shell.to_map(sum(table[r][i] * gstack[r] for r in range(M + 1))) for i in range(M + 1)]


# --------------------------------------------------------------------------- degenerate


def degenerate_phi(z: float, n, partners: Sequence[LatticeVector], params, policy) -> Tuple[np.ndarray, np.ndarray, Shell]:
    """Matrix ``Phi_{JK}(z)`` over ``[n] + partners`` and the matching ``G`` columns."""
    shell = get_shell(n, params, policy)
    idx = [shell.center] + shell.indices_of(partners)
    _check_no_resonance(shell, allowed=idx)
    starts = np.zeros((len(idx), shell.size))
    for K, i in enumerate(idx):
        starts[K, i] = 1.0
    phi, g, _, _ = _walk(shell, float(z), 0, policy, starts, idx, idx)
    # phi[0, K, J] is the entry read at n_J from start n_K
    return np.real(phi[0]).T, np.real(g[0]), shell


def degenerate_solve(
    n: Sequence[int],
    params: ModelParams,
    policy: TruncationPolicy = TruncationPolicy(),
    radius: Optional[int] = None,
    max_iter: int = 500,
    tol: float = 1e-13,
) -> List[SpectralResult]:
    """One result per branch of ``Etilde c = Phi(Etilde) c`` on the resonant set."""
    n = tuple(int(v) for v in n)
    radius = radius or policy.shell_radius
    partners = find_resonances(n, params, radius)
    if not partners:
        raise ValueError("no resonant partners; use a non-degenerate solver")
    shell = get_shell(n, params, policy)
    outside = [p for p in partners if tuple(a - b for a, b in zip(p, n)) not in shell.index]
    if outside:
        raise TruncationTooSmall(f"resonant partner {outside[0]} lies outside the shell")
    E0 = free_energy(n, params)
    mat0, _, _ = degenerate_phi(0.0, n, partners, params, policy)
    vals0, vecs0 = np.linalg.eig(mat0)
    order = np.argsort(vals0.real)
    results = []
    for b in order:
        et = float(vals0[b].real)
        c = np.real(vecs0[:, b])
        converged = False
        steps = 0
        for steps in range(1, max_iter + 1):
            mat, _, _ = degenerate_phi(et, n, partners, params, policy)
            vals, vecs = np.linalg.eig(mat)
            vecs = vecs / np.linalg.norm(vecs, axis=0)
            overlap = np.abs(np.conj(vecs.T) @ (c / np.linalg.norm(c)))
            rank = np.argsort(-overlap)
            if len(rank) > 1 and overlap[rank[0]] - overlap[rank[1]] < 1e-6:
                raise BranchAmbiguity(f"overlaps {overlap[rank[0]]:.6f} and {overlap[rank[1]]:.6f} tie")
            pick = rank[0]
            new = float(vals[pick].real)
            c = np.real(vecs[:, pick])
            done = abs(new - et) < tol * max(1.0, abs(E0))
            et = new
            if done:
                converged = True
                break
        if not converged:
            raise NoConvergence("degenerate branch iteration did not converge")
        mat, gcols, _ = degenerate_phi(et, n, partners, params, policy)
        j = int(np.argmax(np.abs(c)))
        c = c / c[j]
        alpha = gcols.T @ c
        results.append(
            SpectralResult(
                base=n,
                eigenvalue=E0 + et,
                method="degenerate",
                coefficients=shell.to_map(alpha),
                diagnostics={"E0": E0, "partners": [tuple(p) for p in partners], "mixing": c.tolist(), "iterations": steps},
                flags=_flags(n),
            )
        )
    return results
