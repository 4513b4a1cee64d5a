"""Lattice substrate: free energies, shift operator, resonances, gate constants.

Lattice vectors are plain tuples of ints. Coefficient maps are keyed by the
relative vector ``m - n`` so every key has zero component sum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .elliptic import Nome, capital_theta, s_coeff

LatticeVector = Tuple[int, ...]

RATIONAL_GRID = "rational-grid"
N2_CLOSED_FORM = "n2-closed-form"
EXHAUSTIVE_SEARCH = "exhaustive-search"
MODES = (RATIONAL_GRID, N2_CLOSED_FORM, EXHAUSTIVE_SEARCH)


class ResonanceEncountered(ArithmeticError):
    """A lattice point with (numerically) vanishing energy denominator."""

    def __init__(self, message: str, vector: Optional[LatticeVector] = None):
        super().__init__(message)
        self.vector = vector


class HypothesisError(ValueError):
    """Preconditions for a Hypothesis-constant mode are not met."""


@dataclass(frozen=True)
class ModelParams:
    """``(N, lambda, q)`` with ``gamma = 2 lambda (lambda - 1)``."""

    n_particles: int
    lam: float
    nome: Nome
    lam_label: Optional[str] = None

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 2:
            raise ValueError("n_particles must be an integer >= 2")
        if not isinstance(self.nome, Nome):
            object.__setattr__(self, "nome", Nome(self.nome))
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def make(cls, n_particles: int, lam: float, q: float, lam_label: Optional[str] = None) -> "ModelParams":
        return cls(int(n_particles), float(lam), Nome(q), lam_label)

    @property
    def N(self) -> int:
        return self.n_particles

    @property
    def gamma(self) -> float:
        return 2.0 * self.lam * (self.lam - 1.0)

    @property
    def q(self) -> float:
        return self.nome.q

    @property
    def beta(self) -> float:
        return self.nome.beta

    def with_q(self, q: float) -> "ModelParams":
        return ModelParams(self.n_particles, self.lam, Nome(q), self.lam_label)


@dataclass(frozen=True)
class LatticeShift:
    """The vector ``nu * E_jk`` (0-based ``j < k``)."""

    j: int
    k: int
    nu: int

    def __post_init__(self):
        if not (0 <= self.j < self.k):
            raise ValueError("need 0 <= j < k")
        if self.nu == 0:
            raise ValueError("nu must be nonzero")

    def vector(self, n_particles: int) -> LatticeVector:
        v = [0] * n_particles
        v[self.j] += self.nu
        v[self.k] -= self.nu
        return tuple(v)


@dataclass(frozen=True)
class HypothesisConstants:
    a: float
    delta: float
    mode: str
    radius: Optional[int] = None
    certified: bool = True

    def __post_init__(self):
        if self.mode not in MODES and self.mode != "user":
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def gating_ok(self) -> bool:
        return self.delta > abs(self.a)


@dataclass
class CoefficientMap:
    """Sparse map ``m -> alpha(m)``; keys are relative vectors ``m - n``."""

    base: LatticeVector
    entries: Dict[LatticeVector, float] = field(default_factory=dict)

    def __post_init__(self):
        self.base = tuple(int(v) for v in self.base)
        for key in self.entries:
            if len(key) != len(self.base) or sum(key) != 0:
                raise ValueError(f"invalid relative key {key!r}")

    def absolute(self, rel: LatticeVector) -> LatticeVector:
        return tuple(b + r for b, r in zip(self.base, rel))

    def relative(self, m: Sequence[int]) -> LatticeVector:
        return tuple(int(a) - b for a, b in zip(m, self.base))

    def __getitem__(self, m: Sequence[int]) -> float:
        return self.entries.get(self.relative(m), 0.0)

    def items_absolute(self) -> Iterator[Tuple[LatticeVector, float]]:
        for rel, v in self.entries.items():
            yield self.absolute(rel), v

    def restrict(self, radius: int) -> "CoefficientMap":
        return CoefficientMap(self.base, {k: v for k, v in self.entries.items() if max(map(abs, k)) <= radius})

    def __len__(self) -> int:
        return len(self.entries)


# --------------------------------------------------------------------------- energies


def _offsets(N: int, lam: float) -> np.ndarray:
    return lam * (N + 1 - 2 * np.arange(1, N + 1)) / 2.0


def free_energy(n: Sequence[int], params: ModelParams) -> float:
    """``sum_j (n_j + lambda (N + 1 - 2j)/2)^2``."""
    n = np.asarray(n, dtype=float)
    if n.shape != (params.N,):
        raise ValueError("lattice vector length must equal n_particles")
    return float(np.sum((n + _offsets(params.N, params.lam)) ** 2))


def free_energy_many(points: np.ndarray, params: ModelParams) -> np.ndarray:
    return np.sum((np.asarray(points, float) + _offsets(params.N, params.lam)) ** 2, axis=-1)


def resonance_tolerance(n: Sequence[int], params: ModelParams) -> float:
    return 1e-9 * max(1.0, abs(free_energy(n, params)))


def is_partition(n: Sequence[int]) -> bool:
    return all(a >= b for a, b in zip(n, n[1:])) and (len(n) == 0 or n[-1] >= 0)


# --------------------------------------------------------------------------- shifts


def pairs(N: int) -> List[Tuple[int, int]]:
    return [(j, k) for j in range(N) for k in range(j + 1, N)]


def elementary_shifts(N: int, nu_cutoff: int) -> List[Tuple[int, int, int]]:
    """All ``(j, k, nu)`` with ``j < k`` and ``0 < |nu| <= nu_cutoff``."""
    return [(j, k, nu) for (j, k) in pairs(N) for nu in range(-nu_cutoff, nu_cutoff + 1) if nu != 0]


def apply_shift_operator(alpha: CoefficientMap, params: ModelParams, nu_cutoff: int) -> CoefficientMap:
    """``(S alpha)(m) = sum_{j<k} sum_{0<|nu|<=cutoff} S_nu alpha(m - nu E_jk)``."""
    if nu_cutoff < 1:
        raise ValueError("nu_cutoff must be >= 1")
    out: Dict[LatticeVector, float] = {}
    svals = {nu: s_coeff(nu, params.nome) for nu in range(-nu_cutoff, nu_cutoff + 1)}
    for key, val in alpha.entries.items():
        if val == 0:
            continue
        for j, k, nu in elementary_shifts(params.N, nu_cutoff):
            s = svals[nu]
            if s == 0.0:
                continue
            m = list(key)
            m[j] += nu
            m[k] -= nu
            m = tuple(m)
            out[m] = out.get(m, 0.0) + s * val
    return CoefficientMap(alpha.base, out)


# --------------------------------------------------------------------------- shells


def relative_shell(N: int, radius: int) -> List[LatticeVector]:
    """Relative vectors ``d`` with ``sum d = 0`` and ``max |d_j| <= radius``, lexicographic."""
    out = []
    for head in itertools.product(range(-radius, radius + 1), repeat=N - 1):
        last = -sum(head)
        if abs(last) <= radius:
            out.append(tuple(head) + (last,))
    return out


class Shell:
    """Finite window of the relative lattice around ``n`` with a sparse shift matrix.

    ``shift_matrix @ v`` is the pushforward ``(S v)(m) = sum S_nu v(m - nu E_jk)``
    restricted to the window; ``leak`` holds, per point, the total shift weight
    that would leave the window.
    """

    def __init__(self, n: Sequence[int], params: ModelParams, radius: int, nu_cutoff: int):
        if radius < 1 or nu_cutoff < 1:
            raise ValueError("radius and nu_cutoff must be >= 1")
        self.n = tuple(int(v) for v in n)
        if len(self.n) != params.N:
            raise ValueError("lattice vector length must equal n_particles")
        self.params = params
        self.radius = radius
        self.nu_cutoff = nu_cutoff
        self.rel = relative_shell(params.N, radius)
        self.index = {d: i for i, d in enumerate(self.rel)}
        self.points = np.array(self.rel, dtype=int) + np.array(self.n, dtype=int)
        self.size = len(self.rel)
        self.center = self.index[(0,) * params.N]
        self.energy = free_energy_many(self.points, params)
        self.energy_offset = self.energy - self.energy[self.center]
        rows, cols, vals = [], [], []
        leak = np.zeros(self.size)
        for j, k, nu in elementary_shifts(params.N, nu_cutoff):
            s = s_coeff(nu, params.nome)
            if s == 0.0:
                continue
            for i, d in enumerate(self.rel):
                t = list(d)
                t[j] += nu
                t[k] -= nu
                tgt = self.index.get(tuple(t))
                if tgt is None:
                    leak[i] += s
                else:
                    rows.append(tgt)
                    cols.append(i)
                    vals.append(s)
        self.shift_matrix = sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))
        self.leak = leak

    def reachable(self, starts: Optional[Sequence[int]] = None) -> np.ndarray:
        """Mask of shell points reachable from ``starts`` through shifts with nonzero weight."""
        starts = [self.center] if starts is None else list(starts)
        key = tuple(sorted(starts))
        cache = self.__dict__.setdefault("_reach", {})
        if key not in cache:
            graph = self.shift_matrix.tocsc()
            seen = np.zeros(self.size, bool)
            seen[starts] = True
            frontier = list(starts)
            while frontier:
                nxt = []
                for i in frontier:
                    for t in graph.indices[graph.indptr[i] : graph.indptr[i + 1]]:
                        if not seen[t]:
                            seen[t] = True
                            nxt.append(t)
                frontier = nxt
            cache[key] = seen
        return cache[key]

    def delta(self) -> np.ndarray:
        v = np.zeros(self.size)
        v[self.center] = 1.0
        return v

    def to_map(self, values: np.ndarray, drop_zeros: bool = True) -> CoefficientMap:
        entries = {d: float(v) for d, v in zip(self.rel, np.real(values)) if not (drop_zeros and v == 0)}
        return CoefficientMap(self.n, entries)

    def indices_of(self, vectors: Iterable[Sequence[int]]) -> List[int]:
        return [self.index[tuple(int(a) - b for a, b in zip(v, self.n))] for v in vectors]


# --------------------------------------------------------------------------- resonances


def find_resonances(
    n: Sequence[int], params: ModelParams, radius: int, tol: Optional[float] = None
) -> List[LatticeVector]:
    """Lattice points ``m != n`` in the window with ``E0(m) == E0(n)`` to ``tol``."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    n = tuple(int(v) for v in n)
    tol = resonance_tolerance(n, params) if tol is None else tol
    rel = np.array(relative_shell(params.N, radius))
    pts = rel + np.array(n)
    d = free_energy_many(pts, params) - free_energy(n, params)
    hit = (np.abs(d) < tol) & np.any(rel != 0, axis=1)
    return [tuple(int(v) for v in p) for p in pts[hit]]


def cycle_residual(chain: Sequence[int], N: int) -> LatticeVector:
    """``E_{j1 j2} + ... + E_{j_{l-1} j_l} - E_{j1 j_l}`` for an increasing chain (0-based)."""
    out = [0] * N
    for a, b in zip(chain, chain[1:]):
        out[a] += 1
        out[b] -= 1
    out[chain[0]] -= 1
    out[chain[-1]] += 1
    return tuple(out)


# --------------------------------------------------------------------------- hypothesis constants


def _as_fraction(lam: float, max_den: int = 10_000) -> Fraction:
    return Fraction(lam).limit_denominator(max_den)


def hypothesis_constants(
    n: Sequence[int],
    params: ModelParams,
    mode: str,
    radius: int = 8,
    *,
    k1: int = 0,
    k2: int = 0,
    a0: Optional[float] = None,
    lam_fraction: Optional[Fraction] = None,
) -> HypothesisConstants:
    """Constants ``(a, Delta)`` with ``|E0(m) - E0(n) - a| >= Delta`` for all ``m != n``.

    ``rational-grid`` takes ``k1, k2, a0`` from the caller (``lambda = p/m``,
    ``|a0| <= 1/(2m)``). ``n2-closed-form`` is certified for ``N = 2``.
    ``exhaustive-search`` returns a shell minimum (``certified=False``).
    """
    n = tuple(int(v) for v in n)
    N = params.N
    if mode == RATIONAL_GRID:
        frac = lam_fraction if lam_fraction is not None else _as_fraction(params.lam)
        if abs(float(frac) - params.lam) > 1e-12:
            raise HypothesisError("rational-grid needs a rational lambda = p/m")
        den = frac.denominator
        if a0 is None:
            a0 = 1.0 / (2 * den)
        if not (0 < abs(a0) <= 1.0 / (2 * den) + 1e-15):
            raise HypothesisError(f"need 0 < |a0| <= 1/(2m) = {1.0 / (2 * den)}")
        return HypothesisConstants(k1 + params.lam * k2 + a0, abs(a0), mode)
    if mode == N2_CLOSED_FORM:
        if N != 2:
            raise HypothesisError("n2-closed-form needs N = 2")
        c = n[0] - n[1] + params.lam
        top = math.ceil(abs(c)) + 2
        vals = [abs(2 * nu * (nu + c)) for nu in range(-top, top + 1) if nu != 0]
        delta = min(vals)
        if delta < resonance_tolerance(n, params):
            nu = n[1] - n[0] - round(params.lam)
            raise ResonanceEncountered(
                f"resonance at nu = {nu}: m = {(n[0] + nu, n[1] - nu)}", (n[0] + nu, n[1] - nu)
            )
        return HypothesisConstants(0.0, delta, mode, radius=top)
    if mode == EXHAUSTIVE_SEARCH:
        res = find_resonances(n, params, radius)
        if res:
            raise ResonanceEncountered(f"resonance at m = {res[0]}", res[0])
        rel = np.array(relative_shell(N, radius))
        rel = rel[np.any(rel != 0, axis=1)]
        d = free_energy_many(rel + np.array(n), params) - free_energy(n, params)
        return HypothesisConstants(0.0, float(np.min(np.abs(d))), mode, radius=radius, certified=False)
    raise HypothesisError(f"unknown mode {mode!r}")


def check_hypothesis(n: Sequence[int], params: ModelParams, consts: HypothesisConstants, radius: int) -> float:
    """Smallest ``|E0(m) - E0(n) - a|`` over the window (for re-checking a claim)."""
    rel = np.array(relative_shell(params.N, radius))
    rel = rel[np.any(rel != 0, axis=1)]
    d = free_energy_many(rel + np.array(n), params) - free_energy(n, params)
    return float(np.min(np.abs(d - consts.a)))


# --------------------------------------------------------------------------- gate constants


def bound_b(params: ModelParams, b_param: float = 0.0) -> float:
    """``N(N-1)|gamma| q^{2/(N+b)} / (1 - q^{2/(N+b)})^3``."""
    if b_param < 0:
        raise ValueError("b_param must be >= 0")
    q = params.q
    if q == 0.0:
        return 0.0
    N = params.N
    x = q ** (2.0 / (N + b_param))
    return N * (N - 1) * abs(params.gamma) * x / (1.0 - x) ** 3


def bound_kc(params: ModelParams, b_param: float) -> Tuple[float, float, float]:
    """Constants ``(K, K_tilde, C)`` of the ``f_n`` bound."""
    if b_param <= 0:
        raise ValueError("b_param must be > 0")
    q = params.q
    if q <= 0:
        raise ValueError("bound_kc needs q > 0")
    N, lam, b = params.N, params.lam, b_param
    K = 2.0 / (N + b)
    Kt = b * K / (1.0 + 2.0 * b)
    x0 = q ** (2.0 - 2.0 * b * Kt)
    x1 = q ** (K - Kt)
    num = (2.0 * capital_theta(-q * q, params.nome).real) ** (N * (N - 1) * lam / 2.0)
    den = ((1.0 - x1) * capital_theta(x0, params.nome).real / (1.0 - x0)) ** (N * N * lam)
    return K, Kt, num / den


def gate(params: ModelParams, consts: HypothesisConstants, b_param: float = 0.0) -> Tuple[float, bool]:
    """``(B, B < (Delta - |a|)/3)``."""
    B = bound_b(params, b_param)
    return B, B < (consts.delta - abs(consts.a)) / 3.0


def enclosure_radius(B: float, consts: HypothesisConstants) -> float:
    """Right-hand side of the eigenvalue enclosure ``|E - E0 - a| <= ...``."""
    d, a = consts.delta, abs(consts.a)
    disc = (d - B - a) ** 2 - 4 * B * B
    if disc < 0:
        return math.inf
    return 0.5 * (d - B + a - math.sqrt(disc))


def alpha_bound(m_rel: Sequence[int], params: ModelParams, consts: HypothesisConstants, b_param: float = 0.0) -> float:
    """Right-hand side of the coefficient bound for relative vector ``m - n``.

    ``q^{expo} B`` is evaluated as ``N(N-1)|gamma| q^{expo + K} / (1 - q^K)^3``
    so that the ``q -> 0`` limit is finite (or infinite) as appropriate.
    """
    B = bound_b(params, b_param)
    N, q = params.N, params.q
    K = 2.0 / (N + b_param)
    d, a = consts.delta, abs(consts.a)
    disc = (d - B - a) ** 2 - 4 * B * B
    if disc < 0:
        return math.inf
    expo = K * sum((j + 1) * v for j, v in enumerate(m_rel))
    delta = 1.0 if all(v == 0 for v in m_rel) else 0.0
    p = expo + K
    if q == 0.0:
        qp = math.inf if p < 0 else (1.0 if p == 0 else 0.0)
    else:
        qp = q**p
    pref = N * (N - 1) * abs(params.gamma) * qp / (1.0 - q**K) ** 3
    if pref == 0.0:
        return delta
    return delta + pref * 2.0 / (d - B - a + math.sqrt(disc))


def _region_gap(z, B: float, consts: HypothesisConstants) -> float:
    gap = consts.delta - B - abs(complex(z) - consts.a)
    if gap <= 0:
        raise HypothesisError(f"z = {z} lies outside the disk |z - a| < Delta - B")
    return gap


def phi_bound(z, params: ModelParams, consts: HypothesisConstants, b_param: float = 0.0) -> float:
    """``B^2 / (Delta - B - |z - a|)``, valid for ``|z - a| < Delta - B``."""
    B = bound_b(params, b_param)
    return B * B / _region_gap(z, B, consts)


def g_bound(m_rel: Sequence[int], z, params: ModelParams, consts: HypothesisConstants, b_param: float = 0.0) -> float:
    """``delta(m, n) + q^{K sum_j j (m - n)_j} B / (Delta - B - |z - a|)`` with ``K = 2/(N + b)``."""
    B = bound_b(params, b_param)
    gap = _region_gap(z, B, consts)
    delta = 1.0 if all(v == 0 for v in m_rel) else 0.0
    if B == 0.0:
        return delta
    K = 2.0 / (params.N + b_param)
    expo = K * sum((j + 1) * v for j, v in enumerate(m_rel))
    return delta + params.q**expo * B / gap


def phi_bound_conjectural(z, params: ModelParams, consts: HypothesisConstants) -> float:
    """Improved (unproven) estimate of ``|Phi|`` that vanishes like ``q^2``; reported, never asserted.

    With ``d = Delta - |z - a|`` and ``Bt = N(N-1)|gamma|/(1 - q^{2/N})^3``:
    ``Bt q^2 (d / (d^N - Bt^N q^2) sum_{k=1}^{N-1} Bt^{N-k} d^k - 1)``.
    """
    N, q = params.N, params.q
    bt = N * (N - 1) * abs(params.gamma) / (1.0 - q ** (2.0 / N)) ** 3
    d = consts.delta - abs(complex(z) - consts.a)
    den = d**N - bt**N * q * q
    if d <= 0 or den <= 0:
        return math.inf
    acc = sum(bt ** (N - k) * d**k for k in range(1, N))
    return bt * q * q * (d / den * acc - 1.0)
