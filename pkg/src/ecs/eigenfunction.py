"""Position-space objects: contour integrals f_n, Psi_0, F_hat_n, the kernel F and Psi_n.

``f_n`` is computed for all ``n`` at once: the integrand is sampled on an
``L^N`` tensor grid of the circles ``|xi_j| = e^{eps_j}`` and an FFT returns
every Laurent coefficient. Powers ``Theta^lambda`` use the sum of principal
logarithms of the individual product factors, which is analytic and
single-valued on ``q^2 < |w| < 1``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .elliptic import POLE_GUARD, default_terms, potential_v, s_coeff, theta
from .lattice import CoefficientMap, ModelParams, elementary_shifts, free_energy


class ContourError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Trapezoidal grid on the circles ``|xi_j| = e^{eps_j}`` and finite-difference settings.

    ``epsilons=None`` selects ``eps_j = j * min(beta/(N+1), eps_cap)``.
    """

    nodes_per_contour: int = 64
    epsilons: Optional[Tuple[float, ...]] = None
    fd_step: float = 4e-3
    fd_levels: int = 5
    eps_cap: float = 1.0

    def __post_init__(self):
        L = self.nodes_per_contour
        if L < 64 or L & (L - 1):
            raise ValueError("nodes_per_contour must be a power of two >= 64")
        if self.fd_levels < 1 or self.fd_step <= 0:
            raise ValueError("fd_levels >= 1 and fd_step > 0 required")
        if self.epsilons is not None:
            object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))

    def resolve(self, params: ModelParams) -> np.ndarray:
        N, beta = params.N, params.beta
        if self.epsilons is None:
            step = min(beta / (N + 1), self.eps_cap)
            eps = step * np.arange(1, N + 1)
        else:
            eps = np.asarray(self.epsilons, float)
        check_contours(eps, params)
        return eps

    def with_epsilons(self, eps: Sequence[float]) -> "QuadratureConfig":
        return QuadratureConfig(self.nodes_per_contour, tuple(eps), self.fd_step, self.fd_levels, self.eps_cap)

    def doubled(self) -> "QuadratureConfig":
        return QuadratureConfig(2 * self.nodes_per_contour, self.epsilons, self.fd_step, self.fd_levels, self.eps_cap)


def check_contours(eps: Sequence[float], params: ModelParams) -> None:
    eps = list(eps)
    if len(eps) != params.N:
        raise ContourError("need one epsilon per particle")
    if not (0 < eps[0] and all(a < b for a, b in zip(eps, eps[1:])) and eps[-1] < params.beta):
        raise ContourError(f"need 0 < eps_1 < ... < eps_N < beta = {params.beta}; got {eps}")


# --------------------------------------------------------------------------- Theta^lambda on the annulus


def _log_theta_cap(w: np.ndarray, q: float, terms: int) -> np.ndarray:
    """``sum`` of principal logs of the factors of ``Theta(w)``; valid for ``q^2 < |w| < 1``."""
    acc = np.log1p(-w)
    q2 = q * q
    qm = 1.0
    for _ in range(terms):
        qm *= q2
        if qm == 0.0:
            break
        acc = acc + np.log1p(-qm * w) + np.log1p(-qm / w)
    return acc


def _terms(params: ModelParams) -> int:
    return default_terms(params.q, 1e-18)


def integrand_grid(z: Sequence[complex], params: ModelParams, eps: np.ndarray, L: int) -> np.ndarray:
    """Integrand of ``f_n`` without the ``xi^n`` factor on the ``L^N`` grid, phases ``2 pi k / L``."""
    N = params.N
    lam = params.lam
    q = params.q
    terms = _terms(params)
    phis = 2 * np.pi * np.arange(L) / L
    circ = [np.exp(eps[j] + 1j * phis) for j in range(N)]
    logacc = np.zeros((L,) * N, dtype=complex)

    def axis_view(arr, j):
        shape = [1] * N
        shape[j] = L
        return arr.reshape(shape)

    for j in range(N):
        for k in range(j + 1, N):
            w = axis_view(circ[j], j) / axis_view(circ[k], k)
            logacc = logacc + lam * _log_theta_cap(w, q, terms)
    for k in range(N):
        for j in range(N):
            w = z[j] / circ[k]
            logacc = logacc - axis_view(lam * _log_theta_cap(w, q, terms), k)
    return np.exp(logacc)


class LaurentTable:
    """All Laurent coefficients ``f_n(z)`` available from one quadrature grid."""

    def __init__(self, coeffs: np.ndarray, eps: np.ndarray, L: int):
        self._c = coeffs
        self.eps = eps
        self.L = L

    def __call__(self, n: Sequence[int]) -> complex:
        n = tuple(int(v) for v in n)
        if any(abs(v) >= self.L // 2 for v in n):
            raise QuadratureError(f"|n_j| must stay below L/2 = {self.L // 2}")
        idx = tuple(v % self.L for v in n)
        return complex(self._c[idx] * math.exp(float(np.dot(self.eps, n))))


def f_n_all(z: Sequence[complex], params: ModelParams, quad: QuadratureConfig = QuadratureConfig()) -> LaurentTable:
    """Quadrature for every ``f_n(z)`` with ``|n_j| < L/2``."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (params.N,):
        raise ValueError("z must have N components")
    if np.any(np.abs(np.abs(z) - 1.0) > 1e-12):
        raise ContourError("all |z_j| must equal 1")
    eps = quad.resolve(params)
    L = quad.nodes_per_contour
    grid = integrand_grid(z, params, eps, L)
    # mean over the grid of I * e^{i n . phi} is the inverse DFT at index n
    coeffs = np.fft.ifftn(grid)
    return LaurentTable(coeffs, eps, L)


def f_n(n: Sequence[int], z: Sequence[complex], params: ModelParams, quad: QuadratureConfig = QuadratureConfig()) -> complex:
    """``f_n(z)`` by N-fold trapezoidal quadrature of the contour integral."""
    return f_n_all(z, params, quad)(n)


def f_n_checked(
    n: Sequence[int], z: Sequence[complex], params: ModelParams, quad: QuadratureConfig = QuadratureConfig(), tol: float = 1e-9
) -> complex:
    """``f_n`` with a node-doubling convergence check."""
    a = f_n(n, z, params, quad)
    b = f_n(n, z, params, quad.doubled())
    if abs(a - b) > tol * max(1.0, abs(b)):
        raise QuadratureError(f"node doubling changed f_n by {abs(a - b):.3e}")
    return b


# --------------------------------------------------------------------------- Psi_0, F_hat


def _theta_pow(r, params: ModelParams) -> complex:
    t = complex(theta(r, params.nome))
    lam = params.lam
    if t == 0:
        if lam > 0:
            return 0j
        raise ZeroDivisionError("theta vanishes")
    if float(lam).is_integer():
        return t ** int(lam)
    return cmath.exp(lam * cmath.log(t))


def psi0(x: Sequence[float], params: ModelParams) -> complex:
    """``prod_{j<k} theta(x_k - x_j)^lambda`` (principal branch)."""
    x = list(x)
    N = len(x)
    if N != params.N:
        raise ValueError("x must have N components")
    if not float(params.lam).is_integer():
        for j in range(N):
            for k in range(j + 1, N):
                d = (x[k] - x[j]) % (2 * math.pi)
                if min(abs(d), abs(2 * math.pi - d)) < POLE_GUARD:
                    raise ZeroDivisionError("coincident coordinates with non-integer lambda")
    out = 1 + 0j
    for j in range(N):
        for k in range(j + 1, N):
            out *= _theta_pow(x[k] - x[j], params)
    return out


def f_hat(n: Sequence[int], x: Sequence[float], params: ModelParams, quad: QuadratureConfig = QuadratureConfig()) -> complex:
    z = np.exp(1j * np.asarray(x, float))
    return f_n(n, z, params, quad) * psi0(x, params)


def f_hat_all(x: Sequence[float], params: ModelParams, quad: QuadratureConfig = QuadratureConfig()):
    """``(table, psi0(x))`` so that ``F_hat_n(x) = table(n) * psi0``."""
    z = np.exp(1j * np.asarray(x, float))
    return f_n_all(z, params, quad), psi0(x, params)


# --------------------------------------------------------------------------- kernel


def kernel_F(x: Sequence[complex], y: Sequence[complex], params: ModelParams) -> complex:
    """``prod theta(x_k-x_j)^l prod theta(y_j-y_k)^l / prod theta(x_j-y_k)^l`` (j<k in the numerators)."""
    x = list(x)
    y = list(y)
    N = len(x)
    lam = params.lam
    integer = float(lam).is_integer()
    num = []
    den = []
    for j in range(N):
        for k in range(j + 1, N):
            num.append(x[k] - x[j])
            num.append(y[j] - y[k])
    for j in range(N):
        for k in range(N):
            den.append(x[j] - y[k])
    tn = [complex(theta(r, params.nome)) for r in num]
    td = [complex(theta(r, params.nome)) for r in den]
    if any(abs(t) < POLE_GUARD for t in td):
        raise ZeroDivisionError("theta(x_j - y_k) vanishes")
    if integer:
        m = int(lam)
        return complex(np.prod([t**m for t in tn]) / np.prod([t**m for t in td]))
    logs = sum(cmath.log(t) for t in tn) - sum(cmath.log(t) for t in td)
    return cmath.exp(lam * logs)


def generating_constants(params: ModelParams) -> Tuple[float, complex]:
    """``(P, c)`` with ``F' = c e^{i P sum(x_j - y_j)} F = sum_n F_hat_n xi^{-n^+}``.

    From ``theta(y) = (i/2) e^{-iy/2} Theta(e^{iy})``:
    ``P = -lambda N / 2`` and ``c = (e^{i pi lambda/2} / 2^lambda)^{N^2 - N(N-1)/2}``.
    """
    N, lam = params.N, params.lam
    P = -lam * N / 2.0
    c = (cmath.exp(1j * math.pi * lam / 2) / 2.0**lam) ** (N * N - N * (N - 1) // 2)
    return P, c


def kernel_F_prime(x, y, params: ModelParams, P: Optional[float] = None, c: Optional[complex] = None) -> complex:
    P0, c0 = generating_constants(params)
    P = P0 if P is None else P
    c = c0 if c is None else c
    return c * cmath.exp(1j * P * (sum(x) - sum(y))) * kernel_F(x, y, params)


def n_plus(n: Sequence[int], params: ModelParams) -> np.ndarray:
    N = params.N
    return np.asarray(n, float) + params.lam * (N + 1 - 2 * np.arange(1, N + 1)) / 2.0


def generating_coefficients(x: Sequence[float], params: ModelParams, eps: Sequence[float], L: int = 64) -> LaurentTable:
    """Laurent coefficients of ``F'(x; y) prod xi_j^{n^+_j - n_j}`` over ``xi_j = e^{eps_j + i phi}``.

    Integer ``lambda`` only (then ``F'`` is single-valued in each ``xi_j``).
    Entry ``n`` of the returned table approximates ``F_hat_n(x)``.
    """
    if not float(params.lam).is_integer():
        raise ValueError("generating-function extraction needs integer lambda")
    N = params.N
    eps = np.asarray(eps, float)
    check_contours(eps, params)
    offs = n_plus(np.zeros(N, int), params)
    phis = 2 * np.pi * np.arange(L) / L
    grid = np.zeros((L,) * N, dtype=complex)
    for idx in np.ndindex(*grid.shape):
        ph = phis[list(idx)]
        y = ph - 1j * eps
        xi = np.exp(1j * y)
        grid[idx] = kernel_F_prime(x, list(y), params) * np.prod(xi**offs)
    coeffs = np.fft.ifftn(grid)
    return LaurentTable(coeffs, eps, L)


def generating_partial_sum(x, y, params: ModelParams, radius: int, quad: QuadratureConfig = QuadratureConfig()) -> complex:
    """``sum_{max|n_j| <= radius} F_hat_n(x) xi^{-n^+}`` with ``xi_j = e^{i y_j}``."""
    table, p0 = f_hat_all(x, params, quad)
    y = np.asarray(y, complex)
    total = 0j
    for n in np.ndindex(*((2 * radius + 1,) * params.N)):
        n = np.array(n) - radius
        total += table(n) * p0 * np.exp(-1j * np.dot(n_plus(n, params), y))
    return complex(total)


# --------------------------------------------------------------------------- finite differences


def second_derivative(fun, x: np.ndarray, j: int, h: float, levels: int):
    """``d^2 fun / dx_j^2`` by 4th-order central differences and a Richardson tableau.

    Steps ``h, h/2, ...`` (``levels`` of them) fill the tableau; the entry
    whose estimated error is smallest is returned, so truncation error at
    large steps and round-off at small ones are traded off automatically.
    ``fun`` may return arrays; the error estimate then uses the largest entry.
    """
    f0 = fun(x)
    tableau = []
    best, best_err = None, np.inf
    for lev in range(levels):
        hh = h / 2**lev
        vals = []
        for s in (-2, -1, 1, 2):
            xp = np.array(x, dtype=float)
            xp[j] += s * hh
            vals.append(fun(xp))
        row = [(-vals[0] + 16 * vals[1] - 30 * f0 + 16 * vals[2] - vals[3]) / (12 * hh * hh)]
        # error expansion in h^4, h^6, ...
        for k in range(1, lev + 1):
            factor = 2.0 ** (2 * k + 2)
            row.append((factor * row[k - 1] - tableau[-1][k - 1]) / (factor - 1))
            err = max(np.max(np.abs(row[k] - row[k - 1])), np.max(np.abs(row[k] - tableau[-1][k - 1])))
            if err < best_err:
                best, best_err = row[k], err
        if lev and best is not None and np.max(np.abs(row[-1] - tableau[-1][-1])) > 2 * best_err:
            break
        tableau.append(row)
    return row[0] if best is None else best


def _circle_gap(a: Sequence[float], b: Optional[Sequence[float]] = None) -> float:
    """Smallest distance mod ``2 pi`` between entries of ``a`` (or between ``a`` and ``b``)."""
    a = np.asarray(a, float)
    if b is None:
        d = [a[j] - a[k] for j in range(len(a)) for k in range(j + 1, len(a))]
    else:
        d = list(np.subtract.outer(a, np.asarray(b, float)).ravel())
    if not d:
        return np.inf
    return float(np.min(np.abs(np.angle(np.exp(1j * np.array(d))))))


def fd_step_for(quad: "QuadratureConfig", *gaps: float) -> float:
    """Starting step, capped at a tenth of the distance to the nearest singularity."""
    return min(quad.fd_step, 0.1 * min(gaps))


def laplacian(fun, x: Sequence[float], h: float, levels: int):
    x = np.asarray(x, float)
    return sum(second_derivative(fun, x, j, h, levels) for j in range(len(x)))


def pair_potential(x: Sequence[float], params: ModelParams) -> float:
    N = len(x)
    return sum(float(potential_v(x[j] - x[k], params.nome)) for j in range(N) for k in range(j + 1, N))


# --------------------------------------------------------------------------- kernel and shift identities


def verify_lemma1(x, y, params: ModelParams, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Relative residual of ``sum (d_x^2 - d_y^2) F = gamma sum (V(x_k-x_j) - V(y_j-y_k)) F``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    N = len(x)
    xy = np.concatenate([x, y])

    def F(v):
        return kernel_F(v[:N], v[N:], params)

    h = fd_step_for(quad, _circle_gap(x), _circle_gap(y), _circle_gap(x, y))
    lev = quad.fd_levels
    dx = sum(second_derivative(F, xy, j, h, lev) for j in range(N))
    dy = sum(second_derivative(F, xy, N + j, h, lev) for j in range(N))
    F0 = F(xy)
    vx = sum(float(potential_v(x[k] - x[j], params.nome)) for j in range(N) for k in range(j + 1, N))
    vy = sum(float(potential_v(y[j] - y[k], params.nome)) for j in range(N) for k in range(j + 1, N))
    rhs = params.gamma * (vx - vy) * F0
    lhs = dx - dy
    scale = max(abs(dx), abs(dy), abs(params.gamma * vx * F0), abs(params.gamma * vy * F0), 1e-300)
    return abs(lhs - rhs) / scale


def _fhat_vector(x, params, quad, keys):
    table, p0 = f_hat_all(x, params, quad)
    return np.array([table(k) for k in keys]) * p0


def verify_prop1(
    n: Sequence[int], x, params: ModelParams, quad: QuadratureConfig = QuadratureConfig(), nu_cutoff: int = 8
) -> float:
    """Relative residual of ``H F_hat_n = E0(n) F_hat_n - gamma sum S_nu F_hat_{n+nu}``.

    The neglected ``|nu| > nu_cutoff`` terms are bounded by
    ``sum |S_nu| max|F_hat|``, which is folded into the returned value.
    """
    n = tuple(int(v) for v in n)
    x = np.asarray(x, float)
    shifts = elementary_shifts(params.N, nu_cutoff)
    keys = [n]
    weights = []
    for j, k, nu in shifts:
        m = list(n)
        m[j] += nu
        m[k] -= nu
        keys.append(tuple(m))
        weights.append(s_coeff(nu, params.nome))

    def fhat_n(v):
        return _fhat_vector(v, params, quad, [n])[0]

    lap = laplacian(fhat_n, x, fd_step_for(quad, _circle_gap(x)), quad.fd_levels)
    vals = _fhat_vector(x, params, quad, keys)
    Hf = -lap + params.gamma * pair_potential(x, params) * vals[0]
    shift_sum = sum(w * v for w, v in zip(weights, vals[1:]))
    rhs = free_energy(n, params) * vals[0] - params.gamma * shift_sum
    scale = max(abs(lap), abs(free_energy(n, params) * vals[0]), abs(params.gamma * shift_sum), 1e-300)
    tail = _shift_tail(params, nu_cutoff) * max(abs(v) for v in vals)
    return (abs(Hf - rhs) + tail) / scale


def _shift_tail(params: ModelParams, nu_cutoff: int) -> float:
    """``|gamma| #pairs * sum_{nu > cutoff} S_{-nu}`` (the upward tail is absent by the f_n decay)."""
    q = params.q
    if q == 0:
        return 0.0
    pairs_count = params.N * (params.N - 1) // 2
    acc = 0.0
    for nu in range(nu_cutoff + 1, nu_cutoff + 400):
        t = nu * q ** (2 * nu) / (1 - q ** (2 * nu))
        acc += t
        if t < 1e-30:
            break
    return abs(params.gamma) * pairs_count * acc


# --------------------------------------------------------------------------- Psi_n


def assemble_psi(
    x, coefficients: CoefficientMap, params: ModelParams, quad: QuadratureConfig = QuadratureConfig(), support_cut: Optional[int] = None
) -> complex:
    """``sum_m alpha(m) F_hat_m(x)`` over the stored coefficients (optionally ``max|m-n| <= support_cut``)."""
    cmap = coefficients if support_cut is None else coefficients.restrict(support_cut)
    table, p0 = f_hat_all(x, params, quad)
    total = 0j
    for m, a in sorted(cmap.items_absolute()):
        total += a * table(m)
    return complex(total * p0)


def eigen_residual(
    x, eigenvalue: float, coefficients: CoefficientMap, params: ModelParams, quad: QuadratureConfig = QuadratureConfig(), support_cut: Optional[int] = None
) -> float:
    """``|H Psi - E Psi| / |E Psi|`` at ``x`` with the Laplacian from finite differences."""
    x = np.asarray(x, float)

    def psi(v):
        return assemble_psi(v, coefficients, params, quad, support_cut)

    lap = laplacian(psi, x, fd_step_for(quad, _circle_gap(x)), quad.fd_levels)
    p = psi(x)
    Hp = -lap + params.gamma * pair_potential(x, params) * p
    return abs(Hp - eigenvalue * p) / abs(eigenvalue * p)


# --------------------------------------------------------------------------- bounds


def lemma3_bound(n: Sequence[int], params: ModelParams, b_param: float) -> float:
    from .lattice import bound_kc

    K, Kt, C = bound_kc(params, b_param)
    expo = sum(Kt * abs(v) - K * (j + 1) * v for j, v in enumerate(n))
    return C * params.q**expo


def lemma3_contours(n: Sequence[int], params: ModelParams, b_param: float) -> np.ndarray:
    """``eps_j = eps (j - rho sign(n_j))`` with ``eps = beta/(N+b)``, ``rho = b/(1+2b)``."""
    N = params.N
    eps = params.beta / (N + b_param)
    rho = b_param / (1 + 2 * b_param)
    return np.array([eps * (j + 1 - rho * np.sign(v)) for j, v in enumerate(n)])


# --------------------------------------------------------------------------- Schur reference


def schur(partition: Sequence[int], z: Sequence[complex]) -> complex:
    """Bialternant ``det(z_i^{l_j + N - j}) / det(z_i^{N - j})``."""
    z = np.asarray(z, complex)
    N = len(z)
    lam = list(partition) + [0] * (N - len(partition))
    num = np.array([[zi ** (lam[j] + N - 1 - j) for j in range(N)] for zi in z])
    den = np.array([[zi ** (N - 1 - j) for j in range(N)] for zi in z])
    return complex(np.linalg.det(num) / np.linalg.det(den))
