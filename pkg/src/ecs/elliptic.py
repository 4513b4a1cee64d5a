"""Elliptic special functions for the eCS model.

All functions take a :class:`Nome` (``q = exp(-beta/2)``) and an optional
:class:`EllipticConfig` controlling the truncation of infinite products.
``q = 0`` is the trigonometric (Sutherland) limit and is handled exactly.

Functions accept complex arguments. With ``config.precision_digits > 15`` the
scalar functions switch to mpmath arithmetic at that working precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import mpmath
import numpy as np

__all__ = [
    "EllipticDomainError",
    "Nome",
    "EllipticConfig",
    "theta",
    "theta_prime",
    "capital_theta",
    "potential_v",
    "c0",
    "phi_fun",
    "f_aux",
    "s_coeff",
    "jacobi_theta1",
    "log_capital_theta_power",
    "s_coeff_array",
    "rel_identity_residual",
    "fourier_tail_bound",
    "fourier_terms",
    "potential_v_fourier",
]

POLE_GUARD = 1e-8


class EllipticDomainError(ValueError):
    """Argument on (or within ``POLE_GUARD`` of) a pole or a forbidden point."""


@dataclass(frozen=True)
class Nome:
    """Elliptic nome ``q`` in ``[0, 1)`` with ``beta = -2 log q``."""

    q: float

    def __post_init__(self):
        q = float(self.q)
        if not (0.0 <= q < 1.0):
            raise ValueError(f"nome must satisfy 0 <= q < 1, got {q!r}")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_beta(cls, beta: float) -> "Nome":
        if beta <= 0:
            raise ValueError("beta must be positive")
        if math.isinf(beta):
            return cls(0.0)
        return cls(math.exp(-beta / 2.0))

    @property
    def beta(self) -> float:
        return math.inf if self.q == 0.0 else -2.0 * math.log(self.q)


@dataclass(frozen=True)
class EllipticConfig:
    """Truncation and precision controls.

    ``product_terms=None`` picks the smallest ``T`` with ``q**(2T) < 1e-18``.
    """

    product_terms: Optional[int] = None
    precision_digits: int = 15

    def __post_init__(self):
        if self.product_terms is not None and self.product_terms < 1:
            raise ValueError("product_terms must be >= 1")
        if self.precision_digits < 1:
            raise ValueError("precision_digits must be >= 1")

    def terms(self, nome: Nome) -> int:
        if self.product_terms is not None:
            return self.product_terms
        return default_terms(nome.q)

    @property
    def high_precision(self) -> bool:
        return self.precision_digits > 15


DEFAULT_CONFIG = EllipticConfig()


def default_terms(q: float, target: float = 1e-18) -> int:
    if q == 0.0:
        return 1
    return max(1, math.ceil(math.log(target) / (2.0 * math.log(q))))


def _cfg(config: Optional[EllipticConfig]) -> EllipticConfig:
    return DEFAULT_CONFIG if config is None else config


def _q2_powers(nome: Nome, T: int) -> np.ndarray:
    return nome.q ** (2.0 * np.arange(1, T + 1))


# --------------------------------------------------------------------------- theta


def theta(r, nome: Nome, config: Optional[EllipticConfig] = None):
    """``sin(r/2) * prod_{n<=T} (1 - 2 q^{2n} cos r + q^{4n})``.

    Vectorised over ``r`` in double precision.
    """
    cfg = _cfg(config)
    if cfg.high_precision:
        return _mp_scalar(_theta_mp, r, nome, cfg)
    r = np.asarray(r, dtype=complex) if np.iscomplexobj(r) else np.asarray(r, dtype=float)
    base = np.sin(r / 2.0)
    if nome.q == 0.0:
        return base[()] if base.ndim == 0 else base
    p = _q2_powers(nome, cfg.terms(nome))
    cr = np.cos(r)[..., None]
    prod = np.prod(1.0 - 2.0 * p * cr + p * p, axis=-1)
    out = base * prod
    return out[()] if out.ndim == 0 else out


def theta_prime(r, nome: Nome, config: Optional[EllipticConfig] = None):
    """Analytic derivative of :func:`theta` (via the logarithmic derivative)."""
    return phi_fun(r, nome, config) * theta(r, nome, config)


def jacobi_theta1(u, q: float, terms: int = 40):
    """Jacobi ``theta_1(u | q) = 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1)u)``."""
    n = np.arange(terms)
    u = np.asarray(u)
    s = ((-1.0) ** n) * q ** ((n + 0.5) ** 2) * np.sin(np.multiply.outer(u, 2 * n + 1))
    return 2.0 * s.sum(axis=-1)


# --------------------------------------------------------------------------- Theta


def capital_theta(z, nome: Nome, config: Optional[EllipticConfig] = None):
    """``(1 - z) prod_{m<=T} (1 - q^{2m} z)(1 - q^{2m}/z)``."""
    cfg = _cfg(config)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise EllipticDomainError("capital_theta is undefined at z = 0")
    out = 1.0 - z
    if nome.q != 0.0:
        p = _q2_powers(nome, cfg.terms(nome))
        zz = z[..., None]
        out = out * np.prod((1.0 - p * zz) * (1.0 - p / zz), axis=-1)
    return out[()] if out.ndim == 0 else out


def log_capital_theta_power(z, lam: float, nome: Nome, config: Optional[EllipticConfig] = None):
    """``lam * log Theta(z)`` as a sum of principal logs of the individual factors.

    For ``q^2 < |z| < 1`` every factor has positive real part, so this branch
    is analytic in ``z`` and agrees with the binomial expansion of each factor.
    """
    cfg = _cfg(config)
    z = np.asarray(z, dtype=complex)
    out = np.log(1.0 - z)
    if nome.q != 0.0:
        p = _q2_powers(nome, cfg.terms(nome))
        zz = z[..., None]
        out = out + np.sum(np.log(1.0 - p * zz) + np.log(1.0 - p / zz), axis=-1)
    return lam * out


# --------------------------------------------------------------------------- V, c0


def _pole_check(r, nome: Nome, T: int):
    r = np.asarray(r, dtype=complex)
    re = np.remainder(r.real + np.pi, 2 * np.pi) - np.pi
    if nome.q == 0.0:
        near = (np.abs(re) < POLE_GUARD) & (np.abs(r.imag) < POLE_GUARD)
    else:
        beta = nome.beta
        m = np.round(r.imag / beta)
        near = (np.abs(re) < POLE_GUARD) & (np.abs(r.imag - beta * m) < POLE_GUARD) & (np.abs(m) <= T)
    if np.any(near):
        raise EllipticDomainError("argument on the pole lattice 2*pi*Z + i*beta*Z")


def potential_v(r, nome: Nome, config: Optional[EllipticConfig] = None):
    """``sum_{|m|<=T} 1/(4 sin^2((r + i beta m)/2))`` (equals ``-d^2/dr^2 log theta``)."""
    cfg = _cfg(config)
    if cfg.high_precision:
        return _mp_scalar(_v_mp, r, nome, cfg)
    T = cfg.terms(nome)
    _pole_check(r, nome, T)
    real_in = not np.iscomplexobj(r)
    r = np.asarray(r, dtype=complex)
    out = 0.25 / np.sin(r / 2.0) ** 2
    if nome.q != 0.0:
        beta = nome.beta
        for m in range(1, T + 1):
            out = out + 0.25 / np.sin((r + 1j * beta * m) / 2.0) ** 2
            out = out + 0.25 / np.sin((r - 1j * beta * m) / 2.0) ** 2
    if real_in:
        out = out.real
    return out[()] if np.ndim(out) == 0 else out


def c0(nome: Nome, config: Optional[EllipticConfig] = None) -> float:
    """``1/12 - sum_{n<=T} 2 q^{2n} / (1 - q^{2n})^2``."""
    cfg = _cfg(config)
    if cfg.high_precision:
        with mpmath.workdps(cfg.precision_digits):
            q = mpmath.mpf(nome.q)
            s = mpmath.mpf(1) / 12
            for n in range(1, cfg.terms(nome) + 1):
                p = q ** (2 * n)
                s -= 2 * p / (1 - p) ** 2
            return float(s)
    if nome.q == 0.0:
        return 1.0 / 12.0
    p = _q2_powers(nome, cfg.terms(nome))
    return 1.0 / 12.0 - math.fsum(2.0 * p / (1.0 - p) ** 2)


def c0_sinh_form(nome: Nome, terms: Optional[int] = None) -> float:
    """The ``1/12 - sum 1/(2 sinh^2(beta m/2))`` form of :func:`c0`."""
    if nome.q == 0.0:
        return 1.0 / 12.0
    T = terms or default_terms(nome.q)
    beta = nome.beta
    return 1.0 / 12.0 - math.fsum(1.0 / (2.0 * math.sinh(beta * m / 2.0) ** 2) for m in range(1, T + 1))


# --------------------------------------------------------------------------- phi, f


def phi_fun(x, nome: Nome, config: Optional[EllipticConfig] = None):
    """``theta'(x)/theta(x)`` by term-wise logarithmic differentiation."""
    cfg = _cfg(config)
    if cfg.high_precision:
        return _mp_scalar(_phi_mp, x, nome, cfg)
    real_in = not np.iscomplexobj(x)
    x = np.asarray(x, dtype=complex)
    s = np.sin(x / 2.0)
    if np.any(np.abs(s) < POLE_GUARD):
        raise EllipticDomainError("phi_fun evaluated at a zero of theta")
    out = 0.5 * np.cos(x / 2.0) / s
    if nome.q != 0.0:
        p = _q2_powers(nome, cfg.terms(nome))
        xx = x[..., None]
        den = 1.0 - 2.0 * p * np.cos(xx) + p * p
        if np.any(np.abs(den) < POLE_GUARD):
            raise EllipticDomainError("phi_fun evaluated at a zero of theta")
        out = out + np.sum(2.0 * p * np.sin(xx) / den, axis=-1)
    if real_in:
        out = out.real
    return out[()] if np.ndim(out) == 0 else out


def f_aux(x, nome: Nome, config: Optional[EllipticConfig] = None):
    """``(V(x) - phi(x)^2 - c0) / 2``."""
    return 0.5 * (potential_v(x, nome, config) - phi_fun(x, nome, config) ** 2 - c0(nome, config))


# --------------------------------------------------------------------------- S_nu


def s_coeff(nu: int, nome: Nome) -> float:
    """Coupling ``S_nu = |nu| q^{|nu| - nu} / (1 - q^{2|nu|})``, ``S_0 = 0``."""
    nu = int(nu)
    if nu == 0:
        return 0.0
    a = abs(nu)
    q = nome.q
    if q == 0.0:
        return float(a) if nu > 0 else 0.0
    return a * q ** (a - nu) / (1.0 - q ** (2 * a))


def s_coeff_array(nus, nome: Nome) -> np.ndarray:
    return np.array([s_coeff(int(v), nome) for v in np.ravel(nus)]).reshape(np.shape(nus))


# --------------------------------------------------------------------------- mpmath path


def _mp_scalar(fn, r, nome, cfg):
    if np.ndim(r) != 0:
        return np.array([_mp_scalar(fn, v, nome, cfg) for v in np.ravel(r)]).reshape(np.shape(r))
    is_complex = np.iscomplexobj(r)
    with mpmath.workdps(cfg.precision_digits):
        val = fn(mpmath.mpc(complex(r)) if is_complex else mpmath.mpf(float(r)), nome, cfg)
        return complex(val) if is_complex else float(mpmath.re(val))


def _theta_mp(r, nome, cfg):
    q = mpmath.mpf(nome.q)
    out = mpmath.sin(r / 2)
    if nome.q != 0.0:
        c = mpmath.cos(r)
        for n in range(1, cfg.terms(nome) + 1):
            p = q ** (2 * n)
            out *= 1 - 2 * p * c + p * p
    return out


def _v_mp(r, nome, cfg):
    out = 1 / (4 * mpmath.sin(r / 2) ** 2)
    if nome.q != 0.0:
        beta = -2 * mpmath.log(mpmath.mpf(nome.q))
        for m in range(1, cfg.terms(nome) + 1):
            out += 1 / (4 * mpmath.sin((r + 1j * beta * m) / 2) ** 2)
            out += 1 / (4 * mpmath.sin((r - 1j * beta * m) / 2) ** 2)
    return out


def _phi_mp(x, nome, cfg):
    out = mpmath.cot(x / 2) / 2
    if nome.q != 0.0:
        q = mpmath.mpf(nome.q)
        for n in range(1, cfg.terms(nome) + 1):
            p = q ** (2 * n)
            out += 2 * p * mpmath.sin(x) / (1 - 2 * p * mpmath.cos(x) + p * p)
    return out


def theta1_normalization(nome: Nome, terms: Optional[int] = None) -> float:
    """Constant ``k`` with ``theta(r) = k * jacobi_theta1(r/2, q)``."""
    if nome.q == 0.0:
        raise EllipticDomainError("normalization diverges at q = 0")
    T = terms or default_terms(nome.q)
    p = _q2_powers(nome, T)
    return 1.0 / (2.0 * nome.q ** 0.25 * np.prod(1.0 - p))


# --------------------------------------------------------------------------- identities


def rel_identity_residual(x, y, nome: Nome, config: Optional[EllipticConfig] = None):
    """``phi(x)phi(y) + phi(x)phi(z) + phi(y)phi(z) - f(x) - f(y) - f(z)`` at ``z = -x - y``."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    z = -x - y
    px, py, pz = (phi_fun(v, nome, config) for v in (x, y, z))
    return px * py + px * pz + py * pz - f_aux(x, nome, config) - f_aux(y, nome, config) - f_aux(z, nome, config)


def fourier_tail_bound(nome: Nome, log_modulus: float, K: int) -> float:
    """Bound on ``sum_{|nu|>K} |S_nu xi^{-nu}|`` for ``log|xi| = log_modulus``.

    Needs ``0 < log_modulus < beta`` so both geometric ratios are below 1.
    """
    q = nome.q
    r_up = math.exp(-log_modulus)
    r_dn = q * q * math.exp(log_modulus) if q > 0 else 0.0
    if not (0 < r_up < 1 and 0 <= r_dn < 1):
        raise EllipticDomainError("need 0 < log|xi| < beta for the Fourier series of V")
    pref = 1.0 / (1.0 - q * q)

    def tail(r):
        if r == 0.0:
            return 0.0
        return r ** (K + 1) * ((K + 1) - K * r) / (1.0 - r) ** 2

    return pref * (tail(r_up) + tail(r_dn))


def fourier_terms(nome: Nome, log_modulus: float, tol: float = 1e-12) -> int:
    K = 1
    while fourier_tail_bound(nome, log_modulus, K) > tol:
        K *= 2
    lo, hi = K // 2, K
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fourier_tail_bound(nome, log_modulus, mid) > tol:
            lo = mid
        else:
            hi = mid
    return hi


def potential_v_fourier(y, nome: Nome, K: int):
    """``-sum_{0<|nu|<=K} S_nu xi^{-nu}`` with ``xi = e^{iy}``; converges to ``V(y)`` for ``0 < -Im y < beta``."""
    xi = np.exp(1j * np.asarray(y, dtype=complex))
    out = np.zeros_like(xi)
    for nu in range(1, K + 1):
        out -= s_coeff(nu, nome) * xi ** (-nu) + s_coeff(-nu, nome) * xi**nu
    return out
