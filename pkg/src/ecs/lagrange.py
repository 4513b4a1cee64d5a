"""Truncated power series and Lagrange reversion.

The engine solves ``xi = a + eta * phi(xi)`` as a power series in ``eta``
where ``phi(z) = sum_r phi_r (z - a)^r`` is given by its Taylor coefficients,
and composes ``g(xi)`` for a second Taylor series ``g``. Coefficients may be
floats, complex numbers or ``fractions.Fraction`` (for exact checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple


class SeriesOrderError(ValueError):
    """Requested order exceeds available coefficients, or expansion points differ."""


@dataclass(frozen=True)
class FormalSeries:
    """``sum_{r=0}^{order} c_r (z - a)^r``."""

    expansion_point: object
    coefficients: Tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if len(self.coefficients) == 0:
            raise SeriesOrderError("series needs at least one coefficient")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __getitem__(self, r: int):
        return self.coefficients[r] if 0 <= r <= self.order else 0

    def truncate(self, order: int) -> "FormalSeries":
        if order > self.order:
            raise SeriesOrderError(f"order {order} > available {self.order}")
        return FormalSeries(self.expansion_point, self.coefficients[: order + 1])

    def _check(self, other: "FormalSeries"):
        if self.expansion_point != other.expansion_point:
            raise SeriesOrderError("expansion points differ")

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        M = min(self.order, other.order)
        return FormalSeries(self.expansion_point, [self[i] + other[i] for i in range(M + 1)])

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        M = min(self.order, other.order)
        return FormalSeries(self.expansion_point, mul_trunc(self.coefficients, other.coefficients, M))

    def evaluate(self, z):
        """Horner evaluation of the truncated polynomial at ``z``."""
        t = z - self.expansion_point
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * t + c
        return acc


# --------------------------------------------------------------------------- dense helpers


def mul_trunc(u: Sequence, v: Sequence, order: int) -> List:
    """Cauchy product truncated at ``order``."""
    out = [0] * (order + 1)
    for i, ui in enumerate(u[: order + 1]):
        if ui == 0:
            continue
        for j in range(min(len(v), order + 1 - i)):
            out[i + j] += ui * v[j]
    return out


def power_trunc(u: Sequence, m: int, order: int) -> List:
    """``u^m`` by repeated convolution."""
    out = [1] + [0] * order
    for _ in range(m):
        out = mul_trunc(out, u, order)
    return out


def compose_poly(g: Sequence, t: Sequence, order: int) -> List:
    """``sum_r g_r t(eta)^r`` where ``t`` has zero constant term."""
    out = [0] * (order + 1)
    tp = [1] + [0] * order
    for r, gr in enumerate(g):
        if r > order:
            break
        if gr != 0:
            for i in range(order + 1):
                out[i] += gr * tp[i]
        tp = mul_trunc(tp, t, order)
    return out


def _pad(c: Sequence, n: int) -> List:
    c = list(c[:n])
    return c + [0] * (n - len(c))


# --------------------------------------------------------------------------- multinomial / Leibniz


def _multiplicities(ell: int, max_part: int) -> Iterator[List[Tuple[int, int]]]:
    """Partitions of ``ell`` as ``[(part, count), ...]`` with parts <= max_part, descending."""
    if ell == 0:
        yield []
        return
    for part in range(min(ell, max_part), 0, -1):
        for count in range(ell // part, 0, -1):
            for rest in _multiplicities(ell - part * count, part - 1):
                yield [(part, count)] + rest


def multinomial_power(coeffs: Sequence, m: int, order: int) -> List:
    """Coefficients of ``(sum_r c_r t^r)^m`` through ``t^order`` by multinomial expansion.

    Each coefficient is summed over ``(l_0, l_1, ...)`` with ``sum l_r = m`` and
    ``sum r l_r = ell`` of ``m! / prod l_r! * prod c_r^{l_r}``.
    """
    if m < 1:
        raise ValueError("exponent must be >= 1")
    c = _pad(coeffs, order + 1)
    out = [0] * (order + 1)
    for ell in range(order + 1):
        acc = 0
        for parts in _multiplicities(ell, order):
            used = sum(cnt for _, cnt in parts)
            l0 = m - used
            if l0 < 0:
                continue
            denom = math.factorial(l0)
            for _, cnt in parts:
                denom *= math.factorial(cnt)
            weight = math.factorial(m) // denom
            term = c[0] ** l0 if l0 else 1
            for part, cnt in parts:
                term = term * c[part] ** cnt
            acc += weight * term
        out[ell] = acc
    return out


def leibniz_derivative_weights(s: int, r: int) -> List[Tuple[int, ...]]:
    """All compositions ``(k_1..k_s)`` of ``r`` into ``s`` nonnegative parts.

    ``(1/r!) (d/da)^r prod_k 1/(x_k - a) = sum prod_k 1/(x_k - a)^{1 + k_k}``
    over exactly these tuples.
    """
    if s < 1 or r < 0:
        raise ValueError("need s >= 1 and r >= 0")
    if s == 1:
        return [(r,)]
    out = []
    for first in range(r, -1, -1):
        for rest in leibniz_derivative_weights(s - 1, r - first):
            out.append((first,) + rest)
    return out


# --------------------------------------------------------------------------- reversion


def revert(phi: FormalSeries, order: int) -> FormalSeries:
    """Series ``xi(eta) = a + sum_m xi_m eta^m`` solving ``xi = a + eta phi(xi)``.

    Returned as a FormalSeries in ``eta`` whose constant term is ``a``.
    Computed by iterated substitution ``t <- eta phi(a + t)``.
    """
    if order > phi.order + 1 or order < 0:
        raise SeriesOrderError(f"order {order} needs phi through order {order - 1}")
    c = _pad(phi.coefficients, order + 1)
    t = [0] * (order + 1)
    for _ in range(order):
        val = compose_poly(c, t, order)
        t = [0] + val[:order]
    return FormalSeries(phi.expansion_point, [phi.expansion_point] + t[1:])


def revert_closed_form(phi: FormalSeries, order: int) -> FormalSeries:
    """Same as :func:`revert` via ``xi_m = (1/m) [t^{m-1}] phi(a+t)^m``."""
    if order > phi.order + 1 or order < 0:
        raise SeriesOrderError(f"order {order} needs phi through order {order - 1}")
    out = [phi.expansion_point]
    for m in range(1, order + 1):
        p = multinomial_power(phi.coefficients, m, m - 1)
        out.append(p[m - 1] / m if not _is_exact(p[m - 1]) else _exact_div(p[m - 1], m))
    return FormalSeries(phi.expansion_point, out)


def compose(g: FormalSeries, phi: FormalSeries, order: int) -> FormalSeries:
    """``g(xi(eta))`` through ``eta^order`` by substituting the reverted series."""
    if g.expansion_point != phi.expansion_point:
        raise SeriesOrderError("expansion points differ")
    if order > g.order:
        raise SeriesOrderError(f"order {order} > g order {g.order}")
    xi = revert(phi, order)
    t = [0] + list(xi.coefficients[1:])
    return FormalSeries(g.expansion_point, compose_poly(g.coefficients, t, order))


def compose_closed_form(g: FormalSeries, phi: FormalSeries, order: int) -> FormalSeries:
    """``g_0 + sum_m (1/m) [t^{m-1}] (g'(a+t) phi(a+t)^m) eta^m``."""
    if g.expansion_point != phi.expansion_point:
        raise SeriesOrderError("expansion points differ")
    if order > g.order or order > phi.order + 1:
        raise SeriesOrderError("order exceeds available coefficients")
    gprime = [r * g[r] for r in range(1, g.order + 1)] or [0]
    out = [g[0]]
    for m in range(1, order + 1):
        p = multinomial_power(phi.coefficients, m, m - 1)
        val = sum(gprime[k] * p[m - 1 - k] for k in range(min(m, len(gprime))))
        out.append(_exact_div(val, m) if _is_exact(val) else val / m)
    return FormalSeries(g.expansion_point, out)


def _is_exact(x) -> bool:
    from fractions import Fraction

    return isinstance(x, (int, Fraction))


def _exact_div(x, m: int):
    from fractions import Fraction

    return Fraction(x) / m


def substitution_table(t: Sequence, order: int) -> List[List]:
    """Rows ``T[r][i] = [eta^i] t(eta)^r`` for ``r, i <= order`` (``t`` without constant term).

    With it, ``[eta^i] g(a + t) = sum_r g_r T[r][i]`` also for array-valued ``g_r``.
    """
    table = []
    tp = [1] + [0] * order
    for _ in range(order + 1):
        table.append(tp)
        tp = mul_trunc(tp, t, order)
    return table
