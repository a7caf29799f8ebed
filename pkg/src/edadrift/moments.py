"""Conditional moments of one neutral-bit step and the square-root Taylor bound.

The closed forms are written with plain arithmetic, so ``Fraction`` inputs
give exact rational results.  The ``enumerate_*`` functions compute the same
moments independently by summing over every outcome of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InsufficientDataError


@dataclass(frozen=True)
class MomentTriple:
    mean: float
    variance: float
    third_central: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"negative variance {self.variance}")


def pbil_conditional_moments(p, mu: int, rho) -> MomentTriple:
    q = p * (1 - p)
    return MomentTriple(p, rho**2 / mu * q, rho**3 / mu**2 * q * (1 - 2 * p))


def cga_conditional_moments(p, K: int) -> MomentTriple:
    return MomentTriple(p, 2 * p * (1 - p) / K**2, 0 * p)


def _central(outcomes) -> MomentTriple:
    """Moments of a finite law given as ``(value, probability)`` pairs."""
    mean = sum(w * x for x, w in outcomes)
    var = sum(w * (x - mean) ** 2 for x, w in outcomes)
    third = sum(w * (x - mean) ** 3 for x, w in outcomes)
    return MomentTriple(mean, var, third)


def pbil_step_outcomes(p, mu: int, rho) -> list:
    """All ``(next frequency, probability)`` pairs of one PBIL step, ``Y ~ Binomial(mu, p)``."""
    exact = isinstance(p, Fraction)
    out = []
    for k in range(mu + 1):
        share = Fraction(k, mu) if exact else k / mu
        out.append(((1 - rho) * p + rho * share, math.comb(mu, k) * p**k * (1 - p) ** (mu - k)))
    return out


def cga_step_outcomes(p, K: int) -> list:
    """The three outcomes of a cGA step from two independent samples of the bit."""
    outcomes = {}
    for x1 in (0, 1):
        for x2 in (0, 1):
            w = (p if x1 else 1 - p) * (p if x2 else 1 - p)
            nxt = p + Fraction(x1 - x2, K) if isinstance(p, Fraction) else p + (x1 - x2) / K
            outcomes[nxt] = outcomes.get(nxt, 0) + w
    return list(outcomes.items())


def enumerate_pbil_moments(p, mu: int, rho) -> MomentTriple:
    return _central(pbil_step_outcomes(p, mu, rho))


def enumerate_cga_moments(p, K: int) -> MomentTriple:
    return _central(cga_step_outcomes(p, K))


class SqrtBound(NamedTuple):
    lhs: float | np.ndarray
    rhs: float | np.ndarray
    holds: bool | np.ndarray


def check_sqrt_bound(z, z0) -> SqrtBound:
    """Compare ``sqrt(z)`` with its third-order Taylor polynomial around ``z0``.

    The polynomial is ``sqrt(z0) + (z - z0)/(2 sqrt z0) - (z - z0)^2/(8 z0^1.5)
    + (z - z0)^3/(16 z0^2.5)``.  Accepts scalars or arrays.
    """
    z_arr, z0_arr = np.asarray(z, dtype=float), np.asarray(z0, dtype=float)
    if np.any(z_arr < 0) or np.any(z0_arr <= 0):
        raise DomainError("need z >= 0 and z0 > 0")
    d = z_arr - z0_arr
    s0 = np.sqrt(z0_arr)
    lhs = np.sqrt(z_arr)
    rhs = s0 + d / (2 * s0) - d**2 / (8 * z0_arr * s0) + d**3 / (16 * z0_arr**2 * s0)
    holds = lhs <= rhs + 1e-12 * np.maximum(1.0, rhs)
    if np.ndim(lhs) == 0:
        return SqrtBound(float(lhs), float(rhs), bool(holds))
    return SqrtBound(lhs, rhs, holds)


def empirical_moments(samples, center: float | None = None) -> MomentTriple:
    """Sample mean, unbiased variance and plug-in third central moment.

    ``center`` only shifts the data before summation to limit cancellation.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    shift = float(center) if center is not None else 0.0
    y = x - shift
    m = y.mean()
    dev = y - m
    return MomentTriple(m + shift, float(dev @ dev) / (x.size - 1), float(np.mean(dev**3)))


def _rel_err(a, b) -> float:
    if a == b:
        return 0.0
    return float(abs(a - b) / max(abs(b), abs(a)))


def pbil_formula_error(mu: int, rho) -> float:
    """Largest relative disagreement between closed form and enumeration over the ``1/mu`` grid."""
    rho = Fraction(rho)
    worst = 0.0
    for k in range(mu + 1):
        p = Fraction(k, mu)
        a, b = pbil_conditional_moments(p, mu, rho), enumerate_pbil_moments(p, mu, rho)
        worst = max(worst, _rel_err(a.mean, b.mean), _rel_err(a.variance, b.variance),
                    _rel_err(a.third_central, b.third_central))
    return worst


def cga_formula_error(K: int) -> tuple[float, bool]:
    """Largest relative disagreement over the ``1/K`` grid, and whether every third moment is 0."""
    worst, zero_third = 0.0, True
    for i in range(K + 1):
        p = Fraction(i, K)
        a, b = cga_conditional_moments(p, K), enumerate_cga_moments(p, K)
        worst = max(worst, _rel_err(a.mean, b.mean), _rel_err(a.variance, b.variance))
        zero_third &= b.third_central == 0 and a.third_central == 0
    return worst, zero_third
