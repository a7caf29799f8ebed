"""Reduced one-dimensional frequency processes of a neutral bit.

For a neutral bit the frequency evolves independently of the fitness
function, of the other bits and (for PBIL) of ``lam``:

* PBIL / UMDA / lambda-MMAS / CE: ``p' = (1 - rho) p + rho * Y / mu`` with
  ``Y ~ Binomial(mu, p)``;
* cGA: ``p' = p +- 1/K`` with probability ``p (1 - p)`` each, else ``p' = p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from fractions import Fraction

from .eda import Algorithm, EdaSpec
from .errors import InvalidSpecError
from .rng import RandomStream
from .stopping import BUDGET_EXHAUSTED, StopKind, StoppingRule

_BLOCK = 64
_MAX_BLOCK = 8192


@dataclass(frozen=True)
class NeutralProcessSpec:
    """Parameters of the reduced process; ``margins`` is the dimension ``D`` when enabled."""

    kind: str
    mu: int = 1
    rho: float = 1.0
    schedule: tuple[float, ...] | None = None
    K: int | None = None
    margins: int | None = None

    def __post_init__(self):
        if self.kind not in ("pbil", "cga"):
            raise InvalidSpecError(f"kind must be 'pbil' or 'cga', got {self.kind!r}")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(float(r) for r in self.schedule))
        # reuse the EDA invariants (K parity, margin grid, learning-rate range)
        self.as_eda_spec()

    @classmethod
    def cga(cls, K: int, margins: int | None = None) -> NeutralProcessSpec:
        return cls("cga", K=K, margins=margins)

    @classmethod
    def pbil(cls, mu: int, rho: float, margins: int | None = None) -> NeutralProcessSpec:
        return cls("pbil", mu=mu, rho=rho, margins=margins)

    @classmethod
    def umda(cls, mu: int, margins: int | None = None) -> NeutralProcessSpec:
        return cls("pbil", mu=mu, rho=1.0, margins=margins)

    @classmethod
    def ce(cls, mu: int, schedule, margins: int | None = None) -> NeutralProcessSpec:
        return cls("pbil", mu=mu, schedule=tuple(schedule), margins=margins)

    @classmethod
    def from_eda(cls, spec: EdaSpec) -> NeutralProcessSpec:
        margins = spec.dim if spec.margins else None
        if spec.algorithm is Algorithm.CGA:
            return cls.cga(spec.K, margins)
        return cls("pbil", mu=spec.mu, rho=spec.rho, schedule=spec.schedule, margins=margins)

    def as_eda_spec(self) -> EdaSpec:
        D = self.margins or 1
        on = self.margins is not None
        if self.kind == "cga":
            return EdaSpec(Algorithm.CGA, dim=D, K=self.K, margins=on)
        if self.schedule is not None:
            return EdaSpec(Algorithm.CE, dim=D, mu=self.mu, lam=self.mu, schedule=self.schedule, margins=on)
        return EdaSpec(Algorithm.PBIL, dim=D, mu=self.mu, lam=self.mu, rho=self.rho, margins=on)

    def rate(self, t: int) -> float:
        if self.schedule is None:
            return self.rho
        return self.schedule[min(t, len(self.schedule)) - 1]

    @property
    def min_rate(self) -> float:
        return min(self.schedule) if self.schedule is not None else self.rho

    @cached_property
    def denominator(self) -> int | None:
        return self.as_eda_spec().denominator

    @property
    def theta_scale(self) -> float:
        """Order of magnitude of the expected drift time: ``K^2`` or ``mu / rho^2``."""
        if self.kind == "cga":
            return float(self.K**2)
        return self.mu / self.min_rate**2

    def default_budget(self) -> int:
        return int(math.ceil(200 * self.theta_scale))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "cga":
            d["K"] = self.K
        else:
            d["mu"] = self.mu
            if self.schedule is not None:
                d["schedule"] = list(self.schedule)
            else:
                d["rho"] = self.rho
        if self.margins is not None:
            d["margins"] = self.margins
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NeutralProcessSpec:
        allowed = {"kind", "mu", "rho", "schedule", "K", "margins"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown process keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class HittingRecord:
    stopping_time: int
    terminal_frequency: float
    trigger: str
    certified: bool = False


def pbil_neutral_step(p: float, mu: int, rho: float, rng: RandomStream) -> float:
    y = rng.binomial(mu, p)
    return (1 - rho) * p + rho * y / mu


def cga_neutral_step(p, K: int, rng: RandomStream) -> Fraction:
    """One cGA step on the ``1/K`` grid from two independent samples of the bit."""
    if not isinstance(p, Fraction):
        p = Fraction(p).limit_denominator(10**9)
    if K % p.denominator:
        raise ValueError(f"{p} is not a multiple of 1/{K}")
    q = float(p)
    d = (rng.random() < q) - (rng.random() < q)
    return p + Fraction(d, K) if d else p


def certify_runaway(p: float, mu: int, rho: float, epsilon: float) -> bool:
    """True when ``mu * q / rho <= epsilon`` with ``q = min(p, 1 - p)``.

    Starting from ``q``, the chance that the minority value is ever sampled
    again is at most ``sum_s mu q (1 - rho)^s = mu q / rho``.
    """
    q = min(p, 1 - p)
    if q == 0:
        return True
    if rho >= 1:
        return False
    return mu * q / rho <= epsilon


@lru_cache(maxsize=256)
def _grid_thresholds(stop: StoppingRule, den: int, margin_dim):
    low, high = stop.bounds(margin_dim)
    lo_i = math.floor(low * den) if low is not None else -1
    hi_i = math.ceil(high * den) if high is not None else den + 1
    return lo_i, hi_i


@lru_cache(maxsize=256)
def _float_thresholds(stop: StoppingRule, margin_dim):
    low, high = stop.bounds(margin_dim)
    return (float(low) if low is not None else -1.0), (float(high) if high is not None else 2.0)


def simulate_until(
    spec: NeutralProcessSpec,
    stop: StoppingRule,
    rng: RandomStream,
    budget: int | None = None,
    start=Fraction(1, 2),
) -> HittingRecord:
    """Follow the process from ``start`` until ``stop`` fires or ``budget`` iterations pass."""
    if budget is None:
        budget = stop.horizon if stop.kind is StopKind.HORIZON else spec.default_budget()
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if stop.kind is StopKind.RUNAWAY:
        return _simulate_runaway(spec, stop, rng, budget, start)
    if spec.kind == "cga":
        return _simulate_cga(spec, stop, rng, budget, start)
    if spec.denominator is not None:
        return _simulate_umda(spec, stop, rng, budget, start)
    return _simulate_pbil(spec, stop, rng, budget, start)


@lru_cache(maxsize=256)
def _start_numerator(start, den: int) -> int:
    x = Fraction(start).limit_denominator(10**9) * den
    if x.denominator != 1:
        raise InvalidSpecError(f"start {start} is not on the 1/{den} grid")
    return int(x)


def _horizon(stop: StoppingRule) -> int | None:
    return stop.horizon if stop.kind is StopKind.HORIZON else None


def _simulate_cga(spec, stop, rng, budget, start) -> HittingRecord:
    D = spec.margins
    den = spec.denominator
    step = den // spec.K
    floor = den // D if D else 0
    ceil_ = den - floor
    i = _start_numerator(start, den)
    lo_i, hi_i = _grid_thresholds(stop, den, D)
    horizon = _horizon(stop)
    dd = float(den) * den
    t = 0
    u: list[float] = []
    k = 0
    block = _BLOCK
    while True:
        if (horizon is not None and t >= horizon) or i <= lo_i or i >= hi_i:
            return HittingRecord(t, i / den, stop.kind.value)
        if t >= budget:
            return HittingRecord(t, i / den, BUDGET_EXHAUSTED)
        if k == len(u):
            # short runs are common, so start small and grow
            u = rng.random(block).tolist()
            block = min(2 * block, _MAX_BLOCK)
            k = 0
        x = u[k]
        k += 1
        t += 1
        q = i * (den - i) / dd
        if x < q:
            i = min(i + step, ceil_)
        elif x < 2 * q:
            i = max(i - step, floor)


def _simulate_umda(spec, stop, rng, budget, start) -> HittingRecord:
    D = spec.margins
    den = spec.denominator
    mu = spec.mu
    scale = den // mu
    floor = mu if D else 0
    ceil_ = den - floor
    lo_i, hi_i = _grid_thresholds(stop, den, D)
    horizon = _horizon(stop)
    binomial = rng.binomial
    t = 0
    x = Fraction(start).limit_denominator(10**9) * den
    if x.denominator != 1:
        # odd mu: 1/2 is not on the grid, but one step lands on it
        low, high = stop.bounds(D)
        if (low is not None and x / den <= low) or (high is not None and x / den >= high) or horizon == 0:
            return HittingRecord(0, float(start), stop.kind.value)
        if budget == 0:
            return HittingRecord(0, float(start), BUDGET_EXHAUSTED)
        t = 1
        i = binomial(mu, float(start)) * scale
        if D:
            i = min(max(i, floor), ceil_)
    else:
        i = int(x)
    while True:
        if (horizon is not None and t >= horizon) or i <= lo_i or i >= hi_i:
            return HittingRecord(t, i / den, stop.kind.value)
        if t >= budget:
            return HittingRecord(t, i / den, BUDGET_EXHAUSTED)
        t += 1
        i = binomial(mu, i / den) * scale
        if D:
            i = min(max(i, floor), ceil_)


def _simulate_pbil(spec, stop, rng, budget, start) -> HittingRecord:
    D = spec.margins
    mu = spec.mu
    m_lo, m_hi = (1 / D, 1 - 1 / D) if D else (0.0, 1.0)
    lo, hi = _float_thresholds(stop, D)
    horizon = _horizon(stop)
    binomial = rng.binomial
    p = float(start)
    t = 0
    while True:
        if (horizon is not None and t >= horizon) or p <= lo or p >= hi:
            return HittingRecord(t, p, stop.kind.value)
        if t >= budget:
            return HittingRecord(t, p, BUDGET_EXHAUSTED)
        t += 1
        rho = spec.rate(t)
        p = (1 - rho) * p + rho * binomial(mu, p) / mu
        if D:
            p = min(max(p, m_lo), m_hi)


def _simulate_runaway(spec, stop, rng, budget, start) -> HittingRecord:
    """First ``t`` from which the frequency runs away.

    ``p_t`` runs away from ``t`` on if ``p_t <= c rho / mu`` and every later
    sample of the bit is a zero (or symmetrically near one).  A candidate time
    is kept until a sample contradicts it; the run stops once
    :func:`certify_runaway` bounds the chance of a later contradiction by
    ``epsilon``.
    """
    if spec.kind != "pbil" or spec.margins is not None:
        raise InvalidSpecError("run-away applies to PBIL-type processes without margins")
    if spec.schedule is None and spec.rho >= 1:
        raise InvalidSpecError("run-away needs rho < 1; use absorption for the UMDA")
    mu = spec.mu
    rho_min = spec.min_rate
    rho_max = max(spec.schedule) if spec.schedule is not None else spec.rho
    thr = stop.c * rho_max / mu
    eps = stop.epsilon
    binomial = rng.binomial
    p = float(start)
    t = 0
    cand_t, cand_p, side = None, None, 0

    def enter(p):
        if p <= thr:
            return -1
        if p >= 1 - thr:
            return 1
        return 0

    side = enter(p)
    if side:
        cand_t, cand_p = 0, p
    while True:
        if cand_t is not None and certify_runaway(p, mu, rho_min, eps):
            return HittingRecord(cand_t, cand_p, stop.kind.value, certified=True)
        if t >= budget:
            return HittingRecord(t, p, BUDGET_EXHAUSTED)
        t += 1
        rho = spec.rate(t)
        y = binomial(mu, p)
        p = (1 - rho) * p + rho * y / mu
        if cand_t is not None and ((side < 0 and y > 0) or (side > 0 and y < mu)):
            cand_t = None
        if cand_t is None:
            side = enter(p)
            if side:
                cand_t, cand_p = t, p
