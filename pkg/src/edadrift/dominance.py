"""Stochastic dominance between frequency laws of a preferring bit and a neutral bit.

``a`` dominates ``b`` (``a >= b`` stochastically) when ``Pr[a <= x] <= Pr[b <= x]``
for every ``x``.  One-step laws are computed exactly by enumerating every
population; selection ties are resolved by averaging over all equally likely
choices, which is the law of the uniform random tie-breaking in :mod:`eda`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import partial
from itertools import combinations_with_replacement, product
from typing import Iterator

import numpy as np

from .eda import (
    Algorithm,
    EdaSpec,
    FitnessFunction,
    FrequencyVector,
    all_bitstrings,
    run_eda,
)
from .errors import InfeasibleSizeError
from .parallel import map_replicas
from .rng import stream_family
from .stopping import BUDGET_EXHAUSTED, StoppingRule

ENUMERATION_LIMIT = 16
STATE_LIMIT = 4096
EXACT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    support: tuple
    masses: tuple

    def __post_init__(self):
        if len(self.support) != len(self.masses):
            raise ValueError("support and masses differ in length")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(m < 0 for m in self.masses):
            raise ValueError("masses must be non-negative")
        if abs(float(sum(self.masses)) - 1) > EXACT_TOL:
            raise ValueError(f"masses sum to {float(sum(self.masses))}, not 1")

    @classmethod
    def from_mapping(cls, law: dict) -> DiscreteDistribution:
        items = sorted((x, m) for x, m in law.items() if m != 0)
        return cls(tuple(x for x, _ in items), tuple(m for _, m in items))

    @classmethod
    def from_samples(cls, samples) -> DiscreteDistribution:
        values, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
        return cls(tuple(values.tolist()), tuple((counts / counts.sum()).tolist()))

    def cdf(self, x) -> float:
        return float(sum(m for s, m in zip(self.support, self.masses) if s <= x))

    def mean(self) -> float:
        return float(sum(s * m for s, m in zip(self.support, self.masses)))


@dataclass(frozen=True)
class DominanceVerdict:
    dominates: bool
    max_cdf_violation: float
    witness: float | None


def stochastic_dominance(a: DiscreteDistribution, b: DiscreteDistribution, tol: float = EXACT_TOL) -> DominanceVerdict:
    """Does ``a`` dominate ``b``?  Checks ``CDF_a <= CDF_b + tol`` on the merged support."""
    points = sorted(set(a.support) | set(b.support))
    ca = np.cumsum([float(m) for m in a.masses])
    cb = np.cumsum([float(m) for m in b.masses])
    worst, witness = 0.0, None
    for x in points:
        ia = np.searchsorted(a.support, x, side="right")
        ib = np.searchsorted(b.support, x, side="right")
        diff = float((ca[ia - 1] if ia else 0.0) - (cb[ib - 1] if ib else 0.0))
        if witness is None or diff > worst:
            worst, witness = max(diff, 0.0), float(x)
    return DominanceVerdict(bool(worst <= tol), worst, witness)


def _individual_types(freq: FrequencyVector, fitness: FitnessFunction):
    """Bitstrings with non-zero sampling probability, their probabilities and fitnesses."""
    D = len(freq)
    p = [freq.value(j) for j in range(D)]
    rows, weights = [], []
    for r in all_bitstrings(D):
        w = 1
        for j, b in enumerate(r):
            w = w * (p[j] if b else 1 - p[j])
        if w != 0:
            rows.append(r)
            weights.append(w)
    rows = np.array(rows, dtype=np.int64)
    return rows, weights, fitness.evaluate(rows)


def _sub_counts(counts: list[int], r: int) -> Iterator[tuple[int, ...]]:
    """All vectors ``c' <= counts`` (componentwise) with ``sum c' = r``."""
    if not counts:
        if r == 0:
            yield ()
        return
    head, rest = counts[0], counts[1:]
    for k in range(min(head, r) + 1):
        if r - k <= sum(rest):
            for tail in _sub_counts(rest, r - k):
                yield (k,) + tail


def _selection_law(counts: list[int], fits, mu: int):
    """Law of how many copies of each type enter the ``mu`` best, ties uniform."""
    order = sorted(range(len(counts)), key=lambda i: -fits[i])
    taken = [0] * len(counts)
    left = mu
    pos = 0
    while left > 0:
        level = fits[order[pos]]
        group = [i for i in order[pos:] if fits[i] == level and counts[i]]
        pos += len([i for i in order[pos:] if fits[i] == level])
        g = sum(counts[i] for i in group)
        if g <= left:
            for i in group:
                taken[i] = counts[i]
            left -= g
            continue
        total = math.comb(g, left)
        for sub in _sub_counts([counts[i] for i in group], left):
            pick = list(taken)
            w = 1
            for i, c in zip(group, sub):
                pick[i] = c
                w *= math.comb(counts[i], c)
            yield pick, Fraction(w, total)
        return
    yield taken, Fraction(1)


def exact_onestep_law(spec: EdaSpec, fitness: FitnessFunction, freq: FrequencyVector, t: int = 1) -> dict:
    """Exact law of the whole next frequency vector, keyed by ``FrequencyVector.key()``."""
    D = len(freq)
    if spec.lam * D > ENUMERATION_LIMIT:
        raise InfeasibleSizeError(
            f"lam * D = {spec.lam * D} exceeds {ENUMERATION_LIMIT}; use the Monte Carlo mode"
        )
    rows, weights, fits = _individual_types(freq, fitness)
    law: dict = {}
    if spec.algorithm is Algorithm.CGA:
        step = freq.den // spec.K
        floor = freq.den // D if spec.margins else 0
        for a, b in product(range(len(rows)), repeat=2):
            win, lose = (a, b) if fits[a] >= fits[b] else (b, a)
            num = np.clip(freq.entries + step * (rows[win] - rows[lose]), floor, freq.den - floor)
            key = tuple(num.tolist())
            law[key] = law.get(key, 0) + weights[a] * weights[b]
        return law
    rho, mu, lam = spec.rate(t), spec.mu, spec.lam
    grid = rho == 1 and freq.den is not None
    p = freq.values()
    for combo in combinations_with_replacement(range(len(rows)), lam):
        counts = [combo.count(i) for i in range(len(rows))]
        w = math.factorial(lam)
        for c in counts:
            w //= math.factorial(c)
        for i, c in enumerate(counts):
            w = w * weights[i] ** c
        for pick, share in _selection_law(counts, fits, mu):
            s = np.zeros(D, dtype=np.int64)
            for i, c in enumerate(pick):
                s += c * rows[i]
            if grid:
                num = np.asarray(s, dtype=np.int64)
                if spec.margins:
                    num = np.clip(num * D, mu, mu * D - mu)
                key = tuple(num.tolist())
            else:
                nxt = (1 - rho) * p + rho * np.asarray(s) / mu
                if spec.margins:
                    nxt = np.clip(nxt, 1 / D, 1 - 1 / D)
                key = tuple(nxt.tolist())
            law[key] = law.get(key, 0) + w * share
    return law


def _next_den(spec: EdaSpec, freq: FrequencyVector) -> int | None:
    if spec.algorithm is Algorithm.CGA:
        return freq.den
    return spec.denominator if freq.den is not None else None


def _marginal(law: dict, bit: int, den: int | None) -> DiscreteDistribution:
    out: dict = {}
    for key, m in law.items():
        x = Fraction(key[bit], den) if den is not None else key[bit]
        out[x] = out.get(x, 0) + m
    return DiscreteDistribution.from_mapping(out)


def exact_onestep_distribution(
    spec: EdaSpec, fitness: FitnessFunction, freq: FrequencyVector, bit: int = 0, t: int = 1
) -> DiscreteDistribution:
    """Exact law of bit ``bit``'s frequency after one iteration started from ``freq``."""
    return _marginal(exact_onestep_law(spec, fitness, freq, t), bit, _next_den(spec, freq))


@dataclass(frozen=True)
class DominanceRecord:
    t: int
    dominates: bool
    max_violation: float
    witness: float | None
    slack: float
    mode: str

    def to_dict(self) -> dict:
        return asdict(self)


def _propagate_exact(spec, fitness, start: FrequencyVector, steps: int, bit: int):
    den = start.den
    next_den = _next_den(spec, start)
    state = {start.key(): Fraction(1) if den is not None else 1.0}
    laws = [_marginal(state, bit, den)]
    cache: dict = {}
    for t in range(1, steps + 1):
        nxt: dict = {}
        for key, m in state.items():
            ck = (key, t if spec.schedule is not None else 0)
            if ck not in cache:
                cache[ck] = exact_onestep_law(spec, fitness, FrequencyVector(np.array(key), den), t)
            for k2, m2 in cache[ck].items():
                nxt[k2] = nxt.get(k2, 0) + m * m2
        den = next_den
        if len(nxt) > STATE_LIMIT:
            raise InfeasibleSizeError(f"{len(nxt)} reachable frequency vectors exceed {STATE_LIMIT}")
        state = nxt
        laws.append(_marginal(state, bit, den))
    return laws


def _mc_bit_path(spec, fitness, start, steps, bit, seed, stream, r):
    rng = stream_family(seed, stream).stream(r)
    tr = run_eda(spec, fitness, StoppingRule.at_horizon(steps), rng, budget=steps, track=bit, initial=start)
    return tr.bit_path(bit)


def dkw_slack(n: int, m: int, alpha: float) -> float:
    """One-sided two-sample slack: each empirical CDF is off by at most this at level ``alpha/2``."""
    c = math.log(2 / alpha) / 2
    return math.sqrt(c / n) + math.sqrt(c / m)


def multistep_dominance_check(
    spec_f: EdaSpec,
    fitness_f: FitnessFunction,
    spec_g: EdaSpec,
    fitness_g: FitnessFunction,
    steps: int,
    mode: str = "exact",
    u0: FrequencyVector | None = None,
    v0: FrequencyVector | None = None,
    bit: int = 0,
    replicas: int = 10**5,
    master_seed: int = 0,
    alpha: float = 1e-3,
    workers: int | None = None,
) -> list[DominanceRecord]:
    """Check that bit ``bit`` under ``f`` dominates the same bit under ``g`` for ``t = 0..steps``."""
    u0 = u0 if u0 is not None else FrequencyVector.initial(spec_f)
    v0 = v0 if v0 is not None else FrequencyVector.initial(spec_g)
    records = []
    if mode == "exact":
        a = _propagate_exact(spec_f, fitness_f, u0, steps, bit)
        b = _propagate_exact(spec_g, fitness_g, v0, steps, bit)
        for t in range(steps + 1):
            v = stochastic_dominance(a[t], b[t], EXACT_TOL)
            records.append(DominanceRecord(t, v.dominates, v.max_cdf_violation, v.witness, EXACT_TOL, mode))
        return records
    if mode != "montecarlo":
        raise ValueError(f"mode must be 'exact' or 'montecarlo', got {mode!r}")
    pa = np.array(map_replicas(partial(_mc_bit_path, spec_f, fitness_f, u0, steps, bit, master_seed, 0), replicas, workers))
    pb = np.array(map_replicas(partial(_mc_bit_path, spec_g, fitness_g, v0, steps, bit, master_seed, 1), replicas, workers))
    slack = dkw_slack(replicas, replicas, alpha)
    for t in range(steps + 1):
        a_t, b_t = np.sort(pa[:, t]), np.sort(pb[:, t])
        pts = np.union1d(a_t, b_t)
        diff = (np.searchsorted(a_t, pts, "right") - np.searchsorted(b_t, pts, "right")) / replicas
        k = int(np.argmax(diff))
        worst = max(float(diff[k]), 0.0)
        records.append(DominanceRecord(t, worst <= slack, worst, float(pts[k]), slack, mode))
    return records


def search_counterexamples(
    spec: EdaSpec,
    fitness_f: FitnessFunction,
    fitness_g: FitnessFunction,
    pairs,
    bit: int = 0,
) -> list[tuple[FrequencyVector, FrequencyVector, DominanceVerdict]]:
    """One-step dominance failures over start pairs ``(u0, v0)``.

    Meant for probing the case where both functions have a preferring bit, for
    which one-step dominance is not guaranteed.
    """
    found = []
    for u0, v0 in pairs:
        verdict = stochastic_dominance(
            exact_onestep_distribution(spec, fitness_f, u0, bit),
            exact_onestep_distribution(spec, fitness_g, v0, bit),
        )
        if not verdict.dominates:
            found.append((u0, v0, verdict))
    return found


def _censored_low_hit(spec, fitness, level, horizon, bit, seed, stream, r):
    rng = stream_family(seed, stream).stream(r)
    tr = run_eda(spec, fitness, StoppingRule.below(level), rng, budget=horizon, track=bit, record=False)
    return horizon if tr.trigger == BUDGET_EXHAUSTED else tr.iterations


def compare_low_hitting_times(
    spec: EdaSpec,
    fitness_pref: FitnessFunction,
    fitness_neutral: FitnessFunction,
    level=Fraction(1, 4),
    horizon: int = 1000,
    replicas: int = 10**4,
    master_seed: int = 0,
    bit: int = 0,
    workers: int | None = None,
) -> dict:
    """Mean of ``min(T0, horizon)`` with ``T0`` the first time ``p_t <= level``.

    Dominance of the preferring bit implies its censored mean is at least the
    neutral one; the report carries the pooled standard error of the difference.
    """
    a = np.array(map_replicas(partial(_censored_low_hit, spec, fitness_pref, level, horizon, bit, master_seed, 0), replicas, workers), dtype=float)
    b = np.array(map_replicas(partial(_censored_low_hit, spec, fitness_neutral, level, horizon, bit, master_seed, 1), replicas, workers), dtype=float)
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    return {
        "mean_preferring": float(a.mean()),
        "mean_neutral": float(b.mean()),
        "pooled_stderr": se,
        "consistent": bool(a.mean() >= b.mean() - 3 * se),
    }
