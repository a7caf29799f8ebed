"""The n-Bernoulli-lambda-EDA framework with PBIL, UMDA, lambda-MMAS, CE and cGA updates.

Frequencies are stored as exact integer numerators whenever the reachable
set is a grid: the cGA moves on multiples of ``1/K`` (shifted by ``1/D``
with margins) and the UMDA produces multiples of ``1/mu``.  PBIL, lambda-MMAS
and CE with a learning rate below one use floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import InvalidSpecError
from .rng import RandomStream
from .stopping import BUDGET_EXHAUSTED, StopKind, StoppingRule


class Algorithm(str, Enum):
    PBIL = "pbil"
    UMDA = "umda"
    LAMBDA_MMAS = "lambda-mmas"
    CGA = "cga"
    CE = "ce"


@dataclass(frozen=True)
class EdaSpec:
    """Algorithm identity and parameters.

    ``schedule`` is the CE learning-rate table: iteration ``t`` uses
    ``schedule[t - 1]`` and the last entry repeats forever.
    """

    algorithm: Algorithm
    dim: int = 1
    mu: int = 1
    lam: int = 1
    rho: float = 1.0
    schedule: tuple[float, ...] | None = None
    K: int | None = None
    margins: bool = False

    def __post_init__(self):
        algo = Algorithm(self.algorithm)
        object.__setattr__(self, "algorithm", algo)
        if self.dim < 1:
            raise InvalidSpecError(f"dim must be >= 1, got {self.dim}")
        if self.margins and self.dim < 2:
            raise InvalidSpecError("margins [1/D, 1-1/D] need D >= 2")
        if algo is Algorithm.CGA:
            self._check_cga()
            return
        if self.lam < 1 or self.mu < 1:
            raise InvalidSpecError("mu and lam must be positive")
        if self.mu > self.lam:
            raise InvalidSpecError(f"mu={self.mu} exceeds lam={self.lam}")
        if algo is Algorithm.UMDA and self.rho != 1:
            raise InvalidSpecError(f"UMDA has rho = 1, got rho={self.rho}")
        if algo is Algorithm.LAMBDA_MMAS and self.mu != 1:
            raise InvalidSpecError(f"lambda-MMAS has mu = 1, got mu={self.mu}")
        if algo is Algorithm.CE:
            if not self.schedule:
                raise InvalidSpecError("CE needs a non-empty learning-rate schedule")
            object.__setattr__(self, "schedule", tuple(float(r) for r in self.schedule))
            rates = self.schedule
        else:
            if self.schedule is not None:
                raise InvalidSpecError("only CE takes a learning-rate schedule")
            rates = (self.rho,)
        if not all(0 < r <= 1 for r in rates):
            raise InvalidSpecError(f"learning rates must lie in (0, 1], got {rates}")

    def _check_cga(self):
        K = self.K
        if K is None or int(K) != K or K < 1:
            raise InvalidSpecError(f"cGA needs a positive integer K, got {K}")
        object.__setattr__(self, "K", int(K))
        object.__setattr__(self, "lam", 2)
        object.__setattr__(self, "mu", 1)
        if self.margins:
            D = self.dim
            # 1 - 2/D must be an even multiple of 1/K so that 1/2 is reachable
            if (K * (D - 2)) % D or ((K * (D - 2)) // D) % 2:
                raise InvalidSpecError(
                    f"cGA with margins needs 1 - 2/D to be an even multiple of 1/K (K={K}, D={D})"
                )
        elif K % 2:
            raise InvalidSpecError(f"cGA without margins needs an even K, got K={K}")

    def rate(self, t: int) -> float:
        """Learning rate used in iteration ``t >= 1``."""
        if self.schedule is None:
            return self.rho
        return self.schedule[min(t, len(self.schedule)) - 1]

    @property
    def denominator(self) -> int | None:
        """Common denominator of the exact frequency grid, or ``None`` for floats."""
        if self.algorithm is Algorithm.CGA:
            return self.K * self.dim if self.margins else self.K
        if self.schedule is None and self.rho == 1:
            return self.mu * self.dim if self.margins else self.mu
        return None

    def to_dict(self) -> dict:
        d = {"algorithm": self.algorithm.value, "dim": self.dim, "margins": self.margins}
        if self.algorithm is Algorithm.CGA:
            d["K"] = self.K
        else:
            d.update(mu=self.mu, lam=self.lam)
            if self.schedule is not None:
                d["schedule"] = list(self.schedule)
            else:
                d["rho"] = self.rho
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EdaSpec:
        allowed = {"algorithm", "dim", "mu", "lam", "rho", "schedule", "K", "margins"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown EDA spec keys: {sorted(unknown)}")
        kw = dict(d)
        if kw.get("schedule") is not None:
            kw["schedule"] = tuple(kw["schedule"])
        return cls(**kw)


@dataclass(frozen=True)
class FrequencyVector:
    """Sampling frequencies ``p`` in ``[0, 1]^D``.

    With ``den`` set, ``entries`` holds integer numerators and ``p_j =
    entries[j] / den``; otherwise ``entries`` holds floats.
    """

    entries: np.ndarray
    den: int | None = None

    def __post_init__(self):
        if self.den is None:
            arr = np.asarray(self.entries, dtype=float)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError("frequencies must lie in [0, 1]")
        else:
            arr = np.asarray(self.entries, dtype=np.int64)
            if np.any(arr < 0) or np.any(arr > self.den):
                raise ValueError("numerators must lie in [0, den]")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def _trusted(cls, entries: np.ndarray, den: int | None = None) -> FrequencyVector:
        # skips validation; for update rules whose output is clipped already
        entries.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "entries", entries)
        object.__setattr__(obj, "den", den)
        return obj

    @classmethod
    def initial(cls, spec: EdaSpec) -> FrequencyVector:
        den = spec.denominator
        if den is None or den % 2:
            # odd mu: 1/2 is off the 1/mu grid, so keep floats
            return cls(np.full(spec.dim, 0.5))
        return cls(np.full(spec.dim, den // 2, dtype=np.int64), den)

    @classmethod
    def from_values(cls, values, spec: EdaSpec) -> FrequencyVector:
        """Build a vector for ``spec`` from floats or Fractions, placing them on its grid."""
        den = spec.denominator
        if den is None:
            return cls(np.array([float(v) for v in values]))
        nums = []
        for v in values:
            x = Fraction(v).limit_denominator(10**9) * den
            if x.denominator != 1:
                raise InvalidSpecError(f"frequency {v} is not a multiple of 1/{den}")
            nums.append(int(x))
        return cls(np.array(nums, dtype=np.int64), den)

    def values(self) -> np.ndarray:
        if self.den is None:
            return self.entries
        return self.entries / self.den

    def value(self, j: int):
        """Entry ``j``: exact ``Fraction`` on a grid, ``float`` otherwise."""
        if self.den is None:
            return float(self.entries[j])
        return Fraction(int(self.entries[j]), self.den)

    def key(self) -> tuple:
        return tuple(self.entries.tolist())

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class FitnessFunction:
    """Fitness to maximise.

    ``evaluator`` maps a ``(n, D)`` 0/1 array to ``n`` fitness values.
    ``bit`` names the distinguished bit for neutral and weak-preference functions.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    bit: int | None = None

    def evaluate(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(np.atleast_2d(rows)), dtype=float)

    def __call__(self, x) -> float:
        return float(self.evaluate(np.asarray(x, dtype=np.int64).reshape(1, -1))[0])


def _others_sum(rows, bit):
    return rows.sum(axis=1) - rows[:, bit]


def _neutral(bit, rows):
    return _others_sum(rows, bit)


def _onemax(rows):
    return rows.sum(axis=1)


def _leading_ones(rows):
    return np.cumprod(rows, axis=1).sum(axis=1)


def _weak_one(bit, rows):
    if rows.shape[1] == 1:
        return rows[:, bit].astype(float)
    nxt = (bit + 1) % rows.shape[1]
    return _others_sum(rows, bit) + rows[:, bit] * rows[:, nxt]


def _weak_zero(bit, rows):
    if rows.shape[1] == 1:
        return (1 - rows[:, bit]).astype(float)
    nxt = (bit + 1) % rows.shape[1]
    return _others_sum(rows, bit) + (1 - rows[:, bit]) * rows[:, nxt]


class _Bound:
    """Picklable partial application of a module-level evaluator."""

    def __init__(self, fn, bit):
        self.fn, self.bit = fn, bit

    def __call__(self, rows):
        return self.fn(self.bit, rows)


def neutral(bit: int = 0) -> FitnessFunction:
    """OneMax on all bits except ``bit``, which never influences fitness."""
    return FitnessFunction("neutral", _Bound(_neutral, bit), bit)


def onemax() -> FitnessFunction:
    return FitnessFunction("onemax", _onemax)


def leading_ones() -> FitnessFunction:
    return FitnessFunction("leadingones", _leading_ones)


def weak_prefer_one(bit: int = 0) -> FitnessFunction:
    """A one in ``bit`` earns a point only when the next bit (cyclically) is also one.

    With ``D = 1`` the function is the bit itself.
    """
    return FitnessFunction("weak_prefer_one", _Bound(_weak_one, bit), bit)


def weak_prefer_zero(bit: int = 0) -> FitnessFunction:
    return FitnessFunction("weak_prefer_zero", _Bound(_weak_zero, bit), bit)


def custom(fn: Callable[[np.ndarray], float], name: str = "custom") -> FitnessFunction:
    """Wrap a single-bitstring function."""
    return FitnessFunction(name, lambda rows: np.array([fn(r) for r in rows], dtype=float))


FITNESS_FACTORIES = {
    "neutral": neutral,
    "onemax": lambda bit=0: onemax(),
    "leadingones": lambda bit=0: leading_ones(),
    "weak_prefer_one": weak_prefer_one,
    "weak_prefer_zero": weak_prefer_zero,
}


def fitness_by_name(name: str, bit: int = 0) -> FitnessFunction:
    try:
        return FITNESS_FACTORIES[name](bit)
    except KeyError:
        raise InvalidSpecError(
            f"unknown fitness {name!r}; choose from {sorted(FITNESS_FACTORIES)}"
        ) from None


def all_bitstrings(D: int) -> np.ndarray:
    idx = np.arange(2**D)
    return ((idx[:, None] >> np.arange(D - 1, -1, -1)) & 1).astype(np.int64)


def preference(fitness: FitnessFunction, D: int, bit: int) -> str:
    """Classify ``bit`` of ``fitness`` on ``{0,1}^D`` by full enumeration.

    Returns ``"neutral"``, ``"weak_one"``, ``"weak_zero"`` or ``"none"``.
    """
    rows = all_bitstrings(D)
    zero = rows[rows[:, bit] == 0]
    one = zero.copy()
    one[:, bit] = 1
    f0, f1 = fitness.evaluate(zero), fitness.evaluate(one)
    if np.array_equal(f0, f1):
        return "neutral"
    if np.all(f0 <= f1):
        return "weak_one"
    if np.all(f0 >= f1):
        return "weak_zero"
    return "none"


@dataclass(frozen=True)
class Population:
    individuals: np.ndarray
    fitnesses: np.ndarray

    def __len__(self) -> int:
        return len(self.fitnesses)


def sample_population(
    freq: FrequencyVector, spec: EdaSpec, fitness: FitnessFunction, rng: RandomStream
) -> Population:
    """Draw ``spec.lam`` independent bitstrings, bit ``j`` being one with probability ``p_j``."""
    p = freq.values()
    x = (rng.random((spec.lam, len(p))) < p).astype(np.int64)
    return Population(x, fitness.evaluate(x))


def select_mu_best(pop: Population, mu: int, rng: RandomStream) -> Population:
    """The ``mu`` fittest individuals; equal fitness is broken uniformly at random."""
    lam = len(pop)
    if mu > lam:
        raise InvalidSpecError(f"cannot select mu={mu} out of lam={lam}")
    if mu == lam:
        return pop
    perm = rng.permutation(lam)
    order = perm[np.argsort(-pop.fitnesses[perm], kind="stable")][:mu]
    return Population(pop.individuals[order], pop.fitnesses[order])


def pbil_update(
    freq: FrequencyVector, selected: Population, rho: float, mu: int, margins: bool = False
) -> FrequencyVector:
    """``p'_j = (1 - rho) p_j + (rho / mu) * (ones among the selected in bit j)``, then clamp."""
    if len(selected) != mu:
        raise ValueError(f"expected {mu} selected individuals, got {len(selected)}")
    s = selected.individuals.sum(axis=0)
    D = len(freq)
    if rho == 1 and freq.den is not None:
        if not margins:
            return FrequencyVector._trusted(s.astype(np.int64), mu)
        den = mu * D
        return FrequencyVector._trusted(np.clip(s * D, mu, den - mu).astype(np.int64), den)
    p = (1 - rho) * freq.values() + (rho / mu) * s
    if margins:
        p = np.clip(p, 1 / D, 1 - 1 / D)
    return FrequencyVector._trusted(np.clip(p, 0.0, 1.0))


def cga_update(
    freq: FrequencyVector,
    first: np.ndarray,
    second: np.ndarray,
    first_is_better: bool,
    K: int,
    margins: bool = False,
) -> FrequencyVector:
    """Move each bit by ``1/K`` towards the winner where winner and loser differ."""
    den = freq.den
    if den is None or den % K:
        raise ValueError("cGA frequencies must be stored on a grid that contains 1/K steps")
    step = den // K
    win, lose = (first, second) if first_is_better else (second, first)
    num = freq.entries + step * (np.asarray(win, dtype=np.int64) - np.asarray(lose, dtype=np.int64))
    if margins:
        floor = den // len(freq)
        num = np.clip(num, floor, den - floor)
        offset = floor
    else:
        num = np.clip(num, 0, den)
        offset = 0
    if np.any((num - offset) % step):
        raise RuntimeError("cGA frequency left the 1/K grid")
    return FrequencyVector._trusted(num, den)


def eda_step(
    freq: FrequencyVector, spec: EdaSpec, fitness: FitnessFunction, rng: RandomStream, t: int
) -> FrequencyVector:
    """One iteration ``t >= 1`` of the framework."""
    pop = sample_population(freq, spec, fitness, rng)
    if spec.algorithm is Algorithm.CGA:
        f = pop.fitnesses
        # first sample wins fitness ties
        return cga_update(freq, pop.individuals[0], pop.individuals[1], f[0] >= f[1], spec.K, spec.margins)
    chosen = select_mu_best(pop, spec.mu, rng)
    return pbil_update(freq, chosen, spec.rate(t), spec.mu, spec.margins)


@dataclass
class Trace:
    frequencies: list[FrequencyVector]
    iterations: int
    trigger: str

    @property
    def final(self) -> FrequencyVector:
        return self.frequencies[-1]

    def bit_path(self, j: int = 0) -> np.ndarray:
        return np.array([f.values()[j] for f in self.frequencies])


def run_eda(
    spec: EdaSpec,
    fitness: FitnessFunction,
    stop: StoppingRule,
    rng: RandomStream,
    budget: int = 10**6,
    track: int = 0,
    initial: FrequencyVector | None = None,
    record: bool = True,
) -> Trace:
    """Run the EDA from ``p^0 = (1/2, ..., 1/2)`` until ``stop`` fires on bit ``track``.

    An exhausted ``budget`` is reported through ``Trace.trigger``, not raised.
    With ``record=False`` only the initial and final vectors are kept.
    """
    if stop.kind is StopKind.RUNAWAY:
        raise InvalidSpecError("run-away stopping is only available for the reduced process")
    margin_dim = spec.dim if spec.margins else None
    freq = initial if initial is not None else FrequencyVector.initial(spec)
    frames = [freq]
    # grid values and thresholds are both correctly rounded, so float comparison is exact here
    low, high = (None, None) if stop.kind is StopKind.HORIZON else stop.bounds(margin_dim)
    low = float(low) if low is not None else -1.0
    high = float(high) if high is not None else 2.0
    t = 0
    while True:
        p = float(freq.entries[track]) if freq.den is None else int(freq.entries[track]) / freq.den
        if stop.kind is StopKind.HORIZON and t >= stop.horizon or p <= low or p >= high:
            trigger = stop.kind.value
            break
        if t >= budget:
            trigger = BUDGET_EXHAUSTED
            break
        t += 1
        freq = eda_step(freq, spec, fitness, rng, t)
        if record:
            frames.append(freq)
    if not record and frames[-1] is not freq:
        frames.append(freq)
    return Trace(frames, t, trigger)


def with_params(spec: EdaSpec, **changes) -> EdaSpec:
    return replace(spec, **changes)
