"""Experiment harness: hitting-time campaigns, scaling fits, tail-bound checks, parameter advice."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import partial
from typing import Sequence, TextIO

import numpy as np
from scipy.stats import beta

from . import markov
from .eda import EdaSpec, fitness_by_name, run_eda
from .errors import DomainError, ExperimentFailed, InvalidSpecError
from .neutral import HittingRecord, NeutralProcessSpec, simulate_until
from .parallel import map_replicas
from .rng import stream_family
from .stopping import BUDGET_EXHAUSTED, StopKind, StoppingRule

SAMPLE_HEADER = ["replica_index", "stopping_time", "terminal_frequency", "trigger"]
EXHAUSTED_FLAG_SHARE = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of a hitting-time campaign.

    Either ``process`` (the reduced neutral-bit chain) or ``eda`` plus
    ``fitness`` (the full algorithm, tracking bit ``track``) is set.
    ``sweep`` is ``(parameter name, values)`` for scaling campaigns.
    """

    stop: StoppingRule
    process: NeutralProcessSpec | None = None
    eda: EdaSpec | None = None
    fitness: str | None = None
    track: int = 0
    replicas: int = 1000
    master_seed: int = 0
    budget: int | None = None
    sweep: tuple[str, tuple] | None = None

    def __post_init__(self):
        if (self.process is None) == (self.eda is None):
            raise InvalidSpecError("set exactly one of 'process' and 'eda'")
        if self.eda is not None and self.fitness is None:
            raise InvalidSpecError("an EDA experiment needs a fitness function")
        if self.replicas < 1:
            raise InvalidSpecError(f"replicas must be >= 1, got {self.replicas}")
        if self.budget is not None and self.budget < 0:
            raise InvalidSpecError("budget must be non-negative")
        if self.sweep is not None:
            name, values = self.sweep
            object.__setattr__(self, "sweep", (name, tuple(values)))
            for v in values:
                self.at(name, v)

    def at(self, name: str, value) -> ExperimentConfig:
        """Copy with one process/EDA parameter replaced (validated)."""
        if self.process is not None:
            if name not in ("mu", "rho", "K"):
                raise InvalidSpecError(f"cannot sweep {name!r}")
            return replace(self, process=replace(self.process, **{name: value}), sweep=None)
        if name not in ("mu", "lam", "rho", "K", "dim"):
            raise InvalidSpecError(f"cannot sweep {name!r}")
        return replace(self, eda=replace(self.eda, **{name: value}), sweep=None)

    def resolved_budget(self) -> int:
        if self.budget is not None:
            return self.budget
        if self.stop.kind is StopKind.HORIZON:
            return self.stop.horizon
        spec = self.process or NeutralProcessSpec.from_eda(self.eda)
        return spec.default_budget()

    def to_dict(self) -> dict:
        d = {"stop": self.stop.to_dict(), "replicas": self.replicas, "master_seed": self.master_seed}
        if self.process is not None:
            d["process"] = self.process.to_dict()
        else:
            d.update(eda=self.eda.to_dict(), fitness=self.fitness, track=self.track)
        if self.budget is not None:
            d["budget"] = self.budget
        if self.sweep is not None:
            d["sweep"] = {"param": self.sweep[0], "values": list(self.sweep[1])}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        allowed = {"stop", "process", "eda", "fitness", "track", "replicas", "master_seed", "budget", "sweep"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown experiment keys: {sorted(unknown)}")
        kw = dict(d)
        kw["stop"] = StoppingRule.from_dict(d["stop"])
        if "process" in d:
            kw["process"] = NeutralProcessSpec.from_dict(d["process"])
        if "eda" in d:
            kw["eda"] = EdaSpec.from_dict(d["eda"])
        if "sweep" in d:
            kw["sweep"] = (d["sweep"]["param"], tuple(d["sweep"]["values"]))
        return cls(**kw)


@dataclass(frozen=True)
class HittingSummary:
    """``n`` counts all replicas; the statistics use the ``completed`` ones."""

    n: int
    completed: int
    mean: float
    stderr: float
    ci95: tuple[float, float]
    median: float
    budget_exhausted: int
    flagged: bool = False
    samples_path: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    constant: float
    r_squared: float

    def to_dict(self) -> dict:
        return asdict(self)


def _replica(config: ExperimentConfig, budget: int, stream: tuple, r: int) -> HittingRecord:
    rng = stream_family(config.master_seed, *stream).stream(r)
    if config.process is not None:
        return simulate_until(config.process, config.stop, rng, budget)
    fitness = fitness_by_name(config.fitness, config.track)
    tr = run_eda(config.eda, fitness, config.stop, rng, budget, track=config.track, record=False)
    return HittingRecord(tr.iterations, float(tr.final.values()[config.track]), tr.trigger)


def run_replicas(config: ExperimentConfig, workers: int | None = None, stream: tuple = ()) -> list[HittingRecord]:
    fn = partial(_replica, config, config.resolved_budget(), stream)
    return map_replicas(fn, config.replicas, workers)


def summarize(records: Sequence[HittingRecord], extra: dict | None = None) -> HittingSummary:
    """Statistics over replicas that did not exhaust their budget."""
    times = np.array([r.stopping_time for r in records if r.trigger != BUDGET_EXHAUSTED], dtype=float)
    exhausted = len(records) - len(times)
    if len(times) == 0:
        raise ExperimentFailed(f"all {len(records)} replicas exhausted their iteration budget")
    n = len(times)
    mean = float(times.mean())
    se = float(times.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return HittingSummary(
        n=len(records),
        completed=n,
        mean=mean,
        stderr=se,
        ci95=(mean - 1.96 * se, mean + 1.96 * se),
        median=float(np.median(times)),
        budget_exhausted=exhausted,
        flagged=exhausted > EXHAUSTED_FLAG_SHARE * len(records),
        extra=dict(extra or {}),
    )


def run_hitting_experiment(config: ExperimentConfig, workers: int | None = None) -> HittingSummary:
    if config.sweep is not None:
        raise InvalidSpecError("use run_sweep for configurations with a sweep")
    return summarize(run_replicas(config, workers))


def run_sweep(config: ExperimentConfig, workers: int | None = None) -> list[tuple[object, HittingSummary]]:
    """One campaign per sweep value; sweep point ``k`` uses streams ``(seed, k, r)``."""
    if config.sweep is None:
        raise InvalidSpecError("configuration has no sweep")
    name, values = config.sweep
    out = []
    for k, v in enumerate(values):
        out.append((v, summarize(run_replicas(config.at(name, v), workers, stream=(k,)))))
    return out


def write_samples_csv(records: Sequence[HittingRecord], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for i, r in enumerate(records):
        w.writerow([i, r.stopping_time, repr(float(r.terminal_frequency)), r.trigger])


def fit_scaling_law(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line through ``(log x, log y)``: ``y ~ constant * x^exponent``."""
    if len(points) < 3:
        raise DomainError(f"need at least 3 points, got {len(points)}")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("scaling fits need positive parameters and times")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ScalingFit(float(slope), float(math.exp(intercept)), min(r2, 1.0))


def exact_hitting_time(algo: str, size: int, stop: StoppingRule) -> float:
    """Exact expected hitting time from ``1/2`` for the cGA (``size = K``) or UMDA (``size = mu``)."""
    if algo == "cga":
        kernel = markov.build_cga_kernel(size)
    elif algo == "umda":
        kernel = markov.build_umda_kernel(size)
    else:
        raise InvalidSpecError(f"exact chains exist for 'cga' and 'umda', not {algo!r}")
    start = markov.start_state(kernel)
    if stop.kind is StopKind.ABSORPTION:
        return markov.expected_absorption_time(kernel, start)
    if stop.kind is StopKind.EXIT_MIDDLE:
        return markov.exit_time_from_interval(kernel, stop.lo, stop.hi, start)
    if stop.kind in (StopKind.BELOW, StopKind.ABOVE):
        low, high = stop.bounds()
        mask = np.array(
            [(low is not None and kernel.value(i) <= low) or (high is not None and kernel.value(i) >= high)
             for i in range(kernel.n + 1)]
        )
        mask[list(kernel.absorbing)] = True
        return markov.expected_hitting_times(kernel, mask, start)
    raise InvalidSpecError(f"no exact solve for stopping rule {stop.kind.value!r}")


def exact_scaling(algo: str, sizes: Sequence[int], stop: StoppingRule) -> tuple[list[tuple[int, float]], ScalingFit]:
    points = [(s, exact_hitting_time(algo, s, stop)) for s in sizes]
    return points, fit_scaling_law(points)


@dataclass(frozen=True)
class TailRow:
    horizon: int
    bound: float
    empirical: float | None = None
    upper99: float | None = None
    lower99: float | None = None
    exact: float | None = None
    violated: bool = False


@dataclass(frozen=True)
class TailReport:
    process: dict
    gamma: float
    replicas: int
    rows: list[TailRow]

    @property
    def violations(self) -> list[int]:
        return [r.horizon for r in self.rows if r.violated]

    def to_dict(self) -> dict:
        return {
            "process": self.process,
            "gamma": self.gamma,
            "replicas": self.replicas,
            "violations": self.violations,
            "rows": [asdict(r) for r in self.rows],
        }


def tail_bound(spec: NeutralProcessSpec, gamma: float, T: int) -> float:
    """``2 exp(-gamma^2 mu / (2 rho^2 T))`` for PBIL, ``2 exp(-gamma^2 K^2 / (2 T))`` for the cGA."""
    if spec.kind == "cga":
        scale = spec.K**2
    else:
        rho = max(spec.schedule) if spec.schedule is not None else spec.rho
        scale = spec.mu / rho**2
    return 2 * math.exp(-(gamma**2) * scale / (2 * T))


def clopper_pearson(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """One-sided ``level`` lower and upper confidence limits for a binomial proportion."""
    a = 1 - level
    lower = 0.0 if k == 0 else float(beta.ppf(a, k, n - k + 1))
    upper = 1.0 if k == n else float(beta.ppf(level, k + 1, n - k))
    return lower, upper


def _exact_kernel(spec: NeutralProcessSpec):
    if spec.margins is not None:
        return None
    if spec.kind == "cga":
        return markov.build_cga_kernel(spec.K)
    if spec.schedule is None and spec.rho == 1 and spec.mu % 2 == 0:
        return markov.build_umda_kernel(spec.mu)
    return None


def validate_tail_bound(
    spec: NeutralProcessSpec,
    gamma: float,
    horizons: Sequence[int],
    replicas: int,
    master_seed: int = 0,
    workers: int | None = None,
    level: float = 0.99,
) -> TailReport:
    """Compare ``Pr[exists t <= T: |p_t - 1/2| >= gamma]`` with the deviation bound.

    A horizon is flagged when the exact probability (if a kernel exists)
    exceeds the bound, or when the Monte Carlo lower confidence limit does.
    """
    if not 0 < gamma <= 0.5:
        raise DomainError(f"gamma must lie in (0, 1/2], got {gamma}")
    horizons = sorted(set(int(T) for T in horizons))
    if not horizons or horizons[0] < 1:
        raise DomainError("horizons must be >= 1")
    g = Fraction(gamma).limit_denominator(10**9)
    stop = StoppingRule.exit_middle(Fraction(1, 2) - g, min(Fraction(1, 2) + g, Fraction(1)))
    exit_times = None
    if replicas > 0:
        config = ExperimentConfig(stop, process=spec, replicas=replicas, master_seed=master_seed, budget=horizons[-1])
        recs = run_replicas(config, workers)
        exit_times = np.sort([r.stopping_time for r in recs if r.trigger != BUDGET_EXHAUSTED])
    kernel = _exact_kernel(spec)
    cdf = None
    if kernel is not None:
        cdf = markov.hitting_time_distribution(
            kernel, markov.start_state(kernel), markov.deviation_targets(kernel, g), horizons[-1]
        )
    rows = []
    for T in horizons:
        bound = tail_bound(spec, gamma, T)
        row = {"horizon": T, "bound": bound}
        violated = False
        if exit_times is not None:
            k = int(np.searchsorted(exit_times, T, side="right"))
            lo, hi = clopper_pearson(k, replicas, level)
            row.update(empirical=k / replicas, lower99=lo, upper99=hi)
            violated |= lo > bound
        if cdf is not None:
            row["exact"] = float(cdf[T])
            violated |= cdf[T] > bound
        rows.append(TailRow(**row, violated=bool(violated)))
    return TailReport(spec.to_dict(), float(gamma), replicas, rows)


@dataclass(frozen=True)
class Advice:
    parameter: str
    value: int
    threshold: float
    iterations: float

    def to_dict(self) -> dict:
        return asdict(self)


def advise_parameters(
    algorithm: str,
    budget_evals: float,
    dim: int,
    gamma: float = 0.25,
    delta: float = 0.1,
    lam: int | None = None,
    rho: float = 1.0,
) -> Advice:
    """Smallest ``K`` (cGA) or ``mu`` (PBIL/UMDA) keeping every neutral bit within ``1/2 +- gamma``.

    Inverts the deviation bound with a union bound over the ``dim`` bits at
    failure probability ``delta`` over ``T`` iterations: ``T = F/2`` for the
    cGA, ``T = F/lam`` otherwise.
    """
    if budget_evals < 2:
        raise DomainError(f"budget must be >= 2 evaluations, got {budget_evals}")
    if dim < 1:
        raise DomainError(f"dimension must be >= 1, got {dim}")
    if not 0 < gamma <= 0.5:
        raise DomainError(f"gamma must lie in (0, 1/2], got {gamma}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    log_term = math.log(2 * dim / delta)
    algorithm = algorithm.lower()
    if algorithm == "cga":
        T = budget_evals / 2
        thr = math.sqrt(2 * T * log_term) / gamma
        K = math.ceil(thr)
        return Advice("K", K + (K % 2), thr, T)
    if algorithm not in ("pbil", "umda"):
        raise DomainError(f"algorithm must be cga, pbil or umda, got {algorithm!r}")
    if lam is None or lam < 1:
        raise DomainError("PBIL/UMDA advice needs the offspring population size lam")
    if algorithm == "umda":
        rho = 1.0
    if not 0 < rho <= 1:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    T = budget_evals / lam
    thr = 2 * rho**2 * T * log_term / gamma**2
    return Advice("mu", max(1, math.ceil(thr)), thr, T)


def runaway_campaign(
    mu: int,
    rho: float,
    c: float = 0.6,
    epsilon: float = 1e-9,
    replicas: int = 10**4,
    master_seed: int = 0,
    workers: int | None = None,
    budget: int | None = None,
    stream: tuple = (),
) -> tuple[HittingSummary, list[HittingRecord]]:
    """Run-away times of the neutral PBIL frequency, with certification bias at most ``epsilon``."""
    if not rho < 1:
        raise DomainError("run-away campaigns need rho < 1; the UMDA uses absorption")
    spec = NeutralProcessSpec.pbil(mu, rho)
    config = ExperimentConfig(StoppingRule.runaway(c, epsilon), process=spec, replicas=replicas,
                              master_seed=master_seed, budget=budget)
    recs = run_replicas(config, workers, stream)
    return summarize(recs, {"mu": mu, "rho": rho, "c": c, "epsilon": epsilon}), recs


def runaway_scaling(
    mus: Sequence[int],
    rhos: Sequence[float],
    replicas: int,
    master_seed: int = 0,
    c: float = 0.6,
    epsilon: float = 1e-9,
    workers: int | None = None,
) -> tuple[list[HittingSummary], ScalingFit | None, ScalingFit | None]:
    """Campaigns over a ``mu`` grid and a ``rho`` grid (one of them a single value).

    Returns the summaries and the fitted exponents against ``mu`` and ``rho``
    (``None`` for a grid with a single value).
    """
    summaries = []
    k = 0
    for mu in mus:
        for rho in rhos:
            s, _ = runaway_campaign(mu, rho, c, epsilon, replicas, master_seed, workers, stream=(k,))
            summaries.append(s)
            k += 1
    fit_mu = fit_rho = None
    if len(mus) >= 3 and len(rhos) == 1:
        fit_mu = fit_scaling_law([(s.extra["mu"], s.mean) for s in summaries])
    if len(rhos) >= 3 and len(mus) == 1:
        fit_rho = fit_scaling_law([(s.extra["rho"], s.mean) for s in summaries])
    return summaries, fit_mu, fit_rho
