"""Stopping rules for single-frequency trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .errors import InvalidSpecError


class StopKind(str, Enum):
    ABSORPTION = "absorption"
    EXIT_MIDDLE = "exit_middle"
    MARGIN_HIT = "margin_hit"
    RUNAWAY = "runaway"
    HORIZON = "horizon"
    BELOW = "below"
    ABOVE = "above"


BUDGET_EXHAUSTED = "budget_exhausted"


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**12)


@dataclass(frozen=True)
class StoppingRule:
    """When to stop following a frequency ``p_t``.

    ``exit_middle`` fires once ``p_t <= lo`` or ``p_t >= hi``; ``below`` and
    ``above`` are the one-sided versions used for bits with a preference.
    ``runaway`` is only understood by the reduced PBIL process.
    """

    kind: StopKind
    lo: Fraction = Fraction(1, 4)
    hi: Fraction = Fraction(3, 4)
    level: Fraction = Fraction(1, 4)
    c: float = 0.6
    epsilon: float = 1e-9
    horizon: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", StopKind(self.kind))
        object.__setattr__(self, "lo", _as_fraction(self.lo))
        object.__setattr__(self, "hi", _as_fraction(self.hi))
        object.__setattr__(self, "level", _as_fraction(self.level))
        if not (0 <= self.lo < self.hi <= 1):
            raise InvalidSpecError(f"need 0 <= lo < hi <= 1, got lo={self.lo}, hi={self.hi}")
        if not (0 <= self.level <= 1):
            raise InvalidSpecError(f"level must lie in [0, 1], got {self.level}")
        if self.kind is StopKind.RUNAWAY:
            if not (0.5 < self.c < 1 / math.sqrt(2)):
                raise InvalidSpecError(f"c must lie in (1/2, 1/sqrt 2), got {self.c}")
            if not (0 < self.epsilon < 1):
                raise InvalidSpecError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.horizon < 0:
            raise InvalidSpecError("horizon must be non-negative")

    @classmethod
    def absorption(cls) -> StoppingRule:
        return cls(StopKind.ABSORPTION)

    @classmethod
    def exit_middle(cls, lo=Fraction(1, 4), hi=Fraction(3, 4)) -> StoppingRule:
        return cls(StopKind.EXIT_MIDDLE, lo=lo, hi=hi)

    @classmethod
    def margin_hit(cls) -> StoppingRule:
        return cls(StopKind.MARGIN_HIT)

    @classmethod
    def runaway(cls, c: float = 0.6, epsilon: float = 1e-9) -> StoppingRule:
        return cls(StopKind.RUNAWAY, c=c, epsilon=epsilon)

    @classmethod
    def at_horizon(cls, horizon: int) -> StoppingRule:
        return cls(StopKind.HORIZON, horizon=horizon)

    @classmethod
    def below(cls, level=Fraction(1, 4)) -> StoppingRule:
        return cls(StopKind.BELOW, level=level)

    @classmethod
    def above(cls, level=Fraction(3, 4)) -> StoppingRule:
        return cls(StopKind.ABOVE, level=level)

    def bounds(self, margin_dim: int | None = None) -> tuple[Fraction | None, Fraction | None]:
        """Closed stopping region as ``(p <= low) or (p >= high)``; ``None`` means never."""
        k = self.kind
        if k is StopKind.ABSORPTION:
            return Fraction(0), Fraction(1)
        if k is StopKind.EXIT_MIDDLE:
            return self.lo, self.hi
        if k is StopKind.MARGIN_HIT:
            if margin_dim is None:
                raise InvalidSpecError("margin_hit requires margins to be enabled")
            return Fraction(1, margin_dim), 1 - Fraction(1, margin_dim)
        if k is StopKind.BELOW:
            return self.level, None
        if k is StopKind.ABOVE:
            return None, self.level
        return None, None

    def fires(self, p, t: int, margin_dim: int | None = None) -> bool:
        if self.kind is StopKind.HORIZON:
            return t >= self.horizon
        if self.kind is StopKind.RUNAWAY:
            raise InvalidSpecError("run-away is decided by the reduced PBIL process only")
        low, high = self.bounds(margin_dim)
        return (low is not None and p <= low) or (high is not None and p >= high)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is StopKind.EXIT_MIDDLE:
            d.update(lo=str(self.lo), hi=str(self.hi))
        elif self.kind in (StopKind.BELOW, StopKind.ABOVE):
            d["level"] = str(self.level)
        elif self.kind is StopKind.RUNAWAY:
            d.update(c=self.c, epsilon=self.epsilon)
        elif self.kind is StopKind.HORIZON:
            d["horizon"] = self.horizon
        return d

    @classmethod
    def from_dict(cls, d: dict) -> StoppingRule:
        allowed = {"kind", "lo", "hi", "level", "c", "epsilon", "horizon"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown stopping-rule keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("lo", "hi", "level"):
            if key in kw:
                kw[key] = Fraction(kw[key])
        return cls(**kw)
