"""Exact Markov-chain oracle for the neutral-bit frequency chains.

States ``0..n`` stand for the frequencies ``0, 1/n, ..., 1``.  Expected
hitting times solve ``(I - Q) h = 1`` on the states that have not stopped yet;
hitting-time distributions iterate the kernel on the stopped chain.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np
import scipy.linalg
from scipy.stats import binom

from .errors import InvalidSpecError, SingularSystemError

RESIDUAL_TOL = 1e-8
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix on the grid ``{0, 1/n, ..., 1}``.

    ``exact_rows`` carries rational row entries when they are known exactly
    (the cGA); ``matrix`` is the dense float version used by the solvers.
    """

    n: int
    matrix: np.ndarray
    absorbing: frozenset[int]
    label: str = ""
    tridiagonal: bool = False
    exact_rows: tuple[dict[int, Fraction], ...] | None = None

    def value(self, i: int) -> Fraction:
        return Fraction(i, self.n)

    def state_index(self, value) -> int:
        """Index of the grid state holding frequency ``value``."""
        x = Fraction(value).limit_denominator(10**9) * self.n
        if x.denominator != 1 or not 0 <= x <= self.n:
            hint = ""
            if self.label.startswith("umda") and Fraction(value) == Fraction(1, 2):
                hint = " (the UMDA chain starts at 1/2 only for even mu)"
            raise InvalidSpecError(f"frequency {value} is not a state of the 1/{self.n} grid{hint}")
        return int(x)

    def rows(self) -> Iterable[tuple[int, list[tuple[int, float]]]]:
        for i in range(self.n + 1):
            nz = np.nonzero(self.matrix[i])[0]
            yield i, [(int(j), float(self.matrix[i, j])) for j in nz]

    def to_csv(self, fh: TextIO) -> None:
        """Write ``state,target,probability`` triples (frequencies as exact fractions)."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "target", "probability"])
        for i, row in self.rows():
            for j, prob in row:
                w.writerow([str(self.value(i)), str(self.value(j)), repr(prob)])


def build_cga_kernel(K: int) -> TransitionKernel:
    if K < 2 or int(K) != K:
        raise InvalidSpecError(f"K must be an integer >= 2, got {K}")
    K = int(K)
    rows = []
    for i in range(K + 1):
        move = Fraction(i * (K - i), K * K)
        row = {i: 1 - 2 * move}
        if move:
            row[i - 1] = move
            row[i + 1] = move
        rows.append(row)
    P = np.zeros((K + 1, K + 1))
    for i, row in enumerate(rows):
        for j, prob in row.items():
            P[i, j] = float(prob)
    return TransitionKernel(K, P, frozenset({0, K}), f"cga(K={K})", True, tuple(rows))


def build_umda_kernel(mu: int) -> TransitionKernel:
    if mu < 1 or int(mu) != mu:
        raise InvalidSpecError(f"mu must be a positive integer, got {mu}")
    mu = int(mu)
    k = np.arange(mu + 1)
    P = np.empty((mu + 1, mu + 1))
    for i in range(mu + 1):
        row = binom.pmf(k, mu, i / mu)
        P[i] = row / row.sum()
    return TransitionKernel(mu, P, frozenset({0, mu}), f"umda(mu={mu})")


def _reachable(P: np.ndarray, start: int, stopped: np.ndarray) -> np.ndarray:
    """States reachable from ``start`` without passing through a stopped state."""
    seen = np.zeros(len(P), dtype=bool)
    seen[start] = True
    todo = deque([start])
    while todo:
        i = todo.popleft()
        if stopped[i]:
            continue
        for j in np.nonzero(P[i])[0]:
            if not seen[j]:
                seen[j] = True
                todo.append(j)
    return seen & ~stopped


def _solve(A: np.ndarray, b: np.ndarray, tridiagonal: bool) -> np.ndarray:
    if tridiagonal:
        ab = np.zeros((3, len(b)))
        ab[0, 1:] = np.diag(A, 1)
        ab[1] = np.diag(A)
        ab[2, :-1] = np.diag(A, -1)
        x = scipy.linalg.solve_banded((1, 1), ab, b)
        solve = lambda r: scipy.linalg.solve_banded((1, 1), ab, r)
    else:
        if len(b) > DENSE_LIMIT:
            raise InvalidSpecError(f"{len(b)} transient states exceed the dense limit {DENSE_LIMIT}")
        lu = scipy.linalg.lu_factor(A)
        x = scipy.linalg.lu_solve(lu, b)
        solve = lambda r: scipy.linalg.lu_solve(lu, r)
    for _ in range(5):
        r = b - A @ x
        if np.max(np.abs(r)) <= RESIDUAL_TOL:
            break
        x = x + solve(r)
    return x


def expected_hitting_times(kernel: TransitionKernel, stopped: np.ndarray, start: int) -> float:
    """Expected number of steps until the chain enters ``stopped`` from ``start``."""
    if stopped[start]:
        return 0.0
    P = kernel.matrix
    live = _reachable(P, start, stopped)
    idx = np.nonzero(live)[0]
    # every live state must be able to reach the stopped set
    reverse_ok = np.zeros(len(P), dtype=bool)
    reverse_ok[stopped] = True
    changed = True
    while changed:
        grow = (P[:, reverse_ok].sum(axis=1) > 0) & ~reverse_ok
        changed = bool(grow.any())
        reverse_ok |= grow
    stuck = idx[~reverse_ok[idx]]
    if len(stuck):
        raise SingularSystemError(
            f"{kernel.label}: target unreachable from states "
            f"{[str(kernel.value(i)) for i in stuck[:5]]}; (I - Q) is singular"
        )
    A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
    h = _solve(A, np.ones(len(idx)), kernel.tridiagonal)
    residual = np.max(np.abs(A @ h - 1.0))
    if residual > RESIDUAL_TOL:
        raise SingularSystemError(f"{kernel.label}: residual {residual:.3g} above {RESIDUAL_TOL}")
    return float(h[np.searchsorted(idx, start)])


def expected_absorption_time(kernel: TransitionKernel, start: int) -> float:
    stopped = np.zeros(kernel.n + 1, dtype=bool)
    stopped[list(kernel.absorbing)] = True
    return expected_hitting_times(kernel, stopped, start)


def exit_states(kernel: TransitionKernel, lo, hi) -> np.ndarray:
    """Mask of states outside the open interval ``(lo, hi)`` plus absorbing states."""
    lo, hi = Fraction(lo), Fraction(hi)
    mask = np.array([not (lo < kernel.value(i) < hi) for i in range(kernel.n + 1)])
    mask[list(kernel.absorbing)] = True
    return mask


def exit_time_from_interval(kernel: TransitionKernel, lo, hi, start: int) -> float:
    """Expected first time the chain started at ``start`` leaves the open interval ``(lo, hi)``."""
    if not (Fraction(lo) < kernel.value(start) < Fraction(hi)):
        raise InvalidSpecError(f"start {kernel.value(start)} is not inside ({lo}, {hi})")
    return expected_hitting_times(kernel, exit_states(kernel, lo, hi), start)


def hitting_time_distribution(kernel: TransitionKernel, start: int, targets, horizon: int) -> np.ndarray:
    """``cdf[t] = Pr[T_hit <= t]`` for ``t = 0..horizon`` (index ``t``).

    ``targets`` is an iterable of state indices or a boolean mask.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mask = np.zeros(kernel.n + 1, dtype=bool)
    t_arr = np.asarray(list(targets) if not isinstance(targets, np.ndarray) else targets)
    if t_arr.dtype == bool:
        mask |= t_arr
    elif t_arr.size:
        mask[t_arr.astype(int)] = True
    cdf = np.zeros(horizon + 1)
    if mask[start]:
        cdf[:] = 1.0
        return cdf
    live = ~mask
    Q = kernel.matrix[np.ix_(live, live)]
    into = kernel.matrix[np.ix_(live, mask)].sum(axis=1)
    v = np.zeros(int(live.sum()))
    v[np.searchsorted(np.nonzero(live)[0], start)] = 1.0
    absorbed = 0.0
    for t in range(1, horizon + 1):
        absorbed += float(v @ into)
        v = v @ Q
        cdf[t] = min(absorbed, 1.0)
    return cdf


def deviation_targets(kernel: TransitionKernel, gamma) -> np.ndarray:
    """States with ``|p - 1/2| >= gamma``."""
    g = Fraction(gamma).limit_denominator(10**9)
    half = Fraction(1, 2)
    return np.array([abs(kernel.value(i) - half) >= g for i in range(kernel.n + 1)])


def row_mean_errors(kernel: TransitionKernel) -> np.ndarray:
    """``|sum_j P(i, j) j/n - i/n|`` per row (float)."""
    grid = np.arange(kernel.n + 1) / kernel.n
    return np.abs(kernel.matrix @ grid - grid)


def exact_row_means_preserved(kernel: TransitionKernel) -> bool:
    if kernel.exact_rows is None:
        raise ValueError("kernel has no exact rational rows")
    for i, row in enumerate(kernel.exact_rows):
        if sum(row.values()) != 1:
            return False
        if sum(prob * Fraction(j, kernel.n) for j, prob in row.items()) != Fraction(i, kernel.n):
            return False
    return True


def conditional_variances(kernel: TransitionKernel) -> np.ndarray:
    grid = np.arange(kernel.n + 1) / kernel.n
    return ((grid[None, :] - grid[:, None]) ** 2 * kernel.matrix).sum(axis=1)


def start_state(kernel: TransitionKernel) -> int:
    """Index of ``p = 1/2``."""
    return kernel.state_index(Fraction(1, 2))

