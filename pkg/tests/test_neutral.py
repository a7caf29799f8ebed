from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import binom, chisquare, ks_2samp

from edadrift import markov
from edadrift.errors import InvalidSpecError
from edadrift.neutral import (
    NeutralProcessSpec,
    certify_runaway,
    cga_neutral_step,
    pbil_neutral_step,
    simulate_until,
)
from edadrift.rng import replica_stream
from edadrift.stopping import StoppingRule


def test_absorbing_states_fixed():
    g = replica_stream(1)
    for p in (0.0, 1.0):
        assert all(pbil_neutral_step(p, 5, 0.3, g) == p for _ in range(50))
    for p in (Fraction(0), Fraction(1)):
        assert all(cga_neutral_step(p, 8, g) == p for _ in range(50))


def test_umda_step_is_binomial():
    n, mu = 10**6, 8
    x = pbil_neutral_step(np.full(n, 0.5), mu, 1.0, replica_stream(2))
    counts = np.bincount(np.rint(x * mu).astype(int), minlength=mu + 1)
    expected = n * binom.pmf(np.arange(mu + 1), mu, 0.5)
    assert chisquare(counts, expected).pvalue > 1e-3


def test_pbil_step_mean():
    n, mu, rho, p = 10**6, 16, 0.2, 0.3
    x = pbil_neutral_step(np.full(n, p), mu, rho, replica_stream(3))
    sigma = np.sqrt(rho**2 / mu * p * (1 - p))
    assert abs(x.mean() - p) <= 4 * sigma / np.sqrt(n)


def test_cga_step_at_half():
    n, K = 10**6, 8
    g = replica_stream(4)
    moved = sum(cga_neutral_step(Fraction(1, 2), K, g) != Fraction(1, 2) for _ in range(n))
    assert abs(moved / n - 0.5) <= 4 * np.sqrt(0.25 / n)


def test_cga_step_near_boundary():
    K, n = 8, 10**5
    g = replica_stream(5)
    p = Fraction(1, K)
    steps = [cga_neutral_step(p, K, g) - p for _ in range(n)]
    q = float(p * (1 - p))
    for d in (Fraction(1, K), Fraction(-1, K)):
        share = sum(s == d for s in steps) / n
        assert abs(share - q) <= 4 * np.sqrt(q * (1 - q) / n)


def test_cga_step_rejects_off_grid():
    with pytest.raises(ValueError):
        cga_neutral_step(Fraction(1, 3), 8, replica_stream(0))


class TestCertification:
    def test_boundary_always(self):
        assert certify_runaway(0.0, 100, 0.1, 1e-30)
        assert certify_runaway(1.0, 100, 0.1, 1e-30)

    def test_tiny_frequency(self):
        assert certify_runaway(1e-13, 100, 0.1, 1e-9)
        assert certify_runaway(1 - 1e-13, 100, 0.1, 1e-9)

    def test_moderate_frequency(self):
        assert not certify_runaway(1e-3, 100, 0.1, 1e-9)


class TestSpec:
    def test_round_trip(self):
        for s in (NeutralProcessSpec.cga(8), NeutralProcessSpec.pbil(4, 0.3, margins=5),
                  NeutralProcessSpec.ce(3, [0.5, 0.2])):
            assert NeutralProcessSpec.from_dict(s.to_dict()) == s

    def test_invalid(self):
        with pytest.raises(InvalidSpecError):
            NeutralProcessSpec.cga(7)
        with pytest.raises(InvalidSpecError):
            NeutralProcessSpec("moran")
        with pytest.raises(InvalidSpecError):
            NeutralProcessSpec.from_dict({"kind": "cga", "K": 4, "extra": 1})

    def test_default_budget(self):
        assert NeutralProcessSpec.cga(16).default_budget() == 200 * 256
        assert NeutralProcessSpec.pbil(8, 0.5).default_budget() == 200 * 32


def _times(spec, stop, n, seed=0):
    return np.array([simulate_until(spec, stop, replica_stream(seed, r)).stopping_time for r in range(n)])


def test_cga_k2_absorption_mean():
    t = _times(NeutralProcessSpec.cga(2), StoppingRule.absorption(), 10**5)
    assert abs(t.mean() - 2) <= 0.05


def test_umda_mu1_absorbs_in_one_step():
    assert set(_times(NeutralProcessSpec.umda(1), StoppingRule.absorption(), 200)) == {1}


def test_cga_exit_middle_matches_exact():
    exact = markov.exit_time_from_interval(markov.build_cga_kernel(16), Fraction(1, 4), Fraction(3, 4), 8)
    t = _times(NeutralProcessSpec.cga(16), StoppingRule.exit_middle(), 10**4)
    assert abs(t.mean() / exact - 1) <= 0.05


@pytest.mark.parametrize("spec,kernel", [
    (NeutralProcessSpec.cga(8), markov.build_cga_kernel(8)),
    (NeutralProcessSpec.cga(16), markov.build_cga_kernel(16)),
    (NeutralProcessSpec.umda(8), markov.build_umda_kernel(8)),
    (NeutralProcessSpec.umda(16), markov.build_umda_kernel(16)),
], ids=["cga8", "cga16", "umda8", "umda16"])
def test_absorption_mean_matches_exact(spec, kernel):
    n = 10**5
    t = _times(spec, StoppingRule.absorption(), n, seed=9)
    exact = markov.expected_absorption_time(kernel, markov.start_state(kernel))
    assert abs(t.mean() - exact) <= 3 * t.std(ddof=1) / np.sqrt(n)


def test_margins_keep_frequency_inside():
    spec = NeutralProcessSpec.cga(8, margins=4)
    for r in range(200):
        rec = simulate_until(spec, StoppingRule.at_horizon(300), replica_stream(11, r))
        assert 0.25 <= rec.terminal_frequency <= 0.75
    spec = NeutralProcessSpec.pbil(4, 0.6, margins=4)
    for r in range(200):
        rec = simulate_until(spec, StoppingRule.at_horizon(300), replica_stream(12, r))
        assert 0.25 <= rec.terminal_frequency <= 0.75


def test_margin_hit_fires_at_margin():
    rec = simulate_until(NeutralProcessSpec.umda(2, margins=4), StoppingRule.margin_hit(), replica_stream(3))
    assert rec.trigger == "margin_hit" and rec.terminal_frequency in (0.25, 0.75)


def test_budget_exhausted():
    rec = simulate_until(NeutralProcessSpec.cga(64), StoppingRule.absorption(), replica_stream(0), budget=5)
    assert rec.trigger == "budget_exhausted" and rec.stopping_time == 5


def test_symmetry_of_terminal_law():
    n = 2 * 10**4
    spec = NeutralProcessSpec.pbil(6, 0.35)
    a = np.array([simulate_until(spec, StoppingRule.at_horizon(15), replica_stream(21, r)).terminal_frequency
                  for r in range(n)])
    b = np.array([simulate_until(spec, StoppingRule.at_horizon(15), replica_stream(22, r)).terminal_frequency
                  for r in range(n)])
    assert ks_2samp(np.round(a, 12), np.round(1 - b, 12)).pvalue > 1e-3
    up = _times(NeutralProcessSpec.cga(12), StoppingRule.exit_middle(), n, seed=23)
    assert abs(up.mean() - _times(NeutralProcessSpec.cga(12), StoppingRule.exit_middle(), n, seed=24).mean()) < 2


class TestRunaway:
    def test_rejects_umda(self):
        with pytest.raises(InvalidSpecError):
            simulate_until(NeutralProcessSpec.umda(4), StoppingRule.runaway(), replica_stream(0))

    def test_records_are_certified(self):
        spec = NeutralProcessSpec.pbil(8, 0.5)
        for r in range(100):
            rec = simulate_until(spec, StoppingRule.runaway(0.6, 1e-9), replica_stream(5, r))
            assert rec.trigger == "runaway" and rec.certified
            # the recorded frequency is inside the run-away zone
            q = min(rec.terminal_frequency, 1 - rec.terminal_frequency)
            assert q <= 0.6 * 0.5 / 8 + 1e-15

    def test_before_absorption_like_exit(self):
        # a run-away starts no earlier than the first exit from the middle range
        spec = NeutralProcessSpec.pbil(8, 0.5)
        for r in range(100):
            ra = simulate_until(spec, StoppingRule.runaway(), replica_stream(6, r))
            ex = simulate_until(spec, StoppingRule.exit_middle(), replica_stream(6, r))
            assert ra.stopping_time >= ex.stopping_time
