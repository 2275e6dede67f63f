import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinesde import DomainError, InvalidArgumentError
from onlinesde.catalog import build, family_for
from onlinesde.ergodicity import (
    Histogram,
    common_edges,
    default_bins,
    hellinger_distance,
    histograms,
    lyapunov_constants,
    lyapunov_expression,
    mixing_time_estimate,
    moment_bound_check,
    tv_decay_estimate,
    tv_distance,
)
from onlinesde.models import FamilyParams, SdeModel
from onlinesde.risk import sample_invariant

# brentq on the same scalar expression (tools/compute_oracles.py)
LYAP_1_1_1_1_1 = dict(R1=1.9001014827854712, E1=0.25, E2=21.401726401022245)
LYAP_0_HALF_1_1_1 = dict(R1=5.484046671450983, E1=0.1875, E2=18.265615770469207)

OU = build("ou")


def test_lyapunov_frozen_values():
    k = lyapunov_constants(1, 1, 1, 1, 1)
    for name, value in LYAP_1_1_1_1_1.items():
        assert getattr(k, name) == pytest.approx(value, rel=1e-8)
    assert k.E1 > 0 and k.E2 > 0
    k0 = lyapunov_constants(0, 0.5, 1, 1, 1)
    for name, value in LYAP_0_HALF_1_1_1.items():
        assert getattr(k0, name) == pytest.approx(value, rel=1e-8)


@pytest.mark.parametrize("args", [(1, 1, 1, 1, 1), (0, 0.5, 1, 1, 1), (0.5, 2, 1.5, 0.7, 3), (0, 1.9, 1, 1, 2)])
def test_radius_grid_invariant(args):
    k = lyapunov_constants(*args)
    r = np.linspace(k.R1, 10 * k.R1, 2001)
    assert np.all(lyapunov_expression(r, *args) <= -k.E1 + 1e-12)


def test_lyapunov_domain():
    with pytest.raises(DomainError):
        lyapunov_constants(0, 2.0, 1, 1, 1)
    with pytest.raises(DomainError):
        lyapunov_constants(0, 1.0, 1, 2, 1)  # upper end 2/(2*1) = 1
    with pytest.raises(InvalidArgumentError):
        lyapunov_constants(-1, 1, 1, 1, 1)
    with pytest.raises(InvalidArgumentError):
        lyapunov_constants(1, 1, 1, 1, 0)


@pytest.mark.parametrize("gamma,nu", [(1, 1), (0.5, 0.3), (0, 0.4)])
def test_stronger_dissipation_does_not_decrease_E1(gamma, nu):
    weak = lyapunov_constants(gamma, nu, 1.0, 1.0, 1)
    strong = lyapunov_constants(gamma, nu, 1.0, 0.5, 1)
    assert strong.E1 >= weak.E1 * (1 - 1e-9)


def test_moment_check_ou():
    rep = moment_bound_check(OU.true_model, family_for(OU), [0.0], 2, 10.0, 2000, seed=0)
    assert rep.passed
    assert rep.empirical_sup == pytest.approx(0.5, abs=0.1)
    k = rep.constants
    # (m!/nu^m)(exp(nu sqrt(1 + |x0|^2)) + E2/E1) at x0 = 0
    assert rep.bound == pytest.approx(2 / k.nu**2 * (math.exp(k.nu) + k.E2 / k.E1), rel=1e-14)


def test_moment_check_trivial_cases():
    rep = moment_bound_check(OU.true_model, family_for(OU), [0.5], 0, 2.0, 50, seed=0)
    assert rep.empirical_sup == 1.0 and rep.stderr == 0.0 and rep.bound >= 1
    quiet = SdeModel(lambda x: -x, lambda x: np.zeros(np.shape(x) + (1,)), 1)
    rep = moment_bound_check(quiet, FamilyParams(), [1.0], 2, 2.0, 10, seed=0, check_conditions=False)
    assert rep.empirical_sup == 1.0 and rep.time_of_sup == 0.0
    with pytest.raises(InvalidArgumentError):
        moment_bound_check(quiet, FamilyParams(), [1.0], 2, 2.0, 10, seed=0)


def test_distance_examples():
    p = Histogram.from_masses([1.0, 0.0])
    q = Histogram.from_masses([0.5, 0.5])
    assert tv_distance(p, p) == 0.0 and hellinger_distance(q, q) == 0.0
    assert tv_distance(p, q) == pytest.approx(1.0)
    assert hellinger_distance(p, q) == pytest.approx(math.sqrt((1 - math.sqrt(0.5)) ** 2 + 0.5), rel=1e-14)
    assert hellinger_distance(p, q) == pytest.approx(0.7654, abs=1e-4)
    r = Histogram.from_masses([0.0, 1.0])
    assert tv_distance(p, r) == 2.0
    assert hellinger_distance(p, r) == pytest.approx(math.sqrt(2), rel=1e-15)
    with pytest.raises(InvalidArgumentError):
        tv_distance(p, Histogram.from_masses([0.2, 0.3, 0.5]))


def test_histogram_validation():
    with pytest.raises(InvalidArgumentError):
        Histogram.from_masses([0.5, 0.6])
    with pytest.raises(InvalidArgumentError):
        Histogram.from_masses([1.5, -0.5])
    assert default_bins(1) == 64 and default_bins(2) == 32
    with pytest.raises(InvalidArgumentError):
        default_bins(3)


def test_histograms_share_padded_grid():
    a = np.random.default_rng(0).normal(size=1000)
    b = a + 3
    edges = common_edges([a, b], bins=10)
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    assert edges[0][0] == pytest.approx(lo - 0.1 * (hi - lo))
    p, q = histograms([a, b], bins=10)
    assert p.same_grid(q)
    assert abs(p.masses.sum() - 1) <= 1e-12
    p2, q2 = histograms([np.c_[a, a], np.c_[b, a]])
    assert p2.masses.shape == (32, 32)


masses = st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=12)


@settings(max_examples=300, deadline=None)
@given(masses, st.data())
def test_sandwich_and_symmetry(a, data):
    b = data.draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=len(a), max_size=len(a)))
    a, b = np.array(a) + 1e-3, np.array(b) + 1e-3
    p, q = Histogram.from_masses(a / a.sum()), Histogram.from_masses(b / b.sum())
    tv, hel = tv_distance(p, q), hellinger_distance(p, q)
    assert hel**2 <= tv + 1e-12 and tv <= 2 * hel + 1e-12
    assert tv == tv_distance(q, p) and hel == pytest.approx(hellinger_distance(q, p), abs=1e-15)
    assert 0 <= tv <= 2 and 0 <= hel <= math.sqrt(2) + 1e-12


def test_tv_decay_small_run():
    rep = tv_decay_estimate(OU.true_model, [2.0], [-2.0], [0.0, 0.5, 1.0, 3.0], reps=2000, seed=1)
    assert rep.tv[0] == 2.0
    assert rep.tv[-1] < rep.tv[1] and rep.rate < 0
    text = rep.to_csv()
    assert text.splitlines()[0] == "t,tv,hellinger,reps" and "# fitted_rate=" in text
    again = tv_decay_estimate(OU.true_model, [2.0], [-2.0], [0.0, 0.5, 1.0, 3.0], reps=2000, seed=1)
    np.testing.assert_array_equal(rep.tv, again.tv)
    with pytest.raises(InvalidArgumentError):
        tv_decay_estimate(OU.true_model, [1.0], [1.0], [0.0, 1.0], reps=100)
    with pytest.raises(InvalidArgumentError):
        tv_decay_estimate(OU.true_model, [1.0], [0.0], [1.0, 0.5], reps=100)
    with pytest.raises(InvalidArgumentError):
        tv_decay_estimate(OU.true_model, [1.0], [0.0], [0.0, 0.005], reps=100)


def test_nearby_starts_reach_noise_floor():
    # starting points 1e-6 apart: identical laws up to MC and binning noise
    rep = tv_decay_estimate(OU.true_model, [0.0], [1e-6], [1.0, 2.0], reps=4000, seed=2)
    assert np.all(rep.tv <= 6 * rep.noise_floor)


@pytest.fixture(scope="module")
def ou_invariant():
    return sample_invariant(OU.true_model, 20.0, 20_000, 10, seed=0, chains=20)


def test_mixing_examples(ou_invariant):
    loose = mixing_time_estimate(OU.true_model, [0.0], 1.41, 0.1, 2000, seed=0, invariant=ou_invariant)
    assert loose.tau == 1 and loose.reached
    near = mixing_time_estimate(OU.true_model, [0.0], 0.2, 0.1, 5000, seed=0, invariant=ou_invariant)
    far = mixing_time_estimate(OU.true_model, [10.0], 0.2, 0.1, 5000, seed=0, invariant=ou_invariant)
    assert near.reached and far.reached and far.tau > near.tau
    tight = mixing_time_estimate(OU.true_model, [0.0], 1e-3, 0.1, 500, seed=0, invariant=ou_invariant, cap=20)
    assert not tight.reached and tight.tau is None and "not reached" in tight.summary()
    with pytest.raises(InvalidArgumentError):
        mixing_time_estimate(OU.true_model, [0.0], 1.5, 0.1, 100, invariant=ou_invariant)
