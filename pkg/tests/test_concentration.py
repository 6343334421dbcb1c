import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinklap.concentration import (
    ALPHA_GRID, DEVIATION_HEADER, ConditionResult, Explicit, PowerLaw, TailProfile,
    centred_summands, check_as_condition, check_probability_condition, deviation_experiment,
    estimate_tail_alpha, scale_factor,
)
from kinklap.geometry import Box
from kinklap.operators import KernelParams, gauss_operator
from kinklap.sampling import CoordinateSum, UniformDensity, sample_uniform

CUBE = Box.unit(3)
F = CoordinateSum(3)


def test_tail_profile_validation():
    TailProfile(2.0, 1.0, 1.0)
    for args in [(0.0, 1, 1), (2.5, 1, 1), (1.0, 0, 1), (1.0, 1, -1)]:
        with pytest.raises(ValueError):
            TailProfile(*args)


def test_schedule_validation():
    with pytest.raises(ValueError):
        PowerLaw(1.0, -0.1)
    with pytest.raises(ValueError):
        Explicit((10, 100), (0.1, 0.2))
    with pytest.raises(ValueError):
        Explicit((10, 100), (0.1, 1.5))
    with pytest.raises(ValueError):
        Explicit((100, 10), (0.2, 0.1))


# -- condition checkers -----------------------------------------------------

def test_probability_condition_examples():
    res = check_probability_condition(PowerLaw(1.0, 1 / 8, 3))
    assert res.holds and res.witness["growth_exponent"] == pytest.approx(3 / 16)
    boundary = check_probability_condition(PowerLaw(1.0, 1 / 5, 3))
    assert boundary.status == "fails"
    assert not check_probability_condition(PowerLaw(1.0, 1 / 4, 3))


def test_experiment_grid_scale_factor():
    assert scale_factor(1e8, 0.05, 3) == pytest.approx(5.59, rel=1e-3)
    assert scale_factor(1e8, 0.05, 3) == pytest.approx(5.56, rel=1e-2)
    # lower endpoint: the computed value is 0.1
    assert scale_factor(1e8, 0.01, 3) == pytest.approx(0.1, rel=1e-12)


def test_as_condition_examples():
    assert check_as_condition(PowerLaw(1.0, 1 / 8, 3), 2.0).holds
    for alpha in (0.25, 1.0, 2.0):
        assert check_as_condition(PowerLaw(0.7, 1 / 5, 3), alpha).status == "fails"
    with pytest.raises(ValueError):
        check_as_condition(PowerLaw(1.0, 1 / 8, 3), 2.5)


def test_explicit_non_power_law_is_inconclusive():
    ns = np.array([10 ** k for k in range(3, 8)])
    ts = ns ** (-1 / 5) * np.log(ns) / 20
    sched = Explicit(tuple(ns), tuple(ts), 3)
    res = check_as_condition(sched, 1.0)
    assert res.status == "inconclusive"
    assert res.witness["reason"] == "non-power-law schedule"
    evidence = check_probability_condition(sched)
    assert isinstance(evidence, ConditionResult)
    assert "values" in evidence.witness


def test_explicit_power_law_is_recognized():
    ns = (1e3, 1e4, 1e5, 1e6)
    sched = Explicit(ns, tuple(0.5 * n ** (-1 / 8) for n in ns), 3)
    law = sched.as_power_law()
    assert law.beta == pytest.approx(1 / 8) and law.c0 == pytest.approx(0.5)
    assert check_probability_condition(sched).holds
    assert check_as_condition(sched, 2.0).holds


@given(st.floats(0.01, 0.6), st.floats(0.05, 2.0), st.integers(1, 10))
@settings(max_examples=200)
def test_as_condition_implies_probability_condition(beta, alpha, d):
    sched = PowerLaw(1.0, beta, d)
    if check_as_condition(sched, alpha).holds:
        assert check_probability_condition(sched).holds


# -- tail exponents ---------------------------------------------------------

def test_alpha_exponential():
    z = np.random.default_rng(1).standard_exponential(100_000)
    assert 0.8 <= estimate_tail_alpha(z).alpha <= 1.2


def test_alpha_gaussian():
    z = np.random.default_rng(2).standard_normal(100_000)
    assert 1.7 <= estimate_tail_alpha(z).alpha <= 2.0


def test_alpha_bounded_field_on_cube():
    pts = sample_uniform(CUBE, 10_000, seed=3).points
    prof = estimate_tail_alpha(F.value(pts), bounded=True)
    assert prof.alpha == 2.0 and "bounded" in prof.note


@pytest.mark.parametrize("seed", [4, 5])
def test_alpha_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    for z in (rng.standard_exponential(20_000), rng.standard_normal(20_000),
              rng.laplace(size=20_000)):
        assert estimate_tail_alpha(z).alpha == estimate_tail_alpha(z - 7.3).alpha


def test_alpha_degenerate_and_small_inputs():
    prof = estimate_tail_alpha(np.full(2000, 3.0))
    assert prof.K == 1.0 and prof.C == math.inf
    with pytest.raises(ValueError):
        estimate_tail_alpha(np.zeros(999))


def test_alpha_grid():
    assert ALPHA_GRID == (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)


# -- centring and deviation experiments ------------------------------------

@pytest.mark.parametrize("x, t", [((0.5, 0.5, 0.5), 0.05), ((0.5, 0.5, 1.0), 0.03),
                                  ((0.0, 0.0, 0.0), 0.02)])
def test_centred_summands_have_zero_mean(x, t):
    samples = sample_uniform(CUBE, 400_000, seed=8)
    cont = gauss_operator(CUBE, UniformDensity(1.0), F, x, KernelParams(t)).value
    z = centred_summands(samples, F, x, t, cont)
    assert abs(z.mean()) <= 4 * z.std(ddof=1) / math.sqrt(len(z))


def test_deviation_table_single_trial():
    table = deviation_experiment(CUBE, UniformDensity(1.0), F, (0.5, 0.5, 0.5),
                                 PowerLaw(1.0, 1 / 8, 3), [1000, 2000], trials=1, seed=3)
    text = table.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(DEVIATION_HEADER)
    assert len(lines) == 3
    for row in table.rows:
        assert row.q50 == row.q90 == row.q99 == row.deviations[0]
    assert table.warning is None


def test_deviation_experiment_is_deterministic():
    args = (CUBE, UniformDensity(1.0), F, (0.5, 0.5, 0.5), PowerLaw(1.0, 1 / 4, 3),
            [1000, 3000], 4)
    a = deviation_experiment(*args, seed=11)
    b = deviation_experiment(*args, seed=11)
    assert a.to_csv() == b.to_csv()
    assert a.warning and "fails" in a.warning
    assert all(r.condition1 == "fails" for r in a.rows)


def test_envelope_shape_is_normalized():
    table = deviation_experiment(CUBE, UniformDensity(1.0), F, (0.5, 0.5, 0.5),
                                 PowerLaw(1.0, 1 / 8, 3), [1000], trials=2, seed=1)
    env = table.envelope(np.array([0.0, 0.1, 1.0]), table.rows[0])
    assert env[0] == 1.0 and env[0] > env[1] > env[2]
