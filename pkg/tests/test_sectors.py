import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from kinklap.geometry import FullSector, HalfSpaceSector, OrthantSector, PredicateSector
from kinklap.sectors import (
    NoClosedForm, closed_form_moments, mixed_moment, moment_tensor, monte_carlo_moments,
)
from kinklap.specfun import sphere_area


def orthant(d, k):
    return OrthantSector(tuple(map(tuple, np.eye(d)[:k])))


def unit_ball_volume(m):
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def test_full_sector_d3():
    mom = closed_form_moments(FullSector(3))
    assert mom.measure == pytest.approx(4 * math.pi, rel=1e-15)
    assert np.all(mom.first_moment == 0)
    assert np.allclose(mom.second_moment, 4 * math.pi / 3 * np.eye(3), rtol=1e-15, atol=0)


def test_half_space_first_moment_is_disk_area():
    mom = closed_form_moments(HalfSpaceSector((0.0, 0.0, 1.0)))
    assert np.allclose(mom.first_moment, (0, 0, math.pi), rtol=1e-15, atol=1e-15)
    assert mom.measure == pytest.approx(2 * math.pi, rel=1e-15)
    assert np.allclose(mom.second_moment, 2 * math.pi / 3 * np.eye(3), atol=1e-15)


def test_half_space_first_moment_mc_oracle():
    mc = monte_carlo_moments(HalfSpaceSector((0.0, 0.0, 1.0)), samples=10 ** 7, seed=42)
    assert abs(mc.first_moment[2] - math.pi) < 4 * mc.stderr.first_moment[2]


def test_orthant_vertex_first_moment():
    mom = closed_form_moments(orthant(3, 3))
    assert np.allclose(mom.first_moment, [math.pi / 4] * 3, rtol=1e-15)
    mc = monte_carlo_moments(orthant(3, 3), samples=10 ** 6, seed=7)
    assert np.all(np.abs(mc.first_moment - math.pi / 4) < 4 * mc.stderr.first_moment)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 8])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_orthant_formulas(d, k):
    if k > d:
        return
    mom = closed_form_moments(orthant(d, k))
    full = sphere_area(d)
    assert mom.measure == pytest.approx(full / 2 ** k, rel=1e-14)
    half_coeff = unit_ball_volume(d - 1)
    assert np.allclose(mom.first_moment[:k], half_coeff / 2 ** (k - 1), rtol=1e-14)
    assert np.allclose(mom.first_moment[k:], 0, atol=1e-15)
    assert np.allclose(np.diag(mom.second_moment), full / d / 2 ** k, rtol=1e-14)


def test_orthant_cross_moment_two_angle_reduction():
    # d = 3, k = 2: theta_1 theta_2 over {theta_1, theta_2 >= 0} in spherical coordinates
    def integrand(phi, polar):
        s = math.sin(polar)
        return (s * math.cos(phi)) * (s * math.sin(phi)) * s

    value, _ = integrate.dblquad(integrand, 0, math.pi, 0, math.pi / 2, epsabs=1e-13)
    mom = closed_form_moments(orthant(3, 2))
    assert mom.second_moment[0, 1] == pytest.approx(value, rel=1e-10)
    assert mom.second_moment[0, 2] == pytest.approx(0.0, abs=1e-15)


def test_half_space_d5_first_moment():
    nu = (0, 0, 0, 0, 1.0)
    mom = closed_form_moments(HalfSpaceSector(nu))
    assert mom.first_moment[4] == pytest.approx(math.pi ** 2 / 2, rel=1e-14)
    mc = monte_carlo_moments(HalfSpaceSector(nu), samples=10 ** 6, seed=3)
    assert abs(mc.first_moment[4] - math.pi ** 2 / 2) < 3 * mc.stderr.first_moment[4]
    # spherical-coordinate oracle: int_0^{pi/2} cos(a) sin(a)^3 da * |S^3|
    value, _ = integrate.quad(lambda a: math.cos(a) * math.sin(a) ** 3, 0, math.pi / 2)
    assert mom.first_moment[4] == pytest.approx(value * sphere_area(4), rel=1e-12)


def test_predicate_has_no_closed_form():
    with pytest.raises(NoClosedForm, match="monte_carlo"):
        closed_form_moments(PredicateSector(3, lambda th: th[:, 0] > 0))


def test_monte_carlo_full_sector_measure():
    mc = monte_carlo_moments(FullSector(3), samples=10 ** 6, seed=1)
    assert mc.measure == pytest.approx(4 * math.pi, rel=1e-13)
    assert mc.source == "monte_carlo" and mc.samples == 10 ** 6 and mc.seed == 1


def test_monte_carlo_degenerate_sector():
    cusp = PredicateSector(3, lambda th: th[:, 0] == 2.0, measure_zero=True)
    mc = monte_carlo_moments(cusp, samples=5000, seed=0)
    assert mc.degenerate and mc.measure == 0.0
    assert not np.any(mc.first_moment) and not np.any(mc.second_moment)


def test_monte_carlo_needs_samples():
    with pytest.raises(ValueError):
        monte_carlo_moments(FullSector(3), samples=999)


def test_monte_carlo_is_deterministic():
    a = monte_carlo_moments(orthant(4, 2), samples=150_000, seed=9)
    b = monte_carlo_moments(orthant(4, 2), samples=150_000, seed=9)
    assert a.measure == b.measure
    assert np.array_equal(a.second_moment, b.second_moment)


@pytest.mark.parametrize("sector", [FullSector(4), HalfSpaceSector((0.6, 0.8, 0.0)),
                                    orthant(5, 3)])
def test_invariants_closed_form(sector):
    mom = closed_form_moments(sector)
    m = mom.second_moment
    assert np.array_equal(m, m.T)
    assert np.min(np.linalg.eigvalsh(m)) >= -1e-14
    assert np.trace(m) == pytest.approx(mom.measure, rel=1e-14)
    assert np.linalg.norm(mom.first_moment) <= mom.measure


@pytest.mark.parametrize("sector", [orthant(3, 2), HalfSpaceSector((0.0, 1.0, 0.0))])
def test_invariants_monte_carlo(sector):
    mc = monte_carlo_moments(sector, samples=200_000, seed=2)
    trace_err = math.sqrt(np.sum(np.diag(mc.stderr.second_moment) ** 2))
    assert abs(np.trace(mc.second_moment) - mc.measure) <= 3 * trace_err + 1e-12
    assert np.linalg.norm(mc.first_moment) <= mc.measure + 3 * mc.stderr.measure
    assert np.min(np.linalg.eigvalsh(mc.second_moment)) >= 0


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_reflection_covariance(v):
    nu = np.asarray(v)
    if np.linalg.norm(nu) < 1e-3:
        return
    nu /= np.linalg.norm(nu)
    a = closed_form_moments(HalfSpaceSector(tuple(nu)))
    b = closed_form_moments(HalfSpaceSector(tuple(-nu)))
    assert np.allclose(a.first_moment, -b.first_moment, atol=1e-14)
    assert np.allclose(a.second_moment, b.second_moment, atol=1e-14)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_additivity_of_half_spaces(v):
    nu = np.asarray(v)
    if np.linalg.norm(nu) < 1e-3:
        return
    nu /= np.linalg.norm(nu)
    a = closed_form_moments(HalfSpaceSector(tuple(nu)))
    b = closed_form_moments(HalfSpaceSector(tuple(-nu)))
    full = closed_form_moments(FullSector(3))
    assert a.measure + b.measure == pytest.approx(full.measure, rel=1e-14)
    assert np.allclose(a.first_moment + b.first_moment, 0, atol=1e-14)
    assert np.allclose(a.second_moment + b.second_moment, full.second_moment, atol=1e-13)


def test_rotation_covariance_monte_carlo():
    rot = stats.special_ortho_group.rvs(3, random_state=17)
    normals = rot @ np.eye(3)[:2].T  # columns: rotated normals
    rotated = PredicateSector(3, lambda th: np.all(th @ normals >= 0, axis=1))
    base = closed_form_moments(orthant(3, 2))
    mc = monte_carlo_moments(rotated, samples=10 ** 6, seed=4)
    assert abs(mc.measure - base.measure) < 4 * mc.stderr.measure
    assert np.all(np.abs(mc.first_moment - rot @ base.first_moment)
                  < 4 * mc.stderr.first_moment + 1e-3)
    assert np.all(np.abs(mc.second_moment - rot @ base.second_moment @ rot.T)
                  < 4 * mc.stderr.second_moment + 1e-3)


@given(st.integers(0, 3), st.lists(st.floats(-1, 1), min_size=9, max_size=9))
@settings(max_examples=30)
def test_closed_form_rotation_covariance(k, entries):
    a = np.asarray(entries).reshape(3, 3) + 3 * np.eye(3)
    rot, _ = np.linalg.qr(a)
    if k == 0:
        return
    base = orthant(3, k)
    turned = OrthantSector(tuple(map(tuple, (rot @ np.eye(3)[:k].T).T)))
    m0, m1 = closed_form_moments(base), closed_form_moments(turned)
    assert np.allclose(m1.first_moment, rot @ m0.first_moment, atol=1e-13)
    assert np.allclose(m1.second_moment, rot @ m0.second_moment @ rot.T, atol=1e-13)


def test_moment_tensor_order_four_against_monte_carlo():
    sector = orthant(3, 2)
    exact = moment_tensor(sector, 4)
    rng = np.random.default_rng(8)
    theta = rng.standard_normal((2_000_000, 3))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    inside = np.all(theta[:, :2] >= 0, axis=1)
    est = 4 * math.pi * np.mean(inside * theta[:, 0] ** 2 * theta[:, 1] ** 2)
    assert exact[0, 0, 1, 1] == pytest.approx(est, rel=1e-2)
    # full-sphere value: 4 pi / 15, a quarter of it on the quarter sector
    assert exact[0, 0, 1, 1] == pytest.approx(math.pi / 15, rel=1e-14)


# -- mixed moments ----------------------------------------------------------

def test_mixed_moment_examples():
    d = 3
    a = np.array([0.3, -1.2, 2.0])
    assert mixed_moment(FullSector(d), 1, 0, [0, a], [1.0]) == pytest.approx(0, abs=1e-15)
    expected = a @ a * sphere_area(d) / d
    assert mixed_moment(FullSector(d), 1, 1, [0, a], [0, a]) == pytest.approx(expected, rel=1e-14)
    half = HalfSpaceSector((0.0, 0.0, 1.0))
    assert mixed_moment(half, 2, 0, [0, np.zeros(3), np.eye(3)], [1.0]) == pytest.approx(
        2 * math.pi, rel=1e-14)


def test_mixed_moment_closed_form_against_monte_carlo():
    d = 3
    a = np.array([0.3, -1.2, 2.0])
    exact = mixed_moment(FullSector(d), 1, 1, [0, a], [0, a])
    predicate = PredicateSector(d, lambda th: np.ones(len(th), dtype=bool))
    mc = mixed_moment(predicate, 1, 1, [0, a], [0, a], samples=500_000, seed=3)
    assert mc == pytest.approx(exact, rel=5e-3)


def test_mixed_moment_higher_order_against_monte_carlo(rng):
    d = 3
    f3 = rng.standard_normal((3, 3, 3))
    f3 = sum(np.transpose(f3, p) for p in
             [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6
    p1 = rng.standard_normal(3)
    half = HalfSpaceSector((0.0, 0.6, 0.8))
    exact = mixed_moment(half, 3, 1, {3: f3}, {1: p1})
    predicate = PredicateSector(d, lambda th: th @ np.array(half.nu) >= 0)
    mc = mixed_moment(predicate, 3, 1, {3: f3}, {1: p1}, samples=1_000_000, seed=5)
    assert mc == pytest.approx(exact, rel=2e-2, abs=2e-3)


@pytest.mark.parametrize("i, j", [(0, 0), (5, 0), (1, 4), (-1, 1)])
def test_mixed_moment_rejects_orders(i, j):
    with pytest.raises(ValueError):
        mixed_moment(FullSector(2), i, j, [0] * 6, [0] * 6)


def test_mixed_moment_missing_derivative():
    with pytest.raises(ValueError, match="missing"):
        mixed_moment(FullSector(2), 2, 0, [0, np.zeros(2)], [1.0])
