import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equipart.geometry import ScalarField, mean_curvature_level_set
from equipart.reports import Verdict
from equipart.stability import (WarpedPlane, criterion_value,
                                first_variation_check, ritore_criterion,
                                second_variation_mode, sphere_first_variation_check)

FLAT = WarpedPlane("r", 0.5, 2.0, "flat")
RITORE = WarpedPlane("r*(1 + r^2)", 0.5, 2.0, "ritore")
ROUND = WarpedPlane("sin(r)", 0.1, 3.0, "round")
CATENOID = WarpedPlane("(exp(r) + exp(-r))/2", 0.0, 2.0, "catenoid")    # c = -1
HYPERBOLIC = WarpedPlane("(exp(r) - exp(-r))/2", 0.0, 2.0, "hyperbolic")  # c = 1
FIXTURES = [FLAT, RITORE, ROUND, CATENOID, HYPERBOLIC]


def test_warped_plane_validation():
    with pytest.raises(ValueError):
        WarpedPlane("r - 1", 0.5, 2.0)
    with pytest.raises(ValueError):
        WarpedPlane("r*theta", 0.5, 2.0)
    with pytest.raises(ValueError):
        WarpedPlane("r", 2.0, 1.0)


def test_criterion_closed_forms():
    r = np.linspace(0.5, 2.0, 7)
    assert np.allclose(criterion_value(RITORE, r), 1 + 3 * r ** 4, rtol=1e-14)
    assert criterion_value(RITORE, 1.0) == pytest.approx(4.0, rel=1e-15)
    assert np.allclose(criterion_value(ROUND, r), 1.0, rtol=1e-14)
    assert np.all(criterion_value(FLAT, r) == 1.0)


def test_ritore_verdicts():
    rep, table = ritore_criterion(RITORE)
    assert rep.verdict is Verdict.UNSTABLE and rep.witness == {"r": 2.0}
    assert table.shape == (31, 2)
    for w in (FLAT, ROUND, CATENOID):
        assert ritore_criterion(w)[0].verdict is Verdict.STABLE_CANDIDATE
    # sinh: c = cosh^2 - sinh^2 = 1
    assert ritore_criterion(HYPERBOLIC)[0].verdict is Verdict.STABLE_CANDIDATE


def test_open_pole_is_excluded_from_grid():
    _, table = ritore_criterion(HYPERBOLIC, samples=11)
    assert table[0, 0] > 0.0 and table[-1, 0] == 2.0


def test_second_variation_examples():
    assert abs(second_variation_mode(FLAT, 1.0, 1)) <= 1e-14
    assert second_variation_mode(RITORE, 1.0, 1) == pytest.approx(-1.5 * math.pi, rel=1e-13)
    assert abs(second_variation_mode(ROUND, math.pi / 4, 1)) <= 1e-14


def test_second_variation_arguments():
    with pytest.raises(ValueError):
        second_variation_mode(FLAT, 1.0, 0)
    with pytest.raises(ValueError):
        second_variation_mode(FLAT, 1.0, 1, nodes=64)


@pytest.mark.parametrize("w", FIXTURES, ids=lambda w: w.name)
def test_identity_tie(w):
    for r0 in np.linspace(max(w.r_min, 0.2), w.r_max, 6):
        Q = second_variation_mode(w, r0, 1)
        f = float(w.f_values(r0)[0][0])
        assert abs(Q - math.pi / f * (1 - criterion_value(w, r0))) <= 1e-6 * (1 + abs(Q))


@pytest.mark.parametrize("w", FIXTURES, ids=lambda w: w.name)
def test_higher_modes_follow_closed_form(w):
    r0 = 0.5 * (max(w.r_min, 0.2) + w.r_max)
    f = float(w.f_values(r0)[0][0])
    c = criterion_value(w, r0)
    for k in (2, 3, 5):
        Q = second_variation_mode(w, r0, k)
        assert Q == pytest.approx(math.pi / f * (k * k - c), rel=1e-12)


def test_sign_coherence():
    for w in FIXTURES:
        rep, _ = ritore_criterion(w)
        if rep.verdict is Verdict.UNSTABLE:
            assert second_variation_mode(w, rep.witness["r"], 1) < 0
    for w in (FLAT, ROUND, HYPERBOLIC):
        for r0 in np.linspace(max(w.r_min, 0.2), w.r_max, 5):
            assert abs(second_variation_mode(w, r0, 1)) <= 1e-9
    for r0 in (0.3, 1.0, 1.9):
        assert second_variation_mode(CATENOID, r0, 1) > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.5, 2.0))
def test_sign_coherence_property(a, r0):
    w = WarpedPlane(f"r*(1 + {a!r}*r^2)", 0.5, 2.0)
    c = criterion_value(w, r0)
    Q = second_variation_mode(w, r0, 1)
    assert c > 1 and Q < 0


@pytest.mark.parametrize("w", FIXTURES, ids=lambda w: w.name)
def test_mean_curvature_of_circles(w):
    M = w.manifold()
    f = ScalarField(M, "r")
    for r0 in np.linspace(max(w.r_min, 0.2) * 1.01, w.r_max * 0.99, 5):
        H = mean_curvature_level_set(M, f, (r0, 0.3))
        fv, df, _ = (float(v[0]) for v in w.f_values(r0))
        assert H == pytest.approx(df / fv, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("w,r0", [(FLAT, 1.0), (RITORE, 1.0), (ROUND, math.pi / 4),
                                  (CATENOID, 0.7)], ids=["flat", "ritore", "round", "cat"])
def test_circles_are_critical(w, r0):
    rep = first_variation_check(w, r0)
    assert rep.verdict is Verdict.CONSISTENT
    assert all(rep.sub_residuals[f"k={k}"] <= 1e-6 for k in (1, 2, 3))


def test_constant_mode_control_matches_formula():
    rep = first_variation_check(RITORE, 1.0, modes=(2,))
    L0 = 2 * math.pi * 2.0
    H = 4.0 / 2.0
    assert rep.sub_residuals["control_expected"] == pytest.approx(-H * L0, rel=1e-14)
    assert rep.sub_residuals["control_dA"] == pytest.approx(-H * L0, rel=1e-6)
    assert rep.sub_residuals["control_rel_error"] <= 1e-6


def test_first_variation_arguments():
    with pytest.raises(ValueError):
        first_variation_check(FLAT, 1.0, modes=(0,))


def test_criterion_of_catenoid_and_hyperbolic_plane():
    r = np.linspace(0.1, 2.0, 9)
    assert np.allclose(criterion_value(CATENOID, r), -1.0, rtol=1e-12)
    assert np.allclose(criterion_value(HYPERBOLIC, r), 1.0, rtol=1e-12)


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_sphere_first_variation(radius):
    rep = sphere_first_variation_check(radius)
    assert rep.verdict is Verdict.CONSISTENT
    A0 = 4 * math.pi * radius ** 2
    assert rep.sub_residuals["control_expected"] == pytest.approx(-2 / radius * A0, rel=1e-12)
    assert rep.sub_residuals["control_rel_error"] <= 1e-6
