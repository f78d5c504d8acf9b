import itertools
import math

import numpy as np
import pytest

from conftest import plane
from oracles import hyperbolic_product_distance, lie_derivative_metric
from equipart.equilibrium import SamplePlan, sample_domain
from equipart.geometry import GeometryError, ScalarField, VectorField, metric_at
from equipart.reports import Verdict
from equipart.symmetry import (CLOSED_SUBGROUP_NOTE, CONVERSE_2D_NOTE, RED_FLAG_NOTE,
                               KillingAlgebra, check_killing_induced_equilibrium, flow,
                               geodesic_distance, invariance_residual, killing_residual,
                               lie_bracket, pointwise_rank)

SINGULAR = "(x^2 + y^2 - 2)/y"


@pytest.fixture(scope="module")
def pts(H):
    return sample_domain(H, SamplePlan(samples=100, seed=42))


def test_rotation_is_killing_in_plane(E2):
    X = VectorField(E2, ("-y", "x"))
    assert np.all(killing_residual(E2, X, sample_domain(E2, SamplePlan(samples=50))) == 0.0)


@pytest.mark.parametrize("k", range(4))
def test_named_fields_are_killing(H, H_fields, pts, k):
    assert killing_residual(H, H_fields[k], pts).max() <= 1e-10


def test_dilation_is_not_killing(E2):
    v = killing_residual(E2, VectorField(E2, ("x", "0")), (0.5, 0.0))
    # K_xx = 2, normalized by 1 + max|g| max|X| = 1.5
    assert v == pytest.approx(2 / 1.5, rel=1e-15)


@pytest.mark.parametrize("k", range(4))
def test_killing_residual_agrees_with_lie_derivative_oracle(H, H_fields, pts, k):
    X = H_fields[k]
    inner = pts[pts[:, 0] ** 2 + pts[:, 1] ** 2 < 1.5][:10]
    for p in inner:
        scale = 1 + np.abs(metric_at(H, p)[0]).max() * np.abs(X(p)).max()
        assert np.abs(lie_derivative_metric(H, X, p)).max() / scale <= 1e-6


def test_dilation_lie_derivative_oracle(E2):
    X = VectorField(E2, ("x", "0"))
    L = lie_derivative_metric(E2, X, np.array([0.5, 0.0]))
    assert L[0, 0] == pytest.approx(2.0, rel=1e-8)


def test_bracket_examples(E2, H, H_fields):
    d = lie_bracket(VectorField(E2, ("1", "0")), VectorField(E2, ("-y", "x")))
    assert d((0.3, -0.4)).tolist() == [0.0, 1.0]
    z = lie_bracket(H_fields[2], H_fields[3])
    assert np.all(z(sample_domain(H, SamplePlan(samples=20))) == 0.0)


def test_bracket_needs_shared_manifold(E2, H_fields):
    with pytest.raises(GeometryError):
        lie_bracket(VectorField(plane(), ("1", "0")), VectorField(E2, ("0", "1")))


@pytest.mark.parametrize("i,j", list(itertools.combinations(range(4), 2)))
def test_bracket_closure(H, H_fields, pts, i, j):
    B = lie_bracket(H_fields[i], H_fields[j])
    assert killing_residual(H, B, pts).max() <= 1e-9


def test_rank_examples(E2, H, H_fields):
    assert pointwise_rank(H, [H_fields[2], H_fields[3]], (1.0, 0.0, 0.0)) == 2
    assert pointwise_rank(E2, [VectorField(E2, ("-y", "x"))], (0.0, 0.0)) == 0
    assert pointwise_rank(H, H_fields[:3], (0.3, -0.5, 0.2)) == 2
    assert pointwise_rank(H, H_fields, (0.3, -0.5, 0.2)) == 3


def test_invariance_examples(E2, H, H_fields, pts):
    assert invariance_residual(ScalarField(E2, "x^2 + y^2"), VectorField(E2, ("-y", "x")),
                               (0.6, 0.1)) == 0.0
    assert np.all(invariance_residual(ScalarField(H, "z"), H_fields[0], pts) == 0.0)
    f = ScalarField(H, SINGULAR, domain="y^2 > 0.0025")
    q = sample_domain(H, SamplePlan(samples=100), f)
    assert invariance_residual(f, H_fields[0], q).max() <= 1e-12
    assert invariance_residual(f, H_fields[2], q).max() > 1e-3


def test_algebra_validation(E2, H, H_fields):
    with pytest.raises(ValueError):
        KillingAlgebra(H, H_fields[:1])
    with pytest.raises(GeometryError):
        KillingAlgebra(H, [H_fields[0], VectorField(E2, ("1", "0"))])
    assert KillingAlgebra(H, H_fields[:2]).expected_rank == 2


def _pipeline(H, fields, f, **kw):
    return check_killing_induced_equilibrium(KillingAlgebra(H, fields), f,
                                             SamplePlan(samples=500, **kw))


def test_rotation_translation_pipeline(H, H_fields):
    rep = _pipeline(H, [H_fields[2], H_fields[3]], "x^2 + y^2")
    assert rep.verdict is Verdict.CONSISTENT
    assert set(rep.legs) == {"killing", "rank", "invariance", "equilibrium"}
    assert all(leg.verdict is Verdict.CONSISTENT for leg in rep.legs.values())
    assert CLOSED_SUBGROUP_NOTE in rep.notes


def test_singular_invariant_pipeline(H, H_fields):
    f = ScalarField(H, SINGULAR, domain="y^2 > 0.0025")
    assert _pipeline(H, [H_fields[0], H_fields[3]], f).verdict is Verdict.CONSISTENT


@pytest.mark.parametrize("i,j", [(0, 1), (0, 2), (1, 2)])
def test_planar_pairs_give_height_function(H, H_fields, i, j):
    rep = _pipeline(H, [H_fields[i], H_fields[j]], "z")
    assert rep.verdict is Verdict.CONSISTENT
    assert all(leg.passed for leg in rep.legs.values())


def test_dilation_fails_killing_leg(E2):
    rep = check_killing_induced_equilibrium(KillingAlgebra(E2, [VectorField(E2, ("x", "0"))]),
                                            "y", SamplePlan(samples=300))
    assert rep.verdict is Verdict.REFUTED
    assert rep.legs["killing"].verdict is Verdict.REFUTED
    assert rep.legs["equilibrium"].verdict is Verdict.CONSISTENT
    assert "hypothesis failed: killing" in rep.notes
    assert CONVERSE_2D_NOTE in rep.notes
    assert rep.witness == rep.legs["killing"].witness


def test_wrong_invariant_fails_invariance_leg(H, H_fields):
    rep = _pipeline(H, [H_fields[2], H_fields[3]], "x + z^2")
    assert rep.legs["invariance"].verdict is Verdict.REFUTED
    assert RED_FLAG_NOTE not in rep.notes


def test_conjunction_holds_on_every_fixture(H, H_fields):
    """Whenever the three hypotheses pass, the equilibrium leg must pass too."""
    f_sing = ScalarField(H, SINGULAR, domain="y^2 > 0.0025")
    cases = [([2, 3], "x^2 + y^2"), ([0, 3], f_sing), ([0, 1], "z"), ([0, 2], "z"),
             ([1, 2], "z"), ([2, 3], "x + z^2"), ([0, 1, 2], "z")]
    hypotheses_met = 0
    for idx, f in cases:
        rep = _pipeline(H, [H_fields[k] for k in idx], f, seed=7)
        hyp = all(rep.legs[k].passed for k in ("killing", "rank", "invariance"))
        if hyp:
            hypotheses_met += 1
            assert rep.legs["equilibrium"].passed, RED_FLAG_NOTE
            assert RED_FLAG_NOTE not in rep.notes
    assert hypotheses_met == 6


def test_threads_do_not_change_pipeline(H, H_fields):
    a = _pipeline(H, [H_fields[2], H_fields[3]], "x^2 + y^2")
    b = _pipeline(H, [H_fields[2], H_fields[3]], "x^2 + y^2", threads=4)
    assert a.to_dict() == b.to_dict()


# -- flow isometry --------------------------------------------------------------

def _pairs(H, n=20):
    rng = np.random.default_rng(2024)
    p = np.column_stack([rng.uniform(-0.6, 0.6, (n, 2)), rng.uniform(0, 1, n)])
    q = p + rng.uniform(-0.25, 0.25, (n, 3))
    return p, q


def test_distance_oracles_agree(H):
    p, q = _pairs(H, 3)
    for a, b in zip(p, q):
        assert geodesic_distance(H, a, b) == pytest.approx(hyperbolic_product_distance(a, b),
                                                           rel=1e-8)


@pytest.mark.parametrize("k", range(4))
def test_killing_flow_preserves_distance(H, H_fields, k):
    p, q = _pairs(H)
    fp, fq = flow(H_fields[k], p, 0.1), flow(H_fields[k], q, 0.1)
    for a, b, c, d in zip(p, q, fp, fq):
        assert abs(hyperbolic_product_distance(c, d) - hyperbolic_product_distance(a, b)) <= 1e-4


def test_non_killing_flow_changes_distance(H):
    p, q = _pairs(H)
    X = VectorField(H, ("x", "y", "0"))
    fp, fq = flow(X, p, 0.1), flow(X, q, 0.1)
    change = max(abs(hyperbolic_product_distance(c, d) - hyperbolic_product_distance(a, b))
                 for a, b, c, d in zip(p, q, fp, fq))
    assert change > 1e-3


def test_flow_of_translation(H, H_fields):
    out = flow(H_fields[3], np.array([[0.1, 0.2, 0.3]]), 0.5)
    assert np.allclose(out, [[0.1, 0.2, 0.8]], rtol=0, atol=1e-15)
    assert math.isclose(geodesic_distance(H, (0.1, 0.2, 0.3), (0.1, 0.2, 0.8)), 0.5,
                        rel_tol=1e-9)
