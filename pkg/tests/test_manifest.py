import math

import numpy as np
import pytest

from equipart.geometry import metric_at
from equipart.manifest import (ManifestError, builtin_names, load_manifest, parse_manifest,
                               resolve_manifest)
from equipart.symmetry import killing_residual

PLANE = "manifold a { dim = 2; coords = x, y; metric = [[1, 0], [0, 1]]; }\n"


def parse(body: str):
    return parse_manifest("version = 1\n" + body, "t.eqm")


def test_builtin_fixtures_all_load():
    assert builtin_names() == ["conf_nonsym", "euclid2", "euclid3", "h2xr", "polar_flat",
                               "ritore", "sphere2"]
    for name in builtin_names():
        m = resolve_manifest(name)
        assert m.manifolds or m.warps


def test_h2xr_fixture_contents():
    m = resolve_manifest("h2xr")
    assert (len(m.manifolds), len(m.vfields), len(m.fields)) == (1, 4, 4)
    M = m.manifolds["h2xr"]
    assert np.allclose(metric_at(M, (1.0, 0.0, 0.0))[0], np.diag([4.0, 4.0, 1.0]))
    for X in m.vfields.values():
        assert killing_residual(M, X, (0.3, -0.4, 0.5)) <= 1e-12
    assert not m.fields["f3"].contains(np.array([[0.5, 0.01, 0.5]]))[0]


def test_load_from_path(tmp_path):
    p = tmp_path / "m.eqm"
    p.write_text("version = 1\n" + PLANE + "field f on a { expr = x^2 + y^2; }\n")
    m = load_manifest(p)
    assert list(m.fields) == ["f"] and m.manifold_of("f") == "a"
    assert resolve_manifest(str(p)).fields.keys() == m.fields.keys()


def test_comments_lets_and_pi():
    m = parse("# comment\nmanifold s { dim = 2; coords = r, t; let S = sin(r);\n"
              "  metric = [[1, 0], [0, S^2]]; domain = r > 0 & r < pi; center = pi/2, 0; "
              "rmax = 1; }\n")
    M = m.manifolds["s"]
    assert metric_at(M, (math.pi / 2, 0.0))[2] == pytest.approx(1.0)
    assert m.centers["s"] == (math.pi / 2, 0.0) and m.rmax["s"] == 1.0


def test_warps_and_plans():
    m = parse("warp w { f = r*(1 + r^2); range = 0.5:2; }\n"
              "plan quick { samples = 100; seed = 3; tol = 1e-6; }\n")
    assert m.warps["w"].r_min == 0.5 and m.warps["w"].r_max == 2.0
    plan = m.plans["quick"]
    assert (plan.samples, plan.seed, plan.tol) == (100, 3, 1e-6)


def test_field_box_override():
    m = resolve_manifest("euclid2")
    assert m.field_boxes["bad"]["y"] == (1.0, 2.0)


def test_duplicate_names_report_both_spans():
    with pytest.raises(ManifestError) as info:
        parse(PLANE + PLANE)
    msg = str(info.value)
    assert msg.startswith("t.eqm:3:") and "2:" in msg.split("t.eqm:3:", 1)[1]
    assert "duplicate" in msg


def test_unknown_coordinate_in_field():
    with pytest.raises(ManifestError) as info:
        parse(PLANE + "field f on a { expr = x + q; }\n")
    assert str(info.value).startswith("t.eqm:3:") and "q" in str(info.value)


@pytest.mark.parametrize("body,needle", [
    ("field f on b { expr = x; }\n", "unknown manifold"),
    ("manifold a { dim = 3; coords = x, y; metric = [[1, 0], [0, 1]]; }\n", "dim"),
    ("manifold a { dim = 2; coords = x, y; metric = [[1, 0], [0, 1]] }\n", "';'"),
    ("manifold a { dim = 2; coords = x, y; metric = [[1, 0], [1, 1]]; }\n", "symmetric"),
    (PLANE + "vfield X on a { components = (1); }\n", "components"),
    (PLANE + "field f on a { expr = x +; }\n", "t.eqm:3:"),
    ("warp w { f = r - 1; range = 0.5:2; }\n", "positive"),
])
def test_errors_carry_location(body, needle):
    with pytest.raises(ManifestError) as info:
        parse(body)
    assert needle in str(info.value)
    assert info.value.line >= 2


def test_missing_version_header():
    with pytest.raises(ManifestError) as info:
        parse_manifest(PLANE, "t.eqm")
    assert (info.value.line, info.value.col) == (1, 1)


def test_unknown_builtin():
    with pytest.raises(ManifestError):
        resolve_manifest("no_such_fixture")
