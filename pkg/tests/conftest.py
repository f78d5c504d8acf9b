import math

import pytest

from equipart import expr as ex
from equipart.geometry import Manifold, ScalarField, VectorField


def h2xr():
    c = ("x", "y", "z")
    F = ex.parse("(2 - x^2 - y^2)/2", c)
    return Manifold(c, [["1/F^2", "0", "0"], ["0", "1/F^2", "0"], ["0", "0", "1"]],
                    domain="x^2 + y^2 < 2", lets={"F": F},
                    box={"x": (-2, 2), "y": (-2, 2), "z": (0, 1)}, name="h2xr")


def h2xr_killing(M):
    return [VectorField(M, ("F + y^2", "-x*y", "0"), "X1"),
            VectorField(M, ("-x*y", "F + x^2", "0"), "X2"),
            VectorField(M, ("-y", "x", "0"), "X3"),
            VectorField(M, ("0", "0", "1"), "X4")]


def plane(box=1.0, **kw):
    return Manifold.euclidean(("x", "y"), box={"x": (-box, box), "y": (-box, box)}, **kw)


def space(box=1.0):
    return Manifold.euclidean(("x", "y", "z"),
                              box={c: (-box, box) for c in ("x", "y", "z")})


def polar_plane():
    return Manifold(("r", "t"), [["1", "0"], ["0", "r^2"]], domain="r > 0",
                    box={"r": (0.2, 3.0), "t": (-math.pi, math.pi)})


def sphere():
    return Manifold(("r", "t"), [["1", "0"], ["0", "sin(r)^2"]],
                    domain=f"r > 0 & r < {math.pi!r}",
                    box={"r": (0.05, 3.09), "t": (-math.pi, math.pi)})


def conformal():
    return Manifold(("x", "y"), [["exp(y - x^2)", "0"], ["0", "exp(y - x^2)"]],
                    box={"x": (-1, 1), "y": (-1, 1)})


@pytest.fixture(scope="session")
def H():
    return h2xr()


@pytest.fixture(scope="session")
def H_fields(H):
    return h2xr_killing(H)


@pytest.fixture(scope="session")
def E2():
    return plane()


@pytest.fixture(scope="session")
def E3():
    return space()


@pytest.fixture(scope="session")
def P2():
    return polar_plane()


@pytest.fixture(scope="session")
def S2():
    return sphere()


@pytest.fixture(scope="session")
def C2():
    return conformal()


def fixture_fields():
    """(manifold, field) pairs covering every fixture manifold."""
    H = h2xr()
    E2, E3, P, S, C = plane(), space(), polar_plane(), sphere(), conformal()
    return [
        (H, ScalarField(H, "x^2 + y^2")), (H, ScalarField(H, "z")),
        (H, ScalarField(H, "(x^2 + y^2 - 2)/y", domain="y^2 > 0.0025")),
        (H, ScalarField(H, "(x^2 + y^2 - 2)/x", domain="x^2 > 0.0025")),
        (E2, ScalarField(E2, "x^2 + y^2")), (E2, ScalarField(E2, "x + y^2")),
        (E2, ScalarField(E2, "(y - x^2)/2")),
        (E3, ScalarField(E3, "x^2 + y^2 + z^2")), (E3, ScalarField(E3, "x^2 + 2*y^2")),
        (P, ScalarField(P, "r^2/2")), (P, ScalarField(P, "r*cos(t) + r^2*sin(t)^2")),
        (S, ScalarField(S, "cos(r)")), (S, ScalarField(S, "sin(r)*cos(t)")),
        (C, ScalarField(C, "(y - x^2)/2")),
    ]


# -- acceptance summary -----------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; printed after the run."""
    def record(n: int, passed: bool, detail: str):
        _ACCEPTANCE[n] = (passed, detail)
        print(f"ACCEPTANCE {n} {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
