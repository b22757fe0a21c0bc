import numpy as np
import pytest

from fsi_fem.mesh import GeometrySpec, build_structured_mesh


def channel_spec(periodic=False, levels=(0.0, 0.25, 0.75, 1.0), length=1.0):
    side = "periodic_x" if periodic else "neumann_traction"
    return GeometrySpec(0.0, length, levels, ("solid", "fluid", "solid"),
                        {"left": side, "right": side}, ("gamma2", "gamma1"))


def square_spec(role="heat", bc="dirichlet_zero"):
    return GeometrySpec(0.0, 1.0, (0.0, 1.0), (role,), {s: bc for s in ("left", "right", "top", "bottom")})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def channel_mesh():
    return build_structured_mesh(channel_spec(periodic=True), 4, [1, 2, 1])


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record (and print) one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
