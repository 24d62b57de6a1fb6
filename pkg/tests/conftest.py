import numpy as np
import pytest

from discrete_bernoulli.geometry import ConvexPolygon, Grid2D, rasterize


@pytest.fixture
def unit_disk():
    return ConvexPolygon.regular(1.0, 128)


@pytest.fixture
def ring_mask():
    """Coarse exterior capacitor: u = 1 on r = 0.25, 0 on R = 1."""

    def make(h=1 / 32, n=128, v_in=1.0, v_out=0.0):
        K = ConvexPolygon.regular(0.25, n)
        O = ConvexPolygon.regular(1.0, n)
        g = Grid2D.covering(O.bbox, h, margin=2 * h)
        return rasterize(K, O, g, v_in, v_out)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
