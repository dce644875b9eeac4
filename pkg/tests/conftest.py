import numpy as np
import pytest
from hypothesis import strategies as st

from open_moyal.reservoir import build_lorentzian_bath
from open_moyal.symbols import StarAlgebra

#: filled by tests/test_acceptance.py: criterion id -> (passed, detail)
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

coeff = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def polys(draw, alg=StarAlgebra(), max_degree=4):
    deg = draw(st.integers(0, max_degree))
    monos = [(a, d - a) for d in range(deg + 1) for a in range(d + 1)]
    chosen = draw(st.lists(st.sampled_from(monos), min_size=1, max_size=len(monos), unique=True))
    return alg.symbol({mono: draw(coeff) for mono in chosen})


@pytest.fixture(scope="session")
def default_bath():
    """The N = 4000 Lorentzian bath in the hot regime."""
    return build_lorentzian_bath(1.0, 50.0, 1.0, 4000, 1000.0, 10.0, 1e-4)


@pytest.fixture(scope="session")
def small_bath():
    """A bath small enough for dense matrix exponentials."""
    return build_lorentzian_bath(1.0, 5.0, 1.0, 100, 50.0, 10.0, 1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
