from fractions import Fraction

import pytest
from hypothesis import strategies as st

from artifact.instance import ExperimentConfig, build, gen
from artifact.measure_grid import Grid

MASSES = [Fraction(1), Fraction(1, 4), Fraction(3), Fraction(1, 16), Fraction(7, 2)]


def make(seed, ns=8, nw=8, L=6, masses="loguniform", adversarial=False, **kw):
    return gen(ExperimentConfig(seed=seed, n_sigma=ns, n_omega=nw, L=L, masses=masses,
                                adversarial=adversarial, **kw))


@st.composite
def instances(draw, L=6, M=6, max_atoms=8, min_atoms=1):
    """Random instance on distinct level-L cell centres with small rational data."""
    grid = Grid(M, L)
    cells = 1 << L
    ns = draw(st.integers(min_atoms, max_atoms))
    nw = draw(st.integers(min_atoms, max_atoms))
    chosen = draw(st.lists(st.integers(0, cells - 1), min_size=ns + nw, max_size=ns + nw, unique=True))
    tick = grid.scale
    vals = st.integers(-8, 8).map(lambda v: Fraction(v, 4))
    sig = [((c + Fraction(1, 2)) * tick, draw(st.sampled_from(MASSES)), draw(vals)) for c in chosen[:ns]]
    om = [((c + Fraction(1, 2)) * tick, draw(st.sampled_from(MASSES)), draw(vals)) for c in chosen[ns:]]
    return build(grid, sig, om)


@pytest.fixture
def grid6():
    return Grid(6, 6)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n][1])
