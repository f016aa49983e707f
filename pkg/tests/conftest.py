import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from fzstructure.finsys import trivial_factor
from fzstructure.systems import cycle_over_cycle, q8_system, random_extension

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_criterion_results: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _criterion_results[num] = ("PASS" if rep.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criterion_results):
        status, text = _criterion_results[num]
        terminalreporter.write_line(f"{status} criterion {num}: {text}")


@pytest.fixture
def pi4():
    """Z/4 over Z/2: two fibers {x0, x2}, {x1, x3}."""
    return cycle_over_cycle(4, 2)


@pytest.fixture
def q8_trivial():
    return trivial_factor(q8_system())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def extension_from_seed(seed, **kw):
    return random_extension(np.random.default_rng(seed), **kw)


def random_obs(rng, base, complex_=True):
    from fzstructure.hilbert import Observable

    v = rng.standard_normal(base.n)
    if complex_:
        v = v + 1j * rng.standard_normal(base.n)
    return Observable(base, v)


SMALL_SHAPES = [(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (4, 2), (4, 1), (3, 3)]


def small_extension(seed):
    """Random extension whose acting group stays in the low thousands."""
    ny, k = SMALL_SHAPES[seed % len(SMALL_SHAPES)]
    return extension_from_seed(seed, ny=ny, k=k)
