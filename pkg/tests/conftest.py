import time

import numpy as np
import pytest

from halfwave.ground_state import solve_ground_state
from halfwave.profile import build_profile_set
from halfwave.spectral import make_grid

REFERENCE = (4096, 200.0)
CRITERIA = {
    1: "ground-state residual and runtime",
    2: "virial identities",
    3: "kernel and identity battery",
    4: "smoothed half-norm identity",
    5: "profile residual scaling and constants",
    6: "rho-system solvability",
    7: "coercivity of the localized forms",
    8: "biharmonic weight bound",
    9: "modulation ODEs",
    10: "short-window PDE dynamics",
    11: "soliton persistence",
    12: "blowup-speed report",
}
_RESULTS = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def reference_grid():
    return make_grid(*REFERENCE)


@pytest.fixture(scope="session")
def timings():
    """Wall-clock seconds of the session-scoped reference builds."""
    return {}


@pytest.fixture(scope="session")
def reference_gs(reference_grid, timings):
    start = time.perf_counter()
    gs = solve_ground_state(reference_grid, tol=1e-10)
    timings["ground_state"] = time.perf_counter() - start
    return gs


@pytest.fixture(scope="session")
def reference_ps(reference_gs, timings):
    start = time.perf_counter()
    ps = build_profile_set(reference_gs)
    timings["profile"] = time.perf_counter() - start
    return ps


@pytest.fixture(scope="session")
def doubled_gs():
    """Ground state at twice the reference resolution."""
    return solve_ground_state(make_grid(2 * REFERENCE[0], REFERENCE[1]), tol=1e-10)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(512, 40.0)


@pytest.fixture(scope="session")
def small_gs():
    return solve_ground_state(make_grid(1024, 100.0), tol=1e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request):
    """Record a named sub-check of an acceptance criterion for the summary lines."""
    store = request.config.stash.setdefault(_RESULTS, {})

    def record(number, name, passed, detail=""):
        store.setdefault(number, []).append((name, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_RESULTS, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        checks = store.get(number)
        if not checks:
            terminalreporter.write_line(f"criterion {number:2d} NOT RUN  {title}")
            continue
        ok = all(p for _, p, _ in checks)
        parts = "; ".join(f"{n}={'ok' if p else 'FAIL'} {d}".strip() for n, p, d in checks)
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {parts}")
