import numpy as np
import pytest

from pumpkit.lattice import PumpSchedule, build_schedule, table_potential

U_DEFAULT = 1.5


@pytest.fixture(scope="session")
def fig3_potential():
    return table_potential("fig3")


@pytest.fixture(scope="session")
def fig3_schedule(fig3_potential):
    """Coarse but converged schedule: 64 samples, 16 quasimomenta."""
    return build_schedule(fig3_potential, PumpSchedule(1e-3, n_samples=64), U_DEFAULT, nq=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ---------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "failed": []})
    if call.excinfo is not None:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"criterion {number:>2}: {status}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
