import pytest

from fermi_scatter.oscillator import HermiteBasis, ModelParams
from fermi_scatter.scattering import reference_gamma

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    entry = _ACCEPTANCE.setdefault(num, [title, True])
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[num]
        terminalreporter.write_line(f"ACCEPTANCE {num:2d} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(scope="session")
def params():
    return ModelParams(omega=1.0, lam=10.0, alpha=100.0)


@pytest.fixture(scope="session")
def basis4():
    return HermiteBasis(4)


@pytest.fixture(scope="session")
def basis2():
    return HermiteBasis(2)


@pytest.fixture(scope="session")
def gamma_ref4(params, basis4):
    return reference_gamma(params, basis4)
