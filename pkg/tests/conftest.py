import numpy as np
import pytest

from ppsvm import _fallback

try:
    from ppsvm import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = [pytest.param(_fallback, id="python")]
if _core is not None:
    BACKENDS.append(pytest.param(_core, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20190524)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
