import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphclus import _kernels  # noqa: E402

BACKENDS = {
    "numba": (_kernels.components_numba, _kernels.deoverlap_numba, _kernels.nms_numba),
    "numpy": (_kernels.components_numpy, _kernels.deoverlap_numpy, _kernels.nms_numpy),
}


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Route the package-level dispatchers through one backend."""
    monkeypatch.setattr(_kernels, "USE_NUMBA", request.param == "numba")
    return request.param


def random_unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
