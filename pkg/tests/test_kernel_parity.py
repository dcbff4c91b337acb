import os
import subprocess
import sys

import numpy as np
import pytest

from duio import kernel
from duio import simulator as sim
from duio.reproduce import config_for, simulation_design

needs_ext = pytest.mark.skipif("cython" not in kernel.backends(), reason="compiled kernel not built")


@needs_ext
@pytest.mark.parametrize("which, horizon", [("1", 0.2), ("2", 0.2), ("3", 0.25)])
def test_backends_agree(which, horizon, request):
    sc = request.getfixturevalue(f"sc{which}")
    cfg = config_for(sc, simulation_design(sc), horizon=horizon)
    a = sim.simulate(cfg, backend="cython")
    b = sim.simulate(cfg, backend="python")
    assert (a.backend, b.backend) == ("cython", "python")
    scale = np.abs(b.x).max()
    assert np.max(np.abs(a.x - b.x)) <= 1e-10 * scale
    assert np.max(np.abs(a.x_hat - b.x_hat)) <= 1e-10 * scale
    assert np.array_equal(a.active_topology, b.active_topology)


@needs_ext
def test_backends_agree_on_blowup():
    from test_simulator import _scalar_unstable

    cfg = _scalar_unstable(1000.0)
    a = sim.simulate(cfg, verify=False, on_blowup="truncate", backend="cython")
    b = sim.simulate(cfg, verify=False, on_blowup="truncate", backend="python")
    assert a.blowup_time == b.blowup_time


def test_default_backend_is_compiled_when_available():
    expected = "cython" if "cython" in kernel.backends() else "python"
    assert kernel.BACKEND == expected


def test_env_var_forces_fallback():
    env = dict(os.environ, DUIO_PURE_PYTHON="1")
    code = "from duio import kernel; print(kernel.BACKEND, sorted(kernel.backends()))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split()[0] == "python"
    assert "cython" not in out
