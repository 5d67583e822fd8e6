import os
import subprocess
import sys

import numpy as np
import pytest

from tclevy import kernels
from tclevy.schemes import ThetaConfig, st_path
from tclevy.subordinator import StableSpec, generate_path
from tclevy.noise import make_panel

from conftest import reference_linear


def test_python_fallback_always_available():
    assert "python" in kernels.available()
    assert kernels.get("python") is kernels._pykernel
    assert kernels.get("auto") is kernels.get(kernels.BACKEND)


def test_unknown_backend():
    with pytest.raises(ValueError, match="unavailable"):
        kernels.get("fortran")


def test_env_var_forces_python():
    code = "import tclevy.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, TCLEVY_BACKEND="python")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"


def test_fallback_when_extension_missing():
    # hide the compiled module before the package imports it
    code = ("import sys; sys.modules['tclevy._ckernel'] = None\n"
            "import tclevy.kernels as k; print(k.BACKEND, k.available())")
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert res.stdout.split()[0] == "python"


@pytest.mark.skipif("compiled" not in kernels.available(), reason="extension not built")
def test_compiled_and_python_agree_bitwise():
    model = reference_linear(lam=3.0)
    for seed in range(20):
        sub = generate_path(StableSpec(0.7, 0.01, 1.0), seed)
        panel = make_panel(sub.n_steps, 0.01, model.jumps, seed)
        cfg = ThetaConfig(0.5 + 0.025 * seed, 0.01)
        a = st_path(model, sub, panel, cfg, backend="compiled")
        b = st_path(model, sub, panel, cfg, backend="python")
        assert np.array_equal(a.st_values, b.st_values)
