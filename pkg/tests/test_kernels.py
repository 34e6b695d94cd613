import numpy as np
import pytest

from nnsr import kernels


@pytest.fixture
def small_problem(rng):
    A = rng.standard_normal((12, 30))
    z_true = np.abs(rng.standard_normal(30)) * (rng.uniform(0, 1, 30) > 0.6)
    y = A @ z_true + 0.01 * rng.standard_normal(12)
    step = 1.0 / np.linalg.norm(A @ A.T, 2)
    return A, y, step


def test_numpy_path_runs(small_problem):
    A, y, step = small_problem
    z, objs, n, pg = kernels.apg_nnls_numpy(A, y, np.zeros(30), step, 1e-10, 500)
    assert np.all(z >= 0)
    assert np.all(np.diff(objs) <= 1e-12)
    assert len(objs) == n + 1


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="numba disabled")
def test_jit_matches_numpy(small_problem):
    A, y, step = small_problem
    out_np = kernels.apg_nnls_numpy(A, y, np.zeros(30), step, 1e-10, 500)
    out_nb = kernels.apg_nnls_jit(A, y, np.zeros(30), step, 1e-10, 500)
    assert np.allclose(out_np[0], out_nb[0], atol=1e-12)
    assert np.allclose(out_np[1], out_nb[1], atol=1e-12)
    assert out_np[2] == out_nb[2]


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="numba disabled")
def test_colloc_jit_matches_numpy():
    centers = np.linspace(0, 1, 7)
    ts = np.linspace(0, 1, 513)
    a = kernels.gaussian_colloc_numpy(centers, 0.2, ts)
    b = kernels.gaussian_colloc_jit(centers, 0.2, ts)
    assert np.allclose(a, b, rtol=1e-15, atol=0)


def test_env_flag_selects_backend():
    # the public names point at one of the two implementations
    if kernels.NUMBA_ENABLED:
        assert kernels.apg_nnls is kernels.apg_nnls_jit
        assert kernels.gaussian_colloc is kernels.gaussian_colloc_jit
    else:
        assert kernels.apg_nnls is kernels.apg_nnls_numpy
        assert kernels.gaussian_colloc is kernels.gaussian_colloc_numpy


def test_no_numba_subprocess():
    # the fallback path must import and run with the env flag set
    import os
    import subprocess
    import sys

    code = (
        "import nnsr.kernels as k; import numpy as np; "
        "assert not k.NUMBA_ENABLED; "
        "A = np.eye(3); y = np.ones(3); "
        "z, objs, n, pg = k.apg_nnls(A, y, np.zeros(3), 1.0, 1e-12, 50); "
        "assert np.allclose(z, 1.0, atol=1e-6); print('ok')"
    )
    env = dict(os.environ, NNSR_NO_NUMBA="1")
    env["PYTHONPATH"] = os.pathsep.join(p for p in sys.path if p)
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env
    )
    assert out.returncode == 0, out.stderr
    assert "ok" in out.stdout
