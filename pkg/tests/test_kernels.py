import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import hadamard

from strongcsp import _kernels as K
from strongcsp.gadget import BooleanTable, indset_to_strong_csp
from strongcsp.graph import erdos_renyi

BACKENDS = ["numpy"] + (["numba"] if K.HAS_NUMBA else [])


def sweep_oracle(pu, pv, w, n):
    return np.array([sum(wi for a, b, wi in zip(pu, pv, w) if min(a, b) <= t < max(a, b)) for t in range(n - 1)])


@pytest.mark.parametrize("name", BACKENDS)
def test_sweep_cuts(name):
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        m = int(rng.integers(0, 60))
        pu, pv, w = rng.integers(0, n, m), rng.integers(0, n, m), rng.random(m)
        with K.use_backend(name):
            got = K.sweep_cuts(pu, pv, w, n)
        np.testing.assert_allclose(got, sweep_oracle(pu, pv, w, n), atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_fwht_matches_hadamard_matrix(name):
    rng = np.random.default_rng(1)
    for k in range(0, 9):
        v = rng.standard_normal(1 << k)
        with K.use_backend(name):
            got = K.fwht(v)
        np.testing.assert_allclose(got, hadamard(1 << k) @ v, atol=1e-10)


@pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not installed")
def test_fourlin_backends_agree():
    rng = np.random.default_rng(2)
    for k in (2, 3, 4):
        f1 = BooleanTable.random_folded(k, rng).values
        f2 = BooleanTable.random_folded(k, rng).values
        pi1, pi2 = rng.integers(0, 2, k), rng.integers(0, 2, k)
        out = {}
        for name in BACKENDS:
            with K.use_backend(name):
                out[name] = K.fourlin_accept_enumerate(f1, f2, pi1, pi2, 2, 0.1)
        assert out["numpy"] == pytest.approx(out["numba"], abs=1e-10)  # summation order differs


@pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not installed")
def test_strong_csp_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(10):
        inst = indset_to_strong_csp(erdos_renyi(int(rng.integers(2, 10)), 0.4, rng))
        g = inst.graph
        out = {}
        for name in BACKENDS:
            with K.use_backend(name):
                out[name] = K.strong_csp_bruteforce(g.n, inst.k, g.src, g.dst, inst.allowed)[0]
        assert out["numpy"] == out["numba"]


def test_use_backend_validates():
    with pytest.raises(ValueError):
        with K.use_backend("cuda"):
            pass
    before = K.backend()
    with K.use_backend("numpy"):
        assert K.backend() == "numpy"
    assert K.backend() == before


def test_env_flag_disables_numba():
    env = dict(os.environ, STRONGCSP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from strongcsp import _kernels as K; print(K.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
