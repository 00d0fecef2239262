"""Every available backend agrees with the numpy reference."""
import numpy as np

from oimlab import _kernels_py as ref
from oimlab import kernels
from oimlab.numerics import l2_normalize


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.available_backends()


def test_oim_loss_grad(backend, rng):
    x = rng.standard_normal((6, 4))
    bank = l2_normalize(rng.standard_normal((9, 4)))
    bank[2] = 0.0
    t = rng.integers(0, 9, 6).astype(np.intp)
    for a, b in zip(backend.oim_loss_grad(x, t, bank, 0.33, 1e-12), ref.oim_loss_grad(x, t, bank, 0.33, 1e-12)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_weighted_standardize(backend, rng):
    x = rng.standard_normal((7, 3))
    x[:, 1] = 2.0
    w = rng.random(7)
    w /= w.sum()
    got = backend.weighted_standardize(x, w, 1e-5)
    want = ref.weighted_standardize(x, w, 1e-5)
    for a, b in zip(got, want):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    g = rng.standard_normal((7, 3))
    np.testing.assert_allclose(backend.weighted_standardize_backward(got[0], got[2], got[3], w, g),
                               ref.weighted_standardize_backward(*want[:1], want[2], want[3], w, g),
                               rtol=1e-12, atol=1e-14)


def test_ema_update_rows(backend, rng):
    table = np.zeros((3, 2))
    table[1] = [1.0, 0.0]
    ids = np.array([0, 1, 1, 2], dtype=np.intp)
    feats = l2_normalize(rng.standard_normal((4, 2)))
    feats[3] = 0.0
    w = np.array([0.5, 0.9, 0.3, 0.5])
    a, b = table.copy(), table.copy()
    backend.ema_update_rows(a, ids, feats, w, 1e-12)
    ref.ema_update_rows(b, ids, feats, w, 1e-12)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)
    assert np.all(a[2] == 0)


def test_oim_loss_grad_large_problem(backend, rng):
    # big enough for the compiled kernel to route the bank products through BLAS
    x = rng.standard_normal((64, 32))
    x[3] = 0.0
    bank = l2_normalize(rng.standard_normal((300, 32)))
    t = rng.integers(0, 300, 64).astype(np.intp)
    got = backend.oim_loss_grad(x, t, bank, 0.33, 1e-12)
    want = ref.oim_loss_grad(x, t, bank, 0.33, 1e-12)
    for a, b in zip(got, want):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)
    assert np.all(got[2][3] == 0)


def test_pure_switch():
    import os
    import subprocess
    import sys
    env = dict(os.environ, OIMLAB_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import oimlab; print(oimlab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
