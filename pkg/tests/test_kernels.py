import numpy as np
import pytest

from gsplit import _kernels_py, kernels
from gsplit.split import EPS

from _util import gated_batch

_kc = pytest.importorskip("gsplit._kernels_c")


@pytest.fixture(scope="module")
def batch():
    m, n, d = gated_batch(2000, seed=13)
    return m, np.ascontiguousarray(m.covariances()), n, d


def _close(a, b):
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(y).max()))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_parity(batch):
    m, C, n, d = batch
    mu, a = m.positions, m.opacity_mass
    _close(_kc.split_threshold(m.rotations, m.scales, n), _kernels_py.split_threshold(m.rotations, m.scales, n))
    _close(_kc.split_aux(mu, C, n, d, EPS), _kernels_py.split_aux(mu, C, n, d, EPS))
    _close(_kc.split_moments(mu, C, a, n, d, EPS), _kernels_py.split_moments(mu, C, a, n, d, EPS))
    _close(_kc.halfspace_moments(mu, C, a, n, d), _kernels_py.halfspace_moments(mu, C, a, n, d))
    _close(_kc.halfspace_mass(mu, C, a, n, d), _kernels_py.halfspace_mass(mu, C, a, n, d))
    s = _kernels_py.split_moments(mu, C, a, n, d, EPS)
    _close(_kc.merge_moments(*s), _kernels_py.merge_moments(*s))


def test_thread_count_does_not_change_results(batch, monkeypatch):
    m, C, n, d = batch
    monkeypatch.setenv("GSPLIT_THREADS", "1")
    one = _kc.split_moments(m.positions, C, m.opacity_mass, n, d, EPS)
    monkeypatch.setenv("GSPLIT_THREADS", "3")
    three = _kc.split_moments(m.positions, C, m.opacity_mass, n, d, EPS)
    for x, y in zip(one, three):
        assert np.array_equal(x, y)


def test_wrapper_accepts_readonly_views(batch):
    m, C, n, d = batch
    ro = np.broadcast_to(np.array([1.0, 0, 0]), (len(m), 3))
    assert kernels.split_threshold(m.rotations, m.scales, ro).shape == (len(m),)
    with pytest.raises(ValueError):
        kernels.split_threshold(m.rotations, m.scales, np.zeros(3))
