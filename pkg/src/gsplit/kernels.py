"""Backend selection for the batched split kernels.

The compiled extension is used when it imports; otherwise, or when the
environment sets ``GSPLIT_PURE_PYTHON=1``, the numpy implementation is used.
Both expose the same functions and agree to floating-point round-off.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("GSPLIT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND


def _f(a, ndim):
    # writeable + C-contiguous: the compiled backend takes non-const memoryviews
    a = np.require(a, dtype=np.float64, requirements=["C", "W"])
    if a.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {a.shape}")
    return a


def split_threshold(rotations, scales, normals):
    return _impl.split_threshold(_f(rotations, 2), _f(scales, 2), _f(normals, 2))


def split_aux(mu, cov, normals, offsets, eps):
    return _impl.split_aux(_f(mu, 2), _f(cov, 3), _f(normals, 2), _f(offsets, 1), float(eps))


def split_moments(mu, cov, alpha, normals, offsets, eps):
    return _impl.split_moments(_f(mu, 2), _f(cov, 3), _f(alpha, 1), _f(normals, 2),
                               _f(offsets, 1), float(eps))


def halfspace_moments(mu, cov, alpha, normals, offsets):
    return _impl.halfspace_moments(_f(mu, 2), _f(cov, 3), _f(alpha, 1), _f(normals, 2), _f(offsets, 1))


def halfspace_mass(mu, cov, alpha, normals, offsets):
    return _impl.halfspace_mass(_f(mu, 2), _f(cov, 3), _f(alpha, 1), _f(normals, 2), _f(offsets, 1))


def merge_moments(alpha_l, mu_l, cov_l, alpha_r, mu_r, cov_r):
    return _impl.merge_moments(_f(alpha_l, 1), _f(mu_l, 2), _f(cov_l, 3),
                               _f(alpha_r, 1), _f(mu_r, 2), _f(cov_r, 3))
