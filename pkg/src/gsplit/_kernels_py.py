"""Numpy implementation of the batched split kernels.

Always importable; used when the compiled ``_kernels_c`` extension is missing
or when ``GSPLIT_PURE_PYTHON=1``.  Every function takes and returns float64
arrays with a leading batch axis of length N.
"""
import numpy as np
from scipy.special import erfc

from .core import quat_to_matrix

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_INV_SQRT2 = 1.0 / np.sqrt(2.0)

BACKEND = "python"


def split_threshold(rotations, scales, normals):
    """3 * max(|R^T n| * scales) per Gaussian."""
    R = quat_to_matrix(rotations)
    proj = np.einsum("nji,nj->ni", R, normals)
    return 3.0 * np.max(np.abs(proj) * scales, axis=1)


def split_aux(mu, cov, normals, offsets, eps):
    L0 = np.einsum("nij,nj->ni", cov, normals)
    tau = np.sqrt(np.einsum("ni,ni->n", normals, L0))
    d0 = np.einsum("ni,ni->n", normals, mu) + offsets
    z = d0 / tau * _INV_SQRT2
    # erfc form of 1 -/+ erf keeps precision in the tails
    c_l = 0.5 * (erfc(z) + eps)
    c_r = 0.5 * (erfc(-z) + eps)
    D = _INV_SQRT_2PI * (np.exp(-z * z) + eps)
    return c_l, c_r, D, L0, tau, d0


def split_moments(mu, cov, alpha, normals, offsets, eps):
    c_l, c_r, D, L0, tau, d0 = split_aux(mu, cov, normals, offsets, eps)
    shift = L0 * (D / tau)[:, None]
    mu_l = mu - shift / c_l[:, None]
    mu_r = mu + shift / c_r[:, None]
    LL = L0[:, :, None] * L0[:, None, :] / (tau * tau)[:, None, None]
    k_l = d0 * D / (tau * c_l) - (D / c_l) ** 2
    k_r = d0 * D / (tau * c_r) + (D / c_r) ** 2
    cov_l = cov + LL * k_l[:, None, None]
    cov_r = cov - LL * k_r[:, None, None]
    return alpha * c_l, mu_l, cov_l, alpha * c_r, mu_r, cov_r


def halfspace_moments(mu, cov, alpha, normals, offsets):
    """Mass, first and second moment integrals of alpha*pdf over n.x + d < 0."""
    c_l, _, D, L0, tau, d0 = split_aux(mu, cov, normals, offsets, 0.0)
    a = alpha
    mass = a * c_l
    first = a[:, None] * (c_l[:, None] * mu - L0 * (D / tau)[:, None])
    mm = cov + mu[:, :, None] * mu[:, None, :]
    LL = L0[:, :, None] * L0[:, None, :]
    cross = mu[:, :, None] * L0[:, None, :]
    cross = cross + np.swapaxes(cross, 1, 2)
    second = a[:, None, None] * (
        c_l[:, None, None] * mm
        + LL * (d0 * D / tau**3)[:, None, None]
        - cross * (D / tau)[:, None, None]
    )
    return mass, first, second


def halfspace_mass(mu, cov, alpha, normals, offsets):
    L0 = np.einsum("nij,nj->ni", cov, normals)
    tau = np.sqrt(np.einsum("ni,ni->n", normals, L0))
    d0 = np.einsum("ni,ni->n", normals, mu) + offsets
    return alpha * 0.5 * erfc(d0 / tau * _INV_SQRT2)


def merge_moments(alpha_l, mu_l, cov_l, alpha_r, mu_r, cov_r):
    a0 = alpha_l + alpha_r
    wl = (alpha_l / a0)[:, None]
    wr = (alpha_r / a0)[:, None]
    mu0 = wl * mu_l + wr * mu_r
    # mixture covariance written around the merged mean for stability
    dl = mu_l - mu0
    dr = mu_r - mu0
    cov0 = (
        wl[:, :, None] * (cov_l + dl[:, :, None] * dl[:, None, :])
        + wr[:, :, None] * (cov_r + dr[:, :, None] * dr[:, None, :])
    )
    return a0, mu0, cov0
