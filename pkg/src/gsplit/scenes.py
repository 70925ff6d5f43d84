"""Synthetic splat scenes for tests, the verify command and benchmarks."""
from __future__ import annotations

import numpy as np

from .core import SplatModel, matrix_to_quat, sh_length

NORM3 = (2.0 * np.pi) ** 1.5


def mass_from_peak(peak: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Opacity mass of a Gaussian whose density peak carries opacity ``peak``."""
    return peak * NORM3 * np.prod(scales, axis=-1)


def box_shell(n: int = 50_000, half_extent=(1.0, 1.0, 1.0), tangent_scale: float = 0.03,
              elongation: float = 4.0, thickness: float = 0.003, sh_degree: int = 0,
              seed: int = 0) -> SplatModel:
    """Flat anisotropic splats covering the surface of an axis-aligned box.

    Each splat lies in its face: two tangent scales (one stretched by up to
    ``elongation``) and a thin ``thickness`` along the face normal.
    """
    rng = np.random.default_rng(seed)
    h = np.asarray(half_extent, dtype=np.float64)
    areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]]).repeat(2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)

    pos = rng.uniform(-1.0, 1.0, (n, 3)) * h
    pos[np.arange(n), axis] = sign * h[axis]

    normal = np.zeros((n, 3))
    normal[np.arange(n), axis] = sign
    t1 = np.zeros((n, 3))
    t1[np.arange(n), (axis + 1) % 3] = 1.0
    t2 = np.cross(normal, t1)
    theta = rng.uniform(0, np.pi, n)[:, None]
    u = np.cos(theta) * t1 + np.sin(theta) * t2
    v = np.cross(normal, u)
    R = np.stack([u, v, normal], axis=2)

    s_u = tangent_scale * np.exp(rng.uniform(0.0, np.log(elongation), n))
    s_v = tangent_scale * np.exp(rng.normal(0.0, 0.25, n))
    scales = np.stack([s_u, s_v, np.full(n, thickness)], axis=1)
    peak = rng.uniform(0.3, 0.99, n)
    sh = np.zeros((n, sh_length(sh_degree)))
    sh[:, :3] = rng.normal(0.0, 0.5, (n, 3))
    if sh.shape[1] > 3:
        sh[:, 3:] = rng.normal(0.0, 0.05, (n, sh.shape[1] - 3))
    return SplatModel(pos, matrix_to_quat(R), scales, mass_from_peak(peak, scales), sh, sh_degree)


def random_model(n: int = 100, sh_degree: int = 0, seed: int = 0, log_scale=(-3.0, 0.0)) -> SplatModel:
    """Gaussians with random pose, log-uniform scales and peak opacity in (0.05, 0.95)."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1
    scales = np.exp(rng.uniform(*log_scale, (n, 3)))
    peak = rng.uniform(0.05, 0.95, n)
    sh = rng.normal(0.0, 0.5, (n, sh_length(sh_degree)))
    return SplatModel(rng.normal(0.0, 1.0, (n, 3)), q, scales, mass_from_peak(peak, scales), sh, sh_degree)
