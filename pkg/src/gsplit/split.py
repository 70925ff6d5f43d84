"""Closed-form moment-conserving split of a Gaussian at a plane, and its inverse.

Each child is the Gaussian whose zero, first and second moments equal those of
the parent's density restricted to one side of the plane.  Summed over both
children, the moments of the parent are therefore reproduced exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from . import kernels
from .core import SCALE_FLOOR, Gaussian, Plane, SplatModel, covariance, decompose_batch
from .errors import DegenerateChild, ZeroMass

EPS = 1e-20

Side = Literal["negative", "positive"]


@dataclass(frozen=True, eq=False)
class SplitAuxiliaries:
    """Intermediate quantities of one split.

    ``c_l``/``c_r`` are the parent's mass fractions on each side (each carries
    half of ``EPS``), ``d_amp`` is the scaled density of the parent's plane
    profile at the plane, ``l0 = cov @ n``, ``tau = sqrt(n^T cov n)`` and
    ``d0`` the signed distance of the parent mean to the plane.
    """

    c_l: float
    c_r: float
    d_amp: float
    l0: np.ndarray
    tau: float
    d0: float


@dataclass(frozen=True, eq=False)
class Split:
    left: Gaussian
    right: Gaussian


@dataclass(frozen=True, eq=False)
class PassThrough:
    original: Gaussian


SplitOutcome = Union[Split, PassThrough]


def _one(g: Gaussian, p: Plane):
    return (g.position[None], covariance(g)[None], np.array([g.opacity_mass]),
            p.normal[None], np.array([p.offset]))


def split_aux(g: Gaussian, p: Plane, eps: float = EPS) -> SplitAuxiliaries:
    mu, cov, _, n, d = _one(g, p)
    c_l, c_r, D, L0, tau, d0 = kernels.split_aux(mu, cov, n, d, eps)
    return SplitAuxiliaries(float(c_l[0]), float(c_r[0]), float(D[0]), L0[0], float(tau[0]), float(d0[0]))


def split_threshold(g: Gaussian, p: Plane) -> float:
    """Largest |d0| at which ``g`` is still split by ``p``: 3 * max(|R^T n| * scales)."""
    return float(kernels.split_threshold(g.rotation[None], g.scales[None], p.normal[None])[0])


def split_at_plane(g: Gaussian, p: Plane, eps: float = EPS, floor: float = SCALE_FLOOR) -> SplitOutcome:
    """Split ``g`` at ``p`` unless the plane lies outside its influence range.

    Returns:
        ``Split(left, right)`` with ``left`` on the negative side of the plane,
        or ``PassThrough(g)`` when ``|d0| >= eta``.
    """
    d0 = float(signed_distance_of(g, p))
    if abs(d0) >= split_threshold(g, p):
        return PassThrough(g)
    model = SplatModel.from_gaussians([g])
    left, right = split_batch(model, p.normal[None], np.array([p.offset]), eps=eps, floor=floor)
    return Split(left[0], right[0])


def signed_distance_of(g: Gaussian, p: Plane) -> float:
    return float(g.position @ p.normal + p.offset)


def merge(left: Gaussian, right: Gaussian, floor: float = SCALE_FLOOR) -> Gaussian:
    """Moment-preserving merge of two Gaussians into one."""
    a0 = left.opacity_mass + right.opacity_mass
    if not a0 > 0:
        raise ZeroMass("cannot merge Gaussians with zero total opacity mass")
    return merge_batch(SplatModel.from_gaussians([left]), SplatModel.from_gaussians([right]), floor)[0]


def halfspace_moments(g: Gaussian, p: Plane, side: Side = "negative") -> tuple[float, np.ndarray, np.ndarray]:
    """Integrals of alpha*pdf, alpha*x*pdf and alpha*x*x^T*pdf over one side of ``p``.

    The negative side is ``n.x + d < 0``.  The returned first and second
    moments are *integrals*, not normalized by the mass.
    """
    mu, cov, a, n, d = _one(g, p)
    if side == "positive":
        n, d = -n, -d
    elif side != "negative":
        raise ValueError(f"side must be 'negative' or 'positive', got {side!r}")
    mass, first, second = kernels.halfspace_moments(mu, cov, a, n, d)
    return float(mass[0]), first[0], second[0]


# ---------------------------------------------------------------------------
# batched forms used by the model-level passes


def split_gate(model: SplatModel, normals: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-Gaussian signed distance and whether ``|d0| < eta``.

    Args:
        normals: (N, 3) unit normals, one plane per Gaussian.
        offsets: (N,) plane offsets.
    """
    normals = np.broadcast_to(np.asarray(normals, dtype=np.float64), (len(model), 3))
    offsets = np.broadcast_to(np.asarray(offsets, dtype=np.float64), (len(model),))
    d0 = np.einsum("ni,ni->n", model.positions, normals) + offsets
    eta = kernels.split_threshold(model.rotations, model.scales, normals)
    return d0, np.abs(d0) < eta


def split_batch(model: SplatModel, normals: np.ndarray, offsets: np.ndarray,
                eps: float = EPS, floor: float = SCALE_FLOOR) -> tuple[SplatModel, SplatModel]:
    """Split every Gaussian of ``model`` at its own plane, without gating.

    Returns:
        (left, right) models aligned index-by-index with ``model``.
    """
    n = len(model)
    normals = np.broadcast_to(np.asarray(normals, dtype=np.float64), (n, 3))
    offsets = np.broadcast_to(np.asarray(offsets, dtype=np.float64), (n,))
    if n == 0:
        return model.copy(), model.copy()
    a_l, mu_l, cov_l, a_r, mu_r, cov_r = kernels.split_moments(
        model.positions, model.covariances(), model.opacity_mass, normals, offsets, eps)
    q_l, s_l = decompose_batch(cov_l, floor)
    q_r, s_r = decompose_batch(cov_r, floor)
    for s in (s_l, s_r):
        dead = np.all(s <= floor, axis=1)
        if np.any(dead):
            raise DegenerateChild(f"{int(dead.sum())} child covariance(s) collapsed to the scale floor")
    left = SplatModel(mu_l, q_l, s_l, a_l, model.sh.copy(), model.sh_degree)
    right = SplatModel(mu_r, q_r, s_r, a_r, model.sh.copy(), model.sh_degree)
    return left, right


def merge_batch(left: SplatModel, right: SplatModel, floor: float = SCALE_FLOOR) -> SplatModel:
    """Pairwise merge of two equally long models."""
    if len(left) != len(right):
        raise ValueError("merge_batch needs models of equal length")
    if len(left) == 0:
        return left.copy()
    a0 = left.opacity_mass + right.opacity_mass
    if np.any(a0 <= 0):
        raise ZeroMass("cannot merge Gaussians with zero total opacity mass")
    a, mu, cov = kernels.merge_moments(left.opacity_mass, left.positions, left.covariances(),
                                       right.opacity_mass, right.positions, right.covariances())
    q, s = decompose_batch(cov, floor)
    sh = (left.opacity_mass[:, None] * left.sh + right.opacity_mass[:, None] * right.sh) / a0[:, None]
    return SplatModel(mu, q, s, a, sh, left.sh_degree)
