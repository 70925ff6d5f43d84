"""Splat domain types and the covariance algebra shared by every other module.

A :class:`Gaussian` carries its opacity as a *mass*: the weight that multiplies
a normalized density.  :class:`SplatModel` stores many Gaussians as parallel
arrays so the batched kernels in :mod:`gsplit.kernels` can operate on them
directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import NonSymmetric, SingularCovariance

SCALE_FLOOR = 1e-12
# relative eigenvalue gap below which two principal axes count as tied
_TIE_RTOL = 1e-12
_SYM_RTOL = 1e-9


def sh_length(degree: int) -> int:
    """Number of SH coefficients (all three color channels) for ``degree``."""
    return 3 * (degree + 1) ** 2


def sh_degree_for_length(n: int) -> int:
    for deg in range(4):
        if sh_length(deg) == n:
            return deg
    raise ValueError(f"{n} SH coefficients do not match any degree in [0, 3]")


# ---------------------------------------------------------------------------
# rotations


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from (w, x, y, z) quaternions.

    Args:
        q: (..., 4) quaternions; normalized internally.

    Returns:
        (..., 3, 3) rotation matrices.
    """
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """(w, x, y, z) unit quaternions with w >= 0 from proper rotation matrices."""
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    q = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_quat(scalar_first=True)
    q[q[:, 0] < 0] *= -1.0
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q[0] if single else q


# ---------------------------------------------------------------------------
# covariance algebra


def covariance_from(rotation: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """R diag(s^2) R^T for one or many (quaternion, scales) pairs."""
    R = quat_to_matrix(rotation)
    s2 = np.asarray(scales, dtype=np.float64) ** 2
    C = (R * s2[..., None, :]) @ np.swapaxes(R, -1, -2)
    return 0.5 * (C + np.swapaxes(C, -1, -2))


def _canonical_eigvecs(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Pick a deterministic basis inside tied eigenspaces of one matrix.

    ``w`` is sorted descending.  Within a tie group the basis is rebuilt from
    the coordinate axes with the largest projection, kept in axis order, which
    keeps the result as close to the identity as the spectrum allows.
    """
    scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny)
    groups: list[list[int]] = [[0]]
    for i in range(1, 3):
        if abs(w[i] - w[groups[-1][-1]]) <= _TIE_RTOL * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    if all(len(g) == 1 for g in groups):
        return V
    V = V.copy()
    eye = np.eye(3)
    for g in groups:
        if len(g) == 1:
            continue
        if len(g) == 3:
            V[:] = eye
            break
        Vg = V[:, g]
        P = Vg @ Vg.T
        proj = P @ eye
        norms = np.linalg.norm(proj, axis=0)
        axes = sorted(np.argsort(-norms, kind="stable")[: len(g)])
        u1 = proj[:, axes[0]] / norms[axes[0]]
        u2 = proj[:, axes[1]] - (u1 @ proj[:, axes[1]]) * u1
        u2 /= np.linalg.norm(u2)
        V[:, g[0]] = u1
        V[:, g[1]] = u2
    return V


def decompose_batch(cov: np.ndarray, floor: float = SCALE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Sanitizing eigendecomposition of many covariances.

    Eigenvalues are clamped at zero, the eigenvector matrix is multiplied by
    its determinant so it is a proper rotation, and scales below ``floor``
    are raised to it.

    Args:
        cov: (N, 3, 3) symmetric matrices.
        floor: smallest scale returned, in scene units.

    Returns:
        quats (N, 4) in (w, x, y, z) order and scales (N, 3), descending.
    """
    cov = np.asarray(cov, dtype=np.float64).reshape(-1, 3, 3)
    if cov.shape[0] == 0:
        return np.zeros((0, 4)), np.zeros((0, 3))
    asym = np.abs(cov - np.swapaxes(cov, 1, 2)).max(axis=(1, 2))
    mag = np.abs(cov).max(axis=(1, 2))
    bad = asym > _SYM_RTOL * np.maximum(mag, np.finfo(float).tiny)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NonSymmetric(f"covariance {i} asymmetric by {asym[i]:.3e} (magnitude {mag[i]:.3e})")
    S = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    w, V = np.linalg.eigh(S)
    w = w[:, ::-1]
    V = V[:, :, ::-1]

    scale = np.maximum(np.abs(w).max(axis=1), np.finfo(float).tiny)
    gaps = np.abs(np.diff(w, axis=1)).min(axis=1)
    for i in np.flatnonzero(gaps <= _TIE_RTOL * scale):
        V[i] = _canonical_eigvecs(w[i], V[i])

    # deterministic column signs: largest-magnitude component positive
    idx = np.abs(V).argmax(axis=1)
    signs = np.sign(np.take_along_axis(V, idx[:, None, :], axis=1))
    signs[signs == 0] = 1.0
    V = V * signs

    det = np.linalg.det(V)
    V = V * np.sign(det)[:, None, None]

    lam = np.maximum(w, 0.0)
    scales = np.maximum(np.sqrt(lam), floor)
    return matrix_to_quat(V), scales


def decompose(cov: np.ndarray, floor: float = SCALE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Single-matrix version of :func:`decompose_batch`."""
    q, s = decompose_batch(np.asarray(cov)[None], floor)
    return q[0], s[0]


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True, eq=False)
class Gaussian:
    """One anisotropic splat.

    ``opacity_mass`` multiplies a normalized density, so the total opacity a
    Gaussian deposits in space equals this number.
    """

    position: np.ndarray
    rotation: np.ndarray
    scales: np.ndarray
    opacity_mass: float
    sh_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        sc = np.asarray(self.scales, dtype=np.float64).reshape(3)
        sh = np.asarray(self.sh_coeffs, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(rot) - 1.0) > 1e-9:
            raise ValueError(f"rotation quaternion not unit length: {rot}")
        if not np.all(sc > 0):
            raise ValueError(f"scales must be strictly positive: {sc}")
        if not self.opacity_mass >= 0:
            raise ValueError(f"opacity_mass must be non-negative: {self.opacity_mass}")
        sh_degree_for_length(sh.size)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "scales", sc)
        object.__setattr__(self, "opacity_mass", float(self.opacity_mass))
        object.__setattr__(self, "sh_coeffs", sh)

    @classmethod
    def from_covariance(cls, position, cov, opacity_mass, sh_coeffs=None, floor=SCALE_FLOOR) -> "Gaussian":
        q, s = decompose(cov, floor)
        if sh_coeffs is None:
            sh_coeffs = np.zeros(3)
        return cls(position, q, s, opacity_mass, sh_coeffs)

    @property
    def covariance(self) -> np.ndarray:
        return covariance(self)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def replace(self, **kw) -> "Gaussian":
        vals = dict(position=self.position, rotation=self.rotation, scales=self.scales,
                    opacity_mass=self.opacity_mass, sh_coeffs=self.sh_coeffs)
        vals.update(kw)
        return Gaussian(**vals)


@dataclass(frozen=True, eq=False)
class Plane:
    """Oriented plane ``{x : normal . x + offset = 0}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(f"plane normal must be unit length, got |n| = {np.linalg.norm(n)!r}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_normal(cls, normal, offset: float = 0.0) -> "Plane":
        """Build a plane from a possibly unnormalized normal; ``offset`` is rescaled with it."""
        n = np.asarray(normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        return cls(n / norm, offset / norm)

    @classmethod
    def through(cls, point, normal) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(n, -float(n @ np.asarray(point, dtype=np.float64)))


@dataclass(eq=False)
class SplatModel:
    """Ordered collection of Gaussians stored column-wise.

    Attributes:
        positions: (N, 3)
        rotations: (N, 4) unit quaternions (w, x, y, z)
        scales: (N, 3)
        opacity_mass: (N,)
        sh: (N, 3 * (sh_degree + 1) ** 2)
        sh_degree: in [0, 3]
    """

    positions: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacity_mass: np.ndarray
    sh: np.ndarray
    sh_degree: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.opacity_mass = np.ascontiguousarray(self.opacity_mass, dtype=np.float64).reshape(n)
        if not 0 <= self.sh_degree <= 3:
            raise ValueError(f"sh_degree must be in [0, 3], got {self.sh_degree}")
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64).reshape(n, sh_length(self.sh_degree))

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "SplatModel":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0),
                   np.zeros((0, sh_length(sh_degree))), sh_degree)

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian], sh_degree: int | None = None) -> "SplatModel":
        gs = list(gaussians)
        if sh_degree is None:
            sh_degree = sh_degree_for_length(gs[0].sh_coeffs.size) if gs else 0
        if not gs:
            return cls.empty(sh_degree)
        if any(g.sh_coeffs.size != sh_length(sh_degree) for g in gs):
            raise ValueError("all Gaussians must carry the same number of SH coefficients")
        return cls(
            np.stack([g.position for g in gs]),
            np.stack([g.rotation for g in gs]),
            np.stack([g.scales for g in gs]),
            np.array([g.opacity_mass for g in gs]),
            np.stack([g.sh_coeffs for g in gs]),
            sh_degree,
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.positions[i], self.rotations[i], self.scales[i],
                        self.opacity_mass[i], self.sh[i])

    @property
    def gaussians(self) -> list[Gaussian]:
        return [self[i] for i in range(len(self))]

    def covariances(self) -> np.ndarray:
        return covariance_from(self.rotations, self.scales)

    def take(self, idx) -> "SplatModel":
        """Subset by integer index array or boolean mask, preserving order."""
        return SplatModel(self.positions[idx], self.rotations[idx], self.scales[idx],
                          self.opacity_mass[idx], self.sh[idx], self.sh_degree)

    def with_positions(self, positions: np.ndarray) -> "SplatModel":
        return SplatModel(positions, self.rotations, self.scales, self.opacity_mass, self.sh, self.sh_degree)

    def copy(self) -> "SplatModel":
        return SplatModel(self.positions.copy(), self.rotations.copy(), self.scales.copy(),
                          self.opacity_mass.copy(), self.sh.copy(), self.sh_degree)

    @staticmethod
    def concat(models: Sequence["SplatModel"]) -> "SplatModel":
        models = list(models)
        deg = models[0].sh_degree
        if any(m.sh_degree != deg for m in models):
            raise ValueError("cannot concatenate models with different SH degrees")
        return SplatModel(
            np.concatenate([m.positions for m in models]),
            np.concatenate([m.rotations for m in models]),
            np.concatenate([m.scales for m in models]),
            np.concatenate([m.opacity_mass for m in models]),
            np.concatenate([m.sh for m in models]),
            deg,
        )

    def moments(self) -> tuple[float, np.ndarray, np.ndarray]:
        """Model-wide zero, first and second moments of sum(alpha * pdf)."""
        a = self.opacity_mass
        mu = self.positions
        C = self.covariances()
        m0 = float(a.sum())
        m1 = (a[:, None] * mu).sum(axis=0)
        m2 = (a[:, None, None] * (C + mu[:, :, None] * mu[:, None, :])).sum(axis=0)
        return m0, m1, m2


# ---------------------------------------------------------------------------
# single-Gaussian operations


def covariance(g: Gaussian) -> np.ndarray:
    """Covariance R diag(scales^2) R^T of ``g``."""
    return covariance_from(g.rotation, g.scales)


_NORM3 = (2.0 * np.pi) ** -1.5


def pdf_at(g: Gaussian, x) -> float:
    """Normalized density of ``g`` at ``x`` (opacity mass not applied)."""
    C = covariance(g)
    det = float(np.prod(g.scales)) ** 2
    if det < 1e-300:
        raise SingularCovariance(f"covariance determinant {det:.3e} too small")
    r = np.asarray(x, dtype=np.float64) - g.position
    maha = float(r @ np.linalg.solve(C, r))
    return _NORM3 / np.sqrt(det) * np.exp(-0.5 * maha)


def signed_distance(p: Plane, x) -> float | np.ndarray:
    """n . x + d; accepts a single point or an (N, 3) array."""
    return np.asarray(x, dtype=np.float64) @ p.normal + p.offset
