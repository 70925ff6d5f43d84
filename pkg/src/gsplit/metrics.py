"""Interval error and external excess of a set of split Gaussians.

Each record pairs a final Gaussian with the Gaussian it replaced and the half
space it is meant to occupy.  The interval error compares the two masses inside
that half space; the external excess is the mass the final Gaussian leaks
outside it.  Both are averaged over the number of records.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.stats import chi2, norm

from . import kernels
from .core import Gaussian, Plane, SplatModel, matrix_to_quat, quat_to_matrix
from .errors import EmptyInput

Side = Literal["negative", "positive"]


@dataclass
class EditReport:
    e_i: float = 0.0
    e_e: float = 0.0
    split_count: int = 0
    removed_count: int = 0
    passthrough_count: int = 0
    # per split round, the index of each left child; None once deletions break sibling adjacency
    merge_plan: list | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> str:
        return json.dumps({"e_i": self.e_i, "e_e": self.e_e, "W": self.split_count,
                           "removed": self.removed_count, "passthrough": self.passthrough_count},
                          separators=(",", ":"))

    def as_dict(self) -> dict:
        return {"e_i": self.e_i, "e_e": self.e_e, "split_count": self.split_count,
                "removed_count": self.removed_count, "passthrough_count": self.passthrough_count}


@dataclass(frozen=True, eq=False)
class SplitRecord:
    child: Gaussian
    parent: Gaussian
    side: Side
    plane: Plane

    @classmethod
    def assign(cls, child: Gaussian, parent: Gaussian, plane: Plane) -> "SplitRecord":
        """Record with the side taken from the child mean; ties go positive."""
        side = "positive" if plane.normal @ child.position + plane.offset >= 0 else "negative"
        return cls(child, parent, side, plane)


@dataclass(eq=False)
class RecordSet:
    """Column-wise batch of split records.

    Attributes:
        child, parent: models of equal length N.
        positive: (N,) True where the record's half space is ``n.x + d >= 0``.
        normals: (N, 3) plane normals.
        offsets: (N,) plane offsets.
    """

    child: SplatModel
    parent: SplatModel
    positive: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        n = len(self.child)
        if len(self.parent) != n:
            raise ValueError("child and parent models must be the same length")
        self.positive = np.broadcast_to(np.asarray(self.positive, dtype=bool), (n,)).copy()
        self.normals = np.broadcast_to(np.asarray(self.normals, dtype=np.float64), (n, 3)).copy()
        self.offsets = np.broadcast_to(np.asarray(self.offsets, dtype=np.float64), (n,)).copy()

    def __len__(self) -> int:
        return len(self.child)

    @classmethod
    def from_records(cls, records: Sequence[SplitRecord]) -> "RecordSet":
        records = list(records)
        if not records:
            raise EmptyInput("no split records")
        return cls(
            SplatModel.from_gaussians([r.child for r in records]),
            SplatModel.from_gaussians([r.parent for r in records]),
            np.array([r.side == "positive" for r in records]),
            np.stack([r.plane.normal for r in records]),
            np.array([r.plane.offset for r in records]),
        )

    @classmethod
    def assign(cls, child: SplatModel, parent: SplatModel, normals, offsets) -> "RecordSet":
        """Sides from the child means (ties to the positive side)."""
        normals = np.broadcast_to(np.asarray(normals, dtype=np.float64), (len(child), 3))
        sd = np.einsum("ni,ni->n", child.positions, normals) + offsets
        return cls(child, parent, sd >= 0, normals, offsets)

    @staticmethod
    def concat(sets: Sequence["RecordSet"]) -> "RecordSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            raise EmptyInput("no split records")
        return RecordSet(
            SplatModel.concat([s.child for s in sets]),
            SplatModel.concat([s.parent for s in sets]),
            np.concatenate([s.positive for s in sets]),
            np.concatenate([s.normals for s in sets]),
            np.concatenate([s.offsets for s in sets]),
        )

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "RecordSet":
        """Apply one rigid motion x -> R x + t to every Gaussian and plane."""
        R = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64)

        def move(m: SplatModel) -> SplatModel:
            Rs = R @ quat_to_matrix(m.rotations)
            return SplatModel(m.positions @ R.T + t, matrix_to_quat(Rs), m.scales, m.opacity_mass, m.sh, m.sh_degree)

        normals = self.normals @ R.T
        offsets = self.offsets - normals @ t
        return RecordSet(move(self.child), move(self.parent), self.positive, normals, offsets)


def _as_set(records) -> RecordSet:
    if isinstance(records, RecordSet):
        if len(records) == 0:
            raise EmptyInput("no split records")
        return records
    return RecordSet.from_records(records)


def _side_masses(m: SplatModel, positive: np.ndarray, normals, offsets) -> tuple[np.ndarray, np.ndarray]:
    # both sides evaluated through erfc directly so small tails keep full precision
    sign = np.where(positive, -1.0, 1.0)
    C = m.covariances()
    own = kernels.halfspace_mass(m.positions, C, m.opacity_mass, normals * sign[:, None], offsets * sign)
    other = kernels.halfspace_mass(m.positions, C, m.opacity_mass, -normals * sign[:, None], -offsets * sign)
    return own, other


def record_terms(records) -> tuple[np.ndarray, np.ndarray]:
    """Per-record interval-error and external-excess contributions (unnormalized)."""
    rs = _as_set(records)
    child_own, child_other = _side_masses(rs.child, rs.positive, rs.normals, rs.offsets)
    parent_own, _ = _side_masses(rs.parent, rs.positive, rs.normals, rs.offsets)
    return np.abs(child_own - parent_own), child_other


def interval_error(records) -> float:
    ei, _ = record_terms(records)
    return float(ei.sum() / ei.size)


def external_excess(records) -> float:
    _, ee = record_terms(records)
    return float(ee.sum() / ee.size)


def evaluate(records, removed: int = 0, passthrough: int = 0) -> EditReport:
    ei, ee = record_terms(records)
    W = ei.size
    return EditReport(float(ei.sum() / W), float(ee.sum() / W), W, removed, passthrough)


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


def sample_gaussian(g: Gaussian, samples: int, seed: int) -> np.ndarray:
    """(samples, 3) draws from the normalized density of ``g``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, 3))
    return g.position + (z * g.scales) @ quat_to_matrix(g.rotation).T


def mc_halfspace_mass(g: Gaussian, p: Plane, samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo estimate of the opacity mass of ``g`` on the negative side of ``p``.

    Returns:
        (estimate, standard error)
    """
    if samples < 1000:
        raise ValueError("mc_halfspace_mass needs at least 1000 samples")
    x = sample_gaussian(g, samples, seed)
    frac = float(np.mean(x @ p.normal + p.offset < 0))
    a = g.opacity_mass
    return a * frac, a * np.sqrt(frac * (1.0 - frac) / samples)


def mc_halfspace_moments(g: Gaussian, p: Plane, samples: int = 1_000_000, seed: int = 0):
    """Monte-Carlo estimates of the negative-side moment integrals with standard errors.

    Returns:
        ((mass, first, second), (se_mass, se_first, se_second)) with the same
        shapes as :func:`gsplit.split.halfspace_moments`.
    """
    if samples < 1000:
        raise ValueError("mc_halfspace_moments needs at least 1000 samples")
    x = sample_gaussian(g, samples, seed)
    ind = (x @ p.normal + p.offset < 0).astype(np.float64)
    a = g.opacity_mass
    f0 = a * ind
    f1 = f0[:, None] * x
    f2 = f0[:, None, None] * (x[:, :, None] * x[:, None, :])
    est = (f0.mean(), f1.mean(axis=0), f2.mean(axis=0))
    se = tuple(f.std(axis=0, ddof=1) / np.sqrt(samples) for f in (f0, f1, f2))
    return est, se


_IU = np.triu_indices(3)
# two-sided tail mass beyond 3 standard errors of a normal
THREE_SIGMA_P = 2.0 * norm.sf(3.0)


@dataclass(frozen=True)
class MomentAgreement:
    """Standardized distances between closed-form and sampled half-space moments.

    ``z_mass`` is a plain z-score.  ``d2_first`` and ``d2_second`` are squared
    Mahalanobis distances under the sampled covariance of the estimator, over
    the 3 mean components and the 6 distinct second-moment entries.
    """

    z_mass: float
    d2_first: float
    d2_second: float

    def p_values(self) -> tuple[float, float, float]:
        return (float(2.0 * norm.sf(abs(self.z_mass))), float(chi2.sf(self.d2_first, 3)),
                float(chi2.sf(self.d2_second, 6)))

    def within(self, p_level: float = THREE_SIGMA_P) -> bool:
        """True when no quantity is further out than the ``p_level`` tail (3 SE by default)."""
        return min(self.p_values()) >= p_level


def _mahalanobis2(samples: np.ndarray, target: np.ndarray) -> float:
    n = samples.shape[0]
    diff = samples.mean(axis=0) - target
    cov = np.cov(samples, rowvar=False) / n
    return float(diff @ np.linalg.lstsq(cov, diff, rcond=None)[0])


def mc_moment_agreement(g: Gaussian, p: Plane, closed_form, samples: int = 1_000_000,
                        seed: int = 0) -> MomentAgreement:
    """Compare closed-form negative-side moments ``(mass, first, second)`` against sampling.

    Args:
        closed_form: tuple (mass, first (3,), second (3, 3)).
    """
    if samples < 1000:
        raise ValueError("mc_moment_agreement needs at least 1000 samples")
    x = sample_gaussian(g, samples, seed)
    f0 = g.opacity_mass * (x @ p.normal + p.offset < 0)
    f1 = f0[:, None] * x
    f2 = f0[:, None] * (x[:, _IU[0]] * x[:, _IU[1]])
    mass, first, second = closed_form
    se0 = f0.std(ddof=1) / np.sqrt(samples)
    z = (f0.mean() - mass) / se0 if se0 > 0 else (0.0 if f0.mean() == mass else np.inf)
    return MomentAgreement(float(z), _mahalanobis2(f1, np.asarray(first)),
                           _mahalanobis2(f2, np.asarray(second)[_IU]))
