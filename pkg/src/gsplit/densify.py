"""Anisotropy-driven splitting passes.

``homogenize`` halves over-elongated Gaussians through their centre along the
longest axis until the longest/second-longest scale ratio is bounded.
``densify_for_points`` splits Gaussians whose sorted scales are uneven relative
to the model's mean size, producing a denser and more uniform point set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Gaussian, SplatModel, quat_to_matrix
from .split import split_batch

GAMMA_BINS = np.array([1.0, 1.5, 2.0, 3.0, 5.0, 10.0, np.inf])
_PAIRS = ((0, 1), (1, 2), (0, 2))


@dataclass
class InhomogeneityReport:
    gamma_max: float
    histogram: dict[str, int]
    split_rounds: int
    final_count: int
    exhausted: bool = False
    splits_per_round: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"gamma_max": self.gamma_max, "histogram": self.histogram, "split_rounds": self.split_rounds,
                "final_count": self.final_count, "exhausted": self.exhausted,
                "splits_per_round": self.splits_per_round}


def gamma_values(scales: np.ndarray) -> np.ndarray:
    """Largest over second-largest scale for each row of (N, 3) ``scales``."""
    s = np.sort(np.asarray(scales, dtype=np.float64), axis=1)
    return s[:, 2] / s[:, 1]


def gamma(g: Gaussian) -> float:
    return float(gamma_values(g.scales[None])[0])


def gamma_histogram(values: np.ndarray) -> dict[str, int]:
    counts, _ = np.histogram(values, bins=GAMMA_BINS)
    labels = [f"[{lo:g},{hi:g})" for lo, hi in zip(GAMMA_BINS[:-1], GAMMA_BINS[1:])]
    return dict(zip(labels, counts.tolist()))


def _report(m: SplatModel, g: np.ndarray, rounds: int, exhausted: bool, per_round: list[int]) -> InhomogeneityReport:
    gmax = float(g.max()) if g.size else 1.0
    return InhomogeneityReport(gmax, gamma_histogram(g), rounds, len(m), exhausted, per_round)


def _principal(m: SplatModel, axis_index: np.ndarray) -> np.ndarray:
    """Column ``axis_index[k]`` of the rotation of Gaussian k, shape (N, 3)."""
    R = quat_to_matrix(m.rotations)
    return R[np.arange(len(m)), :, axis_index]


def _split_in_place(m: SplatModel, gate: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> SplatModel:
    idx = np.flatnonzero(gate)
    k = idx.size
    n = len(m)
    left, right = split_batch(m.take(idx), normals[idx], offsets[idx])
    reps = np.where(gate, 2, 1)
    start = np.cumsum(reps) - reps
    src = np.empty(n + k, dtype=np.intp)
    src[start[~gate]] = np.flatnonzero(~gate)
    src[start[gate]] = n + np.arange(k)
    src[start[gate] + 1] = n + k + np.arange(k)
    return SplatModel.concat([m, left, right]).take(src)


def homogenize(m: SplatModel, eta_gamma: float = 5.0, max_rounds: int = 8) -> tuple[SplatModel, InhomogeneityReport]:
    """Split every Gaussian with ``gamma > eta_gamma`` through its centre along its longest axis.

    Children replace their parent in place (left, right).  Running out of
    rounds is reported through ``report.exhausted``, never raised.

    Returns:
        (model, report)
    """
    if not eta_gamma > 1:
        raise ValueError("eta_gamma must exceed 1")
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    cur = m
    per_round: list[int] = []
    g = gamma_values(cur.scales)
    while g.size and np.any(g > eta_gamma) and len(per_round) < max_rounds:
        gate = g > eta_gamma
        n = _principal(cur, np.argmax(cur.scales, axis=1))
        d = -np.einsum("ni,ni->n", n, cur.positions)
        cur = _split_in_place(cur, gate, n, d)
        per_round.append(int(gate.sum()))
        g = gamma_values(cur.scales)
    exhausted = bool(g.size and np.any(g > eta_gamma))
    return cur, _report(cur, g, len(per_round), exhausted, per_round)


def gamma_ij_values(scales: np.ndarray, r_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise ratios ``Tri[i] / (Tri[j] + r_m)`` over sorted-descending scales.

    Args:
        scales: (N, 3) principal scales.
        r_m: non-negative regularizer.

    Returns:
        values (N, 3) for pairs (0,1), (1,2), (0,2), and for each Gaussian the
        sorted index i of its largest ratio, shape (N,).
    """
    if r_m < 0:
        raise ValueError("r_m must be non-negative")
    tri = -np.sort(-np.asarray(scales, dtype=np.float64), axis=1)
    vals = np.stack([tri[:, i] / (tri[:, j] + r_m) for i, j in _PAIRS], axis=1)
    first = np.array([i for i, _ in _PAIRS])
    return vals, first[np.argmax(vals, axis=1)]


def gamma_ij(g: Gaussian, r_m: float) -> tuple[np.ndarray, int]:
    vals, i = gamma_ij_values(g.scales[None], r_m)
    return vals[0], int(i[0])


def densify_for_points(m: SplatModel, eta_gamma: float = 2.0,
                       max_rounds: int = 8) -> tuple[SplatModel, InhomogeneityReport]:
    """Split Gaussians with any ``gamma_ij > eta_gamma`` along principal axis i, two scales off-centre.

    The mean-size regularizer (mean of the per-Gaussian maximum scale) is
    recomputed at the start of each round.  The cut plane is normal to the
    i-th principal direction and sits ``2 Tri[i]`` on its negative side, so the
    Gaussian's signed distance to it is ``+2 Tri[i]``.

    Returns:
        (model, report); ``report.gamma_max`` is the largest ``gamma_ij``.
    """
    if not eta_gamma > 0:
        raise ValueError("eta_gamma must be positive")
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    cur = m
    per_round: list[int] = []

    def measure(model):
        if len(model) == 0:
            return np.zeros((0, 3)), np.zeros(0, dtype=np.intp)
        return gamma_ij_values(model.scales, float(model.scales.max(axis=1).mean()))

    vals, first = measure(cur)
    while vals.size and np.any(vals > eta_gamma) and len(per_round) < max_rounds:
        gate = np.any(vals > eta_gamma, axis=1)
        order = np.argsort(-cur.scales, axis=1, kind="stable")
        axis = order[np.arange(len(cur)), first]
        tri_i = cur.scales[np.arange(len(cur)), axis]
        n = _principal(cur, axis)
        d = 2.0 * tri_i - np.einsum("ni,ni->n", n, cur.positions)
        cur = _split_in_place(cur, gate, n, d)
        per_round.append(int(gate.sum()))
        vals, first = measure(cur)
    exhausted = bool(vals.size and np.any(vals > eta_gamma))
    report = InhomogeneityReport(float(vals.max()) if vals.size else 0.0,
                                 gamma_histogram(gamma_values(cur.scales)) if len(cur) else gamma_histogram(np.zeros(0)),
                                 len(per_round), len(cur), exhausted, per_round)
    return cur, report
