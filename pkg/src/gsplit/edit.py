"""Plane split, polygon delete and curve delete edits with their baselines.

Every edit returns the edited model and an :class:`EditReport`.  Metrics are
computed from one record per evaluated Gaussian: split children are compared
with the Gaussian they were split from, untouched Gaussians with themselves,
and Gaussians deleted by the remove baseline contribute a zero-mass record.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import kernels
from .core import Gaussian, Plane, SplatModel
from .metrics import EditReport, RecordSet, evaluate
from .split import merge_batch, split_batch, split_gate
from .surfaces import Ellipsoid, ImplicitSurface, Prism, Sphere, in_polygon, point_segment_distance

Strategy = Literal["ours", "move", "remove", "filter"]

_ALLOWED = {
    "plane_split": ("ours", "move", "remove"),
    "polygon_delete": ("ours", "filter"),
    "curve_delete": ("ours", "filter"),
}


@dataclass
class EditSpec:
    kind: Literal["plane_split", "polygon_delete", "curve_delete"]
    strategy: Strategy = "ours"
    repeat: int = 1
    gap: float = 0.0
    plane: Plane | None = None
    prism: Prism | None = None
    surface: ImplicitSurface | None = None

    def __post_init__(self):
        if self.kind not in _ALLOWED:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if self.strategy not in _ALLOWED[self.kind]:
            raise ValueError(f"strategy {self.strategy!r} not available for {self.kind}; "
                             f"choose one of {_ALLOWED[self.kind]}")
        if not 1 <= self.repeat <= 3:
            raise ValueError("repeat must be in [1, 3]")
        if self.gap < 0:
            raise ValueError("gap must be non-negative")
        needed = {"plane_split": "plane", "polygon_delete": "prism", "curve_delete": "surface"}[self.kind]
        if getattr(self, needed) is None:
            raise ValueError(f"{self.kind} edit needs a {needed!r} entry")

    @classmethod
    def from_dict(cls, doc: dict) -> "EditSpec":
        kw = dict(kind=doc["kind"], strategy=doc.get("strategy", "ours"),
                  repeat=int(doc.get("repeat", 1)), gap=float(doc.get("gap", 0.0)))
        if "plane" in doc:
            kw["plane"] = Plane.from_normal(doc["plane"]["normal"], float(doc["plane"].get("d", 0.0)))
        if "prism" in doc:
            p = doc["prism"]
            kw["prism"] = Prism(p["vertices"], p["axis"], float(p["extent"]))
        if "surface" in doc:
            s = doc["surface"]
            if s["type"] == "sphere":
                kw["surface"] = Sphere(s["center"], float(s["radius"]))
            elif s["type"] == "ellipsoid":
                kw["surface"] = Ellipsoid(s["center"], s["semiaxes"])
            else:
                raise ValueError(f"unsupported surface type {s['type']!r} (sphere or ellipsoid)")
        return cls(**kw)

    @classmethod
    def from_json(cls, path_or_text: str | Path) -> "EditSpec":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        return cls.from_dict(json.loads(text))


class _Tracker:
    """Working set of an edit: current Gaussians, their immediate parents and split planes."""

    def __init__(self, model: SplatModel):
        n = len(model)
        self.cur = model
        self.parent = model
        self.was_split = np.zeros(n, dtype=bool)
        self.normals = np.full((n, 3), np.nan)
        self.offsets = np.full(n, np.nan)
        self.rounds: list[np.ndarray] | None = []
        self.removed = 0

    def split(self, gate: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> int:
        """Replace every gated Gaussian in place by its (left, right) children."""
        n = len(self.cur)
        normals = np.broadcast_to(normals, (n, 3))
        offsets = np.broadcast_to(offsets, (n,))
        idx = np.flatnonzero(gate)
        k = idx.size
        if k == 0:
            return 0
        sub = self.cur.take(idx)
        left, right = split_batch(sub, normals[idx], offsets[idx])
        reps = np.where(gate, 2, 1)
        start = np.cumsum(reps) - reps
        src = np.empty(n + k, dtype=np.intp)
        src[start[~gate]] = np.flatnonzero(~gate)
        src[start[gate]] = n + np.arange(k)
        src[start[gate] + 1] = n + k + np.arange(k)
        self.cur = SplatModel.concat([self.cur, left, right]).take(src)
        self.parent = SplatModel.concat([self.parent, sub, sub]).take(src)
        self.was_split = np.concatenate([self.was_split, np.ones(2 * k, dtype=bool)])[src]
        self.normals = np.concatenate([self.normals, normals[idx], normals[idx]])[src]
        self.offsets = np.concatenate([self.offsets, offsets[idx], offsets[idx]])[src]
        if self.rounds is not None:
            self.rounds.append(start[gate])
        return k

    def delete(self, mask: np.ndarray) -> None:
        if not np.any(mask):
            return
        keep = ~mask
        self.removed += int(mask.sum())
        self.cur = self.cur.take(keep)
        self.parent = self.parent.take(keep)
        self.was_split = self.was_split[keep]
        self.normals = self.normals[keep]
        self.offsets = self.offsets[keep]
        self.rounds = None

    def records(self, final: SplatModel, normals: np.ndarray, offsets: np.ndarray) -> RecordSet:
        """Records for ``final`` (the current set after any translation).

        ``normals``/``offsets`` give the plane of each untouched Gaussian; split
        children keep the plane they were split at.
        """
        n = np.where(self.was_split[:, None], self.normals, normals)
        d = np.where(self.was_split, self.offsets, offsets)
        parent = _where_model(self.was_split, self.parent, final)
        return RecordSet.assign(final, parent, n, d)


def _where_model(mask: np.ndarray, a: SplatModel, b: SplatModel) -> SplatModel:
    m = mask[:, None]
    return SplatModel(np.where(m, a.positions, b.positions), np.where(m, a.rotations, b.rotations),
                      np.where(m, a.scales, b.scales), np.where(mask, a.opacity_mass, b.opacity_mass),
                      np.where(m, a.sh, b.sh), b.sh_degree)


def _report(records: RecordSet | None, removed: int, passthrough: int) -> EditReport:
    if records is None or len(records) == 0:
        return EditReport(0.0, 0.0, 0, removed, passthrough)
    return evaluate(records, removed=removed, passthrough=passthrough)


# ---------------------------------------------------------------------------
# translation


def translate_side(m: SplatModel, p: Plane, side: Literal["negative", "positive"], delta) -> SplatModel:
    """Add ``delta`` to every Gaussian whose mean lies on ``side`` of ``p`` (ties count as positive)."""
    pos = m.positions @ p.normal + p.offset >= 0
    mask = pos if side == "positive" else ~pos
    out = m.positions.copy()
    out[mask] += np.asarray(delta, dtype=np.float64)
    return m.with_positions(out)


def _separate(m: SplatModel, p: Plane, gap: float) -> SplatModel:
    if gap == 0:
        return m
    pos = m.positions @ p.normal + p.offset >= 0
    shift = np.where(pos, 0.5 * gap, -0.5 * gap)[:, None] * p.normal
    return m.with_positions(m.positions + shift)


# ---------------------------------------------------------------------------
# plane split


def plane_split_edit(m: SplatModel, p: Plane, gap: float = 0.0, strategy: Strategy = "ours",
                     repeat: int = 1) -> tuple[SplatModel, EditReport]:
    """Cut ``m`` at ``p`` and pull the two sides apart by ``gap`` along the normal.

    Strategies:
        ours: split every Gaussian within its threshold of the plane; with
            ``repeat`` > 1 the children are split again at the same plane.
        move: assign whole Gaussians to a side by their mean.
        remove: delete the Gaussians the plane passes through.
    """
    EditSpec("plane_split", strategy, repeat, gap, plane=p)
    N = len(m)
    if strategy == "ours":
        t = _Tracker(m)
        for _ in range(repeat):
            _, gate = split_gate(t.cur, p.normal, p.offset)
            if t.split(gate, p.normal, p.offset) == 0:
                break
        out = _separate(t.cur, p, gap)
        recs = t.records(out, p.normal, p.offset) if len(out) else None
        report = _report(recs, 0, int((~t.was_split).sum()))
        report.merge_plan = t.rounds
        return out, report
    if strategy == "move":
        out = _separate(m, p, gap)
        recs = RecordSet.assign(out, out, p.normal, p.offset) if N else None
        return out, _report(recs, 0, N)
    # remove
    _, gate = split_gate(m, p.normal, p.offset)
    out = _separate(m.take(~gate), p, gap)
    gone = m.take(gate)
    ghost = gone.copy()
    ghost.opacity_mass[:] = 0.0
    parts = []
    if len(out):
        parts.append(RecordSet.assign(out, out, p.normal, p.offset))
    if len(gone):
        parts.append(RecordSet(ghost, gone, gone.positions @ p.normal + p.offset >= 0, p.normal, p.offset))
    recs = RecordSet.concat(parts) if parts else None
    return out, _report(recs, int(gate.sum()), len(out))


def merge_sibling_pairs(m: SplatModel, plan: list[np.ndarray]) -> SplatModel:
    """Undo in-place splits: ``plan`` lists, per split round, the index of each left child."""
    cur = m
    for lefts in reversed(plan):
        lefts = np.asarray(lefts, dtype=np.intp)
        if lefts.size == 0:
            continue
        merged = merge_batch(cur.take(lefts), cur.take(lefts + 1))
        keep = np.ones(len(cur), dtype=bool)
        keep[lefts + 1] = False
        base = cur.copy()
        base.positions[lefts] = merged.positions
        base.rotations[lefts] = merged.rotations
        base.scales[lefts] = merged.scales
        base.opacity_mass[lefts] = merged.opacity_mass
        base.sh[lefts] = merged.sh
        cur = base.take(keep)
    return cur


# ---------------------------------------------------------------------------
# segment / face tests


def _directional_threshold(m: SplatModel, directions: np.ndarray) -> np.ndarray:
    return kernels.split_threshold(m.rotations, m.scales, directions)


def _segment_hits(m: SplatModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dist, c = point_segment_distance(m.positions, a, b)
    u = m.positions - c
    safe = dist > 0
    u[safe] /= dist[safe, None]
    u[~safe] = (b - a) / np.linalg.norm(b - a)
    return (dist == 0) | (dist < _directional_threshold(m, u))


def segment_gaussian_intersects(g: Gaussian, a, b) -> bool:
    """Edge-projection test between a Gaussian and segment ``ab``.

    With ``I = ((a - mu).(a - b)) ((b - mu).(a - b))``, ``I <= 0`` means the
    mean projects inside the segment and the perpendicular distance decides;
    otherwise the distance to the nearer endpoint does.  The distance is
    compared with the Gaussian's threshold along the direction to the segment.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.allclose(a, b, rtol=0, atol=0):
        raise ValueError("segment endpoints must differ")
    return bool(_segment_hits(SplatModel.from_gaussians([g]), a, b)[0])


def _face_overlap(m: SplatModel, n: np.ndarray, poly: np.ndarray) -> np.ndarray:
    hit = in_polygon(m.positions, poly, n)
    for i in range(len(poly)):
        rest = ~hit
        if not rest.any():
            break
        hit[rest] = _segment_hits(m.take(rest), poly[i], poly[(i + 1) % len(poly)])
    return hit


def _nearest_face(prism: Prism, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plane of the prism face closest to each point."""
    best = np.full(len(x), np.inf)
    normals = np.zeros((len(x), 3))
    offsets = np.zeros(len(x))
    for n, d, poly in prism.faces:
        inside = in_polygon(x, poly, n)
        dist = np.abs(x @ n + d)
        edge = np.full(len(x), np.inf)
        for i in range(len(poly)):
            edge = np.minimum(edge, point_segment_distance(x, poly[i], poly[(i + 1) % len(poly)])[0])
        dist = np.where(inside, dist, edge)
        better = dist < best
        best[better] = dist[better]
        normals[better] = n
        offsets[better] = d
    return normals, offsets


# ---------------------------------------------------------------------------
# delete edits


def polygon_delete_edit(m: SplatModel, prism: Prism, strategy: Strategy = "ours",
                        repeat: int = 1) -> tuple[SplatModel, EditReport]:
    """Delete the part of ``m`` inside a triangular prism.

    ``ours`` splits Gaussians that straddle a face at that face's outward
    plane, face by face, then drops every Gaussian whose mean is inside; the
    pass is repeated ``repeat`` times.  ``filter`` only drops Gaussians whose
    mean is inside.
    """
    EditSpec("polygon_delete", strategy, repeat, prism=prism)
    t = _Tracker(m)
    if strategy == "ours":
        for _ in range(repeat):
            touched = 0
            for n, d, poly in prism.faces:
                _, gate = split_gate(t.cur, n, d)
                if gate.any():
                    sel = np.flatnonzero(gate)
                    gate[sel] = _face_overlap(t.cur.take(sel), n, poly)
                touched += t.split(gate, n, d)
            t.delete(prism.contains(t.cur.positions))
            if touched == 0:
                break
    else:
        t.delete(prism.contains(t.cur.positions))
    out = t.cur
    if len(out) == 0:
        return out, _report(None, t.removed, 0)
    n, d = _nearest_face(prism, out.positions)
    return out, _report(t.records(out, n, d), t.removed, int((~t.was_split).sum()))


def _surface_planes(surface: ImplicitSurface, m: SplatModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tangent planes at the foot points of the Gaussian means, plus a near-surface mask.

    Exact foot points are only computed for Gaussians within reach of the
    surface; the rest get the one-step linearization of ``B`` at their mean,
    which is enough to classify them as untouched.
    """
    x = m.positions
    b = surface.value(x)
    g = surface.gradient(x)
    gn = np.linalg.norm(g, axis=1)
    lin = np.abs(b) / np.where(gn > 0, gn, np.inf)
    near = lin < 6.0 * m.scales.max(axis=1)
    normals = g / np.where(gn > 0, gn, 1.0)[:, None]
    offsets = -(np.einsum("ni,ni->n", normals, x) - b / np.where(gn > 0, gn, np.inf))
    if near.any():
        n_near, d_near = surface.tangent_planes(x[near])
        normals[near] = n_near
        offsets[near] = d_near
    return normals, offsets, near


def curve_delete_edit(m: SplatModel, surface: ImplicitSurface, strategy: Strategy = "ours",
                      repeat: int = 1) -> tuple[SplatModel, EditReport]:
    """Delete the part of ``m`` inside a closed implicit surface.

    ``ours`` splits near-surface Gaussians at the tangent plane of their foot
    point (outward normal) and drops every Gaussian whose mean is inside,
    ``repeat`` times.  ``filter`` only drops Gaussians with ``B(mu) < 0``.
    """
    EditSpec("curve_delete", strategy, repeat, surface=surface)
    t = _Tracker(m)
    if strategy == "ours":
        for _ in range(repeat):
            if len(t.cur) == 0:
                break
            n, d, near = _surface_planes(surface, t.cur)
            _, gate = split_gate(t.cur, n, d)
            touched = t.split(gate & near, n, d)
            t.delete(surface.value(t.cur.positions) < 0)
            if touched == 0:
                break
    else:
        t.delete(surface.value(t.cur.positions) < 0)
    out = t.cur
    if len(out) == 0:
        return out, _report(None, t.removed, 0)
    n, d, _ = _surface_planes(surface, out)
    return out, _report(t.records(out, n, d), t.removed, int((~t.was_split).sum()))


def apply_edit(m: SplatModel, spec: EditSpec) -> tuple[SplatModel, EditReport]:
    if spec.kind == "plane_split":
        return plane_split_edit(m, spec.plane, spec.gap, spec.strategy, spec.repeat)
    if spec.kind == "polygon_delete":
        return polygon_delete_edit(m, spec.prism, spec.strategy, spec.repeat)
    return curve_delete_edit(m, spec.surface, spec.strategy, spec.repeat)
