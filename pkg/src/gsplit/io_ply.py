"""Splat PLY reader/writer and point-cloud export.

Files store a peak opacity logit and log scales; in memory each Gaussian
carries an opacity mass multiplying its normalized density.  The two are
converted here, at the file boundary:

    mass = sigmoid(opacity) * (2 pi)^{3/2} * prod(scales)

SH coefficients are kept in file order: ``f_dc_0..2`` followed by
``f_rest_*`` (all red coefficients, then green, then blue).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from .core import SplatModel, sh_length
from .errors import FormatError, IoError

log = logging.getLogger(__name__)

NORM3 = (2.0 * np.pi) ** 1.5
SH_C0 = 0.2820947918
PEAK_CLAMP = 1e-6
_REQUIRED = ["x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]


@dataclass(frozen=True)
class PlyHeaderInfo:
    vertex_count: int
    property_names: tuple[str, ...]
    binary_little_endian: bool


def _read(path) -> PlyData:
    try:
        return PlyData.read(str(path))
    except FileNotFoundError as e:
        raise IoError(f"{path}: no such file") from e
    except PlyParseError as e:
        raise FormatError(f"{path}: malformed PLY: {e}") from e
    except (ValueError, EOFError) as e:
        raise FormatError(f"{path}: unreadable PLY: {e}") from e


def read_header(path) -> PlyHeaderInfo:
    ply = _read(path)
    if "vertex" not in ply:
        raise FormatError(f"{path}: no 'vertex' element")
    v = ply["vertex"]
    return PlyHeaderInfo(v.count, tuple(p.name for p in v.properties), (not ply.text) and ply.byte_order == "<")


def _sh_names(props: list[str]) -> tuple[list[str], int]:
    rest = sorted((p for p in props if p.startswith("f_rest_")), key=lambda s: int(s[7:]))
    if [int(p[7:]) for p in rest] != list(range(len(rest))):
        raise FormatError("f_rest_* properties are not numbered 0..K-1")
    for deg in range(4):
        if len(rest) == sh_length(deg) - 3:
            return ["f_dc_0", "f_dc_1", "f_dc_2"] + rest, deg
    raise FormatError(f"{len(rest)} f_rest_* properties do not match any SH degree 0..3")


def load_model(path) -> SplatModel:
    """Read a binary little-endian splat PLY.

    Raises:
        FormatError: wrong encoding or a required property is missing.
        ValueError: a field holds a non-finite value.
    """
    ply = _read(path)
    if ply.text or ply.byte_order != "<":
        raise FormatError(f"{path}: expected binary_little_endian encoding")
    if "vertex" not in ply:
        raise FormatError(f"{path}: no 'vertex' element")
    v = ply["vertex"]
    props = [p.name for p in v.properties]
    missing = [p for p in _REQUIRED + ["f_dc_0", "f_dc_1", "f_dc_2"] if p not in props]
    if missing:
        raise FormatError(f"{path}: missing vertex properties: {', '.join(missing)}")
    sh_names, deg = _sh_names(props)
    data = v.data

    def cols(names):
        if len(data) == 0:
            return np.zeros((0, len(names)))
        return np.stack([np.asarray(data[n], dtype=np.float64) for n in names], axis=1)

    pos = cols(["x", "y", "z"])
    logit = cols(["opacity"])[:, 0]
    log_s = cols(["scale_0", "scale_1", "scale_2"])
    rot = cols(["rot_0", "rot_1", "rot_2", "rot_3"])
    sh = cols(sh_names)
    for name, arr in (("position", pos), ("opacity", logit), ("scale", log_s), ("rotation", rot), ("sh", sh)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{path}: non-finite {name} values")
    qn = np.linalg.norm(rot, axis=1, keepdims=True)
    if np.any(qn == 0):
        raise ValueError(f"{path}: zero-length rotation quaternion")
    scales = np.exp(log_s)
    peak = 1.0 / (1.0 + np.exp(-logit))
    return SplatModel(pos, rot / qn, scales, peak * NORM3 * np.prod(scales, axis=1), sh, deg)


def peak_opacity(m: SplatModel) -> np.ndarray:
    return m.opacity_mass / (NORM3 * np.prod(m.scales, axis=1))


def save_model(m: SplatModel, path) -> int:
    """Write ``m`` as a float32 binary little-endian splat PLY.

    Returns:
        Number of Gaussians whose peak opacity was clamped into [1e-6, 1 - 1e-6].
    """
    peak = peak_opacity(m)
    clipped = np.clip(peak, PEAK_CLAMP, 1.0 - PEAK_CLAMP)
    n_clamped = int(np.count_nonzero(clipped != peak))
    if n_clamped:
        log.warning("clamped peak opacity of %d gaussian(s) to [%g, %g]", n_clamped, PEAK_CLAMP, 1 - PEAK_CLAMP)
    rest = [f"f_rest_{i}" for i in range(m.sh.shape[1] - 3)]
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", *rest,
             "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    n = len(m)
    cols = np.concatenate([
        m.positions, np.zeros((n, 3)), m.sh,
        np.log(clipped / (1.0 - clipped))[:, None], np.log(m.scales), m.rotations,
    ], axis=1)
    arr = np.empty(n, dtype=[(name, "<f4") for name in names])
    for k, name in enumerate(names):
        arr[name] = cols[:, k]
    try:
        PlyData([PlyElement.describe(arr, "vertex")], text=False, byte_order="<").write(str(path))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return n_clamped


def point_colors(m: SplatModel) -> np.ndarray:
    """8-bit RGB from the degree-0 SH term, shape (N, 3)."""
    rgb = np.clip(0.5 + SH_C0 * m.sh[:, :3], 0.0, 1.0)
    return np.rint(rgb * 255.0).astype(np.uint8)


def export_points(m: SplatModel, path) -> None:
    """Write one coloured point per Gaussian mean."""
    arr = np.empty(len(m), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                  ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    for k, name in enumerate("xyz"):
        arr[name] = m.positions[:, k]
    rgb = point_colors(m)
    for k, name in enumerate(("red", "green", "blue")):
        arr[name] = rgb[:, k]
    try:
        PlyData([PlyElement.describe(arr, "vertex")], text=False, byte_order="<").write(str(path))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
