"""Moment-conserving splitting of 3D Gaussian splats at planes and surfaces."""
__version__ = "0.1.0"

from .core import Gaussian, Plane, SplatModel, decompose
from .densify import InhomogeneityReport, densify_for_points, gamma, gamma_ij, homogenize
from .edit import EditSpec, apply_edit, curve_delete_edit, merge_sibling_pairs, plane_split_edit, polygon_delete_edit
from .errors import GsplitError
from .io_ply import export_points, load_model, save_model
from .kernels import BACKEND
from .metrics import EditReport, SplitRecord, evaluate, external_excess, interval_error
from .split import PassThrough, Split, halfspace_moments, merge, split_at_plane

__all__ = [
    "BACKEND", "EditReport", "EditSpec", "Gaussian", "GsplitError", "InhomogeneityReport", "PassThrough",
    "Plane", "Split", "SplatModel", "SplitRecord", "apply_edit", "curve_delete_edit", "decompose",
    "densify_for_points", "evaluate", "export_points", "external_excess", "gamma", "gamma_ij",
    "halfspace_moments", "homogenize", "interval_error", "load_model", "merge", "merge_sibling_pairs",
    "plane_split_edit", "polygon_delete_edit", "save_model", "split_at_plane",
]
