"""``gsplit`` command-line front end.

Machine-readable JSON goes to ``--report`` (or stdout when no report path is
given); human-readable text goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .core import Plane
from .densify import densify_for_points, gamma_histogram, gamma_values, homogenize
from .edit import EditSpec, apply_edit, merge_sibling_pairs
from .errors import GsplitError
from .io_ply import export_points, load_model, save_model
from .metrics import THREE_SIGMA_P, mc_moment_agreement
from .split import halfspace_moments, merge_batch, split_batch

log = logging.getLogger("gsplit")

EXIT_ERROR = 1
EXIT_CHECK = 3


def _emit(doc: dict, report: str | None) -> None:
    text = json.dumps(doc, separators=(",", ":"))
    if report:
        Path(report).write_text(text + "\n")
    else:
        print(text)


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_info(args) -> int:
    m = load_model(args.input)
    g = gamma_values(m.scales) if len(m) else np.zeros(0)
    doc = {
        "count": len(m),
        "sh_degree": m.sh_degree,
        "gamma_max": float(g.max()) if g.size else 1.0,
        "gamma_histogram": gamma_histogram(g),
        "mass_total": float(m.opacity_mass.sum()),
    }
    _info(f"{len(m)} gaussians, SH degree {m.sh_degree}, total opacity mass {doc['mass_total']:.6g}, "
          f"max anisotropy {doc['gamma_max']:.4g}")
    _emit(doc, args.report)
    return 0


def _plan_path(output: str) -> Path:
    return Path(output + ".pairs.json")


def cmd_edit(args) -> int:
    if not args.spec:
        raise SystemExit("gsplit edit: --spec is required")
    spec = EditSpec.from_json(args.spec)
    m = load_model(args.input)
    out, report = apply_edit(m, spec)
    clamped = save_model(out, args.output)
    if report.merge_plan is not None:
        _plan_path(args.output).write_text(
            json.dumps({"rounds": [r.tolist() for r in report.merge_plan]}, separators=(",", ":")) + "\n")
    _info(f"{spec.kind}/{spec.strategy}: {len(m)} -> {len(out)} gaussians, "
          f"E_i={report.e_i:.6g} E_e={report.e_e:.6g} W={report.split_count}"
          + (f", {clamped} opacities clamped" if clamped else ""))
    _emit(json.loads(report.to_json()), args.report)
    return 0


def _pass(args, fn, default_eta: float) -> int:
    eta = default_eta if args.eta_gamma is None else args.eta_gamma
    m = load_model(args.input)
    out, rep = fn(m, eta, args.max_rounds)
    save_model(out, args.output)
    if getattr(args, "points", None):
        export_points(out, args.points)
    _info(f"{len(m)} -> {len(out)} gaussians in {rep.split_rounds} round(s), max ratio {rep.gamma_max:.4g}")
    _emit(rep.as_dict(), args.report)
    if rep.exhausted:
        _info(f"warning: still above {eta:g} after {args.max_rounds} rounds")
        if args.strict:
            return EXIT_CHECK
    return 0


def cmd_homogenize(args) -> int:
    return _pass(args, homogenize, 5.0)


def cmd_densify_points(args) -> int:
    return _pass(args, densify_for_points, 2.0)


def cmd_merge_pairs(args) -> int:
    if not args.spec:
        raise SystemExit("gsplit merge-pairs: --spec <pairs.json> is required")
    plan = json.loads(Path(args.spec).read_text())["rounds"]
    m = load_model(args.input)
    out = merge_sibling_pairs(m, [np.asarray(r, dtype=np.intp) for r in plan])
    save_model(out, args.output)
    _info(f"merged {len(m) - len(out)} sibling pair(s): {len(m)} -> {len(out)} gaussians")
    _emit({"count": len(out), "merged": len(m) - len(out)}, args.report)
    return 0


def cmd_verify(args, cases: int = 100, mc_cases: int = 10) -> int:
    """Split sampled Gaussians at random gated planes and check conservation and sampled moments."""
    m = load_model(args.input)
    if len(m) == 0:
        _info("0 gaussians, nothing to verify")
        _emit({"cases": 0, "ok": True}, args.report)
        return 0
    rng = np.random.default_rng(args.seed)
    idx = np.sort(rng.choice(len(m), size=min(cases, len(m)), replace=False))
    sub = m.take(idx)
    k = len(sub)
    n = rng.normal(size=(k, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    eta = kernels.split_threshold(sub.rotations, sub.scales, n)
    d0 = rng.uniform(-1.0, 1.0, k) * eta
    d = d0 - np.einsum("ni,ni->n", n, sub.positions)
    left, right = split_batch(sub, n, d)

    a0, mu0, C0 = sub.opacity_mass, sub.positions, sub.covariances()
    Cl, Cr = left.covariances(), right.covariances()
    e0 = np.abs(left.opacity_mass + right.opacity_mass - a0) / a0
    first = left.opacity_mass[:, None] * left.positions + right.opacity_mass[:, None] * right.positions
    scale1 = a0 * (np.linalg.norm(mu0, axis=1) + np.sqrt(np.trace(C0, axis1=1, axis2=2)))
    e1 = np.linalg.norm(first - a0[:, None] * mu0, axis=1) / scale1

    def second(a, mu, C):
        return a[:, None, None] * (C + mu[:, :, None] * mu[:, None, :])

    s0 = second(a0, mu0, C0)
    e2 = (np.linalg.norm(second(left.opacity_mass, left.positions, Cl)
                         + second(right.opacity_mass, right.positions, Cr) - s0, axis=(1, 2))
          / np.linalg.norm(s0, axis=(1, 2)))
    back = merge_batch(left, right)
    rt = np.abs(back.covariances() - C0).max(axis=(1, 2)) / np.abs(C0).max(axis=(1, 2))

    mc_n = min(mc_cases, k)
    # family-wise 3-SE level across all sampled comparisons
    level = THREE_SIGMA_P / (3 * mc_n)
    worst_p = 1.0
    for i in range(mc_n):
        g = sub[i]
        p = Plane(n[i], float(d[i]))
        agree = mc_moment_agreement(g, p, halfspace_moments(g, p), args.mc_samples, seed=args.seed + i)
        worst_p = min(worst_p, *agree.p_values())
    doc = {
        "cases": k,
        "mass_residual": float(e0.max()),
        "first_residual": float(e1.max()),
        "second_residual": float(e2.max()),
        "merge_residual": float(rt.max()),
        "mc_cases": mc_n,
        "mc_samples": args.mc_samples,
        "mc_min_p": worst_p,
    }
    ok = bool(e0.max() <= 1e-12 and e1.max() <= 1e-9 and e2.max() <= 1e-9 and rt.max() <= 1e-9
              and worst_p >= level)
    doc["ok"] = ok
    _info(f"{k} splits: residuals mass {doc['mass_residual']:.3e} first {doc['first_residual']:.3e} "
          f"second {doc['second_residual']:.3e} merge {doc['merge_residual']:.3e}; "
          f"sampled moments min p {worst_p:.3g} over {mc_n} case(s) -> {'ok' if ok else 'FAILED'}")
    _emit(doc, args.report)
    return 0 if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsplit", description="Moment-conserving Gaussian splat splitting and editing.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, output=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--input", required=True, help="splat PLY to read")
        if output:
            p.add_argument("--output", required=True, help="splat PLY to write")
        p.add_argument("--report", help="write the JSON report here instead of stdout")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--strict", action="store_true", help="non-zero exit when a pass does not converge")
        p.set_defaults(func=fn)
        return p

    add("info", cmd_info, "summarize a splat PLY", output=False)
    add("edit", cmd_edit, "apply an EditSpec").add_argument("--spec", help="EditSpec JSON file or inline JSON")
    for name, fn, eta in (("homogenize", cmd_homogenize, 5.0), ("densify-points", cmd_densify_points, 2.0)):
        p = add(name, fn, f"anisotropy splitting pass (default threshold {eta:g})")
        p.add_argument("--eta-gamma", type=float, default=None)
        p.add_argument("--max-rounds", type=int, default=8)
        if name == "densify-points":
            p.add_argument("--points", help="also export the result as a coloured point cloud")
    v = add("verify", cmd_verify, "check split conservation and sampled moments on a model", output=False)
    v.add_argument("--mc-samples", type=int, default=100_000)
    add("merge-pairs", cmd_merge_pairs, "merge sibling pairs recorded by a plane split") \
        .add_argument("--spec", help="pairs JSON written next to the edit output")
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="gsplit: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GsplitError, ValueError, OSError, KeyError) as e:
        name = type(e).__name__
        _info(f"gsplit {args.command}: {name}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
