"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL criterion k`` line; the lines are
repeated in the pytest terminal summary.  Run alone with

    python3 -m pytest tests/test_acceptance.py -v
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.special import erf

from conftest import ACCEPTANCE_LINES
from gsplit.core import Gaussian, Plane, SplatModel, matrix_to_quat
from gsplit.densify import densify_for_points, gamma_ij_values, gamma_values, homogenize
from gsplit.edit import plane_split_edit
from gsplit.errors import FormatError
from gsplit.io_ply import load_model, save_model
from gsplit.metrics import mc_moment_agreement
from gsplit.scenes import box_shell, mass_from_peak, random_model
from gsplit.split import halfspace_moments, merge_batch, split_at_plane, split_batch, split_threshold

from _util import conservation_residuals, gated_batch, model_residuals

pytestmark = pytest.mark.slow


def record(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_conservation():
    t = time.perf_counter()
    m, n, d = gated_batch(10_000, seed=1)
    left, right = split_batch(m, n, d)
    e0, e1, e2 = conservation_residuals(m, left, right)
    dt = time.perf_counter() - t
    ok = e0.max() <= 1e-12 and e1.max() <= 1e-9 and e2.max() <= 1e-9 and dt < 10
    record(1, ok, f"10^4 splits, max residuals mass {e0.max():.2e} first {e1.max():.2e} "
                  f"second {e2.max():.2e}, {dt:.2f} s")


def test_criterion_2_truncated_moment_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(42)
    m = random_model(100, seed=42, log_scale=(-1.0, 0.5))
    worst = 1.0
    failures = 0
    for i in range(100):
        g = m[i]
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        eta = split_threshold(g, Plane(n, 0.0))
        d0 = rng.uniform(-eta, eta)
        p = Plane(n, d0 - n @ g.position)
        agree = mc_moment_agreement(g, p, halfspace_moments(g, p), 1_000_000, seed=1000 + i)
        worst = min(worst, *agree.p_values())
        failures += not agree.within()
    dt = time.perf_counter() - t
    record(2, failures == 0 and dt < 60,
           f"100 cases x 10^6 samples, {failures} outside 3 SE (smallest tail probability {worst:.4f}, "
           f"3 SE corresponds to 0.0027), {dt:.1f} s")


def test_criterion_3_gold_case():
    unit = Gaussian(np.zeros(3), np.array([1.0, 0, 0, 0]), np.ones(3), 1.0)
    out = split_at_plane(unit, Plane(np.array([1.0, 0, 0]), 0.0))
    l = out.left
    errs = (abs(l.opacity_mass - 0.5), abs(l.position[0] + np.sqrt(2 / np.pi)),
            abs(l.covariance[0, 0] - (1 - 2 / np.pi)))
    record(3, max(errs) <= 1e-12, f"alpha_l {l.opacity_mass:.12f}, mu_l,x {l.position[0]:.10f}, "
                                  f"Sigma_l,xx {l.covariance[0, 0]:.10f}, max error {max(errs):.1e}")


def test_criterion_4_split_merge_round_trip():
    m, n, d = gated_batch(10_000, seed=4)
    back = merge_batch(*split_batch(m, n, d))
    ea, em, ec = model_residuals(back, m)
    worst = max(ea.max(), em.max(), ec.max())
    record(4, worst <= 1e-9, f"10^4 round trips, max relative error alpha {ea.max():.1e} mu {em.max():.1e} "
                             f"Sigma {ec.max():.1e}")


def test_criterion_5_table_orderings():
    t = time.perf_counter()
    m = box_shell(50_000, half_extent=(0.6, 0.9, 0.6), seed=1)
    p = Plane.from_normal([0.5401, 0.8316, 0.0963], 0.0)
    gap = 0.4
    _, move = plane_split_edit(m, p, gap, "move")
    _, remove = plane_split_edit(m, p, gap, "remove")
    _, once = plane_split_edit(m, p, gap, "ours", 1)
    _, twice = plane_split_edit(m, p, gap, "ours", 2)
    dt = time.perf_counter() - t
    # the E_e ratio shrinks with the gap; report the touching case alongside
    r0 = plane_split_edit(m, p, 0.0, "ours")[1].e_e / plane_split_edit(m, p, 0.0, "move")[1].e_e
    r_e = once.e_e / move.e_e
    r_i = once.e_i / remove.e_i
    ok = r_e <= 0.01 and r_i <= 0.5 and twice.e_e <= once.e_e and dt < 120
    record(5, ok, f"{len(m)} splats, gap {gap}: Ours/Move E_e {r_e:.4f} (<= 0.01), Ours/Remove E_i {r_i:.2e} "
                  f"(<= 0.5), Ours twice/once E_e {twice.e_e / once.e_e:.3f} (<= 1), {dt:.1f} s; "
                  f"at gap 0 Ours/Move E_e is {r0:.3f}")


def _aligned_model(gammas, seed=0):
    rng = np.random.default_rng(seed)
    k = len(gammas)
    sc = np.stack([np.asarray(gammas, float), np.ones(k), rng.uniform(0.2, 1.0, k)], axis=1) * 0.05
    R = np.linalg.qr(rng.normal(size=(k, 3, 3)))[0]
    R *= np.linalg.det(R)[:, None, None]
    return SplatModel(rng.normal(size=(k, 3)), matrix_to_quat(R), sc, mass_from_peak(np.full(k, 0.5), sc),
                      np.zeros((k, 3)), 0)


def test_criterion_6_homogenize_fixpoint():
    models = [random_model(500, seed=s, log_scale=(-3.0, 0.0)) for s in range(3)]
    models += [box_shell(5000, seed=3), _aligned_model([5.5, 12.0, 40.0, 250.0])]
    rounds, worst = [], 0.0
    for m in models:
        _, rep = homogenize(m, 5.0, 8)
        rounds.append(rep.split_rounds)
        worst = max(worst, rep.gamma_max)
    # shrink factor along the split axis, round by round, on eigen-aligned splats
    cur = _aligned_model([250.0])
    shrink_err = 0.0
    for _ in range(6):
        before = cur.scales.max(axis=1)
        cur, _ = homogenize(cur, 5.0, 1)
        after = cur.scales.max(axis=1)
        # each parent becomes two children with the same shrunken long axis (or one unsplit)
        shrink_err = max(shrink_err, np.abs(after[::2] / before - np.sqrt(1 - 2 / np.pi)).max())
    ok = worst <= 5.0 and max(rounds) <= 8 and shrink_err <= 1e-6
    record(6, ok, f"{len(models)} models reach max gamma {worst:.3f} in <= {max(rounds)} rounds; "
                  f"shrink factor error {shrink_err:.1e}")


def test_criterion_7_densify_for_points():
    rng = np.random.default_rng(7)
    n = 200
    sc = np.full((n, 3), 0.01) * np.exp(rng.uniform(-0.2, 0.2, (n, 3)))
    sc[:12] = np.array([0.3, 0.05, 0.04]) * np.exp(rng.uniform(-0.3, 0.3, (12, 3)))
    R = np.linalg.qr(rng.normal(size=(n, 3, 3)))[0]
    R *= np.linalg.det(R)[:, None, None]
    m = SplatModel(rng.normal(size=(n, 3)), matrix_to_quat(R), sc, mass_from_peak(np.full(n, 0.5), sc),
                   np.zeros((n, 3)), 0)
    # each split keeps 97.7% of the mass in a child only ~6% narrower, so this
    # scene needs more than the default 8 rounds; the fixpoint contract applies
    # once the pass stops on its own
    _, rep8 = densify_for_points(m, 2.0, 8)
    out, rep = densify_for_points(m, 2.0, 32)
    vals, _ = gamma_ij_values(out.scales, float(out.scales.max(axis=1).mean()))
    # mass fractions of the first round's children
    first, _ = densify_for_points(m, 2.0, 1)
    src = np.flatnonzero(np.repeat(np.arange(n), np.where(np.isin(np.arange(n), np.arange(12)), 2, 1)) < 12)
    fr = first.opacity_mass[src].reshape(-1, 2) / m.opacity_mass[:12, None]
    target = np.array([0.5 * (1 - erf(np.sqrt(2))), 0.5 * (1 + erf(np.sqrt(2)))])
    frac_err = np.abs(fr - target).max()
    ok = vals.max() <= 2.0 and not rep.exhausted and frac_err <= 1e-9
    record(7, ok, f"{n} -> {len(out)} splats, fixpoint after {rep.split_rounds} rounds with max gamma_ij "
                  f"{vals.max():.3f} (default 8 rounds stop at {rep8.gamma_max:.3f}); "
                  f"child mass fractions ({fr[:, 0].mean():.5f}, {fr[:, 1].mean():.5f}), error {frac_err:.1e}")


def _fuzz_model(rng):
    n = int(rng.integers(0, 300))
    deg = int(rng.integers(0, 4))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    sc = np.exp(rng.uniform(-8, 3, (n, 3)))
    peak = rng.uniform(1e-4, 1 - 1e-4, n)
    return SplatModel(rng.normal(size=(n, 3)) * 10 ** rng.uniform(-2, 3), q, sc, mass_from_peak(peak, sc),
                      rng.normal(size=(n, 3 * (deg + 1) ** 2)), deg)


MALFORMED = {
    "bad magic": b"plx\nformat binary_little_endian 1.0\nend_header\n",
    "ascii encoding": b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n",
    "big endian": b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n",
    "missing properties": b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\n"
                          b"property float y\nproperty float z\nend_header\n",
    "no vertex element": b"ply\nformat binary_little_endian 1.0\nelement face 0\n"
                         b"property list uchar int vertex_indices\nend_header\n",
    "truncated body": b"ply\nformat binary_little_endian 1.0\nelement vertex 5\nproperty float x\nend_header\n\0\0",
    "unknown keyword": b"ply\nformat binary_little_endian 1.0\nbogus line\nend_header\n",
}


def test_criterion_8_ply_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(100):
        m = _fuzz_model(rng)
        save_model(m, tmp_path / "a.ply")
        a = load_model(tmp_path / "a.ply")
        save_model(a, tmp_path / "b.ply")
        b = load_model(tmp_path / "b.ply")
        for f in ("positions", "rotations", "scales", "opacity_mass", "sh"):
            x, y = getattr(a, f), getattr(b, f)
            if x.size:
                worst = max(worst, float((np.abs(x - y) / np.maximum(np.abs(x), 1e-300)).max()))
    rejected = {}
    for name, blob in MALFORMED.items():
        p = tmp_path / "bad.ply"
        p.write_bytes(blob)
        try:
            load_model(p)
            rejected[name] = None
        except FormatError as e:
            rejected[name] = str(e)
    bad = [k for k, v in rejected.items() if not v]
    ok = worst <= 1e-6 and not bad
    record(8, ok, f"100 fuzzed models, max relative field error {worst:.1e}; "
                  f"{len(MALFORMED) - len(bad)}/{len(MALFORMED)} malformed files rejected with a diagnostic")


def _run(*args):
    return subprocess.run([sys.executable, "-m", "gsplit", *args], capture_output=True, check=False)


def test_criterion_9_cli_determinism(tmp_path):
    save_model(box_shell(4000, half_extent=(0.6, 0.9, 0.6), seed=9, sh_degree=1), tmp_path / "in.ply")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "plane_split", "plane": {"normal": [0.5401, 0.8316, 0.0963], "d": 0.0},
                                "gap": 0.2, "strategy": "ours", "repeat": 2}))
    inp = str(tmp_path / "in.ply")
    runs = []
    for k in range(2):
        o = tmp_path / f"run{k}"
        o.mkdir()
        outs = [
            _run("edit", "--input", inp, "--spec", str(spec), "--output", str(o / "e.ply"), "--report", str(o / "e.json")),
            _run("homogenize", "--input", inp, "--output", str(o / "h.ply"), "--eta-gamma", "2"),
            _run("densify-points", "--input", inp, "--output", str(o / "d.ply"), "--points", str(o / "p.ply")),
            _run("verify", "--input", inp, "--seed", "42", "--mc-samples", "20000"),
            _run("info", "--input", str(o / "e.ply")),
        ]
        files = {f.name: f.read_bytes() for f in sorted(o.iterdir())}
        runs.append(([r.returncode for r in outs], [r.stdout for r in outs], files))
    same = runs[0] == runs[1]
    codes = runs[0][0]
    record(9, same and codes == [0] * 5,
           f"5 commands run twice: exit codes {codes}, {len(runs[0][2])} output files "
           f"{'byte-identical' if same else 'DIFFER'}")
