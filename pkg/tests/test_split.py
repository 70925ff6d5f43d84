import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf
from scipy.stats import norm, truncnorm

from gsplit.core import Gaussian, Plane, SplatModel, covariance_from
from gsplit.errors import DegenerateChild, ZeroMass
from gsplit.metrics import mc_moment_agreement
from gsplit.split import (EPS, PassThrough, Split, halfspace_moments, merge, merge_batch, split_at_plane,
                          split_aux, split_batch, split_gate, split_threshold)

from _util import conservation_residuals, gated_batch, gated_plane, model_residuals, random_gaussian

seeds = st.integers(0, 2**32 - 1)
UNIT = Gaussian(np.zeros(3), np.array([1.0, 0, 0, 0]), np.ones(3), 1.0)
X0 = Plane(np.array([1.0, 0, 0]), 0.0)


def test_aux_at_center():
    aux = split_aux(UNIT, X0)
    assert aux.c_l == 0.5 * (1 + EPS) and aux.c_r == 0.5 * (1 + EPS)
    assert np.isclose(aux.d_amp, 1 / np.sqrt(2 * np.pi), rtol=1e-15)
    assert np.allclose(aux.l0, [1.0, 0, 0]) and aux.tau == 1.0 and aux.d0 == 0.0


def test_aux_saturates_far_from_plane():
    aux = split_aux(UNIT, Plane(np.array([1.0, 0, 0]), 10.0))
    assert abs(aux.c_r - 1.0) <= 1e-15
    assert aux.d_amp <= 1e-21 + EPS / np.sqrt(2 * np.pi)
    assert np.isclose(aux.c_l + aux.c_r, 1.0 + EPS, rtol=0, atol=1e-16)


def test_gold_half_normal_against_truncnorm():
    out = split_at_plane(UNIT, X0)
    assert isinstance(out, Split)
    left, right = out.left, out.right
    tn = truncnorm(-np.inf, 0.0)
    assert abs(left.opacity_mass - 0.5) <= 1e-12
    assert abs(left.position[0] - tn.mean()) <= 1e-12
    assert abs(left.covariance[0, 0] - tn.var()) <= 1e-12
    assert abs(left.position[0] + 0.7978845608028654) <= 1e-12
    assert abs(left.covariance[0, 0] - 0.3633802276324186) <= 1e-12
    assert np.allclose(left.covariance[1:, 1:], np.eye(2), atol=1e-15)
    assert np.allclose(right.position, -left.position, atol=1e-15)
    assert np.allclose(right.covariance, left.covariance, atol=1e-15)


@pytest.mark.parametrize("d0_over_tau", [-2.5, -0.7, 0.3, 1.9])
def test_eigen_aligned_split_matches_truncnorm(d0_over_tau):
    # plane normal along the second principal axis; exact one-dimensional oracle
    rng = np.random.default_rng(11)
    g = random_gaussian(rng)
    R = g.rotation_matrix
    n = R[:, 1]
    tau = g.scales[1]
    d0 = d0_over_tau * tau
    p = Plane(n, d0 - n @ g.position)
    out = split_at_plane(g, p)
    # coordinate t = n.(x - mu0) ~ N(0, tau^2); left half is t < -d0
    lo = truncnorm(-np.inf, -d0 / tau, scale=tau)
    hi = truncnorm(-d0 / tau, np.inf, scale=tau)
    for child, tn, frac in ((out.left, lo, norm.cdf(-d0 / tau)), (out.right, hi, norm.sf(-d0 / tau))):
        assert np.isclose(child.opacity_mass, g.opacity_mass * frac, rtol=1e-12)
        assert np.allclose(child.position, g.position + tn.mean() * n, rtol=0, atol=1e-12 * (1 + np.abs(g.position).max()))
        C = child.covariance
        assert np.isclose(n @ C @ n, tn.var(), rtol=1e-9)
        # directions orthogonal to n keep the parent's variance
        for k in (0, 2):
            assert np.isclose(R[:, k] @ C @ R[:, k], g.scales[k] ** 2, rtol=1e-9)


def test_pass_through_far_plane():
    p = Plane(np.array([1.0, 0, 0]), -100.0)
    assert isinstance(split_at_plane(UNIT, p), PassThrough)
    assert split_threshold(UNIT, p) == 3.0


def test_threshold_uses_principal_frame_projection():
    # long axis along x; normal along x gives 3 * 10, along y gives 3 * 1
    g = Gaussian(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([10.0, 1.0, 0.5]), 1.0)
    assert split_threshold(g, Plane(np.array([1.0, 0, 0]), 0.0)) == 30.0
    assert split_threshold(g, Plane(np.array([0.0, -1, 0]), 0.0)) == 3.0


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_split_properties(seed):
    rng = np.random.default_rng(seed)
    g = random_gaussian(rng)
    p = gated_plane(g, rng)
    out = split_at_plane(g, p)
    assert isinstance(out, Split)
    m = SplatModel.from_gaussians([g])
    left, right = SplatModel.from_gaussians([out.left]), SplatModel.from_gaussians([out.right])
    e0, e1, e2 = conservation_residuals(m, left, right)
    assert e0[0] <= 1e-12 and e1[0] <= 1e-9 and e2[0] <= 1e-9
    aux = split_aux(g, p)
    if aux.d_amp > EPS:
        sd = lambda x: p.normal @ x + p.offset
        assert sd(out.left.position) < aux.d0 < sd(out.right.position)
    for c in (out.left, out.right):
        assert np.all(np.linalg.eigvalsh(c.covariance) > 0)
        assert np.array_equal(c.sh_coeffs, g.sh_coeffs)
    back = merge(out.left, out.right)
    ea, em, ec = model_residuals(SplatModel.from_gaussians([back]), m)
    assert ea[0] <= 1e-9 and em[0] <= 1e-9 and ec[0] <= 1e-9


def test_children_spd_bulk():
    m, n, d = gated_batch(10_000, seed=5)
    left, right = split_batch(m, n, d)
    for c in (left, right):
        assert np.all(np.linalg.eigvalsh(c.covariances()) > 0)


def test_gate_and_batch_agree_with_single():
    m, n, d = gated_batch(50, seed=9)
    d0, gate = split_gate(m, n, d)
    assert gate.all()
    left, right = split_batch(m, n, d)
    for i in (0, 17, 49):
        out = split_at_plane(m[i], Plane(n[i], d[i]))
        assert np.allclose(out.left.position, left.positions[i], rtol=0, atol=1e-14)
        assert np.allclose(out.right.covariance, right.covariances()[i], rtol=1e-12, atol=1e-15)


def test_degenerate_child_raises():
    tiny = Gaussian(np.zeros(3), np.array([1.0, 0, 0, 0]), np.full(3, 1e-13), 1.0)
    with pytest.raises(DegenerateChild):
        split_at_plane(tiny, X0)


def test_merge_examples():
    rng = np.random.default_rng(2)
    g = random_gaussian(rng)
    mm = merge(g, g)
    assert np.isclose(mm.opacity_mass, 2 * g.opacity_mass)
    assert np.allclose(mm.position, g.position)
    assert np.allclose(mm.covariance, g.covariance, rtol=1e-12)
    s = np.full(3, 1e-4)
    a = Gaussian(np.array([1.0, 0, 0]), np.array([1.0, 0, 0, 0]), s, 1.0, np.array([1.0, 0, 0]))
    b = Gaussian(np.array([-1.0, 0, 0]), np.array([1.0, 0, 0, 0]), s, 3.0, np.array([0.0, 1, 0]))
    ab = merge(a, b)
    # mixture oracle: mean (1 - 3) / 4, E[x^2] = 1, so variance 1 - 0.25 plus the component variance
    assert np.allclose(ab.position, [-0.5, 0, 0])
    assert np.isclose(ab.covariance[0, 0], 0.75 + 1e-8, rtol=1e-12)
    assert np.allclose(ab.sh_coeffs, [0.25, 0.75, 0.0])
    a2 = merge(a, b.replace(opacity_mass=1.0))
    assert np.allclose(a2.position, 0, atol=1e-15)
    assert np.allclose(a2.covariance, np.diag([1.0, 0, 0]), atol=1e-7)


def test_merge_zero_mass():
    z = UNIT.replace(opacity_mass=0.0)
    with pytest.raises(ZeroMass):
        merge(z, z)


def test_merge_batch_round_trip_bulk():
    m, n, d = gated_batch(10_000, seed=21)
    back = merge_batch(*split_batch(m, n, d))
    ea, em, ec = model_residuals(back, m)
    assert max(ea.max(), em.max(), ec.max()) <= 1e-9
    assert np.allclose(back.sh, m.sh)


def test_halfspace_whole_space_limit():
    rng = np.random.default_rng(4)
    g = random_gaussian(rng)
    far = Plane(np.array([0.0, 0, 1]), -(g.position[2] + 1e3))  # everything on the negative side
    mass, first, second = halfspace_moments(g, far)
    a, mu, C = g.opacity_mass, g.position, g.covariance
    assert abs(mass - a) <= 1e-12 * a
    assert np.allclose(first, a * mu, rtol=0, atol=1e-12 * a * np.abs(mu).max())
    assert np.allclose(second, a * (C + np.outer(mu, mu)), rtol=0, atol=1e-12 * a * np.abs(C + np.outer(mu, mu)).max())
    assert halfspace_moments(g, far, side="positive")[0] <= 1e-300


def test_halfspace_sides_sum_to_whole():
    rng = np.random.default_rng(6)
    g = random_gaussian(rng)
    p = gated_plane(g, rng)
    neg = halfspace_moments(g, p)
    pos = halfspace_moments(g, p, side="positive")
    a, mu, C = g.opacity_mass, g.position, g.covariance
    assert np.isclose(neg[0] + pos[0], a, rtol=1e-14)
    assert np.allclose(neg[1] + pos[1], a * mu, rtol=1e-12)
    assert np.allclose(neg[2] + pos[2], a * (C + np.outer(mu, mu)), rtol=1e-12, atol=1e-14)
    assert np.isclose(halfspace_moments(UNIT, X0)[0], 0.5, rtol=1e-15)


def test_children_are_moment_matched_halves():
    # the split children are the normalized half-space moments of the parent
    rng = np.random.default_rng(8)
    for _ in range(20):
        g = random_gaussian(rng)
        p = gated_plane(g, rng)
        out = split_at_plane(g, p)
        for child, side in ((out.left, "negative"), (out.right, "positive")):
            mass, first, second = halfspace_moments(g, p, side=side)
            mu = first / mass
            assert np.isclose(child.opacity_mass, mass, rtol=1e-12)
            assert np.allclose(child.position, mu, rtol=1e-9, atol=1e-12)
            assert np.allclose(child.covariance, second / mass - np.outer(mu, mu), rtol=1e-7,
                               atol=1e-9 * np.abs(g.covariance).max())


def test_halfspace_against_monte_carlo():
    rng = np.random.default_rng(12)
    for i in range(5):
        g = random_gaussian(rng, log_scale=(-1, 0.5))
        p = gated_plane(g, rng)
        agree = mc_moment_agreement(g, p, halfspace_moments(g, p), 200_000, seed=i)
        # family-wise 3-SE level over 15 comparisons
        assert min(agree.p_values()) >= 2 * norm.sf(3.0) / 15


def test_densify_mass_fractions():
    # d0 = 2 tau along a principal axis
    fr = split_aux(UNIT, Plane(np.array([1.0, 0, 0]), 2.0))
    assert abs(fr.c_l - 0.5 * (1 - erf(np.sqrt(2)))) <= 1e-12
    assert abs(fr.c_r - 0.5 * (1 + erf(np.sqrt(2)))) <= 1e-12
    assert np.isclose(0.5 * (1 + erf(np.sqrt(2))), 0.9772498680518208, rtol=1e-15)


def test_covariance_from_broadcasts():
    q = np.tile([1.0, 0, 0, 0], (4, 1))
    s = np.arange(1, 13, dtype=float).reshape(4, 3)
    C = covariance_from(q, s)
    assert C.shape == (4, 3, 3) and np.allclose(C[2], np.diag(s[2] ** 2))
