import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoperim import generators as gen
from isoperim.curvature import (
    CenterOnBoundaryError,
    angle_defects,
    curvature_field,
    curve_curvature,
    euler_characteristic,
    outside_annulus_curvature_integral,
    z_field,
)
from isoperim.measures import SphereFit, fit_sphere
from isoperim.mesh import perimeter

from .conftest import random_rotation


@pytest.fixture(scope="module")
def ico4_field(ico4):
    return curvature_field(ico4)


@pytest.fixture(scope="module")
def tube():
    eps, L = 0.01, 0.5
    m = gen.tube_tree_domain(1.0, gen.radial_tree([[0, 0, 1]], L, eps), level=4)
    return m, curvature_field(m), eps, L


@pytest.mark.parametrize("R", [1.0, 2.5])
def test_sphere_curvatures(R):
    m = gen.icosphere(radius=R, level=4)
    f = curvature_field(m)
    assert np.median(f.H) == pytest.approx(1 / R, rel=2e-2)
    assert np.all(np.abs(f.kappa1 * R - 1) < 5e-2)
    assert np.all(np.abs(f.kappa2 * R - 1) < 5e-2)


def test_field_invariants(ico4, ico4_field):
    f = ico4_field
    assert np.abs(np.linalg.norm(f.normal, axis=1) - 1).max() < 1e-12
    assert f.vertex_area.sum() == pytest.approx(perimeter(ico4), rel=1e-9)
    ok = ~f.low_confidence
    assert f.consistency()[ok].max() < 2e-2


def test_tube_curvatures(tube):
    m, f, eps, _ = tube
    v = m.vertices
    r = np.linalg.norm(v, axis=1)
    rho = np.linalg.norm(v[:, :2], axis=1)
    lateral = (r > 1 + 4 * eps) & (v[:, 2] < 1.5 - 2 * eps) & (rho < 2 * eps)
    assert lateral.sum() > 100
    assert np.median(f.H[lateral]) == pytest.approx(1 / (2 * eps), rel=5e-2)
    assert np.median(f.kappa1[lateral]) == pytest.approx(1 / eps, rel=5e-2)
    assert np.median(np.abs(f.kappa2[lateral])) < 0.05 / eps


def test_tube_outside_annulus_integral(tube):
    m, f, _, L = tube
    fit = fit_sphere(m)
    val = outside_annulus_curvature_integral(m, f, fit.annulus(0.05), q=1)
    assert val == pytest.approx(math.pi * L, rel=0.15)


def test_icosphere_outside_integral_zero(ico4, ico4_field):
    fit = fit_sphere(ico4)
    for eta in (1e-3, 0.1):
        assert outside_annulus_curvature_integral(ico4, ico4_field, fit.annulus(eta)) < 1e-12


@given(s=st.floats(0.1, 10.0))
def test_curvature_scaling(s):
    m = gen.ellipsoid((1, 1.2, 0.8), level=2)
    a, b = curvature_field(m), curvature_field(m.scaled(s))
    assert np.allclose(b.H, a.H / s, rtol=1e-9, atol=0)
    for p in (1.0, 2.0, 4.0):
        assert b.norms[p]["H"] == pytest.approx(a.norms[p]["H"] / s, rel=1e-9)
        assert b.budget(p) == pytest.approx(a.budget(p), rel=1e-9)


def test_curvature_rigid_invariance():
    m = gen.nearly_spherical(gen.harmonic(3, 1, 0.1), level=3)
    T = random_rotation(np.random.default_rng(7))
    a, b = curvature_field(m), curvature_field(m.transformed(T, (1.0, 2.0, 3.0)))
    assert np.allclose(a.H, b.H, atol=1e-9)
    assert np.allclose(a.normal @ T.T, b.normal, atol=1e-9)


@pytest.mark.parametrize("factory", [
    lambda: gen.icosphere(level=3),
    lambda: gen.ellipsoid((1, 2, 0.5), level=3),
    lambda: gen.spiky_ball(6, 0.5, 0.03, level=3),
    lambda: gen.far_balls([1.0, 0.5], level=2),
])
def test_gauss_bonnet(factory):
    m = factory()
    chi = euler_characteristic(m)
    assert chi == 2 * m.component_count
    assert angle_defects(m).sum() == pytest.approx(2 * math.pi * chi, abs=1e-9)


@pytest.mark.parametrize("factory", [
    lambda: gen.nearly_spherical(gen.harmonic(2, 0, 0.2), level=3),
    lambda: gen.spiky_ball(6, 0.5, 0.03, level=3),
    lambda: gen.ellipse((1, 0.3)),
])
def test_norms_nondecreasing_in_p(factory):
    f = curvature_field(factory(), p_list=(1.0, 2.0, 4.0, 8.0))
    h = [f.norms[p]["H"] for p in (1.0, 2.0, 4.0, 8.0)]
    assert all(x <= y * (1 + 1e-12) for x, y in zip(h, h[1:]))


def test_satellite_components_carry_willmore_energy():
    """Each small sphere carries ∫H² = 4π whatever its radius."""
    m = gen.ball_with_satellites(4, 0.2, level=3)
    f = curvature_field(m)
    lab = m.component_labels
    for k in range(m.component_count):
        sel = lab == k
        assert np.sum(f.H[sel] ** 2 * f.vertex_area[sel]) == pytest.approx(4 * math.pi, rel=5e-2)


# ----------------------------------------------------------------------------
# Curves
# ----------------------------------------------------------------------------


@pytest.mark.parametrize("m", [3, 7, 64, 1000])
def test_regular_polygon_total_turning(m):
    f = curve_curvature(gen.circle(segments=m))
    assert f.turning.sum() == pytest.approx(2 * math.pi, abs=1e-12)


@pytest.mark.parametrize("m", [64, 256, 1024])
def test_circle_curvature(m):
    R = 3.0
    f = curve_curvature(gen.circle(radius=R, segments=m))
    # discrete value (π/m)/sin(π/m)/R
    assert np.abs(f.H * R - 1).max() < 2 / m ** 2 * math.pi ** 2 / 6


def test_square_curvature_at_corners():
    f = curve_curvature(gen.polygon([[0, 0], [0.5, 0], [1, 0], [1, 1], [0, 1]]))
    assert np.sum(f.H * f.vertex_area) == pytest.approx(2 * math.pi, abs=1e-12)
    assert f.turning[1] == pytest.approx(0.0, abs=1e-15)
    assert np.count_nonzero(np.abs(f.turning) > 1e-12) == 4


# ----------------------------------------------------------------------------
# Z field
# ----------------------------------------------------------------------------


def test_z_icosphere(ico4, ico4_field):
    z = z_field(ico4, fit_sphere(ico4), ico4_field)
    assert z.sup < 2e-2
    assert np.all(z.magnitude <= 2)


def test_z_shifted_center(ico4):
    s = 0.1
    fit = SphereFit(np.array([s, 0, 0]), 1.0, 0.0, "manual")
    z = z_field(ico4, fit)
    # the angle between x and x - c peaks at arcsin(s)
    assert z.sup == pytest.approx(2 * math.sin(math.asin(s) / 2), abs=2e-3)


def test_z_harmonic_first_order():
    """For u = a·Y with orthonormal Y of degree l, Z ≈ ∇u to first order
    so ‖Z‖₂ ≈ a·sqrt(l(l+1)/(4π))."""
    oracle = math.sqrt(6 / (4 * math.pi))
    ratios = []
    for a in (0.0125, 0.025, 0.05, 0.1):
        m = gen.nearly_spherical(gen.harmonic(2, 0, a), level=4)
        ratios.append(z_field(m, fit_sphere(m)).l2 / a)
    assert max(ratios) / min(ratios) < 1.15
    assert np.allclose(ratios, oracle, rtol=3e-2)


def test_z_center_on_boundary(ico3):
    v = ico3.vertices[0]
    with pytest.raises(CenterOnBoundaryError):
        z_field(ico3, SphereFit(v.copy(), 1.0, 0.0, "manual"))


def test_to_dict_keys(ico3):
    d = curvature_field(ico3).to_dict()
    assert set(d["aggregates"]) == {"p=1.0", "p=2.0", "p=4.0"}
    assert {"H", "B", "budget"} <= set(d["aggregates"]["p=2.0"])
