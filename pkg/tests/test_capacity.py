import math

import numpy as np
import pytest
from scipy.integrate import simpson

from symwave.capacity import (
    EllipsoidSpec,
    SymplectomorphismSpec,
    TorusSpec,
    UnquantizedTorusError,
    apply_symplectomorphism,
    ball_volume,
    basis_loop_index,
    ellipsoid_capacity,
    ellipsoid_volume,
    ground_energy,
    identity_symplectomorphism,
    keller_maslov_check,
    loop_action,
    minimal_orbit_action,
    oscillator_levels,
    random_symplectomorphism,
    shadow_area,
    symplectomorphism_jacobian,
)
from symwave.polynomials import Polynomial, random_polynomial
from symwave.symplectic import is_symplectic_matrix


def test_polynomial_derivatives_match_finite_differences(rng):
    for n in (1, 2, 3):
        poly = random_polynomial(n, rng, degree=4, min_degree=1, coeff_range=1.0)
        for _ in range(5):
            x = rng.uniform(-1.5, 1.5, size=n)
            h = 1e-6
            g = poly.grad(x)
            H = poly.hess(x)
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                fd = (poly.value(x + e) - poly.value(x - e)) / (2 * h)
                assert abs(fd - g[j]) < 1e-6
                fdg = (poly.grad(x + e) - poly.grad(x - e)) / (2 * h)
                assert np.allclose(fdg, H[:, j], atol=1e-5)
            assert np.allclose(H, H.T)


def test_polynomial_vectorized_evaluation(rng):
    poly = random_polynomial(2, rng, degree=3, min_degree=1)
    pts = rng.uniform(-1, 1, size=(40, 2))
    vals = poly.value(pts)
    grads = poly.grad(pts)
    for k in range(len(pts)):
        assert np.isclose(vals[k], poly.value(pts[k]))
        assert np.allclose(grads[k], poly.grad(pts[k]))


def test_capacity_and_volume_values():
    assert np.isclose(ellipsoid_capacity(EllipsoidSpec((1.0, 2.0))), math.pi)
    assert np.isclose(ellipsoid_capacity(EllipsoidSpec((3.0,))), 9 * math.pi)
    assert np.isclose(ball_volume(1, 2.0), math.pi * 4)
    assert np.isclose(ball_volume(2, 1.0), math.pi**2 / 2)
    # for a ball, Vol = capacity^n / n!
    for n in (1, 2, 3):
        R = 1.3
        cap = ellipsoid_capacity(EllipsoidSpec((R,) * n))
        assert np.isclose(ball_volume(n, R), cap**n / math.factorial(n))
        assert np.isclose(ellipsoid_volume(EllipsoidSpec((R,) * n)), ball_volume(n, R))
    with pytest.raises(ValueError):
        EllipsoidSpec((1.0, -2.0))
    with pytest.raises(ValueError):
        ball_volume(0, 1.0)


def test_capacity_monotone_under_inclusion():
    small = EllipsoidSpec((1.0, 5.0))
    large = EllipsoidSpec((2.0, 5.0))
    assert ellipsoid_capacity(small) <= ellipsoid_capacity(large)


def test_composite_map_jacobians_symplectic(rng):
    for n in (1, 2):
        for _ in range(10):
            f = random_symplectomorphism(n, rng)
            z = rng.uniform(-1, 1, size=2 * n)
            J = symplectomorphism_jacobian(f, z)
            assert is_symplectic_matrix(J, tol=1e-9)
            # finite-difference oracle for the Jacobian
            h = 1e-6
            fd = np.empty((2 * n, 2 * n))
            for k in range(2 * n):
                e = np.zeros(2 * n)
                e[k] = h
                fd[:, k] = (
                    apply_symplectomorphism(f, z + e) - apply_symplectomorphism(f, z - e)
                ) / (2 * h)
            assert np.allclose(J, fd, atol=1e-5)


def test_apply_symplectomorphism_shapes(rng):
    f = random_symplectomorphism(2, rng)
    z = rng.uniform(-1, 1, size=(7, 4))
    out = apply_symplectomorphism(f, z)
    assert out.shape == (7, 4)
    for k in range(7):
        assert np.allclose(out[k], apply_symplectomorphism(f, z[k]))
    with pytest.raises(ValueError):
        apply_symplectomorphism(f, np.zeros(6))


def test_shadow_identity_calibration():
    # n=2: the ball's projected density vanishes at the disk rim, so the
    # plain filled area undershoots; the coverage-corrected estimate
    # recovers pi.  n=1 projects with uniform density and the plain
    # estimate is already calibrated.
    est = shadow_area(identity_symplectomorphism(2), 1.0, 0, grid_res=256, samples=400_000, seed=3)
    assert abs(est.corrected_area - math.pi) / math.pi < 0.02
    assert est.area < est.corrected_area
    assert est.grid_cells >= est.occupied_cells
    est1 = shadow_area(identity_symplectomorphism(1), 1.0, 0, grid_res=256, samples=400_000, seed=3)
    assert abs(est1.area - math.pi) / math.pi < 0.01


def test_shadow_determinism():
    f = identity_symplectomorphism(1)
    a = shadow_area(f, 1.0, 0, grid_res=128, samples=50_000, seed=11)
    b = shadow_area(f, 1.0, 0, grid_res=128, samples=50_000, seed=11)
    assert a.area == b.area and a.occupied_cells == b.occupied_cells
    assert a.corrected_area == b.corrected_area


def test_shadow_n1_area_preservation(rng):
    # n=1: any symplectomorphism preserves the disk area exactly
    squeeze = SymplectomorphismSpec(1, (("linear", np.diag([2.0, 0.5])),))
    est = shadow_area(squeeze, 1.0, 0, grid_res=256, samples=400_000, seed=5)
    assert abs(est.area - math.pi) / math.pi < 0.02
    comp = random_symplectomorphism(1, rng)
    est = shadow_area(comp, 1.0, 0, grid_res=256, samples=400_000, seed=6)
    assert abs(est.area - math.pi) / math.pi < 0.05


def test_mixed_plane_control_can_shrink():
    a = 2.0
    S = np.diag([a, 1 / a, 1 / a, a])
    f = SymplectomorphismSpec(2, (("linear", S),))
    assert is_symplectic_matrix(S)
    conj = shadow_area(f, 1.0, 0, grid_res=256, samples=300_000, seed=1)
    mixed = shadow_area(f, 1.0, (1, 0), grid_res=256, samples=300_000, seed=1)
    assert conj.corrected_area >= math.pi * 0.95
    assert mixed.corrected_area < math.pi * 0.5  # mixed plane is genuinely squeezed


def test_ground_energy_and_minimal_action():
    assert np.isclose(ground_energy([1.0, 2.0, 3.0], 1.0), 3.0)
    assert np.isclose(ground_energy([2.0], 0.5), 0.5)
    assert np.isclose(minimal_orbit_action(1.0), math.pi)
    # half of Planck's constant h = 2 pi hbar
    hbar = 0.7
    assert np.isclose(minimal_orbit_action(hbar), 2 * math.pi * hbar / 2)
    with pytest.raises(ValueError):
        ground_energy([1.0, -1.0], 1.0)


def test_loop_action_values_and_quadrature_oracle():
    t = TorusSpec((1.0, 2.0))
    assert np.isclose(loop_action(t, [1, 0]), math.pi)
    assert np.isclose(loop_action(t, [1, 1]), math.pi + 4 * math.pi)
    assert np.isclose(loop_action(t, [0, -2]), -8 * math.pi)
    # oracle: numeric oint p dx around the oriented basis circle
    r = 2.0
    theta = np.linspace(0, 2 * np.pi, 20001)
    x = r * np.sin(theta)
    p = r * np.cos(theta)
    num = simpson(p * np.gradient(x, theta), x=theta)
    assert abs(num - math.pi * r * r) < 1e-6
    with pytest.raises(ValueError):
        loop_action(t, [1, 0, 0])


def test_basis_loop_index_is_two():
    t = TorusSpec((1.0, 0.5), flat_dims=1)
    assert basis_loop_index(t, 0) == 2
    assert basis_loop_index(t, 1) == 2


def test_keller_maslov_ladder():
    hbar = 1.0
    for N in range(5):
        rep = keller_maslov_check(TorusSpec((math.sqrt((2 * N + 1) * hbar),)), hbar)
        assert rep.passed and rep.generators[0].level == N
    for bad in (0.5, 2.0, 2.99, 4.0):
        rep = keller_maslov_check(TorusSpec((math.sqrt(bad * hbar),)), hbar)
        assert not rep.passed
    # mixed torus: every circle factor must pass
    rep = keller_maslov_check(TorusSpec((1.0, math.sqrt(2.0))), 1.0)
    assert rep.generators[0].passed and not rep.generators[1].passed and not rep.passed


def test_oscillator_levels():
    hbar = 1.0
    t = TorusSpec((1.0, 1.0))
    assert np.isclose(oscillator_levels(t, [1.0, 2.0], hbar), 1.5 * hbar)
    t2 = TorusSpec((math.sqrt(3.0), 1.0))
    assert np.isclose(oscillator_levels(t2, [1.0, 1.0], hbar), (1.5 + 0.5) * hbar)
    with pytest.raises(UnquantizedTorusError):
        oscillator_levels(TorusSpec((math.sqrt(2.0),)), [1.0], hbar)
    with pytest.raises(ValueError):
        oscillator_levels(t, [1.0], hbar)
