import numpy as np
import pytest

from nvbath import couplings
from nvbath.errors import ConfigError
from nvbath.units import CONSTANTS

PREF = CONSTANTS.dipolar_prefactor


def test_axial_geometry():
    # spin on the z-axis: angular factor 1 - 3 = -2
    a = couplings.system_bath_coupling(np.array([0.0, 0.0, 2.0]))
    assert np.isclose(a, -2.0 * PREF / 8.0, rtol=1e-14)


def test_equatorial_geometry():
    a = couplings.system_bath_coupling(np.array([3.0, 0.0, 0.0]))
    assert np.isclose(a, PREF / 27.0, rtol=1e-14)


def test_magic_angle_zero():
    r = 2.0
    nz = 1.0 / np.sqrt(3.0)
    rho = r * np.sqrt(1.0 - nz**2)
    a = couplings.system_bath_coupling(np.array([rho, 0.0, r * nz]))
    assert abs(a) < 1e-12 * PREF / r**3


def test_zero_length_rejected():
    with pytest.raises(ConfigError):
        couplings.system_bath_coupling(np.zeros(3))
    with pytest.raises(ConfigError):
        couplings.intra_bath_coupling(np.ones(3), np.ones(3))


def test_intra_bath_axial_and_symmetry():
    p1 = np.array([1.0, 2.0, 3.0])
    p2 = p1 + np.array([0.0, 0.0, 1.5])
    d = couplings.intra_bath_coupling(p1, p2)
    assert np.isclose(d, -2.0 * PREF / 1.5**3, rtol=1e-14)
    assert couplings.intra_bath_coupling(p2, p1) == d


def test_three_spin_line_brute_force():
    # collinear spins: every pairwise coupling from the scalar formula
    pos = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.5], [0.0, 0.0, 5.0]])
    mat = couplings.intra_bath_matrix(pos)
    for j in range(3):
        for k in range(3):
            if j == k:
                assert mat[j, k] == 0.0
            else:
                r = abs(pos[j, 2] - pos[k, 2])
                assert np.isclose(mat[j, k], -2.0 * PREF / r**3, rtol=1e-13)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(8)
    pos = rng.normal(0, 4, size=(12, 3))
    a_vec = couplings.system_bath_couplings(pos)
    for j, p in enumerate(pos):
        assert np.isclose(a_vec[j], couplings.system_bath_coupling(p), rtol=1e-14)
    mat = couplings.intra_bath_matrix(pos)
    assert np.array_equal(mat, mat.T)
    for j in range(12):
        for k in range(j + 1, 12):
            assert np.isclose(mat[j, k],
                              couplings.intra_bath_coupling(pos[j], pos[k]), rtol=1e-13)


def test_bath_rms_single_spin():
    assert couplings.bath_rms_b(np.array([2.0])) == 1.0


def test_bath_rms_paper_values():
    # T2* = sqrt(2)/b round-trips for the reference dephasing times
    for t2_star in (0.95, 0.67, 0.62):
        b = np.sqrt(2.0) / t2_star
        assert np.isclose(couplings.bath_rms_b(np.array([2.0 * b])), b, rtol=1e-14)
        assert np.isclose(np.sqrt(2.0) / couplings.bath_rms_b(np.array([2.0 * b])),
                          t2_star, rtol=1e-14)


def test_bath_rms_homogeneity():
    rng = np.random.default_rng(1)
    a = rng.normal(size=40)
    assert np.isclose(couplings.bath_rms_b(2 * a), 2 * couplings.bath_rms_b(a), rtol=1e-14)


def test_bath_rms_empty():
    with pytest.raises(ConfigError):
        couplings.bath_rms_b(np.array([]))


def test_angular_average_zero():
    # quadrature of (1 - 3 cos^2 theta) over the sphere
    x, w = np.polynomial.legendre.leggauss(64)
    avg = np.sum(w * (1.0 - 3.0 * x**2)) / 2.0
    assert abs(avg) < 1e-6


def test_spatial_scaling_exact_power_of_two():
    rng = np.random.default_rng(5)
    pos = rng.normal(0, 3, size=(6, 3))
    a1 = couplings.system_bath_couplings(pos)
    a2 = couplings.system_bath_couplings(pos * 2.0)
    assert np.array_equal(a2, a1 / 8.0)
    m1 = couplings.intra_bath_matrix(pos)
    m2 = couplings.intra_bath_matrix(pos * 2.0)
    assert np.array_equal(m2, m1 / 8.0)
    assert np.isclose(couplings.bath_rms_b(a2), couplings.bath_rms_b(a1) / 8.0, rtol=1e-15)


def test_spatial_scaling_generic_factor():
    rng = np.random.default_rng(6)
    pos = rng.normal(0, 3, size=(6, 3))
    s = 1.7
    a1 = couplings.system_bath_couplings(pos)
    a2 = couplings.system_bath_couplings(pos * s)
    assert np.allclose(a2, a1 / s**3, rtol=1e-12)


def test_angular_factor_bounds():
    rng = np.random.default_rng(9)
    pos = rng.normal(size=(500, 3))
    a = couplings.system_bath_couplings(pos)
    r = np.linalg.norm(pos, axis=1)
    factors = a * r**3 / PREF
    assert np.all(factors >= -2.0 - 1e-12)
    assert np.all(factors <= 1.0 + 1e-12)
