import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from families import random_povm, rotated_mixture
from metrokit import fisher
from metrokit.qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, NotPhysicalError, dag, ket_to_dm, random_density_matrix

seeds = st.integers(0, 2**32 - 1)


def test_cfi_binomial():
    x = 0.25
    assert np.isclose(fisher.cfi([x, 1 - x], [1, -1]), 16 / 3, rtol=1e-14)
    assert fisher.cfi([x, 1 - x], [0, 0]) == 0


def test_cfi_cos_sin_family():
    x = np.pi / 3
    p = [np.cos(x / 2) ** 2, np.sin(x / 2) ** 2]
    dp = [-np.sin(x) / 2, np.sin(x) / 2]
    assert np.isclose(fisher.cfi(p, dp), 1.0, rtol=1e-13)


def test_cfi_rejects_invalid():
    with pytest.raises(NotPhysicalError):
        fisher.cfi([0.5, 0.6], [0, 0])
    with pytest.raises(NotPhysicalError):
        fisher.cfi([0.5, 0.5], [1, 0])
    with pytest.raises(fisher.SingularFisherError):
        fisher.cfi([1.0, 0.0], [-1e-3, 1e-3])


def test_sld_diagonal_family():
    r = fisher.sld(np.diag([0.25, 0.75]), np.diag([1.0, -1.0]))
    assert np.allclose(r.sld, np.diag([4, -4 / 3]))
    assert np.isclose(r.qfi, 16 / 3)


def test_sld_pure_rotation():
    psi = np.array([1, 1]) / np.sqrt(2)
    rho = ket_to_dm(psi)
    drho = -1j * (SIGMA_Z @ rho - rho @ SIGMA_Z)
    assert np.isclose(fisher.qfi(rho, drho), 4.0, rtol=1e-12)


def test_sld_zero_derivative():
    r = fisher.sld(random_density_matrix(3, np.random.default_rng(0)), np.zeros((3, 3)))
    assert r.qfi == 0 and np.allclose(r.sld, 0)


def test_qfim_examples():
    rng = np.random.default_rng(2)
    _, rho, drho = rotated_mixture(3, rng)
    assert np.isclose(fisher.qfim(rho, [drho])[0, 0], fisher.qfi(rho, drho))
    x, y = 0.2, 0.3
    rho = np.diag([x, y, 1 - x - y])
    F = fisher.qfim(rho, [np.diag([1.0, 0, -1]), np.diag([0, 1.0, -1])])
    q = 1 - x - y
    assert np.allclose(F, [[1 / x + 1 / q, 1 / q], [1 / q, 1 / y + 1 / q]])
    rho0 = ket_to_dm([1, 0])
    ds = [-1j * (s @ rho0 - rho0 @ s) for s in (SIGMA_X, SIGMA_Y)]
    assert np.allclose(fisher.qfim(rho0, ds), np.diag([4, 4]), atol=1e-12)


def test_cfi_povm_examples():
    rng = np.random.default_rng(4)
    _, rho, drho = rotated_mixture(2, rng)
    q = fisher.qfi(rho, drho)
    assert np.isclose(fisher.cfi_povm(rho, drho, fisher.sld_projectors(rho, drho)), q, rtol=1e-8)
    assert fisher.cfi_povm(rho, drho, [np.eye(2)]) == 0
    assert 0 <= fisher.cfi_povm(rho, drho, random_povm(2, 4, rng)) <= q + 1e-8


def test_check_povm_rejects():
    with pytest.raises(NotPhysicalError):
        fisher.check_povm([np.diag([1, 0]), np.diag([0, 0.5])])
    with pytest.raises(NotPhysicalError):
        fisher.check_povm([np.diag([1.5, 0]), np.diag([-0.5, 1])])


def test_fidelity_examples():
    a, b = ket_to_dm([1, 0]), ket_to_dm([0, 1])
    assert fisher.fidelity(a, b) == pytest.approx(0, abs=1e-12)
    assert fisher.bures_distance(a, b) == pytest.approx(np.sqrt(2))
    assert fisher.bures_angle(a, b) == pytest.approx(np.pi / 2)
    rho = random_density_matrix(3, np.random.default_rng(0))
    assert fisher.fidelity(rho, rho) == pytest.approx(1, abs=1e-10)


def test_qfi_from_bures_examples():
    def pure(x):
        u = linalg.expm(-1j * x * SIGMA_Z)
        return ket_to_dm(u @ np.array([1, 1]) / np.sqrt(2))

    assert fisher.qfi_from_bures(pure, 0.4, 1e-3) == pytest.approx(4, rel=1e-3)
    assert fisher.qfi_from_bures(lambda x: np.eye(2) / 2, 0.4, 1e-3) == pytest.approx(0, abs=1e-9)

    p = 0.75

    def dephased(x):
        return np.array([[0.5, 0.5 * (2 * p - 1) * np.exp(-2j * x)],
                         [0.5 * (2 * p - 1) * np.exp(2j * x), 0.5]])

    assert fisher.qfi_from_bures(dephased, 0.3, 1e-3) == pytest.approx(4 * (2 * p - 1) ** 2, rel=1e-3)


def test_finite_difference_accuracy():
    d = fisher.finite_difference(np.sin, 0.7)
    assert abs(d - np.cos(0.7)) < 1e-11


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 3))
def test_bures_matches_sld(seed, dim):
    rng = np.random.default_rng(seed)
    fam, rho, drho = rotated_mixture(dim, rng)
    assert fisher.qfi_from_bures(fam, 0.0, 1e-3) == pytest.approx(fisher.qfi(rho, drho), rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(2, 6))
def test_cfi_bounded_by_qfi(seed, dim, n):
    rng = np.random.default_rng(seed)
    _, rho, drho = rotated_mixture(dim, rng)
    assert fisher.cfi_povm(rho, drho, random_povm(dim, n, rng)) <= fisher.qfi(rho, drho) + 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
def test_qfi_convex(seed, a):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = H + dag(H)
    r1, r2 = random_density_matrix(3, rng), random_density_matrix(3, rng)

    def d(r):
        return -1j * (H @ r - r @ H)

    mix = a * r1 + (1 - a) * r2
    lhs = fisher.qfi(mix, d(mix))
    assert lhs <= a * fisher.qfi(r1, d(r1)) + (1 - a) * fisher.qfi(r2, d(r2)) + 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4))
def test_fidelity_symmetric(seed, dim):
    rng = np.random.default_rng(seed)
    a, b = random_density_matrix(dim, rng), random_density_matrix(dim, rng)
    assert abs(fisher.fidelity(a, b) - fisher.fidelity(b, a)) < 1e-10
    assert fisher.fidelity(a, b) <= 1 + 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4))
def test_sld_solves_lyapunov(seed, dim):
    rng = np.random.default_rng(seed)
    _, rho, drho = rotated_mixture(dim, rng)
    L = fisher.sld(rho, drho).sld
    assert np.allclose(0.5 * (rho @ L + L @ rho), drho, atol=1e-9)
    assert np.allclose(L, dag(L))
