import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from metrokit import qcore
from metrokit.qcore import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DimensionError,
    KrausChannel,
    LindbladModel,
    NotPhysicalError,
    apply_channel,
    bloch_vector,
    density_matrix,
    evolve_lindblad,
    evolve_unitary,
    kraus_transform,
    ket_to_dm,
    partial_trace,
    random_density_matrix,
    random_isometry,
    random_unitary,
    tensor,
)

PLUS = ket_to_dm(np.array([1, 1]) / np.sqrt(2))
seeds = st.integers(0, 2**32 - 1)


def dephasing_kraus(p, x):
    u = linalg.expm(-1j * x * SIGMA_Z)
    return [np.sqrt(p) * u, np.sqrt(1 - p) * SIGMA_Z @ u]


def test_density_matrix_rejects_bad_input():
    with pytest.raises(NotPhysicalError):
        density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(NotPhysicalError):
        density_matrix(np.diag([0.5, 0.6]))
    with pytest.raises(NotPhysicalError):
        density_matrix(np.array([[0.5, 0.5], [0.1, 0.5]]))


def test_kraus_completeness_checked():
    with pytest.raises(NotPhysicalError):
        KrausChannel([np.eye(2), SIGMA_X])


def test_identity_channel():
    rho = random_density_matrix(3, np.random.default_rng(1))
    assert np.allclose(apply_channel(KrausChannel([np.eye(3)]), rho), rho, atol=1e-14)


def test_symmetric_dephasing_kills_coherence():
    ch = KrausChannel([np.sqrt(0.5) * np.eye(2), np.sqrt(0.5) * SIGMA_Z])
    assert np.allclose(ch(PLUS), np.eye(2) / 2, atol=1e-14)


def test_dephasing_bloch_vector():
    out = apply_channel(KrausChannel(dephasing_kraus(0.75, 0.3)), PLUS)
    # exp(-i x sigma_z) turns +x towards +y by 2x
    expect = [0.5 * np.cos(0.6), 0.5 * np.sin(0.6), 0.0]
    assert np.allclose(bloch_vector(out), expect, atol=1e-12)


def test_kraus_transform_examples():
    ch = KrausChannel(dephasing_kraus(0.75, 0.3))
    same = kraus_transform(ch, np.eye(2))
    assert all(np.allclose(a, b) for a, b in zip(same.kraus, ch.kraus))
    swapped = kraus_transform(ch, SIGMA_X.real)
    assert np.allclose(swapped.kraus[0], ch.kraus[1]) and np.allclose(swapped.kraus[1], ch.kraus[0])
    rng = np.random.default_rng(7)
    wide = kraus_transform(ch, random_isometry(3, 2, rng))
    assert wide.m == 3
    for _ in range(20):
        rho = random_density_matrix(2, rng)
        assert np.abs(wide(rho) - ch(rho)).max() < 1e-12


def test_kraus_transform_rejects_non_isometry():
    ch = KrausChannel(dephasing_kraus(0.75, 0.3))
    with pytest.raises(NotPhysicalError):
        kraus_transform(ch, 2 * np.eye(2))
    with pytest.raises(DimensionError):
        kraus_transform(ch, np.eye(3))


def test_evolve_unitary_examples():
    assert np.allclose(evolve_unitary(SIGMA_Z, 0.0, PLUS), PLUS)
    assert np.allclose(evolve_unitary(SIGMA_Z, np.pi, PLUS), PLUS, atol=1e-12)
    assert np.allclose(bloch_vector(evolve_unitary(SIGMA_Z, np.pi / 4, PLUS)), [0, 1, 0], atol=1e-12)


def test_partial_trace_examples():
    rng = np.random.default_rng(3)
    a, b = random_density_matrix(2, rng), random_density_matrix(3, rng)
    assert np.allclose(partial_trace(tensor(a, b), [2, 3], 1), a)
    assert np.allclose(partial_trace(tensor(a, b), [2, 3], 0), b)
    assert np.allclose(tensor(np.eye(2) / 2, np.eye(2) / 2), np.eye(4) / 4)
    bell = ket_to_dm(np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert np.allclose(partial_trace(bell, [2, 2], 0), np.eye(2) / 2)
    with pytest.raises(DimensionError):
        partial_trace(bell, [2, 3], 0)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(1, 4))
def test_channel_preserves_trace_and_positivity(seed, dim, m):
    rng = np.random.default_rng(seed)
    V = random_isometry(dim * m, dim, rng)
    ch = KrausChannel([V[k * dim:(k + 1) * dim] for k in range(m)])
    out = ch(random_density_matrix(dim, rng))
    assert abs(np.trace(out) - 1) < 1e-10
    assert np.linalg.eigvalsh(out)[0] > -1e-10


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 4))
def test_kraus_transform_invariance(seed, p):
    rng = np.random.default_rng(seed)
    ch = KrausChannel(dephasing_kraus(rng.uniform(0.1, 0.9), rng.uniform(-1, 1)))
    rho = random_density_matrix(2, rng)
    assert np.abs(kraus_transform(ch, random_isometry(p, 2, rng))(rho) - ch(rho)).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 4))
def test_noiseless_lindblad_is_unitary(seed, dim):
    rng = np.random.default_rng(seed)
    H = qcore.random_hermitian(dim, rng)
    rho = random_density_matrix(dim, rng)
    out = evolve_lindblad(LindbladModel(H), 1.3, 200, rho)
    assert np.abs(out - evolve_unitary(H, 1.3, rho)).max() < 1e-8


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(2, 3))
def test_lindblad_output_positive(seed, dim):
    rng = np.random.default_rng(seed)
    H = qcore.random_hermitian(dim, rng)
    ops = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(2)]
    model = LindbladModel(H, ops, rng.uniform(0, 1, 2))
    out = evolve_lindblad(model, 2.0, 50, random_density_matrix(dim, rng))
    assert np.linalg.eigvalsh(out)[0] >= -1e-9
    assert abs(np.trace(out) - 1) < 1e-9


def test_lindblad_dephasing_decay():
    # off-diagonals of sigma_z dephasing at rate g decay like exp(-2 g t)
    out = evolve_lindblad(LindbladModel(np.zeros((2, 2)), [SIGMA_Z], [0.3]), 1.5, 10, PLUS)
    assert abs(out[0, 1] - 0.5 * np.exp(-0.9)) < 1e-12


def test_lindblad_rejects_negative_rate():
    with pytest.raises(NotPhysicalError):
        LindbladModel(SIGMA_Z, [SIGMA_X], [-0.1])


def test_matrix_json_roundtrip():
    a = random_unitary(3, np.random.default_rng(0))
    assert np.array_equal(qcore.matrix_from_json(qcore.matrix_to_json(a)), a)
    with pytest.raises(DimensionError):
        qcore.matrix_from_json({"dim": 3, "re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]})


def test_pauli_algebra():
    assert np.allclose(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z)
