import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metrokit import qec
from metrokit.fisher import qfi
from metrokit.qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, random_hermitian

seeds = st.integers(0, 2**32 - 1)


def span_of(basis):
    """Projector onto the real span of Hermitian matrices (as vectors in R^{2 d^2})."""
    vecs = np.array([np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in basis]).T
    q, _ = np.linalg.qr(vecs)
    return q @ q.T


def same_span(a, b):
    return np.allclose(span_of(a), span_of(b), atol=1e-10)


def random_qutrit_instance(rng):
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    span = qec.lindblad_span([g])
    return [g], span, qec.hnls_decompose(random_hermitian(3, rng), span)


def test_span_examples():
    assert same_span(qec.lindblad_span([SIGMA_Z]).basis, [np.eye(2), SIGMA_Z])
    assert same_span(qec.lindblad_span([SIGMA_X]).basis, [np.eye(2), SIGMA_X])
    empty = qec.lindblad_span([], dim=2)
    assert len(empty.basis) == 1 and same_span(empty.basis, [np.eye(2)])


def test_span_orthonormal():
    rng = np.random.default_rng(0)
    s = qec.lindblad_span([rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))])
    gram = np.array([[np.trace(a @ b).real for b in s.basis] for a in s.basis])
    assert np.allclose(gram, np.eye(len(s.basis)), atol=1e-10)
    for b in s.basis:
        assert np.allclose(s.project(b), b, atol=1e-10)
    comp = s.complement()
    assert len(comp) + len(s.basis) == 9
    assert all(np.allclose(s.project(c), 0, atol=1e-10) for c in comp)


def test_hnls_examples():
    r = qec.hnls_decompose(SIGMA_Z, qec.lindblad_span([SIGMA_Z]))
    assert not r.hnls and np.allclose(r.H_perp, 0)
    r = qec.hnls_decompose(SIGMA_Z, qec.lindblad_span([SIGMA_X]))
    assert r.hnls and np.allclose(r.H_perp, SIGMA_Z)
    for g in (SIGMA_X, SIGMA_Y):
        assert not qec.hnls_decompose(np.eye(2), qec.lindblad_span([g])).hnls


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_hnls_decomposition_properties(seed):
    rng = np.random.default_rng(seed)
    _, span, r = random_qutrit_instance(rng)
    H = r.H_par + r.H_perp
    assert all(abs(np.trace(r.H_perp @ e)) < 1e-10 for e in span.basis)
    again = qec.hnls_decompose(H, span)
    assert np.allclose(again.H_perp, r.H_perp, atol=1e-10)
    assert np.allclose(qec.hnls_decompose(r.H_perp, span).H_perp, r.H_perp, atol=1e-10)


def test_build_code_sigma_z():
    code = qec.build_code(SIGMA_Z)
    assert code.ancilla_dim == 2
    assert np.allclose(code.c0, [1, 0, 0, 0]) and np.allclose(code.c1, [0, 0, 0, 1])


def test_build_code_uneven_split():
    H = np.diag([2.0, 1.0, -3.0])
    H /= np.linalg.norm(H)
    code = qec.build_code(H)
    r0, r1 = qec.code_states(H)
    assert np.linalg.matrix_rank(r0) == 2 and np.linalg.matrix_rank(r1) == 1
    # one ancilla level per eigenvector keeps the reduced ancilla supports disjoint
    assert code.ancilla_dim == 3
    assert abs(np.vdot(code.c0, code.c1)) < 1e-14
    for c in (code.c0, code.c1):
        assert np.linalg.norm(c) == pytest.approx(1)


def test_code_states_decompose_h_perp():
    H = np.diag([2.0, 1.0, -3.0])
    r0, r1 = qec.code_states(H)
    assert np.allclose(H, np.abs(np.linalg.eigvalsh(H)).sum() * (r0 - r1) / 2)


def test_code_json_roundtrip():
    code = qec.build_code(np.diag([2.0, 1.0, -3.0]))
    back = qec.CodePair.from_json(code.to_json())
    assert np.array_equal(back.c0, code.c0) and back.ancilla_dim == code.ancilla_dim


def test_verify_sigma_z_sigma_x():
    code = qec.build_code(qec.hnls_decompose(SIGMA_Z, qec.lindblad_span([SIGMA_X])).H_perp)
    rep = qec.verify_code(code, [SIGMA_X], SIGMA_Z, tol=1e-9)
    assert rep.condition1 and rep.condition2 and rep.condition3 and rep.ok
    assert rep.gap == pytest.approx(2)


def test_verify_degenerate_code_fails_condition3():
    # both codewords inside the +1 eigenspace of G = sz (x) I
    c0 = np.array([1, 0, 0, 0], dtype=complex)
    c1 = np.array([0, 1, 0, 0], dtype=complex)
    rep = qec.verify_code(qec.CodePair(c0, c1, 2, 2), [], SIGMA_Z)
    assert not rep.condition3 and not rep.ok


def test_verify_random_noise_orthogonal_signal():
    rng = np.random.default_rng(1)
    for _ in range(5):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        noise = n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z
        sig = random_hermitian(2, rng)
        perp = qec.hnls_decompose(sig, qec.lindblad_span([noise])).H_perp
        rep = qec.verify_code(qec.build_code(perp), [noise], sig)
        assert rep.condition1 and rep.condition2


def test_code_gap_sigma_z():
    res = qec.optimize_code_gap(SIGMA_Z, qec.lindblad_span([SIGMA_X]))
    assert res.dual_value == pytest.approx(1, abs=1e-7)
    assert res.primal_value == pytest.approx(2, abs=1e-7)
    assert res.gap == pytest.approx(2, abs=1e-6)
    z = qec.optimize_code_gap(np.zeros((2, 2)), qec.lindblad_span([SIGMA_X]))
    assert z.primal_value == 0 and z.gap == 0


def test_code_gap_operator_norm_variant():
    res = qec.optimize_code_gap(SIGMA_Z, qec.lindblad_span([SIGMA_X]), norm="op")
    assert res.primal_value == pytest.approx(4, abs=1e-7)
    with pytest.raises(ValueError):
        qec.optimize_code_gap(SIGMA_Z, qec.lindblad_span([SIGMA_X]), norm="fro")


@settings(max_examples=8, deadline=None)
@given(seeds)
def test_code_gap_duality_and_optimality(seed):
    rng = np.random.default_rng(seed)
    gammas, span, r = random_qutrit_instance(rng)
    res = qec.optimize_code_gap(r.H_perp, span)
    assert res.primal_value == pytest.approx(2 * res.dual_value, abs=1e-6)
    assert np.abs(res.C).sum() > 0
    assert all(abs(np.trace(res.C @ e)) < 1e-6 for e in span.basis)
    assert np.abs(np.linalg.eigvalsh(res.C)).sum() <= 2 + 1e-6
    built = qec.verify_code(qec.build_code(r.H_perp), gammas, r.H_perp)
    assert res.primal_value >= built.gap - 1e-6


def test_effective_qfi():
    assert qec.effective_qfi(2.0, 1.0) == 4
    assert qec.effective_qfi(0.0, 3.0) == 0
    with pytest.raises(ValueError):
        qec.effective_qfi(-1.0, 1.0)


def test_effective_qfi_matches_code_probe():
    code = qec.build_code(SIGMA_Z)
    t = 0.7
    G = np.kron(SIGMA_Z, np.eye(code.ancilla_dim))
    psi = (code.c0 + code.c1) / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    F = qfi(rho, -1j * t * (G @ rho - rho @ G))
    rep = qec.verify_code(code, [SIGMA_X], SIGMA_Z)
    assert F == pytest.approx(qec.effective_qfi(rep.gap, t), abs=1e-8)
