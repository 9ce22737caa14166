import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metrokit import sdp
from metrokit.qcore import SIGMA_Y, NotPhysicalError, random_unitary

seeds = st.integers(0, 2**32 - 1)


def random_complex(rng, n=4):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_two_by_two_lmi():
    prob = sdp.lmi_problem([1.0], [np.array([[0.0, 1], [1, 0]])], [[np.eye(2)]], (2,), sense="min")
    sol = sdp.solve_or_raise(prob)
    assert sdp.lmi_value(sol, "min") == pytest.approx(1, abs=1e-7)
    assert sol.y[0] == pytest.approx(1, abs=1e-7)


def test_bounded_trace():
    # max Tr X s.t. Tr X + s = 3 with slack block s >= 0
    C = [np.eye(2), np.zeros((1, 1))]
    A = [np.eye(2), np.ones((1, 1))]
    sol = sdp.solve_or_raise(sdp.SdpProblem(C, [(A, 3.0)], (2, 1), "max"))
    assert sol.primal_value == pytest.approx(3, abs=1e-7)
    assert sol.dual_value == pytest.approx(3, abs=1e-7)


def test_trace_norm_examples():
    assert sdp.trace_norm_sdp(np.eye(2)) == pytest.approx(2, abs=1e-7)
    assert sdp.trace_norm_sdp(np.diag([3.0, -4.0])) == pytest.approx(7, abs=1e-7)


def test_complex_embed_examples():
    H = np.array([[1.0, 2], [2, -3]])
    assert np.array_equal(sdp.complex_embed(H), np.block([[H, 0 * H], [0 * H, H]]))
    expect = np.array([[0, 0, 0, 1], [0, 0, -1, 0], [0, -1, 0, 0], [1, 0, 0, 0]])
    E = sdp.complex_embed(SIGMA_Y)
    assert np.array_equal(E, expect)
    assert np.allclose(np.linalg.eigvalsh(E), [-1, -1, 1, 1])
    assert np.array_equal(sdp.complex_embed(np.eye(3)), np.eye(6))
    with pytest.raises(NotPhysicalError):
        sdp.complex_embed(np.array([[0, 1], [0, 0]]))


def test_complex_unembed_roundtrip():
    rng = np.random.default_rng(0)
    a = random_complex(rng, 3)
    H = a + a.conj().T
    assert np.allclose(sdp.complex_unembed(sdp.complex_embed(H)), H)


def test_herm_coeff_inner_product():
    rng = np.random.default_rng(1)
    a, b = random_complex(rng, 3), random_complex(rng, 3)
    H, Y = a + a.conj().T, b + b.conj().T
    lhs = np.sum(sdp.herm_coeff(H) * sdp.complex_embed(Y))
    assert lhs == pytest.approx(np.trace(H @ Y).real)


def test_nonsymmetric_data_rejected():
    with pytest.raises(NotPhysicalError):
        sdp.SdpProblem(np.array([[0.0, 1], [0, 0]]), [])


def test_infeasible_reported():
    # Tr X = -1 with X >= 0
    sol = sdp.solve(sdp.SdpProblem(np.eye(2), [(np.eye(2), -1.0)]))
    assert sol.status != "optimal"
    with pytest.raises(sdp.SdpError):
        sdp.solve_or_raise(sdp.SdpProblem(np.eye(2), [(np.eye(2), -1.0)]))


def test_json_roundtrip():
    prob = sdp.trace_norm_problem(np.diag([1.0, 2.0]))
    back = sdp.SdpProblem.from_json(prob.to_json())
    assert back.block_dims == prob.block_dims and back.m == prob.m
    assert sdp.solve(back).primal_value == sdp.solve(prob).primal_value


def test_deterministic():
    prob = sdp.trace_norm_problem(random_complex(np.random.default_rng(5)))
    a, b = sdp.solve(prob), sdp.solve(prob)
    assert a.iterations == b.iterations and a.primal_value == b.primal_value


def test_weak_duality_along_path():
    prob = sdp.trace_norm_problem(random_complex(np.random.default_rng(6)))
    sol = sdp.solve(prob, record_history=True)
    for row in sol.history:
        tol = 1e-8 * (1 + abs(row["pobj"]))
        # the gap is complementarity minus the infeasibility slack, so it is >= 0 once feasible
        assert row["pobj"] - row["dobj"] == pytest.approx(row["xz"] - row["slack"], abs=tol + 1e-9 * row["xz"])
        if row["pinf"] < 1e-8 and row["dinf"] < 1e-8:
            assert row["pobj"] >= row["dobj"] - tol


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_trace_norm_matches_svd(seed):
    M = random_complex(np.random.default_rng(seed))
    sol = sdp.solve_or_raise(sdp.trace_norm_problem(M))
    assert sol.primal_value == pytest.approx(np.linalg.svd(M, compute_uv=False).sum(), abs=1e-7)
    assert sol.gap <= 1e-8 * (1 + abs(sol.primal_value))
    assert min(np.linalg.eigvalsh(x)[0] for x in sol.X) >= -1e-8


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_trace_norm_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    M = random_complex(rng, 3)
    U, V = random_unitary(3, rng), random_unitary(3, rng)
    assert sdp.trace_norm_sdp(U @ M @ V) == pytest.approx(sdp.trace_norm_sdp(M), abs=1e-6)


def test_rectangular_trace_norm():
    M = np.random.default_rng(2).normal(size=(2, 3))
    assert sdp.trace_norm_sdp(M) == pytest.approx(np.linalg.svd(M, compute_uv=False).sum(), abs=1e-7)
