"""Channel-level metrology.

Channel fidelity and Bures angle through an SDP over Kraus gauges, the channel
QFI from the angle's second-order expansion, purification quantities ``G1/G2``
with the N-use bound, and probe optimization through the trace norm of the
metrology matrix ``M_ij = Tr[rho K_i(x1)^dag K_j(x2)]``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import sdp
from .fisher import finite_difference
from .qcore import (
    SIGMA_Z,
    DimensionError,
    KrausChannel,
    NotPhysicalError,
    check_hermitian,
    dag,
    hermitize,
)
from .stateopt import NelderMeadConfig, nelder_mead

log = logging.getLogger(__name__)

# FD-based channel QFI needs the SDP value far below the O(dx^2) signal
FD_SDP_TOL = 1e-13


@dataclass(frozen=True)
class ParameterizedChannel:
    """``x -> KrausChannel`` plus the matching Kraus derivatives."""

    evaluator: Callable[[float], KrausChannel]
    derivative: Callable[[float], list[np.ndarray]]
    m: int
    name: str = "channel"

    def __call__(self, x: float) -> KrausChannel:
        return self.evaluator(x)

    def check(self, x: float, rel_tol: float = 1e-5, tol: float = 1e-8) -> None:
        """Spot-check derivative consistency and differentiated completeness."""
        ks = self.evaluator(x).kraus
        dks = self.derivative(x)
        if len(dks) != len(ks):
            raise DimensionError("derivative list length differs from the Kraus count")
        fd = finite_difference(lambda t: np.array(self.evaluator(t).kraus), x)
        scale = max(1.0, float(np.abs(fd).max()))
        if np.abs(np.array(dks) - fd).max() > rel_tol * scale:
            raise NotPhysicalError("Kraus derivative disagrees with finite differences")
        dcomp = sum(dag(d) @ k + dag(k) @ d for k, d in zip(ks, dks))
        if np.abs(dcomp).max() > tol:
            raise NotPhysicalError("differentiated completeness violated")


def from_kraus_function(f: Callable[[float], Sequence[np.ndarray]], name: str = "channel",
                        step: float | None = None) -> ParameterizedChannel:
    """Wrap a Kraus-valued function; derivatives by Richardson finite differences."""
    m = len(f(0.0))
    return ParameterizedChannel(
        evaluator=lambda x: KrausChannel(f(x)),
        derivative=lambda x: list(finite_difference(lambda t: np.array(f(t)), x, step)),
        m=m,
        name=name,
    )


def unitary_channel(generator: np.ndarray) -> ParameterizedChannel:
    """``K(x) = exp(-i x H)``."""
    H = check_hermitian(generator, "generator")
    lam, v = np.linalg.eigh(H)

    def u(x):
        return (v * np.exp(-1j * x * lam)) @ dag(v)

    return ParameterizedChannel(
        evaluator=lambda x: KrausChannel([u(x)]),
        derivative=lambda x: [-1j * H @ u(x)],
        m=1,
        name="unitary",
    )


def dephasing_channel(p: float) -> ParameterizedChannel:
    """``K1 = sqrt(p) exp(-i x sz)``, ``K2 = sqrt(1-p) sz exp(-i x sz)``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")

    def u(x):
        return np.diag(np.exp(-1j * x * np.array([1.0, -1.0])))

    def kraus(x):
        return [np.sqrt(p) * u(x), np.sqrt(1 - p) * SIGMA_Z @ u(x)]

    def dkraus(x):
        return [-1j * k @ SIGMA_Z for k in kraus(x)]

    return ParameterizedChannel(lambda x: KrausChannel(kraus(x)), dkraus, 2, f"dephasing(p={p})")


def amplitude_damping_phase_channel(eta: float) -> ParameterizedChannel:
    """Phase rotation ``exp(-i x sz)`` followed by amplitude damping with decay ``eta``."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    a0 = np.array([[1, 0], [0, np.sqrt(1 - eta)]], dtype=complex)
    a1 = np.array([[0, np.sqrt(eta)], [0, 0]], dtype=complex)

    def u(x):
        return np.diag(np.exp(-1j * x * np.array([1.0, -1.0])))

    return ParameterizedChannel(
        lambda x: KrausChannel([a0 @ u(x), a1 @ u(x)]),
        lambda x: [-1j * a0 @ u(x) @ SIGMA_Z, -1j * a1 @ u(x) @ SIGMA_Z],
        2,
        f"amplitude-damping(eta={eta})",
    )


def default_dx(x: float) -> float:
    return 1e-2 * (1 + abs(x))


# ---------------------------------------------------------------- channel fidelity


def _common_m(e1: KrausChannel, e2: KrausChannel) -> tuple[KrausChannel, KrausChannel]:
    if (e1.dim_in, e1.dim_out) != (e2.dim_in, e2.dim_out):
        raise DimensionError("channels act on different spaces")
    m = max(e1.m, e2.m)
    return e1.padded(m), e2.padded(m)


def channel_fidelity(e1: KrausChannel, e2: KrausChannel, **solver_kw) -> tuple[float, np.ndarray]:
    """``max y/2`` s.t. ``[[I, W^dag], [W, I]] >= 0`` and ``K + K^dag - y I >= 0``.

    ``K = sum_ij w_ij K1_i^dag K2_j``. Returns the optimum and the optimizing
    gauge matrix ``W``.
    """
    e1, e2 = _common_m(e1, e2)
    m, d = e1.m, e1.dim_in
    k1, k2 = e1.kraus, e2.kraus
    dims = (4 * m, 2 * d)
    F0 = [sdp.complex_embed(np.eye(2 * m)), np.zeros((2 * d, 2 * d))]
    F, c = [], []
    for i, j in itertools.product(range(m), range(m)):
        prod = dag(k1[i]) @ k2[j]
        for phase in (1.0, 1j):
            blk = np.zeros((2 * m, 2 * m), dtype=complex)
            blk[m + i, j] = phase
            blk[j, m + i] = np.conj(phase)
            kk = phase * prod
            F.append([sdp.complex_embed(blk), sdp.complex_embed(kk + dag(kk))])
            c.append(0.0)
    F.append([np.zeros((4 * m, 4 * m)), sdp.complex_embed(-np.eye(d))])
    c.append(0.5)
    sol = sdp.solve_or_raise(sdp.lmi_problem(c, F0, F, dims, "max"), **solver_kw)
    w = sol.y[:-1:2] + 1j * sol.y[1:-1:2]
    return float(sdp.lmi_value(sol, "max")), w.reshape(m, m)


def channel_bures_angle(e1: KrausChannel, e2: KrausChannel, **solver_kw) -> float:
    f, _ = channel_fidelity(e1, e2, **solver_kw)
    return float(np.arccos(np.clip(f, -1.0, 1.0)))


def channel_bures_distance(e1: KrausChannel, e2: KrausChannel, **solver_kw) -> float:
    f, _ = channel_fidelity(e1, e2, **solver_kw)
    return float(np.sqrt(max(0.0, 2 - 2 * f)))


def channel_qfi_fd(pc: ParameterizedChannel, x: float, dx: float | None = None) -> float:
    """Channel QFI ``4 Theta_qc^2(E_x, E_x+dx) / dx^2`` with one Richardson step."""
    dx = default_dx(x) if dx is None else dx
    if dx <= 0:
        raise ValueError("dx must be positive")
    e0 = pc(x)
    tol = dict(gap_tol=FD_SDP_TOL, feas_tol=FD_SDP_TOL)

    def est(h):
        return 4 * channel_bures_angle(e0, pc(x + h), **tol) ** 2 / h**2

    return 2 * est(dx / 2) - est(dx)


# ---------------------------------------------------------------- purification quantities


def hermitian_basis(m: int) -> list[np.ndarray]:
    """Orthogonal Hermitian basis of ``m x m`` matrices (``m^2`` elements)."""
    out = []
    for k in range(m):
        e = np.zeros((m, m), dtype=complex)
        e[k, k] = 1
        out.append(e)
    for k, l in itertools.combinations(range(m), 2):
        s = np.zeros((m, m), dtype=complex)
        s[k, l] = s[l, k] = 1
        a = np.zeros((m, m), dtype=complex)
        a[k, l], a[l, k] = -1j, 1j
        out += [s, a]
    return out


def gauge_from_params(params: Sequence[float], m: int) -> np.ndarray:
    return sum(t * b for t, b in zip(params, hermitian_basis(m))) if m else np.zeros((0, 0))


def gauged_derivatives(pc: ParameterizedChannel, x: float, gauge: np.ndarray | None = None):
    ks = list(pc(x).kraus)
    dks = [np.asarray(d, dtype=complex) for d in pc.derivative(x)]
    if gauge is None:
        return ks, dks
    h = check_hermitian(gauge, "gauge")
    if h.shape != (len(ks), len(ks)):
        raise DimensionError(f"gauge must be {len(ks)}x{len(ks)}")
    dks = [dk - 1j * sum(h[j, i] * ks[i] for i in range(len(ks))) for j, dk in enumerate(dks)]
    return ks, dks


def g1_g2(pc: ParameterizedChannel, x: float, gauge: np.ndarray | None = None,
          tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """``G1 = sum (dK~)^dag dK~`` and ``G2 = i sum (dK~)^dag K~`` at ``x``."""
    ks, dks = gauged_derivatives(pc, x, gauge)
    G1 = sum(dag(d) @ d for d in dks)
    G2 = 1j * sum(dag(d) @ k for k, d in zip(ks, dks))
    if np.abs(G2 - dag(G2)).max() > tol * max(1.0, np.abs(G2).max()):
        raise NotPhysicalError("G2 is not Hermitian; Kraus derivatives break completeness")
    G1, G2 = hermitize(G1), hermitize(G2)
    if np.linalg.eigvalsh(G1)[0] < -tol:
        raise NotPhysicalError("G1 is not positive semidefinite")
    return G1, G2


def _lift(op: np.ndarray, dim: int) -> np.ndarray:
    if op.shape[0] == dim:
        return op
    if dim % op.shape[0]:
        raise DimensionError(f"cannot lift a {op.shape[0]}-dim operator to dim {dim}")
    return np.kron(op, np.eye(dim // op.shape[0]))


def cf_bound(pc: ParameterizedChannel, x: float, rho_in: np.ndarray, gauge: np.ndarray | None = None) -> float:
    """``4 (<G1> - <G2>^2)`` for probe ``rho_in`` (system, or system x ancilla)."""
    rho = np.asarray(rho_in, dtype=complex)
    G1, G2 = g1_g2(pc, x, gauge)
    G1, G2 = _lift(G1, rho.shape[0]), _lift(G2, rho.shape[0])
    e1 = np.trace(rho @ G1).real
    e2 = np.trace(rho @ G2).real
    return float(4 * (e1 - e2**2))


def _op_norm(a: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(a)).max())


def min_g2_gauge(pc: ParameterizedChannel, x: float) -> tuple[float, np.ndarray]:
    """Gauge minimizing ``||G2||_op``; ``G2`` is affine in the gauge, so this is an SDP."""
    ks, dks = gauged_derivatives(pc, x)
    m, d = len(ks), ks[0].shape[1]
    G2 = hermitize(1j * sum(dag(dk) @ k for k, dk in zip(ks, dks)))
    basis = hermitian_basis(m)
    # G2(h) = G2 - sum_ij h_ij K_i^dag K_j
    shifts = np.array([-hermitize(sum(b[i, j] * dag(ks[i]) @ ks[j] for i in range(m) for j in range(m)))
                       for b in basis])
    # keep only gauge directions that move G2; dependent ones make the Schur system singular
    flat = np.concatenate([shifts.real.reshape(len(basis), -1), shifts.imag.reshape(len(basis), -1)], axis=1)
    u, s, _ = np.linalg.svd(flat, full_matrices=False)
    keep = s > 1e-10 * max(s.max(initial=0.0), 1.0)
    dirs = u[:, keep].T
    dims = (2 * d, 2 * d)
    F0 = [sdp.complex_embed(-G2), sdp.complex_embed(G2)]
    F = [[sdp.complex_embed(np.eye(d)), sdp.complex_embed(np.eye(d))]]
    for r in dirs:
        sh = np.tensordot(r, shifts, axes=1)
        F.append([sdp.complex_embed(-sh), sdp.complex_embed(sh)])
    c = [1.0] + [0.0] * len(dirs)
    sol = sdp.solve_or_raise(sdp.lmi_problem(c, F0, F, dims, "min"), gap_tol=1e-12, feas_tol=1e-12)
    params = dirs.T @ sol.y[1:] if len(dirs) else np.zeros(len(basis))
    return float(sdp.lmi_value(sol, "min")), gauge_from_params(params, m)


@dataclass(frozen=True)
class NUseBound:
    value: float
    gauge: np.ndarray
    g1_norm: float
    g2_norm: float
    sql: bool
    min_g2_norm: float
    certified: bool
    evaluations: int


def n_use_bound(pc: ParameterizedChannel, x: float, N: int, gauge_search_budget: int = 4000,
                sql_tol: float = 1e-6, restarts: int = 5) -> NUseBound:
    """Minimize ``4[N||G1|| + N(N-1)||G2||(||G1|| + ||G2|| + 1)]`` over Hermitian gauges.

    The search is Nelder-Mead over the ``m^2`` real gauge parameters, started
    from the better of the zero gauge and the ``||G2||``-minimizing gauge. The
    standard-quantum-limit flag is decided by that separate exact SDP.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    m = pc.m
    g2_min, h_sql = min_g2_gauge(pc, x)
    basis = hermitian_basis(m)
    norms = [np.vdot(b, b).real for b in basis]

    def params_of(h):
        return np.array([np.vdot(b, h).real / n for b, n in zip(basis, norms)])

    def objective(t):
        G1, G2 = g1_g2(pc, x, gauge_from_params(t, m))
        a, b = _op_norm(G1), _op_norm(G2)
        return 4 * (N * a + N * (N - 1) * b * (a + b + 1))

    starts = [np.zeros(m * m), params_of(h_sql)]
    t0 = min(starts, key=objective)
    cfg = NelderMeadConfig(eps=1e-12, max_iter=gauge_search_budget)
    res = nelder_mead(objective, initial_simplex(t0, 0.1), cfg)
    evals = res.evaluations
    # the objective is nonsmooth; restart from the best point until it stops improving
    for _ in range(restarts):
        left = gauge_search_budget - evals
        if left <= 0:
            break
        again = nelder_mead(objective, initial_simplex(res.x, 0.01), NelderMeadConfig(eps=1e-12, max_iter=left))
        evals += again.evaluations
        improved = again.fun < res.fun - 1e-12
        if again.fun <= res.fun:
            res = again
        if not improved:
            break
    h = gauge_from_params(res.x, m)
    G1, G2 = g1_g2(pc, x, h)
    return NUseBound(
        value=float(res.fun),
        gauge=h,
        g1_norm=_op_norm(G1),
        g2_norm=_op_norm(G2),
        sql=g2_min < sql_tol,
        min_g2_norm=g2_min,
        certified=res.converged and evals < gauge_search_budget,
        evaluations=evals,
    )


def initial_simplex(x0: np.ndarray, scale: float) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    return np.vstack([x0] + [x0 + scale * e for e in np.eye(len(x0))])


# ---------------------------------------------------------------- metrology matrix / probe SDP


def metrology_matrix(rho_s: np.ndarray, pc: ParameterizedChannel, x1: float, x2: float) -> np.ndarray:
    """``M_ij = Tr[rho_s K_i(x1)^dag K_j(x2)]``."""
    rho = np.asarray(rho_s, dtype=complex)
    k1, k2 = pc(x1).kraus, pc(x2).kraus
    if rho.shape != (k1[0].shape[1],) * 2:
        raise DimensionError("probe dimension does not match the channel input")
    return np.array([[np.trace(rho @ dag(a) @ b) for b in k2] for a in k1])


def _probe_problem(pc: ParameterizedChannel, x1: float, x2: float) -> sdp.SdpProblem:
    k1, k2 = pc(x1).kraus, pc(x2).kraus
    m, d = len(k1), k1[0].shape[1]
    n = 2 * m
    dims = (2 * n, 2 * d)
    zy = np.zeros((2 * n, 2 * n))
    zr = np.zeros((2 * d, 2 * d))
    cons = []
    for i, j in itertools.product(range(m), range(m)):
        g = dag(k1[i]) @ k2[j]
        hre, him = sdp.entry_functionals(n, m + i, j)
        cons.append(([sdp.herm_coeff(hre), -sdp.herm_coeff(g)], 0.0))
        cons.append(([sdp.herm_coeff(him), -sdp.herm_coeff(-1j * g)], 0.0))
    cons.append(([zy, sdp.herm_coeff(np.eye(d))], 1.0))
    C = [0.5 * sdp.herm_coeff(np.eye(n)), zr]
    return sdp.SdpProblem(C, cons, dims, "min")


def _commuting_basis(ops: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    herm = [hermitize(a) for a in ops] + [hermitize(-1j * a) for a in ops]
    combo = sum(rng.normal() * h for h in herm)
    return np.linalg.eigh(combo)[1]


@dataclass(frozen=True)
class ProbeResult:
    state: np.ndarray
    qfi: float
    trace_norm: float
    dx: float
    status: str
    purified: bool


def _min_trace_norm(pc, x, h):
    sol = sdp.solve_or_raise(_probe_problem(pc, x, x + h), gap_tol=FD_SDP_TOL, feas_tol=FD_SDP_TOL)
    rho = sdp.complex_unembed(sol.X[1])
    return sol.primal_value, rho / np.trace(rho).real, sol.status


def optimal_probe(pc: ParameterizedChannel, x: float, dx: float | None = None, purify: bool = True) -> ProbeResult:
    """Minimize ``||M(x, x+dx)||_tr`` over probes; QFI ``8(1 - ||M||_tr)/dx^2`` (Richardson).

    When every ``K_i^dag(x) K_j(x+dx)`` commutes, the optimal probe is replaced
    by a pure state with the same metrology matrix.
    """
    dx = default_dx(x) if dx is None else dx
    if dx <= 0:
        raise ValueError("dx must be positive")
    v1, rho, status = _min_trace_norm(pc, x, dx)
    v2, _, _ = _min_trace_norm(pc, x, dx / 2)
    q = 2 * (8 * (1 - v2) / (dx / 2) ** 2) - 8 * (1 - v1) / dx**2
    purified = False
    if purify and ancilla_free_check(pc, x, x + dx):
        k1, k2 = pc(x).kraus, pc(x + dx).kraus
        ops = [dag(a) @ b for a in k1 for b in k2]
        basis = _commuting_basis(ops, np.random.default_rng(0))
        p = np.clip(np.real(np.diag(dag(basis) @ rho @ basis)), 0.0, None)
        psi = basis @ np.sqrt(p / p.sum())
        pure = np.outer(psi, psi.conj())
        if np.abs(metrology_matrix(pure, pc, x, x + dx) - metrology_matrix(rho, pc, x, x + dx)).max() < 1e-9:
            rho, purified = pure, True
        else:
            log.warning("purification changed the metrology matrix; returning the mixed optimum")
    return ProbeResult(hermitize(rho), float(q), float(v1), dx, status, purified)


def ancilla_free_check(pc: ParameterizedChannel, x1: float, x2: float, tol: float = 1e-10) -> bool:
    """True iff all ``K_i^dag(x1) K_j(x2)`` commute pairwise."""
    k1, k2 = pc(x1).kraus, pc(x2).kraus
    ops = [dag(a) @ b for a in k1 for b in k2]
    for a, b in itertools.combinations(ops, 2):
        if np.abs(a @ b - b @ a).max() > tol:
            return False
    return True


def channel_fidelity_via_probe(pc: ParameterizedChannel, x1: float, x2: float) -> float:
    """Dual route: ``min_rho ||M(x1, x2)||_tr`` equals ``f_qc(E_x1, E_x2)``."""
    sol = sdp.solve_or_raise(_probe_problem(pc, x1, x2), gap_tol=FD_SDP_TOL, feas_tol=FD_SDP_TOL)
    return sol.primal_value


def random_channel(dim: int, m: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random Kraus set from a Haar isometry ``C^dim -> C^(m*dim)``."""
    from .qcore import random_isometry

    v = random_isometry(m * dim, dim, rng)
    return [v[k * dim : (k + 1) * dim] for k in range(m)]


def random_parameterized_channel(dim: int, m: int, rng: np.random.Generator) -> ParameterizedChannel:
    """Random fixed channel composed after ``exp(-i x H)`` with random ``H``."""
    from .qcore import random_hermitian

    ks = random_channel(dim, m, rng)
    H = random_hermitian(dim, rng)
    lam, v = np.linalg.eigh(H)

    def u(x):
        return (v * np.exp(-1j * x * lam)) @ dag(v)

    return ParameterizedChannel(
        lambda x: KrausChannel([k @ u(x) for k in ks]),
        lambda x: [-1j * k @ u(x) @ H for k in ks],
        m,
        "random",
    )


__all__ = [
    "ParameterizedChannel",
    "NUseBound",
    "ProbeResult",
    "amplitude_damping_phase_channel",
    "ancilla_free_check",
    "cf_bound",
    "channel_bures_angle",
    "channel_bures_distance",
    "channel_fidelity",
    "channel_fidelity_via_probe",
    "channel_qfi_fd",
    "dephasing_channel",
    "from_kraus_function",
    "g1_g2",
    "metrology_matrix",
    "min_g2_gauge",
    "n_use_bound",
    "optimal_probe",
    "random_channel",
    "random_parameterized_channel",
    "unitary_channel",
]
