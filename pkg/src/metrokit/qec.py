"""Error-corrected metrology.

Lindblad span and the Hamiltonian-not-in-Lindblad-span test, two-dimensional
codes on system x ancilla built from the orthogonal part of the signal, the
error-correction conditions, and the code-gap programs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sdp
from .qcore import DimensionError, check_hermitian, dag, hermitize

log = logging.getLogger(__name__)

SPAN_TOL = 1e-10
HNLS_TOL = 1e-9
CODE_TOL = 1e-9


def _hinner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.trace(a @ b).real)


def _gram_schmidt(candidates: Sequence[np.ndarray], basis: list[np.ndarray] | None = None,
                  tol: float = SPAN_TOL) -> list[np.ndarray]:
    basis = [] if basis is None else list(basis)
    for a in candidates:
        v = hermitize(a)
        for _ in range(2):  # second pass for numerical orthogonality
            for e in basis:
                v = v - _hinner(e, v) * e
        n = np.sqrt(max(_hinner(v, v), 0.0))
        if n > tol:
            basis.append(v / n)
    return basis


@dataclass(frozen=True)
class LindbladSpan:
    basis: list[np.ndarray]

    @property
    def dim(self) -> int:
        return self.basis[0].shape[0]

    def project(self, H: np.ndarray) -> np.ndarray:
        return sum(_hinner(e, H) * e for e in self.basis)

    def complement(self) -> list[np.ndarray]:
        """Orthonormal Hermitian basis of the orthogonal complement."""
        d = self.dim
        full = []
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                if i == j:
                    e[i, i] = 1
                elif i < j:
                    e[i, j] = e[j, i] = 1
                else:
                    e[i, j], e[j, i] = 1j, -1j
                full.append(e)
        return _gram_schmidt(full, self.basis)[len(self.basis):]


def lindblad_span(gammas: Sequence[np.ndarray], dim: int | None = None) -> LindbladSpan:
    """Orthonormal Hermitian basis of ``span{I, G_j, G_j^dag, G_j^dag G_l}``."""
    gammas = [np.asarray(g, dtype=complex) for g in gammas]
    if dim is None:
        if not gammas:
            raise DimensionError("dimension needed when no Lindblad operators are given")
        dim = gammas[0].shape[0]
    if any(g.shape != (dim, dim) for g in gammas):
        raise DimensionError("Lindblad operators must be square and of equal size")
    cands = [np.eye(dim, dtype=complex)]
    ops = list(gammas) + [dag(g) @ h for g in gammas for h in gammas]
    for a in ops:
        cands += [(a + dag(a)) / 2, (a - dag(a)) / 2j]
    return LindbladSpan(_gram_schmidt(cands))


@dataclass(frozen=True)
class HnlsReport:
    H_par: np.ndarray
    H_perp: np.ndarray
    hnls: bool
    perp_norm: float


def hnls_decompose(H: np.ndarray, span: LindbladSpan) -> HnlsReport:
    H = check_hermitian(H, "H")
    par = hermitize(span.project(H))
    perp = hermitize(H - par)
    n = float(np.linalg.norm(perp))
    return HnlsReport(par, perp, n > HNLS_TOL, n)


@dataclass(frozen=True)
class CodePair:
    c0: np.ndarray
    c1: np.ndarray
    system_dim: int
    ancilla_dim: int

    @property
    def projector(self) -> np.ndarray:
        return np.outer(self.c0, self.c0.conj()) + np.outer(self.c1, self.c1.conj())

    def to_json(self) -> str:
        enc = [dict(re=v.real.tolist(), im=v.imag.tolist()) for v in (self.c0, self.c1)]
        return json.dumps(dict(dims=[self.system_dim, self.ancilla_dim], c0=enc[0], c1=enc[1]))

    @classmethod
    def from_json(cls, text: str) -> "CodePair":
        obj = json.loads(text)
        vecs = [np.array(obj[k]["re"]) + 1j * np.array(obj[k]["im"]) for k in ("c0", "c1")]
        return cls(vecs[0], vecs[1], *obj["dims"])


def build_code(H_perp: np.ndarray, tol: float = HNLS_TOL) -> CodePair:
    """Purify the positive and negative parts of ``H_perp`` on disjoint ancilla levels.

    The ancilla has ``rank(rho0) + rank(rho1)`` levels, so the two reduced
    ancilla states have orthogonal supports.
    """
    H = check_hermitian(H_perp, "H_perp")
    lam, vecs = np.linalg.eigh(H)
    scale = max(np.abs(lam).max(), 1.0)
    pos = np.where(lam > tol * scale)[0][::-1]
    neg = np.where(lam < -tol * scale)[0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("H_perp must be nonzero (and traceless parts of both signs)")
    d = H.shape[0]
    da = len(pos) + len(neg)
    c0 = np.zeros(d * da, dtype=complex)
    c1 = np.zeros(d * da, dtype=complex)
    p0 = lam[pos] / lam[pos].sum()
    p1 = lam[neg] / lam[neg].sum()
    for a, (k, p) in enumerate(zip(pos, p0)):
        c0 += np.sqrt(p) * np.kron(vecs[:, k], np.eye(da)[a])
    for a, (k, p) in enumerate(zip(neg, p1)):
        c1 += np.sqrt(p) * np.kron(vecs[:, k], np.eye(da)[len(pos) + a])
    return CodePair(c0, c1, d, da)


def code_states(H_perp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``rho0, rho1`` with ``H_perp = ||H_perp||_1 (rho0 - rho1) / 2`` (traceless case)."""
    lam, vecs = np.linalg.eigh(check_hermitian(H_perp, "H_perp"))
    pos = (vecs * np.clip(lam, 0, None)) @ dag(vecs)
    neg = (vecs * np.clip(-lam, 0, None)) @ dag(vecs)
    return pos / np.trace(pos).real, neg / np.trace(neg).real


@dataclass(frozen=True)
class CodeReport:
    condition1: bool
    condition2: bool
    condition3: bool
    lambdas: np.ndarray
    mus: np.ndarray
    G_eff: np.ndarray
    gap: float

    @property
    def ok(self) -> bool:
        return self.condition1 and self.condition2 and self.condition3


def _restricted(code: CodePair, A: np.ndarray) -> np.ndarray:
    big = np.kron(A, np.eye(code.ancilla_dim))
    cs = np.array([code.c0, code.c1])
    return cs.conj() @ big @ cs.T


def _scalar(R: np.ndarray, tol: float) -> tuple[complex, bool]:
    s = np.trace(R) / 2
    return s, bool(np.abs(R - s * np.eye(2)).max() <= tol)


def verify_code(code: CodePair, gammas: Sequence[np.ndarray], G: np.ndarray, tol: float = CODE_TOL) -> CodeReport:
    """Check ``P G_j P ~ P``, ``P G_j^dag G_l P ~ P`` and ``P G P`` not ``~ P``.

    ``G_eff`` is the 2x2 matrix of the signal in the ``(C0, C1)`` basis.
    """
    d = code.system_dim
    gammas = [np.asarray(g, dtype=complex) for g in gammas]
    if any(g.shape != (d, d) for g in gammas) or np.shape(G) != (d, d):
        raise DimensionError("operators must act on the system")
    lams, ok1 = [], True
    for g in gammas:
        s, ok = _scalar(_restricted(code, g), tol)
        lams.append(s)
        ok1 &= ok
    n = len(gammas)
    mus = np.zeros((n, n), dtype=complex)
    ok2 = True
    for j in range(n):
        for l in range(n):
            s, ok = _scalar(_restricted(code, dag(gammas[j]) @ gammas[l]), tol)
            mus[j, l] = s
            ok2 &= ok
    Geff = hermitize(_restricted(code, check_hermitian(G, "G")))
    _, scalar3 = _scalar(Geff, tol)
    ev = np.linalg.eigvalsh(Geff)
    return CodeReport(bool(ok1), bool(ok2), not scalar3, np.array(lams), mus, Geff, float(ev[-1] - ev[0]))


@dataclass(frozen=True)
class CodeGapResult:
    primal_value: float
    dual_value: float
    C: np.ndarray
    gap: float
    norm: str
    status: str


def _dual_value(H_perp: np.ndarray, span: LindbladSpan, tol: float) -> float:
    d = H_perp.shape[0]
    n = 2 * d
    F0 = [sdp.complex_embed(np.block([[np.zeros((d, d)), H_perp], [H_perp, np.zeros((d, d))]]))]
    F = [[sdp.complex_embed(np.eye(n))]]
    for e in span.basis:
        z = np.zeros((d, d))
        F.append([sdp.complex_embed(np.block([[z, e], [e, z]]))])
    c = [1.0] + [0.0] * len(span.basis)
    sol = sdp.solve_or_raise(sdp.lmi_problem(c, F0, F, (2 * n,), "min"), gap_tol=tol, feas_tol=tol)
    return float(sdp.lmi_value(sol, "min"))


def _primal_trace(H_perp: np.ndarray, span: LindbladSpan, tol: float):
    d = H_perp.shape[0]
    dims = (2 * d, 2 * d, 1)
    one = np.ones((1, 1))
    zero = np.zeros((1, 1))
    cons = [([sdp.herm_coeff(e), -sdp.herm_coeff(e), zero], 0.0) for e in span.basis]
    cons.append(([sdp.herm_coeff(np.eye(d)), sdp.herm_coeff(np.eye(d)), one], 2.0))
    C = [sdp.herm_coeff(H_perp), -sdp.herm_coeff(H_perp), zero]
    sol = sdp.solve_or_raise(sdp.SdpProblem(C, cons, dims, "max"), gap_tol=tol, feas_tol=tol)
    Ct = sdp.complex_unembed(sol.X[0]) - sdp.complex_unembed(sol.X[1])
    return sol.primal_value, hermitize(Ct), sol.status


def _primal_op(H_perp: np.ndarray, span: LindbladSpan, tol: float):
    d = H_perp.shape[0]
    comp = span.complement()
    if not comp:
        return 0.0, np.zeros((d, d), dtype=complex), "optimal"
    F0 = [sdp.complex_embed(2 * np.eye(d)), sdp.complex_embed(2 * np.eye(d))]
    F = [[sdp.complex_embed(-b), sdp.complex_embed(b)] for b in comp]
    c = [_hinner(b, H_perp) for b in comp]
    sol = sdp.solve_or_raise(sdp.lmi_problem(c, F0, F, (2 * d, 2 * d), "max"), gap_tol=tol, feas_tol=tol)
    Ct = sum(t * b for t, b in zip(sol.y, comp))
    return float(sdp.lmi_value(sol, "max")), hermitize(Ct), sol.status


def optimize_code_gap(H_perp: np.ndarray, span: LindbladSpan, norm: str = "trace",
                      tol: float = 1e-10) -> CodeGapResult:
    """Maximize ``Tr(C H_perp)`` over ``C`` orthogonal to the span with norm at most 2.

    The dual ``min_nu ||H_perp + sum nu_k E_k||_op`` is solved as its own LMI.
    ``norm`` selects the trace-norm (default) or operator-norm constraint.
    """
    H = check_hermitian(H_perp, "H_perp")
    if np.linalg.norm(H) <= HNLS_TOL:
        z = np.zeros_like(H)
        return CodeGapResult(0.0, 0.0, z, 0.0, norm, "optimal")
    dual = _dual_value(H, span, tol)
    if norm == "trace":
        primal, Ct, status = _primal_trace(H, span, tol)
    elif norm == "op":
        primal, Ct, status = _primal_op(H, span, tol)
    else:
        raise ValueError("norm must be 'trace' or 'op'")
    return CodeGapResult(float(primal), dual, Ct, float(np.trace(Ct @ H).real), norm, status)


def effective_qfi(gap: float, t: float) -> float:
    """``t^2 gap^2``, reached by the code-space probe ``(|l_min> + |l_max>)/sqrt(2)``."""
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    return float(t**2 * gap**2)


__all__ = [
    "CodeGapResult",
    "CodePair",
    "CodeReport",
    "HnlsReport",
    "LindbladSpan",
    "build_code",
    "code_states",
    "effective_qfi",
    "hnls_decompose",
    "lindblad_span",
    "optimize_code_gap",
    "verify_code",
]
