"""Dense primal-dual interior-point solver for small semidefinite programs.

Standard form, with block-diagonal symmetric variable ``X``::

    primal:  min  <C, X>   s.t.  <A_i, X> = b_i,  X >= 0
    dual:    max  b^T y    s.t.  Z = C - sum_i y_i A_i >= 0

``sense="max"`` flips the primal objective. Complex Hermitian data enters through
:func:`complex_embed`, which keeps the solver real.

The iteration is infeasible-start Mehrotra predictor-corrector with
Nesterov-Todd scaling and a dense Cholesky factorization of the Schur complement
``M_ij = <A_i, W A_j W>``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .qcore import DimensionError, NotPhysicalError, dag

log = logging.getLogger(__name__)

GAP_TOL = 1e-8
FEAS_TOL = 1e-8
MAX_ITER = 200
BREAKDOWN_FLOOR = 1e-10


class SdpError(RuntimeError):
    """The interior-point iteration failed (singular Newton system, no progress)."""

    def __init__(self, message: str, solution: "SdpSolution | None" = None):
        super().__init__(message)
        self.solution = solution


def _as_blocks(mat, block_dims: Sequence[int]) -> list[np.ndarray]:
    """Accept a list of blocks or a full block-diagonal matrix."""
    if isinstance(mat, (list, tuple)):
        blocks = [np.asarray(b, dtype=float) for b in mat]
        if [b.shape for b in blocks] != [(n, n) for n in block_dims]:
            raise DimensionError("block shapes do not match block_dims")
        return blocks
    full = np.asarray(mat, dtype=float)
    n = sum(block_dims)
    if full.shape != (n, n):
        raise DimensionError(f"matrix shape {full.shape} does not match total size {n}")
    out, k = [], 0
    for nb in block_dims:
        out.append(full[k : k + nb, k : k + nb].copy())
        k += nb
    return out


@dataclass(frozen=True)
class SdpProblem:
    objective: list[np.ndarray]
    constraints: list[tuple[list[np.ndarray], float]]
    block_dims: tuple[int, ...]
    sense: str = "min"

    def __init__(self, objective, constraints, block_dims=None, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if block_dims is None:
            block_dims = (np.asarray(objective).shape[0],)
        block_dims = tuple(int(n) for n in block_dims)
        C = _as_blocks(objective, block_dims)
        cons = [(_as_blocks(a, block_dims), float(b)) for a, b in constraints]
        for blk in C + [a for blocks, _ in cons for a in blocks]:
            if not np.allclose(blk, blk.T, atol=1e-12 * max(1.0, np.abs(blk).max(initial=0))):
                raise NotPhysicalError("SDP data matrices must be symmetric")
        object.__setattr__(self, "objective", [0.5 * (c + c.T) for c in C])
        object.__setattr__(
            self, "constraints", [([0.5 * (a + a.T) for a in blocks], b) for blocks, b in cons]
        )
        object.__setattr__(self, "block_dims", block_dims)
        object.__setattr__(self, "sense", sense)

    @property
    def m(self) -> int:
        return len(self.constraints)

    def to_json(self) -> str:
        return json.dumps(
            {
                "block_dims": list(self.block_dims),
                "sense": self.sense,
                "objective": [c.tolist() for c in self.objective],
                "constraints": [{"A": [a.tolist() for a in blocks], "b": b} for blocks, b in self.constraints],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SdpProblem":
        obj = json.loads(text)
        return cls(
            [np.array(c) for c in obj["objective"]],
            [([np.array(a) for a in con["A"]], con["b"]) for con in obj["constraints"]],
            obj["block_dims"],
            obj["sense"],
        )


@dataclass
class SdpSolution:
    primal_value: float
    dual_value: float
    X: list[np.ndarray]
    y: np.ndarray
    Z: list[np.ndarray]
    status: str
    iterations: int
    primal_infeasibility: float
    dual_infeasibility: float
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return abs(self.primal_value - self.dual_value)

    @property
    def value(self) -> float:
        return self.primal_value


# ---------------------------------------------------------------- linear maps


class _Ops:
    """Constraint maps over block lists; ``A[b]`` has shape ``(m, n_b, n_b)``."""

    def __init__(self, problem: SdpProblem):
        m = problem.m
        self.dims = problem.block_dims
        self.A = [np.zeros((m, n, n)) for n in self.dims]
        for i, (blocks, _) in enumerate(problem.constraints):
            for k, a in enumerate(blocks):
                self.A[k][i] = a
        self.Aflat = [a.reshape(m, -1) for a in self.A]
        self.b = np.array([b for _, b in problem.constraints], dtype=float)

    def apply(self, X: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(len(self.b))
        for af, x in zip(self.Aflat, X):
            out += af @ x.reshape(-1)
        return out

    def adjoint(self, y: np.ndarray) -> list[np.ndarray]:
        return [(y @ af).reshape(n, n) for af, n in zip(self.Aflat, self.dims)]

    def schur(self, W: list[np.ndarray]) -> np.ndarray:
        m = len(self.b)
        M = np.zeros((m, m))
        for a, af, w in zip(self.A, self.Aflat, W):
            waw = np.matmul(np.matmul(w, a), w)
            M += af @ waw.reshape(m, -1).T
        return 0.5 * (M + M.T)


def _inner(A: list[np.ndarray], B: list[np.ndarray]) -> float:
    return float(sum(np.vdot(a, b).real for a, b in zip(A, B)))


def _fro(A: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(a * a) for a in A)))


def _chol(a: np.ndarray) -> np.ndarray:
    return linalg.cholesky(a, lower=True)


def _nt_scaling(x: np.ndarray, z: np.ndarray):
    """Return ``G`` and ``lam`` with ``G^-1 X G^-T = G^T Z G = diag(lam)``."""
    Lx = _chol(x)
    Lz = _chol(z)
    U, s, Vt = linalg.svd(Lz.T @ Lx)
    G = Lx @ Vt.T / np.sqrt(s)
    return G, s


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest ``a`` with ``x + a dx >= 0`` (``inf`` if unbounded)."""
    L = _chol(x)
    t = linalg.solve_triangular(L, linalg.solve_triangular(L, dx, lower=True).T, lower=True)
    lmin = np.linalg.eigvalsh(0.5 * (t + t.T))[0]
    return np.inf if lmin >= 0 else -1.0 / lmin


def solve(
    problem: SdpProblem,
    gap_tol: float = GAP_TOL,
    feas_tol: float = FEAS_TOL,
    max_iter: int = MAX_ITER,
    record_history: bool = False,
) -> SdpSolution:
    """Solve ``problem``; see the module docstring for the standard form.

    Convergence requires ``|p - d| <= gap_tol (1 + |p|)`` and primal/dual
    residuals ``<= feas_tol`` relative to ``1 + ||b||`` and ``1 + ||C||``.
    """
    sign = 1.0 if problem.sense == "min" else -1.0
    ops = _Ops(problem)
    C = [sign * c for c in problem.objective]
    b = ops.b
    dims = problem.block_dims
    n_tot = sum(dims)
    m = problem.m
    nb = 1 + np.linalg.norm(b)
    nc = 1 + _fro(C)

    X = [nb * np.eye(n) for n in dims]
    Z = [nc * np.eye(n) for n in dims]
    y = np.zeros(m)
    history: list[dict] = []
    status = "max_iter"

    def snapshot(it: int, st: str) -> SdpSolution:
        pobj = _inner(C, X)
        dobj = float(b @ y)
        return SdpSolution(
            primal_value=sign * pobj,
            dual_value=sign * dobj,
            X=[x.copy() for x in X],
            y=y.copy(),
            Z=[z.copy() for z in Z],
            status=st,
            iterations=it,
            primal_infeasibility=float(np.linalg.norm(b - ops.apply(X)) / nb),
            dual_infeasibility=_fro([c - z - a for c, z, a in zip(C, Z, ops.adjoint(y))]) / nc,
            history=history,
        )

    def converged(pobj, dobj, pinf, dinf) -> bool:
        return abs(pobj - dobj) <= gap_tol * (1 + abs(pobj)) and pinf <= feas_tol and dinf <= feas_tol

    def near_optimal(pobj, dobj, pinf, dinf) -> bool:
        # breakdown from roundoff close to the boundary; accept a slightly looser point
        g, f = max(10 * gap_tol, BREAKDOWN_FLOOR), max(10 * feas_tol, BREAKDOWN_FLOOR)
        return abs(pobj - dobj) <= g * (1 + abs(pobj)) and pinf <= f and dinf <= f

    for it in range(max_iter + 1):
        Rp = b - ops.apply(X)
        ATy = ops.adjoint(y)
        Rd = [c - z - a for c, z, a in zip(C, Z, ATy)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        pinf = float(np.linalg.norm(Rp) / nb)
        dinf = _fro(Rd) / nc
        xz = _inner(X, Z)
        mu = xz / n_tot
        if record_history:
            history.append(
                dict(it=it, pobj=sign * pobj, dobj=sign * dobj, pinf=pinf, dinf=dinf, xz=xz,
                     slack=float(y @ Rp) - _inner(Rd, X))
            )
        log.debug("it=%d p=%.12g d=%.12g pinf=%.2e dinf=%.2e mu=%.2e", it, pobj, dobj, pinf, dinf, mu)
        if converged(pobj, dobj, pinf, dinf):
            status = "optimal"
            break
        # primal infeasibility / dual unboundedness certificates
        if dinf <= feas_tol and dobj > 1e10 * nc:
            status = "infeasible"
            break
        if pinf <= feas_tol and pobj < -1e10 * nb:
            status = "infeasible"
            break
        if it == max_iter:
            break

        try:
            scal = [_nt_scaling(x, z) for x, z in zip(X, Z)]
            G = [g for g, _ in scal]
            lam = [s for _, s in scal]
            W = [g @ g.T for g in G]
            M = ops.schur(W)
            cho = linalg.cho_factor(M, lower=True)
        except (linalg.LinAlgError, ValueError) as exc:
            sol = snapshot(it, "max_iter")
            if near_optimal(pobj, dobj, pinf, dinf):
                log.warning("Newton system became singular near the optimum (%s); accepting iterate", exc)
                sol.status = "optimal"
                return sol
            raise SdpError(f"Newton system failed at iteration {it}: {exc}", sol) from exc

        WRdW = [w @ r @ w for w, r in zip(W, Rd)]
        aWRdW = ops.apply(WRdW)

        def direction(Rhat):
            T = [g @ r @ g.T for g, r in zip(G, Rhat)]
            rhs = Rp - ops.apply(T) + aWRdW
            dy = linalg.cho_solve(cho, rhs)
            dZ = [r - a for r, a in zip(Rd, ops.adjoint(dy))]
            dX = [t - w @ dz @ w for t, w, dz in zip(T, W, dZ)]
            dX = [0.5 * (d + d.T) for d in dX]
            dZ = [0.5 * (d + d.T) for d in dZ]
            return dX, dy, dZ

        def steps(dX, dZ, tau):
            ap = min([_max_step(x, d) for x, d in zip(X, dX)] + [np.inf])
            ad = min([_max_step(z, d) for z, d in zip(Z, dZ)] + [np.inf])
            return min(1.0, tau * ap), min(1.0, tau * ad)

        # predictor
        dXa, dya, dZa = direction([-np.diag(s) for s in lam])
        ap, ad = steps(dXa, dZa, 1.0)
        mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [z + ad * d for z, d in zip(Z, dZa)]) / n_tot
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

        # corrector
        Rhat = []
        for g, s, dx, dz in zip(G, lam, dXa, dZa):
            gi = linalg.inv(g)
            dxt = gi @ dx @ gi.T
            dzt = g.T @ dz @ g
            cross = 0.5 * (dxt @ dzt + dzt @ dxt)
            rc = sigma * mu * np.eye(len(s)) - np.diag(s * s) - cross
            Rhat.append(2 * rc / (s[:, None] + s[None, :]))
        dX, dy, dZ = direction(Rhat)
        tau = 0.9 + 0.09 * min(ap, ad)
        ap, ad = steps(dX, dZ, tau)
        X = [x + ap * d for x, d in zip(X, dX)]
        y = y + ad * dy
        Z = [z + ad * d for z, d in zip(Z, dZ)]
        X = [0.5 * (x + x.T) for x in X]
        Z = [0.5 * (z + z.T) for z in Z]
        if max(ap, ad) < 1e-12:
            sol = snapshot(it + 1, "max_iter")
            if near_optimal(sign * sol.primal_value, sign * sol.dual_value, sol.primal_infeasibility,
                            sol.dual_infeasibility):
                log.warning("step lengths collapsed near the optimum; accepting iterate")
                sol.status = "optimal"
                return sol
            raise SdpError(f"no progress at iteration {it} (step lengths {ap:.1e}, {ad:.1e})", snapshot(it, "max_iter"))

    return snapshot(it, status)


def solve_or_raise(problem: SdpProblem, **kw) -> SdpSolution:
    sol = solve(problem, **kw)
    if sol.status != "optimal":
        raise SdpError(f"SDP not solved: status={sol.status} after {sol.iterations} iterations", sol)
    return sol


# ---------------------------------------------------------------- builders


def complex_embed(H: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real symmetric ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian matrix."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError("complex_embed needs a square matrix")
    if np.abs(H - dag(H)).max(initial=0) > tol * max(1.0, np.abs(H).max(initial=0)):
        raise NotPhysicalError("complex_embed needs a Hermitian matrix")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def complex_unembed(Xr: np.ndarray) -> np.ndarray:
    """Hermitian matrix from a (possibly unstructured) real embedding, averaging
    the redundant copies."""
    n = Xr.shape[0] // 2
    a, b = Xr[:n, :n], Xr[n:, n:]
    c, d = Xr[n:, :n], Xr[:n, n:]
    H = 0.5 * (a + b) + 0.5j * (c - d)
    return 0.5 * (H + dag(H))


def herm_coeff(H: np.ndarray) -> np.ndarray:
    """Data matrix whose inner product with ``embed(Y)`` is ``Re Tr(H Y)``."""
    return 0.5 * complex_embed(0.5 * (H + dag(np.asarray(H, dtype=complex))))


def entry_functionals(n: int, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian ``H_re, H_im`` with ``Tr(H_re Y) = Re Y_ij`` and ``Tr(H_im Y) = Im Y_ij``."""
    E = np.zeros((n, n), dtype=complex)
    E[j, i] += 0.5
    E[i, j] += 0.5
    F = np.zeros((n, n), dtype=complex)
    F[j, i] -= 0.5j
    F[i, j] += 0.5j
    if i == j:
        F[:] = 0
    return E, F


def lmi_problem(c: Sequence[float], F0: Sequence[np.ndarray], F: Sequence[Sequence[np.ndarray]],
                block_dims: Sequence[int], sense: str = "max") -> SdpProblem:
    """``max/min c^T y`` s.t. ``F0 + sum_i y_i F_i >= 0`` (per block) as a standard-form problem.

    The LMI variable comes back as ``solution.y`` and its optimum as
    ``solution.dual_value`` (negated for ``sense="min"``).
    """
    s = 1.0 if sense == "max" else -1.0
    cons = [([-fb for fb in Fi], s * ci) for ci, Fi in zip(c, F)]
    return SdpProblem(list(F0), cons, block_dims, "min")


def lmi_value(sol: SdpSolution, sense: str = "max") -> float:
    return sol.dual_value if sense == "max" else -sol.dual_value


def trace_norm_problem(M: np.ndarray) -> SdpProblem:
    """``min Tr(P + Q) / 2`` s.t. ``[[P, M^dag], [M, Q]] >= 0`` on the complex embedding."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    p, q = M.shape
    n = p + q
    cons = []
    for i in range(p):
        for j in range(q):
            hre, him = entry_functionals(n, q + i, j)
            cons.append((herm_coeff(hre), M[i, j].real))
            cons.append((herm_coeff(him), M[i, j].imag))
    C = 0.5 * herm_coeff(np.eye(n))
    return SdpProblem(C, cons, (2 * n,), "min")


def trace_norm_sdp(M: np.ndarray, **kw) -> float:
    sol = solve_or_raise(trace_norm_problem(M), **kw)
    return sol.primal_value
