"""Classical and quantum Fisher information, SLD, fidelity and Bures geometry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qcore import DimensionError, NotPhysicalError, check_hermitian, dag, hermitize

CUTOFF = 1e-12


class SingularFisherError(ValueError):
    """The family leaves its support: an outcome or eigen-direction with zero
    weight has a nonzero derivative."""


@dataclass(frozen=True)
class SldResult:
    sld: np.ndarray
    qfi: float
    support_cutoff: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def cfi(probs, derivs, cutoff: float = CUTOFF, tol: float = 1e-9) -> float:
    """Fisher information ``sum_i (dp_i)^2 / p_i`` of a discrete distribution."""
    p = np.asarray(probs, dtype=float)
    dp = np.asarray(derivs, dtype=float)
    if p.shape != dp.shape:
        raise DimensionError("probabilities and derivatives differ in length")
    if (p < -tol).any() or abs(p.sum() - 1) > tol:
        raise NotPhysicalError("not a probability distribution")
    if abs(dp.sum()) > tol * max(1.0, np.abs(dp).max()):
        raise NotPhysicalError("derivatives of a distribution must sum to zero")
    live = p > cutoff
    if (np.abs(dp[~live]) > cutoff).any():
        raise SingularFisherError("zero-probability outcome with nonzero derivative")
    return float(np.sum(dp[live] ** 2 / p[live]))


def _eig_state(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = np.linalg.eigh(hermitize(np.asarray(rho, dtype=complex)))
    return lam, vecs


def sld(rho: np.ndarray, drho: np.ndarray, cutoff: float = CUTOFF, tol: float = 1e-9) -> SldResult:
    """Solve ``drho = (rho L + L rho) / 2`` in the eigenbasis of ``rho``.

    Matrix elements with ``lam_a + lam_b <= cutoff * lam_max`` are set to zero;
    ``drho`` must vanish there (to ``tol``), otherwise the family is singular.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = check_hermitian(drho, "state derivative", tol=1e-8)
    if rho.shape != drho.shape:
        raise DimensionError("rho and drho differ in shape")
    if abs(np.trace(drho)) > 1e-8 * max(1.0, np.abs(drho).max()):
        raise NotPhysicalError("state derivative must be traceless")
    lam, vecs = _eig_state(rho)
    lam = np.clip(lam, 0.0, None)
    d_eig = dag(vecs) @ drho @ vecs
    denom = lam[:, None] + lam[None, :]
    thresh = cutoff * lam.max()
    live = denom > thresh
    if np.abs(d_eig[~live]).max(initial=0.0) > tol:
        raise SingularFisherError("state derivative has weight outside the support of rho")
    l_eig = np.zeros_like(d_eig)
    l_eig[live] = 2 * d_eig[live] / denom[live]
    L = hermitize(vecs @ l_eig @ dag(vecs))
    # Tr(rho L^2) in the eigenbasis
    qfi = float(np.sum(lam[:, None] * np.abs(l_eig) ** 2).real)
    return SldResult(L, qfi, thresh, lam, vecs)


def qfi(rho: np.ndarray, drho: np.ndarray, **kw) -> float:
    return sld(rho, drho, **kw).qfi


def qfim(rho: np.ndarray, drhos: Sequence[np.ndarray], **kw) -> np.ndarray:
    """Quantum Fisher information matrix ``F_jk = Tr(rho {L_j, L_k}) / 2``."""
    slds = [sld(rho, d, **kw).sld for d in drhos]
    n = len(slds)
    F = np.empty((n, n))
    for j in range(n):
        for k in range(j, n):
            F[j, k] = F[k, j] = 0.5 * np.trace(rho @ (slds[j] @ slds[k] + slds[k] @ slds[j])).real
    return F


def check_povm(elements: Sequence[np.ndarray], tol: float = 1e-9) -> list[np.ndarray]:
    ops = [check_hermitian(e, "POVM element", tol) for e in elements]
    if any(np.linalg.eigvalsh(hermitize(e))[0] < -tol for e in ops):
        raise NotPhysicalError("POVM element is not positive semidefinite")
    total = sum(ops)
    if np.abs(total - np.eye(total.shape[0])).max() > tol:
        raise NotPhysicalError("POVM elements do not sum to the identity")
    return ops


def cfi_povm(rho: np.ndarray, drho: np.ndarray, povm: Sequence[np.ndarray], **kw) -> float:
    ops = check_povm(povm)
    if ops[0].shape != np.shape(rho):
        raise DimensionError("POVM and state dimensions differ")
    p = np.array([np.trace(rho @ e).real for e in ops])
    dp = np.array([np.trace(drho @ e).real for e in ops])
    p = np.clip(p, 0.0, None)
    return cfi(p / p.sum(), dp, **kw)


def sld_projectors(rho: np.ndarray, drho: np.ndarray) -> list[np.ndarray]:
    """Projective measurement on the SLD eigenbasis."""
    _, vecs = np.linalg.eigh(sld(rho, drho).sld)
    return [np.outer(v, v.conj()) for v in vecs.T]


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    return (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ dag(vecs)


def fidelity(rho1: np.ndarray, rho2: np.ndarray, tol: float = 1e-9) -> float:
    """Root fidelity ``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))``."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape:
        raise DimensionError("states differ in dimension")
    for r in (rho1, rho2):
        if np.linalg.eigvalsh(hermitize(r))[0] < -tol:
            raise NotPhysicalError("fidelity needs positive semidefinite inputs")
    # singular values of sqrt(rho1) sqrt(rho2) stay accurate for rank-deficient states
    sv = np.linalg.svd(psd_sqrt(rho1) @ psd_sqrt(rho2), compute_uv=False)
    return float(np.sum(sv))


def bures_distance(rho1, rho2) -> float:
    return float(np.sqrt(max(0.0, 2 - 2 * fidelity(rho1, rho2))))


def bures_angle(rho1, rho2) -> float:
    return float(np.arccos(min(1.0, fidelity(rho1, rho2))))


def _support_rank(rho: np.ndarray, cutoff: float) -> int:
    lam = np.linalg.eigvalsh(hermitize(rho))
    return int(np.sum(lam > cutoff * max(lam.max(), 1e-300)))


def qfi_from_bures(
    family: Callable[[float], np.ndarray],
    x: float,
    dx: float,
    rank_cutoff: float = 1e-8,
) -> float:
    """QFI from the Bures distance, ``4 D^2(rho_x, rho_x+dx) / dx^2``.

    One Richardson step over ``(dx, dx/2)`` removes the leading ``O(dx)`` term.
    """
    if dx <= 0:
        raise ValueError("dx must be positive")
    rho0 = family(x)
    r0 = _support_rank(rho0, rank_cutoff)

    def estimate(h: float) -> float:
        rho1 = family(x + h)
        if _support_rank(rho1, rank_cutoff) != r0:
            raise SingularFisherError(f"rank changes between x={x} and x+dx={x + h}")
        return 4 * bures_distance(rho0, rho1) ** 2 / h**2

    return 2 * estimate(dx / 2) - estimate(dx)


def finite_difference(f: Callable[[float], np.ndarray], x: float, step: float | None = None) -> np.ndarray:
    """Central difference with one Richardson step; base step ``1e-4 (1 + |x|)``."""
    h = 1e-4 * (1 + abs(x)) if step is None else step

    def central(s):
        return (np.asarray(f(x + s)) - np.asarray(f(x - s))) / (2 * s)

    return (4 * central(h / 2) - central(h)) / 3
