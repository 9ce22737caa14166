"""Probe-state optimization.

Closed-form optima for unitary encodings, mixed-state optima at fixed spectrum,
a few textbook closed forms, and a Nelder-Mead search over Dicke-state
coefficients under local or collective dephasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fisher import finite_difference, sld
from .qcore import DimensionError, NotPhysicalError, check_hermitian, dag, hermitize

log = logging.getLogger(__name__)

MAX_LOCAL_QUBITS = 8


# ---------------------------------------------------------------- unitary encodings


def generator_hamiltonian(U: Callable[[float], np.ndarray], x: float, dx: float | None = None,
                          tol: float = 1e-8) -> np.ndarray:
    """``i (d_x U^dag) U`` by central differences, projected onto Hermitian matrices."""
    for t in (x, x + (dx or 1e-4), x - (dx or 1e-4)):
        u = np.asarray(U(t), dtype=complex)
        if np.abs(dag(u) @ u - np.eye(u.shape[0])).max() > tol:
            raise NotPhysicalError(f"U({t}) is not unitary")
    du_dag = finite_difference(lambda t: dag(np.asarray(U(t), dtype=complex)), x, dx)
    return hermitize(1j * du_dag @ np.asarray(U(x), dtype=complex))


@dataclass(frozen=True)
class UnitaryProbe:
    state: np.ndarray
    qfi: float
    degenerate: bool


def optimal_unitary_probe(H: np.ndarray, tol: float = 1e-12) -> UnitaryProbe:
    """Equal superposition of the extreme eigenvectors; QFI ``(h_max - h_min)^2``."""
    H = check_hermitian(H, "generator")
    lam, vecs = np.linalg.eigh(H)
    gap = lam[-1] - lam[0]
    if gap < tol:
        return UnitaryProbe(vecs[:, 0].copy(), 0.0, True)
    psi = (vecs[:, -1] + vecs[:, 0]) / np.sqrt(2)
    return UnitaryProbe(psi, float(gap**2), False)


def _decreasing_eigh(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = np.linalg.eigh(hermitize(H))
    return lam[::-1], vecs[:, ::-1]


def _check_spectrum(lam: Sequence[float], d: int, tol: float = 1e-9) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (d,):
        raise DimensionError(f"spectrum must have length {d}")
    if (lam < -tol).any() or abs(lam.sum() - 1) > tol:
        raise NotPhysicalError("spectrum is not a probability vector")
    return np.sort(np.clip(lam, 0.0, None))[::-1]


def _pair_coeff(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else (a - b) ** 2 / (a + b)


def _paired_state(lam: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    d = len(lam)
    rho = np.zeros((d, d), dtype=complex)
    for i in range(1, d + 1):
        j = d - i + 1
        if 2 * i < d + 1:
            phi = (vecs[:, i - 1] + vecs[:, j - 1]) / np.sqrt(2)
        elif 2 * i == d + 1:
            phi = vecs[:, i - 1]
        else:
            phi = (vecs[:, i - 1] - vecs[:, j - 1]) / np.sqrt(2)
        rho += lam[i - 1] * np.outer(phi, phi.conj())
    return rho


def _paired_value(lam: np.ndarray, spread: np.ndarray) -> float:
    d = len(lam)
    return float(0.5 * sum(_pair_coeff(lam[i], lam[d - 1 - i]) * spread[i] ** 2 for i in range(d)))


def ffb_optimal_mixed(lam: Sequence[float], H: np.ndarray) -> tuple[np.ndarray, float]:
    """Optimal probe with fixed spectrum ``lam`` under ``exp(-i x H)``."""
    H = check_hermitian(H, "generator")
    d = H.shape[0]
    lam = _check_spectrum(lam, d)
    h, vecs = _decreasing_eigh(H)
    return _paired_state(lam, vecs), _paired_value(lam, h - h[::-1])


@dataclass(frozen=True)
class FfbBound:
    value: float
    state: np.ndarray
    crossing: bool


def ffb_upper_bound(dH: Callable[[float], np.ndarray], lam: Sequence[float], T: float,
                    steps: int = 1000, gap_tol: float = 1e-9) -> FfbBound:
    """Control-enhanced bound ``1/2 sum c_i [int (mu_i - mu_{d-i+1})]^2`` (trapezoid rule).

    ``crossing`` is set when two eigenvalues of ``dH`` come within ``gap_tol``
    of each other on the grid, where the decreasing ordering is ambiguous.
    """
    ts = np.linspace(0.0, T, steps + 1)
    mats = [check_hermitian(dH(t), "dH(t)") for t in ts]
    d = mats[0].shape[0]
    lam = _check_spectrum(lam, d)
    mus = np.array([np.linalg.eigvalsh(m)[::-1] for m in mats])
    crossing = bool(d > 1 and np.min(-np.diff(mus, axis=1)) < gap_tol and np.ptp(mus) > gap_tol)
    if crossing:
        log.warning("eigenvalues of dH(t) cross or touch; ordering may be ambiguous")
    integ = np.trapezoid(mus, ts, axis=0) if hasattr(np, "trapezoid") else np.trapz(mus, ts, axis=0)
    _, vecs0 = _decreasing_eigh(mats[0])
    return FfbBound(_paired_value(lam, integ - integ[::-1]), _paired_state(lam, vecs0), crossing)


# ---------------------------------------------------------------- closed forms


def mzi_coherent_squeezed_qfi(n_a: float, n_b: float) -> float:
    """Coherent light in one port, squeezed vacuum in the other."""
    if n_a < 0 or n_b < 0:
        raise ValueError("photon numbers must be nonnegative")
    return float(2 * n_a * n_b + n_a + n_b + 2 * n_a * np.sqrt(n_b * (n_b + 1)))


def berry_wiseman_state(N: int) -> np.ndarray:
    """Sine-profile coefficients over the ``J_y`` eigenbasis, ``m = -N/2 .. N/2``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    m = np.arange(N + 1) - N / 2
    return np.sqrt(2 / (N + 2)) * np.sin((2 * m + N + 2) * np.pi / (2 * (N + 2)))


def thermometer_residual(energies: Sequence[float], T: float) -> float:
    """Largest violation of ``(E_i - E_j)(E_i + E_j - 2(<H> + T)) = 0``."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    E = np.asarray(energies, dtype=float)
    w = np.exp(-(E - E.min()) / T)
    mean = float(np.dot(w, E) / w.sum())
    res = np.abs((E[:, None] - E[None, :]) * (E[:, None] + E[None, :] - 2 * (mean + T)))
    return float(res.max())


# ---------------------------------------------------------------- Nelder-Mead


@dataclass(frozen=True)
class NelderMeadConfig:
    a_r: float = 1.0
    a_e: float = 2.0
    a_c: float = 0.5
    a_s: float = 0.5
    eps: float = 1e-10
    max_iter: int = 5000

    def __post_init__(self):
        if not self.a_r > 0:
            raise ValueError("reflection coefficient must be positive")
        if not self.a_e > max(1.0, self.a_r):
            raise ValueError("expansion coefficient must exceed max(1, a_r)")
        if not (0 < self.a_c < 1 and 0 < self.a_s < 1):
            raise ValueError("contraction and shrink coefficients must lie in (0, 1)")


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    spread: float
    history: list[tuple[int, float, float, float]] = field(default_factory=list)


def nelder_mead(objective: Callable[[np.ndarray], float], simplex: np.ndarray,
                config: NelderMeadConfig = NelderMeadConfig()) -> NelderMeadResult:
    """Minimize ``objective`` from an ``(n+1, n)`` simplex.

    History rows are ``(iter, f_best, f_worst, spread)``.
    """
    pts = np.array(simplex, dtype=float)
    if pts.ndim != 2 or pts.shape[0] != pts.shape[1] + 1:
        raise DimensionError("simplex must hold n+1 points in n dimensions")
    evals = 0

    def f(c):
        nonlocal evals
        evals += 1
        v = float(objective(c))
        if not np.isfinite(v):
            raise FloatingPointError(f"objective returned {v}")
        return v

    vals = np.array([f(c) for c in pts])
    history = []
    it = 0
    converged = False
    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        spread = vals[-1] - vals[0]
        history.append((it, float(vals[0]), float(vals[-1]), float(spread)))
        if spread < config.eps:
            converged = True
            break
        if it >= config.max_iter:
            break
        it += 1
        cbar = pts[:-1].mean(axis=0)
        worst = pts[-1]
        cr = cbar + config.a_r * (cbar - worst)
        fr = f(cr)
        f1, fn, fn1 = vals[0], vals[-2], vals[-1]
        if f1 <= fr < fn:
            pts[-1], vals[-1] = cr, fr
            continue
        if fr < f1:
            ce = cbar + config.a_e * (cr - cbar)
            fe = f(ce)
            if fe < fr:
                pts[-1], vals[-1] = ce, fe
            else:
                pts[-1], vals[-1] = cr, fr
            continue
        if fr < fn1:
            coc = cbar + config.a_c * (cr - cbar)
            foc = f(coc)
            if foc <= fr:
                pts[-1], vals[-1] = coc, foc
                continue
        else:
            cic = cbar - config.a_c * (cbar - worst)
            fic = f(cic)
            if fic < fn1:
                pts[-1], vals[-1] = cic, fic
                continue
        pts[1:] = pts[0] + config.a_s * (pts[1:] - pts[0])
        vals[1:] = [f(c) for c in pts[1:]]
    return NelderMeadResult(pts[0].copy(), float(vals[0]), it, evals, converged, float(spread), history)


# ---------------------------------------------------------------- spin dephasing


@dataclass(frozen=True)
class SpinModel:
    N: int
    omega: float
    gamma: float
    kind: str = "local"
    coeffs: np.ndarray | None = None
    t0: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("local", "collective"):
            raise ValueError("kind must be 'local' or 'collective'")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def normalized(c: Sequence[complex]) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    n = np.linalg.norm(c)
    if n == 0:
        raise ValueError("zero coefficient vector")
    return c / n


def dicke_embedding(N: int) -> np.ndarray:
    """``2^N x (N+1)`` isometry; column ``k`` is ``|J, m = k - N/2>``.

    Qubit state ``|0>`` carries ``sigma_z = +1``.
    """
    pop = np.array([bin(b).count("1") for b in range(2**N)])
    m = N / 2 - pop
    V = np.zeros((2**N, N + 1))
    for k in range(N + 1):
        sel = np.isclose(m, k - N / 2)
        V[sel, k] = 1 / np.sqrt(sel.sum())
    return V


def _sz_diag(N: int) -> np.ndarray:
    pop = np.array([bin(b).count("1") for b in range(2**N)])
    return N / 2 - pop


def _hamming(N: int) -> np.ndarray:
    b = np.arange(2**N)
    x = b[:, None] ^ b[None, :]
    return np.array([bin(v).count("1") for v in x.ravel()]).reshape(x.shape)


def collective_kernel(gamma: float, T: float, t0: float, dm: np.ndarray) -> np.ndarray:
    """Coherence factor after ``[t0, T]`` of rate ``gamma / (1 - exp(-gamma t))``."""
    if gamma == 0:
        return np.ones_like(dm, dtype=float)
    ratio = np.expm1(gamma * t0) / np.expm1(gamma * T)
    return ratio ** (dm**2)


def evolved_state(model: SpinModel, coeffs: Sequence[complex], T: float) -> tuple[np.ndarray, np.ndarray]:
    """``(rho(T), d rho / d omega)`` for the Dicke-coefficient probe."""
    c = normalized(coeffs)
    N = model.N
    if len(c) != N + 1:
        raise DimensionError(f"need {N + 1} Dicke coefficients")
    if model.kind == "local":
        if N > MAX_LOCAL_QUBITS:
            raise ValueError(f"local dephasing limited to N <= {MAX_LOCAL_QUBITS}")
        psi = dicke_embedding(N) @ c
        m = _sz_diag(N)
        decay = np.exp(-model.gamma * T * _hamming(N))
    else:
        psi = c
        m = np.arange(N + 1) - N / 2
        decay = collective_kernel(model.gamma, T, model.t0, m[:, None] - m[None, :])
    dm = m[:, None] - m[None, :]
    rho = np.outer(psi, psi.conj()) * decay * np.exp(-1j * model.omega * T * dm)
    return rho, -1j * T * dm * rho


def spin_dephasing_qfi(model: SpinModel, coeffs: Sequence[complex], T: float) -> float:
    if T <= 0:
        raise ValueError("T must be positive")
    rho, drho = evolved_state(model, coeffs, T)
    return sld(rho, drho).qfi


def spin_dephasing_objective(model: SpinModel, T: float, coeffs: Sequence[complex] | None = None) -> float:
    """``-F(T) / T`` for the frequency ``omega``."""
    c = model.coeffs if coeffs is None else coeffs
    if c is None:
        raise ValueError("no coefficients given")
    return -spin_dephasing_qfi(model, c, T) / T


def ghz_coeffs(N: int) -> np.ndarray:
    c = np.zeros(N + 1)
    c[0] = c[-1] = 1 / np.sqrt(2)
    return c


def _expand_symmetric(p: np.ndarray, N: int) -> np.ndarray:
    half = np.abs(p)
    full = np.concatenate([half, half[: (N + 1) // 2][::-1]]) if N % 2 == 0 else np.concatenate([half, half[::-1]])
    return full


def dicke_search(model: SpinModel, T: float, symmetric: bool = True,
                 config: NelderMeadConfig = NelderMeadConfig(eps=1e-9, max_iter=2000),
                 perturbation: float = 0.05) -> tuple[np.ndarray, NelderMeadResult]:
    """Nelder-Mead over real Dicke coefficients from a sine-profile start.

    With ``symmetric`` the search runs over ``c_m = c_-m >= 0`` only.
    """
    N = model.N
    start = berry_wiseman_state(N)
    n = N // 2 + 1 if symmetric else N + 1

    def expand(p):
        return _expand_symmetric(p, N) if symmetric else p

    x0 = start[:n]
    pts = [x0]
    for e in np.eye(n):
        y = x0 + perturbation * e
        pts.append(y / np.linalg.norm(expand(y)))
    res = nelder_mead(lambda p: spin_dephasing_objective(model, T, expand(p)), np.array(pts), config)
    return normalized(expand(res.x)).real, res


__all__ = [
    "FfbBound",
    "MAX_LOCAL_QUBITS",
    "NelderMeadConfig",
    "NelderMeadResult",
    "SpinModel",
    "UnitaryProbe",
    "berry_wiseman_state",
    "collective_kernel",
    "dicke_embedding",
    "dicke_search",
    "evolved_state",
    "ffb_optimal_mixed",
    "ffb_upper_bound",
    "generator_hamiltonian",
    "ghz_coeffs",
    "mzi_coherent_squeezed_qfi",
    "nelder_mead",
    "optimal_unitary_probe",
    "spin_dephasing_objective",
    "spin_dephasing_qfi",
    "thermometer_residual",
]
