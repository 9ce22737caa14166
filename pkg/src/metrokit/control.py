"""Quantum control for parameter estimation.

GRAPE over Lindblad dynamics with piecewise-constant control amplitudes, the
time-dependent QFI bound for unitary dynamics, and reversal control.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .fisher import sld
from .qcore import (
    DimensionError,
    check_hermitian,
    commutator_superop,
    dissipator_superop,
    hermitize,
    unvec,
    vec,
)

log = logging.getLogger(__name__)


@dataclass
class ControlProblem:
    """``H = H0(x) + sum_k V_k(t) H_k`` plus x-independent Lindblad noise."""

    H0: Callable[[float], np.ndarray]
    dH0: Callable[[float], np.ndarray]
    x: float
    controls: Sequence[np.ndarray]
    T: float
    steps: int
    lindblad_ops: Sequence[np.ndarray] = ()
    rates: Sequence[float] = ()
    bounds: tuple[float, float] = (-np.inf, np.inf)
    dim: int = field(init=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("control bounds must satisfy V_min < V_max")
        h = check_hermitian(self.H0(self.x), "H0")
        self.dim = h.shape[0]
        self.controls = [check_hermitian(c, "control Hamiltonian") for c in self.controls]
        if any(c.shape != h.shape for c in self.controls):
            raise DimensionError("control Hamiltonians must match H0")
        if len(self.rates) != len(self.lindblad_ops):
            raise DimensionError("one rate per Lindblad operator")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def zero_field(self) -> "ControlField":
        return ControlField(np.zeros((self.steps, self.n_controls)))

    def noise_superop(self) -> np.ndarray:
        d2 = self.dim**2
        out = np.zeros((d2, d2), dtype=complex)
        for g, L in zip(self.rates, self.lindblad_ops):
            out += g * dissipator_superop(np.asarray(L, dtype=complex))
        return out

    def clip(self, amps: np.ndarray) -> np.ndarray:
        return np.clip(amps, *self.bounds)


@dataclass
class ControlField:
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["step"] + [f"V{k}" for k in range(self.amplitudes.shape[1])])
        for i, row in enumerate(self.amplitudes):
            w.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ControlField":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        return cls(np.array([[float(v) for v in r[1:]] for r in rows]))


def _check_field(problem: ControlProblem, ctrl: ControlField) -> np.ndarray:
    a = ctrl.amplitudes
    if a.shape != (problem.steps, problem.n_controls):
        raise DimensionError(f"field must be {problem.steps}x{problem.n_controls}, got {a.shape}")
    return a


def _generators(problem: ControlProblem, amps: np.ndarray):
    """Per-step extended generators ``[[L, 0], [dL, L]]`` (already times dt)."""
    H0 = check_hermitian(problem.H0(problem.x), "H0")
    dL = commutator_superop(check_hermitian(problem.dH0(problem.x), "dH0"))
    noise = problem.noise_superop()
    ctrl = [commutator_superop(c) for c in problem.controls]
    base = commutator_superop(H0) + noise
    d2 = problem.dim**2
    out = []
    for row in amps:
        L = base + sum(v * c for v, c in zip(row, ctrl))
        B = np.zeros((2 * d2, 2 * d2), dtype=complex)
        B[:d2, :d2] = L
        B[d2:, d2:] = L
        B[d2:, :d2] = dL
        out.append(problem.dt * B)
    return out, ctrl


def propagate_with_derivative(problem: ControlProblem, ctrl: ControlField,
                              rho_in: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(rho(T), d_x rho(T))`` by exact propagation of the joint generator."""
    amps = _check_field(problem, ctrl)
    rho_in = np.asarray(rho_in, dtype=complex)
    if rho_in.shape != (problem.dim, problem.dim):
        raise DimensionError("input state does not match the Hamiltonian dimension")
    d2 = problem.dim**2
    s = np.concatenate([vec(rho_in), np.zeros(d2, dtype=complex)])
    gens, _ = _generators(problem, amps)
    for B in gens:
        s = linalg.expm(B) @ s
    return hermitize(unvec(s[:d2], problem.dim)), hermitize(unvec(s[d2:], problem.dim))


def final_qfi(problem: ControlProblem, ctrl: ControlField, rho_in: np.ndarray) -> float:
    rho, drho = propagate_with_derivative(problem, ctrl, rho_in)
    return sld(rho, drho).qfi


def gradient_fd(problem: ControlProblem, ctrl: ControlField, rho_in: np.ndarray,
                step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the final QFI over every amplitude."""
    amps = _check_field(problem, ctrl)
    g = np.zeros_like(amps)
    for idx in np.ndindex(*amps.shape):
        plus, minus = amps.copy(), amps.copy()
        plus[idx] += step
        minus[idx] -= step
        g[idx] = (final_qfi(problem, ControlField(plus), rho_in)
                  - final_qfi(problem, ControlField(minus), rho_in)) / (2 * step)
    return g


def gradient_adjoint(problem: ControlProblem, ctrl: ControlField, rho_in: np.ndarray) -> np.ndarray:
    """Adjoint-mode gradient: forward states, backward costates, exact Frechet kernels."""
    amps = _check_field(problem, ctrl)
    d, d2 = problem.dim, problem.dim**2
    gens, ctrl_ops = _generators(problem, amps)
    props = [linalg.expm(B) for B in gens]
    states = [np.concatenate([vec(np.asarray(rho_in, dtype=complex)), np.zeros(d2, dtype=complex)])]
    for P in props:
        states.append(P @ states[-1])
    rho, drho = hermitize(unvec(states[-1][:d2], d)), hermitize(unvec(states[-1][d2:], d))
    L = sld(rho, drho).sld
    # dF = 2 Tr(d(drho) L) - Tr(d(rho) L^2)
    lam = np.concatenate([vec(-L @ L), vec(2 * L)])
    dirs = []
    for c in ctrl_ops:
        E = np.zeros((2 * d2, 2 * d2), dtype=complex)
        E[:d2, :d2] = c
        E[d2:, d2:] = c
        dirs.append(problem.dt * E)
    g = np.zeros_like(amps)
    for t in range(problem.steps - 1, -1, -1):
        for k, E in enumerate(dirs):
            _, dP = linalg.expm_frechet(gens[t], E)
            g[t, k] = np.real(np.vdot(lam, dP @ states[t]))
        lam = props[t].conj().T @ lam
    return g


@dataclass
class GrapeResult:
    field: ControlField
    qfi_history: list[float]
    learning_rate: float
    stopped: str


def grape(problem: ControlProblem, field_init: ControlField, rho_in: np.ndarray, epsilon: float = 0.01,
          iters: int = 50, gradient: str = "fd", min_epsilon: float = 1e-6) -> GrapeResult:
    """Gradient ascent on the final QFI with clipping and halving backtracking.

    A step is accepted only if the QFI does not decrease, so the history is
    nondecreasing. ``gradient`` is ``"fd"`` or ``"adjoint"``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    grad_fn = {"fd": gradient_fd, "adjoint": gradient_adjoint}[gradient]
    amps = problem.clip(_check_field(problem, field_init).copy())
    f = final_qfi(problem, ControlField(amps), rho_in)
    if not np.isfinite(f):
        raise FloatingPointError("initial QFI is not finite")
    history = [f]
    eps = epsilon
    stopped = "iters"
    for _ in range(iters):
        g = grad_fn(problem, ControlField(amps), rho_in)
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient")
        while eps >= min_epsilon:
            trial = problem.clip(amps + eps * g)
            ft = final_qfi(problem, ControlField(trial), rho_in)
            if not np.isfinite(ft):
                raise FloatingPointError("non-finite QFI during line search")
            if ft >= f:
                amps, f = trial, ft
                break
            eps *= 0.5
        else:
            stopped = "learning rate below minimum"
            history.append(f)
            break
        history.append(f)
        log.debug("grape F=%.10g eps=%.3g", f, eps)
    return GrapeResult(ControlField(amps), history, eps, stopped)


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def pang_jordan_bound(dH: Callable[[float], np.ndarray], T: float, steps: int = 1000) -> float:
    """``[int_0^T (h_max - h_min) dt]^2`` with the trapezoid rule."""
    ts = np.linspace(0.0, T, steps + 1)
    gaps = []
    for t in ts:
        h = np.linalg.eigvalsh(check_hermitian(dH(t), "dH(t)"))
        gaps.append(h[-1] - h[0])
    return _trapezoid(np.array(gaps), ts) ** 2


def reversal_control(H: Callable[[float], np.ndarray], x_hat: float) -> np.ndarray:
    """``H_c = -H(x_hat)``; cancels the free evolution when ``x_hat = x``."""
    return -check_hermitian(H(x_hat), "H")


__all__ = [
    "ControlField",
    "ControlProblem",
    "GrapeResult",
    "final_qfi",
    "gradient_adjoint",
    "gradient_fd",
    "grape",
    "pang_jordan_bound",
    "propagate_with_derivative",
    "reversal_control",
]
