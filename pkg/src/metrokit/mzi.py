"""Adaptive Mach-Zehnder phase estimation with photon-by-photon detection.

States are two-mode Fock vectors ``amps[k]`` over ``|k, N-k>`` (``k`` photons in
mode ``a``). After each detection the conditional state depends on the
unknown phase, so posterior computations keep one state per grid point:
``amps`` may carry a leading grid axis of length ``G``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .qcore import DimensionError, NotPhysicalError

log = logging.getLogger(__name__)

GRID_SIZE = 2048
SAMPLE_BUDGET = 2000
SCAN_POINTS = 64
GOLDEN_TOL = 1e-4
EXACT_MAX_N = 10
# sharpness below this is grid cancellation roundoff
SHARPNESS_FLOOR = 1e-12


@dataclass
class TwoModeFockState:
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape[-1] < 1:
            raise DimensionError("empty Fock vector")

    @property
    def N(self) -> int:
        return self.amps.shape[-1] - 1

    @property
    def batched(self) -> bool:
        return self.amps.ndim == 2

    def norm2(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=-1)

    def normalized(self) -> "TwoModeFockState":
        n = np.sqrt(self.norm2())
        n = np.where(n > 0, n, 1.0)
        return TwoModeFockState(self.amps / (n[..., None] if self.batched else n))

    def on_grid(self, size: int) -> "TwoModeFockState":
        if self.batched:
            if self.amps.shape[0] != size:
                raise DimensionError("state grid does not match the prior grid")
            return self
        return TwoModeFockState(np.broadcast_to(self.amps, (size, self.N + 1)).copy())


def fock_state(k: int, N: int) -> TwoModeFockState:
    """``|k, N-k>``."""
    v = np.zeros(N + 1, dtype=complex)
    v[k] = 1
    return TwoModeFockState(v)


def lower_a(amps: np.ndarray) -> np.ndarray:
    """``a |k, N-k> = sqrt(k) |k-1, N-k>``."""
    N = amps.shape[-1] - 1
    return amps[..., 1:] * np.sqrt(np.arange(1, N + 1))


def lower_b(amps: np.ndarray) -> np.ndarray:
    """``b |k, N-k> = sqrt(N-k) |k, N-k-1>``."""
    N = amps.shape[-1] - 1
    return amps[..., :-1] * np.sqrt(N - np.arange(N))


def _port_coeffs(phi, Phi, u: int):
    t = (np.asarray(phi) - Phi) / 2 + np.pi * u / 2
    return np.sin(t), np.cos(t)


def output_mode_apply(state: TwoModeFockState, phi, Phi: float, u: int) -> tuple[TwoModeFockState, np.ndarray]:
    """Apply ``a_u = a sin(theta + pi u/2) + b cos(theta + pi u/2)``, ``theta = (phi - Phi)/2``.

    Returns the unnormalized ``N-1`` photon state and its squared norm.
    """
    if state.N < 1:
        raise ValueError("no photons left to detect")
    if u not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    s, c = _port_coeffs(phi, Phi, u)
    if state.batched:
        s, c = np.asarray(s)[:, None], np.asarray(c)[:, None]
    out = s * lower_a(state.amps) + c * lower_b(state.amps)
    return TwoModeFockState(out), np.sum(np.abs(out) ** 2, axis=-1)


def detection_prob(state: TwoModeFockState, phi, Phi: float, u: int) -> np.ndarray:
    """``<psi| a_u^dag a_u |psi> / N`` for a normalized state."""
    _, n2 = output_mode_apply(state, phi, Phi, u)
    return n2 / state.N


@dataclass
class PhasePrior:
    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.grid.shape != self.weights.shape:
            raise DimensionError("grid and weights differ in length")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1) > 1e-12:
            raise NotPhysicalError("prior weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, size: int = GRID_SIZE) -> "PhasePrior":
        return cls(phase_grid(size), np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return len(self.grid)

    def mean_phasor(self) -> complex:
        return complex(np.dot(self.weights, np.exp(1j * self.grid)))


def phase_grid(size: int = GRID_SIZE) -> np.ndarray:
    return -np.pi + 2 * np.pi * np.arange(size) / size


def sharpness(prior: PhasePrior) -> float:
    return float(abs(prior.mean_phasor()))


def holevo_variance(prior: PhasePrior) -> float:
    """``S^-2 - 1``; infinite when the sharpness vanishes."""
    s = sharpness(prior)
    return float("inf") if s <= SHARPNESS_FLOOR else s**-2 - 1


def phase_estimate(prior: PhasePrior) -> float:
    return float(np.angle(prior.mean_phasor()))


def posterior_update(prior: PhasePrior, state: TwoModeFockState, Phi: float,
                     u: int) -> tuple[PhasePrior, TwoModeFockState]:
    """Bayes update on the grid; returns the posterior and normalized per-phase states."""
    st = state.on_grid(prior.size)
    new, n2 = output_mode_apply(st, prior.grid, Phi, u)
    w = prior.weights * n2 / st.N
    total = w.sum()
    if not total > 0:
        raise FloatingPointError("outcome has zero probability under the prior")
    return PhasePrior(prior.grid, w / total), new.normalized()


# ---------------------------------------------------------------- input states


def jy_matrix(N: int) -> np.ndarray:
    """``J_y = (a^dag b - a b^dag) / 2i`` on ``|k, N-k>``."""
    k = np.arange(N)
    up = np.sqrt((k + 1) * (N - k))  # a^dag b: |k> -> |k+1>
    adb = np.zeros((N + 1, N + 1))
    adb[k + 1, k] = up
    return (adb - adb.T) / 2j


def jx_matrix(N: int) -> np.ndarray:
    k = np.arange(N)
    adb = np.zeros((N + 1, N + 1))
    adb[k + 1, k] = np.sqrt((k + 1) * (N - k))
    return (adb + adb.T) / 2


def jy_eigenbasis(N: int) -> np.ndarray:
    """Columns ``|m>_y`` for ``m = -N/2 .. N/2``.

    Phases follow ``|m>_y = exp(-i pi/2 J_x) |m>_z`` (``|m>_z = |m + N/2, N/2 - m>``);
    the result is checked against ``J_y``.
    """
    R = linalg.expm(-1j * np.pi / 2 * jx_matrix(N))
    m = np.arange(N + 1) - N / 2
    Jy = jy_matrix(N)
    if np.abs(Jy @ R - R * m).max() > 1e-10:
        R = R.conj()
    if np.abs(Jy @ R - R * m).max() > 1e-10:
        raise RuntimeError("J_y eigenbasis construction failed")
    return R


def state_from_jy(coeffs: Sequence[complex]) -> TwoModeFockState:
    c = np.asarray(coeffs, dtype=complex)
    return TwoModeFockState(jy_eigenbasis(len(c) - 1) @ c).normalized()


def berry_wiseman_input(N: int) -> TwoModeFockState:
    from .stateopt import berry_wiseman_state

    return state_from_jy(berry_wiseman_state(N))


# ---------------------------------------------------------------- online policy


def _branch_terms(prior: PhasePrior, state: TwoModeFockState):
    st = state.on_grid(prior.size)
    A = np.sum(np.abs(lower_a(st.amps)) ** 2, axis=-1)
    B = np.sum(np.abs(lower_b(st.amps)) ** 2, axis=-1)
    R = np.real(np.sum(lower_a(st.amps).conj() * lower_b(st.amps), axis=-1))
    return prior.weights * np.exp(1j * prior.grid) / st.N, A, B, R


def _m_on(terms, grid, Phi: float) -> float:
    wz, A, B, R = terms
    total = 0.0
    for u in (0, 1):
        s, c = _port_coeffs(grid, Phi, u)
        total += abs(np.dot(wz, s * s * A + c * c * B + 2 * s * c * R))
    return float(total)


def m_on(prior: PhasePrior, state: TwoModeFockState, Phi: float) -> float:
    """``sum_u |sum_i w_i p(u | phi_i, Phi) exp(i phi_i)|`` for the next detection."""
    return _m_on(_branch_terms(prior, state), prior.grid, Phi)


def online_next_phase(prior: PhasePrior, state: TwoModeFockState) -> float:
    """Maximize the one-step lookahead by a grid scan plus golden-section search."""
    terms = _branch_terms(prior, state)
    scan = -np.pi + 2 * np.pi * np.arange(SCAN_POINTS) / SCAN_POINTS
    vals = [_m_on(terms, prior.grid, p) for p in scan]
    best = scan[int(np.argmax(vals))]
    h = 2 * np.pi / SCAN_POINTS
    lo, hi = best - h, best + h
    g = (np.sqrt(5) - 1) / 2
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = _m_on(terms, prior.grid, x1), _m_on(terms, prior.grid, x2)
    while hi - lo > GOLDEN_TOL:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = _m_on(terms, prior.grid, x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = _m_on(terms, prior.grid, x2)
    cand = (lo + hi) / 2
    if _m_on(terms, prior.grid, cand) < max(vals):
        cand = best
    return float(np.angle(np.exp(1j * cand)))


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class AdaptivePolicy:
    """``kind`` is ``online``, ``offline`` or ``fixed``.

    Offline phases follow ``Phi_m = Phi_{m-1} - (-1)^{u_{m-1}} dPhi_m`` for
    ``m >= 2``; ``dPhi_1`` is carried for indexing but ``Phi_1`` is set directly.
    """

    kind: str = "online"
    offline_deltas: tuple[float, ...] = ()
    phi1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("online", "offline", "fixed"):
            raise ValueError("policy kind must be online, offline or fixed")
        if not np.isfinite(self.offline_deltas).all():
            raise ValueError("offline deltas must be finite")


@dataclass
class MeasurementRecord:
    outcomes: list[int] = field(default_factory=list)
    phases: list[float] = field(default_factory=list)


@dataclass
class AdaptiveRun:
    record: MeasurementRecord
    posterior: PhasePrior
    estimate: float
    holevo_variance: float
    phi_true: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return dict(seed=self.seed, phi_true=self.phi_true, outcomes=self.record.outcomes,
                    phases=self.record.phases, estimate=self.estimate, holevo_variance=self.holevo_variance)


def offline_next(Phi_prev: float, u_prev: int, delta: float) -> float:
    return Phi_prev - (-1) ** u_prev * delta


def simulate_adaptive(policy: AdaptivePolicy, input_state: TwoModeFockState, phi_true: float,
                      seed: int | np.random.Generator, grid_size: int = GRID_SIZE,
                      prior: PhasePrior | None = None) -> AdaptiveRun:
    """Detect all ``N`` photons one by one with feedback, updating the posterior."""
    rng = np.random.default_rng(seed)
    N = input_state.N
    if policy.kind == "offline" and len(policy.offline_deltas) != N:
        raise DimensionError("offline policy needs one delta per photon")
    prior = PhasePrior.uniform(grid_size) if prior is None else prior
    psi_true = input_state.normalized()
    grid_state = input_state.normalized().on_grid(prior.size)
    rec = MeasurementRecord()
    Phi = policy.phi1
    for m in range(N):
        if m > 0:
            if policy.kind == "online":
                Phi = online_next_phase(prior, grid_state)
            elif policy.kind == "offline":
                Phi = offline_next(Phi, rec.outcomes[-1], policy.offline_deltas[m])
        elif policy.kind == "online":
            Phi = online_next_phase(prior, grid_state)
        p0 = float(detection_prob(psi_true, phi_true, Phi, 0))
        u = 0 if rng.random() < p0 else 1
        new_true, _ = output_mode_apply(psi_true, phi_true, Phi, u)
        psi_true = new_true.normalized()
        prior, grid_state = posterior_update(prior, grid_state, Phi, u)
        rec.outcomes.append(u)
        rec.phases.append(float(Phi))
    sd = seed if isinstance(seed, (int, np.integer)) else None
    return AdaptiveRun(rec, prior, phase_estimate(prior), holevo_variance(prior), float(phi_true), sd)


def likelihood_table(input_state: TwoModeFockState, Phi: float, grid_size: int = GRID_SIZE) -> np.ndarray:
    """First-detection likelihoods ``(phi, p(0|phi), p(1|phi))`` on the grid."""
    grid = phase_grid(grid_size)
    st = input_state.normalized()
    p0 = detection_prob(st.on_grid(grid_size), grid, Phi, 0)
    p1 = detection_prob(st.on_grid(grid_size), grid, Phi, 1)
    return np.column_stack([grid, p0, p1])


# ---------------------------------------------------------------- offline objective


def m_off_exact(deltas: Sequence[float], input_state: TwoModeFockState, phi1: float = 0.0,
                grid_size: int = GRID_SIZE) -> float:
    """``sum_u |int p(u|phi) p_in(phi) e^{i phi}|`` by full enumeration (uniform prior)."""
    N = input_state.N
    if N > EXACT_MAX_N:
        raise ValueError(f"exact enumeration limited to N <= {EXACT_MAX_N}")
    grid = phase_grid(grid_size)
    z = np.exp(1j * grid) / grid_size
    # one row per outcome prefix; |amps| normalized, w carries p(u_prefix | phi)
    amps = input_state.normalized().amps[None, None, :] * np.ones((1, grid_size, 1))
    w = np.ones((1, grid_size))
    Phi = np.array([float(phi1)])
    for m in range(N):
        t = (grid[None, :] - Phi[:, None]) / 2
        la, lb = lower_a(amps), lower_b(amps)
        s0, c0 = np.sin(t)[..., None], np.cos(t)[..., None]
        outs = [s0 * la + c0 * lb, c0 * la - s0 * lb]
        n2s = [np.sum(np.abs(o) ** 2, axis=-1) for o in outs]
        amps = np.concatenate([o / np.sqrt(np.where(n > 0, n, 1.0))[..., None] for o, n in zip(outs, n2s)])
        w = np.concatenate([w * n / (N - m) for n in n2s])
        if m + 1 < N:
            Phi = np.concatenate([offline_next(Phi, u, deltas[m + 1]) for u in (0, 1)])
        else:
            Phi = np.concatenate([Phi, Phi])
    return float(np.sum(np.abs(w @ z)))


def m_off(deltas: Sequence[float], input_state: TwoModeFockState, sample_budget: int = SAMPLE_BUDGET,
          seed: int | np.random.Generator = 0, phi1: float = 0.0, grid_size: int = GRID_SIZE,
          chunk: int = 128) -> float:
    """Monte-Carlo estimate of the offline target: mean posterior sharpness over trajectories.

    Each trajectory draws ``phi`` from the uniform prior, then outcomes from the
    policy; the trajectory distribution is then ``p(u)``.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    N = input_state.N
    rng = np.random.default_rng(seed)
    grid = phase_grid(grid_size)
    z = np.exp(1j * grid)
    base = input_state.normalized().amps
    total = 0.0
    done = 0
    while done < sample_budget:
        T = min(chunk, sample_budget - done)
        idx = rng.integers(grid_size, size=T)
        amps = np.broadcast_to(base, (T, grid_size, N + 1)).copy()
        w = np.full((T, grid_size), 1.0 / grid_size)
        Phi = np.full(T, float(phi1))
        for m in range(N):
            t = (grid[None, :] - Phi[:, None]) / 2
            la, lb = lower_a(amps), lower_b(amps)
            s0, c0 = np.sin(t)[..., None], np.cos(t)[..., None]
            out0 = s0 * la + c0 * lb
            out1 = c0 * la - s0 * lb
            n0 = np.sum(np.abs(out0) ** 2, axis=-1)
            n1 = np.sum(np.abs(out1) ** 2, axis=-1)
            p0_true = n0[np.arange(T), idx] / (N - m)
            u = (rng.random(T) >= p0_true).astype(int)
            out = np.where(u[:, None, None] == 0, out0, out1)
            n2 = np.where(u[:, None] == 0, n0, n1)
            w = w * n2
            w /= w.sum(axis=1, keepdims=True)
            amps = out / np.sqrt(np.where(n2 > 0, n2, 1.0))[..., None]
            if m + 1 < N:
                Phi = Phi - np.where(u == 0, 1.0, -1.0) * deltas[m + 1]
        total += float(np.sum(np.abs(w @ z)))
        done += T
    return total / sample_budget


# ---------------------------------------------------------------- PSO


@dataclass(frozen=True)
class PsoConfig:
    L: int = 20
    M: int = 50
    c0: float = 1.0
    c1: float = 2.0
    c2: float = 2.0
    seed: int = 0
    objective: str = "exact"
    sample_budget: int = SAMPLE_BUDGET
    grid_size: int = GRID_SIZE

    def __post_init__(self):
        if self.L < 1 or self.M < 1:
            raise ValueError("need at least one particle and one round")
        if min(self.c0, self.c1, self.c2) < 0:
            raise ValueError("PSO weights must be nonnegative")
        if self.objective not in ("exact", "mc"):
            raise ValueError("objective must be 'exact' or 'mc'")


@dataclass
class PsoResult:
    deltas: np.ndarray
    value: float
    history: list[float]
    initial_values: np.ndarray


def pso_offline(input_state: TwoModeFockState, config: PsoConfig = PsoConfig(), phi1: float = 0.0) -> PsoResult:
    """Particle swarm over the feedback increments ``dPhi_1..dPhi_N``.

    Velocity update ``v <- c0 v + r1 c1 (pb - x) + r2 c2 (gb - x)`` with one
    scalar ``r1, r2`` per particle and round; positions start uniform on
    ``[0, 2 pi)`` and velocities at zero. The Monte-Carlo objective reuses one
    seed for every evaluation so candidates are compared on common samples.
    """
    rng = np.random.default_rng(config.seed)
    N = input_state.N

    def objective(d):
        if config.objective == "exact":
            return m_off_exact(d, input_state, phi1, config.grid_size)
        return m_off(d, input_state, config.sample_budget, config.seed, phi1, config.grid_size)

    x = rng.uniform(0, 2 * np.pi, size=(config.L, N))
    v = np.zeros_like(x)
    pb = x.copy()
    pb_val = np.full(config.L, -np.inf)
    history = []
    initial = None
    gb, gb_val = x[0].copy(), -np.inf
    for _ in range(config.M):
        vals = np.array([objective(xi) for xi in x])
        if initial is None:
            initial = vals.copy()
        better = vals > pb_val
        pb[better], pb_val[better] = x[better], vals[better]
        i = int(np.argmax(pb_val))
        if pb_val[i] > gb_val:
            gb, gb_val = pb[i].copy(), float(pb_val[i])
        history.append(gb_val)
        for k in range(config.L):
            r1, r2 = rng.random(), rng.random()
            v[k] = config.c0 * v[k] + r1 * config.c1 * (pb[k] - x[k]) + r2 * config.c2 * (gb - x[k])
            x[k] = x[k] + v[k]
    return PsoResult(gb, gb_val, history, initial)


def random_policy_mean(input_state: TwoModeFockState, samples: int, seed: int, phi1: float = 0.0,
                       grid_size: int = GRID_SIZE) -> float:
    """Mean exact offline target over uniformly random increments."""
    rng = np.random.default_rng(seed)
    N = input_state.N
    return float(np.mean([m_off_exact(rng.uniform(0, 2 * np.pi, N), input_state, phi1, grid_size)
                          for _ in range(samples)]))


__all__ = [
    "AdaptivePolicy",
    "AdaptiveRun",
    "GRID_SIZE",
    "MeasurementRecord",
    "PhasePrior",
    "PsoConfig",
    "PsoResult",
    "TwoModeFockState",
    "berry_wiseman_input",
    "detection_prob",
    "fock_state",
    "holevo_variance",
    "jy_eigenbasis",
    "jy_matrix",
    "likelihood_table",
    "m_off",
    "m_off_exact",
    "m_on",
    "online_next_phase",
    "output_mode_apply",
    "phase_estimate",
    "phase_grid",
    "posterior_update",
    "pso_offline",
    "random_policy_mean",
    "sharpness",
    "simulate_adaptive",
    "state_from_jy",
]
