"""Complex-matrix quantum primitives.

States are plain ``numpy`` arrays: a density matrix is a ``(d, d)`` complex
array and a pure state a ``(d,)`` complex vector. Channels and Lindblad models
are small frozen dataclasses. Vectorization is column-stacking throughout, so
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

TOL = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotPhysicalError(ValueError):
    """An input violates a physical constraint (Hermiticity, trace, positivity...)."""


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_hermitian(a: np.ndarray, tol: float = TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.allclose(a, dag(a), atol=tol, rtol=0)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dag(a))


def check_hermitian(a: np.ndarray, name: str = "matrix", tol: float = TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, dag(a), atol=tol * max(1.0, np.abs(a).max(initial=0.0)), rtol=0):
        raise NotPhysicalError(f"{name} is not Hermitian")
    return a


def density_matrix(data, tol: float = TOL) -> np.ndarray:
    """Validate ``data`` as a density matrix and return it as a complex array.

    A 1-D input is treated as a state vector and turned into a projector.
    """
    rho = np.asarray(data, dtype=complex)
    if rho.ndim == 1:
        return ket_to_dm(rho, tol=tol)
    check_hermitian(rho, "density matrix", tol)
    if abs(np.trace(rho) - 1) > tol:
        raise NotPhysicalError(f"density matrix trace is {np.trace(rho).real}, expected 1")
    if np.linalg.eigvalsh(hermitize(rho))[0] < -tol:
        raise NotPhysicalError("density matrix is not positive semidefinite")
    return rho


def pure_state(amplitudes, tol: float = TOL) -> np.ndarray:
    psi = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1) > tol:
        raise NotPhysicalError(f"state vector has norm {np.linalg.norm(psi)}")
    return psi


def ket_to_dm(psi, tol: float = TOL) -> np.ndarray:
    psi = pure_state(psi, tol)
    return np.outer(psi, psi.conj())


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return np.real([np.trace(rho @ s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])


def from_bloch(r: Sequence[float]) -> np.ndarray:
    rx, ry, rz = r
    return 0.5 * (IDENTITY_2 + rx * SIGMA_X + ry * SIGMA_Y + rz * SIGMA_Z)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the induced (Hilbert-Schmidt for full rank) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(rows, rng)[:, :cols]


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitize(g)


@dataclass(frozen=True)
class KrausChannel:
    """CPTP map ``rho -> sum_j K_j rho K_j^dagger``."""

    kraus: tuple[np.ndarray, ...]
    dim_in: int = field(init=False)
    dim_out: int = field(init=False)

    def __init__(self, kraus: Sequence[np.ndarray], tol: float = TOL, check: bool = True):
        ops = tuple(np.asarray(k, dtype=complex) for k in kraus)
        if not ops:
            raise DimensionError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape or k.ndim != 2 for k in ops):
            raise DimensionError("Kraus operators must share one 2-D shape")
        object.__setattr__(self, "kraus", ops)
        object.__setattr__(self, "dim_out", shape[0])
        object.__setattr__(self, "dim_in", shape[1])
        if check:
            err = np.abs(self.completeness() - np.eye(self.dim_in)).max()
            if err > tol:
                raise NotPhysicalError(f"Kraus completeness violated by {err:.3e}")

    @property
    def m(self) -> int:
        return len(self.kraus)

    def completeness(self) -> np.ndarray:
        return sum(dag(k) @ k for k in self.kraus)

    def padded(self, m: int) -> "KrausChannel":
        """Append zero operators up to ``m`` Kraus operators."""
        if m < self.m:
            raise DimensionError(f"cannot pad {self.m} Kraus operators down to {m}")
        zero = np.zeros((self.dim_out, self.dim_in), dtype=complex)
        return KrausChannel(self.kraus + (zero,) * (m - self.m), check=False)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply_channel(self, rho)


def apply_channel(channel: KrausChannel, state: np.ndarray) -> np.ndarray:
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (channel.dim_in, channel.dim_in):
        raise DimensionError(f"channel expects dim {channel.dim_in}, state has shape {rho.shape}")
    out = sum(k @ rho @ dag(k) for k in channel.kraus)
    return hermitize(out)


def kraus_transform(channel: KrausChannel, isometry: np.ndarray, tol: float = TOL) -> KrausChannel:
    """Equivalent Kraus set ``K~_j = sum_i v_ji K_i`` for a ``p x m`` isometry ``V``."""
    v = np.asarray(isometry, dtype=complex)
    if v.ndim != 2 or v.shape[1] != channel.m:
        raise DimensionError(f"isometry must have {channel.m} columns, got shape {v.shape}")
    if v.shape[0] < v.shape[1] or np.abs(dag(v) @ v - np.eye(v.shape[1])).max() > tol:
        raise NotPhysicalError("V^dagger V != identity")
    stack = np.array(channel.kraus)
    return KrausChannel(list(np.einsum("ji,iab->jab", v, stack)), check=False)


def evolve_unitary(H: np.ndarray, t: float, state: np.ndarray) -> np.ndarray:
    H = check_hermitian(H, "Hamiltonian")
    u = linalg.expm(-1j * t * H)
    return hermitize(u @ np.asarray(state, dtype=complex) @ dag(u))


# ---------------------------------------------------------------- superoperators


def vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> A X``."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> X A``."""
    return np.kron(a.T, np.eye(a.shape[0]))


def commutator_superop(H: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i [H, rho]``."""
    return -1j * (spre(H) - spost(H))


def dissipator_superop(L: np.ndarray) -> np.ndarray:
    ldl = dag(L) @ L
    return np.kron(L.conj(), L) - 0.5 * (spre(ldl) + spost(ldl))


@dataclass(frozen=True)
class LindbladModel:
    """Generator ``-i[H, rho] + sum_k gamma_k (G rho G^dag - {G^dag G, rho}/2)``."""

    hamiltonian: np.ndarray
    lindblad_ops: tuple[np.ndarray, ...] = ()
    rates: tuple[float, ...] = ()

    def __init__(self, hamiltonian, lindblad_ops=(), rates=None):
        H = check_hermitian(hamiltonian, "Hamiltonian")
        ops = tuple(np.asarray(g, dtype=complex) for g in lindblad_ops)
        rates = tuple(float(r) for r in (rates if rates is not None else [1.0] * len(ops)))
        if len(rates) != len(ops):
            raise DimensionError("one rate per Lindblad operator is required")
        if any(r < 0 for r in rates):
            raise NotPhysicalError("Lindblad rates must be nonnegative")
        if any(g.shape != H.shape for g in ops):
            raise DimensionError("Lindblad operators must match the Hamiltonian dimension")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "lindblad_ops", ops)
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def superoperator(self) -> np.ndarray:
        L = commutator_superop(self.hamiltonian)
        for g, r in zip(self.lindblad_ops, self.rates):
            if r:
                L = L + r * dissipator_superop(g)
        return L


def evolve_lindblad(model: LindbladModel, t: float, steps: int, state: np.ndarray) -> np.ndarray:
    """Propagate ``state`` for time ``t`` with ``steps`` applications of ``exp(dt L)``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise DimensionError(f"state shape {rho.shape} does not match model dim {model.dim}")
    prop = linalg.expm(model.superoperator() * (t / steps))
    v = vec(rho)
    for _ in range(steps):
        v = prop @ v
    return hermitize(unvec(v, model.dim))


# ---------------------------------------------------------------- tensor algebra


def tensor(*ops: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, np.asarray(op))
    return out


def partial_trace(rho: np.ndarray, dims: Sequence[int], trace_out: int | Sequence[int]) -> np.ndarray:
    """Trace out the factor(s) with index ``trace_out`` of a state on ``prod(dims)``."""
    dims = list(dims)
    rho = np.asarray(rho)
    n = int(np.prod(dims))
    if rho.shape != (n, n):
        raise DimensionError(f"state shape {rho.shape} does not match dims {dims}")
    drop = {trace_out} if isinstance(trace_out, (int, np.integer)) else set(trace_out)
    if not drop <= set(range(len(dims))):
        raise DimensionError(f"no subsystem {sorted(drop)} in dims {dims}")
    t = rho.reshape(dims + dims)
    # trace highest index first so lower axis numbers stay valid
    for i in sorted(drop, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    keep = [d for i, d in enumerate(dims) if i not in drop]
    m = int(np.prod(keep)) if keep else 1
    return t.reshape(m, m)


# ---------------------------------------------------------------- serialization


def matrix_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return {"dim": a.shape[0], "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(obj: dict) -> np.ndarray:
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape:
        raise DimensionError("re/im parts have different shapes")
    if re.ndim != 2 or re.shape[0] != int(obj["dim"]):
        raise DimensionError(f"declared dim {obj['dim']} does not match data shape {re.shape}")
    return re + 1j * im
