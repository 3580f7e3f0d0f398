"""Truncated two-mode Fock space: cutoffs, ladder operators and states.

Basis ket |m_a>_A |m_b>_B lives at index ``m_a * dim_b + m_b``. Each mode keeps
levels 0..dim-1; the lowering operator keeps the sqrt(dim-1) element out of the
top level while nothing is raised into it, so a^dag a is exactly diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import CutoffMismatch, CutoffTooSmall, IndexOutOfCutoff, NotHermitian

DEFAULT_MAX_DIM = 4096
TAIL_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12

MODES = ("A", "B")


@dataclass(frozen=True)
class ModeCutoff:
    dim_a: int
    dim_b: int
    max_dim: int = field(default=DEFAULT_MAX_DIM, compare=False)

    def __post_init__(self):
        for name in ("dim_a", "dim_b"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {value!r}")
        if self.dim_a * self.dim_b > self.max_dim:
            raise ValueError(
                f"total dimension {self.dim_a * self.dim_b} exceeds max_dim={self.max_dim}"
            )

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    def index(self, m_a: int, m_b: int) -> int:
        if not (0 <= m_a < self.dim_a and 0 <= m_b < self.dim_b):
            raise IndexOutOfCutoff(
                f"level ({m_a}, {m_b}) outside cutoff ({self.dim_a}, {self.dim_b})"
            )
        return m_a * self.dim_b + m_b

    def levels(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.dim:
            raise IndexOutOfCutoff(f"index {index} outside dimension {self.dim}")
        return divmod(int(index), self.dim_b)

    @cached_property
    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-index (m_a, m_b) occupation arrays."""
        idx = np.arange(self.dim)
        return idx // self.dim_b, idx % self.dim_b

    def mode_dim(self, mode: str) -> int:
        return self.dim_a if _check_mode(mode) == "A" else self.dim_b


def _check_mode(mode):
    mode = str(mode).upper()
    if mode not in MODES:
        raise ValueError(f"mode must be 'A' or 'B', got {mode!r}")
    return mode


def _require_same_cutoff(*items):
    first = items[0].cutoff
    for item in items[1:]:
        if item.cutoff != first:
            raise CutoffMismatch(f"{first} vs {item.cutoff}")
    return first


def _freeze(array):
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure (amplitude vector) or mixed (density matrix) two-mode state."""

    cutoff: ModeCutoff
    data: np.ndarray

    def __post_init__(self):
        data = _freeze(self.data)
        object.__setattr__(self, "data", data)
        d = self.cutoff.dim
        if data.shape == (d,):
            norm = np.vdot(data, data).real
            if abs(norm - 1.0) >= 1e-10:
                raise ValueError(f"pure state norm^2 is {norm!r}, expected 1")
        elif data.shape == (d, d):
            if abs(np.trace(data) - 1.0) >= 1e-10:
                raise ValueError("density matrix trace differs from 1")
            if np.max(np.abs(data - data.conj().T), initial=0.0) >= 1e-12:
                raise ValueError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(data).min() < -1e-10:
                raise ValueError("density matrix has negative eigenvalues")
        else:
            raise ValueError(f"state data shape {data.shape} does not match dimension {d}")

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def amplitudes(self) -> np.ndarray:
        if not self.is_pure:
            raise ValueError("mixed state has no amplitude vector")
        return self.data

    @property
    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        return QuantumState(self.cutoff, self.density)

    def pure_components(self, threshold=1e-14):
        """Return ``(weights, vectors)`` with rho = sum_k w_k |v_k><v_k|."""
        if self.is_pure:
            return np.ones(1), self.data[None, :]
        w, v = np.linalg.eigh(self.data)
        keep = w > threshold
        return w[keep], v[:, keep].T.copy()


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse operator on the truncated two-mode space."""

    cutoff: ModeCutoff
    entries: sp.csr_array
    hermitian: bool = False

    def __post_init__(self):
        mat = sp.csr_array(self.entries, dtype=complex)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        if mat.shape != (self.cutoff.dim, self.cutoff.dim):
            raise ValueError(f"operator shape {mat.shape} does not match cutoff")
        object.__setattr__(self, "entries", mat)
        if self.hermitian and self.hermiticity_error() >= HERMITIAN_TOLERANCE:
            raise NotHermitian(f"max |H - H^dag| = {self.hermiticity_error():.3e}")

    def hermiticity_error(self) -> float:
        diff = (self.entries - self.entries.conj().T).tocoo()
        return float(np.max(np.abs(diff.data), initial=0.0))

    def dense(self) -> np.ndarray:
        return self.entries.toarray()

    def element(self, bra: tuple[int, int], ket: tuple[int, int]) -> complex:
        i = self.cutoff.index(*bra)
        j = self.cutoff.index(*ket)
        return complex(self.entries[i, j])

    @property
    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.cutoff, self.entries.conj().T, self.hermitian)

    def apply(self, state: QuantumState) -> np.ndarray:
        _require_same_cutoff(self, state)
        return self.entries @ state.data

    def __add__(self, other):
        _require_same_cutoff(self, other)
        return OperatorMatrix(
            self.cutoff, self.entries + other.entries, self.hermitian and other.hermitian
        )

    def __sub__(self, other):
        _require_same_cutoff(self, other)
        return OperatorMatrix(
            self.cutoff, self.entries - other.entries, self.hermitian and other.hermitian
        )

    def __neg__(self):
        return OperatorMatrix(self.cutoff, -self.entries, self.hermitian)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        keeps_hermitian = self.hermitian and scalar.imag == 0.0
        return OperatorMatrix(self.cutoff, self.entries * scalar, keeps_hermitian)

    __rmul__ = __mul__

    def __matmul__(self, other):
        _require_same_cutoff(self, other)
        return OperatorMatrix(self.cutoff, self.entries @ other.entries)

    def commutator(self, other) -> "OperatorMatrix":
        return self @ other - other @ self

    @cached_property
    def blocks(self) -> list[np.ndarray]:
        """Index sets of the connected components of the sparsity graph.

        The operator is block diagonal over these sets, so its spectral
        decomposition can be taken one block at a time.
        """
        from scipy.sparse.csgraph import connected_components

        pattern = (abs(self.entries) + abs(self.entries.T)).tocsr()
        count, labels = connected_components(pattern, directed=False)
        order = np.argsort(labels, kind="stable")
        splits = np.flatnonzero(np.diff(labels[order])) + 1
        return np.split(order, splits)

    @cached_property
    def spectrum(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Block eigensystem ``[(indices, eigenvalues, eigenvectors), ...]``."""
        if not self.hermitian:
            raise NotHermitian("spectral decomposition requires a Hermitian operator")
        out = []
        for idx in self.blocks:
            sub = self.entries[idx][:, idx].toarray()
            w, v = np.linalg.eigh(sub)
            out.append((idx, w, v))
        return out


def _single_mode_lower(dim):
    return sp.diags_array(np.sqrt(np.arange(1, dim)), offsets=1, shape=(dim, dim))


def _embed(single, mode, cutoff):
    if mode == "A":
        return sp.kron(single, sp.identity(cutoff.dim_b), format="csr")
    return sp.kron(sp.identity(cutoff.dim_a), single, format="csr")


def identity(cutoff: ModeCutoff) -> OperatorMatrix:
    return OperatorMatrix(cutoff, sp.identity(cutoff.dim, format="csr"), hermitian=True)


def ladder_lower(mode: str, cutoff: ModeCutoff) -> OperatorMatrix:
    mode = _check_mode(mode)
    single = _single_mode_lower(cutoff.mode_dim(mode))
    return OperatorMatrix(cutoff, _embed(single, mode, cutoff))


def ladder_raise(mode: str, cutoff: ModeCutoff) -> OperatorMatrix:
    return ladder_lower(mode, cutoff).dag


def number_operator(mode: str, cutoff: ModeCutoff) -> OperatorMatrix:
    mode = _check_mode(mode)
    levels = cutoff.occupations[0 if mode == "A" else 1]
    return OperatorMatrix(cutoff, sp.diags_array(levels.astype(float)), hermitian=True)


def product_state(amps_a, amps_b, cutoff: ModeCutoff) -> QuantumState:
    """Pure product state from single-mode amplitude vectors (zero-padded)."""
    a = np.zeros(cutoff.dim_a, dtype=complex)
    b = np.zeros(cutoff.dim_b, dtype=complex)
    amps_a = np.asarray(amps_a, dtype=complex)
    amps_b = np.asarray(amps_b, dtype=complex)
    if amps_a.size > cutoff.dim_a or amps_b.size > cutoff.dim_b:
        raise IndexOutOfCutoff("single-mode amplitudes longer than the cutoff")
    a[: amps_a.size] = amps_a
    b[: amps_b.size] = amps_b
    return QuantumState(cutoff, np.kron(a, b))


def fock_state(m_a: int, m_b: int, cutoff: ModeCutoff) -> QuantumState:
    psi = np.zeros(cutoff.dim, dtype=complex)
    psi[cutoff.index(m_a, m_b)] = 1.0
    return QuantumState(cutoff, psi)


def _place_single_mode(amps, cutoff, mode):
    vacuum = np.array([1.0])
    if mode == "A":
        return product_state(amps, vacuum, cutoff)
    return product_state(vacuum, amps, cutoff)


def _truncate_checked(amps, what):
    kept = float(np.sum(np.abs(amps) ** 2))
    if 1.0 - kept >= TAIL_TOLERANCE:
        raise CutoffTooSmall(
            f"{what}: population {1.0 - kept:.3e} beyond the cutoff exceeds {TAIL_TOLERANCE:g}"
        )
    return amps / np.sqrt(kept)


def coherent_amplitudes(alpha: float, dim: int) -> np.ndarray:
    """Untruncated-normalisation amplitudes e^{-a^2/2} a^m / sqrt(m!) for m < dim."""
    if alpha < 0:
        raise ValueError("alpha is taken real and non-negative")
    m = np.arange(dim)
    if alpha == 0:
        return (m == 0).astype(float)
    return np.exp(-0.5 * alpha**2 + m * np.log(alpha) - 0.5 * gammaln(m + 1))


def squeezed_vacuum_amplitudes(r: float, dim: int) -> np.ndarray:
    if r < 0:
        raise ValueError("squeezing parameter r must be non-negative")
    amps = np.zeros(dim)
    if r == 0:
        amps[0] = 1.0
        return amps
    k = np.arange((dim + 1) // 2)
    log_mag = (
        k * np.log(np.tanh(r))
        + 0.5 * gammaln(2 * k + 1)
        - k * np.log(2.0)
        - gammaln(k + 1)
        - 0.5 * np.log(np.cosh(r))
    )
    amps[2 * k] = np.where(k % 2 == 0, 1.0, -1.0) * np.exp(log_mag)
    return amps


def coherent_state(alpha: float, cutoff: ModeCutoff, mode: str = "A") -> QuantumState:
    mode = _check_mode(mode)
    amps = coherent_amplitudes(alpha, cutoff.mode_dim(mode))
    return _place_single_mode(_truncate_checked(amps, "coherent state"), cutoff, mode)


def squeezed_vacuum_state(r: float, cutoff: ModeCutoff, mode: str = "A") -> QuantumState:
    mode = _check_mode(mode)
    amps = squeezed_vacuum_amplitudes(r, cutoff.mode_dim(mode))
    return _place_single_mode(_truncate_checked(amps, "squeezed vacuum"), cutoff, mode)


def minimal_dim(amplitude_fn, param, limit=2000) -> int:
    """Smallest single-mode dimension whose dropped tail stays below the threshold."""
    amps = amplitude_fn(param, limit)
    tail = 1.0 - np.cumsum(np.abs(amps) ** 2)
    ok = np.flatnonzero(tail < TAIL_TOLERANCE)
    if ok.size == 0:
        raise CutoffTooSmall(f"no dimension below {limit} meets the tail threshold")
    return max(2, int(ok[0]) + 1)


def mixed_state(rho, cutoff: ModeCutoff) -> QuantumState:
    return QuantumState(cutoff, np.asarray(rho, dtype=complex))


def inner_product(x: QuantumState, y: QuantumState) -> complex:
    _require_same_cutoff(x, y)
    if not (x.is_pure and y.is_pure):
        raise ValueError("inner product needs two pure states")
    return complex(np.vdot(x.data, y.data))


def expectation(op: OperatorMatrix, state: QuantumState) -> complex:
    _require_same_cutoff(op, state)
    if state.is_pure:
        value = complex(np.vdot(state.data, op.entries @ state.data))
    else:
        # tr(rho op) = sum_ij rho_ij op_ji
        value = complex((op.entries.T.multiply(state.data)).sum())
    if op.hermitian:
        if abs(value.imag) >= 1e-10:
            raise NotHermitian(f"Hermitian expectation has imaginary part {value.imag:.3e}")
        return complex(value.real)
    return value
