"""Exact unitary charging dynamics in the truncated space.

Evolution uses the block eigensystem cached on each Hamiltonian: the basis is
split into the connected components of the Hamiltonian's sparsity graph (the
conserved-charge sectors for the charging models) and only the sectors an
initial state touches are ever propagated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import bisect, brentq

from .errors import (
    FlatTrace,
    InvariantViolation,
    NeverOrthogonal,
    NonpositiveTime,
    NotHermitian,
    ZeroVariance,
)
from .fock import OperatorMatrix, QuantumState, _require_same_cutoff, expectation
from .models import ModelSpec, build_H_A, build_H_B, build_total, conserved_charge

NORM_TOLERANCE = 1e-10
CONSERVATION_TOLERANCE = 1e-9
HORIZON_QSL_MULTIPLE = 10
MIN_SEARCH_POINTS = 2000


class _PureEvolver:
    """Propagates one pure vector under a cached block eigensystem."""

    def __init__(self, H: OperatorMatrix, psi0: np.ndarray):
        blocks = []
        for idx, w, v in H.spectrum:
            local = psi0[idx]
            if not np.any(local):
                continue
            blocks.append((idx, w, v, v.conj().T @ local))
        self.blocks = blocks
        self.support = np.concatenate([b[0] for b in blocks]) if blocks else np.zeros(0, int)
        self.energies = np.concatenate([b[1] for b in blocks]) if blocks else np.zeros(0)
        self.weights = (
            np.concatenate([np.abs(b[3]) ** 2 for b in blocks]) if blocks else np.zeros(0)
        )
        self.dim = psi0.size

    def amplitudes(self, times) -> np.ndarray:
        """Amplitudes on ``self.support`` with shape ``(len(times), len(support))``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        parts = []
        for _, w, v, c in self.blocks:
            phases = np.exp(-1j * np.outer(times, w)) * c
            parts.append(phases @ v.T)
        if not parts:
            return np.zeros((times.size, 0), dtype=complex)
        return np.concatenate(parts, axis=1)

    def full(self, t) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        out[self.support] = self.amplitudes([t])[0]
        return out

    def overlap0(self, times) -> np.ndarray:
        """<psi(0)|psi(t)> = sum_k |c_k|^2 exp(-i E_k t)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.exp(-1j * np.outer(times, self.energies)) @ self.weights

    def d_overlap_sq(self, t) -> float:
        """Time derivative of |<psi(0)|psi(t)>|^2."""
        ph = np.exp(-1j * self.energies * t) * self.weights
        o = ph.sum()
        do = (-1j * self.energies * ph).sum()
        return float(2.0 * (np.conj(o) * do).real)


def _check_hermitian(H):
    if not H.hermitian:
        raise NotHermitian("evolution requires a Hermitian generator")


class _StateEvolver:
    """Pure or mixed evolution; mixed states are carried as weighted pure components."""

    def __init__(self, H: OperatorMatrix, state: QuantumState):
        _check_hermitian(H)
        _require_same_cutoff(H, state)
        self.H = H
        self.state = state
        self.weights, self.vectors = state.pure_components()
        self.parts = [_PureEvolver(H, v) for v in self.vectors]

    def observables(self, times, ops):
        """Means and variances of ``ops`` plus norm along ``times``."""
        means = {name: 0.0 for name in ops}
        seconds = {name: 0.0 for name in ops}
        norm = 0.0
        for w, part in zip(self.weights, self.parts):
            amps = part.amplitudes(times)
            norm = norm + w * np.sum(np.abs(amps) ** 2, axis=1)
            for name, op in ops.items():
                mean, second = _moments(op, amps, part.support)
                means[name] = means[name] + w * mean
                seconds[name] = seconds[name] + w * second
        variances = {k: np.maximum(seconds[k] - means[k] ** 2, 0.0) for k in ops}
        return means, variances, norm

    def overlap0(self, times):
        if self.state.is_pure:
            return self.parts[0].overlap0(times)
        # tr(rho(0) rho(t)) = sum_jk w_j w_k |<phi_j|phi_k(t)>|^2
        times = np.atleast_1d(np.asarray(times, dtype=float))
        total = np.zeros(times.size)
        for wk, part in zip(self.weights, self.parts):
            amps = part.amplitudes(times)
            for wj, v0 in zip(self.weights, self.vectors):
                total += wj * wk * np.abs(amps @ v0[part.support].conj()) ** 2
        return np.sqrt(total).astype(complex)

    def energy_rate(self, t, op) -> float:
        """d<op>/dt = -2 Im <H psi | op psi>."""
        total = 0.0
        for w, part in zip(self.weights, self.parts):
            v = part.full(t)
            total += w * -2.0 * np.vdot(self.H.entries @ v, op.entries @ v).imag
        return float(total)

    def state_at(self, t) -> QuantumState:
        if self.state.is_pure:
            return QuantumState(self.state.cutoff, self.parts[0].full(t))
        rho = np.zeros((self.state.cutoff.dim,) * 2, dtype=complex)
        for w, part in zip(self.weights, self.parts):
            v = part.full(t)
            rho += w * np.outer(v, v.conj())
        rho = 0.5 * (rho + rho.conj().T)
        return QuantumState(self.state.cutoff, rho / np.trace(rho).real)


def _moments(op: OperatorMatrix, amps, support):
    """Per-time <op> and <op^2> for amplitude rows living on ``support``."""
    mat = op.entries
    diag = mat.diagonal()
    if mat.nnz == np.count_nonzero(diag):
        d = diag[support].real if op.hermitian else diag[support]
        p = np.abs(amps) ** 2
        mean = p @ d
        second = p @ np.abs(diag[support]) ** 2
        return (mean.real if op.hermitian else mean), second
    cols = mat[:, support]
    rows = np.unique(cols.nonzero()[0])
    image = cols[rows] @ amps.T  # (rows, times)
    second = np.sum(np.abs(image) ** 2, axis=0)
    position = np.full(mat.shape[0], -1)
    position[support] = np.arange(support.size)
    hit = position[rows] >= 0
    mean = np.einsum("ti,it->t", amps[:, position[rows[hit]]].conj(), image[hit])
    return (mean.real if op.hermitian else mean), second


def evolve(H: OperatorMatrix, state: QuantumState, t: float) -> QuantumState:
    """State after time ``t`` under exp(-iHt); mixed states evolve as U rho U^dag."""
    return _StateEvolver(H, state).state_at(t)


def reference_evolve(H: OperatorMatrix, state: QuantumState, t: float) -> QuantumState:
    """Independent propagation by dense scaling-and-squaring matrix exponential."""
    _check_hermitian(H)
    U = scipy.linalg.expm(-1j * t * H.dense())
    if state.is_pure:
        psi = U @ state.data
        return QuantumState(state.cutoff, psi / np.linalg.norm(psi))
    rho = U @ state.data @ U.conj().T
    return QuantumState(state.cutoff, 0.5 * (rho + rho.conj().T))


def stored_energy(state: QuantumState, H_B: OperatorMatrix) -> float:
    value = expectation(H_B, state).real
    if value < -1e-10:
        raise ValueError(f"battery energy {value} is negative")
    return max(value, 0.0)


def average_power(energy: float, tau: float) -> float:
    if not tau > 0:
        raise NonpositiveTime(f"charging time must be positive, got {tau}")
    return energy / tau


def variance(H: OperatorMatrix, state: QuantumState) -> float:
    """Energy spread sqrt(<H^2> - <H>^2), computed as ||(H - <H>) psi||."""
    _check_hermitian(H)
    _require_same_cutoff(H, state)
    mean = expectation(H, state).real
    weights, vectors = state.pure_components()
    total = 0.0
    for w, v in zip(weights, vectors):
        r = H.entries @ v - mean * v
        total += w * np.vdot(r, r).real
    return math.sqrt(max(total, 0.0))


@dataclass
class ChargingTrace:
    times: np.ndarray
    energy_B: np.ndarray
    power_B: np.ndarray  # NaN at t = 0, where E_B / t is undefined
    overlap0: np.ndarray
    varH_B: np.ndarray
    norm: np.ndarray
    energy_total: np.ndarray
    charge_Q: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def abs_overlap0(self):
        return np.abs(self.overlap0)

    def max_drift(self, name):
        values = getattr(self, name)
        scale = max(abs(values[0]), 1.0)
        return float(np.max(np.abs(values - values[0])) / scale)


def time_grid(t_max: float, num_points: int) -> np.ndarray:
    if num_points < 2:
        raise ValueError("a time grid needs at least two points")
    if not t_max > 0:
        raise NonpositiveTime("t_max must be positive")
    return np.linspace(0.0, t_max, num_points)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("time grid must be one-dimensional with >= 2 points")
    if grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def trace_from_operators(H, H_B, Q, initial, grid, check=True, meta=None) -> ChargingTrace:
    grid = _check_grid(grid)
    ev = _StateEvolver(H, initial)
    means, variances, norm = ev.observables(grid, {"B": H_B, "H": H, "Q": Q})
    energy = np.maximum(means["B"], 0.0)
    power = np.full(grid.size, np.nan)
    power[1:] = energy[1:] / grid[1:]
    trace = ChargingTrace(
        times=grid,
        energy_B=energy,
        power_B=power,
        overlap0=ev.overlap0(grid),
        varH_B=variances["B"],
        norm=norm,
        energy_total=means["H"],
        charge_Q=means["Q"],
        meta=dict(meta or {}),
    )
    if check:
        verify_trace(trace)
    return trace


def verify_trace(trace: ChargingTrace):
    """Raise :class:`InvariantViolation` if norm, energy or charge drift."""
    norm_err = float(np.max(np.abs(trace.norm - 1.0)))
    if norm_err >= NORM_TOLERANCE:
        raise InvariantViolation("norm", f"max |norm - 1| = {norm_err:.3e}")
    for name in ("energy_total", "charge_Q"):
        drift = trace.max_drift(name)
        if drift >= CONSERVATION_TOLERANCE:
            raise InvariantViolation(name, f"relative drift {drift:.3e}")


def charging_trace(spec: ModelSpec, initial: QuantumState, grid) -> ChargingTrace:
    meta = {
        "kind": spec.kind, "n": spec.n, "N": spec.N, "omega0": spec.omega0,
        "g_n": spec.g_n, "g1": spec.g1, "coupling_mode": spec.coupling_mode,
    }
    return trace_from_operators(
        build_total(spec), build_H_B(spec), conserved_charge(spec), initial, grid, meta=meta
    )


def default_horizon(H: OperatorMatrix, initial: QuantumState) -> float:
    """Ten Mandelstam-Tamm times of ``initial`` under ``H``."""
    spread = variance(H, initial)
    if spread == 0.0:
        raise ZeroVariance("initial state is stationary")
    return HORIZON_QSL_MULTIPLE * math.pi / (2.0 * spread)


def _golden_max(f, a, b, rtol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * max(abs(a) + abs(b), 1e-300) * 0.5:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        if b - a <= 0:
            break
    t = 0.5 * (a + b)
    return t, f(t)


@dataclass(frozen=True)
class SearchTolerances:
    energy_rtol: float = 1e-9
    time_rtol: float = 1e-9
    num_points: int = 4001


def optimal_time_from_operators(H, H_B, initial, horizon=None, tolerances=None, e_scale=None):
    """Earliest local maximum of E_B within ``energy_rtol * e_scale`` of the global maximum."""
    tol = tolerances or SearchTolerances()
    if horizon is None:
        try:
            horizon = default_horizon(H, initial)
        except ZeroVariance as exc:
            raise FlatTrace("stationary initial state never charges the battery") from exc
    if not horizon > 0:
        raise NonpositiveTime("horizon must be positive")
    ev = _StateEvolver(H, initial)

    def energy(times):
        return ev.observables(times, {"B": H_B})[0]["B"]

    def energy_at(t):
        return float(energy([t])[0])

    if e_scale is None:
        e_scale = max(abs(float(energy([0.0])[0])), 0.0)
    e_scale = e_scale if e_scale > 0 else 1.0
    tol_E = tol.energy_rtol * e_scale

    grid = np.linspace(0.0, horizon, max(tol.num_points, MIN_SEARCH_POINTS))
    values = energy(grid)
    if values.max() <= tol_E:
        raise FlatTrace(f"battery energy never exceeds {tol_E:.3e} before t={horizon}")

    def rate(t):
        return ev.energy_rate(t, H_B)

    # between samples a peak can rise at most |E''| h^2 / 8 above the grid;
    # second differences estimate |E''| h^2, doubled for safety
    overshoot = 0.25 * float(np.max(np.abs(np.diff(values, 2)), initial=0.0))
    floor = values.max() - overshoot - tol_E
    candidates = []
    for i in range(1, grid.size - 1):
        if values[i] < floor or values[i] <= tol_E:
            continue
        if values[i] >= values[i - 1] and values[i] >= values[i + 1]:
            lo, hi = grid[i - 1], grid[i + 1]
            t, e = _golden_max(energy_at, lo, hi, tol.time_rtol)
            # the peak is flat to first order; polish on the zero of dE/dt
            if rate(lo) > 0 > rate(hi):
                t = brentq(rate, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                e = max(e, energy_at(t))
            candidates.append((t, e))
    if values[-1] > values[-2]:
        candidates.append((grid[-1], values[-1]))
    best = max(e for _, e in candidates)
    for t, e in candidates:
        if e >= best - tol_E:
            return float(t), float(best)
    raise AssertionError("unreachable")


def optimal_charging_time(spec: ModelSpec, initial: QuantumState, horizon=None, tolerances=None):
    """Return ``(tau_bar, E_max)`` for the charging model ``spec``."""
    H = build_total(spec)
    e_scale = max(expectation(build_H_A(spec), initial).real, spec.omega0)
    return optimal_time_from_operators(
        H, build_H_B(spec), initial, horizon=horizon, tolerances=tolerances, e_scale=e_scale
    )


def orthogonality_time(H: OperatorMatrix, initial: QuantumState, horizon=None,
                       threshold=1e-6, num_points=4001) -> float:
    """Earliest time at which |<psi(0)|psi(t)>| drops below ``threshold``."""
    if not initial.is_pure:
        raise ValueError("orthogonality time is defined for pure states")
    if horizon is None:
        try:
            horizon = default_horizon(H, initial)
        except ZeroVariance as exc:
            raise NeverOrthogonal("stationary initial state") from exc
    ev = _StateEvolver(H, initial).parts[0]
    grid = np.linspace(0.0, horizon, max(num_points, MIN_SEARCH_POINTS))
    mags = np.abs(ev.overlap0(grid))
    for i in range(1, grid.size - 1):
        if not (mags[i] < mags[i - 1] and mags[i] <= mags[i + 1]):
            continue
        lo, hi = grid[i - 1], grid[i + 1]
        if ev.d_overlap_sq(lo) < 0 < ev.d_overlap_sq(hi):
            t = bisect(ev.d_overlap_sq, lo, hi, xtol=1e-15, rtol=1e-14, maxiter=200)
        else:
            t = _golden_max(lambda s: -abs(ev.overlap0([s])[0]), lo, hi, 1e-12)[0]
        if abs(ev.overlap0([t])[0]) < threshold:
            return float(t)
    raise NeverOrthogonal(f"|overlap| stays above {threshold:g} up to t={horizon}")


@dataclass
class ChargeDistribution:
    """Battery occupation statistics at one time.

    ``conditional[M][m]`` is the probability that m of M charger quanta were
    transferred, given charger level M at t = 0; it is only filled when the
    state carries no coherence between conserved-charge sectors.
    """

    time: float | None
    probabilities: np.ndarray
    charger_weights: dict | None = None
    conditional: dict | None = None

    def stored_energy(self, n: int, omega0: float = 1.0) -> float:
        if self.conditional is None:
            levels = np.arange(self.probabilities.size)
            return float(omega0 * levels @ self.probabilities)
        return float(sum(
            p_M * omega0 * n * (np.arange(M + 1) @ self.conditional[M])
            for M, p_M in self.charger_weights.items()
        ))


def charge_distribution(state: QuantumState, time=None, n=None) -> ChargeDistribution:
    cutoff = state.cutoff
    m_a, m_b = cutoff.occupations
    if state.is_pure:
        pops = np.abs(state.data) ** 2
    else:
        pops = np.clip(np.diagonal(state.data).real, 0.0, None)
    probs = np.bincount(m_b, weights=pops, minlength=cutoff.dim_b)
    dist = ChargeDistribution(time, probs)
    if n is None:
        return dist

    sector = n * m_a + m_b
    if state.is_pure:
        occupied = np.unique(sector[pops > 1e-14])
        coherent_across = occupied.size > 1
    else:
        rho = state.data
        cross = sector[:, None] != sector[None, :]
        coherent_across = bool(np.max(np.abs(rho[cross]), initial=0.0) > 1e-12)
    if coherent_across:
        return dist

    weights, table = {}, {}
    for q in np.unique(sector[pops > 1e-14]):
        if q % n:
            return dist
        M = int(q // n)
        in_sector = sector == q
        p_M = float(pops[in_sector].sum())
        cond = np.zeros(M + 1)
        for i in np.flatnonzero(in_sector):
            cond[M - m_a[i]] += pops[i]
        weights[M] = p_M
        table[M] = cond / p_M
    dist.charger_weights = weights
    dist.conditional = table
    return dist
