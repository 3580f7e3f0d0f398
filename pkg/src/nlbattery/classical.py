"""Classical analog of the charger/battery model.

Operators are replaced by complex canonical coordinates X = q + i p with
{q, p} = 1, giving

    H_A = (n w0 / 2)|X_A|^2,   H_B = (w0 / 2)|X_B|^2,
    H_int = g_n Re(conj(X_A) X_B^n).

The equations of motion are stepped with fixed-step RK4 in plain Python
complex arithmetic so that an exactly empty battery (X_B = 0) stays exactly
empty for n >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import _golden_max
from .errors import StepTooLarge

DRIFT_LIMIT = 1e-6
PEAK_TOLERANCE = 1e-6
FRAMES = ("lab", "rotating")


@dataclass(frozen=True)
class ClassicalParams:
    n: int
    g_n: float
    omega0: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.g_n < 0 or not self.omega0 > 0:
            raise ValueError("need g_n >= 0 and omega0 > 0")


@dataclass(frozen=True)
class ClassicalState:
    X_A: complex
    X_B: complex
    frame: str = "rotating"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")


def classical_rhs(state: ClassicalState, params: ClassicalParams, frame=None):
    """Time derivatives ``(dX_A/dt, dX_B/dt)``."""
    frame = frame or state.frame
    n, g, w0 = params.n, params.g_n, params.omega0
    xa, xb = complex(state.X_A), complex(state.X_B)
    d_a = -1j * g * xb**n
    d_b = -1j * n * g * xa * xb.conjugate() ** (n - 1)
    if frame == "lab":
        d_a += -1j * n * w0 * xa
        d_b += -1j * w0 * xb
    return d_a, d_b


def energies(X_A, X_B, params: ClassicalParams):
    """``(E_A, E_B, E_int)`` for scalar or array coordinates."""
    X_A = np.asarray(X_A, dtype=complex)
    X_B = np.asarray(X_B, dtype=complex)
    e_a = 0.5 * params.n * params.omega0 * np.abs(X_A) ** 2
    e_b = 0.5 * params.omega0 * np.abs(X_B) ** 2
    e_int = params.g_n * np.real(np.conj(X_A) * X_B**params.n)
    return e_a, e_b, e_int


def default_step(params: ClassicalParams, initial: ClassicalState) -> float:
    amp = max(1.0, abs(initial.X_A), abs(initial.X_B))
    limits = [2 * math.pi / (params.n * params.omega0)]
    if params.g_n > 0:
        limits.append(1.0 / (params.g_n * amp ** (params.n - 1) * params.n))
    return min(limits) / 50.0


def _rk4_step(xa, xb, dt, params, frame):
    def f(a, b):
        return classical_rhs(ClassicalState(a, b, frame), params, frame)

    k1a, k1b = f(xa, xb)
    k2a, k2b = f(xa + 0.5 * dt * k1a, xb + 0.5 * dt * k1b)
    k3a, k3b = f(xa + 0.5 * dt * k2a, xb + 0.5 * dt * k2b)
    k4a, k4b = f(xa + dt * k3a, xb + dt * k3b)
    xa = xa + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    xb = xb + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
    return xa, xb


@dataclass
class ClassicalTrajectory:
    times: np.ndarray
    X_A: np.ndarray
    X_B: np.ndarray
    energy_A: np.ndarray
    energy_B: np.ndarray
    energy_int: np.ndarray
    params: ClassicalParams
    frame: str

    @property
    def energy_total(self):
        return self.energy_A + self.energy_B + self.energy_int

    def energy_drift(self) -> float:
        e = self.energy_total
        scale = abs(e[0]) if e[0] != 0 else 1.0
        return float(np.max(np.abs(e - e[0])) / scale)


def integrate_classical(initial: ClassicalState, params: ClassicalParams, t_end: float,
                        dt: float | None = None) -> ClassicalTrajectory:
    """Fixed-step RK4 from t = 0 to ``t_end`` (the last step is shortened to land on it)."""
    if dt is None:
        dt = default_step(params, initial)
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    steps = int(math.ceil(t_end / dt - 1e-12))
    times = np.minimum(np.arange(steps + 1) * dt, t_end)
    xa_out = np.empty(steps + 1, dtype=complex)
    xb_out = np.empty(steps + 1, dtype=complex)
    xa, xb = complex(initial.X_A), complex(initial.X_B)
    xa_out[0], xb_out[0] = xa, xb
    for k in range(1, steps + 1):
        xa, xb = _rk4_step(xa, xb, times[k] - times[k - 1], params, initial.frame)
        xa_out[k], xb_out[k] = xa, xb
    e_a, e_b, e_int = energies(xa_out, xb_out, params)
    traj = ClassicalTrajectory(times, xa_out, xb_out, e_a, e_b, e_int, params, initial.frame)
    drift = traj.energy_drift()
    if not drift <= DRIFT_LIMIT:
        raise StepTooLarge(f"relative energy drift {drift:.3e} with dt={dt:g}")
    return traj


def energy_matched_initial(n: int, N: int, frame="rotating") -> ClassicalState:
    """Charger amplitude with H_A = N w0 (|X_A|^2 = 2N/n), battery empty."""
    return ClassicalState(math.sqrt(2.0 * N / n), 0.0, frame)


@dataclass(frozen=True)
class ClassicalSummary:
    E_B_max_cl: float
    tau_at_max: float | None


def classical_charging_summary(params: ClassicalParams, N: int, horizon: float,
                               dt: float | None = None, flat_rtol=1e-9,
                               peak_rtol=PEAK_TOLERANCE) -> ClassicalSummary:
    """Largest classical battery energy over ``[0, horizon]`` and when it is first reached.

    Peaks whose heights agree within ``peak_rtol * N w0`` (the integrator's
    accuracy) count as equal, so the earliest of them is reported.
    """
    initial = energy_matched_initial(params.n, N)
    traj = integrate_classical(initial, params, horizon, dt)
    e_b = traj.energy_B
    scale = N * params.omega0
    if e_b.max() <= flat_rtol * scale:
        return ClassicalSummary(float(e_b.max()), None)

    def refine(k):
        # golden search over single RK4 sub-steps taken from t_{k-1}
        start = (traj.X_A[k - 1], traj.X_B[k - 1])
        t0 = traj.times[k - 1]

        def e_after(s):
            _, xb = _rk4_step(*start, s, params, initial.frame)
            return 0.5 * params.omega0 * abs(xb) ** 2

        s_best, e_best = _golden_max(e_after, 0.0, traj.times[k + 1] - t0, 1e-12)
        return float(t0 + s_best), float(max(e_best, e_b[k]))

    floor = e_b.max() - peak_rtol * scale - 0.25 * float(np.max(np.abs(np.diff(e_b, 2))))
    peaks = []
    for k in range(1, e_b.size - 1):
        if e_b[k] >= floor and e_b[k] >= e_b[k - 1] and e_b[k] >= e_b[k + 1]:
            peaks.append(refine(k))
    if e_b[-1] > e_b[-2]:
        peaks.append((float(traj.times[-1]), float(e_b[-1])))
    best = max(e for _, e in peaks)
    for t, e in peaks:
        if e >= best - peak_rtol * scale:
            return ClassicalSummary(best, t)
    raise AssertionError("unreachable")
