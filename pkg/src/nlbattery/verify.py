"""Named invariant suites run by ``nlbattery verify``.

Each suite returns a list of failure strings; an empty list means it passed.
"""

from __future__ import annotations

import math

import numpy as np

from .certify import ReportOptions, nonlinear_record, power_bound_along
from .classical import (
    ClassicalParams,
    energy_matched_initial,
    integrate_classical,
)
from .dynamics import (
    CONSERVATION_TOLERANCE,
    NORM_TOLERANCE,
    evolve,
    optimal_charging_time,
    reference_evolve,
    trace_from_operators,
)
from .fock import (
    ModeCutoff,
    coherent_amplitudes,
    coherent_state,
    fock_state,
    minimal_dim,
    squeezed_vacuum_amplitudes,
    squeezed_vacuum_state,
)
from .models import (
    JosephsonSpec,
    ModelSpec,
    build_H_A,
    build_H_B,
    build_H_int,
    build_josephson_full,
    build_total,
    complete_block_cutoff,
    conserved_charge,
    josephson_effective_coupling,
    resonant_coupling_from_table,
    taylor_resonant_terms,
)


def comparison_inputs(n=2, N=2, g_n=1.0, omega0=1.0):
    """(label, spec, initial state) for Fock, coherent and squeezed chargers with E_A = N w0."""
    nbar = N / n
    out = []
    spec = ModelSpec.nonlinear(N, g_n, omega0=omega0, n=n, coupling_mode="direct",
                               cutoff=complete_block_cutoff(n, int(round(nbar)) + 1, N + 1))
    out.append(("fock", spec, fock_state(int(round(nbar)), 0, spec.cutoff)))

    alpha = math.sqrt(nbar)
    cut = complete_block_cutoff(n, minimal_dim(coherent_amplitudes, alpha), N + 1)
    spec = ModelSpec.nonlinear(N, g_n, omega0=omega0, n=n, coupling_mode="direct", cutoff=cut)
    out.append(("coherent", spec, coherent_state(alpha, cut)))

    r = math.asinh(math.sqrt(nbar))
    dim_a = minimal_dim(squeezed_vacuum_amplitudes, r)
    cut = complete_block_cutoff(n, dim_a, N + 1, max_dim=max(4096, dim_a * (n * (dim_a - 1) + 1)))
    spec = ModelSpec.nonlinear(N, g_n, omega0=omega0, n=n, coupling_mode="direct", cutoff=cut)
    out.append(("squeezed", spec, squeezed_vacuum_state(r, cut)))
    return out


def _conservation_scenarios():
    for N in (2, 4, 6):
        spec = ModelSpec.nonlinear(N, 1.0)
        yield f"nonlinear N={N} fock", spec, fock_state(1, 0, spec.cutoff)
    spec = ModelSpec.linear(3, 1.0)
    yield "linear N=3 fock", spec, fock_state(3, 0, spec.cutoff)
    label, spec, psi = comparison_inputs()[1]
    yield "nonlinear n=2 coherent", spec, psi


def suite_conservation():
    failures = []
    for label, spec, psi in _conservation_scenarios():
        grid = np.linspace(0.0, 4 * math.pi, 801)
        tr = trace_from_operators(build_total(spec), build_H_B(spec), conserved_charge(spec),
                                  psi, grid, check=False)
        norm_err = float(np.max(np.abs(tr.norm - 1.0)))
        if norm_err >= NORM_TOLERANCE:
            failures.append(f"{label}: norm drift {norm_err:.3e}")
        for name in ("energy_total", "charge_Q"):
            drift = tr.max_drift(name)
            if drift >= CONSERVATION_TOLERANCE:
                failures.append(f"{label}: {name} drift {drift:.3e}")
    return failures


def suite_commutation():
    failures = []
    for n in (1, 2, 3, 5):
        for N in sorted({n, n + 1, 2 * n}):
            for dims in ((3, n * 2 + 1), (4, N + 3), (5, 7)):
                cutoff = ModeCutoff(dims[0], max(dims[1], N + 1))
                spec = ModelSpec(N=N, coupling=0.7, cutoff=cutoff, n=n,
                                 kind="linear" if n == 1 else "nonlinear")
                comm = build_H_int(spec).commutator(build_H_A(spec) + build_H_B(spec))
                err = float(np.max(np.abs(comm.entries.data), initial=0.0))
                if err >= 1e-12:
                    failures.append(f"n={n} N={N} cutoff={dims}: |[H_int, H_A+H_B]| = {err:.3e}")
    return failures


def suite_block_oracle():
    failures = []
    for N in range(2, 9):
        spec = ModelSpec.nonlinear(N, 1.0)
        psi0 = fock_state(1, 0, spec.cutoff)
        grid = np.linspace(0.0, 3.0, 61)
        H = build_total(spec)
        theta_rate = spec.g_n * math.sqrt(math.factorial(N))
        worst = 0.0
        for t in grid:
            expected = np.zeros(spec.cutoff.dim, dtype=complex)
            phase = np.exp(-1j * N * spec.omega0 * t)
            expected[spec.cutoff.index(1, 0)] = phase * math.cos(theta_rate * t)
            expected[spec.cutoff.index(0, N)] = -1j * phase * math.sin(theta_rate * t)
            worst = max(worst, float(np.max(np.abs(evolve(H, psi0, t).data - expected))))
        if worst >= 1e-9:
            failures.append(f"N={N}: max amplitude deviation {worst:.3e}")
    return failures


def suite_time_reversal():
    failures = []
    for label, spec, psi in _conservation_scenarios():
        H = build_total(spec)
        for t in (0.37, 2.5, 11.0):
            back = evolve(H, evolve(H, psi, t), -t)
            err = float(np.max(np.abs(back.data - psi.data)))
            if err >= 1e-9:
                failures.append(f"{label} t={t}: round-trip error {err:.3e}")
    return failures


def suite_expm_crosscheck():
    failures = []
    for label, spec, psi in _conservation_scenarios():
        if spec.cutoff.dim > 400:
            continue
        H = build_total(spec)
        for t in (0.5, 1.7, 4.0):
            err = float(np.max(np.abs(evolve(H, psi, t).data - reference_evolve(H, psi, t).data)))
            if err >= 1e-8:
                failures.append(f"{label} t={t}: spectral vs expm deviation {err:.3e}")
    return failures


def suite_qsl_saturation(mapping_factor=1.0, N_list=range(2, 13)):
    failures = []
    options = ReportOptions(mapping_factor=mapping_factor, include_linear_control=False)
    for N in N_list:
        rec = nonlinear_record(N, 1.0, 1.0, options)
        if abs(rec.saturation_ratio - 1.0) > 1e-6:
            failures.append(f"N={N}: tau_bar/tau_QSL = {rec.saturation_ratio:.9f}")
        if abs(rec.tau_qsl_nonlinear / rec.tau_qsl - 1.0) > 1e-10:
            failures.append(f"N={N}: initial variances not equalised by the coupling map")
    return failures


def suite_power_bound():
    failures = []
    for label, spec, psi in comparison_inputs():
        grid = np.linspace(0.0, 8.0, 801)
        achieved, bound = power_bound_along(build_total(spec), build_H_B(spec), psi, grid)
        excess = float(np.nanmax(achieved - bound))
        if excess > 1e-9:
            failures.append(f"{label}: power exceeds its bound by {excess:.3e}")
    return failures


def suite_input_comparison():
    failures = []
    peaks = {label: optimal_charging_time(spec, psi, horizon=6.0)[1]
             for label, spec, psi in comparison_inputs()}
    if abs(peaks["fock"] - 2.0) > 1e-9:
        failures.append(f"fock peak {peaks['fock']!r} != 2")
    for label in ("coherent", "squeezed"):
        if not peaks[label] < 2.0 - 0.05:
            failures.append(f"{label} peak {peaks[label]!r} not below 2 - 0.05")
    return failures


def suite_classical():
    failures = []
    for n in (2, 3, 5):
        params = ClassicalParams(n, 0.5)
        traj = integrate_classical(energy_matched_initial(n, n), params, 20.0)
        if np.any(traj.energy_B != 0.0):
            failures.append(f"n={n}: classical battery energy not identically zero")
    for N in (1, 3):
        params = ClassicalParams(1, 1.0)
        traj = integrate_classical(energy_matched_initial(1, N), params, 2 * math.pi)
        err = float(np.max(np.abs(traj.energy_B - N * np.sin(traj.times) ** 2)))
        if err >= 1e-6 * N:
            failures.append(f"n=1 N={N}: classical vs quantum deviation {err:.3e}")
        if traj.energy_drift() >= 1e-8:
            failures.append(f"n=1 N={N}: energy drift {traj.energy_drift():.3e}")
    return failures


def suite_josephson():
    failures = []
    jspec = JosephsonSpec(E_J=1.0, lambda1=0.05, lambda2=0.05, n=3)
    H = build_josephson_full(jspec, ModeCutoff(6, 10))
    element = H.element((0, 3), (1, 0)).real
    target = josephson_effective_coupling(jspec) * math.sqrt(6)
    if abs(element / target - 1.0) >= 0.01:
        failures.append(f"full element {element:.6e} vs effective {target:.6e}")
    table = resonant_coupling_from_table(taylor_resonant_terms(jspec, 4), 3)
    if abs(table - josephson_effective_coupling(jspec)) > 4 * np.finfo(float).eps * abs(table):
        failures.append(f"order-4 coefficient {table!r} differs from closed form")
    return failures


SUITES = {
    "conservation": suite_conservation,
    "commutation": suite_commutation,
    "block_oracle": suite_block_oracle,
    "time_reversal": suite_time_reversal,
    "expm_crosscheck": suite_expm_crosscheck,
    "qsl_saturation": suite_qsl_saturation,
    "power_bound": suite_power_bound,
    "input_comparison": suite_input_comparison,
    "classical": suite_classical,
    "josephson": suite_josephson,
}


def run_suites(names=None, mapping_factor=1.0):
    """Run the named suites (all by default) and return ``(passed, failed)``.

    ``failed`` is a list of ``{"suite": name, "detail": message}`` dicts.
    """
    names = list(names) if names else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    passed, failed = [], []
    for name in names:
        if name == "qsl_saturation":
            problems = SUITES[name](mapping_factor=mapping_factor)
        else:
            problems = SUITES[name]()
        if problems:
            failed.extend({"suite": name, "detail": p} for p in problems)
        else:
            passed.append(name)
    return passed, failed
