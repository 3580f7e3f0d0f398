import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlbattery.dynamics import (
    SearchTolerances,
    _StateEvolver,
    average_power,
    charge_distribution,
    charging_trace,
    default_horizon,
    evolve,
    optimal_charging_time,
    optimal_time_from_operators,
    orthogonality_time,
    reference_evolve,
    stored_energy,
    time_grid,
    trace_from_operators,
    variance,
)
from nlbattery.errors import (
    FlatTrace,
    InvariantViolation,
    NeverOrthogonal,
    NonpositiveTime,
    ZeroVariance,
)
from nlbattery.fock import (
    QuantumState,
    coherent_amplitudes,
    coherent_state,
    fock_state,
    minimal_dim,
    mixed_state,
    number_operator,
)
from nlbattery.models import (
    ModelSpec,
    build_H_B,
    build_total,
    complete_block_cutoff,
    conserved_charge,
)


def _random_state(cutoff, rng, mixed=False):
    if not mixed:
        v = rng.normal(size=cutoff.dim) + 1j * rng.normal(size=cutoff.dim)
        return QuantumState(cutoff, v / np.linalg.norm(v))
    x = rng.normal(size=(cutoff.dim, 3)) + 1j * rng.normal(size=(cutoff.dim, 3))
    rho = x @ x.conj().T
    return mixed_state(rho / np.trace(rho).real, cutoff)


@pytest.mark.parametrize("mixed", [False, True])
def test_spectral_evolution_matches_expm(mixed):
    spec = ModelSpec.nonlinear(3, 0.9, n=3, cutoff=complete_block_cutoff(3, 3, 4))
    H = build_total(spec)
    psi = _random_state(spec.cutoff, np.random.default_rng(5), mixed)
    for t in (0.0, 0.3, 2.2, -1.7):
        a = evolve(H, psi, t).data
        b = reference_evolve(H, psi, t).data
        assert np.max(np.abs(a - b)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-20, 20, allow_nan=False))
def test_unitarity_and_time_reversal(seed, t):
    spec = ModelSpec.nonlinear(2, 1.0, cutoff=complete_block_cutoff(2, 3, 3))
    H = build_total(spec)
    psi = _random_state(spec.cutoff, np.random.default_rng(seed))
    out = evolve(H, psi, t)
    assert abs(np.vdot(out.data, out.data).real - 1.0) < 1e-12
    back = evolve(H, out, -t)
    assert np.max(np.abs(back.data - psi.data)) < 1e-9


def test_coherent_state_sector_propagation_matches_expm():
    alpha = 1.0
    dim_a = minimal_dim(coherent_amplitudes, alpha)
    spec = ModelSpec.nonlinear(2, 1.0, cutoff=complete_block_cutoff(2, dim_a, 3))
    psi = coherent_state(alpha, spec.cutoff)
    H = build_total(spec)
    for t in (0.4, 3.1):
        assert np.max(np.abs(evolve(H, psi, t).data - reference_evolve(H, psi, t).data)) < 1e-9


@pytest.mark.parametrize("N", [2, 3, 6])
def test_nonlinear_fock_trace_closed_forms(N):
    spec = ModelSpec.nonlinear(N, 1.0, omega0=1.3)
    grid = np.linspace(0.0, 4.0, 401)
    tr = charging_trace(spec, fock_state(1, 0, spec.cutoff), grid)
    theta = math.sqrt(N) * grid  # g_N sqrt(N!) = sqrt(N) g1
    s2 = np.sin(theta) ** 2
    assert np.max(np.abs(tr.energy_B - 1.3 * N * s2)) < 1e-12 * N
    assert np.max(np.abs(tr.abs_overlap0 - np.abs(np.cos(theta)))) < 1e-12
    assert np.max(np.abs(tr.varH_B - (1.3 * N) ** 2 * s2 * (1 - s2))) < 1e-11 * N**2
    assert np.isnan(tr.power_B[0])
    assert np.allclose(tr.power_B[1:], tr.energy_B[1:] / grid[1:])
    assert tr.max_drift("energy_total") < 1e-12 and tr.max_drift("charge_Q") < 1e-12


def test_trace_invariant_violation_is_named():
    spec = ModelSpec.nonlinear(2, 1.0)
    fake_charge = number_operator("A", spec.cutoff)  # not conserved
    with pytest.raises(InvariantViolation) as info:
        trace_from_operators(build_total(spec), build_H_B(spec), fake_charge,
                             fock_state(1, 0, spec.cutoff), np.linspace(0, 2, 21))
    assert info.value.name == "charge_Q"


def test_mixed_overlap_reduces_to_pure():
    spec = ModelSpec.nonlinear(3, 1.0, cutoff=complete_block_cutoff(3, 3, 4))
    psi = _random_state(spec.cutoff, np.random.default_rng(11))
    H = build_total(spec)
    grid = np.linspace(0, 3, 31)
    pure = np.abs(_StateEvolver(H, psi).overlap0(grid))
    mixed = np.abs(_StateEvolver(H, psi.to_mixed()).overlap0(grid))
    assert np.max(np.abs(pure - mixed)) < 1e-10


def test_optimal_time_is_earliest_of_equal_maxima():
    spec = ModelSpec.linear(3, 1.0)
    psi = fock_state(3, 0, spec.cutoff)
    tau, e_max = optimal_charging_time(spec, psi, horizon=20.0)
    assert tau == pytest.approx(math.pi / 2, rel=1e-9)
    assert e_max == pytest.approx(3.0, rel=1e-12)


def test_optimal_time_at_horizon_when_still_rising():
    spec = ModelSpec.linear(2, 1.0)
    tau, e = optimal_charging_time(spec, fock_state(2, 0, spec.cutoff), horizon=1.0)
    assert tau == 1.0
    assert e == pytest.approx(2 * math.sin(1.0) ** 2, rel=1e-12)


def test_flat_trace_and_zero_variance():
    spec = ModelSpec.nonlinear(2, 1.0)
    vac = fock_state(0, 0, spec.cutoff)
    with pytest.raises(FlatTrace):
        optimal_charging_time(spec, vac)
    with pytest.raises(FlatTrace):
        optimal_time_from_operators(build_total(spec), build_H_B(spec), vac, horizon=3.0)
    with pytest.raises(ZeroVariance):
        default_horizon(build_total(spec), vac)
    with pytest.raises(NeverOrthogonal):
        orthogonality_time(build_total(spec), vac)


@pytest.mark.parametrize("N", [2, 4, 9])
def test_orthogonality_time_equals_speed_limit(N):
    spec = ModelSpec.nonlinear(N, 1.0)
    psi = fock_state(1, 0, spec.cutoff)
    H = build_total(spec)
    t_orth = orthogonality_time(H, psi)
    assert t_orth == pytest.approx(math.pi / (2 * math.sqrt(N)), rel=1e-9)
    assert t_orth == pytest.approx(math.pi / (2 * variance(H, psi)), rel=1e-9)


def test_coherent_charger_never_orthogonal_within_horizon():
    spec = ModelSpec.nonlinear(2, 1.0, cutoff=complete_block_cutoff(2, 13, 3))
    psi = coherent_state(1.0, spec.cutoff)
    with pytest.raises(NeverOrthogonal):
        orthogonality_time(build_total(spec), psi, horizon=5.0)


def test_variance_and_energy_helpers():
    spec = ModelSpec.nonlinear(4, 1.0)
    psi = fock_state(1, 0, spec.cutoff)
    assert variance(build_total(spec), psi) == pytest.approx(2.0, rel=1e-14)
    assert variance(build_total(spec), psi.to_mixed()) == pytest.approx(2.0, rel=1e-12)
    assert stored_energy(fock_state(0, 3, spec.cutoff), build_H_B(spec)) == pytest.approx(3.0)
    assert average_power(4.0, 2.0) == 2.0
    with pytest.raises(NonpositiveTime):
        average_power(1.0, 0.0)
    with pytest.raises(ValueError):
        time_grid(1.0, 1)
    with pytest.raises(NonpositiveTime):
        time_grid(0.0, 10)


def test_grid_validation():
    spec = ModelSpec.nonlinear(2, 1.0)
    psi = fock_state(1, 0, spec.cutoff)
    for grid in ([0.0], [0.1, 0.2], [0.0, 0.5, 0.4]):
        with pytest.raises(ValueError):
            charging_trace(spec, psi, grid)


def test_charge_distribution_at_full_transfer():
    N = 3
    spec = ModelSpec.nonlinear(N, 1.0)
    psi = fock_state(1, 0, spec.cutoff)
    tau = math.pi / (2 * math.sqrt(N))
    dist = charge_distribution(evolve(build_total(spec), psi, tau), tau, n=N)
    assert dist.probabilities[N] == pytest.approx(1.0, abs=1e-14)
    assert dist.charger_weights == {1: pytest.approx(1.0)}
    assert dist.conditional[1][1] == pytest.approx(1.0, abs=1e-14)
    assert dist.stored_energy(N) == pytest.approx(N)


def test_charge_distribution_skips_conditional_with_coherence():
    spec = ModelSpec.nonlinear(2, 1.0, cutoff=complete_block_cutoff(2, 13, 3))
    dist = charge_distribution(coherent_state(1.0, spec.cutoff), 0.0, n=2)
    assert dist.conditional is None
    assert dist.probabilities[0] == pytest.approx(1.0)


def test_search_tolerance_defaults():
    tol = SearchTolerances()
    assert tol.num_points >= 2000 and tol.energy_rtol == 1e-9


def test_local_energy_bound_for_pure_and_mixed_chargers():
    # <Q> conservation caps <b^dag b> at n <a^dag a>(0)
    spec = ModelSpec.nonlinear(2, 1.0, cutoff=complete_block_cutoff(2, 5, 3))
    rng = np.random.default_rng(7)
    H, H_B, Q = build_total(spec), build_H_B(spec), conserved_charge(spec)
    vac_b = np.zeros(spec.cutoff.dim_b)
    vac_b[0] = 1.0
    for _ in range(5):
        p = rng.dirichlet(np.ones(5))
        psi = QuantumState(spec.cutoff, np.kron(np.sqrt(p), vac_b).astype(complex))
        mean_q = 2 * float(np.arange(5) @ p)
        tr = trace_from_operators(H, H_B, Q, psi, np.linspace(0, 10, 501))
        assert tr.energy_B.max() <= mean_q + 1e-9
