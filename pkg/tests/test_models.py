import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from nlbattery.errors import EvenOrderUnsupported
from nlbattery.fock import ModeCutoff, expectation, fock_state
from nlbattery.models import (
    JosephsonSpec,
    ModelSpec,
    build_H_A,
    build_H_B,
    build_H_int,
    build_josephson_effective,
    build_josephson_full,
    build_total,
    complete_block_cutoff,
    conserved_charge,
    is_resonant,
    josephson_effective_coupling,
    map_coupling,
    monomial_label,
    resonant_coupling_from_table,
    taylor_resonant_terms,
    taylor_terms,
)


@pytest.mark.parametrize("N", [1, 2, 3, 7, 12, 25])
def test_coupling_map_against_factorial(N):
    assert map_coupling(1.7, N) == pytest.approx(1.7 / math.sqrt(math.factorial(N - 1)),
                                                 rel=1e-13)


def test_coupling_map_equalises_variances():
    # <dH>^2 on |N,0> (linear) equals <dH>^2 on |1,0> (order N) with the mapped g_N
    for N in range(2, 9):
        lin = ModelSpec.linear(N, 0.8)
        nl = ModelSpec.nonlinear(N, 0.8)
        v_lin = _variance(build_total(lin), fock_state(N, 0, lin.cutoff))
        v_nl = _variance(build_total(nl), fock_state(1, 0, nl.cutoff))
        assert v_nl == pytest.approx(v_lin, rel=1e-12)
        assert v_lin == pytest.approx(0.8**2 * N, rel=1e-12)


def _variance(H, psi):
    Hd = H.dense()
    v = psi.data
    mean = np.vdot(v, Hd @ v).real
    return np.vdot(v, Hd @ Hd @ v).real - mean**2


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(N=3, coupling=1.0, cutoff=ModeCutoff(2, 3))
    with pytest.raises(ValueError):
        ModelSpec.linear(4, 1.0, cutoff=ModeCutoff(3, 5))
    with pytest.raises(ValueError):
        ModelSpec.nonlinear(2, -1.0)
    with pytest.raises(ValueError):
        ModelSpec(N=2, coupling=1.0, cutoff=ModeCutoff(3, 3), kind="linear", n=2)


def test_g_n_and_g1_round_trip():
    spec = ModelSpec.nonlinear(5, 0.3)
    assert spec.g_n == pytest.approx(0.3 / math.sqrt(24))
    direct = ModelSpec.nonlinear(5, spec.g_n, coupling_mode="direct")
    assert direct.g1 == pytest.approx(0.3, rel=1e-14)
    assert ModelSpec.linear(3, 0.4).g_n == 0.4


def test_complete_block_cutoff():
    c = complete_block_cutoff(3, 4, min_dim_b=2)
    assert (c.dim_a, c.dim_b) == (4, 10)
    assert complete_block_cutoff(2, 2, min_dim_b=7).dim_b == 7


@pytest.mark.parametrize("N", [2, 3, 5])
def test_interaction_matrix_element(N):
    spec = ModelSpec.nonlinear(N, 1.0)
    H = build_H_int(spec)
    # <0,N| adag b^N |1,0> vanishes; <0,N| a (bdag)^N |1,0> = sqrt(N!)
    assert H.element((0, N), (1, 0)) == pytest.approx(spec.g_n * math.sqrt(math.factorial(N)))
    assert H.hermiticity_error() == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(2, 5), st.integers(2, 9))
def test_interaction_commutes_with_free_part(n, N, da, db):
    db = max(db, N + 1)
    kind = "linear" if n == 1 else "nonlinear"
    if kind == "linear":
        da = max(da, N + 1)
    spec = ModelSpec(N=N, coupling=0.9, cutoff=ModeCutoff(da, db), kind=kind, n=n)
    comm = build_H_int(spec).commutator(build_H_A(spec) + build_H_B(spec))
    assert np.max(np.abs(comm.entries.data), initial=0.0) < 1e-12
    assert np.max(np.abs(build_total(spec).commutator(conserved_charge(spec)).entries.data),
                  initial=0.0) < 1e-12


def test_free_energies():
    spec = ModelSpec.nonlinear(3, 1.0, omega0=0.7)
    psi = fock_state(1, 2, spec.cutoff)
    assert expectation(build_H_A(spec), psi).real == pytest.approx(3 * 0.7)
    assert expectation(build_H_B(spec), psi).real == pytest.approx(2 * 0.7)
    assert expectation(conserved_charge(spec), psi).real == 5


# --- Josephson ---------------------------------------------------------------


def test_effective_coupling_signs():
    for n, sign in ((1, 1), (3, -1), (5, 1), (7, -1)):
        j = JosephsonSpec(E_J=2.0, lambda1=0.1, lambda2=0.2, n=n)
        assert josephson_effective_coupling(j) == pytest.approx(
            sign * 2.0 * 0.1 * 0.2**n / math.factorial(n))
    with pytest.raises(EvenOrderUnsupported):
        josephson_effective_coupling(JosephsonSpec(1.0, 0.1, 0.1, 2))
    with pytest.raises(EvenOrderUnsupported):
        taylor_resonant_terms(JosephsonSpec(1.0, 0.1, 0.1, 4), 5)


def test_josephson_spec_defaults():
    j = JosephsonSpec(1.0, 0.05, 0.05, 3, omega2=1.5)
    assert j.omega1 == 4.5 and j.resonant
    assert not JosephsonSpec(1.0, 0.05, 0.05, 3, omega1=4.0).resonant


def test_full_cosine_against_expm():
    from nlbattery.models import phase_operator

    j = JosephsonSpec(E_J=0.8, lambda1=0.3, lambda2=0.2, n=3)
    c = ModeCutoff(3, 4)
    H = build_josephson_full(j, c).dense()
    phi = phase_operator(j, c).dense()
    cos_phi = 0.5 * (scipy.linalg.expm(1j * phi) + scipy.linalg.expm(-1j * phi))
    free = np.diag([j.omega1 * a + j.omega2 * b for a in range(3) for b in range(4)])
    assert np.max(np.abs(H - (free - 0.8 * cos_phi))) < 1e-12


def test_full_element_converges_to_effective():
    j = JosephsonSpec(E_J=1.0, lambda1=0.05, lambda2=0.05, n=3)
    target = josephson_effective_coupling(j) * math.sqrt(6)
    elements = [build_josephson_full(j, ModeCutoff(da, db)).element((0, 3), (1, 0)).real
                for da, db in ((4, 8), (6, 10), (7, 12))]
    assert abs(elements[-1] - elements[-2]) < 1e-9 * abs(target)
    assert abs(elements[-1] / target - 1) < 0.01


def test_effective_model_structure():
    j = JosephsonSpec(E_J=1.0, lambda1=0.1, lambda2=0.1, n=3)
    c = ModeCutoff(3, 8)
    H = build_josephson_effective(j, c)
    assert H.element((0, 3), (1, 0)) == pytest.approx(josephson_effective_coupling(j) * math.sqrt(6))
    assert H.element((1, 0), (1, 0)) == pytest.approx(3.0)
    shifted = build_josephson_effective(j, c, renormalize_frequencies=True)
    assert shifted.element((1, 0), (1, 0)).real == pytest.approx(3.0 + 0.01)
    assert shifted.element((0, 1), (0, 1)).real == pytest.approx(1.0 + 0.01)


def _brute_force_table(l1, l2, order):
    """Normal-order (l1 (a + ad) + l2 (b + bd))^order by explicit word expansion."""
    total = {}
    for word in product("AaBb", repeat=order):
        # each word is a product of single operators; normal-order it per mode
        ca = [c for c in word if c in "Aa"]
        cb = [{"B": "A", "b": "a"}[c] for c in word if c in "Bb"]
        coeff = l1 ** len(ca) * l2 ** len(cb)
        for pa, c_a in _normal_order_word(ca).items():
            for pb, c_b in _normal_order_word(cb).items():
                mono = (pa[0], pa[1], pb[0], pb[1])
                total[mono] = total.get(mono, 0.0) + float(c_a * c_b) * coeff
    return total


def _normal_order_word(word):
    """Word over {A = a^dag, a} -> {(p, q): count} using a a^dag = a^dag a + 1."""
    out = {}
    stack = [(tuple(word), Fraction(1))]
    while stack:
        w, c = stack.pop()
        for i in range(len(w) - 1):
            if w[i] == "a" and w[i + 1] == "A":
                stack.append((w[:i] + ("A", "a") + w[i + 2:], c))
                stack.append((w[:i] + w[i + 2:], c))
                break
        else:
            key = (w.count("A"), w.count("a"))
            out[key] = out.get(key, 0) + c
    return out


def test_taylor_table_against_brute_force():
    j = JosephsonSpec(E_J=1.3, lambda1=0.4, lambda2=0.3, n=3)
    table = taylor_terms(j, 4)
    for order in (2, 4):
        brute = _brute_force_table(0.4, 0.3, order)
        sign = (-1) ** (order // 2 + 1)
        mine = {t.monomial: t.coefficient for t in table if t.order == order}
        for mono, value in brute.items():
            expected = 1.3 * sign * value / math.factorial(order)
            assert mine.get(mono, 0.0) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_resonant_table_n1_leads_with_linear_coupling():
    j = JosephsonSpec(E_J=1.0, lambda1=0.05, lambda2=0.07, n=1)
    terms = taylor_resonant_terms(j, 2)
    assert resonant_coupling_from_table(terms, 1) == pytest.approx(0.05 * 0.07, rel=1e-15)
    assert all(is_resonant(t.monomial, 1) for t in terms)


def test_order4_coefficient_exact():
    j = JosephsonSpec(E_J=1.0, lambda1=0.05, lambda2=0.05, n=3)
    value = resonant_coupling_from_table(taylor_resonant_terms(j, 4), 3)
    assert value == -1.0 * 0.05 * 0.05**3 / 6 or abs(value + 0.05**4 / 6) <= 2e-16 * 0.05**4 / 6


def test_is_resonant_and_labels():
    assert is_resonant((1, 0, 0, 3), 3)
    assert is_resonant((0, 1, 3, 0), 3)
    assert not is_resonant((1, 0, 0, 2), 3)
    assert monomial_label((1, 0, 0, 3)) == "adag b^3"
    assert monomial_label((0, 0, 0, 0)) == "1"
