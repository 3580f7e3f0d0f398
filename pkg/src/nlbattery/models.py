"""Hamiltonians of the charger/battery model and its Josephson realisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import EvenOrderUnsupported
from .fock import (
    ModeCutoff,
    OperatorMatrix,
    ladder_lower,
    ladder_raise,
    number_operator,
)

KINDS = ("linear", "nonlinear")
COUPLING_MODES = ("g1", "direct")


def map_coupling(g1: float, N: int) -> float:
    """Non-linear coupling g_N that matches the initial energy variance of the linear model."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return g1 * math.exp(-0.5 * gammaln(N))


@dataclass(frozen=True)
class ModelSpec:
    """Physical parameters of one charging model.

    ``coupling`` is g1 when ``coupling_mode == "g1"`` (the order-n coupling is
    then obtained through :func:`map_coupling`) and g_n itself when
    ``coupling_mode == "direct"``. A linear model always has order 1.
    """

    N: int
    coupling: float
    cutoff: ModeCutoff
    kind: str = "nonlinear"
    n: int | None = None
    omega0: float = 1.0
    coupling_mode: str = "g1"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValueError(f"coupling_mode must be one of {COUPLING_MODES}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.kind == "linear":
            if self.n not in (None, 1):
                raise ValueError("a linear model has n = 1")
            object.__setattr__(self, "n", 1)
        elif self.n is None:
            object.__setattr__(self, "n", self.N)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.omega0 > 0 or not self.coupling > 0:
            raise ValueError("omega0 and coupling must be positive")
        if self.kind == "nonlinear" and self.cutoff.dim_b < self.N + 1:
            raise ValueError(f"nonlinear charging needs dim_b >= N+1 = {self.N + 1}")
        if self.kind == "linear" and self.cutoff.dim_a < self.N + 1:
            raise ValueError(f"linear charging from |N> needs dim_a >= N+1 = {self.N + 1}")

    @classmethod
    def linear(cls, N, g1, omega0=1.0, cutoff=None):
        cutoff = cutoff or ModeCutoff(N + 1, N + 1)
        return cls(N=N, coupling=g1, cutoff=cutoff, kind="linear", omega0=omega0)

    @classmethod
    def nonlinear(cls, N, g1, omega0=1.0, n=None, cutoff=None, coupling_mode="g1"):
        n = N if n is None else n
        cutoff = cutoff or complete_block_cutoff(n, 2, min_dim_b=N + 1)
        return cls(
            N=N, coupling=g1, cutoff=cutoff, kind="nonlinear", n=n,
            omega0=omega0, coupling_mode=coupling_mode,
        )

    @property
    def g_n(self) -> float:
        if self.coupling_mode == "direct" or self.n == 1:
            return float(self.coupling)
        return map_coupling(self.coupling, self.n)

    @property
    def g1(self) -> float:
        """Reference linear coupling (inverse mapping in direct mode)."""
        if self.coupling_mode == "g1" or self.n == 1:
            return float(self.coupling)
        return self.coupling * math.exp(0.5 * gammaln(self.n))

    def with_cutoff(self, cutoff):
        return ModelSpec(
            N=self.N, coupling=self.coupling, cutoff=cutoff, kind=self.kind,
            n=self.n, omega0=self.omega0, coupling_mode=self.coupling_mode,
        )


def complete_block_cutoff(n: int, dim_a: int, min_dim_b: int = 2, max_dim=None) -> ModeCutoff:
    """Cutoff whose battery mode can absorb every kept charger excitation.

    Every conserved-charge sector reachable from a state with an empty battery
    is then represented without truncation.
    """
    dim_b = max(min_dim_b, n * (dim_a - 1) + 1)
    kwargs = {} if max_dim is None else {"max_dim": max_dim}
    return ModeCutoff(dim_a, dim_b, **kwargs)


def build_H_A(spec: ModelSpec) -> OperatorMatrix:
    return (spec.n * spec.omega0) * number_operator("A", spec.cutoff)


def build_H_B(spec: ModelSpec) -> OperatorMatrix:
    return spec.omega0 * number_operator("B", spec.cutoff)


def _interaction(cutoff, order, g):
    a_dag = ladder_raise("A", cutoff).entries
    b = ladder_lower("B", cutoff).entries
    b_n = b
    for _ in range(order - 1):
        b_n = b_n @ b
    forward = a_dag @ b_n
    return OperatorMatrix(cutoff, g * (forward + forward.conj().T), hermitian=True)


def build_H_int(spec: ModelSpec) -> OperatorMatrix:
    """g_n [a^dag b^n + a (b^dag)^n]."""
    return _interaction(spec.cutoff, spec.n, spec.g_n)


def build_total(spec: ModelSpec) -> OperatorMatrix:
    return build_H_A(spec) + build_H_B(spec) + build_H_int(spec)


def conserved_charge(spec: ModelSpec) -> OperatorMatrix:
    """Q = n a^dag a + b^dag b, which commutes with the total Hamiltonian."""
    return spec.n * number_operator("A", spec.cutoff) + number_operator("B", spec.cutoff)


# --- Josephson-junction implementation -------------------------------------


@dataclass(frozen=True)
class JosephsonSpec:
    E_J: float
    lambda1: float
    lambda2: float
    n: int
    omega2: float = 1.0
    omega1: float = field(default=None)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.omega1 is None:
            object.__setattr__(self, "omega1", self.n * self.omega2)
        for name in ("E_J", "omega1", "omega2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("zero-point phase amplitudes must be non-negative")

    @property
    def resonant(self) -> bool:
        return abs(self.omega1 - self.n * self.omega2) <= 1e-12 * self.omega1


def _require_odd(n):
    if n % 2 == 0:
        raise EvenOrderUnsupported(f"order n={n} is even; the resonant phase factor needs odd n")


def josephson_effective_coupling(jspec: JosephsonSpec) -> float:
    n = jspec.n
    _require_odd(n)
    sign = -1.0 if ((n - 1) // 2) % 2 else 1.0
    return jspec.E_J * sign * jspec.lambda1 * jspec.lambda2**n / math.factorial(n)


def phase_operator(jspec: JosephsonSpec, cutoff: ModeCutoff) -> OperatorMatrix:
    """phi_1 + phi_2 = lambda1 (a + a^dag) + lambda2 (b + b^dag)."""
    a = ladder_lower("A", cutoff)
    b = ladder_lower("B", cutoff)
    return jspec.lambda1 * (a + a.dag) + jspec.lambda2 * (b + b.dag)


def build_josephson_full(jspec: JosephsonSpec, cutoff: ModeCutoff) -> OperatorMatrix:
    """omega1 a^dag a + omega2 b^dag b - E_J cos(phi_1 + phi_2), cosine taken exactly.

    The cosine is the matrix function of the truncated phase operator, not a
    Taylor polynomial, so the only approximation left is the Fock cutoff.
    """
    phi = phase_operator(jspec, cutoff).dense()
    phi = 0.5 * (phi + phi.conj().T)
    w, v = np.linalg.eigh(phi)
    cos_phi = (v * np.cos(w)) @ v.conj().T
    cos_phi = 0.5 * (cos_phi + cos_phi.conj().T)
    free = jspec.omega1 * number_operator("A", cutoff) + jspec.omega2 * number_operator("B", cutoff)
    entries = free.entries - jspec.E_J * sp.csr_array(cos_phi)
    return OperatorMatrix(cutoff, entries, hermitian=True)


def build_josephson_effective(
    jspec: JosephsonSpec, cutoff: ModeCutoff, renormalize_frequencies=False
) -> OperatorMatrix:
    """Resonant lowest-order model omega1 a^dag a + omega2 b^dag b + g_n (a^dag b^n + h.c.).

    With ``renormalize_frequencies`` the mode frequencies pick up the
    quadratic-order shifts E_J lambda_i^2 of the cosine expansion.
    """
    g = josephson_effective_coupling(jspec)
    w1, w2 = jspec.omega1, jspec.omega2
    if renormalize_frequencies:
        shifts = {t.monomial: t.coefficient for t in taylor_resonant_terms(jspec, 2) if t.order == 2}
        w1 += shifts.get((1, 1, 0, 0), 0.0)
        w2 += shifts.get((0, 0, 1, 1), 0.0)
    free = w1 * number_operator("A", cutoff) + w2 * number_operator("B", cutoff)
    return free + _interaction(cutoff, jspec.n, g)


@lru_cache(maxsize=None)
def _normal_ordered_power(k: int) -> dict:
    """Normal-ordered (a + a^dag)^k as {(p, q): count} for a^dag^p a^q."""
    if k == 0:
        return {(0, 0): 1}
    out: dict = {}
    for (p, q), c in _normal_ordered_power(k - 1).items():
        # right-multiply by a
        out[(p, q + 1)] = out.get((p, q + 1), 0) + c
        # right-multiply by a^dag: a^q a^dag = a^dag a^q + q a^(q-1)
        out[(p + 1, q)] = out.get((p + 1, q), 0) + c
        if q:
            out[(p, q - 1)] = out.get((p, q - 1), 0) + c * q
    return out


@dataclass(frozen=True)
class TaylorTerm:
    order: int
    monomial: tuple  # (p, q, r, s) for a^dag^p a^q b^dag^r b^s
    coefficient: float

    @property
    def label(self) -> str:
        return monomial_label(self.monomial)


def monomial_label(monomial) -> str:
    parts = []
    for op, power in zip(("adag", "a", "bdag", "b"), monomial):
        if power == 1:
            parts.append(op)
        elif power > 1:
            parts.append(f"{op}^{power}")
    return " ".join(parts) if parts else "1"


def taylor_terms(jspec: JosephsonSpec, max_order: int) -> list[TaylorTerm]:
    """Normal-ordered expansion of -E_J cos(phi_1 + phi_2) through total order ``max_order``.

    Entries are grouped by the order of the cosine series they come from, so a
    monomial produced by normal-ordering a higher power is listed under that
    higher order.
    """
    l1, l2 = jspec.lambda1, jspec.lambda2
    terms = []
    for m in range(max_order // 2 + 1):
        order = 2 * m
        exact: dict = {}
        for k in range(order + 1):
            weight = Fraction((-1) ** (m + 1), math.factorial(k) * math.factorial(order - k))
            for (p, q), ca in _normal_ordered_power(k).items():
                for (r, s), cb in _normal_ordered_power(order - k).items():
                    key = (k, (p, q, r, s))
                    exact[key] = exact.get(key, 0) + weight * ca * cb
        merged: dict = {}
        for (k, mono), c in exact.items():
            merged[mono] = merged.get(mono, 0.0) + float(c) * l1**k * l2 ** (order - k)
        for mono in sorted(merged):
            if merged[mono] != 0.0:
                terms.append(TaylorTerm(order, mono, jspec.E_J * merged[mono]))
    return terms


def is_resonant(monomial, n: int) -> bool:
    """Commutes with n a^dag a + b^dag b: n * (net a-quanta) + (net b-quanta) == 0."""
    p, q, r, s = monomial
    return n * (p - q) + (r - s) == 0


def taylor_resonant_terms(jspec: JosephsonSpec, max_order: int) -> list[TaylorTerm]:
    _require_odd(jspec.n)
    if max_order < 2:
        raise ValueError("max_order must reach at least the quadratic terms")
    return [t for t in taylor_terms(jspec, max_order) if is_resonant(t.monomial, jspec.n)]


def resonant_coupling_from_table(terms, n: int) -> float:
    """Coefficient of a^dag b^n at order n + 1."""
    for t in terms:
        if t.order == n + 1 and t.monomial == (1, 0, 0, n):
            return t.coefficient
    raise KeyError(f"no order-{n + 1} a^dag b^{n} entry in table")


__all__ = [
    "ModelSpec", "JosephsonSpec", "TaylorTerm", "map_coupling", "complete_block_cutoff",
    "build_H_A", "build_H_B", "build_H_int", "build_total", "conserved_charge",
    "josephson_effective_coupling", "phase_operator", "build_josephson_full",
    "build_josephson_effective", "taylor_terms", "taylor_resonant_terms", "is_resonant",
    "resonant_coupling_from_table", "monomial_label",
]
