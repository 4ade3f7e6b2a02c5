"""Seeded random variational systems with known kernel and solutions.

Omega = dF_j^mu ^ dy^j ^ d^{m-1}x_mu + dE ^ d^m x with random quadratic
polynomials F, E.  Some fiber coordinates are left out of F and E entirely,
which puts their directions in the kernel; a random constant change of the
fiber coordinates then hides this from the chart.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..exterior import (
    FiberedChart,
    FormField,
    FormValue,
    VectorField,
    interior_decomposable,
    one_form,
    pullback_linear,
    wedge,
)
from ..kernels import TOL_RANK, expanded_extension_space, kernel_distribution_point, span_distance
from ..solutions import Distribution, PremultisymplecticSystem, equivalence_probe, theorem_decomposition


@dataclass(frozen=True)
class Quadratic:
    """c + g.v + v^T Q v."""

    c: float
    g: np.ndarray
    Q: np.ndarray

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(self.c + self.g @ v + v @ self.Q @ v)

    def grad(self, v) -> np.ndarray:
        return self.g + (self.Q + self.Q.T) @ np.asarray(v, dtype=float)

    @classmethod
    def random(cls, rng: np.random.Generator, support: Sequence[int], dim: int, scale: float = 1.0) -> "Quadratic":
        g = np.zeros(dim)
        Q = np.zeros((dim, dim))
        s = list(support)
        g[s] = rng.normal(size=len(s)) * scale
        Q[np.ix_(s, s)] = np.triu(rng.normal(size=(len(s), len(s)))) * scale * 0.5
        return cls(float(rng.normal() * scale), g, Q)


@dataclass
class RandomVariational:
    system: PremultisymplecticSystem
    kernel: List[np.ndarray]
    T: np.ndarray
    seed: int
    solutions: Dict[str, Distribution] = field(default_factory=dict)

    @property
    def chart(self) -> FiberedChart:
        return self.system.chart


def random_variational(seed: int, m: int = 2, n: int = 3, absent: int = 1) -> RandomVariational:
    """A variational system whose kernel is spanned by `absent` hidden directions."""
    if not 0 <= absent < n:
        raise ValueError("absent must leave at least one active fiber coordinate")
    rng = np.random.default_rng(seed)
    chart = FiberedChart(m, n)
    N = chart.dim
    active = list(range(m, m + n - absent))
    support = list(range(m)) + active
    F = {(j, mu): Quadratic.random(rng, support, N) for j in active for mu in range(m)}
    E = Quadratic.random(rng, support, N)
    vol = chart.volume()
    dy = {j: FormValue.basis((j,), N) for j in active}
    vol_minus = [chart.volume_minus(mu) for mu in range(m)]

    def omega0(p):
        acc = wedge(one_form(E.grad(p)), vol)
        for (j, mu), f in F.items():
            acc = acc + wedge(wedge(one_form(f.grad(p)), dy[j]), vol_minus[mu])
        return acc

    # p = T p' with a random fiber-linear block
    L = rng.normal(size=(n, n)) + 2.0 * np.eye(n)
    T = np.eye(N)
    T[m:, m:] = L
    Tinv = np.linalg.inv(T)

    def omega(q):
        return pullback_linear(T, omega0(T @ q))

    system = PremultisymplecticSystem(chart, FormField(chart, m + 1, omega), f"variational[{seed}]")
    kernel = [Tinv[:, j] for j in range(m + n - absent, N)]
    return RandomVariational(system, kernel, T, seed)


def vertical_equations(omega: FormValue, chart: FiberedChart) -> tuple:
    """(A, b) with vertical part of i(X_1 ^ .. ^ X_m) Omega = A z + b, X_mu = d_mu + Z_mu.

    z stacks Z row by row (mu major).  The map is affine because every term
    of a variational form leaves room for at most one vertical slot after the
    other m - 1 slots are filled by base directions.
    """
    m, n = chart.m, chart.n
    N = chart.dim

    def residual(z):
        Z = z.reshape(m, n)
        Xs = []
        for mu in range(m):
            x = np.zeros(N)
            x[mu] = 1.0
            x[m:] = Z[mu]
            Xs.append(x)
        alpha = interior_decomposable(Xs, omega)
        return np.array([alpha[(j,)] for j in chart.fiber_indices])

    b = residual(np.zeros(m * n))
    A = np.column_stack([residual(e) - b for e in np.eye(m * n)])
    return A, b


def solution_distribution(rv: RandomVariational, W: np.ndarray, label: str) -> Distribution:
    """X_mu = d_mu + Z_mu with z = -pinv(A) b + (I - pinv(A) A) W."""
    chart = rv.chart
    m, n = chart.m, chart.n
    W = np.asarray(W, dtype=float)

    def Z(p):
        A, b = vertical_equations(rv.system.at(p), chart)
        Ap = np.linalg.pinv(A, rcond=TOL_RANK)
        return (-Ap @ b + (np.eye(m * n) - Ap @ A) @ W).reshape(m, n)

    def gen(mu):
        def X(p):
            v = np.zeros(chart.dim)
            v[mu] = 1.0
            v[m:] = Z(p)[mu]
            return v

        return VectorField(chart, X, f"X{mu}")

    return Distribution(chart, tuple(gen(mu) for mu in range(m)), label, m)


def expanded_family(rv: RandomVariational, rng: np.random.Generator) -> List[Distribution]:
    """Two base solutions, a kernel-shifted copy of the first, and kernel augmentations."""
    chart = rv.chart
    m, n = chart.m, chart.n
    W1, W2 = rng.normal(size=(2, m * n))
    shift = np.zeros(m * n)
    for mu in range(m):
        for k in rv.kernel:
            shift[mu * n : (mu + 1) * n] += rng.normal() * k[m:]
    H1 = solution_distribution(rv, W1, "H1")
    H2 = solution_distribution(rv, W2, "H2")
    H1s = solution_distribution(rv, W1 + shift, "H1'")
    K = Distribution.from_vectors(chart, rv.kernel, "K")
    K0 = Distribution.from_vectors(chart, rv.kernel[:1], "k0")
    return [H1, H2, H1s, H1 + K, H2 + K, H1s + K0]


@dataclass
class SuiteResult:
    seed: int
    m: int
    n: int
    transitivity_failures: int
    related_pairs: int
    B_in_K: bool
    extension_residual: float
    kernel_residual: float

    @property
    def passed(self) -> bool:
        return self.transitivity_failures == 0 and self.B_in_K and self.extension_residual <= 1e-7


def run_instance(seed: int, m: int, n: int, points: int = 2, tol: float = 1e-8) -> SuiteResult:
    absent = 1 if n == 3 else 2
    rv = random_variational(seed, m, n, absent)
    rng = np.random.default_rng(seed + 10_000)
    pts = list(rng.uniform(-0.5, 0.5, size=(points, rv.chart.dim)))
    fam = expanded_family(rv, rng)
    graph = equivalence_probe(fam, rv.system, pts, tol)
    b_in_k = True
    ext_res = ker_res = 0.0
    for p in pts:
        for D in fam:
            rep = theorem_decomposition(D, rv.system, p, tol)
            b_in_k &= bool(rep.B_in_K and rep.H_is_solution)
        omega = rv.system.at(p)
        ext = expanded_extension_space(fam[0].at(p), omega, rv.chart)
        ext_res = max(ext_res, span_distance(ext, rv.kernel))
        K = kernel_distribution_point(omega, rv.chart).K_basis
        ker_res = max(ker_res, span_distance(K, rv.kernel))
    return SuiteResult(seed, m, n, len(graph.transitivity_failures), len(graph.edges), b_in_k, ext_res, ker_res)


def variational_suite(count: int = 20, seed: int = 0, points: int = 2) -> List[SuiteResult]:
    shapes = list(itertools.product((2, 3), (3, 5)))
    return [run_instance(seed + i, *shapes[i % len(shapes)], points=points) for i in range(count)]
