"""Distribution-level checks: transversality, H + B splitting, expanded
solutions, kernel-relatedness, brackets and the equivalence probe."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exterior import (
    DEFAULT_FD_STEP,
    FiberedChart,
    FormField,
    FormValue,
    VectorField,
    interior_decomposable,
)
from .kernels import (
    TOL_ALG,
    TOL_RANK,
    kernel_distribution_point,
    kerm_contains,
    is_variational_point,
    matrix_rank,
    orth,
    projection_residual,
)

TOL_FD_SPAN = 1e-5


@dataclass(frozen=True)
class PremultisymplecticSystem:
    """A chart together with an (m+1)-form field."""

    chart: FiberedChart
    omega: FormField
    name: str = ""

    def __post_init__(self):
        if self.omega.degree != self.chart.m + 1:
            raise ValueError(f"form degree {self.omega.degree} is not m+1 = {self.chart.m + 1}")

    def at(self, p) -> FormValue:
        return self.omega(p)


@dataclass(frozen=True)
class Distribution:
    """Generalized distribution presented by a finite list of generators."""

    chart: FiberedChart
    generators: Tuple[VectorField, ...]
    label: str = ""
    claimed_rank: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        for g in self.generators:
            if g.chart.dim != self.chart.dim:
                raise ValueError("generator chart does not match distribution chart")

    def at(self, p) -> np.ndarray:
        """Generator values at p, one per row."""
        if not self.generators:
            return np.zeros((0, self.chart.dim))
        return np.vstack([g(p) for g in self.generators])

    def __add__(self, other: "Distribution") -> "Distribution":
        return Distribution(self.chart, self.generators + other.generators, f"{self.label}+{other.label}")

    @classmethod
    def from_vectors(cls, chart: FiberedChart, vectors, label: str = "") -> "Distribution":
        return cls(chart, tuple(VectorField.constant(chart, v) for v in vectors), label)

    @classmethod
    def coordinates(cls, chart: FiberedChart, names: Sequence[str], label: str = "") -> "Distribution":
        return cls(chart, tuple(VectorField.coordinate(chart, n) for n in names), label)


def is_transverse_point(D: Distribution, p, tol: float = TOL_RANK) -> bool:
    V = D.at(p)
    if V.shape[0] < D.chart.m:
        return False
    return matrix_rank(V[:, : D.chart.m], tol) == D.chart.m


@dataclass
class DecompositionReport:
    H_basis: List[np.ndarray]
    B_basis: List[np.ndarray]
    H_indices: List[int]
    transverse: bool
    span_residual: float = 0.0
    H_is_solution: Optional[bool] = None
    H_residual: float = 0.0
    B_in_K: Optional[bool] = None
    B_residual: float = 0.0
    variational: Optional[bool] = None
    K_basis: List[np.ndarray] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        """For a variational system, B must lie in K."""
        return not (self.variational and not self.B_in_K)

    def to_json(self) -> dict:
        return {
            "H_indices": self.H_indices,
            "H_basis": [list(map(float, v)) for v in self.H_basis],
            "B_basis": [list(map(float, v)) for v in self.B_basis],
            "transverse": self.transverse,
            "span_residual": self.span_residual,
            "H_is_solution": self.H_is_solution,
            "H_residual": self.H_residual,
            "B_in_K": self.B_in_K,
            "B_residual": self.B_residual,
            "variational": self.variational,
        }


def decompose_vectors(V: np.ndarray, m: int, tol: float = TOL_RANK) -> DecompositionReport:
    """Split generator values into H (m transverse generators) and vertical B.

    H is chosen greedily: at each step the generator whose base block has the
    largest norm after removing the span of the already chosen base blocks
    (ties broken by lowest index).  The rest are eliminated against H.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    base = V[:, :m].copy()
    chosen: List[int] = []
    work = base.copy()
    scale = max(np.max(np.abs(base), initial=0.0), 1.0)
    for _ in range(m):
        norms = np.linalg.norm(work, axis=1)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= tol * scale:
            return DecompositionReport([], [], chosen, transverse=False)
        chosen.append(j)
        q = work[j] / norms[j]
        work = work - np.outer(work @ q, q)
    H = V[chosen]
    Hb = base[chosen]
    B = []
    for i in range(V.shape[0]):
        if i in chosen:
            continue
        coef = np.linalg.solve(Hb.T, base[i])
        b = V[i] - coef @ H
        b[:m] = 0.0
        if np.max(np.abs(b)) > tol * max(np.max(np.abs(V[i])), 1.0):
            B.append(b)
    recombined = np.vstack([H] + B) if B else H
    span_res = max(projection_residual(V, recombined), projection_residual(recombined, V))
    return DecompositionReport(list(H), B, chosen, True, span_res)


def decompose_transverse(D: Distribution, p, tol: float = TOL_RANK) -> DecompositionReport:
    rep = decompose_vectors(D.at(p), D.chart.m, tol)
    if not rep.transverse:
        raise ValueError(f"distribution {D.label!r} is not transverse at the given point")
    return rep


@dataclass
class ExpandedReport:
    passed: bool
    transverse: bool
    witness: Optional[Tuple[int, ...]] = None
    witness_contraction: Optional[FormValue] = None
    residual: float = 0.0

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "transverse": self.transverse,
            "witness": list(self.witness) if self.witness else None,
            "witness_contraction": self.witness_contraction.to_json() if self.witness_contraction else None,
            "residual": self.residual,
        }


def is_expanded_solution_vectors(V: np.ndarray, omega: FormValue, m: int, tol: float = TOL_ALG) -> ExpandedReport:
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] < m or matrix_rank(V[:, :m], TOL_RANK) < m:
        return ExpandedReport(False, False)
    worst = 0.0
    for subset in itertools.combinations(range(V.shape[0]), m):
        ok, res = kerm_contains([V[i] for i in subset], omega, tol)
        worst = max(worst, res)
        if not ok:
            contraction = interior_decomposable([V[i] for i in subset], omega)
            return ExpandedReport(False, True, subset, contraction, res)
    return ExpandedReport(True, True, None, None, worst)


def is_expanded_solution_point(D: Distribution, system: PremultisymplecticSystem, p, tol: float = TOL_ALG) -> ExpandedReport:
    return is_expanded_solution_vectors(D.at(p), system.at(p), D.chart.m, tol)


def kernel_related(
    D1: Distribution, D2: Distribution, system: PremultisymplecticSystem, points, tol: float = TOL_ALG
) -> Tuple[bool, Optional[ExpandedReport]]:
    """D1 ~ D2 iff D1 + D2 is an expanded solution at every sample point.

    Returns the verdict and the first failing report, if any.
    """
    joint = D1 + D2
    for p in points:
        rep = is_expanded_solution_point(joint, system, p, tol)
        if not rep.passed:
            return False, rep
    return True, None


def theorem_decomposition(
    D: Distribution, system: PremultisymplecticSystem, p, tol: float = TOL_ALG, span_tol: float = 1e-7
) -> DecompositionReport:
    """Split D = H + B and check H is a solution and B lies in K.

    Violations are reported in the flags.  They are only inconsistent when
    the system is variational at p.
    """
    omega = system.at(p)
    rep = decompose_vectors(D.at(p), D.chart.m)
    var = is_variational_point(omega, system.chart, tol)
    rep.variational = var.variational
    if not rep.transverse:
        return rep
    rep.H_is_solution, rep.H_residual = kerm_contains(rep.H_basis, omega, tol)
    K = kernel_distribution_point(omega, system.chart).K_basis
    rep.K_basis = K
    if rep.B_basis:
        rep.B_residual = projection_residual(rep.B_basis, K) if K else float(
            max(np.max(np.abs(b)) for b in rep.B_basis)
        )
    rep.B_in_K = rep.B_residual <= span_tol
    return rep


# ---------------------------------------------------------------------------
# brackets and involutivity


def lie_bracket_fd(X: VectorField, Y: VectorField, p, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """[X, Y] = DY . X - DX . Y with central directional differences."""
    p = np.asarray(p, dtype=float)
    x, y = X(p), Y(p)
    dY_x = (Y(p + h * x) - Y(p - h * x)) / (2 * h)
    dX_y = (X(p + h * y) - X(p - h * y)) / (2 * h)
    return dY_x - dX_y


def is_involutive_point(
    D: Distribution, p, h: float = DEFAULT_FD_STEP, tol: float = TOL_FD_SPAN
) -> Tuple[bool, float]:
    """All pairwise brackets in span(D_p) up to the least-squares residual."""
    span = D.at(p)
    worst = 0.0
    for X, Y in itertools.combinations(D.generators, 2):
        br = lie_bracket_fd(X, Y, p, h)
        worst = max(worst, projection_residual(br, span))
    return worst <= tol, worst


# ---------------------------------------------------------------------------
# equivalence probe


@dataclass
class RelationGraph:
    nodes: List[str]
    edges: List[Tuple[str, str]]
    transitivity_failures: List[Tuple[str, str, str]]

    def related(self, a: str, b: str) -> bool:
        return a == b or (a, b) in self.edges or (b, a) in self.edges

    def to_json(self) -> dict:
        adj = {n: sorted(b for a, b in self.edges if a == n) + sorted(a for a, b in self.edges if b == n) for n in self.nodes}
        return {
            "nodes": self.nodes,
            "adjacency": {k: sorted(v) for k, v in adj.items()},
            "transitivity_failures": [list(t) for t in self.transitivity_failures],
        }


def equivalence_probe(
    Ds: Sequence[Distribution], system: PremultisymplecticSystem, points, tol: float = TOL_ALG
) -> RelationGraph:
    """Pairwise kernel-relatedness and the triples violating transitivity.

    A failure (a, b, c) means a ~ b and b ~ c but not a ~ c, with a listed
    before c in the input order.
    """
    labels = [D.label or f"D{i}" for i, D in enumerate(Ds)]
    n = len(Ds)
    rel = np.eye(n, dtype=bool)
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        ok, _ = kernel_related(Ds[i], Ds[j], system, points, tol)
        rel[i, j] = rel[j, i] = ok
        if ok:
            edges.append((labels[i], labels[j]))
    failures = []
    for i, k in itertools.combinations(range(n), 2):
        if rel[i, k]:
            continue
        for j in range(n):
            if j not in (i, k) and rel[i, j] and rel[j, k]:
                failures.append((labels[i], labels[j], labels[k]))
    return RelationGraph(labels, edges, failures)
