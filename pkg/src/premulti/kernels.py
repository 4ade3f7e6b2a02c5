"""Pointwise linear algebra of the flat map v -> i(v) Omega_p."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exterior import FiberedChart, FormValue, IndexSet, interior, interior_decomposable

TOL_RANK = 1e-9
TOL_ALG = 1e-8


@dataclass(frozen=True)
class FlatMatrix:
    """Matrix of the flat map; rows are degree-(k-1) index sets, columns are
    coordinate directions."""

    rows: Tuple[IndexSet, ...]
    matrix: np.ndarray
    degree: int

    def apply(self, v: np.ndarray) -> FormValue:
        """i(v) Omega_p as a sparse form."""
        vals = self.matrix @ np.asarray(v, dtype=float)
        return FormValue(self.degree, self.matrix.shape[1], {r: c for r, c in zip(self.rows, vals)})


def flat_matrix(omega: FormValue) -> FlatMatrix:
    if omega.degree < 1:
        raise ValueError("flat map needs a form of degree >= 1")
    N = omega.dim
    row_of = {}
    entries = []
    for I, c in omega.items():
        for s, i in enumerate(I):
            key = I[:s] + I[s + 1 :]
            r = row_of.setdefault(key, len(row_of))
            entries.append((r, i, -c if s % 2 else c))
    M = np.zeros((len(row_of), N))
    for r, j, c in entries:
        M[r, j] += c
    rows = tuple(sorted(row_of, key=row_of.get))
    return FlatMatrix(rows, M, omega.degree - 1)


def nullspace(M: np.ndarray, tol: float = TOL_RANK) -> np.ndarray:
    """Orthonormal nullspace basis (as rows).

    Rank cut: singular values <= tol * max(largest singular value, 1).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    ncols = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    cut = tol * max(s[0] if s.size else 0.0, 1.0)
    rank = int(np.sum(s > cut))
    return vt[rank:]


def matrix_rank(M: np.ndarray, tol: float = TOL_RANK) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(s[0], 1.0)))


def orth(vectors, tol: float = TOL_RANK) -> np.ndarray:
    """Orthonormal basis (rows) of the span of the given row vectors."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        return V.reshape(0, V.shape[-1] if V.ndim == 2 else 0)
    u, s, vt = np.linalg.svd(V, full_matrices=False)
    rank = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
    return vt[:rank]


def projection_residual(vectors, basis) -> float:
    """Max-norm distance of the given vectors from span(basis)."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        return 0.0
    Q = orth(basis) if np.size(basis) else np.zeros((0, V.shape[1]))
    R = V - (V @ Q.T) @ Q
    return float(np.max(np.abs(R), initial=0.0))


def span_distance(a, b) -> float:
    """Mutual projection residual; 0 iff span(a) == span(b)."""
    return max(projection_residual(a, b), projection_residual(b, a))


def ker1(omega: FormValue, tol: float = TOL_RANK) -> List[np.ndarray]:
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    fm = flat_matrix(omega)
    return list(nullspace(fm.matrix, tol))


@dataclass
class KernelReport:
    ker1_basis: List[np.ndarray]
    K_basis: List[np.ndarray]
    max_residual: float

    @property
    def ker1_dim(self) -> int:
        return len(self.ker1_basis)

    @property
    def K_dim(self) -> int:
        return len(self.K_basis)

    def to_json(self) -> dict:
        return {
            "ker1_dim": self.ker1_dim,
            "K_dim": self.K_dim,
            "ker1_basis": [list(map(float, v)) for v in self.ker1_basis],
            "K_basis": [list(map(float, v)) for v in self.K_basis],
            "max_residual": self.max_residual,
        }


def kernel_distribution_point(omega: FormValue, chart: FiberedChart, tol: float = TOL_RANK) -> KernelReport:
    """ker1 and its vertical part K = ker1 cap V at a point."""
    if omega.dim != chart.dim:
        raise ValueError("form and chart dimensions differ")
    fm = flat_matrix(omega)
    k1 = list(nullspace(fm.matrix, tol))
    m = chart.m
    vert = nullspace(fm.matrix[:, m:], tol)
    K = []
    for w in vert:
        v = np.zeros(chart.dim)
        v[m:] = w
        K.append(v)
    residual = max((interior(b, omega).norm() for b in k1 + K), default=0.0)
    return KernelReport(k1, K, residual)


def is_1_nondegenerate(omega: FormValue, tol: float = TOL_RANK) -> Tuple[bool, Optional[np.ndarray]]:
    basis = ker1(omega, tol)
    if not basis:
        return True, None
    return False, basis[0]


def kerm_contains(vectors: Sequence[np.ndarray], omega: FormValue, tol: float = TOL_ALG) -> Tuple[bool, float]:
    """Whether v_1 ^ ... ^ v_k annihilates omega; returns (verdict, residual).

    A numerically dependent list has zero wedge and is reported with
    residual exactly 0.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if matrix_rank(V, TOL_RANK) < len(vectors):
        return True, 0.0
    res = interior_decomposable(list(V), omega).norm()
    return res <= tol, res


@dataclass
class VariationalReport:
    variational: bool
    witness: Optional[Tuple[int, int, int]]
    residual: float

    def to_json(self) -> dict:
        return {
            "variational": self.variational,
            "witness": list(self.witness) if self.witness else None,
            "residual": self.residual,
        }


def is_variational_point(omega: FormValue, chart: FiberedChart, tol: float = TOL_ALG) -> VariationalReport:
    """Scan all vertical coordinate triples for i(Z1)i(Z2)i(Z3) omega != 0.

    By multilinearity, coordinate triples suffice.  For a basis triple the
    contraction picks out exactly the terms whose index set contains all
    three, with distinct remaining index sets, so the residual of a triple
    is the largest such coefficient.
    """
    m = chart.m
    worst = {}
    for I, c in omega.items():
        vert = [i for i in I if i >= m]
        if len(vert) < 3:
            continue
        for trip in itertools.combinations(vert, 3):
            worst[trip] = max(worst.get(trip, 0.0), abs(c))
    failing = sorted(t for t, r in worst.items() if r > tol)
    if not failing:
        return VariationalReport(True, None, max(worst.values(), default=0.0))
    return VariationalReport(False, failing[0], worst[failing[0]])


def is_variational_bruteforce(omega: FormValue, chart: FiberedChart, tol: float = TOL_ALG) -> VariationalReport:
    """Literal C(n,3) contraction scan; used to cross-check the term scan."""
    eye = np.eye(chart.dim)
    for trip in itertools.combinations(chart.fiber_indices, 3):
        r = interior_decomposable([eye[i] for i in trip], omega).norm() if omega.degree >= 3 else 0.0
        if r > tol:
            return VariationalReport(False, trip, r)
    return VariationalReport(True, None, 0.0)


def expanded_extension_space(
    D_span: Sequence[np.ndarray], omega: FormValue, chart: FiberedChart, tol: float = TOL_RANK
) -> List[np.ndarray]:
    """Vertical v with i(v ^ w_L) omega = 0 for every (m-1)-subset L of D_span.

    i(v ^ w_L) omega = i(v) beta_L with beta_L = i(w_L) omega a 2-form, so
    the condition is the stacked flat systems of the beta_L restricted to
    vertical columns.
    """
    m = chart.m
    D = np.atleast_2d(np.asarray(D_span, dtype=float))
    if D.shape[1] != chart.dim:
        raise ValueError("distribution vectors do not match chart dimension")
    if matrix_rank(D[:, :m], TOL_RANK) < m:
        raise ValueError("distribution is not transverse")
    blocks = []
    for L in itertools.combinations(range(D.shape[0]), m - 1):
        beta = interior_decomposable([D[i] for i in L], omega)
        if beta.is_zero():
            continue
        blocks.append(flat_matrix(beta).matrix[:, m:])
    if not blocks:
        return [np.eye(chart.dim)[j] for j in chart.fiber_indices]
    ns = nullspace(np.vstack(blocks), tol)
    out = []
    for w in ns:
        v = np.zeros(chart.dim)
        v[m:] = w
        out.append(v)
    return out
