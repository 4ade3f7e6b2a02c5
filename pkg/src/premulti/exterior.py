"""Sparse exterior algebra at a point, and form fields on a fibered chart.

A degree-k form on an N-dimensional tangent space is stored as a map from
strictly increasing index tuples to real coefficients.  Vectors are plain
dense numpy arrays of length N.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

IndexSet = Tuple[int, ...]

DEFAULT_FD_STEP = 1e-5
DEFAULT_FD_TOL = 1e-6


def _merge_sign(a: IndexSet, b: IndexSet) -> int:
    """Sign of the shuffle that sorts the concatenation a + b (a, b disjoint)."""
    inversions = 0
    for i in a:
        for j in b:
            if i > j:
                inversions += 1
    return -1 if inversions % 2 else 1


def _sort_sign(idx: Sequence[int]) -> Tuple[int, Optional[IndexSet]]:
    """Sort an index list, returning (sign, sorted) or (0, None) on repeats."""
    if len(set(idx)) != len(idx):
        return 0, None
    inversions = sum(1 for i, j in itertools.combinations(range(len(idx)), 2) if idx[i] > idx[j])
    return (-1 if inversions % 2 else 1), tuple(sorted(idx))


class FormValue:
    """Degree-k alternating form on R^N with sparse coefficients.

    Coefficients that are exactly zero are dropped on construction, so two
    forms compare equal iff their canonical maps are equal.
    """

    __slots__ = ("degree", "dim", "_coeffs")
    __array_ufunc__ = None  # numpy scalars defer to __rmul__

    def __init__(self, degree: int, dim: int, coeffs: Optional[Mapping[Sequence[int], float]] = None):
        if degree < 0 or dim < 0:
            raise ValueError("degree and dim must be non-negative")
        self.degree = int(degree)
        self.dim = int(dim)
        acc: Dict[IndexSet, float] = {}
        for key, c in (coeffs or {}).items():
            key = tuple(int(i) for i in key)
            if len(key) != degree:
                raise ValueError(f"index set {key} does not have degree {degree}")
            if any(i < 0 or i >= dim for i in key):
                raise ValueError(f"index set {key} out of range for dim {dim}")
            sign, skey = _sort_sign(key)
            if sign == 0:
                continue
            acc[skey] = acc.get(skey, 0.0) + sign * float(c)
        self._coeffs = {k: v for k, v in acc.items() if v != 0.0}

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, degree: int, dim: int) -> "FormValue":
        return cls(degree, dim)

    @classmethod
    def basis(cls, idx: Sequence[int], dim: int, c: float = 1.0) -> "FormValue":
        """c * dx^{idx[0]} ^ ... ^ dx^{idx[-1]} (idx in any order)."""
        return cls(len(idx), dim, {tuple(idx): c})

    @classmethod
    def scalar(cls, c: float, dim: int) -> "FormValue":
        return cls(0, dim, {(): c})

    @classmethod
    def _raw(cls, degree: int, dim: int, coeffs: Dict[IndexSet, float]) -> "FormValue":
        # trusted constructor: keys are already sorted and of the right degree
        obj = cls.__new__(cls)
        obj.degree = degree
        obj.dim = dim
        obj._coeffs = {k: v for k, v in coeffs.items() if v != 0.0}
        return obj

    # mapping-like access --------------------------------------------------

    @property
    def coeffs(self) -> Mapping[IndexSet, float]:
        return dict(self._coeffs)

    def items(self):
        return self._coeffs.items()

    def __getitem__(self, idx: Sequence[int]) -> float:
        sign, key = _sort_sign(tuple(idx))
        if sign == 0:
            return 0.0
        return sign * self._coeffs.get(key, 0.0)

    def __len__(self) -> int:
        return len(self._coeffs)

    def is_zero(self) -> bool:
        return not self._coeffs

    def norm(self) -> float:
        """Max-norm of the coefficients."""
        return max((abs(c) for c in self._coeffs.values()), default=0.0)

    # arithmetic -----------------------------------------------------------

    def _check_compatible(self, other: "FormValue") -> None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.degree != other.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other: "FormValue") -> "FormValue":
        self._check_compatible(other)
        acc = dict(self._coeffs)
        for k, v in other._coeffs.items():
            acc[k] = acc.get(k, 0.0) + v
        return FormValue._raw(self.degree, self.dim, acc)

    def __neg__(self) -> "FormValue":
        return FormValue._raw(self.degree, self.dim, {k: -v for k, v in self._coeffs.items()})

    def __sub__(self, other: "FormValue") -> "FormValue":
        return self + (-other)

    def __mul__(self, s: float) -> "FormValue":
        s = float(s)
        return FormValue._raw(self.degree, self.dim, {k: s * v for k, v in self._coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "FormValue") -> "FormValue":
        return wedge(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormValue):
            return NotImplemented
        return self.degree == other.degree and self.dim == other.dim and self._coeffs == other._coeffs

    __hash__ = None  # type: ignore[assignment]

    def allclose(self, other: "FormValue", tol: float = 1e-12) -> bool:
        return (self - other).norm() <= tol

    def __repr__(self) -> str:
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in sorted(self._coeffs.items()))
        return f"FormValue(degree={self.degree}, dim={self.dim}, {{{terms}}})"

    # evaluation -----------------------------------------------------------

    def evaluate(self, vectors: Sequence[np.ndarray]) -> float:
        """omega(v_1, ..., v_k)."""
        if len(vectors) != self.degree:
            raise ValueError("number of vectors must equal the degree")
        if self.degree == 0:
            return self._coeffs.get((), 0.0)
        V = np.asarray(vectors, dtype=float)
        total = 0.0
        for idx, c in self._coeffs.items():
            total += c * np.linalg.det(V[:, list(idx)])
        return float(total)

    def to_dense(self) -> np.ndarray:
        """Fully antisymmetric coefficient array T with omega = sum_I c_I dx^I,
        T[i_1..i_k] = omega(e_{i_1}, ..., e_{i_k})."""
        T = np.zeros((self.dim,) * self.degree)
        for idx, c in self._coeffs.items():
            for perm in itertools.permutations(range(self.degree)):
                sign, _ = _sort_sign(perm)
                T[tuple(idx[p] for p in perm)] = sign * c
        return T

    # serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "dim": self.dim,
            "coeffs": [{"idx": list(k), "c": v} for k, v in sorted(self._coeffs.items())],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "FormValue":
        return cls(data["degree"], data["dim"], {tuple(t["idx"]): t["c"] for t in data["coeffs"]})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


class MultivectorValue(FormValue):
    """Degree-k multivector, stored exactly like a form.

    Only used as a container; contractions go through the decomposable
    form (an ordered list of vectors) which is what the kernel tests need.
    """

    @classmethod
    def from_vectors(cls, vectors: Sequence[np.ndarray]) -> "MultivectorValue":
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        k, N = V.shape
        coeffs = {}
        for idx in itertools.combinations(range(N), k):
            c = np.linalg.det(V[:, list(idx)]) if k else 1.0
            if c != 0.0:
                coeffs[idx] = c
        return cls(k, N, coeffs)


# ---------------------------------------------------------------------------
# algebraic operations


def wedge(a: FormValue, b: FormValue) -> FormValue:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    acc: Dict[IndexSet, float] = {}
    for I, ca in a.items():
        sI = set(I)
        for J, cb in b.items():
            if sI.intersection(J):
                continue
            key = tuple(sorted(I + J))
            acc[key] = acc.get(key, 0.0) + _merge_sign(I, J) * ca * cb
    return FormValue._raw(a.degree + b.degree, a.dim, acc)


def wedge_all(forms: Iterable[FormValue], dim: int) -> FormValue:
    out = FormValue.scalar(1.0, dim)
    for f in forms:
        out = wedge(out, f)
    return out


def one_form(components: Sequence[float]) -> FormValue:
    comps = np.asarray(components, dtype=float)
    return FormValue(1, len(comps), {(i,): c for i, c in enumerate(comps) if c != 0.0})


def interior(v: np.ndarray, omega: FormValue) -> FormValue:
    """i(v) omega: contraction into the first slot."""
    v = np.asarray(v, dtype=float)
    if v.shape != (omega.dim,):
        raise ValueError(f"vector of length {v.shape} does not match dim {omega.dim}")
    if omega.degree < 1:
        raise ValueError("cannot contract a 0-form")
    acc: Dict[IndexSet, float] = {}
    for I, c in omega.items():
        for s, i in enumerate(I):
            vi = v[i]
            if vi == 0.0:
                continue
            key = I[:s] + I[s + 1 :]
            term = c * vi
            acc[key] = acc.get(key, 0.0) + (-term if s % 2 else term)
    return FormValue._raw(omega.degree - 1, omega.dim, acc)


def interior_decomposable(vectors: Sequence[np.ndarray], omega: FormValue) -> FormValue:
    """i(v_1 ^ ... ^ v_k) omega := i(v_1) o i(v_2) o ... o i(v_k) omega.

    The rightmost vector is contracted first.  Computed through k x k minors
    so that alternation is exact: a repeated vector gives exactly zero.
    """
    vs = [np.asarray(v, dtype=float) for v in vectors]
    k = len(vs)
    if k == 0:
        return omega
    if k > omega.degree:
        raise ValueError(f"cannot contract {k} vectors into a {omega.degree}-form")
    for v in vs:
        if v.shape != (omega.dim,):
            raise ValueError("vector length does not match form dimension")
    V = np.vstack(vs)
    # i(v_1)...i(v_k) e^L = e^L(v_k, ..., v_1) = (-1)^{k(k-1)/2} det[v_a(L_b)]
    rev = -1.0 if (k * (k - 1) // 2) % 2 else 1.0
    keys, cols, scales = [], [], []
    for I, c in omega.items():
        for pos in itertools.combinations(range(len(I)), k):
            L = [I[p] for p in pos]
            rest = tuple(I[p] for p in range(len(I)) if p not in pos)
            # e^I = eps * e^L ^ e^rest, eps = (-1)^{sum(pos) - k(k-1)/2}
            eps = -1.0 if (sum(pos) - k * (k - 1) // 2) % 2 else 1.0
            keys.append(rest)
            cols.append(L)
            scales.append(c * eps * rev)
    if not keys:
        return FormValue.zero(omega.degree - k, omega.dim)
    mats = V[:, np.asarray(cols)].transpose(1, 0, 2)  # (terms, k, k)
    dets = np.linalg.det(mats)
    acc: Dict[IndexSet, float] = {}
    for key, s, d in zip(keys, scales, dets):
        if d != 0.0:
            acc[key] = acc.get(key, 0.0) + s * d
    return FormValue._raw(omega.degree - k, omega.dim, acc)


def pullback_linear(J: np.ndarray, omega: FormValue) -> FormValue:
    """Pull omega back along the linear map u -> J u, J of shape (N, N').

    (J^* omega)(u_1..u_k) = omega(J u_1, ..., J u_k).  Each covector dx^i
    pulls back to row i of J; the sparse wedge of those rows is the minor
    expansion over index sets.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != omega.dim:
        raise ValueError(f"matrix of shape {J.shape} cannot act on forms of dim {omega.dim}")
    Np = J.shape[1]
    k = omega.degree
    if k == 0:
        return FormValue._raw(0, Np, dict(omega.items()))
    if omega.is_zero():
        return FormValue._raw(k, Np, {})
    idx = np.array([I for I, _ in omega.items()], dtype=np.int64)
    vals = np.array([c for _, c in omega.items()], dtype=float)
    # rows of J in compressed form
    nz_r, nz_c = np.nonzero(J)
    nz_v = J[nz_r, nz_c]
    rowlen = np.bincount(nz_r, minlength=J.shape[0])
    indptr = np.concatenate([[0], np.cumsum(rowlen)])
    src = np.arange(len(vals))
    keys = np.empty((len(vals), 0), dtype=np.int64)
    for s in range(k):
        rsel = idx[src, s]
        counts = rowlen[rsel]
        rep = np.repeat(np.arange(len(src)), counts)
        offs = np.arange(len(rep)) - np.repeat(np.cumsum(counts) - counts, counts)
        pos = indptr[rsel][rep] + offs
        cols = nz_c[pos]
        keep = np.all(keys[rep] != cols[:, None], axis=1)
        rep, pos, cols = rep[keep], pos[keep], cols[keep]
        keys = np.concatenate([keys[rep], cols[:, None]], axis=1)
        vals = vals[rep] * nz_v[pos]
        src = src[rep]
    if len(vals) == 0:
        return FormValue._raw(k, Np, {})
    # parity of the sorting permutation
    inv = np.zeros(len(vals), dtype=np.int64)
    for a, b in itertools.combinations(range(k), 2):
        inv += keys[:, a] > keys[:, b]
    vals = np.where(inv % 2, -vals, vals)
    keys = np.sort(keys, axis=1)
    if float(Np) ** k < 2.0**62:
        code = np.zeros(len(vals), dtype=np.int64)
        for a in range(k):
            code = code * Np + keys[:, a]
        _, first, where = np.unique(code, return_index=True, return_inverse=True)
        uniq = keys[first]
    else:
        uniq, where = np.unique(keys, axis=0, return_inverse=True)
    sums = np.bincount(where.ravel(), weights=vals, minlength=len(uniq))
    return FormValue._raw(
        k, Np, {tuple(int(j) for j in key): float(v) for key, v in zip(uniq.tolist(), sums.tolist()) if v != 0.0}
    )


def derivation_linear(A: np.ndarray, omega: FormValue) -> FormValue:
    """d/dt (I + tA)^* omega at t = 0, i.e. sum over slots of omega(.., A u_s, ..)."""
    A = np.asarray(A, dtype=float)
    N = omega.dim
    if A.shape != (N, N):
        raise ValueError("derivation matrix must be square of the form dimension")
    acc: Dict[IndexSet, float] = {}
    for I, c in omega.items():
        for s, i in enumerate(I):
            for j in np.flatnonzero(A[i]):
                new = list(I)
                new[s] = int(j)
                sign, key = _sort_sign(new)
                if sign:
                    acc[key] = acc.get(key, 0.0) + sign * c * A[i, j]
    return FormValue._raw(omega.degree, N, acc)


# ---------------------------------------------------------------------------
# charts and fields


@dataclass(frozen=True)
class JetChartMeta:
    """First-jet structure: velocity coordinate index -> (field index, base index)."""

    velocities: Mapping[int, Tuple[int, int]]

    def __post_init__(self):
        pairs = list(self.velocities.values())
        if len(set(pairs)) != len(pairs):
            raise ValueError("jet pairing must be injective")

    @property
    def field_indices(self) -> Tuple[int, ...]:
        return tuple(sorted({a for a, _ in self.velocities.values()}))

    def velocity_index(self, field_idx: int, base_idx: int) -> int:
        for v, pair in self.velocities.items():
            if pair == (field_idx, base_idx):
                return v
        raise KeyError((field_idx, base_idx))


@dataclass(frozen=True)
class FiberedChart:
    """Adapted chart (x^0..x^{m-1}; y^0..y^{n-1}); base coordinates come first."""

    m: int
    n: int
    names: Tuple[str, ...] = ()
    jet: Optional[JetChartMeta] = None

    def __post_init__(self):
        if self.m < 1 or self.n < 0:
            raise ValueError("need m >= 1 and n >= 0")
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"x{i}" for i in range(self.m)) + tuple(f"y{j}" for j in range(self.n))
            )
        if len(self.names) != self.m + self.n:
            raise ValueError(f"expected {self.m + self.n} coordinate names, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("coordinate names must be distinct")

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def base_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.m))

    @property
    def fiber_indices(self) -> Tuple[int, ...]:
        return tuple(range(self.m, self.m + self.n))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def coord(self, name: str) -> np.ndarray:
        """Coordinate vector field d/d(name) as a constant vector."""
        e = np.zeros(self.dim)
        e[self.index(name)] = 1.0
        return e

    def dx(self, *names: str) -> FormValue:
        return FormValue.basis([self.index(n) for n in names], self.dim)

    def volume(self) -> FormValue:
        """d^m x."""
        return FormValue.basis(list(range(self.m)), self.dim)

    def volume_minus(self, mu: int) -> FormValue:
        """d^{m-1} x_mu = i(d/dx^mu) d^m x."""
        return interior(np.eye(self.dim)[mu], self.volume())

    def is_vertical(self, v: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(np.asarray(v)[: self.m]), initial=0.0) <= tol)


@dataclass(frozen=True)
class FormField:
    """Differential form on a chart, given pointwise by an evaluator."""

    chart: FiberedChart
    degree: int
    eval: Callable[[np.ndarray], FormValue]
    d_eval: Optional[Callable[[np.ndarray], FormValue]] = None

    def __call__(self, p) -> FormValue:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.chart.dim,):
            raise ValueError(f"point of shape {p.shape} does not match chart dim {self.chart.dim}")
        w = self.eval(p)
        if w.degree != self.degree or w.dim != self.chart.dim:
            raise ValueError("form evaluator returned an inconsistent value")
        return w

    @classmethod
    def constant(cls, chart: FiberedChart, omega: FormValue) -> "FormField":
        zero = FormValue.zero(omega.degree + 1, chart.dim)
        return cls(chart, omega.degree, lambda p: omega, lambda p: zero)


@dataclass(frozen=True)
class VectorField:
    chart: FiberedChart
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, p) -> np.ndarray:
        v = np.asarray(self.eval(np.asarray(p, dtype=float)), dtype=float)
        if v.shape != (self.chart.dim,):
            raise ValueError(f"vector field returned shape {v.shape}, expected ({self.chart.dim},)")
        return v

    @classmethod
    def constant(cls, chart: FiberedChart, v, label: str = "") -> "VectorField":
        v = np.asarray(v, dtype=float).copy()
        v.setflags(write=False)
        return cls(chart, lambda p: v, label)

    @classmethod
    def coordinate(cls, chart: FiberedChart, name: str) -> "VectorField":
        return cls.constant(chart, chart.coord(name), f"d/d{name}")


# ---------------------------------------------------------------------------
# finite-difference calculus


def exterior_derivative_fd(F: FormField, p, h: float = DEFAULT_FD_STEP) -> FormValue:
    """Central-difference dF at p: sum_j d_j c_I dx^j ^ dx^I."""
    if h <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p, dtype=float)
    N = F.chart.dim
    acc: Dict[IndexSet, float] = {}
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        diff = (F(p + e) - F(p - e)) * (1.0 / (2.0 * h))
        for I, c in diff.items():
            if j in I:
                continue
            sign, key = _sort_sign((j,) + I)
            acc[key] = acc.get(key, 0.0) + sign * c
    return FormValue._raw(F.degree + 1, N, acc)


def directional_derivative_fd(F: Callable[[np.ndarray], FormValue], p, v, h: float = DEFAULT_FD_STEP) -> FormValue:
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    return (F(p + h * v) - F(p - h * v)) * (1.0 / (2.0 * h))


def jacobian_fd(f: Callable[[np.ndarray], np.ndarray], x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, columns indexed by the input coordinates."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e), dtype=float) - np.asarray(f(x - e), dtype=float)) / (2.0 * h))
    return np.column_stack(cols)


def lie_derivative_form_fd(Y: VectorField, F: FormField, p, h: float = DEFAULT_FD_STEP) -> FormValue:
    """L_Y F at p in coordinates: Y(F_I) dx^I + F(.., DY u, ..)."""
    p = np.asarray(p, dtype=float)
    transport = directional_derivative_fd(F, p, Y(p), h)
    return transport + derivation_linear(jacobian_fd(Y, p, h), F(p))


def contact_substitute(omega: FormValue, jet: Optional[JetChartMeta], point) -> FormValue:
    """Replace each field covector du^a by sum_i u^a_i dx^i.

    The result is the class of omega modulo the ideal generated by the
    contact forms du^a - u^a_i dx^i; it vanishes iff omega lies in that ideal.
    """
    if jet is None:
        raise ValueError("chart has no jet structure")
    point = np.asarray(point, dtype=float)
    J = np.eye(omega.dim)
    for a in jet.field_indices:
        J[a, a] = 0.0
    for vel, (a, i) in jet.velocities.items():
        J[a, i] += point[vel]
    return pullback_linear(J, omega)


def contact_forms(jet: JetChartMeta, point, dim: int) -> Dict[int, FormValue]:
    """theta^a = du^a - u^a_i dx^i at the given point, keyed by field index."""
    point = np.asarray(point, dtype=float)
    out = {}
    for a in jet.field_indices:
        comps = np.zeros(dim)
        comps[a] = 1.0
        for vel, (b, i) in jet.velocities.items():
            if b == a:
                comps[i] -= point[vel]
        out[a] = one_form(comps)
    return out
