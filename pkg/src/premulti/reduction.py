"""Quotients by kernel (and weak kernel) directions in adapted coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .exterior import (
    DEFAULT_FD_STEP,
    FiberedChart,
    FormField,
    FormValue,
    JetChartMeta,
    VectorField,
    directional_derivative_fd,
    exterior_derivative_fd,
    interior,
    pullback_linear,
)
from .kernels import TOL_ALG, TOL_RANK, is_1_nondegenerate, kernel_distribution_point
from .sections import Section, contact_pullback_residual, weak_kernel_test
from .solutions import Distribution, PremultisymplecticSystem, is_involutive_point

TOL_FD = 1e-6


class QuotientError(ValueError):
    """A requested quotient fails one of its preconditions."""

    def __init__(self, message: str, witness: Optional[dict] = None):
        super().__init__(message)
        self.witness = witness or {}


@dataclass(frozen=True)
class QuotientChart:
    """Coordinate-forgetting map xi and a slice beta through fixed values."""

    parent: FiberedChart
    dropped: tuple
    beta_values: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        dropped = tuple(sorted(set(int(i) for i in self.dropped)))
        for i in dropped:
            if i < self.parent.m or i >= self.parent.dim:
                raise ValueError(f"index {i} is not a fiber coordinate")
        object.__setattr__(self, "dropped", dropped)
        vals = {int(k): float(v) for k, v in dict(self.beta_values).items()}
        if set(vals) - set(dropped):
            raise ValueError("beta assigns values to coordinates that are not dropped")
        object.__setattr__(self, "beta_values", vals)

    @property
    def kept(self) -> tuple:
        return tuple(i for i in range(self.parent.dim) if i not in self.dropped)

    @property
    def chart(self) -> FiberedChart:
        kept = self.kept
        pos = {old: new for new, old in enumerate(kept)}
        jet = None
        if self.parent.jet is not None:
            vel = {
                pos[v]: (pos[a], i)
                for v, (a, i) in self.parent.jet.velocities.items()
                if v in pos and a in pos
            }
            jet = JetChartMeta(vel) if vel else None
        return FiberedChart(
            self.parent.m, self.parent.n - len(self.dropped), tuple(self.parent.names[i] for i in kept), jet
        )

    def with_beta(self, values: Mapping[int, float]) -> "QuotientChart":
        return QuotientChart(self.parent, self.dropped, values)

    def xi(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float)[list(self.kept)]

    def beta(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = np.zeros(self.parent.dim)
        p[list(self.kept)] = q
        for i in self.dropped:
            p[i] = self.beta_values.get(i, 0.0)
        return p

    def beta_jacobian(self) -> np.ndarray:
        """Slice injection, shape (N, N')."""
        J = np.zeros((self.parent.dim, len(self.kept)))
        for new, old in enumerate(self.kept):
            J[old, new] = 1.0
        return J

    def xi_jacobian(self) -> np.ndarray:
        return self.beta_jacobian().T


@dataclass
class ReducedSystem:
    quotient: QuotientChart
    system: PremultisymplecticSystem
    certificate: Dict[str, float] = field(default_factory=dict)
    weak: bool = False

    def to_json(self) -> dict:
        return {
            "reduced_chart": list(self.quotient.chart.names),
            "dropped": [self.quotient.parent.names[i] for i in self.quotient.dropped],
            "beta": {self.quotient.parent.names[i]: v for i, v in sorted(self.quotient.beta_values.items())},
            "weak": self.weak,
            "certificate": dict(sorted(self.certificate.items())),
        }


def _slice_form(system: PremultisymplecticSystem, quotient: QuotientChart, name: str) -> PremultisymplecticSystem:
    Jb = quotient.beta_jacobian()
    chart = quotient.chart

    def ev(q):
        return pullback_linear(Jb, system.at(quotient.beta(q)))

    return PremultisymplecticSystem(chart, FormField(chart, system.omega.degree, ev), name)


def _offset_quotient(quotient: QuotientChart, rng: np.random.Generator) -> QuotientChart:
    vals = {i: quotient.beta_values.get(i, 0.0) + float(rng.uniform(0.5, 1.5)) for i in quotient.dropped}
    return quotient.with_beta(vals)


def build_quotient(
    system: PremultisymplecticSystem,
    dropped: Sequence[int],
    points,
    h: float = DEFAULT_FD_STEP,
    tol: float = TOL_FD,
    beta: Optional[Mapping[int, float]] = None,
    seed: int = 0,
) -> ReducedSystem:
    """Omega_K = beta^* Omega on the slice through the dropped coordinates.

    Preconditions (checked at every point, else QuotientError with witness):
    each dropped direction is in ker1 Omega, and every coefficient of Omega
    is constant along it.  The certificate also compares two slices and
    checks xi^* Omega_K = Omega at the parent points.
    """
    chart = system.chart
    quotient = QuotientChart(chart, tuple(dropped), beta or {})
    points = [np.asarray(p, dtype=float) for p in points]
    eye = np.eye(chart.dim)
    ker_res = var_res = 0.0
    for p in points:
        omega = system.at(p)
        for i in quotient.dropped:
            r = interior(eye[i], omega).norm()
            ker_res = max(ker_res, r)
            if r > tol:
                raise QuotientError(
                    f"direction d/d{chart.names[i]} is not in the kernel", {"coordinate": chart.names[i], "residual": r}
                )
            v = directional_derivative_fd(system.omega, p, eye[i], h).norm()
            var_res = max(var_res, v)
            if v > tol:
                raise QuotientError(
                    f"Omega is not constant along d/d{chart.names[i]}", {"coordinate": chart.names[i], "residual": v}
                )
    reduced = _slice_form(system, quotient, f"{system.name}/K")
    other = _slice_form(system, _offset_quotient(quotient, np.random.default_rng(seed)), "")
    Jxi = quotient.xi_jacobian()
    slice_res = pull_res = 0.0
    for p in points:
        q = quotient.xi(p)
        slice_res = max(slice_res, (reduced.at(q) - other.at(q)).norm())
        pull_res = max(pull_res, (pullback_linear(Jxi, reduced.at(q)) - system.at(p)).norm())
    if slice_res > tol:
        raise QuotientError("reduced form depends on the slice", {"residual": slice_res})
    cert = {
        "kernel_residual": ker_res,
        "fiber_variation": var_res,
        "slice_dependence": slice_res,
        "pullback_residual": pull_res,
    }
    return ReducedSystem(quotient, reduced, cert)


@dataclass
class ReducedCheck:
    closed: bool
    nondegenerate: bool
    vertical_nondegenerate: bool
    d_residual: float
    ker1_dim: int
    K_dim: int

    @property
    def passed(self) -> bool:
        return self.closed and self.nondegenerate

    def to_json(self) -> dict:
        return {
            "closed": self.closed,
            "nondegenerate": self.nondegenerate,
            "vertical_nondegenerate": self.vertical_nondegenerate,
            "d_residual": self.d_residual,
            "ker1_dim": self.ker1_dim,
            "K_dim": self.K_dim,
        }


def check_reduced_multisymplectic(
    reduced: ReducedSystem, points, h: float = DEFAULT_FD_STEP, tol: float = TOL_FD
) -> ReducedCheck:
    """dOmega_K = 0 and triviality of ker1 Omega_K (and of its vertical part).

    points are given on the reduced chart.
    """
    sysK = reduced.system
    d_res = 0.0
    k1 = kd = 0
    for q in points:
        d_res = max(d_res, exterior_derivative_fd(sysK.omega, q, h).norm())
        rep = kernel_distribution_point(sysK.at(q), sysK.chart)
        k1 = max(k1, rep.ker1_dim)
        kd = max(kd, rep.K_dim)
    return ReducedCheck(d_res <= tol, k1 == 0, kd == 0, d_res, k1, kd)


def project_section(psi: Section, quotient: QuotientChart) -> Section:
    """xi o psi."""
    Jxi = quotient.xi_jacobian()
    jac = None
    if psi.jacobian is not None:
        jac = lambda x: Jxi @ psi.tangent(x)
    return Section(quotient.chart, lambda x: quotient.xi(psi(x)), jac, f"xi({psi.label})")


def recover_section(phi: Section, quotient: QuotientChart) -> Section:
    """beta o phi."""
    Jb = quotient.beta_jacobian()
    jac = None
    if phi.jacobian is not None:
        jac = lambda x: Jb @ phi.tangent(x)
    return Section(quotient.parent, lambda x: quotient.beta(phi(x)), jac, f"beta({phi.label})")


def weak_quotient(
    system: PremultisymplecticSystem,
    dropped: Sequence[int],
    points,
    beta: Optional[Mapping[int, float]] = None,
    h: float = DEFAULT_FD_STEP,
    tol: float = TOL_ALG,
    seed: int = 0,
) -> ReducedSystem:
    """Omega_beta = beta^* Omega for weak kernel directions.

    No slice invariance is required; its magnitude is recorded in the
    certificate as slice_dependence.
    """
    chart = system.chart
    quotient = QuotientChart(chart, tuple(dropped), beta or {})
    points = [np.asarray(p, dtype=float) for p in points]
    worst = 0.0
    for i in quotient.dropped:
        ok, r = weak_kernel_test(VectorField.coordinate(chart, chart.names[i]), system, points, tol)
        worst = max(worst, r)
        if not ok:
            raise QuotientError(
                f"direction d/d{chart.names[i]} is not a weak kernel direction",
                {"coordinate": chart.names[i], "residual": r},
            )
    span = Distribution.coordinates(chart, [chart.names[i] for i in quotient.dropped])
    inv = max((is_involutive_point(span, p, h)[1] for p in points), default=0.0) if quotient.dropped else 0.0
    reduced = _slice_form(system, quotient, f"{system.name}/Kw")
    other = _slice_form(system, _offset_quotient(quotient, np.random.default_rng(seed)), "")
    dep = 0.0
    for p in points:
        q = quotient.xi(p)
        dep = max(dep, (reduced.at(q) - other.at(q)).norm())
    cert = {"weak_kernel_residual": worst, "involutivity_residual": inv, "slice_dependence": dep}
    return ReducedSystem(quotient, reduced, cert, weak=True)


def certify_recovered(
    phi: Section, reduced: ReducedSystem, base_points, h: float = DEFAULT_FD_STEP, tol: float = 1e-6
) -> tuple:
    """beta o phi together with its admissibility (holonomy) residual.

    For a weak quotient only holonomic recoveries are certified.
    """
    rec = recover_section(phi, reduced.quotient)
    if reduced.quotient.parent.jet is None:
        return rec, True, 0.0
    res = max(contact_pullback_residual(rec, x, h) for x in base_points)
    return rec, res <= tol, res


# ---------------------------------------------------------------------------
# kernel-adapted coordinates


@dataclass(frozen=True)
class AdaptedCoordinates:
    """Constant linear change p = A p' making given vertical vectors coordinate
    directions.  Column replaced[k] of A is vectors[k]."""

    A: np.ndarray
    A_inv: np.ndarray
    chart: FiberedChart
    replaced: tuple

    def to_adapted(self, p) -> np.ndarray:
        return self.A_inv @ np.asarray(p, dtype=float)

    def from_adapted(self, q) -> np.ndarray:
        return self.A @ np.asarray(q, dtype=float)

    def section(self, phi: Section) -> Section:
        jac = None
        if phi.jacobian is not None:
            jac = lambda x: self.A_inv @ phi.tangent(x)
        return Section(self.chart, lambda x: self.to_adapted(phi(x)), jac, phi.label)

    def vector(self, v) -> np.ndarray:
        return self.A_inv @ np.asarray(v, dtype=float)


def adapted_system(
    system: PremultisymplecticSystem,
    vectors: Sequence[np.ndarray],
    replaced: Sequence[int],
    new_names: Optional[Sequence[str]] = None,
) -> tuple:
    """Rewrite the system in coordinates where vectors[k] = d/d(new coordinate k).

    Returns (new_system, AdaptedCoordinates).  The replaced coordinates must be
    fiber coordinates and the resulting change must be invertible.
    """
    chart = system.chart
    N = chart.dim
    A = np.eye(N)
    for v, j in zip(vectors, replaced):
        v = np.asarray(v, dtype=float)
        if j < chart.m or np.any(v[: chart.m] != 0.0):
            raise ValueError("adapted directions must be vertical and replace fiber coordinates")
        A[:, j] = v
    if abs(np.linalg.det(A)) < TOL_RANK:
        raise ValueError("adapted coordinate change is singular")
    A_inv = np.linalg.inv(A)
    names = list(chart.names)
    for k, j in enumerate(replaced):
        names[j] = new_names[k] if new_names else f"k{k}"
    new_chart = FiberedChart(chart.m, chart.n, tuple(names))

    def ev(q):
        return pullback_linear(A, system.at(A @ q))

    new_sys = PremultisymplecticSystem(new_chart, FormField(new_chart, system.omega.degree, ev), system.name + "'")
    return new_sys, AdaptedCoordinates(A, A_inv, new_chart, tuple(replaced))
