"""Section-level checks: field equations along a section, holonomic
prolongation, kernel-related sections and weak kernel vector fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .exterior import (
    DEFAULT_FD_STEP,
    FiberedChart,
    FormField,
    JetChartMeta,
    VectorField,
    contact_forms,
    contact_substitute,
    directional_derivative_fd,
    interior,
    interior_decomposable,
    jacobian_fd,
    lie_derivative_form_fd,
)
from .kernels import TOL_ALG
from .solutions import Distribution, PremultisymplecticSystem

TOL_FD = 1e-5


@dataclass(frozen=True)
class Section:
    """phi: M -> J, x -> (x, y(x))."""

    chart: FiberedChart
    eval: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.chart.m,):
            raise ValueError(f"base point of shape {x.shape}, expected ({self.chart.m},)")
        p = np.asarray(self.eval(x), dtype=float)
        if p.shape != (self.chart.dim,):
            raise ValueError("section returned a point of the wrong dimension")
        if not np.array_equal(p[: self.chart.m], x):
            raise ValueError("section does not satisfy pi o phi = id")
        return p

    def tangent(self, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        """T phi, shape (N, m)."""
        if self.jacobian is not None:
            return np.asarray(self.jacobian(np.asarray(x, dtype=float)), dtype=float)
        J = jacobian_fd(self, x, h)
        J[: self.chart.m] = np.eye(self.chart.m)
        return J

    @classmethod
    def from_fiber(cls, chart: FiberedChart, fiber: Callable[[np.ndarray], np.ndarray], label: str = "") -> "Section":
        return cls(chart, lambda x: np.concatenate([x, np.asarray(fiber(x), dtype=float)]), label=label)

    @classmethod
    def constant(cls, chart: FiberedChart, fiber_values, label: str = "") -> "Section":
        vals = np.asarray(fiber_values, dtype=float)
        N, m = chart.dim, chart.m

        def jac(x):
            J = np.zeros((N, m))
            J[:m] = np.eye(m)
            return J

        return cls(chart, lambda x: np.concatenate([x, vals]), jac, label)


def section_residual(phi: Section, system: PremultisymplecticSystem, x, h: float = DEFAULT_FD_STEP) -> float:
    """max_j |phi^* i(e_j) Omega| at x.

    phi^* i(Y) Omega evaluated on d/dx^1..d/dx^m equals, up to a global sign,
    Omega(Y, T phi d_1, ..., T phi d_m); collecting all Y = e_j gives the
    1-form i(T phi d_1 ^ ... ^ T phi d_m) Omega.
    """
    p = phi(x)
    T = phi.tangent(x, h)
    res = interior_decomposable(list(T.T), system.at(p))
    return res.norm()


def section_is_solution(
    phi: Section, system: PremultisymplecticSystem, base_points, h: float = DEFAULT_FD_STEP, tol: float = TOL_FD
) -> Tuple[bool, float]:
    worst = max(section_residual(phi, system, x, h) for x in base_points)
    return worst <= tol, worst


def prolong_holonomic(
    chart: FiberedChart,
    psi: Callable[[np.ndarray], np.ndarray],
    h: float = DEFAULT_FD_STEP,
    dpsi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    label: str = "",
) -> Section:
    """j^1 psi on a jet chart.

    psi maps base points to the field coordinates (in chart.jet.field_indices
    order); velocity slots are filled with d psi^a / d x^i, from dpsi if
    given (shape (fields, m)) and by central differences otherwise.
    Non-jet fiber coordinates are set to zero.
    """
    jet = chart.jet
    if jet is None:
        raise ValueError("chart has no jet structure")
    fields = jet.field_indices
    slot = {a: k for k, a in enumerate(fields)}

    def ev(x):
        x = np.asarray(x, dtype=float)
        vals = np.asarray(psi(x), dtype=float)
        D = np.asarray(dpsi(x), dtype=float) if dpsi is not None else jacobian_fd(psi, x, h)
        p = np.zeros(chart.dim)
        p[: chart.m] = x
        p[list(fields)] = vals
        for vel, (a, i) in jet.velocities.items():
            p[vel] = D[slot[a], i]
        return p

    return Section(chart, ev, label=label)


def contact_pullback_residual(phi: Section, x, h: float = DEFAULT_FD_STEP) -> float:
    """max_a |phi^* theta^a| at x."""
    jet = phi.chart.jet
    p = phi(x)
    T = phi.tangent(x, h)
    worst = 0.0
    for theta in contact_forms(jet, p, phi.chart.dim).values():
        comps = np.array([theta[(j,)] for j in range(phi.chart.dim)])
        worst = max(worst, float(np.max(np.abs(comps @ T))))
    return worst


def distribution_holonomy_residual(D: Distribution, p) -> float:
    """max |theta^a(X)| over generators X: the algebraic holonomy condition."""
    jet = D.chart.jet
    if jet is None:
        raise ValueError("chart has no jet structure")
    worst = 0.0
    for theta in contact_forms(jet, p, D.chart.dim).values():
        comps = np.array([theta[(j,)] for j in range(D.chart.dim)])
        worst = max(worst, float(np.max(np.abs(D.at(p) @ comps))))
    return worst


def sections_kernel_related(phi1: Section, phi2: Section, quotient, base_points, tol: float = TOL_ALG) -> Tuple[bool, float]:
    """xi o phi1 == xi o phi2 at every sampled base point."""
    if quotient is None:
        raise ValueError("no quotient chart available")
    worst = 0.0
    for x in base_points:
        d = quotient.xi(phi1(x)) - quotient.xi(phi2(x))
        worst = max(worst, float(np.max(np.abs(d), initial=0.0)))
    return worst <= tol, worst


def weak_kernel_test(
    Y: VectorField, system: PremultisymplecticSystem, points, tol: float = TOL_ALG
) -> Tuple[bool, float]:
    """i(Y) Omega lies in the contact ideal at every sampled point.

    Admissible sections are the holonomic ones; their pullbacks kill the
    contact ideal, and the substitution du^a -> u^a_i dx^i is the quotient by it.
    """
    jet = system.chart.jet
    if jet is None:
        raise ValueError("system chart has no jet structure")
    worst = 0.0
    for p in points:
        p = np.asarray(p, dtype=float)
        worst = max(worst, contact_substitute(interior(Y(p), system.at(p)), jet, p).norm())
    return worst <= tol, worst


@dataclass
class SymmetryReport:
    lagrangian_invariant: bool
    form_invariant: bool
    lagrangian_residual: float
    form_residual: float

    def to_json(self) -> dict:
        return {
            "lagrangian_invariant": self.lagrangian_invariant,
            "form_invariant": self.form_invariant,
            "lagrangian_residual": self.lagrangian_residual,
            "form_residual": self.form_residual,
        }


def lagrangian_symmetry_check(
    Y: VectorField,
    L: Callable[[np.ndarray], float],
    system: PremultisymplecticSystem,
    points,
    h: float = DEFAULT_FD_STEP,
    tol: float = TOL_FD,
) -> SymmetryReport:
    """Residuals of L_Y L and L_Y Omega over the sample points."""
    rl = rf = 0.0
    for p in points:
        p = np.asarray(p, dtype=float)
        y = Y(p)
        rl = max(rl, abs(L(p + h * y) - L(p - h * y)) / (2 * h))
        rf = max(rf, lie_derivative_form_fd(Y, system.omega, p, h).norm())
    return SymmetryReport(rl <= tol, rf <= tol, rl, rf)
