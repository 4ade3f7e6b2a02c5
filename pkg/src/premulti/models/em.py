"""Vacuum electromagnetism on the first jet of the connection bundle.

Chart layout (24 dims): x^mu (0..3), A_alpha (4..7), A_{alpha,mu} at
8 + 4*alpha + mu.  Minkowski metric diag(-1, 1, 1, 1); mu0 = 1 by default.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..exterior import FiberedChart, FormField, FormValue, JetChartMeta, VectorField
from ..kernels import TOL_RANK, kernel_distribution_point, flat_matrix, nullspace, span_distance
from ..reduction import QuotientChart, QuotientError, adapted_system, certify_recovered, weak_quotient
from ..sections import (
    Section,
    distribution_holonomy_residual,
    lagrangian_symmetry_check,
    prolong_holonomic,
    section_is_solution,
    sections_kernel_related,
    weak_kernel_test,
)
from ..solutions import (
    Distribution,
    PremultisymplecticSystem,
    is_expanded_solution_point,
    is_involutive_point,
    kernel_related,
)
from .base import Fact, ModelSpec

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
M = 4


def A_idx(alpha: int) -> int:
    return 4 + alpha


def V_idx(alpha: int, mu: int) -> int:
    """Index of A_{alpha,mu} = d A_alpha / d x^mu."""
    return 8 + 4 * alpha + mu


def em_chart() -> FiberedChart:
    names = [f"x{m}" for m in range(4)] + [f"A{a}" for a in range(4)]
    names += [f"A{a}_{m}" for a in range(4) for m in range(4)]
    jet = JetChartMeta({V_idx(a, m): (A_idx(a), m) for a in range(4) for m in range(4)})
    return FiberedChart(4, 20, tuple(names), jet)


def velocities(p) -> np.ndarray:
    """Matrix V[alpha, mu] = A_{alpha,mu}."""
    return np.asarray(p, dtype=float)[8:24].reshape(4, 4)


def field_strength(p) -> np.ndarray:
    """F_{mu nu} = A_{nu,mu} - A_{mu,nu}."""
    V = velocities(p)
    return V.T - V


def lagrangian(p, mu0: float = 1.0) -> float:
    F = field_strength(p)
    Fup = ETA @ F @ ETA
    return float(-np.sum(Fup * F) / (4.0 * mu0))


def momenta(p, mu0: float = 1.0) -> np.ndarray:
    """dL / dA_{alpha,mu} = F^{alpha mu} / mu0."""
    F = field_strength(p)
    return (ETA @ F @ ETA) / mu0


def hessian(mu0: float = 1.0) -> np.ndarray:
    """W[alpha, mu, beta, nu] = d^2 L / dA_{alpha,mu} dA_{beta,nu}
    = (eta^{alpha nu} eta^{mu beta} - eta^{alpha beta} eta^{mu nu}) / mu0."""
    return (np.einsum("an,mb->ambn", ETA, ETA) - np.einsum("ab,mn->ambn", ETA, ETA)) / mu0


def energy(p, mu0: float = 1.0) -> float:
    """E_L = A_{mu,alpha} dL/dA_{mu,alpha} - L."""
    return float(np.sum(velocities(p) * momenta(p, mu0)) - lagrangian(p, mu0))


def omega_em(mu0: float = 1.0) -> FormField:
    """dE_L ^ d^4x - W^{alpha mu beta nu} dA_{beta,nu} ^ dA_alpha ^ d^3x_mu."""
    chart = em_chart()
    N = chart.dim
    W = hessian(mu0)
    const = FormValue.zero(5, N)
    for a, m_, b, n in itertools.product(range(4), repeat=4):
        w = W[a, m_, b, n]
        if w == 0.0:
            continue
        vol_mu = chart.volume_minus(m_)
        const = const - w * (FormValue.basis([V_idx(b, n), A_idx(a)], N) ^ vol_mu)
    const_items = dict(const.items())

    def ev(p):
        # dE/dA_{a,b} = A_{c,d} W^{cd,ab}
        grad = np.einsum("cd,cdab->ab", velocities(p), W)
        coeffs = dict(const_items)
        for a, b in itertools.product(range(4), repeat=2):
            g = grad[a, b]
            if g != 0.0:
                coeffs[(0, 1, 2, 3, V_idx(a, b))] = g
        return FormValue._raw(5, N, coeffs)

    return FormField(chart, 5, ev)


def kernel_vectors() -> list:
    """d/dA_{alpha,mu} + d/dA_{mu,alpha}, alpha <= mu (10 fields)."""
    out = []
    for a, m_ in itertools.combinations_with_replacement(range(4), 2):
        v = np.zeros(24)
        v[V_idx(a, m_)] += 1.0
        v[V_idx(m_, a)] += 1.0
        out.append(v)
    return out


# ---------------------------------------------------------------------------
# solution families


@dataclass(frozen=True)
class RSTParams:
    """R[alpha, mu], S[alpha, nu, mu], T[alpha, nu, mu] (constants)."""

    R: np.ndarray
    S: np.ndarray
    T: np.ndarray

    def constraint_residual(self) -> float:
        r = [
            np.abs(self.R - self.R.T).max(),
            np.abs(self.S - self.S.transpose(1, 0, 2)).max(),
            np.abs(self.T + self.T.transpose(1, 0, 2)).max(),
            np.abs(np.einsum("nm,anm->a", ETA, self.T)).max(),
        ]
        return float(max(r))


def _traceless_antisym_basis() -> np.ndarray:
    """Orthonormal basis of T[a,n,m] antisymmetric in (a,n) with eta^{nm} T[a,n,m] = 0."""
    basis = []
    for a, n in itertools.combinations(range(4), 2):
        for m_ in range(4):
            t = np.zeros((4, 4, 4))
            t[a, n, m_] = 1.0
            t[n, a, m_] = -1.0
            basis.append(t.ravel() / np.sqrt(2.0))
    B = np.array(basis)  # (24, 64)
    C = np.array([np.einsum("nm,anm->a", ETA, b.reshape(4, 4, 4)) for b in B]).T  # (4, 24)
    ns = nullspace(C)
    return ns @ B


_T_BASIS = _traceless_antisym_basis()


def random_rst(rng: np.random.Generator, scale: float = 1.0) -> RSTParams:
    R = rng.normal(size=(4, 4)) * scale
    S = rng.normal(size=(4, 4, 4)) * scale
    T = rng.normal(size=(4, 4, 4)) * scale
    return RSTParams(
        0.5 * (R + R.T),
        0.5 * (S + S.transpose(1, 0, 2)),
        project_T(T),
    )


def project_T(T: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto antisymmetric, eta-traceless arrays."""
    t = np.asarray(T, dtype=float).ravel()
    return (_T_BASIS.T @ (_T_BASIS @ t)).reshape(4, 4, 4)


def family_generator(params: RSTParams, mu: int) -> Callable[[np.ndarray], np.ndarray]:
    def X(p):
        p = np.asarray(p, dtype=float)
        V = velocities(p)
        v = np.zeros(24)
        v[mu] = 1.0
        for a in range(4):
            v[A_idx(a)] = V[a, mu] + params.R[a, mu]
            for n in range(4):
                v[V_idx(a, n)] = params.T[a, n, mu] + params.S[a, n, mu]
        return v

    return X


def family_distribution(params: RSTParams, label: str = "") -> Distribution:
    chart = em_chart()
    gens = tuple(VectorField(chart, family_generator(params, m_), f"X{m_}") for m_ in range(4))
    return Distribution(chart, gens, label, claimed_rank=4)


def gauge_lift(
    f: Callable[[np.ndarray], float],
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    h: float = 1e-4,
) -> VectorField:
    """Y_f = d_alpha f d/dA_alpha + d_mu d_alpha f d/dA_{alpha,mu}."""
    chart = em_chart()

    def fd_grad(x):
        g = np.zeros(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            g[i] = (f(x + e) - f(x - e)) / (2 * h)
        return g

    def fd_hess(x):
        Hm = np.zeros((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            Hm[:, i] = (fd_grad(x + e) - fd_grad(x - e)) / (2 * h)
        return 0.5 * (Hm + Hm.T)

    g_fun = grad or fd_grad
    h_fun = hess or fd_hess

    def Y(p):
        x = np.asarray(p, dtype=float)[:4]
        g, Hm = g_fun(x), h_fun(x)
        v = np.zeros(24)
        for a in range(4):
            v[A_idx(a)] = g[a]
            for m_ in range(4):
                v[V_idx(a, m_)] = Hm[m_, a]
        return v

    return VectorField(chart, Y, "Y_f")


def em_adapted():
    """Kernel-adapted coordinates: the 10 symmetric combinations replace
    A_{alpha,mu}, alpha <= mu."""
    system = PremultisymplecticSystem(em_chart(), omega_em(), "em")
    replaced = [V_idx(a, m_) for a, m_ in itertools.combinations_with_replacement(range(4), 2)]
    names = [f"k{a}{m_}" for a, m_ in itertools.combinations_with_replacement(range(4), 2)]
    new_sys, coords = adapted_system(system, kernel_vectors(), replaced, names)
    return new_sys, coords, QuotientChart(new_sys.chart, tuple(replaced))


# ---------------------------------------------------------------------------


def model_em(points: int = 8, seed: int = 0, members: int = 5) -> ModelSpec:
    chart = em_chart()
    omega = omega_em()
    system = PremultisymplecticSystem(chart, omega, "em")
    kvecs = kernel_vectors()
    spec = ModelSpec("em", system, [VectorField.constant(chart, v) for v in kvecs])
    rng = np.random.default_rng(seed)
    pts = spec.sample_points(points, seed)
    base_pts = [p[:4] for p in pts]
    fam = [random_rst(rng) for _ in range(members)]
    spec.distributions = {f"member{i}": family_distribution(par, f"member{i}") for i, par in enumerate(fam)}
    base = fam[0]
    zero = np.zeros_like
    dS = random_rst(rng)
    perturbed = {
        "S": RSTParams(base.R, base.S + dS.S, base.T),
        "R": RSTParams(base.R + dS.R, base.S, base.T),
        "T": RSTParams(base.R, base.S, base.T + dS.T),
    }
    Yf = gauge_lift(
        lambda x: x[0] * x[1],
        grad=lambda x: np.array([x[1], x[0], 0.0, 0.0]),
        hess=lambda x: np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=float),
    )
    spec.extras.update(family=fam, perturbed=perturbed, gauge_field=Yf)

    def kernel_dim():
        dims, dist = [], 0.0
        for p in pts:
            rep = kernel_distribution_point(system.at(p), chart)
            dims.append(rep.K_dim)
            dist = max(dist, span_distance(rep.K_basis, kvecs))
        return (min(dims), max(dims), dist <= 1e-9), {"span_distance": dist}

    def flat_columns():
        fm = flat_matrix(system.at(pts[0]))
        worst = 0.0
        for a, m_ in itertools.product(range(4), repeat=2):
            worst = max(worst, np.abs(fm.matrix[:, V_idx(a, m_)] + fm.matrix[:, V_idx(m_, a)]).max())
        return worst == 0.0, {"residual": worst}

    def family():
        res = []
        for par in fam:
            D = family_distribution(par)
            reps = [is_expanded_solution_point(D, system, p, 1e-8) for p in pts]
            res.append((all(r.passed for r in reps), max(r.residual for r in reps)))
        return all(ok for ok, _ in res), {"residuals": [r for _, r in res]}

    def related(which):
        def run():
            ok, _ = kernel_related(family_distribution(base), family_distribution(perturbed[which]), system, pts, 1e-8)
            return ok, {}

        return run

    def weak_velocities():
        verdicts = []
        for a, m_ in itertools.product(range(4), repeat=2):
            Y = VectorField.coordinate(chart, chart.names[V_idx(a, m_)])
            verdicts.append(weak_kernel_test(Y, system, pts)[0])
        return all(verdicts), {"count": len(verdicts)}

    def weak_gauge():
        ok, r = weak_kernel_test(Yf, system, pts)
        return ok, {"residual": r}

    def symmetry():
        rep = lagrangian_symmetry_check(Yf, lagrangian, system, pts)
        return (rep.lagrangian_invariant, rep.form_invariant), rep

    def holonomy():
        with_R = max(distribution_holonomy_residual(family_distribution(base), p) for p in pts)
        no_R = RSTParams(np.zeros((4, 4)), base.S, base.T)
        without = max(distribution_holonomy_residual(family_distribution(no_R), p) for p in pts)
        return (with_R > 1e-8, without <= 1e-12), {"with_R": with_R, "without_R": without}

    def integrability():
        zeroR = np.zeros((4, 4))
        flat = RSTParams(zeroR, np.zeros((4, 4, 4)), np.zeros((4, 4, 4)))
        generic = RSTParams(zeroR, base.S, np.zeros((4, 4, 4)))
        a = all(is_involutive_point(family_distribution(flat), p)[0] for p in pts)
        b = any(is_involutive_point(family_distribution(generic), p)[0] for p in pts)
        same = kernel_related(family_distribution(flat), family_distribution(generic), system, pts, 1e-8)[0]
        return (a, b, same), {}

    def sections():
        const = prolong_holonomic(chart, lambda x: np.array([0.3, -0.1, 0.2, 0.5]), dpsi=lambda x: np.zeros((4, 4)))

        def psi_bad(x):
            return np.array([x[1] ** 2, 0.0, 0.0, 0.0])

        def dpsi_bad(x):
            D = np.zeros((4, 4))
            D[0, 1] = 2 * x[1]
            return D

        bad = prolong_holonomic(chart, psi_bad, dpsi=dpsi_bad)
        return (
            section_is_solution(const, system, base_pts)[0],
            section_is_solution(bad, system, base_pts)[0],
        ), {}

    def holonomic_related():
        new_sys, coords, q = em_adapted()
        r = np.random.default_rng(seed + 1)
        verdicts = []
        for _ in range(3):
            c1 = r.normal(size=(4, 4))
            c2 = c1 + r.normal(size=(4, 4)) * 0.1
            s1 = prolong_holonomic(chart, lambda x, c=c1: c @ x, dpsi=lambda x, c=c1: c)
            s2 = prolong_holonomic(chart, lambda x, c=c2: c @ x, dpsi=lambda x, c=c2: c)
            rel_self = sections_kernel_related(coords.section(s1), coords.section(s1), q, base_pts)[0]
            rel_other = sections_kernel_related(coords.section(s1), coords.section(s2), q, base_pts)[0]
            verdicts.append((rel_self, rel_other))
        return all(a and not b for a, b in verdicts), {"verdicts": verdicts}

    def weak_reduction():
        vel = [V_idx(a, m_) for a, m_ in itertools.product(range(4), repeat=2)]
        red = weak_quotient(system, vel, pts)
        try:
            weak_quotient(system, [A_idx(0)], pts)
            rejected = False
        except QuotientError:
            rejected = True
        const = Section.constant(red.system.chart, [0.3, -0.1, 0.2, 0.5])
        lin = Section.from_fiber(red.system.chart, lambda x: np.array([x[1], 0.0, 0.0, 0.0]))
        _, ok_const, _ = certify_recovered(const, red, base_pts)
        _, ok_lin, _ = certify_recovered(lin, red, base_pts)
        return (rejected, ok_const, ok_lin), {"certificate": red.certificate}

    spec.facts = [
        Fact("em.kernel.dim", "kernel_distribution_point", kernel_dim, (10, 10, True)),
        Fact("em.kernel.flat_columns", "flat_matrix", flat_columns, True),
        Fact("em.solution.family", "is_expanded_solution_point", family, True),
        Fact("em.related.S", "kernel_related", related("S"), True),
        Fact("em.related.R", "kernel_related", related("R"), False),
        Fact("em.related.T", "kernel_related", related("T"), False),
        Fact("em.weak_kernel.velocities", "weak_kernel_test", weak_velocities, True),
        Fact("em.weak_kernel.gauge", "weak_kernel_test", weak_gauge, False),
        Fact("em.symmetry.gauge", "lagrangian_symmetry_check", symmetry, (True, True)),
        Fact("em.holonomy.R", "distribution_holonomy_residual", holonomy, (True, True)),
        Fact("em.integrability.class", "is_involutive_point", integrability, (True, False, True)),
        Fact("em.section.solution", "section_is_solution", sections, (True, False)),
        Fact("em.section.holonomic_related", "sections_kernel_related", holonomic_related, True),
        Fact("em.weak_quotient", "weak_quotient", weak_reduction, (True, True, False)),
    ]
    return spec
