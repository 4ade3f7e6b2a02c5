"""Constant-coefficient examples on R^8, R^5, R^6 and the mechanical demo."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..exterior import FiberedChart, FormField, FormValue, VectorField, exterior_derivative_fd, wedge
from ..kernels import (
    expanded_extension_space,
    is_1_nondegenerate,
    is_variational_point,
    kernel_distribution_point,
    span_distance,
)
from ..reduction import QuotientError, build_quotient, check_reduced_multisymplectic, project_section, recover_section
from ..sections import Section, section_is_solution, sections_kernel_related
from ..solutions import (
    Distribution,
    PremultisymplecticSystem,
    equivalence_probe,
    is_expanded_solution_point,
    kernel_related,
)
from .base import Fact, ModelSpec, box_sampler

PLANE_NAMES = ("x", "y", "q", "px", "py")
TOL = 1e-10


def _plane_chart(extra=()):
    return FiberedChart(2, 3 + len(extra), PLANE_NAMES + tuple(extra))


def _common_terms(chart):
    # dq ^ dpx ^ dy - dq ^ dpy ^ dx
    return chart.dx("q", "px", "y") - chart.dx("q", "py", "x")


def omega_r8() -> FormValue:
    chart = _plane_chart(("u", "v", "w"))
    return _common_terms(chart) + chart.dx("q", "u", "w")


def omega_r5() -> FormValue:
    chart = _plane_chart()
    return _common_terms(chart) + chart.dx("q", "px", "py")


def omega_r6() -> FormValue:
    chart = _plane_chart(("u",))
    return _common_terms(chart) + chart.dx("u", "px", "py")


def _constant_system(chart, omega, name):
    return PremultisymplecticSystem(chart, FormField.constant(chart, omega), name)


def model_r8(points: int = 8, seed: int = 0) -> ModelSpec:
    chart = _plane_chart(("u", "v", "w"))
    system = _constant_system(chart, omega_r8(), "r8")
    D = {
        "D1": Distribution.coordinates(chart, ["x", "y", "u"], "D1"),
        "D2": Distribution.coordinates(chart, ["x", "y", "v"], "D2"),
        "D3": Distribution.coordinates(chart, ["x", "y", "w"], "D3"),
        "H": Distribution.coordinates(chart, ["x", "y"], "H"),
    }
    spec = ModelSpec("r8", system, [VectorField.coordinate(chart, "v")], D, sampler=box_sampler(chart.dim))
    pts = spec.sample_points(points, seed)
    p0 = pts[0]
    sec = Section.constant(chart, [0.3, -0.2, 0.5, 0.1, 0.7, -0.4], "const")
    sec_v = Section.constant(chart, [0.3, -0.2, 0.5, 0.1, 2.0, -0.4], "const_v")
    sec_u = Section.constant(chart, [0.3, -0.2, 0.5, 0.9, 0.7, -0.4], "const_u")
    spec.sections.update({"const": sec, "const_v": sec_v, "const_u": sec_u})
    base_pts = [p[:2] for p in pts]

    def related(a, b):
        def run():
            ok, rep = kernel_related(D[a], D[b], system, pts, TOL)
            details = {}
            if rep is not None:
                gens = D[a].generators + D[b].generators
                details = {
                    "witness": [gens[i].label for i in rep.witness],
                    "contraction": rep.witness_contraction,
                }
            return ok, details

        return run

    def d1_d3_witness():
        _, rep = kernel_related(D["D1"], D["D3"], system, pts, TOL)
        c = rep.witness_contraction
        gens = D["D1"].generators + D["D3"].generators
        labels = sorted(gens[i].label for i in rep.witness)
        dq = chart.index("q")
        shape = (labels, sorted(c.coeffs.keys()), abs(c[(dq,)]))
        return shape, {"contraction": c}

    def probe():
        g = equivalence_probe([D["D1"], D["D2"], D["D3"]], system, pts, TOL)
        return [list(t) for t in g.transitivity_failures], g

    def kernel():
        rep = kernel_distribution_point(system.at(p0), chart)
        return (rep.K_dim, span_distance(rep.K_basis, [chart.coord("v")]) <= TOL), rep

    def variational():
        rep = is_variational_point(system.at(p0), chart, TOL)
        return (rep.variational, [chart.names[i] for i in rep.witness]), rep

    def extension():
        sp = expanded_extension_space(D["H"].at(p0), system.at(p0), chart)
        target = [chart.coord(n) for n in ("u", "v", "w")]
        return span_distance(sp, target) <= TOL, {"dim": len(sp)}

    def quotient_v():
        red = build_quotient(system, [chart.index("v")], pts)
        chk = check_reduced_multisymplectic(red, [red.quotient.xi(p) for p in pts])
        return (chk.closed, chk.nondegenerate, red.certificate["pullback_residual"] <= TOL), {
            "reduced": red,
            "check": chk,
        }

    def quotient_u():
        try:
            build_quotient(system, [chart.index("u")], pts)
        except QuotientError as exc:
            return "rejected", {"reason": str(exc), "witness": exc.witness}
        return "accepted", {}

    def sections():
        red = build_quotient(system, [chart.index("v")], pts)
        ok_parent, r1 = section_is_solution(sec, system, base_pts)
        proj = project_section(sec, red.quotient)
        ok_proj, r2 = section_is_solution(proj, red.system, base_pts)
        rec = recover_section(proj, red.quotient.with_beta({chart.index("v"): 7.3}))
        ok_rec, r3 = section_is_solution(rec, system, base_pts)
        return (ok_parent, ok_proj, ok_rec), {"residuals": [r1, r2, r3]}

    def related_sections():
        q = build_quotient(system, [chart.index("v")], pts).quotient
        a = sections_kernel_related(sec, sec_v, q, base_pts)[0]
        b = sections_kernel_related(sec, sec_u, q, base_pts)[0]
        return (a, b), {}

    spec.facts = [
        Fact("r8.related.D1~D2", "kernel_related", related("D1", "D2"), True),
        Fact("r8.related.D2~D3", "kernel_related", related("D2", "D3"), True),
        Fact("r8.related.D1~D3", "kernel_related", related("D1", "D3"), False),
        Fact(
            "r8.related.D1~D3.witness",
            "kernel_related",
            d1_d3_witness,
            (["d/du", "d/dw"], [(chart.index("q"),)], 1.0),
        ),
        Fact("r8.probe.transitivity", "equivalence_probe", probe, [["D1", "D2", "D3"]]),
        Fact("r8.kernel.K", "kernel_distribution_point", kernel, (1, True)),
        Fact("r8.variational", "is_variational_point", variational, (False, ["q", "u", "w"])),
        Fact("r8.extension.H", "expanded_extension_space", extension, True),
        Fact("r8.quotient.v", "build_quotient", quotient_v, (True, True, True)),
        Fact("r8.quotient.u", "build_quotient", quotient_u, "rejected"),
        Fact("r8.section.transport", "section_is_solution", sections, (True, True, True)),
        Fact("r8.section.related", "sections_kernel_related", related_sections, (True, False)),
    ]
    return spec


def model_r5(points: int = 8, seed: int = 0) -> ModelSpec:
    chart = _plane_chart()
    system = _constant_system(chart, omega_r5(), "r5")
    D = {"H": Distribution.coordinates(chart, ["x", "y"], "H")}
    spec = ModelSpec("r5", system, [], D, sampler=box_sampler(chart.dim))
    pts = spec.sample_points(points, seed)

    def variational():
        rep = is_variational_point(system.at(pts[0]), chart, TOL)
        return (rep.variational, [chart.names[i] for i in rep.witness]), rep

    def extension():
        dims = [len(expanded_extension_space(D["H"].at(p), system.at(p), chart)) for p in pts]
        return max(dims), {"dims": dims}

    def multisymplectic():
        return is_1_nondegenerate(system.at(pts[0]))[0], {}

    spec.facts = [
        Fact("r5.variational", "is_variational_point", variational, (False, ["q", "px", "py"])),
        Fact("r5.extension.H", "expanded_extension_space", extension, 0),
        Fact("r5.nondegenerate", "is_1_nondegenerate", multisymplectic, True),
    ]
    return spec


def model_r6(points: int = 8, seed: int = 0) -> ModelSpec:
    chart = _plane_chart(("u",))
    system = _constant_system(chart, omega_r6(), "r6")
    D = {"D": Distribution.coordinates(chart, ["x", "y", "u"], "D")}
    spec = ModelSpec("r6", system, [], D, sampler=box_sampler(chart.dim))
    pts = spec.sample_points(points, seed)

    def kernel():
        return max(kernel_distribution_point(system.at(p), chart).K_dim for p in pts), {}

    def expanded():
        reps = [is_expanded_solution_point(D["D"], system, p, TOL) for p in pts]
        return all(r.passed for r in reps), {"residual": max(r.residual for r in reps)}

    def variational():
        rep = is_variational_point(system.at(pts[0]), chart, TOL)
        return (rep.variational, sorted(chart.names[i] for i in rep.witness)), rep

    spec.facts = [
        Fact("r6.kernel.K", "kernel_distribution_point", kernel, 0),
        Fact("r6.expanded.D", "is_expanded_solution_point", expanded, True),
        Fact("r6.variational", "is_variational_point", variational, (False, ["px", "py", "u"])),
    ]
    return spec


# ---------------------------------------------------------------------------
# mechanics


def _oscillator(p):
    return 0.5 * (p[1] ** 2 + p[2] ** 2)


def model_mechanics(
    hamiltonian: Optional[Callable[[np.ndarray], float]] = None,
    gauge: int = 2,
    points: int = 8,
    seed: int = 0,
    h: float = 1e-5,
) -> ModelSpec:
    """Omega = dq ^ dp + dH(t, q, p) ^ dt on (t; q, p, z_1..z_gauge).

    The z directions never appear in Omega, so ker Omega = <X_H, d/dz_k> with
    X_H the transverse Hamiltonian field and G = K cap V = <d/dz_k>.
    """
    H = hamiltonian or _oscillator
    names = ("t", "q", "p") + (("z", "w") if gauge == 2 else tuple(f"z{k}" for k in range(gauge)))
    chart = FiberedChart(1, 2 + gauge, names)
    N = chart.dim
    qp = chart.dx("q", "p")

    def grad(p):
        g = np.zeros(N)
        for j in range(3):
            e = np.zeros(N)
            e[j] = h
            g[j] = (H(p + e) - H(p - e)) / (2 * h)
        return g

    def ev(p):
        dH = FormValue(1, N, {(j,): c for j, c in enumerate(grad(p))})
        return qp + wedge(dH, chart.dx("t"))

    omega = FormField(chart, 2, ev)
    system = PremultisymplecticSystem(chart, omega, "mechanics")
    spec = ModelSpec("mechanics", system, [VectorField.coordinate(chart, n) for n in names[3:]])
    pts = spec.sample_points(points, seed)
    for p in pts:
        if exterior_derivative_fd(omega, p, h).norm() > 1e-6:
            raise ValueError("supplied mechanical form is not closed")

    def codim():
        dims = []
        for p in pts:
            rep = kernel_distribution_point(system.at(p), chart)
            dims.append((rep.ker1_dim, rep.K_dim))
        return all(k - g == 1 for k, g in dims), {"(dim K, dim G)": dims}

    def quotient():
        red = build_quotient(system, list(range(3, N)), pts, h)
        qpts = [red.quotient.xi(p) for p in pts]
        chk = check_reduced_multisymplectic(red, qpts, h)
        transverse = True
        for q in qpts:
            rep = kernel_distribution_point(red.system.at(q), red.system.chart)
            transverse &= rep.ker1_dim == 1 and abs(rep.ker1_basis[0][0]) > 1e-6
        return (chk.closed, chk.vertical_nondegenerate, chk.ker1_dim, transverse), {"check": chk}

    spec.facts = [
        Fact("mechanics.G_codim_1", "kernel_distribution_point", codim, True),
        Fact("mechanics.quotient", "build_quotient", quotient, (True, True, 1, True)),
    ]
    return spec
