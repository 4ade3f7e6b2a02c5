import numpy as np
import pytest

from premulti import (
    FiberedChart,
    FormField,
    PremultisymplecticSystem,
    QuotientChart,
    QuotientError,
    Section,
    adapted_system,
    build_quotient,
    certify_recovered,
    check_reduced_multisymplectic,
    exterior_derivative_fd,
    kernel_distribution_point,
    project_section,
    pullback_linear,
    recover_section,
    section_is_solution,
    weak_quotient,
)
from premulti.kernels import span_distance
from premulti.models import em
from premulti.models.toy import _plane_chart, omega_r8

R8 = _plane_chart(("u", "v", "w"))
SYS8 = PremultisymplecticSystem(R8, FormField.constant(R8, omega_r8()), "r8")
PTS = [np.linspace(-0.5, 0.5, 8), np.full(8, 0.3), np.arange(8.0) / 7]
BASE = [p[:2] for p in PTS]


def test_quotient_chart_validation():
    with pytest.raises(ValueError):
        QuotientChart(R8, (0,))
    with pytest.raises(ValueError):
        QuotientChart(R8, (6,), {5: 1.0})
    q = QuotientChart(R8, (6, 6), {6: 2.0})
    assert q.dropped == (6,)
    assert q.chart.names == ("x", "y", "q", "px", "py", "u", "w")
    p = np.arange(8.0)
    assert np.array_equal(q.beta(q.xi(p)), np.where(np.arange(8) == 6, 2.0, p))
    assert np.array_equal(q.xi_jacobian() @ p, q.xi(p))


def test_r8_drop_v_identical_coefficients():
    red = build_quotient(SYS8, [R8.index("v")], PTS)
    Ok = red.system.at(red.quotient.xi(PTS[0]))
    c = red.system.chart
    expected = c.dx("q", "px", "y") - c.dx("q", "py", "x") + c.dx("q", "u", "w")
    assert Ok == expected
    assert red.certificate["pullback_residual"] == 0.0
    assert red.certificate["slice_dependence"] == 0.0
    assert red.to_json()["dropped"] == ["v"]


def test_r8_reduced_is_multisymplectic():
    red = build_quotient(SYS8, [R8.index("v")], PTS)
    chk = check_reduced_multisymplectic(red, [red.quotient.xi(p) for p in PTS])
    assert chk.passed and chk.ker1_dim == 0 and chk.d_residual <= 1e-6


def test_r8_drop_u_rejected():
    with pytest.raises(QuotientError) as info:
        build_quotient(SYS8, [R8.index("u")], PTS)
    assert info.value.witness["coordinate"] == "u"


def test_varying_coefficient_rejected():
    chart = FiberedChart(1, 3, ("t", "a", "b", "c"))

    def ev(p):
        return (1.0 + p[3] ** 2) * chart.dx("a", "b")

    system = PremultisymplecticSystem(chart, FormField(chart, 2, ev))
    with pytest.raises(QuotientError, match="not constant"):
        build_quotient(system, [3], [np.array([0.0, 0.1, 0.2, 0.5])])


def test_partial_quotient_stays_degenerate():
    # two hidden directions; dropping only one leaves a kernel behind
    chart = FiberedChart(1, 4, ("t", "a", "b", "k1", "k2"))
    system = PremultisymplecticSystem(chart, FormField.constant(chart, chart.dx("a", "b") + chart.dx("b", "t")))
    pts = [np.array([0.0, 0.1, 0.2, 0.3, 0.4])]
    red = build_quotient(system, [3], pts)
    chk = check_reduced_multisymplectic(red, [red.quotient.xi(p) for p in pts])
    assert not chk.nondegenerate
    full = build_quotient(system, [3, 4], pts)
    chk = check_reduced_multisymplectic(full, [full.quotient.xi(p) for p in pts])
    assert chk.vertical_nondegenerate and chk.ker1_dim == 1


def test_section_transport_both_ways():
    red = build_quotient(SYS8, [R8.index("v")], PTS)
    psi = Section.constant(R8, [0.3, -0.2, 0.5, 0.1, 0.7, -0.4])
    phi = project_section(psi, red.quotient)
    assert section_is_solution(phi, red.system, BASE)[0]
    for b in (0.0, 7.3):
        rec = recover_section(phi, red.quotient.with_beta({R8.index("v"): b}))
        assert section_is_solution(rec, SYS8, BASE)[0]
        assert rec(BASE[0])[R8.index("v")] == b


def test_nonconstant_projection_still_transports():
    red = build_quotient(SYS8, [R8.index("v")], PTS)
    # v may depend on x freely; it is forgotten by xi
    psi = Section.from_fiber(R8, lambda x: np.array([0.3, -0.2, 0.5, 0.1, np.sin(x[0]), -0.4]))
    assert section_is_solution(psi, SYS8, BASE)[0]
    assert section_is_solution(project_section(psi, red.quotient), red.system, BASE)[0]


# ---------------------------------------------------------------- weak quotient


def test_em_weak_quotient():
    spec = em.model_em(points=2)
    system = spec.system
    pts = spec.sample_points(2, 0)
    base = [p[:4] for p in pts]
    vel = [em.V_idx(a, m) for a in range(4) for m in range(4)]
    red = weak_quotient(system, vel, pts)
    assert red.weak
    assert red.certificate["weak_kernel_residual"] <= 1e-8
    with pytest.raises(QuotientError):
        weak_quotient(system, [em.A_idx(0)], pts)
    const = Section.constant(red.system.chart, [0.3, -0.1, 0.2, 0.5])
    lin = Section.from_fiber(red.system.chart, lambda x: np.array([x[1], 0.0, 0.0, 0.0]))
    assert certify_recovered(const, red, base)[1]
    assert not certify_recovered(lin, red, base)[1]


# ---------------------------------------------------------------- adapted coordinates


def test_adapted_coordinates_r8_rotation():
    # kernel direction d/du + d/dv hidden by a shear, then recovered
    S = np.eye(8)
    S[R8.index("v"), R8.index("u")] = 1.0
    sheared = PremultisymplecticSystem(R8, FormField.constant(R8, pullback_linear(np.linalg.inv(S), omega_r8())))
    K = kernel_distribution_point(sheared.at(np.zeros(8)), R8).K_basis
    assert len(K) == 1
    new_sys, coords = adapted_system(sheared, K, [R8.index("v")], ["k"])
    rep = kernel_distribution_point(new_sys.at(np.zeros(8)), new_sys.chart)
    assert span_distance(rep.K_basis, [new_sys.chart.coord("k")]) <= 1e-12
    p = np.arange(8.0)
    assert np.allclose(coords.from_adapted(coords.to_adapted(p)), p)
    red = build_quotient(new_sys, [R8.index("v")], [coords.to_adapted(p) for p in PTS])
    assert check_reduced_multisymplectic(red, [red.quotient.xi(coords.to_adapted(p)) for p in PTS]).passed


def test_adapted_rejects_bad_input():
    with pytest.raises(ValueError):
        adapted_system(SYS8, [R8.coord("x")], [R8.index("v")])
    with pytest.raises(ValueError):
        adapted_system(SYS8, [R8.coord("u")], [R8.index("v")])


def test_em_strong_quotient_closed():
    new_sys, coords, q = em.em_adapted()
    spec = em.model_em(points=2)
    pts = [coords.to_adapted(p) for p in spec.sample_points(2, 0)]
    red = build_quotient(new_sys, q.dropped, pts)
    qpts = [red.quotient.xi(p) for p in pts]
    assert max(exterior_derivative_fd(red.system.omega, x).norm() for x in qpts) <= 1e-6
    assert red.certificate["pullback_residual"] <= 1e-9
