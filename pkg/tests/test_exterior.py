import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from premulti.exterior import (
    FiberedChart,
    FormField,
    FormValue,
    JetChartMeta,
    MultivectorValue,
    VectorField,
    contact_forms,
    contact_substitute,
    derivation_linear,
    exterior_derivative_fd,
    interior,
    interior_decomposable,
    lie_derivative_form_fd,
    one_form,
    pullback_linear,
    wedge,
)
from premulti.models.toy import omega_r8

from oracles import close_maps, coefficients, dense, dense_eval, random_coeffs, wedge_eval

R8 = FiberedChart(2, 6, ("x", "y", "q", "px", "py", "u", "v", "w"))


@st.composite
def forms(draw, dim=None, degree=None):
    N = draw(st.integers(1, 6)) if dim is None else dim
    k = draw(st.integers(0, N)) if degree is None else degree
    keys = list(itertools.combinations(range(N), k))
    chosen = draw(st.lists(st.sampled_from(keys), max_size=len(keys), unique=True))
    vals = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=len(chosen), max_size=len(chosen)))
    return FormValue(k, N, dict(zip(chosen, vals)))


def vectors(N, count):
    return st.lists(
        st.lists(st.floats(-2, 2, allow_nan=False), min_size=N, max_size=N).map(np.array),
        min_size=count,
        max_size=count,
    )


# -- construction ------------------------------------------------------------


def test_repeated_index_is_zero():
    assert R8.dx("x", "x").is_zero()
    assert wedge(R8.dx("q"), R8.dx("q")).is_zero()


def test_basis_sign_follows_chart_order():
    a = R8.dx("q", "px")
    b = R8.dx("px", "q")
    assert a[(2, 3)] == 1.0
    assert b[(2, 3)] == -1.0
    assert b[(3, 2)] == 1.0


def test_triple_wedge_matches_dense_antisymmetrization():
    w = wedge(R8.dx("q", "px"), R8.dx("y"))
    assert w.coeffs == {(1, 2, 3): 1.0}
    T = dense(w.coeffs, 3, 8)
    E = np.eye(8)
    # q, px, y in that order is an even permutation of y, q, px
    assert dense_eval(T, [E[2], E[3], E[1]]) == 1.0


def test_zero_coefficients_dropped_and_equality():
    a = FormValue(2, 4, {(0, 1): 1.0, (1, 0): 1.0, (2, 3): 0.0})
    assert a.is_zero()
    assert a == FormValue.zero(2, 4)
    assert FormValue(1, 3, {(0,): 2.0}) != FormValue(1, 3, {(0,): 2.5})


def test_invalid_construction():
    with pytest.raises(ValueError):
        FormValue(2, 3, {(0,): 1.0})
    with pytest.raises(ValueError):
        FormValue(1, 3, {(5,): 1.0})
    with pytest.raises(ValueError):
        R8.dx("q") + R8.dx("q", "u")


def test_numpy_scalar_multiplication():
    w = np.float64(2.0) * R8.dx("q")
    assert isinstance(w, FormValue)
    assert w[(2,)] == 2.0


# -- interior products ---------------------------------------------------------


def test_interior_examples():
    assert interior(np.zeros(8), R8.dx("q", "u", "w")).is_zero()
    assert interior(R8.coord("u"), R8.dx("q", "u", "w")) == -R8.dx("q", "w")
    assert interior(R8.coord("y"), omega_r8()) == R8.dx("q", "px")


def test_interior_of_zero_form_rejected():
    with pytest.raises(ValueError):
        interior(np.ones(3), FormValue.scalar(1.0, 3))


def test_interior_decomposable_examples():
    om = omega_r8()
    assert interior_decomposable([R8.coord("x"), R8.coord("y")], om).is_zero()
    res = interior_decomposable([R8.coord("u"), R8.coord("w")], R8.dx("q", "u", "w"))
    assert set(res.coeffs) == {(2,)}
    assert abs(res[(2,)]) == 1.0
    v = np.arange(8.0)
    assert interior_decomposable([v, R8.coord("q"), v], om).is_zero()


def test_interior_decomposable_is_nested_contraction():
    rng = np.random.default_rng(3)
    for _ in range(30):
        N = int(rng.integers(3, 7))
        k = int(rng.integers(1, N + 1))
        r = int(rng.integers(1, k + 1))
        om = FormValue(k, N, random_coeffs(rng, k, N))
        vs = list(rng.normal(size=(r, N)))
        nested = om
        for v in reversed(vs):
            nested = interior(v, nested)
        assert interior_decomposable(vs, om).allclose(nested, 1e-11)


def test_interior_against_dense_oracle():
    rng = np.random.default_rng(4)
    for _ in range(40):
        N = int(rng.integers(2, 7))
        k = int(rng.integers(1, N + 1))
        om = FormValue(k, N, random_coeffs(rng, k, N))
        v = rng.normal(size=N)
        T = np.tensordot(v, dense(om.coeffs, k, N), axes=(0, 0))
        assert close_maps(interior(v, om).coeffs, coefficients(lambda vs: dense_eval(T, vs), k - 1, N), 1e-12)


# -- wedge ---------------------------------------------------------------------


def test_wedge_against_shuffle_oracle():
    rng = np.random.default_rng(5)
    for _ in range(40):
        N = int(rng.integers(2, 7))
        k = int(rng.integers(0, N + 1))
        l = int(rng.integers(0, N - k + 1))
        a = FormValue(k, N, random_coeffs(rng, k, N))
        b = FormValue(l, N, random_coeffs(rng, l, N))
        Ta, Tb = dense(a.coeffs, k, N), dense(b.coeffs, l, N)
        ref = coefficients(lambda vs: wedge_eval(Ta, Tb, vs), k + l, N)
        assert close_maps(wedge(a, b).coeffs, ref, 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_graded_commutativity(data):
    a = data.draw(forms())
    b = data.draw(forms(dim=a.dim))
    assert wedge(a, b).allclose(wedge(b, a) * (-1) ** (a.degree * b.degree), 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_antiderivation(data):
    a = data.draw(forms())
    b = data.draw(forms(dim=a.dim))
    if a.degree + b.degree == 0:
        return
    v = data.draw(vectors(a.dim, 1))[0]
    lhs = interior(v, wedge(a, b))
    zero = FormValue.zero(a.degree + b.degree - 1, a.dim)
    ia = wedge(interior(v, a), b) if a.degree else zero
    ib = wedge(a, interior(v, b)) * (-1) ** a.degree if b.degree else zero
    assert lhs.allclose(ia + ib, 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_interior_twice_vanishes(data):
    om = data.draw(forms())
    if om.degree < 2:
        return
    v = data.draw(vectors(om.dim, 1))[0]
    assert interior(v, interior(v, om)).norm() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_evaluate_matches_dense(data):
    om = data.draw(forms())
    vs = data.draw(vectors(om.dim, om.degree))
    T = dense(om.coeffs, om.degree, om.dim)
    assert om.evaluate(vs) == pytest.approx(dense_eval(T, vs), abs=1e-9)


def test_to_dense_matches_oracle():
    rng = np.random.default_rng(6)
    om = FormValue(3, 5, random_coeffs(rng, 3, 5))
    assert np.allclose(om.to_dense(), dense(om.coeffs, 3, 5), atol=0, rtol=0)


def test_multivector_from_vectors():
    v = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0]])
    mv = MultivectorValue.from_vectors(v)
    assert close_maps(mv.coeffs, {(0, 1): 1.0, (0, 2): 3.0, (1, 2): 6.0}, 1e-14)


# -- linear maps ---------------------------------------------------------------


def test_pullback_examples():
    om = omega_r8()
    assert pullback_linear(np.eye(8), om) == om
    assert pullback_linear(np.zeros((8, 8)), om).is_zero()
    keep = [i for i in range(8) if i != R8.index("v")]
    slice_inj = np.eye(8)[:, keep]
    pulled = pullback_linear(slice_inj, om)
    relabel = {old: new for new, old in enumerate(keep)}
    expected = {tuple(relabel[i] for i in I): c for I, c in om.items()}
    assert pulled.coeffs == expected


def test_pullback_against_evaluation():
    rng = np.random.default_rng(7)
    for _ in range(30):
        N, Np = int(rng.integers(2, 7)), int(rng.integers(1, 7))
        k = int(rng.integers(0, min(N, Np) + 1))
        om = FormValue(k, N, random_coeffs(rng, k, N))
        J = rng.normal(size=(N, Np)) * (rng.random((N, Np)) < 0.6)
        pulled = pullback_linear(J, om)
        assert pulled.dim == Np
        us = list(rng.normal(size=(k, Np)))
        assert pulled.evaluate(us) == pytest.approx(om.evaluate([J @ u for u in us]), abs=1e-10)


def test_pullback_shape_checked():
    with pytest.raises(ValueError):
        pullback_linear(np.eye(3), omega_r8())


def test_derivation_linear_is_derivative_of_pullback():
    rng = np.random.default_rng(8)
    om = FormValue(3, 5, random_coeffs(rng, 3, 5))
    A = rng.normal(size=(5, 5))
    t = 1e-6
    fd = (pullback_linear(np.eye(5) + t * A, om) - pullback_linear(np.eye(5) - t * A, om)) * (1 / (2 * t))
    assert derivation_linear(A, om).allclose(fd, 1e-7)


# -- calculus ------------------------------------------------------------------


def test_d_of_constant_form_vanishes():
    F = FormField.constant(R8, omega_r8())
    assert exterior_derivative_fd(F, np.linspace(-1, 1, 8)).norm() <= 1e-10


def test_d_of_q_dx():
    chart = FiberedChart(1, 1, ("x", "q"))
    F = FormField(chart, 1, lambda p: FormValue(1, 2, {(0,): p[1]}))
    dF = exterior_derivative_fd(F, np.array([0.3, -0.7]))
    # d(q dx) = dq ^ dx = -dx ^ dq
    assert set(dF.coeffs) == {(0, 1)}
    assert dF[(0, 1)] == pytest.approx(-1.0, abs=1e-8)


def _poly_form_field(rng, N, k):
    keys = list(itertools.combinations(range(N), k))
    polys = {I: (rng.normal(), rng.normal(size=N), rng.normal(size=(N, N))) for I in keys if rng.random() < 0.7}
    chart = FiberedChart(1, N - 1)

    def ev(p):
        return FormValue(k, N, {I: c + g @ p + p @ Q @ p for I, (c, g, Q) in polys.items()})

    return FormField(chart, k, ev)


def test_d_squared_vanishes():
    rng = np.random.default_rng(9)
    for _ in range(10):
        N = int(rng.integers(3, 6))
        k = int(rng.integers(0, N - 1))
        F = _poly_form_field(rng, N, k)
        dF = FormField(F.chart, k + 1, lambda p, F=F: exterior_derivative_fd(F, p))
        p = rng.uniform(-1, 1, N)
        assert exterior_derivative_fd(dF, p).norm() <= 1e-5


def test_d_matches_analytic_derivative():
    rng = np.random.default_rng(10)
    F = _poly_form_field(rng, 4, 1)
    p = rng.uniform(-1, 1, 4)
    dF = exterior_derivative_fd(F, p)
    # (dF)(u, v) = D_u F(v) - D_v F(u) for a 1-form; check against the polynomial gradient
    h = 1e-6
    u, v = rng.normal(size=(2, 4))
    Du = (F(p + h * u) - F(p - h * u)) * (1 / (2 * h))
    Dv = (F(p + h * v) - F(p - h * v)) * (1 / (2 * h))
    assert dF.evaluate([u, v]) == pytest.approx(Du.evaluate([v]) - Dv.evaluate([u]), abs=1e-6)


def test_lie_derivative_cartan_formula():
    rng = np.random.default_rng(11)
    F = _poly_form_field(rng, 4, 2)
    chart = F.chart
    Y = VectorField(chart, lambda p: np.array([p[1], p[0] * p[2], 1.0, -p[3] ** 2]))
    p = rng.uniform(-1, 1, 4)
    dF = FormField(chart, 3, lambda q: exterior_derivative_fd(F, q))
    iYF = FormField(chart, 1, lambda q: interior(Y(q), F(q)))
    cartan = interior(Y(p), dF(p)) + exterior_derivative_fd(iYF, p)
    assert lie_derivative_form_fd(Y, F, p).allclose(cartan, 1e-6)


# -- contact structure ---------------------------------------------------------


def _jet_chart():
    # base x, t; field u; velocities u_x, u_t
    return FiberedChart(2, 3, ("x", "t", "u", "u_x", "u_t"), JetChartMeta({3: (2, 0), 4: (2, 1)}))


def test_contact_substitution():
    chart = _jet_chart()
    p = np.array([0.1, 0.2, 0.3, 1.5, -2.0])
    theta = contact_forms(chart.jet, p, chart.dim)[2]
    assert contact_substitute(theta, chart.jet, p).norm() <= 1e-15
    dxdt = chart.dx("x", "t")
    assert contact_substitute(dxdt, chart.jet, p) == dxdt
    sub = contact_substitute(chart.dx("u"), chart.jet, p)
    assert sub == one_form([1.5, -2.0, 0, 0, 0])


def test_contact_substitute_requires_jet():
    with pytest.raises(ValueError):
        contact_substitute(R8.dx("q"), None, np.zeros(8))


def test_json_round_trip():
    om = omega_r8() * 0.5
    data = json.loads(om.dumps())
    assert FormValue.from_json(data) == om
    assert data["degree"] == 3 and data["dim"] == 8
