import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
import mpmath
from scipy import integrate, special

from conftest import mp_divided_difference, mp_divided_difference_fn
from spectralshift.divdiff import (
    ScalarFunctionFamily,
    bspline_density,
    dirichlet_mass,
    divided_difference,
    divided_difference_batch,
    genochi_hermite,
    simplex_integrate,
    simplex_rule,
)
from spectralshift.errors import CapabilityError, DomainError, EvaluationError, ShapeError, UnsupportedOrderError

EXP = ScalarFunctionFamily.exponential


# ------------------------------------------------------------- function family
def test_exponential_derivatives_exact():
    f = EXP(1.7)
    x = np.linspace(-1, 3, 7)
    for k in range(6):
        assert np.allclose(f.derivative(k, x), (-1.7) ** k * np.exp(-1.7 * x), rtol=1e-15, atol=0)
    assert np.array_equal(f.derivative(0, x), np.exp(-1.7 * x))


def test_gaussian_tail_matches_exponential_on_half_line():
    g, f = ScalarFunctionFamily.gaussian_tail(0.8), EXP(0.8)
    x = np.linspace(0, 4, 9)
    for k in range(4):
        assert np.allclose(g.derivative(k, x), f.derivative(k, x), rtol=1e-14)


def test_gaussian_tail_derivative_oracle():
    g = ScalarFunctionFamily.gaussian_tail(0.8)
    val = lambda y: math.exp(-0.8 * y - y * y * math.exp(-1 / y ** 2)) if y < 0 else math.exp(-0.8 * y)
    for x in (-1.3, -0.6, -0.2):
        h = 1e-5
        fd = (val(x + h) - val(x - h)) / (2 * h)
        assert g.derivative(1, np.array([x]))[0] == pytest.approx(fd, rel=1e-8)
        assert g.derivative(0, np.array([x]))[0] == pytest.approx(val(x), rel=1e-14)


def test_family_domain_errors():
    with pytest.raises(DomainError):
        EXP(0.0)
    with pytest.raises(DomainError):
        ScalarFunctionFamily.gaussian_tail(-1.0)


# ------------------------------------------------------------ divided differences
def test_spec_examples():
    assert divided_difference(ScalarFunctionFamily.monomial(2), [1.0, 3.0]) == pytest.approx(4.0)
    assert divided_difference(EXP(1.0), [0.0, 0.0, 0.0]) == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7])
def test_leading_coefficient(n, rng):
    f = ScalarFunctionFamily.monomial(n)
    for _ in range(5):
        nodes = rng.uniform(-2, 2, n + 1)
        assert divided_difference(f, nodes) == pytest.approx(1.0, rel=1e-9)
    assert divided_difference(f, np.full(n + 1, 0.3)) == pytest.approx(1.0, rel=1e-12)


def test_confluent_mixed_nodes_against_quadrature():
    f = EXP(2.0)
    nodes = [0.1, 0.7, 0.7, 1.3]
    gh = genochi_hermite(f, nodes, simplex_rule(3, exactness=20))
    assert divided_difference(f, nodes) == pytest.approx(gh, rel=1e-8)
    assert divided_difference(f, nodes) == pytest.approx(mp_divided_difference(2.0, nodes), rel=1e-13)


def test_capability_error():
    f = EXP(1.0, n_max=2)
    with pytest.raises(CapabilityError):
        divided_difference(f, [0, 1, 2, 3])


def test_recursion_method_exact_confluent():
    f = EXP(1.0)
    assert divided_difference(f, [1.0, 1.0], method="recursion") == pytest.approx(-math.exp(-1), rel=1e-15)


def test_batch_matches_scalar(rng):
    f = EXP(0.7)
    nodes = rng.uniform(0, 5, (10, 4))
    batch = divided_difference_batch(f, nodes)
    assert np.allclose(batch, [divided_difference(f, r) for r in nodes], rtol=1e-15)


@given(st.lists(st.floats(-3, 6, allow_nan=False), min_size=2, max_size=7), st.randoms())
def test_permutation_symmetry(nodes, rnd):
    f = EXP(1.0)
    shuffled = list(nodes)
    rnd.shuffle(shuffled)
    a, b = divided_difference(f, nodes), divided_difference(f, shuffled)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(st.lists(st.floats(-2, 8, allow_nan=False), min_size=2, max_size=7),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_against_extended_precision_recursion(nodes, t):
    f = EXP(t)
    ref = mp_divided_difference(t, nodes)
    assert divided_difference(f, nodes) == pytest.approx(ref, rel=1e-9, abs=1e-300)


@given(st.integers(1, 5), st.data())
def test_leibniz_rule(n, data):
    # Dif_n(g f)(l_0..l_n) = sum_k Dif_k g(l_0..l_k) Dif_{n-k} f(l_k..l_n)
    lam = np.array(data.draw(st.lists(st.floats(-2, 2, allow_nan=False), min_size=n + 1, max_size=n + 1)))
    gc = np.array(data.draw(st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=4)))
    f = EXP(1.0)
    g = ScalarFunctionFamily.polynomial(gc, n_max=10)
    # the product g * exp(-x) is not in the family: extended precision recursion
    coeffs = [mpmath.mpf(float(c)) for c in gc]
    fun = lambda x: sum(c * x ** i for i, c in enumerate(coeffs)) * mpmath.exp(-x)
    lhs = mp_divided_difference_fn(fun, lambda x, L: mpmath.diff(fun, x, L), lam)
    rhs = sum(divided_difference(g, lam[: k + 1]) * divided_difference(f, lam[k:]) for k in range(n + 1))
    assert rhs == pytest.approx(lhs, rel=1e-8, abs=1e-10)


def test_clustered_nodes_stable():
    f = EXP(1.0)
    base = np.array([0.5, 0.5 + 1e-9, 0.5 + 2e-9, 3.0, 3.0 + 1e-9])
    ref = mp_divided_difference(1.0, base)
    assert divided_difference(f, base) == pytest.approx(ref, rel=1e-10)


# ------------------------------------------------------------------ simplex rules
def test_uniform_mass_is_inverse_factorial():
    for n in range(0, 6):
        assert simplex_rule(n).weights.sum() == pytest.approx(1 / math.factorial(n), rel=1e-13)


def test_uniform_integrate_constant_n2():
    assert simplex_integrate(lambda s: np.ones(len(s)), simplex_rule(2)) == pytest.approx(0.5, rel=1e-14)


def test_dirichlet_mass_d3():
    r = simplex_rule(2, kind="dirichlet")
    assert r.weights.sum() == pytest.approx(2 * math.pi, rel=1e-13)
    # adaptive quadrature oracle of int_{Delta_2} (s0 s1 s2)^(-1/2)
    val, _ = integrate.dblquad(lambda s1, s0: ((s0 * s1 * (1 - s0 - s1)) ** -0.5),
                               0, 1, 0, lambda s0: 1 - s0, epsabs=1e-10)
    assert val == pytest.approx(2 * math.pi, rel=1e-6)


def test_dirichlet_simplex_constant_d3():
    r = simplex_rule(2, kind="dirichlet")
    val = simplex_integrate(lambda s: np.full(len(s), (4 * math.pi) ** -1.5), r)
    assert val == pytest.approx(0.14104739589, rel=1e-10)
    assert val == pytest.approx(1 / (4 * math.sqrt(math.pi)), rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_dirichlet_mass_formula(n):
    assert simplex_rule(n, kind="dirichlet").weights.sum() == pytest.approx(dirichlet_mass(n), rel=1e-13)
    assert dirichlet_mass(n) == pytest.approx(special.gamma(0.5) ** (n + 1) / special.gamma((n + 1) / 2))


def test_rule_nodes_in_simplex():
    for kind in ("uniform", "dirichlet"):
        r = simplex_rule(3, exactness=10, kind=kind)
        assert np.all(r.nodes >= 0)
        assert np.allclose(r.nodes.sum(axis=1), 1)


def test_uniform_rule_exact_on_monomials():
    # int_{Delta_n} s^alpha ds = prod alpha_i! / (n + |alpha|)!
    r = simplex_rule(3, exactness=8)
    alpha = np.array([2, 1, 3, 0])
    val = simplex_integrate(lambda s: np.prod(s ** alpha, axis=1), r)
    exact = np.prod([math.factorial(a) for a in alpha]) / math.factorial(3 + alpha.sum())
    assert val == pytest.approx(exact, rel=1e-13)


def test_nan_integrand_reports_node():
    r = simplex_rule(2, exactness=4)
    with pytest.raises(EvaluationError, match="simplex node"):
        simplex_integrate(lambda s: np.where(s[:, 0] > 0.5, np.nan, 1.0), r)


def test_genochi_hermite_examples():
    for n in (1, 3, 5):
        f = ScalarFunctionFamily.monomial(n)
        assert genochi_hermite(f, np.linspace(-1, 2, n + 1), simplex_rule(n, exactness=0)) == pytest.approx(1.0)
    assert genochi_hermite(ScalarFunctionFamily.monomial(2), [1, 3], simplex_rule(1)) == pytest.approx(4.0)
    f = EXP(1.0)
    assert genochi_hermite(f, [0, 1, 2], simplex_rule(2, exactness=12)) == pytest.approx(
        mp_divided_difference(1.0, [0, 1, 2]), rel=1e-10)


def test_genochi_hermite_errors():
    f = EXP(1.0)
    with pytest.raises(ShapeError):
        genochi_hermite(f, [0, 1, 2], simplex_rule(1))
    with pytest.raises(ShapeError):
        genochi_hermite(f, [0, 1, 2], simplex_rule(2, kind="dirichlet"))


# ------------------------------------------------------------------ B-splines
def test_bspline_uniform():
    rho = bspline_density([0, 1])
    assert rho.total_mass() == pytest.approx(1.0)
    assert rho.evaluate(np.array([0.25, 0.75])) == pytest.approx([1.0, 1.0])


def test_bspline_confluent_atom():
    rho = bspline_density([0, 0, 0])
    assert rho.n_pieces == 0
    assert rho.atoms == [(0.0, 0.5)]


def test_bspline_hat():
    rho = bspline_density([0, 1, 2])
    assert rho.total_mass() == pytest.approx(0.5)
    assert rho.evaluate(np.array([1.0]))[0] == pytest.approx(0.5)
    for f in (ScalarFunctionFamily.monomial(2), ScalarFunctionFamily.monomial(3), EXP(1.0)):
        paired = rho.pair(lambda x: f.derivative(2, x))
        assert paired == pytest.approx(divided_difference(f, [0, 1, 2]), rel=1e-12)
    # quadrature oracle of the same pairing
    val, _ = integrate.quad(lambda x: math.exp(-x) * float(rho.evaluate(np.array([x]))[0]), 0, 2, points=[1])
    assert val == pytest.approx(divided_difference(EXP(1.0), [0, 1, 2]), rel=1e-10)


def test_bspline_order_zero_rejected():
    with pytest.raises(UnsupportedOrderError):
        bspline_density([1.0])


@given(st.lists(st.floats(-3, 5, allow_nan=False), min_size=2, max_size=7),
       st.sampled_from(["exp0.5", "exp1", "exp2", "cubic", "tail"]))
def test_bspline_pairing_property(nodes, fam):
    n = len(nodes) - 1
    f = {"exp0.5": EXP(0.5), "exp1": EXP(1.0), "exp2": EXP(2.0),
         "cubic": ScalarFunctionFamily.polynomial([0.3, -1.0, 0.5, 2.0], n_max=10),
         "tail": ScalarFunctionFamily.gaussian_tail(1.0)}[fam]
    rho = bspline_density(nodes)
    assert rho.total_mass() == pytest.approx(1 / math.factorial(n), rel=1e-9)
    lo, hi = min(nodes), max(nodes)
    if rho.n_pieces:
        assert rho.breakpoints[0] >= lo and rho.breakpoints[-1] <= hi
    expected = divided_difference(f, nodes)
    paired = rho.pair(lambda x: f.derivative(n, x), panels=16)
    hull = np.linspace(lo, hi, 50)
    scale = max(abs(expected), np.max(np.abs(f.derivative(n, hull))) / math.factorial(n))
    # Dif_n of a polynomial of degree < n is 0 up to roundoff of the function values
    floor = 1e-12 * max(1.0, np.max(np.abs(f(hull))))
    assert abs(paired - expected) <= 1e-9 * scale + floor
