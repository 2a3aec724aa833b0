import math

import numpy as np
import pytest
from scipy import integrate, linalg, special

from conftest import numeric_derivative, random_hermitian
from spectralshift.dirac_example import (
    HEDGEHOG_INDEX_SIGN,
    ExampleKernels,
    PotentialV,
    bessel_ratio,
    eta_example,
    functional_equation_closure,
    index_constant,
    index_density,
    integrated_index_density,
    limit_propagator,
    propagate,
    schlafli_residuals,
    winding_constant,
    winding_index,
    x_rule,
    xi_example,
)
from spectralshift.errors import ContractViolation, DomainError


def ode_reference(T, y1, y2):
    """``U(y1, y2)`` by integrating ``u' = i T(y) u`` column-wise with a tight RK solver."""
    n = np.asarray(T(y2)).shape[0]
    rhs = lambda y, u: (1j * np.asarray(T(y)) @ u.reshape(n, n)).ravel()
    sol = integrate.solve_ivp(rhs, (y2, y1), np.eye(n, dtype=complex).ravel(), method="DOP853",
                              rtol=1e-12, atol=1e-13)
    return sol.y[:, -1].reshape(n, n)


def non_commuting_path(rng):
    P, Q = random_hermitian(rng, 2), random_hermitian(rng, 2)
    return lambda y: math.cos(y) * P + math.sin(2 * y) * Q


def as_generic(V):
    """The same potential without the separable shortcut."""
    return PotentialV(V.name + "-generic", V.d, V.dim_G, V.value, V.grad_x, y_support=V.y_support)


# ----------------------------------------------------------------- propagators
def test_constant_path(rng):
    T0 = random_hermitian(rng, 3)
    U, _ = propagate(lambda y: T0, 1.3, -0.4)
    assert np.allclose(U, linalg.expm(1j * 1.7 * T0), atol=1e-9)
    Uc, _ = propagate(lambda y: T0, 1.3, -0.4, commuting=True)
    assert np.allclose(Uc, linalg.expm(1j * 1.7 * T0), atol=1e-13)


def test_commuting_family(rng):
    T0 = random_hermitian(rng, 2)
    U, _ = propagate(lambda y: math.exp(-y ** 2) * T0, 2.0, -1.0, commuting=True)
    g = math.sqrt(math.pi) / 2 * (math.erf(2.0) + math.erf(1.0))
    assert np.allclose(U, linalg.expm(1j * g * T0), atol=1e-12)


def test_generic_path_against_ode(rng):
    T = non_commuting_path(rng)
    U, info = propagate(T, 2.0, -1.0)
    assert info["unitarity"] <= 1e-8
    assert np.abs(U - ode_reference(T, 2.0, -1.0)).max() <= 1e-7


def test_cocycle(rng):
    T = non_commuting_path(rng)
    Uab, _ = propagate(T, 2.0, 0.5)
    Ubc, _ = propagate(T, 0.5, -1.0)
    Uac, _ = propagate(T, 2.0, -1.0)
    assert np.abs(Uab @ Ubc - Uac).max() <= 1e-8


def test_rejects_non_hermitian_path():
    with pytest.raises(ContractViolation):
        propagate(lambda y: np.array([[0, 1], [0, 0]], dtype=complex), 1.0, 0.0)


def test_limit_propagator_cases():
    assert np.allclose(limit_propagator(PotentialV.zero(), np.zeros(3)), np.eye(2))
    V = PotentialV.hedgehog()
    x = np.array([0.3, -0.5, 0.8])
    assert np.allclose(limit_propagator(V, x), linalg.expm(1j * V.H(x)), atol=1e-13)


def test_limit_propagator_generic():
    V = PotentialV.two_layer(seed=3)
    x = np.array([0.2, 0.1, -0.4])
    U = limit_propagator(V, x)
    T = lambda y: V.value(x[None], y)[0]
    assert np.abs(U - ode_reference(T, 4.0, -4.0)).max() <= 1e-7


def test_separable_shortcut_matches_generic_propagation():
    V = PotentialV.hedgehog(sigma_y=0.7)
    x = np.array([0.4, 0.2, -0.3])
    G = as_generic(V)
    assert np.abs(limit_propagator(G, x) - limit_propagator(V, x)).max() <= 1e-7


def test_phi_normalisation_checked():
    V = PotentialV.hedgehog()
    with pytest.raises(DomainError):
        PotentialV(V.name, 3, 2, V.value, V.grad_x, True, lambda y: 2 * V.phi(y), V.Phi, V.Phi_inv, V.H, V.gradH)


# ------------------------------------------------------------------- constants
def test_winding_constant_d3():
    assert abs(winding_constant(3) - (-1 / (24 * math.pi ** 2))) <= 1e-15 * (1 / (24 * math.pi ** 2))


def test_index_constant_d3():
    assert index_constant(3) == pytest.approx((2 / 3) * (4 * math.pi) ** -1.5 * 2j, rel=1e-15)


# ---------------------------------------------------------------- index density
def test_zero_potential_density():
    assert index_density(PotentialV.zero(), np.array([0.1, 0.5, -0.2])) == 0


def test_radial_rule_matches_full_rule():
    V = PotentialV.hedgehog()
    z = np.array([0.3, -0.2, 0.9])
    radial = index_density(V, z)
    full = index_density(V, z, rule=x_rule(as_generic(V), n_r=160, n_theta=16, n_phi=16))
    assert abs(radial - full) <= 1e-8 * abs(radial)


def test_cyclic_slot_invariance():
    V = PotentialV.hedgehog()
    z = np.array([[0.3, -0.2, 0.9], [1.1, 0.0, -0.5]])
    base = index_density(V, z)
    for start in (1, 2):
        assert np.all(np.abs(index_density(V, z, start=start) - base) <= 1e-9 * np.abs(base))


def test_generic_density_matches_separable():
    V = PotentialV.hedgehog()
    G = as_generic(V)
    rule = x_rule(G, n_r=2, n_theta=2, n_phi=2)
    z = np.array([0.3, -0.2, 0.9])
    sep = index_density(V, z, rule=rule)
    gen = index_density(G, z, rule=rule)
    assert abs(gen - sep) <= 1e-7 * abs(sep)
    assert abs(index_density(G, z, rule=rule, start=1) - gen) <= 1e-9 * abs(gen)


def test_scalar_density_integrates_to_zero():
    S = PotentialV.scalar()
    out = integrated_index_density(S, n=6, method="grid", rule=x_rule(S, n_r=20, n_theta=6, n_phi=6))
    assert abs(out["index"]) < 1e-2


def test_hedgehog_density_grid():
    out = integrated_index_density(PotentialV.hedgehog(), n=12, method="grid")
    assert out["index"] == pytest.approx(HEDGEHOG_INDEX_SIGN, abs=1e-3)
    assert abs(out["imag"]) < 1e-10


def test_hedgehog_density_mc_stderr():
    out = integrated_index_density(PotentialV.hedgehog(), n=2048, method="mc", seed=1)
    assert abs(out["index"] - HEDGEHOG_INDEX_SIGN) <= 5 * out["index_stderr"] + 1e-3


# --------------------------------------------------------------------- kernels
def test_bessel_ratio_against_scipy():
    a = np.array([0.3, 1.0, 5.0, 40.0])
    lam = np.array([0.2, 1.5, 3.0, 9.0])
    for nu in (-0.5, 0.0, 0.5, 1.5, 2.0, 2.5):
        ref = (lam / a) ** (nu / 2) * special.jv(nu, 2 * np.sqrt(a * lam))
        assert np.allclose(bessel_ratio(nu, a, lam), ref, rtol=1e-12, atol=1e-14)


def test_bessel_ratio_small_a_limit():
    lam = np.array([0.5, 2.0])
    for nu in (0.5, 2.0):
        assert np.allclose(bessel_ratio(nu, 0.0, lam), lam ** nu / math.gamma(nu + 1), rtol=1e-14)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.0])
def test_bessel_derivative_identity(nu):
    a = 0.8
    for lam in (0.3, 1.2, 4.0):
        fd = numeric_derivative(lambda x: float(bessel_ratio(nu, a, x)), lam, 1, h=1e-2)
        assert fd == pytest.approx(float(bessel_ratio(nu - 1, a, lam)), rel=1e-9)


def test_schlafli():
    rows = schlafli_residuals(3)
    assert len(rows) == 9
    assert max(r["residual"] for r in rows) <= 1e-8


def test_a_nonnegative_and_zero_iff_equal(rng):
    K = ExampleKernels(3)
    assert np.all(K.a(rng.normal(size=(5, 3))) > 0)
    assert np.all(K.a(np.full((1, 3), 0.7)) == 0)


def test_omega_equal_components():
    K = ExampleKernels(3)
    mass = K.rule.weights.sum()
    mu = np.array([0.25, 1.0, 2.0])
    got = K.omega(mu, np.full((1, 3), 0.4))[:, 0]
    assert np.allclose(got, 0.5 * mass * mu ** 0.5 / math.gamma(1.5), rtol=1e-13)


def test_sigma_derivative():
    K = ExampleKernels(3)
    z = np.array([[0.2, -0.4, 0.9]])
    for lam in (0.5, 1.5):
        fd = numeric_derivative(lambda x: K.sigma(np.array([x]), z)[0, 0], lam, 2, h=5e-2, levels=5)
        assert fd == pytest.approx(K.sigma_dminus1(np.array([lam]), z)[0, 0], rel=1e-5)


def test_kernels_reject_d1():
    with pytest.raises(DomainError):
        ExampleKernels(1)


# ------------------------------------------------------------- eta, xi, winding
def test_zero_potential_eta_xi():
    V = PotentialV.zero()
    rule = x_rule(V, n_r=8)
    assert np.all(eta_example(V, [0.5, 1.0], n=16, rule=rule) == 0)
    assert np.all(xi_example(V, [0.5, 1.0], n=16, rule=rule) == 0)


def test_functional_equation_closure_hedgehog():
    out = functional_equation_closure(PotentialV.hedgehog(), n=8, method="grid")
    assert out["max_rel_gap"] <= 0.05


def test_functional_equation_closure_scalar():
    S = PotentialV.scalar()
    out = functional_equation_closure(S, n=6, method="grid", rule=x_rule(S, n_r=20, n_theta=6, n_phi=6))
    assert np.all(np.abs(out["xi_direct"]) < 1e-12)
    assert np.all(np.abs(out["xi_from_eta"]) < 1e-12)


def test_winding_constant_field():
    U = np.broadcast_to(linalg.expm(1j * np.array([[0.0, 1.0], [1.0, 0.0]])), (20, 20, 20, 2, 2))
    assert abs(winding_index(U)["index"]) < 1e-14


def test_winding_scalar():
    out = winding_index(PotentialV.scalar(), n=48)
    assert abs(out["index"]) < 1e-10


def test_winding_hedgehog():
    out = winding_index(PotentialV.hedgehog(), n=96)
    assert out["nearest_integer"] == HEDGEHOG_INDEX_SIGN
    assert abs(out["index"] - HEDGEHOG_INDEX_SIGN) <= 1e-2


def test_winding_truncation_diagnostic():
    with pytest.raises(DomainError):
        winding_index(PotentialV.hedgehog(), L=1.0, n=24)
