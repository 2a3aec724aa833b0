"""The massless Dirac-Schroedinger example in ``d + 1`` dimensions.

Here ``A(x) = i d/dy + V(x, .)`` acts on ``L^2(R, G)``. Everything reduces
to the index density

    ind_V(z) = (2/d)(4 pi)^(-d/2) (2i)^((d-1)/2)
               int_x Tr_G prod_j dV(x, z_{j-1}) U(z_{j-1}, z_j),   z_0 := z_d,

integrated against the Bessel kernels ``Omega_d`` (for ``eta``) and
``Sigma_d`` (for ``xi``). The Witten index is also given by the degree of
the limiting unitary ``U^V``.

For separable ``V(x, y) = phi(y) H(x)`` the propagators are
``exp(i (w_{j-1} - w_j) H(x))`` with ``w = Phi(z)`` the cumulative of
``phi``, so the ``z``-integral becomes an integral over ``w in [0,1]^d``.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .clifford import PAULI, levi_civita
from .divdiff import simplex_rule
from .errors import ContractViolation, DomainError, NoLimitError, ShapeError

__all__ = [
    "PotentialV",
    "propagate",
    "limit_propagator",
    "index_constant",
    "winding_constant",
    "XRule",
    "x_rule",
    "index_density",
    "integrated_index_density",
    "ExampleKernels",
    "bessel_ratio",
    "schlafli_residuals",
    "eta_example",
    "xi_example",
    "xi_dminus1_example",
    "functional_equation_closure",
    "pipeline_index",
    "winding_index",
    "HEDGEHOG_INDEX_SIGN",
]

# observed sign of the hedgehog index with the orientation conventions used here
HEDGEHOG_INDEX_SIGN = -1


def _expi_hermitian(H, theta=1.0):
    """``exp(i theta H)`` for a batch of Hermitian matrices, ``theta`` broadcast over the batch."""
    w, V = np.linalg.eigh(H)
    ph = np.exp(1j * np.asarray(theta)[..., None] * w)
    return (V * ph[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


# ------------------------------------------------------------------ potential
@dataclass
class PotentialV:
    """``V(x, y)`` with its ``x``-gradient.

    Separable potentials carry ``phi`` (normalised profile in ``y``), ``H``
    and ``gradH``. ``radial`` marks families whose index integrand is
    rotation invariant in ``x``, so the ``x``-integral reduces to a radial one.
    """

    name: str
    d: int
    dim_G: int
    value: object
    grad_x: object
    separable: bool = False
    phi: object = None
    Phi: object = None
    Phi_inv: object = None
    H: object = None
    gradH: object = None
    y_support: float = 8.0
    x_decay: float = 1.0
    radial: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.separable:
            mass, _ = integrate.quad(self.phi, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
            if abs(mass - 1) > 1e-10:
                raise DomainError(f"profile phi integrates to {mass!r}, expected 1")

    def check_hermitian(self, x, y, tol=1e-12):
        M = self.value(np.atleast_2d(x), y)
        defect = np.abs(M - np.conj(np.swapaxes(M, -1, -2))).max()
        if defect > tol * max(1.0, np.abs(M).max()):
            raise ContractViolation(f"V is not Hermitian (defect {defect:.3e})")

    @classmethod
    def _separable(cls, name, d, dim_G, H, gradH, sigma_y, radial, params):
        s = float(sigma_y)
        phi = lambda y: np.exp(-0.5 * (np.asarray(y) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        Phi = lambda y: special.ndtr(np.asarray(y) / s)
        Phi_inv = lambda w: s * special.ndtri(np.asarray(w))
        value = lambda X, y: np.asarray(phi(y))[..., None, None] * H(X)
        grad = lambda X, y: np.asarray(phi(y))[..., None, None, None] * gradH(X)
        return cls(name, d, dim_G, value, grad, True, phi, Phi, Phi_inv, H, gradH,
                   y_support=8 * s, radial=radial, params=dict(params, sigma_y=s))

    @classmethod
    def hedgehog(cls, sigma_y=1.0):
        """``phi(y) f(|x|) xhat.sigma`` with ``f(r) = pi r^2/(1 + r^2)`` on ``G = C^2``."""
        sig = np.array(PAULI)

        def H(X):
            r2 = np.sum(X ** 2, axis=-1)
            s = math.pi * np.sqrt(r2) / (1 + r2)  # f(r)/r
            return np.einsum("...,...a,aij->...ij", s, X, sig)

        def gradH(X):
            r2 = np.sum(X ** 2, axis=-1)
            r = np.sqrt(r2)
            s = math.pi * r / (1 + r2)
            with np.errstate(divide="ignore", invalid="ignore"):
                dsr = np.where(r > 0, math.pi * (1 - r2) / (1 + r2) ** 2 / r, 0.0)
            G = s[..., None, None] * np.eye(3) + dsr[..., None, None] * X[..., :, None] * X[..., None, :]
            return np.einsum("...ja,aik->...jik", G, sig).astype(complex)

        return cls._separable("hedgehog", 3, 2, H, gradH, sigma_y, True, {})

    @classmethod
    def scalar(cls, d=3, sigma_y=1.0, amplitude=2.0):
        """``G = C``: ``H(x) = amplitude * x_1 exp(-|x|^2/2)``; every index route gives 0."""

        def H(X):
            return (amplitude * X[..., 0] * np.exp(-0.5 * np.sum(X ** 2, axis=-1)))[..., None, None] + 0j

        def gradH(X):
            e = np.exp(-0.5 * np.sum(X ** 2, axis=-1))
            g = -X * X[..., :1] * e[..., None]
            g[..., 0] += e
            return (amplitude * g)[..., None, None] + 0j

        return cls._separable("scalar", d, 1, H, gradH, sigma_y, False, {"amplitude": amplitude})

    @classmethod
    def zero(cls, d=3, dim_G=2):
        H = lambda X: np.zeros(X.shape[:-1] + (dim_G, dim_G), dtype=complex)
        gradH = lambda X: np.zeros(X.shape[:-1] + (d, dim_G, dim_G), dtype=complex)
        return cls._separable("zero", d, dim_G, H, gradH, 1.0, True, {})

    @classmethod
    def two_layer(cls, width=0.5, seed=0):
        """Non-separable, compactly supported in ``y``: two non-commuting layers at ``y = +-1``."""
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
        M = (M + np.conj(np.swapaxes(M, 1, 2))) / 2

        def bump(y):
            u = np.asarray(y, dtype=float) / width
            with np.errstate(divide="ignore", over="ignore"):
                return np.where(np.abs(u) < 1, np.exp(-1 / np.maximum(1 - u ** 2, 1e-300)), 0.0)

        def value(X, y):
            e = np.exp(-0.5 * np.sum(np.atleast_2d(X) ** 2, axis=-1))[..., None, None]
            return (bump(y - 1) * M[0] + bump(y + 1) * M[1])[None] * e

        def grad(X, y):
            X = np.atleast_2d(X)
            e = np.exp(-0.5 * np.sum(X ** 2, axis=-1))
            layer = bump(y - 1) * M[0] + bump(y + 1) * M[1]
            return (-X * e[:, None])[:, :, None, None] * layer

        return cls("two_layer", 3, 2, value, grad, y_support=1 + width, params={"width": width, "seed": seed})


# ----------------------------------------------------------------- propagators
def _tree_product(mats):
    """Ordered product ``mats[-1] @ ... @ mats[0]`` by pairwise reduction."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(mats.shape[-1])[None]], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def propagate(T, y1, y2, tol=1e-9, max_halvings=20, commuting=False, n0=8):
    """Evolution system ``U(y1, y2)`` of ``u' = i T(y) u``.

    Exponential midpoint steps, halved until two successive results differ
    by less than ``tol``. ``commuting=True`` uses ``exp(i int T)``.

    Returns
    -------
    U : ndarray
    info : dict
        ``steps``, ``increment`` and ``unitarity`` residual.
    """
    y1, y2 = float(y1), float(y2)
    if y1 == y2:
        n = np.asarray(T(y1)).shape[-1]
        return np.eye(n, dtype=complex), {"steps": 0, "increment": 0.0, "unitarity": 0.0}

    def sample(ys):
        Ts = np.asarray([T(y) for y in ys])
        defect = np.abs(Ts - np.conj(np.swapaxes(Ts, -1, -2))).max()
        if defect > 1e-12 * max(1.0, np.abs(Ts).max()):
            raise ContractViolation(f"T is not Hermitian along the path (defect {defect:.3e})")
        return Ts

    if commuting:
        u, w = np.polynomial.legendre.leggauss(64)
        ys = y2 + (y1 - y2) * (u + 1) / 2
        integral = np.tensordot(w * (y1 - y2) / 2, sample(ys), axes=1)
        U = _expi_hermitian(integral)
        return U, {"steps": 1, "increment": 0.0, "unitarity": _unitarity(U)}

    prev = None
    n = n0
    for _ in range(max_halvings):
        h = (y1 - y2) / n
        mids = y2 + h * (np.arange(n) + 0.5)
        steps = _expi_hermitian(sample(mids), h)
        U = _tree_product(steps)
        if prev is not None:
            inc = np.abs(U - prev).max()
            if inc < tol:
                return U, {"steps": n, "increment": float(inc), "unitarity": _unitarity(U)}
        prev = U
        n *= 2
    raise NoLimitError("propagator did not converge under step halving", {"steps": n // 2})


def _unitarity(U):
    return float(np.abs(U.conj().T @ U - np.eye(U.shape[0])).max())


def limit_propagator(V, x, tol=1e-8, L0=2.0, L_cap=16.0):
    """``U^V(x) = lim U^{V(x, .)}(L, -L)``; ``exp(i H(x))`` for separable ``V``."""
    x = np.asarray(x, dtype=float)
    if V.separable:
        return _expi_hermitian(V.H(x))
    T = lambda y: V.value(x[None], y)[0]
    L, prev = L0, None
    while L <= L_cap:
        U, _ = propagate(T, L, -L, tol=tol / 10)
        if prev is not None and np.abs(U - prev).max() < tol:
            return U
        prev = U
        L *= 2
    raise NoLimitError(f"U^V did not stabilise up to L = {L_cap}", {"x": x.tolist()})


# ------------------------------------------------------------------- constants
def index_constant(d):
    """``(2/d)(4 pi)^(-d/2)(2i)^((d-1)/2)``."""
    return (2 / d) * (4 * math.pi) ** (-d / 2) * (2j) ** ((d - 1) // 2)


def winding_constant(d):
    """``(2 pi i)^(-(d+1)/2) ((d-1)/2)! / d!``; equals ``-1/(24 pi^2)`` for ``d = 3``."""
    c = (2j * math.pi) ** (-(d + 1) // 2) * math.factorial((d - 1) // 2) / math.factorial(d)
    return c.real if abs(c.imag) < 1e-300 + 1e-15 * abs(c) else c


def _perms(d):
    out = []
    for p in itertools.permutations(range(d)):
        out.append((p, levi_civita([i + 1 for i in p])))
    return out


# --------------------------------------------------------------- x quadrature
@dataclass
class XRule:
    points: np.ndarray
    weights: np.ndarray


def x_rule(V, n_r=160, n_theta=24, n_phi=24, scale=1.0):
    """Spherical product rule on ``R^3`` (radial only when ``V.radial``).

    ``r = scale * u/(1-u)`` maps Gauss-Legendre nodes on ``(0, 1)``.
    """
    if V.d != 3:
        raise ShapeError("the built-in x rule covers d = 3")
    u, wu = np.polynomial.legendre.leggauss(n_r)
    u = (u + 1) / 2
    wu = wu / 2
    r = scale * u / (1 - u)
    wr = scale * wu / (1 - u) ** 2 * r ** 2
    if V.radial:
        pts = r[:, None] * np.array([0.0, 0.0, 1.0])
        return XRule(pts, 4 * math.pi * wr)
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    ph = 2 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    st = np.sqrt(1 - ct ** 2)
    dirs = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)), np.repeat(ct[:, None], n_phi, 1)], -1)
    dirs = dirs.reshape(-1, 3)
    wd = np.repeat(wt, n_phi) * (2 * math.pi / n_phi)
    pts = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    return XRule(pts, (wr[:, None] * wd[None]).ravel())


# -------------------------------------------------------------- index density
def _separable_trace(V, rule, psi, start=0):
    """``int_x sum_sigma sgn Tr prod_j dH_sigma(j) exp(i psi_j H)`` for a batch of ``psi``.

    ``psi`` has shape ``(S, d)``; returns shape ``(S,)``.
    """
    d = V.d
    Hx = V.H(rule.points)
    G = V.gradH(rule.points)  # (P, d, g, g)
    w, Vec = np.linalg.eigh(Hx)
    # move to the eigenbasis of H(x) so exponentials are diagonal
    Gt = np.einsum("pba,pjbc,pcd->pjad", Vec.conj(), G, Vec)
    psi = np.atleast_2d(psi)
    E = np.exp(1j * psi[:, None, :, None] * w[None, :, None, :])  # (S, P, d, g)
    order = [(start + j) % d for j in range(d)]
    total = 0
    for perm, sgn in _perms(d):
        prod = None
        for j in order:
            factor = Gt[None, :, perm[j]] * E[:, :, j, None, :]
            prod = factor if prod is None else prod @ factor
        total = total + sgn * np.trace(prod, axis1=-2, axis2=-1)
    return total @ rule.weights


def index_density(V, z, rule=None, start=0):
    """``ind_V(z)`` for ``z`` of shape ``(d,)`` or ``(S, d)``.

    ``start`` chooses the slot where the cyclic product starts; the value
    does not depend on it.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = V.d
    if z.shape[1] != d:
        raise ShapeError(f"z must have {d} components")
    rule = x_rule(V) if rule is None else rule
    if V.separable:
        w = V.Phi(z)
        psi = np.roll(w, 1, axis=1) - w  # w_{j-1} - w_j with w_0 := w_d
        pref = np.prod(V.phi(z), axis=1)
        vals = pref * _separable_trace(V, rule, psi, start)
    else:
        vals = np.array([_generic_trace(V, rule, zz, start) for zz in z])
    out = index_constant(d) * vals
    return out if out.size > 1 else out[0]


def _generic_trace(V, rule, z, start):
    d = V.d
    zz = np.concatenate([[z[-1]], z])  # zz[j] = z_j with z_0 := z_d
    total = 0j
    for p, x in enumerate(rule.points):
        T = lambda y: V.value(x[None], y)[0]
        dV = [V.grad_x(x[None], zz[j])[0] for j in range(d)]
        U = [propagate(T, zz[j], zz[j + 1])[0] for j in range(d)]
        order = [(start + j) % d for j in range(d)]
        acc = 0j
        for perm, sgn in _perms(d):
            prod = np.eye(V.dim_G, dtype=complex)
            for j in order:
                prod = prod @ dV[j][perm[j]] @ U[j]
            acc += sgn * np.trace(prod)
        total += rule.weights[p] * acc
    return total


def _w_samples(d, n, method, seed):
    if method == "mc":
        rng = np.random.default_rng(seed)
        return rng.random((n, d)), np.full(n, 1.0 / n)
    if method == "grid":
        u, wu = np.polynomial.legendre.leggauss(n)
        u, wu = (u + 1) / 2, wu / 2
        W = np.stack(np.meshgrid(*([u] * d), indexing="ij"), -1).reshape(-1, d)
        ww = np.prod(np.stack(np.meshgrid(*([wu] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
        return W, ww
    raise DomainError(f"unknown z integrator {method!r}")


def _weighted_density_samples(V, n, method, seed, rule, batch=512):
    """Samples ``z_i`` and weights ``c_i`` with ``int g(z) ind_V(z) dz ~ sum_i c_i g(z_i)``."""
    if not V.separable:
        raise DomainError("z integration is implemented for separable potentials")
    W, ww = _w_samples(V.d, n, method, seed)
    vals = np.empty(W.shape[0], dtype=complex)
    for lo in range(0, W.shape[0], batch):
        w = W[lo:lo + batch]
        psi = np.roll(w, 1, axis=1) - w
        vals[lo:lo + batch] = _separable_trace(V, rule, psi)
    c = index_constant(V.d) * vals * ww
    return V.Phi_inv(W), c


def integrated_index_density(V, n=4096, method="mc", seed=0, rule=None):
    """``int ind_V(z) dz`` via ``w = Phi(z)``; MC reports a standard error.

    Returns
    -------
    dict with ``value``, ``stderr``, ``index`` (``value * Dirichlet mass * (4 pi)^(-d/2)``).
    """
    rule = x_rule(V) if rule is None else rule
    _, c = _weighted_density_samples(V, n, method, seed, rule)
    value = complex(np.sum(c))
    # c_i = f_i / n, so the standard error std(f)/sqrt(n) is std(c) sqrt(n)
    stderr = float(np.std(c.real) * math.sqrt(c.size)) if method == "mc" else 0.0
    d = V.d
    mass = simplex_rule(d - 1, kind="dirichlet").weights.sum()
    factor = (4 * math.pi) ** (-d / 2) * mass
    return {"value": value, "stderr": stderr, "index": (value * factor).real,
            "index_stderr": stderr * factor, "imag": value.imag * factor}


# --------------------------------------------------------------------- kernels
def bessel_ratio(nu, a, lam, series_below=1.0, terms=40):
    """``(lam/a)^(nu/2) J_nu(2 sqrt(a lam))``, continuous down to ``a = 0``.

    Uses the power series in ``a lam`` below ``series_below`` and closed
    trigonometric forms for half-integer orders.
    """
    a, lam = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(lam, dtype=float))
    if nu == -0.5:
        return np.cos(2 * np.sqrt(a * lam)) / np.sqrt(math.pi * lam)
    if nu == 0:
        return special.j0(2 * np.sqrt(a * lam))
    if nu == 0.5:
        # sin(2 sqrt(a lam)) / sqrt(pi a) with the a -> 0 limit 2 sqrt(lam/pi)
        arg = 2 * np.sqrt(a * lam)
        return 2 * np.sqrt(lam / math.pi) * np.sinc(arg / math.pi)
    x = a * lam
    out = np.empty(x.shape)
    small = x < series_below
    if np.any(small):
        xs, ls = x[small], lam[small]
        k = np.arange(terms)
        coef = 1.0 / (special.factorial(k) * special.gamma(nu + k + 1))
        ser = np.polynomial.polynomial.polyval(-xs, coef)
        with np.errstate(divide="ignore"):
            out[small] = np.power(ls, nu) * ser
    big = ~small
    if np.any(big):
        ab, lb = a[big], lam[big]
        arg = 2 * np.sqrt(ab * lb)
        if abs(nu - round(nu)) == 0.5:
            J = _half_integer_j(nu, arg)
        else:
            J = special.jv(nu, arg)
        out[big] = (lb / ab) ** (nu / 2) * J
    return out


def _half_integer_j(nu, x):
    n = nu - 0.5
    if n >= 0:
        return np.sqrt(2 * x / math.pi) * special.spherical_jn(int(round(n)), x)
    if nu == -0.5:
        return np.sqrt(2 / (math.pi * x)) * np.cos(x)
    # J_{-n-1/2} = (-1)^(n+1) y_n-type forms are not needed beyond -1/2
    return special.jv(nu, x)


@dataclass
class ExampleKernels:
    """``Omega_d``, ``Sigma_d`` and the ``(d-1)``-th derivative of ``Sigma_d``."""

    d: int
    exactness: int = 24

    def __post_init__(self):
        if self.d < 3 or self.d % 2 == 0:
            raise DomainError("kernels are defined for odd d >= 3")
        self.rule = simplex_rule(self.d - 1, exactness=self.exactness, kind="dirichlet")

    def a(self, z, s=None):
        """``a(s, z) = sum_j (z_{j-1} - z_j)^2 / (4 s_j)``, shape ``(..., Q)``."""
        s = self.rule.nodes if s is None else np.atleast_2d(s)
        z = np.atleast_2d(z)
        diff2 = (np.roll(z, 1, axis=-1) - z) ** 2
        return np.einsum("zj,qj->zq", diff2, 1 / (4 * s))

    def _apply(self, nu, lam, z, pref):
        A = self.a(z)  # (Z, Q)
        lam = np.asarray(lam, dtype=float)
        flat = lam.reshape(-1)
        out = np.empty((flat.size, A.shape[0]))
        step = max(1, int(2e6 // A.size))
        for lo in range(0, flat.size, step):
            vals = bessel_ratio(nu, A[None], flat[lo:lo + step, None, None])  # (L, Z, Q)
            out[lo:lo + step] = pref * vals @ self.rule.weights
        return out.reshape(lam.shape + (A.shape[0],))

    def omega(self, mu, z):
        return self._apply(self.d / 2 - 1, mu, z, 0.5)

    def omega_derivative(self, mu, z, order=1):
        return self._apply(self.d / 2 - 1 - order, mu, z, 0.5)

    def sigma(self, lam, z):
        return self._apply(self.d - 1, lam, z, -(4 * math.pi) ** (-self.d / 2))

    def sigma_dminus1(self, lam, z):
        return self._apply(0, lam, z, -(4 * math.pi) ** (-self.d / 2))


def kernel_omega(mu, z, kernels):
    return kernels.omega(mu, z)


def kernel_sigma(lam, z, kernels):
    return kernels.sigma(lam, z)


def schlafli_residuals(d=3, pairs=None):
    """``int_0^inf e^{-t mu} (mu/a)^{d/4-1/2} J_{d/2-1}(2 sqrt(a mu)) dmu - t^{-d/2} e^{-a/t}``."""
    pairs = pairs or [(a, t) for a in (0.5, 1.0, 2.0) for t in (0.5, 1.0, 2.0)]
    nu = d / 2 - 1
    rows = []
    for a, t in pairs:
        f = lambda mu: math.exp(-t * mu) * float(bessel_ratio(nu, a, mu))
        val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=500)
        exact = t ** (-d / 2) * math.exp(-a / t)
        rows.append({"a": a, "t": t, "quadrature": val, "exact": exact, "residual": abs(val - exact)})
    return rows


# ----------------------------------------------------------- eta, xi examples
def _sampled_transform(V, kernel, grid, n, method, seed, rule, exactness):
    rule = x_rule(V) if rule is None else rule
    z, c = _weighted_density_samples(V, n, method, seed, rule)
    K = ExampleKernels(V.d, exactness)
    vals = getattr(K, kernel)(np.asarray(grid, dtype=float), z)  # (L, Z)
    out = vals @ c
    return out.real, out.imag


def eta_example(V, mu_grid, n=2048, method="mc", seed=0, rule=None, exactness=24):
    """``eta(mu) = int Omega_d(mu, z) ind_V(z) dz`` on ``mu_grid``."""
    return _sampled_transform(V, "omega", mu_grid, n, method, seed, rule, exactness)[0]


def xi_example(V, lam_grid, n=2048, method="mc", seed=0, rule=None, exactness=24):
    """``xi(lam) = int Sigma_d(lam, z) ind_V(z) dz`` on ``lam_grid``."""
    return _sampled_transform(V, "sigma", lam_grid, n, method, seed, rule, exactness)[0]


def xi_dminus1_example(V, lam_grid, n=2048, method="mc", seed=0, rule=None, exactness=24):
    return _sampled_transform(V, "sigma_dminus1", lam_grid, n, method, seed, rule, exactness)[0]


def functional_equation_closure(V, mu_max=4.0, n_mu=401, lam_grid=None, **kw):
    """Compare ``xi_example`` with the fractional transform of interpolated ``eta_example``.

    Returns
    -------
    dict with ``lam``, ``xi_direct``, ``xi_from_eta`` and ``max_rel_gap``.
    """
    from .density import SpectralShiftDensity
    from .transform import xi_from_eta

    mu = np.linspace(0.0, mu_max, n_mu)
    eta_vals = eta_example(V, mu, **kw)
    slopes = np.diff(eta_vals) / np.diff(mu)
    eta = SpectralShiftDensity(mu, np.stack([eta_vals[:-1], slopes], axis=1))
    lam = np.linspace(mu_max / 8, mu_max, 8) if lam_grid is None else np.asarray(lam_grid)
    via = np.real(xi_from_eta(eta, V.d)(lam))
    direct = xi_example(V, lam, **kw)
    scale = max(np.abs(direct).max(), 1e-300)
    return {"lam": lam, "xi_direct": direct, "xi_from_eta": via,
            "max_rel_gap": float(np.abs(via - direct).max() / scale), "eta": eta}


def pipeline_index(V, n=2048, method="mc", seed=0, rule=None, exactness=24, h0=0.5):
    """Index from the right Lebesgue value of ``u eta^(k)(u^2)`` at 0 and from ``-xi^(d-1)(0+)``."""
    from .transform import lebesgue_point_right

    d = V.d
    k = (d - 1) // 2
    rule = x_rule(V) if rule is None else rule
    z, c = _weighted_density_samples(V, n, method, seed, rule)
    K = ExampleKernels(d, exactness)

    def g(u):
        u = np.asarray(u, dtype=float)
        return u * np.real(K.omega_derivative(u ** 2, z, order=k) @ c)  # (4pi)^k L is the index

    def neg_xi(lam):
        return -np.real(K.sigma_dminus1(np.asarray(lam, dtype=float), z) @ c)

    L, diag_L = lebesgue_point_right(g, h0=h0, raise_on_failure=False, vectorized=True)
    x0, diag_x = lebesgue_point_right(neg_xi, h0=h0 ** 2, raise_on_failure=False, vectorized=True)
    return {"L": L, "index": (4 * math.pi) ** (-k) * L, "index_direct": x0,
            "diagnostics": {"lebesgue": diag_L, "xi_dminus1": diag_x}}


# ---------------------------------------------------------------------- winding
def winding_index(V_or_U, L=6.0, n=96, boundary_tol=0.25):
    """``(2 pi i)^(-(d+1)/2) ((d-1)/2)!/d! int Tr (U^-1 dU)^d`` on a cube grid.

    ``V_or_U`` is a separable ``PotentialV`` (then ``U = exp(i H)``) or a
    sampled field of shape ``(n, n, n, g, g)`` on ``[-L, L]^3``.

    Returns
    -------
    dict with ``index``, ``nearest_integer``, ``boundary_variation``.
    """
    if isinstance(V_or_U, PotentialV):
        V = V_or_U
        if V.d != 3:
            raise ShapeError("the grid winding integrator covers d = 3")
        xs = np.linspace(-L, L, n)
        X = np.stack(np.meshgrid(xs, xs, xs, indexing="ij"), -1)
        if V.separable:
            U = _expi_hermitian(V.H(X))
        else:
            U = np.array([limit_propagator(V, x) for x in X.reshape(-1, 3)]).reshape(X.shape[:-1] + (V.dim_G,) * 2)
    else:
        U = np.asarray(V_or_U)
        n = U.shape[0]
    h = 2 * L / (n - 1)
    faces = np.concatenate([U[0].reshape(-1, *U.shape[-2:]), U[-1].reshape(-1, *U.shape[-2:]),
                            U[:, 0].reshape(-1, *U.shape[-2:]), U[:, -1].reshape(-1, *U.shape[-2:]),
                            U[:, :, 0].reshape(-1, *U.shape[-2:]), U[:, :, -1].reshape(-1, *U.shape[-2:])])
    variation = float(np.abs(faces - faces.mean(axis=0)).max())
    if variation > boundary_tol:
        raise DomainError(f"U is not close to constant on the boundary (variation {variation:.3f})")
    # fourth-order central differences on the interior
    core = (slice(2, -2),) * 3
    Uinv = np.conj(np.swapaxes(U[core], -1, -2))
    forms = []
    for ax in range(3):
        def sh(k):
            idx = [slice(2, -2)] * 3
            idx[ax] = slice(2 + k, U.shape[ax] - 2 + k)
            return U[tuple(idx)]
        dU = (-sh(2) + 8 * sh(1) - 8 * sh(-1) + sh(-2)) / (12 * h)
        forms.append(Uinv @ dU)
    density = 0
    for perm, sgn in _perms(3):
        density = density + sgn * np.trace(forms[perm[0]] @ forms[perm[1]] @ forms[perm[2]], axis1=-2, axis2=-1)
    total = math.fsum(density.real.ravel()) * h ** 3 + 1j * math.fsum(density.imag.ravel()) * h ** 3
    value = winding_constant(3) * total
    return {"index": float(np.real(value)), "imag": float(np.imag(value)),
            "nearest_integer": int(round(float(np.real(value)))), "boundary_variation": variation}
