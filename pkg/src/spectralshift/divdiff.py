"""Divided differences, simplex quadrature and B-spline densities.

Divided differences are evaluated on the sorted node tuple with a table in
which every sub-range narrower than a family dependent width is expanded in
a Taylor series about its centre,

    Dif_{m-1} f(mu) = sum_k f^(k)(c)/k! h_{k-m+1}(mu - c),

(``h_j`` the complete homogeneous symmetric polynomial) and every wider
sub-range uses the usual quotient recursion. Exactly coincident nodes are
therefore never perturbed, and nearly coincident ones never hit 0/0.

The simplex measure ``ds`` on ``Delta_n`` has total mass ``1/n!``.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, gamma

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import interpolate, special

from .density import SpectralShiftDensity, shift_coefficients
from .errors import CapabilityError, EvaluationError, ShapeError, UnsupportedOrderError, DomainError

__all__ = [
    "ScalarFunctionFamily",
    "SimplexRule",
    "simplex_rule",
    "divided_difference",
    "divided_difference_batch",
    "genochi_hermite",
    "simplex_integrate",
    "bspline_density",
    "dirichlet_mass",
]


# --------------------------------------------------------------------- jets
def _jet_mul(a, b):
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    K = out.shape[-1]
    for k in range(K):
        out[..., k] = np.sum(a[..., : k + 1] * b[..., k::-1], axis=-1)
    return out


def _jet_exp(a):
    out = np.zeros_like(a)
    K = a.shape[-1]
    out[..., 0] = np.exp(a[..., 0])
    j = np.arange(K)
    for k in range(1, K):
        out[..., k] = np.sum(j[1 : k + 1] * a[..., 1 : k + 1] * out[..., k - 1 :: -1][..., :k], axis=-1) / k
    return out


def _tail_jet(c, t, K):
    """Taylor coefficients of exp(-t x - x^2 exp(-1/x^2)) about c < 0."""
    c = np.asarray(c, dtype=float)[..., None]
    # below |c| = 0.05 every coefficient of exp(-1/x^2) is under 1e-60: drop it
    flat = np.abs(c) < 0.05
    cs = np.where(flat, -1.0, c)
    k = np.arange(K + 1)
    inv_sq = cs ** -2.0 * (-1.0) ** k * (k + 1) * cs ** -k.astype(float)   # 1/x^2
    x_sq = np.zeros(c.shape[:-1] + (K + 1,))
    x_sq[..., 0] = c[..., 0] ** 2
    if K >= 1:
        x_sq[..., 1] = 2 * c[..., 0]
    if K >= 2:
        x_sq[..., 2] = 1.0
    psi = np.where(flat, 0.0, _jet_mul(x_sq, _jet_exp(-inv_sq)))
    g = -psi
    g[..., 0] += -t * c[..., 0]
    if K >= 1:
        g[..., 1] += -t
    return _jet_exp(g)


# ------------------------------------------------------------ function family
@dataclass(frozen=True)
class ScalarFunctionFamily:
    """Scalar function with exact derivatives of every order.

    Use the constructors :meth:`exponential`, :meth:`monomial`,
    :meth:`polynomial` and :meth:`gaussian_tail`. ``offset`` shifts the
    derivative order, so ``f.derivative_family(1)`` represents ``f'``.
    ``n_max`` caps the order of divided differences callers may request.
    """

    kind: str
    params: tuple
    n_max: int = 8
    offset: int = 0

    @classmethod
    def exponential(cls, t, n_max=8):
        """``exp(-t x)`` with ``t > 0``."""
        if not t > 0:
            raise DomainError(f"exponential family needs t > 0, got {t!r}")
        return cls("exponential", (float(t),), n_max)

    @classmethod
    def monomial(cls, k, n_max=None):
        coeffs = np.zeros(k + 1)
        coeffs[k] = 1.0
        return cls("polynomial", tuple(coeffs), k + 2 if n_max is None else n_max)

    @classmethod
    def polynomial(cls, coeffs, n_max=None):
        """Polynomial with ascending coefficients."""
        coeffs = tuple(float(c) for c in coeffs)
        return cls("polynomial", coeffs, len(coeffs) + 1 if n_max is None else n_max)

    @classmethod
    def gaussian_tail(cls, t, n_max=8):
        """Schwartz function equal to ``exp(-t x)`` for ``x >= 0``.

        For ``x < 0`` it is ``exp(-t x - x^2 exp(-1/x^2))``, which joins the
        exponential to all orders at 0 and decays like a Gaussian.
        """
        if not t > 0:
            raise DomainError(f"gaussian tail family needs t > 0, got {t!r}")
        return cls("gaussian_tail", (float(t),), n_max)

    # --------------------------------------------------------------- helpers
    def derivative_family(self, j=1):
        """The family representing the j-th derivative."""
        return ScalarFunctionFamily(self.kind, self.params, max(self.n_max - j, 0), self.offset + j)

    def check_order(self, n):
        if n > self.n_max:
            raise CapabilityError(f"order {n} exceeds the derivative cap n_max={self.n_max}")

    @property
    def cluster_width(self):
        """Sub-ranges narrower than this are summed by Taylor expansion."""
        if self.kind == "exponential":
            return 1.0 / self.params[0]
        if self.kind == "gaussian_tail":
            return min(1.0 / self.params[0], 0.1)
        return 1.0

    def _taylor_terms(self):
        if self.kind == "polynomial":
            return None
        return 60 if self.kind == "gaussian_tail" else 40

    def derivative(self, k, x):
        """Value of ``f^(k)`` (relative to this family's offset) at ``x``."""
        x = np.asarray(x, dtype=float)
        order = k + self.offset
        if self.kind == "exponential":
            t = self.params[0]
            return (-t) ** order * np.exp(-t * x)
        if self.kind == "polynomial":
            c = np.array(self.params)
            c = P.polyder(c, order) if order else c
            return P.polyval(x, c) if c.size else np.zeros_like(x)
        if self.kind == "gaussian_tail":
            t = self.params[0]
            out = np.array((-t) ** order * np.exp(-t * x), dtype=float)
            neg = x < 0
            if np.any(neg):
                jet = _tail_jet(x[neg], t, order)
                out[neg] = jet[..., order] * factorial(order)
            return out
        raise ValueError(f"unknown family kind {self.kind!r}")

    def __call__(self, x):
        return self.derivative(0, x)

    def taylor(self, c, K):
        """Array ``[f^(j)(c)/j! for j in 0..K]`` along the last axis."""
        c = np.asarray(c, dtype=float)
        j = np.arange(K + 1)
        fac = np.array([factorial(i) for i in j], dtype=float)
        if self.kind == "exponential":
            t = self.params[0]
            order = self.offset + j
            return (-t) ** order * np.exp(-t * c)[..., None] / fac
        if self.kind == "polynomial":
            coeffs = np.array(self.params)
            if self.offset:
                coeffs = P.polyder(coeffs, self.offset)
            out = np.zeros(c.shape + (K + 1,))
            if coeffs.size:
                sh = np.array([shift_coefficients(coeffs, ci) for ci in c.ravel()]).reshape(c.shape + (coeffs.size,))
                m = min(coeffs.size, K + 1)
                out[..., :m] = sh[..., :m]
            return out
        if self.kind == "gaussian_tail":
            t = self.params[0]
            order = self.offset + j
            out = (-t) ** order * np.exp(-t * c)[..., None] / fac
            neg = c < 0
            if np.any(neg):
                jet = _tail_jet(c[neg], t, self.offset + K)
                scale = np.array([factorial(self.offset + i) / factorial(i) for i in j])
                out[neg] = jet[..., self.offset:] * scale
            return out
        raise ValueError(f"unknown family kind {self.kind!r}")

    def max_taylor_order(self):
        if self.kind == "polynomial":
            return max(len(self.params) - 1 - self.offset, 0)
        return None


# ----------------------------------------------------------- divided differences
def _complete_homogeneous(y, J):
    """h_0..h_J of the rows of ``y`` (shape (B, m)) -> (B, J + 1)."""
    B, m = y.shape
    H = np.zeros((B, J + 1))
    H[:, 0] = 1.0
    for i in range(m):
        yi = y[:, i]
        for j in range(1, J + 1):
            H[:, j] += yi * H[:, j - 1]
    return H


def _taylor_entry(f, lam):
    """Dif of f over the rows of ``lam`` (B, L + 1) by Taylor expansion."""
    B, m = lam.shape
    L = m - 1
    c = 0.5 * (lam[:, 0] + lam[:, -1])
    y = lam - c[:, None]
    top = f.max_taylor_order()
    if top is None:
        K = f._taylor_terms()
        top = L + K
    if top < L:
        return np.zeros(B)
    coeffs = f.taylor(c, top)[:, L:]
    H = _complete_homogeneous(y, top - L)
    return np.sum(coeffs * H, axis=1)


def divided_difference_batch(f, nodes, method="auto"):
    """Divided differences of ``f`` for each row of ``nodes`` (B, n + 1).

    Parameters
    ----------
    f : ScalarFunctionFamily
    nodes : array_like
        Real nodes, repetitions allowed.
    method : {"auto", "recursion"}
        ``"recursion"`` is the plain table with the derivative branch used only
        for exactly equal nodes; ``"auto"`` adds Taylor blocking of narrow
        sub-ranges.

    Returns
    -------
    ndarray of shape (B,)
    """
    lam = np.sort(np.atleast_2d(np.asarray(nodes, dtype=float)), axis=1)
    if not np.all(np.isfinite(lam)):
        raise DomainError("nodes must be finite")
    B, m = lam.shape
    n = m - 1
    f.check_order(n)
    width = f.cluster_width if method == "auto" else 0.0
    if method not in ("auto", "recursion"):
        raise ValueError(f"unknown method {method!r}")
    # table[i] holds Dif over lam[:, i:i+L+1] for the current L
    table = [f.derivative(0, lam[:, i]) for i in range(m)]
    for L in range(1, m):
        new = []
        for i in range(m - L):
            lo, hi = lam[:, i], lam[:, i + L]
            w = hi - lo
            narrow = w <= width if width > 0 else (w == 0)
            val = np.empty(B)
            wide = ~narrow
            if np.any(wide):
                val[wide] = (table[i + 1][wide] - table[i][wide]) / w[wide]
            if np.any(narrow):
                if width > 0:
                    val[narrow] = _taylor_entry(f, lam[narrow, i : i + L + 1])
                else:
                    val[narrow] = f.derivative(L, lo[narrow]) / factorial(L)
            new.append(val)
        table = new
    return table[0]


def divided_difference(f, nodes, method="auto"):
    """Divided difference ``Dif_n f(nodes)`` with ``n = len(nodes) - 1``.

    Examples
    --------
    >>> divided_difference(ScalarFunctionFamily.monomial(2), [1.0, 3.0])
    4.0
    """
    nodes = np.asarray(nodes, dtype=float).ravel()
    return float(divided_difference_batch(f, nodes[None, :], method)[0])


# ------------------------------------------------------------------ simplex rules
@dataclass(frozen=True)
class SimplexRule:
    """Quadrature rule on the simplex ``Delta_n`` in barycentric coordinates.

    ``nodes`` has shape (Q, n + 1) and rows summing to 1. For the Dirichlet
    kind the weight ``prod_j s_j^(-1/2)`` is absorbed into ``weights``.
    """

    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    kind: str = "uniform"
    points_per_axis: int = 0

    @property
    def exactness(self):
        return 2 * self.points_per_axis - 1


def dirichlet_mass(n):
    """``Gamma(1/2)^(n+1) / Gamma((n+1)/2)``, mass of the Dirichlet weight on Delta_n."""
    return gamma(0.5) ** (n + 1) / gamma((n + 1) / 2)


def _gauss_jacobi01(m, a, b):
    """Nodes/weights on [0,1] for the weight (1-u)^a u^b."""
    x, w = special.roots_jacobi(m, a, b)
    return (x + 1) / 2, w / 2 ** (a + b + 1)


@lru_cache(maxsize=64)
def _build_rule(n, m, kind):
    if n == 0:
        return np.ones((1, 1)), np.ones(1)
    us, ws = [], []
    for i in range(1, n + 1):
        if kind == "uniform":
            u, w = _gauss_jacobi01(m, float(n - i), 0.0)
        else:
            u, w = _gauss_jacobi01(m, (n - i - 1) / 2, -0.5)
        us.append(u)
        ws.append(w)
    grids = np.meshgrid(*us, indexing="ij")
    wgrid = np.meshgrid(*ws, indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    Q = U.shape[0]
    S = np.empty((Q, n + 1))
    rest = np.ones(Q)
    for j in range(n):
        S[:, j] = U[:, j] * rest
        rest = rest * (1 - U[:, j])
    S[:, n] = rest
    S.setflags(write=False)
    W.setflags(write=False)
    return S, W


def simplex_rule(n, exactness=None, kind="uniform", points=None):
    """Tensor Gauss-Jacobi rule on ``Delta_n`` via stick breaking.

    Parameters
    ----------
    n : int
        Simplex order (``n + 1`` barycentric coordinates).
    exactness : int, optional
        Polynomial degree integrated exactly in each stick coordinate.
    kind : {"uniform", "dirichlet"}
        ``"dirichlet"`` carries the weight ``prod_j s_j^(-1/2)``.
    points : int, optional
        Points per coordinate, overrides ``exactness``.
    """
    if kind not in ("uniform", "dirichlet"):
        raise ValueError(f"unknown rule kind {kind!r}")
    if points is None:
        exactness = 12 if exactness is None else exactness
        points = max(1, (exactness + 2) // 2)
    S, W = _build_rule(int(n), int(points), kind)
    return SimplexRule(n=int(n), nodes=S, weights=W, kind=kind, points_per_axis=int(points))


def simplex_integrate(g, rule):
    """Apply ``rule`` to ``g``, a vectorised function of (Q, n + 1) nodes."""
    vals = np.asarray(g(rule.nodes))
    if vals.shape[0] != rule.nodes.shape[0]:
        raise ShapeError("integrand must return one value per node")
    bad = np.isnan(vals)
    if bad.ndim > 1:
        bad = bad.reshape(bad.shape[0], -1).any(axis=1)
    if np.any(bad):
        where = rule.nodes[np.flatnonzero(bad)[0]]
        raise EvaluationError(f"integrand returned NaN at simplex node {where.tolist()}")
    return np.tensordot(rule.weights, vals, axes=(0, 0))


def genochi_hermite(f, nodes, rule):
    """Simplex quadrature of ``int_{Delta_n} f^(n)(<s, nodes>) ds``."""
    nodes = np.asarray(nodes, dtype=float).ravel()
    n = nodes.size - 1
    if rule.n != n:
        raise ShapeError(f"rule is for order {rule.n}, nodes give order {n}")
    if rule.kind != "uniform":
        raise ShapeError("Genochi-Hermite needs the uniform simplex measure")
    f.check_order(n)
    return float(simplex_integrate(lambda s: f.derivative(n, s @ nodes), rule))


# ------------------------------------------------------------------ B-splines
CONFLUENT_RTOL = 1e-8


def bspline_density(nodes):
    """Density ``rho`` with ``int f^(n) rho = Dif_n f(nodes)``.

    This is the normalised B-spline of degree ``n - 1`` on the knots
    ``nodes`` divided by ``n!``. Fully coincident nodes give the atom
    ``(1/n!) delta``.
    """
    lam = np.sort(np.asarray(nodes, dtype=float).ravel())
    n = lam.size - 1
    if n < 1:
        raise UnsupportedOrderError("B-spline density needs at least two nodes")
    if lam[0] == lam[-1]:
        return SpectralShiftDensity((), None, [(lam[0], 1.0 / factorial(n))])
    if lam[-1] - lam[0] <= CONFLUENT_RTOL * max(1.0, np.abs(lam).max()):
        # numerically confluent: the spline coefficients would overflow, an atom
        # at the knot mean (the spline's centre of mass) is exact to O(width^2)
        return SpectralShiftDensity((), None, [(float(lam.mean()), 1.0 / factorial(n))])
    k = n - 1
    spl = interpolate.BSpline.basis_element(lam, extrapolate=False)
    pp = interpolate.PPoly.from_spline(spl)
    x = pp.x
    keep = np.flatnonzero(np.diff(x) > 0)
    left = x[keep]
    right = x[keep + 1]
    c = pp.c[:, keep][::-1].T  # ascending, centred at left ends
    # restrict to [lam_0, lam_n]
    inside = (left >= lam[0]) & (right <= lam[-1])
    left, right, c = left[inside], right[inside], c[inside]
    scale = 1.0 / (factorial(k) * (lam[-1] - lam[0]))
    # pieces between numerically confluent knots have overflowing coefficients
    tiny = (right - left) <= CONFLUENT_RTOL * (lam[-1] - lam[0])
    atoms = []
    if np.any(tiny):
        mid = (left[tiny] + right[tiny]) / 2
        mass = (right[tiny] - left[tiny]) * np.nan_to_num(spl(mid)) * scale
        atoms = [(float(x), float(w)) for x, w in zip(mid, mass) if w != 0]
        if np.all(tiny):
            return SpectralShiftDensity((), None, atoms)
        left, right, c = left[~tiny], right[~tiny], c[~tiny]
    return SpectralShiftDensity.from_pieces([left], [right], [c * scale], atoms)
