"""Laplace transforms, fractional integrals and index extraction.

The operator side shift ``xi`` is obtained from the potential side density
``eta`` through

    xi(lam) = -c_d int_0^lam (lam - mu)^(d/2 - 1) eta(mu) dmu,
    c_d = ((d-1)/2)! / (pi^((d+1)/2) (d-1)!),

and its derivatives of order ``k = (d-1)/2`` and ``d - 1`` use the
``(lam - mu)^(-1/2)`` kernel. The partial Witten index is
``-xi^(d-1)(0+)``, read off at a right Lebesgue point.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .density import SpectralShiftDensity, shift_coefficients
from .errors import ContractViolation, DomainError, HypothesisNotMetError, NoLimitError

__all__ = [
    "FunctionalEquationConstants",
    "FractionalIntegral",
    "laplace",
    "laplace_of_evaluator",
    "xi_from_eta",
    "xi_k_from_eta",
    "xi_dminus1_from_eta",
    "heat_limit",
    "lebesgue_point_right",
    "witten_index",
    "fredholm_index",
    "heat_trace_difference_matrix",
    "symmetrized_krein_eta",
    "pushnitski_d1_check",
    "richardson",
]


@dataclass(frozen=True)
class FunctionalEquationConstants:
    d: int

    def __post_init__(self):
        if self.d < 1 or self.d % 2 == 0:
            raise DomainError(f"d must be odd and positive, got {self.d}")

    @property
    def k(self):
        return (self.d - 1) // 2

    @property
    def halfpower(self):
        return self.d / 2 - 1

    @property
    def c_d(self):
        return math.factorial(self.k) / (math.pi ** ((self.d + 1) / 2) * math.factorial(self.d - 1))

    @property
    def half_order_constant(self):
        """``(1/pi) (4 pi)^(-k)``."""
        return (4 * math.pi) ** (-self.k) / math.pi

    @property
    def laplace_factor(self):
        """``2 (4 pi)^(-d/2)``."""
        return 2 * (4 * math.pi) ** (-self.d / 2)


# --------------------------------------------------------------- Laplace
def laplace(density, t):
    """Exact Laplace transform of a density at ``t > 0``."""
    return density.laplace(t)


def laplace_of_evaluator(g, t, breakpoints=(), upper=None, panel_points=12, subpanels=8):
    """Numerical ``int_0^inf exp(-t lam) g(lam) dlam``.

    Composite Gauss-Legendre on panels split at ``breakpoints`` up to
    ``upper``, and Gauss-Laguerre beyond. Right of a breakpoint ``g`` may
    behave like ``(lam - b)^(j/2)`` (fractional integrals of odd order), so
    each panel is mapped by ``lam = b + L s^2`` which makes those terms
    polynomial in ``s``. The ``s`` panels are graded towards 0 to resolve
    singularities sitting just left of a panel.
    """
    if not t > 0:
        raise DomainError("Laplace parameter must be positive")
    b = np.unique(np.asarray([0.0] + [x for x in breakpoints if x > 0], dtype=float))
    # the last breakpoint must sit inside a panel, not at the Laguerre endpoint
    upper = max(upper if upper is not None else 0.0, b[-1]) + 40.0 / t
    b = np.unique(np.append(b, upper))
    u, w = np.polynomial.legendre.leggauss(panel_points)
    bases, offs, wts = [], [], []
    for lo, hi in zip(b[:-1], b[1:]):
        L = hi - lo
        m = subpanels + int(math.ceil(math.sqrt(t * L)))
        edges = np.linspace(0.0, 1.0, m + 1)
        edges = np.concatenate([[0.0], edges[1] * 2.0 ** -np.arange(12, 0, -1), edges[1:]])
        s0, s1 = edges[:-1, None], edges[1:, None]
        s = (s0 + (s1 - s0) * (u + 1) / 2).ravel()
        bases.append(np.full(s.size, lo))
        offs.append(L * s ** 2)
        wts.append(((s1 - s0) / 2 * w).ravel() * 2 * L * s)
    base, off, ws = np.concatenate(bases), np.concatenate(offs), np.concatenate(wts)
    gx = g(base, off) if isinstance(g, FractionalIntegral) else g(base + off)
    val = np.sum(ws * np.exp(-t * (base + off)) * gx)
    xl, wl = special.roots_genlaguerre(60, 0.0)
    val += np.exp(-t * upper) / t * np.sum(wl * g(upper + xl / t))
    return val


# ---------------------------------------------------------- fractional integrals
class FractionalIntegral:
    """Evaluator of ``lam -> const * int_0^lam (lam - mu)^alpha eta(mu) dmu``."""

    def __init__(self, eta, alpha, const, label=""):
        if alpha <= -1:
            raise DomainError("fractional exponent must exceed -1")
        supp = eta.support
        if supp is not None and supp[0] < -1e-14 * max(1.0, abs(supp[1])):
            raise ContractViolation(f"eta has support below 0 (starts at {supp[0]!r})")
        self.eta = eta
        self.alpha = float(alpha)
        self.const = const
        self.label = label

    @property
    def breakpoints(self):
        return sorted(set(self.eta.breakpoints.tolist()) | {loc for loc, _ in self.eta.atoms})

    def __call__(self, lam, offset=None):
        """Evaluate at ``lam`` or, when ``offset`` is given, at ``lam + offset``.

        With an offset, distances to breakpoints are formed as
        ``(lam - b) + offset`` so points just right of a breakpoint keep
        full relative precision.
        """
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(lam.shape, np.shape(offset)) if offset is not None else lam.shape
        base = np.broadcast_to(lam, shape).ravel()
        off = np.broadcast_to(np.asarray(offset, dtype=float), shape).ravel() if offset is not None \
            else np.zeros(base.size)
        out = self._atoms(base, off) + self._pieces(base, off)
        out = out.reshape(shape) * self.const
        if self.eta.is_real:
            return out.real
        return out

    def _atoms(self, lam, off, chunk=2_000_000):
        out = np.zeros(lam.shape, dtype=complex)
        if not self.eta.atoms:
            return out
        loc = np.array([a for a, _ in self.eta.atoms], dtype=float)
        mass = np.array([m for _, m in self.eta.atoms], dtype=complex)
        step = max(1, chunk // loc.size)
        for lo in range(0, lam.size, step):
            diff = (lam[lo:lo + step, None] - loc[None]) + off[lo:lo + step, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.where(diff > 0, np.abs(diff) ** self.alpha, 0.0)
            out[lo:lo + step] = kern @ mass
        return out

    def _pieces(self, lam, off):
        eta, a_ = self.eta, self.alpha
        out = np.zeros(lam.shape, dtype=complex)
        if not eta.n_pieces:
            return out
        b = eta.breakpoints
        for i in range(eta.n_pieces):
            p = eta.coeffs[i]
            if not np.any(p):
                continue
            a = b[i]
            v1 = (lam - a) + off
            sel = np.flatnonzero(v1 > 0)
            if not sel.size:
                continue
            V1 = v1[sel]
            V0 = np.maximum((lam[sel] - b[i + 1]) + off[sel], 0.0)
            L = lam[sel] + off[sel]
            c = np.minimum(b[i + 1], L)
            if eta.power:
                out[sel] += _power_piece(p, a, c, L, a_, eta.power)
                continue
            near = V0 <= V1 - V0
            if np.any(near):
                out[sel[near]] += _near_piece(p, V0[near], V1[near], a_)
            if np.any(~near):
                out[sel[~near]] += _far_piece(p, a, c[~near], L[~near], a_)
        return out


def _near_piece(p, v0, v1, alpha):
    # substitute v = lam - mu, so the piece spans v0 <= v <= v1 = lam - a; re-centre p at v1
    j = np.arange(p.size)
    q = shift_coefficients(np.broadcast_to(p, (v1.size, p.size)), v1) * (-1.0) ** j
    e = alpha + j + 1
    v0, v1 = v0[:, None], v1[:, None]
    lo = np.where(v0 > 0, np.abs(v0) ** e, 0.0)
    return np.sum(q * (v1 ** e - lo) / e, axis=1)


_GL = np.polynomial.legendre.leggauss(28)


def _far_piece(p, a, c, lam, alpha):
    u, w = _GL
    mu = a + (c - a)[:, None] * (u + 1) / 2
    vals = np.polynomial.polynomial.polyval(mu - a, p) * (lam[:, None] - mu) ** alpha
    return (vals @ w) * (c - a) / 2


def _power_piece(p, a, c, lam, alpha, beta):
    # mu^beta * p(mu - a) expanded in monomials of mu; incomplete beta moments
    mono = shift_coefficients(p, -a)
    js = np.arange(mono.size) + beta + 1
    keep = mono != 0  # vanishing low-order terms may carry non-integrable exponents
    mono, js = mono[keep], js[keep]
    lam = np.asarray(lam, dtype=float)[:, None]
    full = special.beta(js, alpha + 1) * lam ** (js + alpha)
    hi = special.betainc(js, alpha + 1, np.minimum(np.asarray(c)[:, None] / lam, 1.0))
    lo = special.betainc(js, alpha + 1, a / lam) if a > 0 else 0.0
    return (full * (hi - lo)) @ mono


def xi_from_eta(eta, d):
    """Evaluator of ``xi = -c_d int_0^lam (lam - mu)^(d/2 - 1) eta(mu) dmu``."""
    C = FunctionalEquationConstants(d)
    return FractionalIntegral(eta, C.halfpower, -C.c_d, "xi")


def xi_k_from_eta(eta, d):
    """Evaluator of ``xi^(k) = -(1/pi)(4 pi)^(-k) int_0^lam (lam - mu)^(-1/2) eta``."""
    C = FunctionalEquationConstants(d)
    return FractionalIntegral(eta, -0.5, -C.half_order_constant, "xi^(k)")


def _value_at_zero(rho, tol):
    """Right limit at 0, allowing a ``mu^power`` factor (``inf`` when it blows up)."""
    if not rho.power:
        return rho.value_at(0.0, "right")
    i = int(np.searchsorted(rho.breakpoints, 0.0, side="right")) - 1
    if i < 0 or i >= rho.n_pieces:
        return 0.0
    # re-centre the first piece at 0 and find the leading exponent
    q = shift_coefficients(rho.coeffs[i], -rho.breakpoints[i])
    nz = np.flatnonzero(np.abs(q) > tol)
    if not nz.size:
        return 0.0
    expo = rho.power + nz[0]
    if expo > 0:
        return 0.0
    return q[nz[0]] if expo == 0 else math.inf


def _eta_derivatives(eta, k, rtol=1e-9):
    """Return ``eta^(k)`` after checking the boundary and smoothness conditions."""
    if any(m != 0 for _, m in eta.atoms):
        raise HypothesisNotMetError("eta carries atoms; the index formula needs a weakly differentiable eta")
    scale = max(np.abs(eta.coeffs).max() if eta.n_pieces else 0.0, 1e-300)
    cur = eta
    for j in range(k):
        if cur.n_pieces and cur.breakpoints[0] <= 0 <= cur.breakpoints[-1]:
            v0 = _value_at_zero(cur, rtol * scale)
            if abs(v0) > rtol * scale:
                raise HypothesisNotMetError(f"eta^({j})(0) = {v0!r} is not 0")
        cur = cur.derivative(check_continuity=True, rtol=rtol)
    return cur


def xi_dminus1_from_eta(eta, d):
    """Evaluator of ``xi^(d-1)`` from ``eta^((d-1)/2)``.

    Raises
    ------
    HypothesisNotMetError
        If ``eta`` has atoms, is not ``k`` times weakly differentiable, or
        ``eta^(j)(0) != 0`` for some ``j < k``.
    """
    C = FunctionalEquationConstants(d)
    etak = _eta_derivatives(eta, C.k)
    return FractionalIntegral(etak, -0.5, -C.half_order_constant, "xi^(d-1)")


# ------------------------------------------------------------ extrapolation
def richardson(values, ratio=2.0):
    """Richardson table for a sequence with errors in powers of ``h``, ``h_{j+1} = h_j / ratio``."""
    v = np.asarray(values, dtype=float)
    table = [v.copy()]
    for level in range(1, v.size):
        prev = table[-1]
        fac = ratio ** level - 1
        table.append(prev[1:] + (prev[1:] - prev[:-1]) / fac)
    return table


def _extrapolate(values, rtol, atol, what):
    values = np.asarray(values, dtype=float)
    diag = np.array([tab[-1] for tab in richardson(values)])
    raw_step = abs(values[-1] - values[-2])
    # first Richardson column is the most robust for oscillating remainders
    first = richardson(values)[1] if values.size > 1 else values
    rich_step = abs(first[-1] - first[-2]) if first.size > 1 else np.inf
    candidates = [(raw_step, values[-1], "raw"), (rich_step, first[-1], "richardson")]
    step, best, mode = min(candidates, key=lambda c: c[0])
    # relative to the size of the averages, so a limit of 0 can be detected
    scale = max(abs(best), float(np.max(np.abs(values))), atol / rtol if rtol else 0.0)
    converged = step <= rtol * scale or step <= atol
    diagnostics = {"sequence": values.tolist(), "richardson": first.tolist(), "diagonal": diag.tolist(),
                   "mode": mode, "last_step": float(step), "converged": bool(converged)}
    return float(best), converged, diagnostics


def _dyadic_averages(g, hs, depth=40, points=20):
    """``(1/h) int_0^h g`` for ``hs = h0 2^-j`` from one vectorised call of ``g``."""
    h0, levels = hs[0], hs.size
    u, w = np.polynomial.legendre.leggauss(points)
    edges = h0 * 2.0 ** -np.arange(levels + depth + 1)
    a, b = edges[1:, None], edges[:-1, None]
    x = (a + (b - a) * (u + 1) / 2).ravel()
    vals = np.real(np.asarray(g(x))).reshape(-1, points)
    panels = ((b - a)[:, 0] / 2) * (vals @ w)
    tails = np.cumsum(panels[::-1])[::-1]  # tails[j] = int_0^{edges[j]}
    return tails[:levels] / hs


def lebesgue_point_right(g, h0=1.0, levels=11, rtol=1e-3, atol=1e-10, raise_on_failure=True,
                         vectorized=False):
    """Right Lebesgue value at 0: ``lim_{h->0} (1/h) int_0^h g``.

    Averages are taken on ``h_j = h0 2^(-j)``, ``j = 0..levels-1``, and
    extrapolated with one Richardson step when that is more stable. With
    ``vectorized=True`` the averages come from dyadic Gauss-Legendre panels
    and ``g`` is called once on an array.

    Returns
    -------
    value : float
    diagnostics : dict
    """
    hs = h0 * 2.0 ** -np.arange(levels)
    if vectorized:
        avgs = _dyadic_averages(g, hs)
    else:
        avgs = []
        for h in hs:
            val, _ = integrate.quad(lambda u: float(np.real(g(np.array([u]))[0])), 0.0, h, limit=400)
            avgs.append(val / h)
    value, ok, diag = _extrapolate(avgs, rtol, atol, "Lebesgue point")
    diag["h"] = hs.tolist()
    if not ok and raise_on_failure:
        raise NoLimitError("no right Lebesgue point detected at 0", diag)
    return value, diag


def heat_limit(xi_dminus1, t_grid=None, rtol=1e-3, atol=1e-10, raise_on_failure=True):
    """Large-``t`` limit of ``-int nu e^-nu [(t/nu) int_0^(nu/t) xi^(d-1)] dnu``.

    The bracket integrates to ``-t L(xi^(d-1))(t)``, computed exactly for a
    density and by quadrature for an evaluator. Values on a doubling ``t``
    grid are extrapolated in ``1/t``.
    """
    t_grid = np.asarray(t_grid if t_grid is not None else 2.0 ** np.arange(2, 14), dtype=float)
    vals = []
    for t in t_grid:
        if isinstance(xi_dminus1, SpectralShiftDensity):
            vals.append(-t * xi_dminus1.laplace(t))
        else:
            g = xi_dminus1
            bps = [b * t for b in getattr(g, "breakpoints", []) if b > 0]
            f = lambda s: math.exp(-s) * float(np.real(g(np.array([s / t]))[0]))
            pts = [p for p in bps if p < 50][:50]
            v, _ = integrate.quad(f, 0, 50, points=pts or None, limit=400)
            v2, _ = integrate.quad(f, 50, np.inf, limit=200)
            vals.append(-(v + v2))
    value, ok, diag = _extrapolate(vals, rtol, atol, "heat limit")
    diag["t"] = t_grid.tolist()
    if not ok and raise_on_failure:
        raise NoLimitError("heat-trace averages did not converge", diag)
    return value, diag


def witten_index(eta, d, h0=None, rtol=1e-3):
    """Partial Witten index ``(4 pi)^(-k) L`` from a density ``eta``.

    ``L`` is the right Lebesgue value of ``u -> u eta^(k)(u^2)`` at 0. The
    direct route ``-xi^(d-1)(0+)`` is computed as well and both must agree
    to ``rtol`` (absolute when the index is 0).

    Returns
    -------
    dict with ``L``, ``index``, ``index_direct`` and ``diagnostics``.
    """
    C = FunctionalEquationConstants(d)
    etak = _eta_derivatives(eta, C.k)
    if h0 is None:
        supp = eta.support
        h0 = math.sqrt(supp[1]) / 2 if supp and supp[1] > 0 else 1.0
    g = lambda u: u * etak.evaluate(u ** 2)
    L, diag_L = lebesgue_point_right(g, h0=h0, rtol=rtol)
    index = (4 * math.pi) ** (-C.k) * L
    xi = FractionalIntegral(etak, -0.5, -C.half_order_constant, "xi^(d-1)")
    neg_xi0, diag_xi = lebesgue_point_right(lambda lam: -xi(lam), h0=h0 ** 2, rtol=rtol)
    scale = max(abs(index), 1.0)
    if abs(neg_xi0 - index) > 10 * rtol * scale:
        raise NoLimitError(f"index routes disagree: {index!r} vs {neg_xi0!r}",
                           {"L": diag_L, "xi": diag_xi})
    return {"L": L, "index": index, "index_direct": neg_xi0,
            "diagnostics": {"lebesgue": diag_L, "xi_dminus1": diag_xi}}


# ------------------------------------------------------------------ Fredholm
def fredholm_index(D, rtol=1e-10):
    """``dim ker D - dim ker D^*`` from singular values below ``rtol * sigma_max``."""
    D = np.asarray(D)
    m, n = D.shape
    s = np.linalg.svd(D, compute_uv=False)
    smax = s.max() if s.size else 0.0
    rank = int(np.sum(s > rtol * smax)) if smax > 0 else 0
    return (n - rank) - (m - rank)


def heat_trace_difference_matrix(D, t):
    """``Tr(exp(-t D^*D) - exp(-t DD^*))`` by eigenvalues, compensated sums."""
    D = np.asarray(D)
    e1 = np.linalg.eigvalsh(D.conj().T @ D)
    e2 = np.linalg.eigvalsh(D @ D.conj().T)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([math.fsum(np.exp(-s * e1)) - math.fsum(np.exp(-s * e2)) for s in ts])
    return out if np.ndim(t) else float(out[0])


# ------------------------------------------------------------------ d = 1
def symmetrized_krein_eta(kappa):
    """``eta(mu) = (kappa(sqrt mu) + kappa(-sqrt mu)) / (2 sqrt mu)`` as a power density."""
    if kappa.atoms or kappa.degree > 0:
        raise HypothesisNotMetError("expected a piecewise constant Krein function")
    if not kappa.n_pieces:
        return SpectralShiftDensity()
    b = kappa.breakpoints
    mus = np.unique(np.concatenate([[0.0], b ** 2]))
    mid = 0.5 * (mus[:-1] + mus[1:])
    r = np.sqrt(mid)
    c = kappa.evaluate(r) + kappa.evaluate(-r)
    return SpectralShiftDensity(mus, (c / 2)[:, None], power=-0.5)


def _direct_d1(kappa, lam, panel_points=8):
    """``-(1/pi) int_{-sqrt lam}^{sqrt lam} (lam - mu^2)^(-1/2) kappa(mu) dmu`` via ``mu = sqrt(lam) sin(theta)``."""
    u, w = np.polynomial.legendre.leggauss(panel_points)
    out = np.zeros(len(lam))
    b = kappa.breakpoints
    for i, x in enumerate(lam):
        if x <= 0:
            continue
        r = math.sqrt(x)
        th = np.arcsin(np.clip(b / r, -1, 1))
        th = np.unique(np.concatenate([[-math.pi / 2, math.pi / 2], th]))
        a0, a1 = th[:-1, None], th[1:, None]
        nodes = (a0 + (a1 - a0) * (u + 1) / 2).ravel()
        wts = ((a1 - a0) / 2 * w).ravel()
        out[i] = -np.sum(wts * np.real(kappa.evaluate(r * np.sin(nodes)))) / math.pi
    return out


def pushnitski_d1_check(Aplus, Aminus, grid):
    """Compare the symmetrised-Krein route with the direct kernel integral.

    Returns
    -------
    dict with ``lam``, ``xi_route_eta``, ``xi_route_direct`` and ``max_abs_diff``.
    """
    from .ssf import krein_ssf

    kappa = krein_ssf(Aplus, Aminus)
    eta = symmetrized_krein_eta(kappa)
    lam = np.asarray(grid, dtype=float)
    route1 = np.real(xi_from_eta(eta, 1)(lam)) if eta.n_pieces else np.zeros(lam.shape)
    route2 = _direct_d1(kappa, lam) if kappa.n_pieces else np.zeros(lam.shape)
    return {"lam": lam, "xi_route_eta": route1, "xi_route_direct": route2,
            "max_abs_diff": float(np.max(np.abs(route1 - route2))) if lam.size else 0.0}
