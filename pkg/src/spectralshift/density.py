"""Measures on the real line: piecewise polynomial part plus atoms.

A density is stored as sorted breakpoints ``b_0 < ... < b_P``, one row of
ascending polynomial coefficients per piece (centred at the left end of the
piece) and a list of atoms ``(location, mass)``. An optional global factor
``x**power`` multiplies every piece; it is 0 for everything produced by the
spectral constructions and only used for synthetic half-integer models.
"""
import json
import math

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import special

from .errors import DomainError, HypothesisNotMetError

__all__ = ["SpectralShiftDensity", "shift_coefficients", "format_number"]

_GL_CACHE = {}


def _gauss_legendre(m):
    if m not in _GL_CACHE:
        _GL_CACHE[m] = np.polynomial.legendre.leggauss(m)
    return _GL_CACHE[m]


def shift_coefficients(coeffs, delta):
    """Re-centre ascending coefficients: return q with q(y) = p(y + delta)."""
    coeffs = np.asarray(coeffs)
    deg = coeffs.shape[-1] - 1
    out = np.zeros_like(coeffs, dtype=np.result_type(coeffs, delta, float))
    # Horner-style Taylor shift, exact in exact arithmetic
    work = np.array(coeffs, dtype=out.dtype)
    for k in range(deg + 1):
        # k-th Taylor coefficient at delta: evaluate derivative polynomial
        val = np.zeros(work.shape[:-1], dtype=out.dtype)
        for j in range(work.shape[-1] - 1, -1, -1):
            val = val * delta + work[..., j]
        out[..., k] = val
        # differentiate and divide by (k + 1) to get the next Taylor coefficient
        if work.shape[-1] > 1:
            work = work[..., 1:] * np.arange(1, work.shape[-1]) / (k + 1)
        else:
            break
    return out


def format_number(x):
    return format(float(x), ".17g")


class SpectralShiftDensity:
    """Piecewise polynomial density with atoms.

    Parameters
    ----------
    breakpoints : array_like
        Sorted breakpoints, length ``P + 1`` (may be empty for a pure atom list).
    coeffs : array_like
        Shape ``(P, deg + 1)``, ascending coefficients centred at the left
        breakpoint of each piece.
    atoms : list of (float, complex)
        Point masses.
    power : float
        Global factor ``x**power`` (requires support in ``[0, inf)`` when nonzero).
    """

    def __init__(self, breakpoints=(), coeffs=None, atoms=(), power=0.0):
        b = np.asarray(breakpoints, dtype=float).ravel()
        if b.size == 1:
            b = np.zeros(0)
        if coeffs is None:
            coeffs = np.zeros((max(b.size - 1, 0), 1))
        c = np.asarray(coeffs)
        if c.ndim == 1:
            c = c[:, None] if b.size else c.reshape(0, 1)
        if b.size and c.shape[0] != b.size - 1:
            raise ValueError("need one coefficient row per piece")
        if b.size and np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.breakpoints = b
        self.coeffs = c if np.iscomplexobj(c) else c.astype(float)
        self.atoms = [(float(loc), complex(m)) for loc, m in atoms]
        self.atoms.sort(key=lambda a: a[0])
        self.power = float(power)
        if self.power != 0 and ((b.size and b[0] < 0) or any(a[0] < 0 for a in self.atoms)):
            raise DomainError("power-weighted densities must live on [0, inf)")

    # ------------------------------------------------------------------ basics
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, value, a, b):
        return cls([a, b], [[value]])

    @property
    def n_pieces(self):
        return max(self.breakpoints.size - 1, 0)

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1 if self.n_pieces else 0

    @property
    def support(self):
        lo, hi = [], []
        if self.n_pieces:
            nz = np.flatnonzero(np.any(self.coeffs != 0, axis=1))
            if nz.size:
                lo.append(self.breakpoints[nz[0]])
                hi.append(self.breakpoints[nz[-1] + 1])
        for loc, m in self.atoms:
            if m != 0:
                lo.append(loc)
                hi.append(loc)
        if not lo:
            return None
        return (min(lo), max(hi))

    @property
    def is_real(self):
        return not np.iscomplexobj(self.coeffs) and all(m.imag == 0 for _, m in self.atoms)

    def imag_fraction(self):
        """``L1(imag) / L1(total)`` using piecewise Gauss sums."""
        tot = self.l1_norm()
        if tot == 0:
            return 0.0
        return self.imag_part().l1_norm() / tot

    def real_part(self):
        return SpectralShiftDensity(self.breakpoints, np.real(self.coeffs),
                                    [(l, m.real) for l, m in self.atoms], self.power)

    def imag_part(self):
        return SpectralShiftDensity(self.breakpoints, np.imag(self.coeffs),
                                    [(l, m.imag) for l, m in self.atoms], self.power)

    def scaled(self, factor):
        return SpectralShiftDensity(self.breakpoints, self.coeffs * factor,
                                    [(l, m * factor) for l, m in self.atoms], self.power)

    def __mul__(self, factor):
        return self.scaled(factor)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1)

    def __add__(self, other):
        return SpectralShiftDensity.sum([self, other])

    def __sub__(self, other):
        return SpectralShiftDensity.sum([self, -other])

    # -------------------------------------------------------------- evaluation
    def evaluate(self, x):
        """Absolutely continuous part at ``x`` (right-continuous, 0 outside)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=self.coeffs.dtype if self.n_pieces else float)
        if not self.n_pieces:
            return out
        b = self.breakpoints
        idx = np.searchsorted(b, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.n_pieces)
        ii = idx[inside]
        y = x[inside] - b[ii]
        c = self.coeffs[ii]
        val = np.zeros(y.shape, dtype=c.dtype)
        for j in range(c.shape[1] - 1, -1, -1):
            val = val * y + c[:, j]
        if self.power:
            val = val * x[inside] ** self.power
        out[inside] = val
        return out

    __call__ = evaluate

    def _piece_nodes(self, m):
        """Gauss-Legendre nodes on every piece, singular weight ignored."""
        u, w = _gauss_legendre(m)
        a = self.breakpoints[:-1, None]
        h = np.diff(self.breakpoints)[:, None]
        x = a + h * (u + 1) / 2
        return x, w[None, :] * h / 2

    def pair(self, g, quad_points=None, panels=1):
        """Return ``int g d(density)`` for a vectorised callable ``g``.

        Pieces use Gauss-Legendre (or Gauss-Jacobi when ``power`` makes the
        first piece singular at 0); atoms are evaluated pointwise. ``panels``
        splits every piece into equal sub-panels for ``g`` that are smooth
        but far from polynomial.
        """
        total = 0j
        if self.n_pieces:
            m = quad_points or (self.degree + 40)
            x, w = self._piece_nodes(m)
            if panels > 1:
                u, wu = _gauss_legendre(m)
                sub = (np.arange(panels)[:, None] + (u + 1) / 2) / panels  # (panels, m) in [0, 1]
                a = self.breakpoints[:-1, None, None]
                h = np.diff(self.breakpoints)[:, None, None]
                x = (a + h * sub).reshape(self.n_pieces, -1)
                w = (np.broadcast_to(wu, sub.shape) * h / (2 * panels)).reshape(self.n_pieces, -1)
            dens = self.evaluate(x.ravel()).reshape(x.shape)
            if self.power and self.breakpoints[0] == 0:
                # replace the first piece with a Jacobi rule carrying x**power
                xj, wj = special.roots_jacobi(m, 0.0, self.power)
                h0 = self.breakpoints[1]
                xs = h0 * (xj + 1) / 2
                ws = wj * (h0 / 2) ** (self.power + 1)
                poly = np.polynomial.polynomial.polyval(xs, self.coeffs[0])
                total += np.sum(ws * poly * g(xs))
                x, w, dens = x[1:], w[1:], dens[1:]
            total += np.sum(w * dens * g(x))
        for loc, mass in self.atoms:
            total += mass * g(np.array(loc))
        return total.real if (self.is_real and np.isrealobj(total.imag) and total.imag == 0) else total

    def total_mass(self):
        return self.pair(lambda x: np.ones_like(x, dtype=float))

    def l1_norm(self):
        tot = sum(abs(m) for _, m in self.atoms)
        if self.n_pieces:
            # sample densely; the a.c. part is only used for diagnostics here
            x, w = self._piece_nodes(self.degree + 40)
            tot += float(np.sum(w * np.abs(self.evaluate(x.ravel()).reshape(x.shape))))
        return tot

    def laplace(self, t):
        """Exact Laplace transform ``int exp(-t x) d(density)``."""
        if not t > 0:
            raise DomainError(f"Laplace parameter must be positive, got {t!r}")
        total = 0j
        for loc, mass in self.atoms:
            total += mass * math.exp(-t * loc)
        b = self.breakpoints
        for i in range(self.n_pieces):
            a, w = b[i], b[i + 1] - b[i]
            c = self.coeffs[i]
            if not np.any(c):
                continue
            if self.power == 0:
                # int_0^w y^j e^{-t y} dy = j!/t^{j+1} P(j+1, t w)
                js = np.arange(c.size)
                mom = special.gamma(js + 1) / t ** (js + 1) * special.gammainc(js + 1, t * w)
                total += math.exp(-t * a) * np.dot(c, mom)
            else:
                mono = shift_coefficients(c, -a)  # coefficients in powers of x
                js = np.arange(c.size) + self.power + 1
                lo = special.gammainc(js, t * a) if a > 0 else np.zeros_like(js)
                mom = special.gamma(js) / t ** js * (special.gammainc(js, t * (a + w)) - lo)
                total += np.dot(mono, mom)
        if self.is_real:
            return float(total.real)
        return complex(total)

    # -------------------------------------------------------- transformations
    def derivative(self, check_continuity=True, rtol=1e-9):
        """Piecewise derivative of the absolutely continuous part.

        Raises HypothesisNotMetError when atoms are present or the density
        jumps (then it is not weakly differentiable).
        """
        if any(m != 0 for _, m in self.atoms):
            raise HypothesisNotMetError("density with atoms is not weakly differentiable")
        if not self.n_pieces:
            return SpectralShiftDensity()
        if check_continuity:
            jumps = self.jumps()
            scale = max(np.abs(self.coeffs).max(), 1e-300)
            bad = [(x, j) for x, j in jumps if abs(j) > rtol * scale]
            if bad:
                raise HypothesisNotMetError(f"density jumps at {bad[0][0]!r} by {bad[0][1]!r}")
        b = self.breakpoints
        c = self.coeffs
        deg = c.shape[1] - 1
        if self.power == 0:
            if deg == 0:
                return SpectralShiftDensity(b, np.zeros_like(c))
            dc = c[:, 1:] * np.arange(1, deg + 1)
            return SpectralShiftDensity(b, dc)
        # d/dx [x^p q(x - a)] = x^(p-1) [p q(y) + (a + y) q'(y)], y = x - a
        beta = self.power
        out = np.zeros((c.shape[0], deg + 1), dtype=c.dtype)
        for i in range(c.shape[0]):
            q = c[i]
            dq = q[1:] * np.arange(1, deg + 1) if deg else np.zeros(1)
            term = beta * q
            term = P.polyadd(term, b[i] * dq)
            term = P.polyadd(term, P.polymulx(dq))
            out[i, : term.size] = term[: deg + 1] if term.size > deg + 1 else term
        return SpectralShiftDensity(b, out, power=beta - 1)

    def jumps(self):
        """Jumps ``rho(b+) - rho(b-)`` at every breakpoint."""
        b = self.breakpoints
        if not self.n_pieces:
            return []
        left_vals = [np.polynomial.polynomial.polyval(b[i + 1] - b[i], self.coeffs[i])
                     for i in range(self.n_pieces)]
        right_vals = [self.coeffs[i, 0] for i in range(self.n_pieces)]
        out = []
        for k, x in enumerate(b):
            left = left_vals[k - 1] if k >= 1 else 0.0
            right = right_vals[k] if k < self.n_pieces else 0.0
            fac = x ** self.power if (self.power and x > 0) else 1.0
            if self.power and x == 0:
                continue
            out.append((float(x), (right - left) * fac))
        return out

    def value_at(self, x, side="right"):
        """One-sided limit of the a.c. part at ``x``."""
        b = self.breakpoints
        if not self.n_pieces:
            return 0.0
        if side == "right":
            i = np.searchsorted(b, x, side="right") - 1
            if i < 0 or i >= self.n_pieces:
                return 0.0
            val = np.polynomial.polynomial.polyval(x - b[i], self.coeffs[i])
        else:
            i = np.searchsorted(b, x, side="left") - 1
            if i < 0 or i >= self.n_pieces:
                return 0.0
            val = np.polynomial.polynomial.polyval(x - b[i], self.coeffs[i])
        if self.power:
            val = val * x ** self.power
        return val

    # ---------------------------------------------------------------- merging
    @staticmethod
    def sum(densities, merge_rtol=1e-12):
        """Sum densities on the union of their breakpoints.

        Breakpoints closer than ``merge_rtol * span`` are merged; a piece that
        collapses under merging is kept as an atom carrying its mass. Atoms at
        the same location are combined.
        """
        densities = [d for d in densities if d.n_pieces or d.atoms]
        if not densities:
            return SpectralShiftDensity()
        powers = {d.power for d in densities if d.n_pieces}
        if len(powers) > 1:
            raise ValueError("cannot sum densities with different power factors")
        power = powers.pop() if powers else 0.0
        return SpectralShiftDensity.from_pieces(
            [d.breakpoints[:-1] for d in densities if d.n_pieces],
            [d.breakpoints[1:] for d in densities if d.n_pieces],
            [d.coeffs for d in densities if d.n_pieces],
            [a for d in densities for a in d.atoms],
            power=power, merge_rtol=merge_rtol)

    @staticmethod
    def from_pieces(lefts, rights, coeffs, atoms=(), power=0.0, merge_rtol=1e-12, chunk=1_000_000):
        """Sum of polynomial pieces ``coeffs[i]`` living on ``[lefts[i], rights[i]]``.

        Arguments are lists of arrays (concatenated internally); coefficient
        rows may have different lengths.
        """
        if lefts:
            deg = max(c.shape[1] for c in coeffs) - 1
            dtype = np.result_type(*[c.dtype for c in coeffs], float)
            a = np.concatenate(lefts)
            b = np.concatenate(rights)
            C = np.zeros((a.size, deg + 1), dtype=dtype)
            row = 0
            for c in coeffs:
                C[row : row + c.shape[0], : c.shape[1]] = c
                row += c.shape[0]
        else:
            a = b = np.zeros(0)
            C = np.zeros((0, 1))
            deg, dtype = 0, float
        atom_locs = np.array([l for l, _ in atoms], dtype=float)
        pts = np.concatenate([a, b, atom_locs])
        if pts.size == 0:
            return SpectralShiftDensity()
        span = float(pts.max() - pts.min())
        tol = merge_rtol * span
        grid = _merge_points(np.concatenate([a, b]), tol)
        acc = {}
        if grid.size >= 2:
            u0 = _grid_index(grid, a)
            u1 = _grid_index(grid, b)
            collapsed = u1 <= u0
            out = np.zeros((grid.size - 1, deg + 1), dtype=dtype)
            live = np.flatnonzero(~collapsed)
            cum = np.cumsum(u1[live] - u0[live])
            pos = 0
            while pos < live.size:
                base = cum[pos - 1] if pos else 0
                end = max(pos + 1, int(np.searchsorted(cum, base + chunk, side="right")))
                sel = live[pos:end]
                cnt = u1[sel] - u0[sel]
                pid = np.repeat(sel, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                u = u0[pid] + offs
                np.add.at(out, u, shift_coefficients(C[pid], grid[u] - a[pid]))
                pos = end
            for i in np.flatnonzero(collapsed):
                mass = np.sum(C[i] * (b[i] - a[i]) ** np.arange(1, deg + 2) / np.arange(1, deg + 2))
                if power:
                    mass = mass * (0.5 * (a[i] + b[i])) ** power
                if mass != 0:
                    key = float(grid[min(u0[i], grid.size - 1)])
                    acc[key] = acc.get(key, 0) + mass
        else:
            out = None
            for i in range(a.size):
                mass = np.sum(C[i] * (b[i] - a[i]) ** np.arange(1, deg + 2) / np.arange(1, deg + 2))
                if mass != 0:
                    acc[float(a[i])] = acc.get(float(a[i]), 0) + mass
        for loc, m in atoms:
            key = _snap(loc, grid, tol)
            acc[key] = acc.get(key, 0) + m
        merged = [(k, v) for k, v in sorted(acc.items()) if v != 0]
        if out is None:
            return SpectralShiftDensity((), None, merged, power)
        return SpectralShiftDensity(grid, out, merged, power)

    # ----------------------------------------------------------- serialization
    def to_dict(self):
        def num(z):
            z = complex(z)
            return float(z.real) if z.imag == 0 else [float(z.real), float(z.imag)]

        return {
            "breakpoints": [float(x) for x in self.breakpoints],
            "coefficients": [[num(z) for z in row] for row in self.coeffs],
            "atoms": [[float(l), num(m)] for l, m in self.atoms],
            "power": self.power,
        }

    def to_json(self):
        return _dump(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        def val(z):
            return complex(z[0], z[1]) if isinstance(z, list) else float(z)

        coeffs = [[val(z) for z in row] for row in data.get("coefficients", [])]
        if coeffs and any(isinstance(z, complex) for row in coeffs for z in row):
            coeffs = np.array(coeffs, dtype=complex)
        else:
            coeffs = np.array(coeffs, dtype=float) if coeffs else None
        return cls(data.get("breakpoints", []), coeffs,
                   [(l, val(m)) for l, m in data.get("atoms", [])], data.get("power", 0.0))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"SpectralShiftDensity(pieces={self.n_pieces}, degree={self.degree}, "
                f"atoms={len(self.atoms)}, support={self.support})")


def _merge_points(points, tol):
    if points.size == 0:
        return points
    pts = np.sort(points)
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    return np.array(keep)


def _grid_index(grid, x):
    i = np.searchsorted(grid, x)
    i = np.clip(i, 0, grid.size - 1)
    j = np.clip(i - 1, 0, grid.size - 1)
    return np.where(np.abs(grid[j] - x) < np.abs(grid[i] - x), j, i)


def _snap(x, grid, tol):
    if grid.size:
        i = np.argmin(np.abs(grid - x))
        if abs(grid[i] - x) <= tol:
            return float(grid[i])
    return float(x)


def _dump(obj):
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(json.dumps(k) + ": " + _dump(v) for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return json.dumps(str(obj))
        return format_number(obj)
    return json.dumps(obj)
