"""Periodic lattice discretisation of the Callias operator ``D = i c.grad + A(x)``.

Operators act on ``l^2(grid) (x) C^r (x) C^m`` in that tensor order. The
gradient is the periodic central difference, so ``i c.grad`` stays exactly
skew-adjoint and the lattice identities hold to rounding.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .clifford import PAULI, build_clifford
from .divdiff import simplex_rule
from .errors import DomainError, NumericError, ResourceError, ShapeError

__all__ = [
    "PotentialFamily",
    "SmoothCutoff",
    "LatticeModel",
    "AssembledOperators",
    "assemble",
    "heat_trace_diff",
    "rhs_trace_formula",
    "eta_and_xi_for_model",
    "spectrum_symmetry",
    "hedgehog_rhs_ball",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 4096


# ----------------------------------------------------------------- potentials
@dataclass
class PotentialFamily:
    """``A(x) = A_0 + B(x)`` with an analytic gradient of ``B``.

    Use the constructors ``constant``, ``hedgehog`` and ``bumps``.
    """

    name: str
    d: int
    m: int
    A0: np.ndarray
    params: dict = field(default_factory=dict)
    _B: object = None
    _grad: object = None

    def B(self, X):
        X = np.atleast_2d(X)
        if self._B is None:
            return np.zeros((X.shape[0], self.m, self.m), dtype=complex)
        return self._B(X)

    def gradB(self, X):
        X = np.atleast_2d(X)
        if self._grad is None:
            return np.zeros((X.shape[0], self.d, self.m, self.m), dtype=complex)
        return self._grad(X)

    def A(self, X):
        return self.A0[None] + self.B(X)

    @property
    def scale(self):
        """Typical size of the potential, used to pick moderate ``t``."""
        return float(self.params.get("mu", self.params.get("amplitude", 1.0))) or 1.0

    @classmethod
    def constant(cls, d, m, mu=1.0):
        return cls("constant", d, m, mu * np.eye(m, dtype=complex), {"mu": mu})

    @classmethod
    def hedgehog(cls, mu=1.0):
        """``B(x) = g(r) xhat.sigma`` with ``g(r) = mu r^2/(1+r^2)``, ``d = 3``, ``m = 2``."""
        sig = np.array(PAULI)

        def B(X):
            r2 = np.sum(X ** 2, axis=1)
            s = mu * np.sqrt(r2) / (1 + r2)  # g(r)/r
            return np.einsum("p,pa,aij->pij", s, X, sig)

        def grad(X):
            r2 = np.sum(X ** 2, axis=1)
            r = np.sqrt(r2)
            s = mu * r / (1 + r2)
            with np.errstate(divide="ignore", invalid="ignore"):
                ds_over_r = np.where(r > 0, mu * (1 - r2) / (1 + r2) ** 2 / r, 0.0)
            # d_j (s x_a) = s delta_ja + (ds/dr) x_j x_a / r
            G = s[:, None, None] * np.eye(3)[None] + ds_over_r[:, None, None] * X[:, :, None] * X[:, None, :]
            return np.einsum("pja,aik->pjik", G, sig).astype(complex)

        return cls("hedgehog", 3, 2, np.zeros((2, 2), dtype=complex), {"mu": mu}, B, grad)

    @classmethod
    def bumps(cls, d, m, seed=0, count=3, amplitude=1.0, width=1.0, spread=1.0, a0=1.0):
        """Sum of Gaussian bumps times random Hermitian matrices over ``A_0 = a0 diag(+-1)``."""
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-spread, spread, size=(count, d))
        H = rng.normal(size=(count, m, m)) + 1j * rng.normal(size=(count, m, m))
        H = amplitude * (H + np.conj(np.swapaxes(H, 1, 2))) / 2
        A0 = a0 * np.diag([(-1.0) ** i for i in range(m)]).astype(complex)

        def weights(X):
            diff = X[:, None, :] - centers[None]
            return diff, np.exp(-np.sum(diff ** 2, axis=2) / (2 * width ** 2))

        def B(X):
            _, w = weights(X)
            return np.einsum("pk,kij->pij", w, H)

        def grad(X):
            diff, w = weights(X)
            return np.einsum("pkj,pk,kab->pjab", -diff / width ** 2, w, H)

        params = {"seed": seed, "count": count, "amplitude": amplitude, "width": width,
                  "spread": spread, "a0": a0}
        return cls("bumps", d, m, A0, params, B, grad)

    @classmethod
    def from_config(cls, d, m, spec):
        spec = dict(spec)
        name = spec.pop("family")
        if name == "constant":
            return cls.constant(d, m, **spec)
        if name == "hedgehog":
            if d != 3 or m != 2:
                raise ShapeError("the hedgehog family needs d = 3 and m = 2")
            return cls.hedgehog(**spec)
        if name == "bumps":
            return cls.bumps(d, m, **spec)
        raise DomainError(f"unknown potential family {name!r}")


def _psi(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def _dpsi(x):
    with np.errstate(divide="ignore", over="ignore"):
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, np.exp(-1.0 / xs) / xs ** 2, 0.0)


@dataclass(frozen=True)
class SmoothCutoff:
    """Radial ``C^infinity`` bump: 1 on ``|x| <= inner``, 0 on ``|x| >= outer``."""

    inner: float = 0.5
    outer: float = 1.5

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise DomainError("cutoff needs 0 < inner < outer")

    def _profile(self, r):
        s = (r - self.inner) / (self.outer - self.inner)
        a, b = _psi(1 - s), _psi(s)
        chi = a / (a + b)
        da, db = -_dpsi(1 - s), _dpsi(s)
        dchi = (da * (a + b) - a * (da + db)) / (a + b) ** 2 / (self.outer - self.inner)
        return chi, dchi

    def phi(self, X):
        return self._profile(np.linalg.norm(np.atleast_2d(X), axis=1))[0]

    def grad(self, X):
        X = np.atleast_2d(X)
        r = np.linalg.norm(X, axis=1)
        _, dchi = self._profile(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            xhat = np.where(r[:, None] > 0, X / r[:, None], 0.0)
        return dchi[:, None] * xhat


# ---------------------------------------------------------------------- model
@dataclass
class LatticeModel:
    """Periodic grid model of ``D_B``.

    Grid points are cell centres ``(i - N/2 + 1/2) h``, ``i = 0..N-1``, on
    each axis, so the box is ``[-N h/2, N h/2]^d``.
    """

    d: int
    N: int
    h: float
    m: int
    potential: PotentialFamily
    cutoff: SmoothCutoff = field(default_factory=SmoothCutoff)
    t_list: tuple = ()
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.d < 1 or self.d % 2 == 0:
            raise DomainError(f"d must be odd and positive, got {self.d}")
        if self.N < 2 or self.h <= 0:
            raise DomainError("need N >= 2 and h > 0")
        if self.potential.d != self.d or self.potential.m != self.m:
            raise ShapeError("potential dimensions do not match the model")
        A0 = self.potential.A0
        if np.abs(A0 - A0.conj().T).max() > 1e-12:
            raise DomainError("A_0 is not Hermitian")

    @property
    def r(self):
        return 2 ** ((self.d - 1) // 2)

    @property
    def dim(self):
        return self.N ** self.d * self.r * self.m

    @property
    def box(self):
        return self.N * self.h

    def grid(self, points=None):
        n = self.N if points is None else int(points)
        step = self.box / n
        xs = (np.arange(n) - n / 2 + 0.5) * step
        X = np.stack(np.meshgrid(*([xs] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        return X, step ** self.d

    def fiber_data(self, cutoff=True, points=None):
        """Points, cell volume, ``A`` (or ``A_phi``) and its analytic gradient."""
        X, vol = self.grid(points)
        B, G = self.potential.B(X), self.potential.gradB(X)
        A0 = self.potential.A0
        if cutoff:
            phi = self.cutoff.phi(X)
            dphi = self.cutoff.grad(X)
            G = (1 - phi)[:, None, None, None] * G - np.einsum("pj,pab->pjab", dphi, B)
            B = (1 - phi)[:, None, None] * B
        return X, vol, A0[None] + B, G

    def gradient_self_check(self, samples=32, step=1e-5, seed=0):
        """Max relative gap between the analytic gradient and central differences."""
        X, _ = self.grid()
        idx = np.random.default_rng(seed).choice(X.shape[0], size=min(samples, X.shape[0]), replace=False)
        X = X[idx]
        G = self.potential.gradB(X)
        scale = max(np.abs(G).max(), 1e-300)
        err = 0.0
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = step
            fd = (self.potential.B(X + e) - self.potential.B(X - e)) / (2 * step)
            err = max(err, np.abs(fd - G[:, j]).max() / scale)
        return err

    @classmethod
    def from_config(cls, cfg):
        pot = PotentialFamily.from_config(cfg["d"], cfg["m"], cfg["potential"])
        phi = SmoothCutoff(**cfg.get("phi", {}))
        return cls(cfg["d"], cfg["N"], cfg["h"], cfg["m"], pot, phi,
                   tuple(cfg.get("t_list", ())), cfg.get("cap", DEFAULT_CAP))


# ------------------------------------------------------------------ assembly
@dataclass
class AssembledOperators:
    """``D``, ``D^*``, ``H`` plus the kinetic part ``C`` and multiplication ``M``.

    ``M_icgradA = [C, M]`` is the lattice version of multiplication by
    ``i c.grad A``; with it ``D^*D = H - M_icgradA`` and ``DD^* = H + M_icgradA``.
    """

    D: np.ndarray
    Dstar: np.ndarray
    C: np.ndarray
    M: np.ndarray
    shape: tuple  # (N^d, r, m)

    @cached_property
    def H(self):
        return (self.Dstar @ self.D + self.D @ self.Dstar) / 2

    @cached_property
    def M_icgradA(self):
        return self.C @ self.M - self.M @ self.C

    @cached_property
    def spectra(self):
        try:
            e1 = np.linalg.eigvalsh(self.Dstar @ self.D)
            e2 = np.linalg.eigvalsh(self.D @ self.Dstar)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolve failed: {exc}") from exc
        return e1, e2


def _central_difference(N, h):
    main = np.ones(N) / (2 * h)
    D = sparse.diags([main[:-1], -main[:-1]], [1, -1], shape=(N, N), format="lil")
    D[N - 1, 0] += 1 / (2 * h)
    D[0, N - 1] -= 1 / (2 * h)
    return D.tocsr()


def _kinetic(model, sign):
    rep = build_clifford(model.d)
    N, d = model.N, model.d
    d1 = _central_difference(N, model.h)
    I = sparse.identity(N, format="csr")
    C = None
    for j in range(d):
        factors = [I] * d
        factors[j] = d1
        op = factors[0]
        for f in factors[1:]:
            op = sparse.kron(op, f, format="csr")
        term = sparse.kron(sparse.kron(op, sparse.csr_matrix(rep[j + 1])), sparse.identity(model.m))
        C = term if C is None else C + term
    return (sign * 1j) * C


def _multiplication(model):
    X, _ = model.grid()
    A = model.potential.A(X)
    herm = np.abs(A - np.conj(np.swapaxes(A, 1, 2))).max()
    if herm > 1e-12 * max(1.0, np.abs(A).max()):
        raise DomainError(f"potential is not Hermitian on the grid (defect {herm:.3e})")
    blocks = np.repeat(A, model.r, axis=0)
    return sparse.block_diag(list(blocks), format="csr")


def assemble(model, cap=None, check_tol=1e-12):
    """Dense ``D``, independently assembled ``D^*``, and the split ``D = C + M``.

    Raises
    ------
    ResourceError
        If ``N^d r m`` exceeds ``cap`` (default the model cap).
    NumericError
        If ``D^*`` disagrees with the conjugate transpose of ``D``.
    """
    cap = model.cap if cap is None else cap
    if model.dim > cap:
        raise ResourceError(f"operator dimension {model.dim} exceeds cap {cap}")
    C = _kinetic(model, +1)
    M = _multiplication(model)
    D = (C + M).toarray()
    Dstar = (_kinetic(model, -1) + M).toarray()
    gap = np.abs(Dstar - D.conj().T).max()
    if gap > check_tol * max(1.0, np.abs(D).max()):
        raise NumericError(f"D^* assembly disagrees with the adjoint (gap {gap:.3e})")
    return AssembledOperators(D, Dstar, C.toarray(), M.toarray(), (model.N ** model.d, model.r, model.m))


def heat_trace_diff(ops, t, iterated=False):
    """``Tr(exp(-t D^*D) - exp(-t DD^*))`` with compensated summation.

    In finite dimensions the partial trace over ``C^r`` followed by the
    remaining trace is the full trace; ``iterated=True`` computes it site by
    site from eigenvectors, for diagnostics.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise DomainError("t must be positive")
    if iterated:
        out = _iterated_heat(ops, ts)
    else:
        e1, e2 = ops.spectra
        out = np.array([math.fsum(np.exp(-s * e1)) - math.fsum(np.exp(-s * e2)) for s in ts])
    return out if np.ndim(t) else float(out[0])


def _iterated_heat(ops, ts):
    e1, v1 = np.linalg.eigh(ops.Dstar @ ops.D)
    e2, v2 = np.linalg.eigh(ops.D @ ops.Dstar)
    n, r, m = ops.shape
    out = []
    for s in ts:
        k1 = (np.abs(v1) ** 2 @ np.exp(-s * e1)).reshape(n, r, m).sum(axis=(1, 2))
        k2 = (np.abs(v2) ** 2 @ np.exp(-s * e2)).reshape(n, r, m).sum(axis=(1, 2))
        out.append(math.fsum(k1 - k2))
    return np.array(out)


def spectrum_symmetry(ops, zero_rtol=1e-9):
    """Max relative distance between the nonzero eigenvalues of ``D^*D`` and ``DD^*``."""
    e1, e2 = ops.spectra
    scale = max(e1.max(), e2.max(), 1e-300)
    nz1 = np.sort(e1[e1 > zero_rtol * scale])
    nz2 = np.sort(e2[e2 > zero_rtol * scale])
    if nz1.size != nz2.size:
        return math.inf
    return float(np.max(np.abs(nz1 - nz2)) / scale) if nz1.size else 0.0


# ------------------------------------------------------------------------ RHS
def rhs_trace_formula(model, t, rule=None, points=None, chunk=4096):
    """``(2/d)(4 pi)^(-d/2) t^(d/2) sum_x vol int_simplex Tr prod_j (B e^{-t s_j A_phi^2})``.

    ``B = i c.grad A_phi`` uses the analytic gradient. ``points`` sets the
    quadrature grid per axis over the model box (default: the lattice grid).
    """
    d = model.d
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    rep = build_clifford(d)
    cs = np.array(rep.matrices)
    X, vol, A, G = model.fiber_data(cutoff=True, points=points)
    keep = np.any(np.abs(G) > 0, axis=(1, 2, 3))
    A, G = A[keep], G[keep]
    if rule is None:
        # exp(-a s) with a = t max eig(A^2) needs about a/2 extra Gauss points per axis
        a = float(ts.max() * np.max(np.abs(np.linalg.eigvalsh(A))) ** 2) if A.shape[0] else 0.0
        rule = simplex_rule(d - 1, points=min(40, 9 + math.ceil(a / 2)), kind="uniform")
    if rule.n != d - 1:
        raise ShapeError(f"simplex rule order {rule.n} does not match d - 1 = {d - 1}")
    S = np.asarray(rule.nodes)  # (Q, d) barycentric coordinates
    W = np.asarray(rule.weights)
    acc = [[] for _ in ts]
    for lo in range(0, A.shape[0], chunk):
        a, g = A[lo:lo + chunk], G[lo:lo + chunk]
        w, V = np.linalg.eigh(a)
        # i c.grad A in the eigenbasis of 1 (x) A
        Gt = np.einsum("pba,pjbc,pcd->pjad", V.conj(), g, V)
        B = 1j * np.einsum("jrs,pjab->prasb", cs, Gt).reshape(a.shape[0], rep.r * model.m, rep.r * model.m)
        lam2 = np.tile(w ** 2, rep.r)  # (P, rm)
        for it, s in enumerate(ts):
            E = np.exp(-s * S[None, :, :, None] * lam2[:, None, None, :])  # (P, Q, d, rm)
            prod = B[:, None] * E[:, :, 0, None, :]
            for j in range(1, d):
                prod = prod @ (B[:, None] * E[:, :, j, None, :])
            tr = np.trace(prod, axis1=2, axis2=3) @ W
            acc[it].append(tr)
    pref = (2 / d) * (4 * math.pi) ** (-d / 2)
    out = []
    for it, s in enumerate(ts):
        vals = np.concatenate(acc[it]) if acc[it] else np.zeros(0)
        total = math.fsum(vals.real) + 1j * math.fsum(vals.imag)
        if abs(total.imag) > 1e-8 * max(1.0, abs(total.real)):
            raise NumericError(f"RHS trace is not real: {total!r}")
        out.append(pref * s ** (d / 2) * vol * total.real)
    out = np.array(out)
    return out if np.ndim(t) else float(out[0])


def hedgehog_rhs_ball(mu, t, R):
    """Continuum RHS of the hedgehog over the ball of radius ``R``.

    The integrand is radial and integrates to ``-P(3/2, t g(R)^2)`` with
    ``P`` the regularised lower incomplete gamma function and ``g`` the profile.
    """
    from scipy.special import gammainc

    g = mu * R ** 2 / (1 + R ** 2)
    return -gammainc(1.5, np.asarray(t, dtype=float) * g ** 2)


# ------------------------------------------------------------------ pipeline
def eta_and_xi_for_model(model, t_list=None, rtol=0.1, ops=None, raise_on_mismatch=False):
    """``eta`` from the fiber reduction and the ``xi`` evaluator, with a Laplace check.

    Returns
    -------
    eta : SpectralShiftDensity
    xi : callable
    report : dict
        ``t``, ``lhs`` (heat trace), ``laplace`` (``-t^d L(xi)(t)``) and
        ``laplace_eta`` (``2 (4pi)^(-d/2) t^(d/2) L(eta)(t)``).
    """
    from .ssf import eta_callias
    from .transform import laplace_of_evaluator, xi_from_eta

    eta = eta_callias(model)
    xi = xi_from_eta(eta, model.d)
    t_list = list(model.t_list if t_list is None else t_list)
    report = {"t": t_list, "lhs": [], "laplace": [], "laplace_eta": [], "consistent": True}
    if t_list:
        if ops is None and model.dim <= model.cap:
            ops = assemble(model)
        supp = eta.support
        upper = supp[1] if supp else 1.0
        for t in t_list:
            lx = laplace_of_evaluator(xi, t, xi.breakpoints, upper=upper) if eta.n_pieces or eta.atoms else 0.0
            report["laplace"].append(-t ** model.d * lx)
            report["laplace_eta"].append(2 * (4 * math.pi) ** (-model.d / 2) * t ** (model.d / 2) * eta.laplace(t))
            report["lhs"].append(heat_trace_diff(ops, t) if ops is not None else math.nan)
        gaps = [abs(a - b) / max(abs(a), abs(b), 1e-3) for a, b in zip(report["laplace"], report["lhs"])]
        report["relgap"] = gaps
        report["consistent"] = bool(all(g <= rtol for g in gaps))
        if raise_on_mismatch and not report["consistent"]:
            raise NumericError(f"Laplace check failed: gaps {gaps}")
    return eta, xi, report
