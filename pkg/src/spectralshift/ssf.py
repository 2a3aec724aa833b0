"""Spectral shift densities in finite dimensions.

For a Hermitian ``A`` with spectral projections ``P_i`` the trace
``Tr(T_0 J(Dif_n f, A, T))`` equals ``sum_tuples w * Dif_n f(nodes)`` with
weights ``w = Tr(T_0 P_{i0} T_1 P_{i1} .. T_n P_{in})``. Replacing every
divided difference by its B-spline density gives a measure ``eta`` with

    int f^(n) d(eta) = Tr(T_0 J(Dif_n f, A, T))

exactly. Coincident eigenvalue tuples produce atoms.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

from .clifford import build_clifford
from .density import SpectralShiftDensity
from .divdiff import bspline_density
from .errors import NumericError, ShapeError
from .moi import HermitianOperator, OperatorVector, _as_operator

__all__ = [
    "WeightedTupleExpansion",
    "weighted_tuples",
    "ssf_density",
    "krein_ssf",
    "counting_difference",
    "callias_fiber_operators",
    "eta_callias",
    "eta_callias_direct_pairing",
    "PRUNE_RTOL",
]

PRUNE_RTOL = 1e-14
MAX_WEIGHT_TENSOR = 5_000_000


@dataclass
class WeightedTupleExpansion:
    """Distinct eigenvalue multisets with their summed trace weights."""

    tuples: np.ndarray   # (K, n + 1) sorted node values
    weights: np.ndarray  # (K,) complex

    def pair(self, f):
        """``sum w Dif_n f(tuple)`` for a ScalarFunctionFamily ``f``."""
        from .divdiff import divided_difference_batch

        if not len(self.weights):
            return 0j
        return complex(np.dot(self.weights, divided_difference_batch(f, self.tuples)))


def weighted_tuples(n, A, T0, T, prune_rtol=PRUNE_RTOL):
    """Weights ``Tr(T_0 P_{i0} T_1 .. T_n P_{in})`` merged over node multisets."""
    A = _as_operator(A)
    T = OperatorVector(T)
    if T.n != n:
        raise ShapeError(f"order {n} needs {n} interleaved operators, got {T.n}")
    dim = A.dim
    T0 = np.eye(dim, dtype=complex) if T0 is None else np.asarray(T0, dtype=complex)
    if T0.shape != (dim, dim) or (n and T[0].shape != (dim, dim)):
        raise ShapeError("dimension mismatch between A, T0 and T")
    if dim ** (n + 1) > MAX_WEIGHT_TENSOR:
        raise ShapeError(f"dim^(n+1) = {dim ** (n + 1)} too large for the tuple expansion")
    V = A.eigenvectors
    Vh = V.conj().T
    t0 = Vh @ T0 @ V
    ts = [Vh @ Tj @ V for Tj in T]
    letters = "abcdefghijklmnopqrstuvwxyz"
    idx = letters[: n + 1]
    spec = idx[n] + idx[0]
    for j in range(n):
        spec += "," + idx[j] + idx[j + 1]
    W = np.einsum(spec + "->" + idx, t0, *ts)
    # sum basis vectors into eigenvalue groups (groups are contiguous)
    starts = np.flatnonzero(np.r_[True, np.diff(A.group_of) != 0])
    for axis in range(n + 1):
        W = np.add.reduceat(W, starts, axis=axis)
    k = A.distinct.size
    grids = np.meshgrid(*([np.arange(k)] * (n + 1)), indexing="ij")
    gidx = np.stack([g.ravel() for g in grids], axis=1)
    gidx.sort(axis=1)
    w = W.ravel()
    uniq, inv = np.unique(gidx, axis=0, return_inverse=True)
    merged = np.zeros(uniq.shape[0], dtype=complex)
    np.add.at(merged, inv.ravel(), w)
    # prune against the a priori bound prod ||T_j||, so exact cancellations vanish
    scale = np.linalg.norm(t0) * np.prod([np.linalg.norm(x) for x in ts])
    keep = np.abs(merged) >= prune_rtol * scale if scale > 0 else np.zeros(merged.size, bool)
    return WeightedTupleExpansion(A.distinct[uniq[keep]], merged[keep])


def _density_from_expansion(exp, n):
    lefts, rights, coeffs, atoms = [], [], [], []
    for nodes, w in zip(exp.tuples, exp.weights):
        if nodes[0] == nodes[-1]:
            atoms.append((nodes[0], w / factorial(n)))
            continue
        rho = bspline_density(nodes)
        lefts.append(rho.breakpoints[:-1])
        rights.append(rho.breakpoints[1:])
        coeffs.append(rho.coeffs * w)
    return SpectralShiftDensity.from_pieces(lefts, rights, coeffs, atoms)


def ssf_density(n, A, T0, T):
    """Density ``eta`` with ``int f^(n) d(eta) = Tr(T_0 J(Dif_n f, A, T))``.

    Parameters
    ----------
    n : int
        Order, ``n >= 1``.
    A : HermitianOperator or array
    T0 : array or None
        ``None`` stands for the identity.
    T : sequence of ``n`` arrays

    Returns
    -------
    SpectralShiftDensity
        Sum of weighted B-spline densities over eigenvalue multisets. The
        support lies in the convex hull of the spectrum of ``A``.
    """
    if n < 1:
        raise ShapeError("spectral shift densities need n >= 1")
    exp = weighted_tuples(n, A, T0, T)
    return _density_from_expansion(exp, n)


def counting_difference(Aplus, Aminus, x):
    """``#{eig(A-) <= x} - #{eig(A+) <= x}`` evaluated at the points ``x``."""
    lp = np.linalg.eigvalsh(np.asarray(_as_operator(Aplus).matrix))
    lm = np.linalg.eigvalsh(np.asarray(_as_operator(Aminus).matrix))
    x = np.asarray(x, dtype=float)
    return (np.searchsorted(np.sort(lm), x, side="right")
            - np.searchsorted(np.sort(lp), x, side="right")).astype(float)


def krein_ssf(Aplus, Aminus):
    """Krein spectral shift function of the pair as a piecewise constant density.

    ``Tr(f(A+) - f(A-)) = int f'(x) xi(x) dx`` with
    ``xi(x) = #{eig(A-) <= x} - #{eig(A+) <= x}``.
    """
    Ap, Am = _as_operator(Aplus), _as_operator(Aminus)
    if Ap.dim != Am.dim:
        raise ShapeError("Krein shift needs operators of equal dimension")
    lp, lm = Ap.eigenvalues, Am.eigenvalues
    pts = np.unique(np.concatenate([lp, lm]))
    if pts.size < 2:
        return SpectralShiftDensity()
    vals = (np.searchsorted(lm, pts[:-1], side="right")
            - np.searchsorted(lp, pts[:-1], side="right")).astype(float)
    nz = np.flatnonzero(vals)
    if nz.size == 0:
        return SpectralShiftDensity()
    lo, hi = nz[0], nz[-1] + 1
    return SpectralShiftDensity(pts[lo : hi + 1], vals[lo:hi, None])


# ------------------------------------------------------------------ Callias
def callias_fiber_operators(rep, x, A, gradA):
    """Per-point operators of the Callias reduction.

    Parameters
    ----------
    rep : CliffordRep
    x : (d,) point
    A : (m, m) Hermitian potential value
    gradA : (d, m, m) partial derivatives

    Returns
    -------
    A2 : HermitianOperator
        ``1_r (x) A^2`` on ``C^r (x) C^m`` (eigenbasis inherited from ``A``).
    B : ndarray
        ``i c.grad A``.
    T0 : ndarray
        Radial part ``i c_R (x) d_R A``.
    B_ang : ndarray
        ``B - T0``.
    """
    d, r = rep.d, rep.r
    m = A.shape[0]
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    lifted_w = np.tile(w ** 2, r)
    lifted_V = np.kron(np.eye(r), V)
    A2 = HermitianOperator.from_eig(lifted_w, lifted_V)
    B = sum(1j * np.kron(rep.matrices[j], gradA[j]) for j in range(d))
    norm = np.linalg.norm(x)
    xhat = np.asarray(x, float) / norm if norm > 0 else np.eye(d)[0]
    cR = np.einsum("i,ijk->jk", xhat, np.array(rep.matrices))
    dRA = np.einsum("i,ijk->jk", xhat, gradA)
    T0 = 1j * np.kron(cR, dRA)
    return A2, B, T0, B - T0


def eta_callias(model, d=None, imag_rtol=1e-10):
    """Assemble ``eta_{d, A_0, B}`` for a lattice model.

    Sums, over grid cells, the cell volume times the order ``d - 1`` density
    of ``(A_phi^2, T_0 = i c_R d_R A_phi, B_ang^(d-1))``. Pairs with ``f^(d)``.

    Raises
    ------
    NumericError
        If the assembled density is not real to ``imag_rtol`` of its L1 norm,
        or a fiber eigensolve fails.
    """
    d = model.d if d is None else d
    rep = build_clifford(d)
    X, vol, Aphi, grad = model.fiber_data(cutoff=True)
    lefts, rights, coeffs, atoms = [], [], [], []
    for p in range(X.shape[0]):
        if not np.any(grad[p]):
            continue
        try:
            A2, _, T0, Bang = callias_fiber_operators(rep, X[p], Aphi[p], grad[p])
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"fiber eigensolve failed at cell {p}: {exc}") from exc
        exp = weighted_tuples(d - 1, A2, T0, [Bang] * (d - 1))
        exp.weights = exp.weights * vol
        rho = _density_from_expansion(exp, d - 1)
        if rho.n_pieces:
            lefts.append(rho.breakpoints[:-1])
            rights.append(rho.breakpoints[1:])
            coeffs.append(rho.coeffs)
        atoms.extend(rho.atoms)
    eta = SpectralShiftDensity.from_pieces(lefts, rights, coeffs, atoms)
    frac = eta.imag_fraction()
    if frac > imag_rtol:
        raise NumericError(f"assembled eta is not real (imaginary L1 fraction {frac:.3e})")
    return eta.real_part()


def eta_callias_direct_pairing(model, f, d=None):
    """Oracle ``sum_x vol Tr J(Dif_d f, A_phi^2(x), (i c.grad A_phi)^d)``."""
    from .moi import taylor_term

    d = model.d if d is None else d
    rep = build_clifford(d)
    X, vol, Aphi, grad = model.fiber_data(cutoff=True)
    total = 0j
    for p in range(X.shape[0]):
        if not np.any(grad[p]):
            continue
        A2, B, _, _ = callias_fiber_operators(rep, X[p], Aphi[p], grad[p])
        total += vol * np.trace(taylor_term(d, f, A2, B))
    return total
