"""Multiple operator integrals for finite-dimensional Hermitian operators.

With spectral projections ``P^(j)_i`` of ``A_j`` the integral with symbol
``Dif_n f`` is

    J(Dif_n f, A_0..A_n, T) = sum Dif_n f(l_0, .., l_n) P_{i0} T_1 P_{i1} .. T_n P_{in}.

It is evaluated in the eigenbases: each divided difference is computed once
per multiset of distinct eigenvalues and broadcast over basis vectors, then
a single tensor contraction assembles the matrix.
"""
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
from scipy import special

from .divdiff import divided_difference_batch
from .errors import ShapeError, ResourceError

__all__ = [
    "HermitianOperator",
    "OperatorVector",
    "moi_apply",
    "taylor_term",
    "taylor_remainder",
    "trace_cycle_check",
    "dif_tensor",
]

GROUP_RTOL = 1e-10
MAX_TENSOR = 20_000_000


@dataclass(frozen=True)
class HermitianOperator:
    """Hermitian matrix with its spectral decomposition.

    Eigenvalues closer than ``GROUP_RTOL`` times the spectral scale are
    grouped into one eigenprojection.
    """

    matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    group_of: np.ndarray = field(repr=False)   # group index of each eigenvector
    distinct: np.ndarray                      # value of each group

    @classmethod
    def from_matrix(cls, matrix, check=True):
        M = np.asarray(matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ShapeError(f"expected a square matrix, got shape {M.shape}")
        M = M.astype(complex)
        scale = max(np.abs(M).max(), 1e-300)
        if check and np.abs(M - M.conj().T).max() > 1e-10 * scale:
            raise ShapeError("matrix is not Hermitian")
        M = (M + M.conj().T) / 2
        w, V = np.linalg.eigh(M)
        return cls._from_eig(M, w, V)

    @classmethod
    def from_eig(cls, eigenvalues, eigenvectors):
        w = np.asarray(eigenvalues, dtype=float)
        order = np.argsort(w, kind="stable")
        w = w[order]
        V = np.asarray(eigenvectors, dtype=complex)[:, order]
        M = (V * w) @ V.conj().T
        return cls._from_eig(M, w, V)

    @classmethod
    def _from_eig(cls, M, w, V):
        span = max(w[-1] - w[0], np.abs(w).max(), 0.0) if w.size else 0.0
        tol = GROUP_RTOL * span
        group = np.zeros(w.size, dtype=int)
        starts = [0]
        for i in range(1, w.size):
            if w[i] - w[starts[-1]] > tol:
                starts.append(i)
            group[i] = len(starts) - 1
        distinct = np.array([w[group == g].mean() for g in range(len(starts))])
        for a in (M, w, V, group, distinct):
            a.setflags(write=False)
        return cls(M, w, V, group, distinct)

    def apply_function(self, func):
        """New operator ``func(A)`` sharing this eigenbasis (no second eigensolve)."""
        return HermitianOperator.from_eig(func(self.eigenvalues), self.eigenvectors)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def projections(self):
        out = []
        for g in range(self.distinct.size):
            Vg = self.eigenvectors[:, self.group_of == g]
            out.append(Vg @ Vg.conj().T)
        return out


class OperatorVector(tuple):
    """Tuple ``(T_1, .., T_n)`` of equally sized square matrices."""

    def __new__(cls, entries):
        mats = [np.asarray(T, dtype=complex) for T in entries]
        if mats:
            shape = mats[0].shape
            if len(shape) != 2 or shape[0] != shape[1] or any(m.shape != shape for m in mats):
                raise ShapeError("operator vector entries must be square matrices of one size")
        return super().__new__(cls, mats)

    @property
    def n(self):
        return len(self)


def _as_operator(A):
    return A if isinstance(A, HermitianOperator) else HermitianOperator.from_matrix(A)


def dif_tensor(f, n, values):
    """Divided differences on the grid ``values[0] x .. x values[n]``.

    Each distinct multiset of node values is evaluated once.
    """
    shape = tuple(len(v) for v in values)
    total = int(np.prod(shape))
    if total > MAX_TENSOR:
        raise ResourceError(f"divided-difference tensor of size {total} exceeds {MAX_TENSOR}")
    grids = np.meshgrid(*values, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    nodes.sort(axis=1)
    uniq, inverse = np.unique(nodes, axis=0, return_inverse=True)
    vals = divided_difference_batch(f, uniq)
    return vals[inverse.ravel()].reshape(shape)


def moi_apply(f, n, A_list, T):
    """Multiple operator integral with symbol ``Dif_n f``.

    Parameters
    ----------
    f : ScalarFunctionFamily
    n : int
        Order, ``n >= 0``.
    A_list : sequence of HermitianOperator or matrices, length ``n + 1``
    T : OperatorVector or sequence of matrices, length ``n``

    Returns
    -------
    ndarray
        The ``dim x dim`` matrix ``J(Dif_n f, A_list, T)``.
    """
    A_list = [_as_operator(A) for A in A_list]
    T = OperatorVector(T)
    if len(A_list) != n + 1 or T.n != n:
        raise ShapeError(f"order {n} needs {n + 1} operators and {n} interleaved matrices")
    dim = A_list[0].dim
    if any(A.dim != dim for A in A_list) or (n and T[0].shape[0] != dim):
        raise ShapeError("dimension mismatch")
    f.check_order(n)
    if dim ** (n + 1) > MAX_TENSOR:
        raise ResourceError(f"dim^(n+1) = {dim ** (n + 1)} exceeds {MAX_TENSOR}")
    if n == 0:
        A = A_list[0]
        fv = f.derivative(0, A.distinct)[A.group_of]
        return (A.eigenvectors * fv) @ A.eigenvectors.conj().T
    D = dif_tensor(f, n, [A.distinct for A in A_list])
    D = D[np.ix_(*[A.group_of for A in A_list])]
    Ts = [A_list[j].eigenvectors.conj().T @ T[j] @ A_list[j + 1].eigenvectors for j in range(n)]
    letters = "abcdefghijklmnopqrstuvwxyz"
    idx = letters[: n + 1]
    spec = idx + "," + ",".join(idx[j] + idx[j + 1] for j in range(n)) + "->" + idx[0] + idx[n]
    R = np.einsum(spec, D, *Ts, optimize=True)
    return A_list[0].eigenvectors @ R @ A_list[n].eigenvectors.conj().T


def taylor_term(n, f, A, B):
    """Non-commutative Taylor term ``T_n(f, A, B) = J(Dif_n f, A, (B, .., B))``."""
    A = _as_operator(A)
    return moi_apply(f, n, [A] * (n + 1), [B] * n)


def taylor_remainder(n, f, A, B, via="direct", order=24):
    """Taylor remainder ``R_n(f, A, B) = f(A + B) - sum_{k<n} T_k``.

    ``via="integral"`` evaluates ``n int_0^1 (1-t)^(n-1) J(Dif_n f, A + tB, B^n) dt``
    with an ``order``-point Gauss-Jacobi rule carrying the weight.
    """
    A = _as_operator(A)
    B = np.asarray(B, dtype=complex)
    if via == "direct":
        out = moi_apply(f, 0, [HermitianOperator.from_matrix(A.matrix + B)], [])
        for k in range(n):
            out = out - taylor_term(k, f, A, B)
        return out
    if via != "integral":
        raise ValueError(f"unknown mode {via!r}")
    if n < 1:
        raise ShapeError("the integral form needs n >= 1")
    x, w = special.roots_jacobi(order, n - 1, 0.0)
    ts = (x + 1) / 2
    ws = w / 2 ** n
    out = np.zeros_like(B)
    for t, wt in zip(ts, ws):
        At = HermitianOperator.from_matrix(A.matrix + t * B)
        out = out + wt * taylor_term(n, f, At, B)
    return n * out


def trace_cycle_check(n, f, A, B):
    """Both sides of ``Tr J(Dif_n f, A, B^n) = (1/n) Tr(B J(Dif_{n-1} f', A, B^(n-1)))``."""
    if n < 1:
        raise ShapeError("trace rule needs n >= 1")
    A = _as_operator(A)
    B = np.asarray(B, dtype=complex)
    lhs = np.trace(taylor_term(n, f, A, B))
    rhs = np.trace(B @ taylor_term(n - 1, f.derivative_family(1), A, B)) / n
    return complex(lhs), complex(rhs)
