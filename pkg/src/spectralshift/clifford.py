"""Clifford matrices for odd dimension d.

The generators are anti-Hermitian, satisfy ``c_i c_j + c_j c_i = -2 delta_ij``
and are normalised so that the trace of the full ordered product is

    tr(c_1 ... c_d) = (2i)^((d-1)/2) (-i)^d.

For d = 3 the representation is exactly ``c_j = -i sigma_j``.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import InvalidDimensionError, InvalidIndexError, InvalidDirectionError

__all__ = [
    "CliffordRep",
    "RadialSplit",
    "PAULI",
    "build_clifford",
    "clifford_word_trace",
    "radial_split",
    "full_trace_constant",
    "levi_civita",
    "identity_residuals",
]

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

MAX_D = 13


@dataclass(frozen=True)
class CliffordRep:
    """Minimal irreducible representation for odd ``d``.

    Attributes
    ----------
    d : int
        Number of generators.
    r : int
        Matrix size, ``2**((d - 1) // 2)``.
    matrices : tuple of ndarray
        The generators ``c_1 .. c_d``. Treat them as read-only.
    """

    d: int
    r: int
    matrices: tuple

    def __getitem__(self, j):
        """1-based access, ``rep[1]`` is ``c_1``."""
        if not 1 <= j <= self.d:
            raise InvalidIndexError(f"generator index {j} outside 1..{self.d}")
        return self.matrices[j - 1]


@dataclass(frozen=True)
class RadialSplit:
    c_R: np.ndarray
    P_plus: np.ndarray   # eigenvalue +i of c_R
    P_minus: np.ndarray  # eigenvalue -i of c_R


def full_trace_constant(d):
    """Return ``(2i)^((d-1)/2) (-i)^d``."""
    return (2j) ** ((d - 1) // 2) * (-1j) ** d


def levi_civita(word):
    """Sign of a permutation word (values are any distinct sortable labels)."""
    word = list(word)
    if len(set(word)) != len(word):
        return 0
    sign = 1
    seen = [False] * len(word)
    order = {v: i for i, v in enumerate(sorted(word))}
    perm = [order[v] for v in word]
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _hermitian_gammas(d):
    if d == 1:
        return [np.eye(1, dtype=complex)]
    prev = _hermitian_gammas(d - 2)
    r = prev[0].shape[0]
    out = [np.kron(g, PAULI[0]) for g in prev]
    out.append(np.kron(np.eye(r), PAULI[1]))
    out.append(np.kron(np.eye(r), PAULI[2]))
    return out


def build_clifford(d):
    """Build the Clifford representation for odd ``d``.

    Parameters
    ----------
    d : int
        Odd positive dimension, at most 13.

    Returns
    -------
    CliffordRep

    Raises
    ------
    InvalidDimensionError
        If ``d`` is even, non-positive or above the cap.
    """
    if isinstance(d, bool) or int(d) != d or d < 1 or d % 2 == 0:
        raise InvalidDimensionError(f"d must be an odd positive integer, got {d!r}")
    d = int(d)
    if d > MAX_D:
        raise InvalidDimensionError(f"d={d} exceeds the cap {MAX_D}")
    if d == 3:
        mats = [-1j * s for s in PAULI]
    else:
        mats = [-1j * g for g in _hermitian_gammas(d)]
    prod = np.eye(mats[0].shape[0], dtype=complex)
    for c in mats:
        prod = prod @ c
    if abs(np.trace(prod) - full_trace_constant(d)) > 1e-9:
        # orientation is wrong, a transposition flips the sign of the full product
        if d == 1:
            mats[0] = -mats[0]
        else:
            mats[-2], mats[-1] = mats[-1], mats[-2]
    for c in mats:
        c.setflags(write=False)
    return CliffordRep(d=d, r=mats[0].shape[0], matrices=tuple(mats))


def clifford_word_trace(rep, word):
    """Trace of ``c_{w_1} c_{w_2} ...`` for a 1-based index word."""
    prod = np.eye(rep.r, dtype=complex)
    for j in word:
        if isinstance(j, bool) or int(j) != j:
            raise InvalidIndexError(f"index {j!r} is not an integer")
        prod = prod @ rep[int(j)]
    return complex(np.trace(prod))


def radial_split(rep, direction):
    """Return ``c_R = sum_i direction_i c_i`` and its two spectral projectors."""
    n = np.asarray(direction, dtype=float)
    if n.shape != (rep.d,):
        raise InvalidDirectionError(f"direction must have shape ({rep.d},)")
    norm = np.linalg.norm(n)
    if norm == 0:
        raise InvalidDirectionError("zero direction vector")
    if abs(norm - 1) > 1e-12:
        raise InvalidDirectionError(f"direction is not a unit vector (|n| = {norm!r})")
    c_R = np.einsum("i,ijk->jk", n, np.array(rep.matrices))
    ident = np.eye(rep.r)
    return RadialSplit(c_R=c_R, P_plus=(ident - 1j * c_R) / 2, P_minus=(ident + 1j * c_R) / 2)


def identity_residuals(rep, exhaustive_limit=7):
    """Maximum residuals of the defining identities.

    Returns a dict with keys ``anticommutation``, ``anti_hermitian``,
    ``full_trace`` and ``short_trace``. The permutation sweep is exhaustive
    for ``d <= exhaustive_limit``.
    """
    c = rep.matrices
    ident = np.eye(rep.r)
    anti = 0.0
    for i in range(rep.d):
        for j in range(rep.d):
            target = -2 * ident if i == j else 0 * ident
            anti = max(anti, np.abs(c[i] @ c[j] + c[j] @ c[i] - target).max())
    herm = max(np.abs(ci.conj().T + ci).max() for ci in c)
    const = full_trace_constant(rep.d)
    words = permutations(range(1, rep.d + 1)) if rep.d <= exhaustive_limit else [tuple(range(1, rep.d + 1))]
    full = 0.0
    for w in words:
        full = max(full, abs(clifford_word_trace(rep, w) - const * levi_civita(w)))
    short = 0.0
    for length in range(1, rep.d, 2):
        for w in permutations(range(1, rep.d + 1), length):
            short = max(short, abs(clifford_word_trace(rep, w)))
            if rep.d > exhaustive_limit:
                break
    return {"anticommutation": float(anti), "anti_hermitian": float(herm),
            "full_trace": float(full), "short_trace": float(short)}
