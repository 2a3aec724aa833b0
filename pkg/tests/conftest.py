"""Shared fixtures and independent oracles."""
import math
import os

import mpmath
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", 40)),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_hermitian(rng, n, scale=1.0):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (X + X.conj().T) / 2


def random_complex(rng, n, scale=1.0):
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))


def _working_dps(nodes, base=40):
    """Digits needed so the recursion resolves the smallest node gap."""
    xs = sorted(float(x) for x in nodes)
    gaps = [b - a for a, b in zip(xs, xs[1:]) if b > a]
    if not gaps:
        return base
    lost = max(0.0, math.log10(max(1.0, xs[-1] - xs[0])) - math.log10(min(gaps)))
    return int(base + (len(xs) - 1) * (lost + 2))


def mp_divided_difference_fn(fun, deriv, nodes):
    """Plain divided-difference recursion in extended precision.

    ``fun(x)`` and ``deriv(x, L)`` act on mpmath numbers; exactly equal nodes
    use ``deriv(x, L) / L!``. Independent of the package: no Taylor
    blocking and the precision grows with the smallest gap.
    """
    with mpmath.workdps(_working_dps(nodes)):
        lam = sorted(mpmath.mpf(float(x)) for x in nodes)
        m = len(lam)
        table = [fun(x) for x in lam]
        for L in range(1, m):
            new = []
            for i in range(m - L):
                lo, hi = lam[i], lam[i + L]
                if hi == lo:
                    new.append(deriv(lo, L) / mpmath.factorial(L))
                else:
                    new.append((table[i + 1] - table[i]) / (hi - lo))
            table = new
        return float(table[0])


def mp_divided_difference(t, nodes):
    """Divided difference of ``exp(-t x)`` (see :func:`mp_divided_difference_fn`)."""
    t = mpmath.mpf(t)
    return mp_divided_difference_fn(lambda x: mpmath.exp(-t * x),
                                     lambda x, L: (-t) ** L * mpmath.exp(-t * x), nodes)


def numeric_derivative(fun, x, order, h=1e-2, levels=4):
    """Richardson-extrapolated central finite difference of a matrix or scalar valued ``fun``."""
    from math import comb

    def central(step):
        acc = 0
        for k in range(order + 1):
            acc = acc + (-1) ** k * comb(order, k) * fun(x + (order / 2 - k) * step)
        return acc / step ** order

    table = [central(h / 2 ** j) for j in range(levels)]
    for level in range(1, levels):
        fac = 4 ** level - 1
        table = [table[j + 1] + (table[j + 1] - table[j]) / fac for j in range(len(table) - 1)]
    return table[0]


def expm_hermitian(H, scale=1.0):
    w, V = np.linalg.eigh(H)
    return (V * np.exp(scale * w)) @ V.conj().T


LOG2PI = math.log(2 * math.pi)
