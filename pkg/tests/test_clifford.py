import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectralshift.clifford import (
    PAULI,
    build_clifford,
    clifford_word_trace,
    full_trace_constant,
    identity_residuals,
    levi_civita,
    radial_split,
)
from spectralshift.errors import InvalidDimensionError, InvalidDirectionError, InvalidIndexError


def test_d1_is_minus_i():
    rep = build_clifford(1)
    assert rep.r == 1
    assert rep[1][0, 0] == -1j
    assert np.allclose(rep[1] @ rep[1], -np.eye(1))


def test_d3_is_minus_i_pauli():
    rep = build_clifford(3)
    assert rep.r == 2
    for j in range(3):
        assert np.array_equal(rep[j + 1], -1j * PAULI[j])


def test_pauli_product_fixes_d3_trace():
    # sigma1 sigma2 sigma3 = i Id, so tr((-i)^3 sigma1 sigma2 sigma3) = tr(i * i Id) = -2
    assert np.allclose(PAULI[0] @ PAULI[1] @ PAULI[2], 1j * np.eye(2))
    assert clifford_word_trace(build_clifford(3), (1, 2, 3)) == pytest.approx(-2)


def test_d5_full_trace_is_4i():
    rep = build_clifford(5)
    assert rep.r == 4
    explicit = np.trace(rep[1] @ rep[2] @ rep[3] @ rep[4] @ rep[5])
    assert abs(explicit - 4j) < 1e-12
    assert abs((2j) ** 2 * (-1j) ** 5 - 4j) < 1e-15


def test_d5_odd_permutation_sign():
    rep = build_clifford(5)
    explicit = np.trace(rep[2] @ rep[1] @ rep[3] @ rep[4] @ rep[5])
    assert abs(explicit + 4j) < 1e-12
    assert abs(clifford_word_trace(rep, (2, 1, 3, 4, 5)) + 4j) < 1e-12


def test_short_words():
    rep = build_clifford(3)
    assert clifford_word_trace(rep, (1,)) == 0
    assert clifford_word_trace(rep, (1, 1)) == pytest.approx(-2)


@pytest.mark.parametrize("d", [0, 2, -1, 4, 15, 2.5, True])
def test_invalid_dimension(d):
    with pytest.raises(InvalidDimensionError):
        build_clifford(d)


def test_invalid_index():
    rep = build_clifford(3)
    with pytest.raises(InvalidIndexError):
        clifford_word_trace(rep, (0, 1))
    with pytest.raises(InvalidIndexError):
        clifford_word_trace(rep, (4,))


def test_radial_split_axes():
    rep = build_clifford(3)
    assert np.allclose(radial_split(rep, (0, 0, 1)).c_R, rep[3])
    sp = radial_split(rep, (1.0, 0, 0))
    assert np.allclose(sp.c_R, rep[1])
    assert np.allclose(sp.c_R @ sp.c_R, -np.eye(2))


def test_radial_split_rejects_bad_direction():
    rep = build_clifford(3)
    with pytest.raises(InvalidDirectionError):
        radial_split(rep, (0, 0, 0))
    with pytest.raises(InvalidDirectionError):
        radial_split(rep, (1.0, 1.0, 0))


def test_levi_civita_small():
    assert levi_civita((1, 2, 3)) == 1
    assert levi_civita((2, 1, 3)) == -1
    assert levi_civita((3, 1, 2)) == 1
    assert levi_civita((1, 1, 2)) == 0


@pytest.mark.parametrize("d", [1, 3, 5, 7, 9])
def test_identity_residuals(d):
    res = identity_residuals(build_clifford(d))
    assert max(res.values()) < 1e-12


@pytest.mark.parametrize("d", [3, 5, 7])
def test_short_distinct_words_vanish(d):
    rep = build_clifford(d)
    for length in range(1, d, 2):
        for w in itertools.combinations(range(1, d + 1), length):
            assert abs(clifford_word_trace(rep, w)) < 1e-12


def test_full_trace_constant_values():
    assert full_trace_constant(1) == -1j
    assert full_trace_constant(3) == pytest.approx(-2)
    assert full_trace_constant(5) == pytest.approx(4j)


@given(st.sampled_from([1, 3, 5, 7]), st.data())
def test_trace_formula_on_random_permutations(d, data):
    rep = build_clifford(d)
    word = data.draw(st.permutations(list(range(1, d + 1))))
    expected = full_trace_constant(d) * levi_civita(word)
    assert abs(clifford_word_trace(rep, word) - expected) < 1e-12


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=5, max_size=5).filter(
    lambda v: np.linalg.norm(v) > 1e-3))
def test_radial_square_is_minus_identity(v):
    rep = build_clifford(5)
    u = np.asarray(v) / np.linalg.norm(v)
    sp = radial_split(rep, u)
    assert np.abs(sp.c_R @ sp.c_R + np.eye(rep.r)).max() < 1e-12
    assert np.abs(sp.P_plus + sp.P_minus - np.eye(rep.r)).max() < 1e-12


@pytest.mark.parametrize("d", [3, 5, 7, 9, 11])
def test_generators_anti_hermitian_and_anticommute(d):
    rep = build_clifford(d)
    c = rep.matrices
    for i in range(d):
        assert np.abs(c[i].conj().T + c[i]).max() < 1e-12
        for j in range(d):
            target = -2 * np.eye(rep.r) if i == j else 0
            assert np.abs(c[i] @ c[j] + c[j] @ c[i] - target).max() < 1e-12
