import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hitchin import flags as fl
from hitchin.errors import InputError, NotInSchubertCell, NotTransverse, ZeroMinor
from hitchin.flags import Positivity
from hitchin.numlin import eig_split
from hitchin.reps import tau_d

from conftest import random_sl2


def J(d, i, j, t=1.0):
    return fl.jacobi(d, i, j, t)


def random_tp(rng, d):
    """L D U with L, U positive along the longest reduced word."""
    U = fl.positive_unipotent(d, rng)
    L = fl.positive_unipotent(d, rng).T
    D = np.diag(np.exp(rng.uniform(-1, 1, d)))
    return L @ D @ U


def all_minors_brute(M):
    d = M.shape[0]
    for k in range(1, d + 1):
        for I in itertools.combinations(range(d), k):
            for Jc in itertools.combinations(range(d), k):
                yield (I, Jc), np.linalg.det(M[np.ix_(I, Jc)])


def test_transverse_examples():
    d = 4
    a, b = fl.standard_flag(d), fl.reversed_standard_flag(d)
    assert fl.is_transverse([a, b])
    assert not fl.is_transverse([a, a])
    assert fl.is_transverse([fl.veronese_flag(x, 3) for x in (-2, -1, 1, 2)])
    with pytest.raises(InputError):
        fl.is_transverse([a, fl.standard_flag(3)])


def test_compositions():
    comps = list(fl.compositions(4, 3))
    assert len(comps) == 15 and all(sum(c) == 4 for c in comps)


def test_flag_equality():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(4, 4))
    U = np.triu(rng.normal(size=(4, 4))) + 3 * np.eye(4)
    assert fl.Flag(B) == fl.Flag(B @ U)
    assert fl.Flag(B) != fl.Flag(B[:, ::-1])


def test_pair_frame():
    d = 4
    fr = fl.pair_frame(fl.standard_flag(d), fl.reversed_standard_flag(d))
    assert np.allclose(np.abs(fr.basis), np.eye(d))
    rng = np.random.default_rng(1)
    a, b = fl.Flag(rng.normal(size=(d, d))), fl.Flag(rng.normal(size=(d, d)))
    fr = fl.pair_frame(a, b)
    for j in range(1, d):
        assert np.linalg.matrix_rank(np.hstack([a.part(j), fr.basis[:, :j]]), tol=1e-8) == j
        assert np.linalg.matrix_rank(np.hstack([b.part(j), fr.basis[:, d - j :]]), tol=1e-8) == j
    with pytest.raises(NotTransverse):
        fl.pair_frame(a, a)


def test_jacobi():
    M = J(3, 0, 1)
    assert np.array_equal(M, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    assert np.array_equal(J(4, 2, 1, 0.0), np.eye(4))
    assert np.allclose(J(3, 0, 1, 2.0) @ J(3, 0, 1, 3.5), J(3, 0, 1, 5.5))
    with pytest.raises(InputError):
        J(3, 1, 1)


def test_total_positivity_examples():
    M = np.array([[1.0, 1.0], [1.0, 2.0]])
    assert fl.is_totally_positive(M)
    assert fl.is_totally_nonneg(np.eye(3)) and not fl.is_totally_positive(np.eye(3))
    # the symmetric power of a totally positive SL2 matrix stays totally positive
    assert fl.is_totally_positive(tau_d(M, 3))
    assert fl.is_totally_positive(tau_d(M, 5))


def test_initial_minor_set():
    for d in range(1, 6):
        idx = fl.initial_minor_indices(d)
        assert len(idx) == d * d and len(set(idx)) == d * d
        for I, Jc in idx:
            assert 0 in I or 0 in Jc
            assert list(I) == list(range(I[0], I[-1] + 1)) and list(Jc) == list(range(Jc[0], Jc[-1] + 1))
    assert fl.initial_minors_positive([[1.0, 1.0], [1.0, 2.0]])
    assert not fl.initial_minors_positive(np.eye(2))


def test_initial_minors_agree_with_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(60):
        d = int(rng.integers(2, 5))
        M = random_tp(rng, d)
        assert fl.initial_minors_positive(M) and fl.is_totally_positive(M)
        N = rng.normal(size=(d, d))
        assert fl.initial_minors_positive(N) == fl.is_totally_positive(N)
        # nudge one entry of a TP matrix; both tests must move together
        K = M.copy()
        K[rng.integers(d), rng.integers(d)] *= rng.uniform(0.2, 3.0)
        assert fl.initial_minors_positive(K) == fl.is_totally_positive(K)


def test_upper_minor_classification_examples():
    assert fl.unipotent_positive(np.eye(3)) is Positivity.NONNEG_ONLY
    assert fl.unipotent_positive(J(3, 0, 1) @ J(3, 1, 2) @ J(3, 0, 1)) is Positivity.POSITIVE
    # I + E_13 has the upper minor det[[0, 1], [1, 0]] = -1 on rows (1,2), cols (2,3)
    u = J(3, 0, 2)
    assert np.isclose(np.linalg.det(u[np.ix_([0, 1], [1, 2])]), -1)
    assert fl.unipotent_positive(u) is Positivity.OUTSIDE
    with pytest.raises(InputError):
        fl.unipotent_positive(np.ones((3, 3)))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_upper_minors_are_exactly_the_attainable_ones(d):
    rng = np.random.default_rng(d)
    attained = set()
    for _ in range(50):
        u = np.eye(d)
        for _ in range(3 * d * d):
            i = int(rng.integers(d - 1))
            u = u @ J(d, i, i + 1, float(rng.uniform(0, 3)))
        for key, v in all_minors_brute(u):
            if abs(v) > 1e-9:
                attained.add(key)
    assert attained == set(fl.upper_minor_indices(d))


@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_positive_semigroup(seed, d):
    rng = np.random.default_rng(seed)
    u, v = fl.positive_unipotent(d, rng), fl.positive_unipotent(d, rng)
    assert fl.unipotent_positive(u @ v) is Positivity.POSITIVE
    i = int(rng.integers(d - 1))
    w = J(d, i, i + 1, float(rng.uniform(0.1, 2)))
    if d > 2:
        assert fl.unipotent_positive(w) is Positivity.NONNEG_ONLY
    assert fl.unipotent_positive(u @ w) is Positivity.POSITIVE
    assert fl.unipotent_positive(w @ u) is Positivity.POSITIVE
    g = np.diag(np.exp(rng.uniform(-1, 1, d)))
    assert fl.unipotent_positive(g @ u @ np.linalg.inv(g)) is Positivity.POSITIVE


@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_complementary_basis_meets_only_at_identity(seed, d):
    rng = np.random.default_rng(seed)
    u = fl.positive_unipotent(d, rng)
    S = np.diag([(-1.0) ** i for i in range(d)])
    assert fl.unipotent_positive(S @ u @ S) is Positivity.OUTSIDE
    assert fl.unipotent_positive(S @ np.eye(d) @ S) is Positivity.NONNEG_ONLY


def test_unipotent_transition():
    d = 4
    a, b = fl.standard_flag(d), fl.reversed_standard_flag(d)
    fr = fl.pair_frame(a, b)
    assert np.allclose(fl.unipotent_transition(fr, b), np.eye(d))
    rng = np.random.default_rng(4)
    for _ in range(10):
        u0 = np.triu(rng.normal(size=(d, d)), 1) + np.eye(d)
        f = b.transformed(fr.from_frame(u0))
        assert np.allclose(fl.unipotent_transition(fr, f), u0, atol=1e-10)
    with pytest.raises(NotInSchubertCell):
        fl.unipotent_transition(fr, a)


def test_unipotent_transition_generic_frame():
    rng = np.random.default_rng(5)
    d = 3
    a, b = fl.Flag(rng.normal(size=(d, d))), fl.Flag(rng.normal(size=(d, d)))
    fr = fl.pair_frame(a, b)
    u0 = fl.positive_unipotent(d, rng)
    f = b.transformed(fr.from_frame(u0))
    assert np.allclose(fl.unipotent_transition(fr, f), u0, atol=1e-9)


def test_positive_tuples():
    for d in (2, 3, 4):
        w = fl.generate_positive_tuple(0, 1, d)
        assert fl.is_positive_tuple(w.flags) and w.check()
    fs = [fl.veronese_flag(x, 3) for x in (np.inf, 2, 1, 0)]
    wit = fl.positivity_witness(fs)
    assert wit is not None and wit.check()
    # out of cyclic order
    assert not fl.is_positive_tuple([fl.veronese_flag(x, 3) for x in (np.inf, 1, 2, 0)])
    a, b = fl.standard_flag(3), fl.reversed_standard_flag(3)
    with pytest.raises(NotTransverse):
        fl.is_positive_tuple([a, a, b])


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_sub_tuples_and_reversal(d):
    for seed in range(5):
        w = fl.generate_positive_tuple(seed, 3, d)
        assert fl.is_positive_tuple(w.flags[::-1])
        n = len(w.flags)
        for k in range(3, n + 1):
            for idx in itertools.combinations(range(n), k):
                assert fl.is_positive_tuple([w.flags[i] for i in idx]), (seed, idx)


def test_nesting_of_positive_quintuples():
    for d in (3, 4):
        for seed in range(5):
            a, x, z, y, b = fl.generate_positive_tuple(seed, 3, d).flags
            assert fl.is_positive_tuple([x, z, y])
            assert fl.is_positive_tuple([a, z, b])


def test_general_position_of_lines():
    for d in (3, 4, 5):
        for seed in range(10):
            a, x, y, b = fl.generate_positive_tuple(seed, 2, d).flags
            assert fl.lines_in_general_position(fl.pair_frame(a, b), fl.pair_frame(x, y)) > 1e-10


def test_veronese_flags():
    assert fl.veronese_flag(0.0, 4) == fl.standard_flag(4)
    assert fl.veronese_flag(np.inf, 4) == fl.reversed_standard_flag(4)
    rng = np.random.default_rng(6)
    for d in (2, 3, 4, 5):
        g = random_sl2(rng)
        v = rng.normal(size=2)
        lhs = fl.veronese_vector_flag(v, d).transformed(tau_d(g, d))
        assert lhs == fl.veronese_vector_flag(g @ v, d)
        if np.trace(g) < 0:
            g = -g
        attracting = eig_split(g).vectors[:, 0]
        eig_flag = fl.Flag(eig_split(tau_d(g, d)).vectors)
        assert fl.veronese_vector_flag(attracting, d) == eig_flag


def test_rearranged_flags():
    d = 4
    a, x, y, b = fl.generate_positive_tuple(3, 2, d).flags
    fr = fl.pair_frame(x, y)
    ident = tuple(range(d))
    assert fl.rearranged_flag(fr, ident, 0) == x
    assert fl.rearranged_flag(fr, ident, 1) == y
    # y is spanned by the reversed frame lines; push it by J_ij(t) in frame coordinates
    R = np.eye(d)[:, ::-1]
    for i, j in itertools.combinations(range(d), 2):
        target = fl.rearranged_flag(fr, fl.transposition(d, i, j), 1)
        dists = [fl.flag_distance(fl.Flag(fr.basis @ J(d, i, j, t) @ R), target) for t in (1e5, 1e6)]
        assert dists[1] <= 10 / 1e6 * np.linalg.cond(fr.basis)
        assert dists[1] < dists[0]
    rng = np.random.default_rng(7)
    for _ in range(20):
        P = tuple(rng.permutation(d))
        assert fl.is_transverse([a, fl.rearranged_flag(fr, P, 1), b])


def test_factor_permutation():
    assert fl.factor_permutation((0, 1, 2)) == []
    assert fl.factor_permutation((1, 0)) == [(0, 1)]
    with pytest.raises(InputError):
        fl.factor_permutation((0, 0, 1))


@given(st.permutations(range(6)))
def test_factor_permutation_property(P):
    P = tuple(P)
    fs = fl.factor_permutation(P)
    assert fl.check_factorization(P, fs)


def test_factor_check_rejects_bad_nesting():
    # (0 1) then (0 1) again reassembles the identity but violates nesting
    assert not fl.check_factorization((0, 1), [(0, 1), (0, 1)])


def test_cross_matrix_and_signing():
    fr = fl.pair_frame(fl.standard_flag(3), fl.reversed_standard_flag(3))
    assert np.allclose(fl.cross_matrix(fr, fr), np.eye(3))
    for d in (3, 4):
        for seed in range(5):
            a, x, y, b = fl.generate_positive_tuple(seed, 2, d).flags
            M = fl.cross_matrix(fl.pair_frame(a, b), fl.pair_frame(x, y))
            assert all(abs(v) > 1e-12 for _, v in all_minors_brute(M))
            N = fl.sign_normalize_tp(M)
            assert N is not None and fl.is_totally_positive(N)


def test_sign_normalize():
    M = np.array([[1.0, 1.0], [1.0, 2.0]])
    assert np.array_equal(fl.sign_normalize_tp(M), M)
    S = np.diag([1.0, -1.0])
    assert np.array_equal(fl.sign_normalize_tp(S @ M @ S), M)
    with pytest.raises(ZeroMinor):
        fl.sign_normalize_tp(np.eye(2))
    # all minors nonzero but no signing is TP: det[[1,2],[2,1]] < 0 survives every sign flip
    assert fl.sign_normalize_tp(np.array([[1.0, 2.0], [2.0, 1.0]])) is None
