import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmor.tensor import (
    IndexPermutation,
    SparseTensor3,
    commutation_apply,
    commutation_permutation,
    mode1_apply,
    mode1_apply_pairs,
    mode1_core_apply,
    mode2_apply_pairs,
    mode2_core_apply,
    revised_kron_permutation,
    symmetrize,
)


def random_tensor(N, nnz, seed):
    rng = np.random.default_rng(seed)
    return SparseTensor3(N, rng.integers(0, N, nnz), rng.integers(0, N, nnz), rng.integers(0, N, nnz),
                         rng.standard_normal(nnz))


tensors = st.builds(random_tensor, st.integers(1, 8), st.integers(0, 40), st.integers(0, 2**31))


def test_single_entry_mode1():
    T = SparseTensor3.from_entries(3, [(0, 1, 2, 5.0)])
    e = np.eye(3)
    np.testing.assert_array_equal(mode1_apply(T, e[1], e[2]), 5 * e[0])
    np.testing.assert_array_equal(mode1_apply(T, np.zeros(3), e[2]), 0)


def test_single_entry_mode2():
    T = SparseTensor3.from_entries(3, [(0, 1, 2, 5.0)])
    e = np.eye(3)
    np.testing.assert_array_equal(mode2_apply_pairs(T, e[:, :1], e[:, 2:]).ravel(), 5 * e[1])
    np.testing.assert_array_equal(mode2_apply_pairs(SparseTensor3.zeros(3), e, e), np.zeros((3, 9)))


def test_duplicates_summed_and_zeros_dropped():
    T = SparseTensor3.from_entries(2, [(0, 0, 1, 1.0), (0, 0, 1, 2.0), (1, 1, 1, 0.0)])
    assert T.nnz == 1 and T.vals[0] == 3.0


def test_out_of_range_index():
    with pytest.raises(ValueError):
        SparseTensor3.from_entries(2, [(0, 0, 2, 1.0)])


@settings(max_examples=40, deadline=None)
@given(T=tensors, seed=st.integers(0, 2**31))
def test_mode1_matches_dense_kron(T, seed):
    rng = np.random.default_rng(seed)
    N = T.dim
    u, v = rng.standard_normal(N), rng.standard_normal(N)
    H = T.to_dense().reshape(N, N * N)
    np.testing.assert_allclose(mode1_apply(T, u, v), H @ np.kron(u, v), atol=1e-12)
    np.testing.assert_allclose(T.matricize(1) @ np.kron(u, v), H @ np.kron(u, v), atol=1e-12)
    L, R = rng.standard_normal((N, 2)), rng.standard_normal((N, 3))
    np.testing.assert_allclose(mode1_apply_pairs(T, L, R), H @ np.kron(L, R), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(T=tensors, seed=st.integers(0, 2**31))
def test_mode2_matches_dense_unfolding(T, seed):
    rng = np.random.default_rng(seed)
    N = T.dim
    L, R = rng.standard_normal((N, 2)), rng.standard_normal((N, 3))
    # row j, column i*N + k
    H2 = T.to_dense().transpose(1, 0, 2).reshape(N, N * N)
    np.testing.assert_allclose(mode2_apply_pairs(T, L, R), H2 @ np.kron(L, R), atol=1e-12)
    np.testing.assert_allclose(T.matricize(2).toarray(), H2, atol=0)


@settings(max_examples=30, deadline=None)
@given(T=tensors, seed=st.integers(0, 2**31))
def test_core_apply_matches_explicit(T, seed):
    rng = np.random.default_rng(seed)
    N = T.dim
    a, b, c = 2, 3, 4
    L, R = rng.standard_normal((N, a)), rng.standard_normal((N, b))
    core = rng.standard_normal((c, a, b))
    G = core.reshape(c, a * b)
    np.testing.assert_allclose(mode1_core_apply(T, L, core, R), mode1_apply_pairs(T, L, R) @ G.T, atol=1e-11)
    np.testing.assert_allclose(mode2_core_apply(T, L, core, R), mode2_apply_pairs(T, L, R) @ G.T, atol=1e-11)


def test_mode2_of_symmetric_tensor_relates_to_mode1(rng):
    S = symmetrize(random_tensor(6, 30, 3))
    u, v = rng.standard_normal(6), rng.standard_normal(6)
    Hd = S.to_dense()
    # with S symmetric in its last two modes, sum_i,k S[i,j,k] u_i v_k = (S^(1) applied to e_j, v) . u
    expect = np.array([u @ mode1_apply(S, np.eye(6)[j], v) for j in range(6)])
    np.testing.assert_allclose(mode2_apply_pairs(S, u[:, None], v[:, None]).ravel(), expect, atol=1e-12)
    np.testing.assert_allclose(Hd, Hd.transpose(0, 2, 1))


def test_symmetrize_single_entry():
    S = symmetrize(SparseTensor3.from_entries(3, [(0, 1, 2, 4.0)]))
    assert sorted(zip(S.i.tolist(), S.j.tolist(), S.k.tolist(), S.vals.tolist())) == [(0, 1, 2, 2.0), (0, 2, 1, 2.0)]


@settings(max_examples=40, deadline=None)
@given(T=tensors, seed=st.integers(0, 2**31))
def test_symmetrize_properties(T, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(T.dim), rng.standard_normal(T.dim)
    S = symmetrize(T)
    assert S.is_symmetric(rtol=1e-15)
    np.testing.assert_allclose(mode1_apply(S, u, v), 0.5 * (mode1_apply(T, u, v) + mode1_apply(T, v, u)), atol=1e-12)
    SS = symmetrize(S)
    np.testing.assert_allclose(SS.to_dense(), S.to_dense(), atol=1e-15)


def test_dump_load_round_trip(tmp_path):
    T = random_tensor(5, 20, 9)
    path = tmp_path / "t.txt"
    T.dump(path)
    U = SparseTensor3.load(path)
    assert U.dim == 5
    np.testing.assert_array_equal(U.to_dense(), T.to_dense())


def test_commutation_hand_example():
    nu, rho = np.array([1, 2]), np.array([3, 4])
    np.testing.assert_array_equal(np.kron(nu, rho), [3, 4, 6, 8])
    np.testing.assert_array_equal(commutation_apply(2, np.kron(nu, rho)), [3, 6, 4, 8])
    e1 = np.eye(4)[0]
    np.testing.assert_array_equal(commutation_apply(2, e1), e1)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 7), seed=st.integers(0, 2**31))
def test_commutation_properties(n, seed):
    rng = np.random.default_rng(seed)
    nu, rho = rng.standard_normal(n), rng.standard_normal(n)
    np.testing.assert_array_equal(commutation_apply(n, np.kron(nu, rho)), np.kron(rho, nu))
    w = rng.standard_normal(n * n)
    np.testing.assert_array_equal(commutation_apply(n, commutation_apply(n, w)), w)
    S = commutation_permutation(n)
    np.testing.assert_array_equal(S.compose(S).perm, np.arange(n * n))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_revised_kron_definition(n, seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4 * n)
    blocks = q.reshape(4, n)
    revised = np.concatenate([np.kron(blocks[a], q[b * n:(b + 1) * n]) for a in range(4) for b in range(4)])
    P = revised_kron_permutation(n)
    np.testing.assert_array_equal(P.apply(np.kron(q, q)), revised)
    np.testing.assert_array_equal(P.apply_inverse(revised), np.kron(q, q))
    np.testing.assert_array_equal(P.inverse().apply(revised), np.kron(q, q))


def test_index_permutation_rejects_non_bijection():
    with pytest.raises(ValueError):
        IndexPermutation([0, 0, 1])
