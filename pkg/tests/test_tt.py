import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import nested_sum, random_tt
from slimtt.dense import DenseTensor, Shape, dense_matvec, frobenius_norm, kron_cells
from slimtt.tt import (
    CanonicalOperator,
    CanonicalTensor,
    TtOperator,
    TtTensor,
    canonical_to_full,
    canonical_to_tt,
    orthogonalize,
    rank_transpose,
    tt_add,
    tt_dot,
    tt_from_dense,
    tt_identity,
    tt_matvec,
    tt_norm,
    tt_op_matmul,
    tt_op_to_full,
    tt_op_transpose,
    tt_scale,
    tt_to_full,
    tt_truncate,
    tt_zeros,
)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- containers --------------------------------------------------------------

def test_rank_consistency_is_enforced():
    with pytest.raises(ValueError):
        TtTensor((np.ones((1, 2, 2)), np.ones((3, 2, 1))))
    with pytest.raises(ValueError):
        TtTensor((np.ones((2, 2, 1)),))
    with pytest.raises(ValueError):
        TtOperator((np.ones((1, 2, 3, 1)),))


# -- dense conversion ---------------------------------------------------------

def test_tt_to_full_trivial_cases():
    ones = TtTensor((np.ones((1, 3, 1)), np.ones((1, 2, 1))))
    np.testing.assert_array_equal(tt_to_full(ones).array, np.ones((3, 2)))
    u, v = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0])
    t = TtTensor((u[None, :, None], v[None, :, None]))
    np.testing.assert_array_equal(tt_to_full(t).array, np.outer(u, v))


@pytest.mark.parametrize("seed", range(3))
def test_tt_to_full_matches_nested_sum(seed):
    rng = np.random.default_rng(seed)
    t = random_tt(rng, [3, 3], [2])
    assert np.max(np.abs(tt_to_full(t).array - nested_sum(t))) <= 1e-14
    t3 = random_tt(rng, [2, 3, 2], [2, 3])
    assert np.max(np.abs(tt_to_full(t3).array - nested_sum(t3))) <= 1e-13


def test_tt_op_to_full_cases():
    ident = tt_identity([2, 3])
    np.testing.assert_array_equal(tt_op_to_full(ident).matrix(), np.eye(6))
    rng = np.random.default_rng(5)
    single = rng.standard_normal((2, 2))
    np.testing.assert_array_equal(tt_op_to_full(TtOperator((single[None, :, :, None],))).matrix(), single)
    a = random_tt(rng, [2, 3], [2], operator=True)
    assert np.max(np.abs(tt_op_to_full(a).array - nested_sum(a))) <= 1e-13


def test_tt_from_dense_round_trip():
    rng = np.random.default_rng(6)
    arr = rng.standard_normal((3, 4, 2))
    t = tt_from_dense(DenseTensor.from_array(arr))
    assert rel(tt_to_full(t).array, arr) <= 1e-13
    assert t.ranks == (1, 3, 2, 1)


# -- canonical ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda d: st.tuples(st.lists(st.integers(1, 4), min_size=d, max_size=d), st.integers(1, 3), st.integers(0, 10**6))
    ),
    st.booleans(),
)
def test_canonical_to_tt_matches_direct_evaluation(args, operator):
    modes, r, seed = args
    rng = np.random.default_rng(seed)
    if operator:
        c = CanonicalOperator(tuple(rng.standard_normal((r, n, n)) for n in modes))
        got = tt_op_to_full(canonical_to_tt(c)).matrix()
        want = canonical_to_full(c).matrix()
    else:
        c = CanonicalTensor(tuple(rng.standard_normal((r, n)) for n in modes))
        got = tt_to_full(canonical_to_tt(c)).entries
        want = canonical_to_full(c).entries
    assert np.max(np.abs(got - want)) <= 1e-13
    tt = canonical_to_tt(c)
    assert all(rk == r for rk in tt.ranks[1:-1])


def test_canonical_examples():
    rng = np.random.default_rng(7)
    u = [rng.standard_normal(2) for _ in range(3)]
    one = CanonicalTensor(tuple(v[None] for v in u))
    elementary = kron_cells([v[:, None] for v in u]).ravel()
    np.testing.assert_allclose(tt_to_full(canonical_to_tt(one)).entries, elementary, rtol=0, atol=1e-15)
    w = [rng.standard_normal(2) for _ in range(3)]
    two = CanonicalTensor(tuple(np.stack([a, b]) for a, b in zip(u, w)))
    dense_sum = elementary + kron_cells([v[:, None] for v in w]).ravel()
    assert np.max(np.abs(tt_to_full(canonical_to_tt(two)).entries - dense_sum)) <= 1e-14
    dup = CanonicalTensor(tuple(np.stack([v, v]) for v in u))
    np.testing.assert_array_equal(tt_to_full(canonical_to_tt(dup)).entries, 2 * tt_to_full(canonical_to_tt(one)).entries)


def test_cyclic_core_permutation_permutes_indices():
    # small integers keep every product exact, so reordering factors is lossless
    rng = np.random.default_rng(8)
    vecs = [rng.integers(-9, 10, size=n).astype(float) for n in (2, 3, 4)]
    t = CanonicalTensor(tuple(v[None] for v in vecs))
    shifted = CanonicalTensor(tuple(v[None] for v in vecs[1:] + vecs[:1]))
    a = tt_to_full(canonical_to_tt(t)).array
    b = tt_to_full(canonical_to_tt(shifted)).array
    np.testing.assert_array_equal(np.transpose(a, (1, 2, 0)), b)


# -- arithmetic --------------------------------------------------------------

@pytest.mark.parametrize("operator", [False, True])
def test_tt_add(operator):
    rng = np.random.default_rng(9)
    modes = [2, 3, 2]
    a = random_tt(rng, modes, [2, 2], operator)
    b = random_tt(rng, modes, [1, 3], operator)
    full = tt_op_to_full if operator else tt_to_full
    s = tt_add(a, b)
    assert s.ranks[1:-1] == (3, 5)
    assert np.max(np.abs(full(s).entries - full(a).entries - full(b).entries)) <= 1e-13
    np.testing.assert_array_equal(full(tt_add(a, tt_zeros(modes, operator))).entries, full(a).entries)
    assert np.max(np.abs(full(tt_add(a, tt_scale(a, -1.0))).entries)) <= 1e-13
    with pytest.raises(ValueError):
        tt_add(a, random_tt(rng, [2, 3, 3], [1, 1], operator))


def test_tt_matvec():
    rng = np.random.default_rng(10)
    modes = [2, 3, 2]
    t = random_tt(rng, modes, [2, 2])
    np.testing.assert_allclose(tt_to_full(tt_matvec(tt_identity(modes), t)).entries, tt_to_full(t).entries, rtol=1e-15)
    twice = TtOperator(tuple((2 * np.eye(n) if i == 0 else np.eye(n))[None, :, :, None] for i, n in enumerate(modes)))
    np.testing.assert_array_equal(tt_to_full(tt_matvec(twice, t)).entries, 2 * tt_to_full(t).entries)
    a = random_tt(rng, modes, [3, 2], operator=True)
    y = tt_matvec(a, t)
    assert y.ranks[1:-1] == (6, 4)
    want = dense_matvec(tt_op_to_full(a), tt_to_full(t)).entries
    assert rel(tt_to_full(y).entries, want) <= 1e-12
    with pytest.raises(ValueError):
        tt_matvec(a, random_tt(rng, [2, 2, 2], [1, 1]))


def test_operator_product_and_transpose():
    rng = np.random.default_rng(11)
    a = random_tt(rng, [2, 3], [2], operator=True)
    b = random_tt(rng, [2, 3], [3], operator=True)
    want = tt_op_to_full(a).matrix() @ tt_op_to_full(b).matrix()
    assert rel(tt_op_to_full(tt_op_matmul(a, b)).matrix(), want) <= 1e-13
    np.testing.assert_array_equal(tt_op_to_full(tt_op_transpose(a)).matrix(), tt_op_to_full(a).matrix().T)


def test_rank_transpose():
    rng = np.random.default_rng(12)
    c = rng.standard_normal((1, 4, 1))
    np.testing.assert_array_equal(rank_transpose(c), c)
    op = rng.standard_normal((1, 2, 2, 3))
    rt = rank_transpose(op)
    assert rt.shape == (3, 2, 2, 1)
    for k in range(3):
        np.testing.assert_array_equal(rt[k, :, :, 0], op[0, :, :, k])
    np.testing.assert_array_equal(rank_transpose(rank_transpose(op)), op)


# -- orthogonalization, rounding, norms ------------------------------------

@pytest.mark.parametrize("direction", ["left", "right"])
@pytest.mark.parametrize("operator", [False, True])
def test_orthogonalize(direction, operator):
    rng = np.random.default_rng(13)
    t = random_tt(rng, [3, 4, 3], [2, 3], operator)
    o = orthogonalize(t, direction)
    full = tt_op_to_full if operator else tt_to_full
    assert rel(full(o).entries, full(t).entries) <= 1e-12
    assert abs(frobenius_norm(full(o)) - frobenius_norm(full(t))) <= 1e-12 * frobenius_norm(full(t))
    cores = [c.reshape(c.shape[0], -1, c.shape[-1]) for c in o.cores]
    check = cores[:-1] if direction == "left" else cores[1:]
    for c in check:
        r, n, s = c.shape
        if direction == "left":
            g = c.reshape(r * n, s).T @ c.reshape(r * n, s)
        else:
            g = c.reshape(r, n * s) @ c.reshape(r, n * s).T
        assert np.max(np.abs(g - np.eye(g.shape[0]))) <= 1e-12
    with pytest.raises(ValueError):
        orthogonalize(t, "up")


def test_orthogonalize_unit_rank_one_is_unchanged_up_to_sign():
    e = [np.eye(3)[0], np.eye(2)[1]]
    t = TtTensor(tuple(v[None, :, None] for v in e))
    o = orthogonalize(t, "left")
    np.testing.assert_allclose(np.abs(o.cores[0]), np.abs(t.cores[0]))
    np.testing.assert_allclose(np.abs(tt_to_full(o).entries), tt_to_full(t).entries)


def test_tt_truncate():
    rng = np.random.default_rng(14)
    a = random_tt(rng, [3, 3, 3, 3], [2, 3, 2])
    zero_eps = tt_truncate(a, 0.0)
    assert rel(tt_to_full(zero_eps).entries, tt_to_full(a).entries) <= 1e-13
    twice = tt_truncate(tt_add(a, a), 1e-12)
    assert twice.ranks == a.ranks
    assert rel(tt_to_full(twice).entries, 2 * tt_to_full(a).entries) <= 1e-12
    b = random_tt(rng, [4, 4, 4, 4], [4, 4, 4])
    coarse = tt_truncate(b, 0.5)
    assert all(r <= R for r, R in zip(coarse.ranks, b.ranks))
    assert rel(tt_to_full(coarse).entries, tt_to_full(b).entries) <= 0.5 * np.sqrt(3)
    capped = tt_truncate(b, 0.0, max_rank=2)
    assert max(capped.ranks) <= 2
    with pytest.raises(ValueError):
        tt_truncate(b, -1.0)


def test_norm_and_dot():
    rng = np.random.default_rng(15)
    assert tt_norm(tt_zeros([2, 3, 2])) == 0.0
    a = random_tt(rng, [2, 3, 2], [2, 2])
    b = random_tt(rng, [2, 3, 2], [3, 1])
    assert abs(tt_dot(a, a) - tt_norm(a) ** 2) <= 1e-12 * tt_dot(a, a)
    want = float(tt_to_full(a).entries @ tt_to_full(b).entries)
    assert abs(tt_dot(a, b) - want) <= 1e-12 * abs(want)
    assert abs(tt_norm(a) - frobenius_norm(tt_to_full(a))) <= 1e-12 * tt_norm(a)
    with pytest.raises(ValueError):
        tt_dot(a, random_tt(rng, [2, 2, 2], [1, 1]))


def test_shape_property_respects_cyclic_flag():
    rng = np.random.default_rng(16)
    t = random_tt(rng, [2, 2, 2], [1, 1])
    assert TtTensor(t.cores, cyclic=True).shape == Shape([2, 2, 2], cyclic=True)
