import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import canonical_sum, random_blocks, random_reaction_system
from slimtt import models
from slimtt.dense import Shape, kron_cells
from slimtt.master import dense_generator
from slimtt.reactions import ReactionSystem, SingleCellReaction, TwoCellReaction
from slimtt.slim import (
    SlimBlocks,
    build_slim_general,
    build_slim_markov,
    compress_pair,
    equilibrated_svd,
    markov_blocks,
    rank_factorization,
    shift_matrix,
    slim_layout,
    storage_census,
    storage_count,
)
from slimtt.tt import tt_op_to_full, tt_to_full


def dense_of(tt):
    if tt.meta.get("mode") == "tensor":
        return tt_to_full(tt).entries
    return tt_op_to_full(tt).matrix()


# -- shift matrices ------------------------------------------------------------

def test_shift_matrix_examples():
    np.testing.assert_array_equal(shift_matrix(3, 0), np.eye(3))
    down = np.zeros((3, 3))
    down[1, 0] = down[2, 1] = 1.0
    np.testing.assert_array_equal(shift_matrix(3, -1), down)
    assert not np.any(shift_matrix(3, 5))
    g = shift_matrix(5, 2)
    for x in range(5):
        for y in range(5):
            assert g[x, y] == (1.0 if y - x == 2 else 0.0)
    with pytest.raises(ValueError):
        shift_matrix(0, 0)


# -- block validation ------------------------------------------------------

def test_slim_blocks_validation():
    z = np.zeros((2, 2))
    with pytest.raises(ValueError, match="at least 3"):
        SlimBlocks([z, z], [[z], [z]], [[z], [z]], cyclic=True)
    with pytest.raises(ValueError, match="left factors"):
        SlimBlocks([z, z, z], [[z, z], [], []], [[], [z], []])
    with pytest.raises(ValueError, match="closing edge"):
        SlimBlocks([z, z, z], [[], [], [z]], [[z], [], []])
    with pytest.raises(ValueError, match="shape"):
        SlimBlocks([z, np.zeros(2)], [[], []], [[], []])
    with pytest.raises(ValueError):
        SlimBlocks([z, z], [[], []], [[], []], mode="matrix")


# -- general builder --------------------------------------------------------

def test_empty_system_is_zero_with_rank_two():
    z = np.zeros((3, 3))
    op = build_slim_general(SlimBlocks([z] * 4, [[]] * 4, [[]] * 4))
    assert op.ranks == (1, 2, 2, 2, 1)
    assert not np.any(tt_op_to_full(op).entries)


@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("cyclic", [False, True])
@pytest.mark.parametrize("mode", ["operator", "tensor"])
def test_general_builder_equals_canonical_sum(d, cyclic, mode):
    rng = np.random.default_rng(100 * d + 10 * cyclic + (mode == "tensor"))
    for _ in range(3):
        blocks = random_blocks(rng, d, cyclic, mode)
        tt = build_slim_general(blocks)
        assert np.max(np.abs(dense_of(tt) - canonical_sum(blocks))) <= 1e-13


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.booleans(), st.integers(0, 10**6))
def test_rank_formula(d, cyclic, seed):
    cyclic = cyclic and d >= 3
    rng = np.random.default_rng(seed)
    blocks = random_blocks(rng, d, cyclic, modes=[2] * d)
    betas = blocks.betas
    bd = betas[-1] if cyclic else 0
    tt = build_slim_general(blocks)
    assert list(tt.ranks) == [1] + [2 + betas[i] + bd for i in range(d - 1)] + [1]


def test_supercore_pattern():
    rng = np.random.default_rng(3)
    blocks = random_blocks(rng, 4, True, modes=[2, 3, 2, 3], betas=[1, 2, 1, 2])
    op = build_slim_general(blocks)
    c1, c2, c4 = op.cores[0], op.cores[1], op.cores[3]
    b1, b2, bd = 1, 2, 2
    # first core [S L I M]
    np.testing.assert_array_equal(c1[0, :, :, 0], blocks.S[0])
    np.testing.assert_array_equal(c1[0, :, :, 1], blocks.L[0][0])
    np.testing.assert_array_equal(c1[0, :, :, 1 + b1], np.eye(2))
    for c in range(bd):
        np.testing.assert_array_equal(c1[0, :, :, 2 + b1 + c], blocks.M[0][c])
    # interior core
    np.testing.assert_array_equal(c2[0, :, :, 0], np.eye(3))
    np.testing.assert_array_equal(c2[1, :, :, 0], blocks.M[1][0])
    np.testing.assert_array_equal(c2[1 + b1, :, :, 0], blocks.S[1])
    for nu in range(b2):
        np.testing.assert_array_equal(c2[1 + b1, :, :, 1 + nu], blocks.L[1][nu])
    np.testing.assert_array_equal(c2[1 + b1, :, :, 1 + b2], np.eye(3))
    for c in range(bd):
        np.testing.assert_array_equal(c2[2 + b1 + c, :, :, 2 + b2 + c], np.eye(3))
    # last core [I M S L]^T
    b3 = 1
    np.testing.assert_array_equal(c4[0, :, :, 0], np.eye(3))
    np.testing.assert_array_equal(c4[1, :, :, 0], blocks.M[3][0])
    np.testing.assert_array_equal(c4[1 + b3, :, :, 0], blocks.S[3])
    for c in range(bd):
        np.testing.assert_array_equal(c4[2 + b3 + c, :, :, 0], blocks.L[3][c])


def test_cyclic_homogeneous_ranks_and_identical_interiors():
    rng = np.random.default_rng(4)
    n, beta = 3, 2
    S = rng.standard_normal((n, n))
    Ls = [rng.standard_normal((n, n)) for _ in range(beta)]
    Ms = [rng.standard_normal((n, n)) for _ in range(beta)]
    d = 4
    blocks = SlimBlocks([S] * d, [Ls] * d, [Ms] * d, cyclic=True)
    op = build_slim_general(blocks, homogeneous=True)
    assert op.ranks[1:-1] == (2 + 2 * beta,) * (d - 1)
    np.testing.assert_array_equal(op.cores[1], op.cores[2])
    assert np.max(np.abs(dense_of(op) - canonical_sum(blocks))) <= 1e-13


def test_homogeneous_declaration_is_verified():
    rng = np.random.default_rng(5)
    blocks = random_blocks(rng, 4, True, modes=[2] * 4, betas=[1] * 4)
    with pytest.raises(ValueError, match="homogeneous"):
        build_slim_general(blocks, homogeneous=True)


def test_layout_has_no_overlapping_slots():
    for betas, cyclic in (([1, 0, 2], False), ([2, 1, 3, 1], True), ([0, 0], False)):
        d = len(betas) + (0 if cyclic else 1)
        for core in slim_layout(betas, d, cyclic):
            slots = [(r, c) for r, c, _, _ in core]
            assert len(slots) == len(set(slots))


# -- pair compression ----------------------------------------------------------

def pair_contraction(L, M):
    return sum(np.kron(m, l) for l, m in zip(L, M))


def test_compress_single_pair_keeps_rank_one():
    rng = np.random.default_rng(6)
    L, M = [rng.standard_normal((3, 3))], [rng.standard_normal((2, 2))]
    Ln, Mn, g = compress_pair(L, M)
    assert g == 1
    assert np.max(np.abs(pair_contraction(Ln, Mn) - pair_contraction(L, M))) <= 1e-13


def test_duplicated_pair_compresses_to_one():
    rng = np.random.default_rng(7)
    l, m = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    Ln, Mn, g = compress_pair([l, l], [m, m])
    assert g == 1
    assert np.max(np.abs(pair_contraction(Ln, Mn) - 2 * np.kron(m, l))) <= 1e-12


def test_cascade_edge_compresses_to_hill_times_shift_minus_identity():
    h = np.diag(models.cascade_hill(models.CascadeParams(n=6)))
    down = shift_matrix(6, -1)
    Ln, Mn, g = compress_pair([h, -h], [down, np.eye(6)])
    assert g == 1
    assert np.max(np.abs(np.kron(Mn[0], Ln[0]) - np.kron(down - np.eye(6), h))) <= 1e-13


@pytest.mark.parametrize("seed", range(5))
def test_gamma_is_numerical_rank(seed):
    rng = np.random.default_rng(seed)
    true_rank = int(rng.integers(1, 4))
    base_l = [rng.standard_normal((3, 3)) for _ in range(true_rank)]
    base_m = [rng.standard_normal((2, 2)) for _ in range(true_rank)]
    beta = true_rank + 3
    mix = rng.standard_normal((beta, true_rank))
    L = [sum(mix[k, j] * base_l[j] for j in range(true_rank)) for k in range(beta)]
    M = [base_m[k % true_rank] * (1.0 + k) for k in range(beta)]
    full = pair_contraction(L, M)
    # matricized contraction: rows index the left cell, columns the right cell
    matricized = sum(np.outer(l.ravel(order="F"), m.ravel(order="F")) for l, m in zip(L, M))
    Ln, Mn, g = compress_pair(L, M)
    assert g == np.linalg.matrix_rank(matricized) == true_rank
    assert np.max(np.abs(pair_contraction(Ln, Mn) - full)) <= 1e-12


def test_compress_pair_errors():
    with pytest.raises(ValueError):
        compress_pair([], [])
    with pytest.raises(ValueError):
        compress_pair([np.eye(2)], [np.eye(2), np.eye(2)])


def test_compress_pair_vectors():
    rng = np.random.default_rng(8)
    u, v = rng.standard_normal(4), rng.standard_normal(3)
    Ln, Mn, g = compress_pair([u, 2 * u], [v, v])
    assert g == 1
    assert np.max(np.abs(np.outer(Ln[0], Mn[0]) - 3 * np.outer(u, v))) <= 1e-13


def test_equilibrated_svd_and_rank_factorization():
    rng = np.random.default_rng(9)
    mat = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    mat[0] *= 1e8
    u, s, vt = equilibrated_svd(mat)
    assert s.size == 2
    assert np.max(np.abs((u * s) @ vt - mat)) <= 1e-12 * np.max(np.abs(mat))
    left, right = rank_factorization(mat)
    assert left.shape[1] == 2
    assert np.max(np.abs(left @ right - mat)) <= 1e-12 * np.max(np.abs(mat))
    # disconnected single entries are reproduced bit for bit
    sparse = np.zeros((3, 3))
    sparse[0, 2], sparse[2, 0] = 9.7e7, 0.066
    left, right = rank_factorization(sparse)
    assert left.shape[1] == 2
    np.testing.assert_array_equal(left @ right, sparse)
    l0, r0 = rank_factorization(np.zeros((3, 2)))
    assert l0.shape == (3, 0) and r0.shape == (0, 2)


# -- master-equation builder ------------------------------------------------------

def test_no_reactions_gives_zero_operator():
    rs = ReactionSystem(Shape([3, 3, 3]), [[], [], []], [[], []])
    op = build_slim_markov(rs)
    assert not np.any(tt_op_to_full(op).entries)


def test_cascade_ranks_and_oracle():
    rs = models.build_cascade(models.CascadeParams(d=4, n=8))
    op = build_slim_markov(rs)
    assert op.ranks == (1, 3, 3, 3, 1)
    assert np.max(np.abs(tt_op_to_full(op).matrix() - dense_generator(rs).matrix())) <= 1e-12


def test_co_oxidation_rank_16():
    op = build_slim_markov(models.build_co_oxidation(models.CoOxidationParams(d=5)))
    assert set(op.ranks[1:-1]) == {16}


def test_factor_order_for_one_reaction():
    u = np.array([1.0, 2.0, 0.0])
    v = np.array([0.0, 1.0, 3.0])
    rs = ReactionSystem(
        Shape([3, 3]), [[], []], [[TwoCellReaction(np.outer(u, v), (1, -1))]]
    )
    blocks = markov_blocks(rs, compress=False)
    (l1, l2), (m1, m2) = blocks.L[0], blocks.M[1]
    np.testing.assert_allclose(np.kron(m1, l1), np.kron(shift_matrix(3, 1) * v, shift_matrix(3, -1) * u), atol=1e-14)
    np.testing.assert_allclose(np.kron(m2, l2), -np.kron(np.diag(v), np.diag(u)), atol=1e-14)


@pytest.mark.parametrize("seed", range(12))
def test_markov_builder_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    rs = random_reaction_system(rng)
    want = dense_generator(rs).matrix()
    scale = max(1.0, np.max(np.abs(want)))
    for compress in (False, True):
        got = tt_op_to_full(build_slim_markov(rs, compress=compress)).matrix()
        assert np.max(np.abs(got - want)) <= 1e-12 * scale


def test_compression_preserves_operator():
    for name, rs in (
        ("toll", models.build_toll(models.TollParams(d=4, n=5))),
        ("co2", models.build_co_oxidation(models.CoOxidationParams(d=4))),
    ):
        raw = tt_op_to_full(build_slim_markov(rs, compress=False)).matrix()
        packed = tt_op_to_full(build_slim_markov(rs, compress=True)).matrix()
        assert np.max(np.abs(raw - packed)) <= 1e-12 * max(1.0, np.max(np.abs(raw))), name


def test_uncompressed_ranks_follow_formula_on_a_ring():
    rs = models.build_co_oxidation(models.CoOxidationParams(d=4))
    op = build_slim_markov(rs, compress=False)
    b = op.meta["uncompressed_betas"]
    assert list(op.ranks[1:-1]) == [2 + b[i] + b[-1] for i in range(3)]


# -- storage -----------------------------------------------------------------

def test_storage_count_examples():
    assert storage_count([1, 1, 1], [2, 2, 2], True)[0] == 14
    counts = storage_count([0, 0, 0], [3, 3, 3, 3], False)
    assert counts[1:-1] == [9 + 6, 9 + 6]


def test_storage_census_cascade():
    op = build_slim_markov(models.build_cascade(models.CascadeParams(d=4, n=8)))
    assert storage_census(op) == storage_count(op.meta["betas"], op.modes, op.meta["cyclic"])


def test_storage_census_rejects_foreign_operators():
    from slimtt.tt import tt_identity

    with pytest.raises(ValueError):
        storage_census(tt_identity([2, 2]))
