import numpy as np
import pytest
from conftest import dense_cost, random_instance, triangle

from blocksdp import (BlockSparseSym, ParseError, from_block_dict, nuclear_norm,
                      preprocess, random_stiefel, read_bsm, read_matrix_market,
                      write_bsm)


def test_preprocess_zero_matrix():
    Q, offset = preprocess(np.zeros((6, 6)), 2)
    assert Q.num_blocks == 0
    assert offset == 0.0
    assert Q.n == 3 and Q.d == 2


def test_preprocess_scalar_example():
    Q, offset = preprocess(np.array([[2.0, 3.0], [1.0, 4.0]]), 1)
    assert Q.block(0, 1) == pytest.approx(2.0)
    assert offset == pytest.approx(6.0)


def test_preprocess_symmetric_with_identity_diagonal():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    raw = np.block([[np.eye(2), A], [A.T, np.eye(2)]])
    Q, offset = preprocess(raw, 2)
    np.testing.assert_allclose(Q.block(0, 1), A)
    assert offset == pytest.approx(4.0)


def test_preprocess_rejects_bad_input():
    with pytest.raises(ValueError):
        preprocess(np.zeros((5, 5)), 2)  # size not a multiple of d
    with pytest.raises(ValueError):
        preprocess(np.zeros((4, 6)), 2)
    bad = np.zeros((4, 4))
    bad[0, 1] = np.nan
    with pytest.raises(ValueError):
        preprocess(bad, 2)


def test_offset_identity_on_feasible_lifts():
    # tr(Qraw X) == tr(Q' X) + offset for X = Y^T Y with identity diagonal.
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(2, 6))
        Qraw = rng.standard_normal((d * n, d * n))
        Q, offset = preprocess(Qraw, d)
        Y = np.hstack([random_stiefel(d + 1, d, rng) for _ in range(n)])
        X = Y.T @ Y
        lhs = float(np.sum(Qraw * X.T))
        rhs = dense_cost(Q.to_dense(), [Y[:, i * d:(i + 1) * d] for i in range(n)]) + offset
        assert abs(lhs - rhs) <= 1e-10 * (1.0 + abs(lhs))


def test_block_query_is_transpose_symmetric():
    rng = np.random.default_rng(1)
    Q = random_instance(rng, 3, 5)
    for i, j, B in Q.pairs():
        np.testing.assert_array_equal(Q.block(j, i), B.T)
        np.testing.assert_array_equal(Q.block(i, j), B)
    dense = Q.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    assert not Q.has_block(0, 0)
    assert np.all(Q.block(2, 2) == 0.0)


def test_construction_validation():
    with pytest.raises(ValueError):
        BlockSparseSym(2, 3, {(1, 1): np.eye(2)})  # diagonal key
    with pytest.raises(ValueError):
        BlockSparseSym(2, 3, {(2, 1): np.eye(2)})  # wrong orientation
    with pytest.raises(ValueError):
        BlockSparseSym(2, 3, {(0, 1): np.eye(3)})  # wrong shape
    with pytest.raises(ValueError):
        BlockSparseSym(2, 3, {(0, 1): np.full((2, 2), np.inf)})


def test_zero_blocks_dropped_by_symmetrization():
    A = np.array([[0.0, 1.0], [2.0, 0.0]])
    raw = {(0, 1): A, (1, 0): -A.T}  # symmetric part cancels exactly
    Q, offset = from_block_dict(2, 2, raw)
    assert Q.num_blocks == 0
    assert Q.adjacency[0] == []


def test_c1_c2_examples():
    empty = BlockSparseSym(1, 3, {})
    assert empty.c1() == 0.0 and empty.c2() == 0.0
    tri = triangle()
    assert tri.c1() == pytest.approx(2.0)
    assert tri.c2() == pytest.approx(6.0)
    Q = BlockSparseSym(2, 2, {(0, 1): np.diag([3.0, 4.0])})
    assert Q.c1() == pytest.approx(7.0)
    assert Q.c2() == pytest.approx(14.0)


def test_c2_at_most_n_times_c1():
    rng = np.random.default_rng(2)
    for _ in range(30):
        Q = random_instance(rng, int(rng.integers(1, 4)), int(rng.integers(2, 8)),
                            density=float(rng.uniform(0.2, 1.0)))
        assert Q.c2() <= Q.n * Q.c1() + 1e-12


def test_nuclear_norm_values():
    assert nuclear_norm(np.zeros((3, 2))) == 0.0
    assert nuclear_norm(np.diag([3.0, 4.0])) == pytest.approx(7.0)
    # single column: the only singular value is the Euclidean norm
    assert nuclear_norm(np.array([[3.0], [4.0]])) == pytest.approx(5.0)


def test_nuclear_norm_subadditive_and_transpose_invariant():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r, d = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        A = rng.standard_normal((r, d))
        B = rng.standard_normal((r, d))
        assert nuclear_norm(A + B) <= nuclear_norm(A) + nuclear_norm(B) + 1e-10
        assert nuclear_norm(A.T) == pytest.approx(nuclear_norm(A), rel=1e-12)


def test_bsm_roundtrip_sparse_and_dense(tmp_path):
    rng = np.random.default_rng(4)
    sparse = random_instance(rng, 2, 5, density=0.4)
    dense = random_instance(rng, 3, 4, density=1.0)
    assert dense.num_blocks == 4 * 3 // 2
    for k, Q in enumerate((sparse, dense)):
        path = tmp_path / f"q{k}.bsm"
        write_bsm(Q, path)
        back = read_bsm(path)
        assert (back.d, back.n, back.num_blocks) == (Q.d, Q.n, Q.num_blocks)
        for i, j, B in Q.pairs():
            np.testing.assert_array_equal(back.block(i, j), B)


@pytest.mark.parametrize("content,lineno", [
    ("BSN 1 2 1\n1 2 1.0\n", 1),
    ("BSM 1 2 1\n1 2\n", 2),
    ("BSM 1 2 1\n2 1 1.0\n", 2),
    ("BSM 1 3 2\n1 2 1.0\n1 2 2.0\n", 3),
    ("BSM 1 2 2\n1 2 1.0\n", 2),
])
def test_bsm_parse_errors_carry_line_numbers(tmp_path, content, lineno):
    path = tmp_path / "bad.bsm"
    path.write_text(content)
    with pytest.raises(ParseError) as err:
        read_bsm(path)
    assert f":{lineno}:" in str(err.value)


def test_matrix_market_general_and_symmetric(tmp_path):
    general = tmp_path / "g.mtx"
    general.write_text(
        "%%MatrixMarket matrix coordinate real general\n"
        "% comment\n"
        "3 3 4\n"
        "1 2 3.0\n"
        "2 1 1.0\n"
        "1 1 5.0\n"
        "2 3 2.0\n")
    Q, offset = read_matrix_market(general)
    assert offset == pytest.approx(5.0)
    assert Q.block(0, 1) == pytest.approx(2.0)  # 0.5 * (3 + 1)
    assert Q.block(1, 2) == pytest.approx(1.0)  # 0.5 * (2 + 0)

    sym = tmp_path / "s.mtx"
    sym.write_text(
        "%%MatrixMarket matrix coordinate real symmetric\n"
        "3 3 3\n"
        "2 1 1.0\n"
        "3 1 1.0\n"
        "3 2 1.0\n")
    Q, offset = read_matrix_market(sym)
    assert offset == 0.0
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert Q.block(i, j) == pytest.approx(1.0)


def test_matrix_market_duplicate_entry(tmp_path):
    path = tmp_path / "dup.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real general\n"
        "2 2 2\n"
        "1 2 1.0\n"
        "1 2 2.0\n")
    with pytest.raises(ParseError, match="duplicate"):
        read_matrix_market(path)


def test_column_nuclear_sums_cached_once():
    Q = triangle()
    first = Q.column_nuclear_sums()
    assert Q.column_nuclear_sums() is first
    np.testing.assert_allclose(first, [2.0, 2.0, 2.0])
