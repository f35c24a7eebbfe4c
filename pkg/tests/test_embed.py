import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsent.embed import (
    EmbeddingTable,
    OOVPolicy,
    build_trainable_table,
    load_vectors,
    load_vectors_text,
    nbow_compose,
    nbow_matrix,
)
from mtsent.errors import DimensionMismatch
from mtsent.optim import glorot_limit


@pytest.fixture
def ab():
    return load_vectors_text(io.StringIO("a 1 2\nb 3 4\n"))


def test_load_small(ab):
    assert ab.dim == 2
    assert len(ab) == 2
    assert not ab.trainable
    assert ab.words == ["a", "b"]


def test_load_dimension_mismatch():
    with pytest.raises(DimensionMismatch) as err:
        load_vectors_text(io.StringIO("a 1 2\nb 3\n"))
    assert err.value.line == 2


def test_expected_dim_enforced():
    with pytest.raises(DimensionMismatch) as err:
        load_vectors_text(io.StringIO("a 1 2\n"), expected_dim=3)
    assert err.value.line == 1


def test_fifty_dim_file(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "glove.txt"
    path.write_text("".join(f"w{i} " + " ".join(f"{v:.5f}" for v in rng.normal(size=50)) + "\n"
                            for i in range(4)))
    assert load_vectors(path).dim == 50


def test_duplicate_keeps_first():
    t = load_vectors_text(io.StringIO("a 1 2\na 5 6\n"))
    assert t.lookup("a").tolist() == [1.0, 2.0]
    assert len(t.warnings) == 1


@settings(max_examples=50)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
                min_size=1, max_size=6))
def test_lookup_is_bit_exact(rows):
    text = "".join(f"w{i} " + " ".join(repr(v) for v in row) + "\n" for i, row in enumerate(rows))
    t = load_vectors_text(io.StringIO(text))
    for i, row in enumerate(rows):
        assert t.lookup(f"w{i}").tolist() == [float(repr(v)) for v in row]


def test_nbow_average(ab):
    assert nbow_compose(["a", "b"], ab).tolist() == [2.0, 3.0]
    assert nbow_compose(["a"], ab).tolist() == [1.0, 2.0]


def test_nbow_skip_oov(ab):
    assert nbow_compose(["a", "zzz", "b"], ab).tolist() == [2.0, 3.0]


def test_nbow_zero_vector_policy(ab):
    ab.oov_policy = OOVPolicy.ZERO_VECTOR
    assert nbow_compose(["a", "zzz", "b"], ab).tolist() == pytest.approx([4 / 3, 2.0])


def test_nbow_random_init_is_stable(ab):
    ab.oov_policy = OOVPolicy.RANDOM_INIT
    v1 = nbow_compose(["zzz"], ab)
    assert np.array_equal(v1, nbow_compose(["zzz"], ab))
    assert np.all(np.abs(v1) <= ab.oov_limit)


def test_nbow_all_oov_warns(ab):
    warnings = []
    assert nbow_compose(["x", "y"], ab, warnings).tolist() == [0.0, 0.0]
    assert nbow_compose([], ab, warnings).tolist() == [0.0, 0.0]
    assert len(warnings) == 2


def test_nbow_matrix(ab):
    assert nbow_matrix([["a"], ["b"], []], ab).tolist() == [[1, 2], [3, 4], [0, 0]]


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "oov"]), max_size=12), st.randoms())
def test_nbow_permutation_invariant(tokens, rnd):
    table = load_vectors_text(io.StringIO("a 1 2\nb 3 4\nc -1 0.5\nd 0.25 8\n"))
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(nbow_compose(tokens, table), nbow_compose(shuffled, table), rtol=1e-12, atol=1e-12)


@given(st.sampled_from(["a", "b", "c"]), st.integers(1, 20))
def test_nbow_copies_of_one_word(word, n):
    table = load_vectors_text(io.StringIO("a 1 2\nb 3 4\nc -1 0.5\n"))
    np.testing.assert_allclose(nbow_compose([word] * n, table), table.lookup(word), rtol=1e-12)


class TestTrainableTable:
    def test_rows_copied(self, ab):
        t = build_trainable_table(["b", "a"], ab, np.random.default_rng(0))
        assert t.trainable
        assert t.lookup("a").tolist() == [1.0, 2.0]
        assert t.lookup("b").tolist() == [3.0, 4.0]

    def test_deterministic(self, ab):
        t1 = build_trainable_table(["a", "x", "y"], ab, np.random.default_rng(3))
        t2 = build_trainable_table(["a", "x", "y"], ab, np.random.default_rng(3))
        assert np.array_equal(t1.matrix, t2.matrix)

    def test_oov_row_in_range(self, ab):
        t = build_trainable_table(["a", "b", "new"], ab, np.random.default_rng(1))
        limit = glorot_limit(3, 2)
        assert np.all(np.abs(t.lookup("new")) <= limit)

    def test_no_pretrained_needs_dim(self):
        with pytest.raises(ValueError):
            build_trainable_table(["a"], None, np.random.default_rng(0))
        assert build_trainable_table(["a", "b"], None, np.random.default_rng(0), dim=4).matrix.shape == (2, 4)


def test_table_shape_checked():
    with pytest.raises(DimensionMismatch):
        EmbeddingTable(2, {"a": 0}, np.zeros((2, 2)))
