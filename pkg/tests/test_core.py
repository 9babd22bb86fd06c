import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskplan import (
    BudgetError,
    TabularDenoiser,
    Vocab,
    all_masked,
    apply_token,
    check_budget,
    check_budget_parallel,
    enumerate_all_states,
    enumerate_masked_states,
    hamming,
    is_clean,
    mask_out,
    masked_positions,
    n_masked,
    state_from_id,
    state_id,
)

from .conftest import make_rng


def test_vocab_basics():
    v = Vocab(4)
    assert v.mask == 4
    assert v.n_clean == 3
    assert list(v.clean_tokens) == [1, 2, 3]
    with pytest.raises(ValueError):
        Vocab(1)
    with pytest.raises(ValueError):
        v.check_sequence((0, 1))
    with pytest.raises(ValueError):
        v.check_sequence((1, 5))


def test_budget_guards():
    check_budget(Vocab(5), 6)
    with pytest.raises(BudgetError):
        check_budget(Vocab(5), 7)
    with pytest.raises(BudgetError):
        check_budget(Vocab(6), 2)
    check_budget_parallel(Vocab(3), 3)
    with pytest.raises(BudgetError):
        check_budget_parallel(Vocab(3), 4)
    with pytest.raises(BudgetError):
        check_budget_parallel(Vocab(4), 2)


def test_sequence_helpers():
    v = Vocab(3)
    x = (3, 1, 3, 2)
    assert masked_positions(x, v) == (0, 2)
    assert n_masked(x, v) == 2
    assert not is_clean(x, v)
    assert is_clean((1, 2), v)
    assert all_masked(v, 3) == (3, 3, 3)
    assert apply_token(x, 0, 2) == (2, 1, 3, 2)
    assert mask_out((1, 2, 1), [0, 2], v) == (3, 2, 3)
    assert hamming((1, 2, 3), (1, 3, 3)) == 1
    with pytest.raises(ValueError):
        hamming((1,), (1, 2))


@given(
    d=st.integers(min_value=2, max_value=5),
    length=st.integers(min_value=1, max_value=4),
    data=st.data(),
)
@settings(deadline=None, max_examples=60)
def test_state_id_roundtrip(d, length, data):
    v = Vocab(d)
    x = tuple(data.draw(st.integers(min_value=1, max_value=d)) for _ in range(length))
    sid = state_id(x, v)
    assert 0 <= sid < d**length
    assert state_from_id(sid, v, length) == x


def test_state_id_is_dense_and_unique():
    v = Vocab(3)
    states = [x for k in range(3) for x in enumerate_all_states(v, 2, k)]
    ids = sorted(state_id(x, v) for x in states)
    assert ids == list(range(9))


def test_enumerate_masked_states_counts():
    v = Vocab(3)
    x0 = (1, 2, 1)
    for k in range(4):
        states = list(enumerate_masked_states(x0, k, v))
        assert len(states) == math.comb(3, k)
        for x in states:
            assert n_masked(x, v) == k
            assert all(a == b for a, b in zip(x, x0) if a != v.mask)
    with pytest.raises(ValueError):
        list(enumerate_masked_states((1, 3), 1, v))  # x0 not clean


def test_predict_rows_are_distributions(small_denoiser):
    v = small_denoiser.vocab
    for x in [(3, 3, 3), (1, 3, 2), (2, 2, 3)]:
        rows = small_denoiser.predict(x)
        assert rows.shape == (3, v.n_clean)
        for i in range(3):
            row = rows[i]
            assert abs(float(row.sum()) - 1.0) < 1e-12
            if x[i] != v.mask:
                expected = np.zeros(v.n_clean)
                expected[x[i] - 1] = 1.0
                assert np.array_equal(row, expected)
            else:
                assert (row > 0).all()


def test_prob_and_log_prob_consistency(small_denoiser):
    x = (3, 1, 3)
    for i in (0, 2):
        for tok in small_denoiser.vocab.clean_tokens:
            p = small_denoiser.prob(x, i, tok)
            assert math.isclose(small_denoiser.log_prob(x, i, tok), math.log(p), rel_tol=1e-12)
    # held position: point mass
    assert small_denoiser.prob(x, 1, 1) == 1.0
    assert small_denoiser.prob(x, 1, 2) == 0.0
    assert small_denoiser.log_prob(x, 1, 2) == -math.inf


def test_probs_table_matches_predict(small_denoiser):
    table = small_denoiser.probs_table()
    v = small_denoiser.vocab
    for k in range(4):
        for x in enumerate_all_states(v, 3, k):
            sid = state_id(x, v)
            assert np.array_equal(table[sid], small_denoiser.predict(x))


def test_from_table_fills_and_validates():
    v = Vocab(3)
    den = TabularDenoiser.from_table(v, 2, {((3, 3), 0): [0.75, 0.25]})
    assert math.isclose(den.prob((3, 3), 0, 1), 0.75, rel_tol=1e-12)
    # unspecified masked rows default to uniform
    assert math.isclose(den.prob((3, 3), 1, 1), 0.5, rel_tol=1e-12)
    with pytest.raises(ValueError):
        TabularDenoiser.from_table(v, 2, {((3, 3), 0): [0.9, 0.3]})
    with pytest.raises(ValueError):
        TabularDenoiser.from_table(v, 2, {((3, 3), 0): [1.0, 0.0]})


def test_copy_is_independent():
    den = TabularDenoiser.random(Vocab(3), 2, make_rng(0))
    dup = den.copy()
    dup.logits[0, 0, 0] += 1.0
    assert den.logits[0, 0, 0] != dup.logits[0, 0, 0]
