"""Position and committed-set planners, and their effective selection probabilities."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskplan import (
    GreedyPlanner,
    P2TopKPlanner,
    SoftGreedyPlanner,
    TabularDenoiser,
    UniformPlanner,
    Vocab,
    effective_planner_F,
    effective_planner_table,
    effective_set_planner_F,
    greedy_pick,
    plan_greedy,
    plan_p2_topk,
    plan_soft_greedy,
    plan_uniform,
    position_planner,
    rdm_planner,
)

from . import oracles
from .conftest import make_rng


def test_plan_uniform_spreads_over_masked():
    v = Vocab(3)
    np.testing.assert_array_equal(plan_uniform((1, 3, 3), v), [0.0, 0.5, 0.5])
    np.testing.assert_array_equal(plan_uniform((3,), v), [1.0])
    with pytest.raises(ValueError):
        plan_uniform((1, 2), v)


def test_greedy_pick_breaks_ties_to_lowest_index():
    v = Vocab(3)
    den = TabularDenoiser.from_table(
        v,
        3,
        {
            ((3, 3, 1), 0): [0.6, 0.4],
            ((3, 3, 1), 1): [0.6, 0.4],
        },
    )
    # both masked slots give token 1 confidence 0.6: the tie goes to slot 0
    assert greedy_pick((1, 1, 1), (3, 3, 1), den) == 0
    # token 2 at slot 1 (0.4) loses to token 1 at slot 0 (0.6)
    assert greedy_pick((1, 2, 1), (3, 3, 1), den) == 0
    assert greedy_pick((2, 1, 1), (3, 3, 1), den) == 1


def test_plan_greedy_is_point_mass_on_best_confidence(small_denoiser):
    x = (3, 1, 3)
    z = (2, 1, 1)
    dist = plan_greedy(z, x, small_denoiser)
    assert dist.sum() == 1.0
    confs = {j: small_denoiser.prob(x, j, z[j]) for j in (0, 2)}
    assert dist[max(confs, key=confs.get)] == 1.0


def test_plan_soft_greedy_matches_manual_softmax(small_denoiser):
    x = (3, 3, 3)
    z = (1, 2, 2)
    for tau in (0.25, 1.0, 4.0):
        log_conf = np.array([math.log(small_denoiser.prob(x, j, z[j])) for j in range(3)])
        w = np.exp(log_conf / tau)
        np.testing.assert_allclose(
            plan_soft_greedy(z, x, small_denoiser, tau), w / w.sum(), rtol=1e-12
        )


def test_soft_greedy_temperature_limits(small_denoiser):
    x = (3, 3, 2)
    z = (1, 2, 2)
    near_uniform = plan_soft_greedy(z, x, small_denoiser, 1e9)
    np.testing.assert_allclose(near_uniform[:2], [0.5, 0.5], atol=1e-9)
    near_greedy = plan_soft_greedy(z, x, small_denoiser, 1e-9)
    np.testing.assert_allclose(near_greedy, plan_greedy(z, x, small_denoiser), atol=1e-9)
    with pytest.raises(ValueError):
        plan_soft_greedy(z, x, small_denoiser, 0.0)


def test_position_planner_factory():
    assert isinstance(position_planner("uniform"), UniformPlanner)
    assert isinstance(position_planner("greedy"), GreedyPlanner)
    soft = position_planner("soft", tau=0.5)
    assert isinstance(soft, SoftGreedyPlanner) and soft.tau == 0.5
    with pytest.raises(ValueError):
        position_planner("soft")
    with pytest.raises(ValueError):
        position_planner("нет")


# ---------------------------------------------------------------------------
# effective selection probabilities


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), tau=st.sampled_from([0.25, 1.0, 4.0]))
def test_effective_selection_matches_direct_enumeration(seed, tau):
    """The pinned-draw selection probability agrees with a literal sum over
    completions of the draw, for every masked slot and pin token."""
    rng = make_rng(seed)
    v = Vocab(3)
    den = TabularDenoiser.random(v, 3, rng)
    x = tuple(int(t) for t in rng.integers(1, 4, size=3))
    if v.mask not in x:
        x = (v.mask,) + x[1:]
    for planner in (GreedyPlanner(), SoftGreedyPlanner(tau)):
        for i in (j for j, tok in enumerate(x) if tok == v.mask):
            for token in v.clean_tokens:
                fast = effective_planner_F(den, planner, x, token, i)
                slow = oracles.effective_selection_direct(den, planner, x, i, token)
                assert math.isclose(fast, slow, rel_tol=0, abs_tol=1e-14)


def test_effective_selection_uniform_is_one_over_k(small_denoiser):
    planner = UniformPlanner()
    for x, k in [((3, 3, 3), 3), ((3, 1, 3), 2), ((2, 3, 1), 1)]:
        for i in (j for j, tok in enumerate(x) if tok == 3):
            assert effective_planner_F(small_denoiser, planner, x, 1, i) == 1.0 / k


def test_effective_selection_rejects_held_position(small_denoiser):
    with pytest.raises(ValueError):
        effective_planner_F(small_denoiser, GreedyPlanner(), (1, 3, 3), 1, 0)


def test_effective_table_matches_entrywise_values(small_denoiser):
    x = (3, 3, 1)
    for planner in (UniformPlanner(), GreedyPlanner(), SoftGreedyPlanner(0.7)):
        masked, table = effective_planner_table(small_denoiser, planner, x)
        assert masked == (0, 1)
        assert table.shape == (2, 2)
        for a, pos in enumerate(masked):
            for tok in (1, 2):
                entry = effective_planner_F(small_denoiser, planner, x, tok, pos)
                assert math.isclose(table[a, tok - 1], entry, rel_tol=0, abs_tol=1e-14)


def test_effective_table_rows_average_to_uniform(small_denoiser):
    """Averaging F over the pinned token with the denoiser's own weights
    recovers a distribution over slots: each column sum weighted by the
    draw marginals totals one across slots."""
    x = (3, 3, 3)
    masked, table = effective_planner_table(small_denoiser, GreedyPlanner(), x)
    probs = small_denoiser.masked_probs(x)
    per_slot = np.array([float(table[a] @ probs[pos]) for a, pos in enumerate(masked)])
    assert math.isclose(per_slot.sum(), 1.0, rel_tol=0, abs_tol=1e-12)


def test_effective_mc_mode_approaches_exact(small_denoiser):
    planner = SoftGreedyPlanner(1.0)
    x = (3, 3, 3)
    exact = effective_planner_F(small_denoiser, planner, x, 2, 1)
    est = effective_planner_F(
        small_denoiser, planner, x, 2, 1, mode="mc", n_samples=20_000, rng=make_rng(7)
    )
    assert abs(est - exact) < 0.01
    with pytest.raises(ValueError):
        effective_planner_F(small_denoiser, planner, x, 2, 1, mode="mc")
    with pytest.raises(ValueError):
        effective_planner_F(small_denoiser, planner, x, 2, 1, mode="annealed")


# ---------------------------------------------------------------------------
# top-k committed-set planner


def test_plan_p2_topk_hand_case():
    v = Vocab(3)
    den = TabularDenoiser.from_table(
        v,
        3,
        {
            ((3, 3, 3), 0): [0.2, 0.8],
            ((3, 3, 3), 1): [0.5, 0.5],
            ((3, 3, 3), 2): [0.9, 0.1],
        },
    )
    x = (3, 3, 3)
    z = (2, 1, 1)  # confidences 0.8, 0.5, 0.9
    assert plan_p2_topk(z, x, den, 1.0, 1) == (2,)
    assert plan_p2_topk(z, x, den, 1.0, 2) == (0, 2)
    assert plan_p2_topk(z, x, den, 1.0, 3) == (0, 1, 2)
    with pytest.raises(ValueError):
        plan_p2_topk(z, x, den, 1.0, 0)


def test_plan_p2_topk_eta_zero_keeps_held_then_low_index(small_denoiser):
    # all masked scores collapse to 0, held positions score 1
    assert plan_p2_topk((1, 2, 1), (3, 3, 3), small_denoiser, 0.0, 2) == (0, 1)
    assert plan_p2_topk((2, 1, 2), (3, 1, 3), small_denoiser, 0.0, 2) == (0, 1)


def test_plan_p2_topk_large_eta_can_remask():
    """A confident masked slot outranks a held one once eta scales its score
    past the agreement score of 1."""
    v = Vocab(3)
    den = TabularDenoiser.from_table(v, 2, {((1, 3), 1): [0.7, 0.3]})
    x = (1, 3)
    z = (1, 1)
    assert plan_p2_topk(z, x, den, 1.0, 1) == (0,)
    assert plan_p2_topk(z, x, den, 5.0, 1) == (1,)  # 5 * 0.7 > 1


def test_rdm_planner_is_unit_eta():
    planner = rdm_planner()
    assert planner.eta == 1.0
    assert planner.name == "rdm"
    assert P2TopKPlanner(2.5).name == "p2-topk(eta=2.5)"


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), eta=st.sampled_from([0.0, 1.0, 5.0]))
def test_effective_set_matches_direct_enumeration(seed, eta):
    rng = make_rng(seed)
    v = Vocab(3)
    den = TabularDenoiser.random(v, 3, rng)
    planner = P2TopKPlanner(eta)
    x = (3, 3, 3)
    x0 = tuple(int(t) for t in rng.integers(1, 3, size=3))
    size = int(rng.integers(1, 4))
    for committed in itertools.combinations(range(3), size):
        y = tuple(x0[i] if i in committed else v.mask for i in range(3))
        fast = effective_set_planner_F(den, planner, x, y)
        slow = oracles.effective_set_direct(den, planner, x, y)
        assert math.isclose(fast, slow, rel_tol=0, abs_tol=1e-14)
