"""Evidence lower bounds against exact log-marginals, and the worked
two-position example where the vanilla bound overshoots the greedy sampler."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from maskplan import (
    BudgetError,
    GreedyPlanner,
    MaskingSchedule,
    P2TopKPlanner,
    SoftGreedyPlanner,
    TabularDenoiser,
    UniformPlanner,
    Vocab,
    all_masked,
    beta_identity_check,
    compose_marginals,
    elbo_greedy,
    elbo_p2_topk,
    elbo_softmax,
    elbo_uniform_permutation_form,
    elbo_uniform_timestep_form,
    exact_terminal_distribution_p2,
    greedy_mismatch_counterexample,
    greedy_reference_path,
    linear_schedule,
    mismatch_example_denoiser,
    p2_reference_path,
    p_elbo,
    planned_kernel,
    vanilla_kernel,
)

from .conftest import make_rng


def random_instance(seed, d=3, length=3, scale=1.0):
    rng = make_rng(seed)
    v = Vocab(d)
    den = TabularDenoiser.random(v, length, rng, scale=scale)
    x0 = tuple(int(t) for t in rng.integers(1, d, size=length))
    return den, x0


def log_marginal(den, planner, x0):
    law = compose_marginals(planned_kernel(den, planner), all_masked(den.vocab, len(x0)), len(x0))
    return math.log(law[x0])


# ---------------------------------------------------------------------------
# vanilla bound


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), length=st.integers(2, 3))
def test_uniform_bound_forms_agree(seed, length):
    """The order-averaged and mask-count-stratified organizations of the
    vanilla bound are the same number."""
    den, x0 = random_instance(seed, length=length)
    a = elbo_uniform_permutation_form(den, x0)
    b = elbo_uniform_timestep_form(den, x0)
    assert math.isclose(a, b, rel_tol=0, abs_tol=1e-12)


def test_uniform_bound_is_tight_for_factorized_denoiser():
    """A denoiser whose rows never depend on the state makes the vanilla
    chain a product law, and the bound collapses to equality."""
    v = Vocab(3)
    den = TabularDenoiser.uniform(v, 3)
    x0 = (1, 2, 1)
    bound = elbo_uniform_permutation_form(den, x0)
    law = compose_marginals(vanilla_kernel(den), all_masked(v, 3), 3)
    assert math.isclose(bound, math.log(law[x0]), rel_tol=0, abs_tol=1e-12)
    assert math.isclose(bound, 3 * math.log(0.5), rel_tol=0, abs_tol=1e-12)


def test_uniform_bound_validates_input(small_denoiser):
    with pytest.raises(ValueError):
        elbo_uniform_permutation_form(small_denoiser, (1, 3, 2))  # mask inside
    big = TabularDenoiser.uniform(Vocab(3), 7)
    with pytest.raises(BudgetError):
        elbo_uniform_permutation_form(big, (1,) * 7)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_uniform_bound_below_vanilla_log_marginal(seed):
    den, x0 = random_instance(seed)
    law = compose_marginals(vanilla_kernel(den), all_masked(den.vocab, 3), 3)
    assert elbo_uniform_permutation_form(den, x0) <= math.log(law[x0]) + 1e-10


# ---------------------------------------------------------------------------
# planner-aware two-term bound


def test_p_elbo_uniform_degenerates_to_vanilla_bound(small_denoiser):
    x0 = (2, 1, 1)
    parts = p_elbo(small_denoiser, UniformPlanner(), x0)
    assert parts.selection_penalty == 0.0  # identically, not approximately
    eq1 = elbo_uniform_permutation_form(small_denoiser, x0)
    assert math.isclose(parts.total, eq1, rel_tol=0, abs_tol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), tau=st.sampled_from([0.25, 1.0, 4.0]))
def test_p_elbo_soft_bound_holds(seed, tau):
    den, x0 = random_instance(seed)
    planner = SoftGreedyPlanner(tau)
    parts = p_elbo(den, planner, x0)
    # the penalty is signed (the effective selections are not normalized
    # across positions); only the total is guaranteed to stay a bound
    assert math.isfinite(parts.selection_penalty)
    assert parts.total <= log_marginal(den, planner, x0) + 1e-10


def test_p_elbo_greedy_planner_bound_holds():
    den, x0 = random_instance(99)
    planner = GreedyPlanner()
    parts = p_elbo(den, planner, x0)
    assert parts.total <= log_marginal(den, planner, x0) + 1e-10


def test_p_elbo_mc_mode_agrees_with_exact(small_denoiser):
    x0 = (1, 2, 2)
    exact = p_elbo(small_denoiser, UniformPlanner(), x0)
    est = p_elbo(small_denoiser, UniformPlanner(), x0, mode="mc", n_samples=1500, seed=5)
    assert est.selection_penalty == 0.0  # z-independent planners stay exact
    assert est.std_error is not None and est.std_error > 0.0
    assert abs(est.total - exact.total) <= 4 * est.std_error
    soft_exact = p_elbo(small_denoiser, SoftGreedyPlanner(1.0), x0)
    soft_est = p_elbo(
        small_denoiser, SoftGreedyPlanner(1.0), x0, mode="mc", n_samples=600, f_samples=800, seed=5
    )
    assert abs(soft_est.total - soft_exact.total) <= 4 * soft_est.std_error + 0.05
    with pytest.raises(ValueError):
        p_elbo(small_denoiser, UniformPlanner(), x0, mode="typo")


# ---------------------------------------------------------------------------
# deterministic-path bounds


def test_greedy_reference_path_reveals_true_tokens(small_denoiser):
    x0 = (2, 2, 1)
    path = greedy_reference_path(small_denoiser, x0)
    assert len(path) == 3
    assert path[0][0] == (3, 3, 3)
    revealed = [j for _, j in path]
    assert sorted(revealed) == [0, 1, 2]
    for (x, j), (nxt, _) in zip(path, path[1:]):
        assert nxt[j] == x0[j]
        assert all(nxt[i] == x[i] for i in range(3) if i != j)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_greedy_bound_below_greedy_log_marginal(seed):
    den, x0 = random_instance(seed)
    p = log_marginal(den, GreedyPlanner(), x0)  # greedy mass at x0 is never zero
    assert elbo_greedy(den, x0) <= p + 1e-10


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 2**31), tau=st.sampled_from([0.25, 1.0, 4.0]))
def test_softmax_bound_holds_and_sits_below_two_term_bound(seed, tau):
    """The softmax-path bound lowers the two-term bound's penalty through the
    normalizer expectation, so it can only be looser."""
    den, x0 = random_instance(seed)
    parts = elbo_softmax(den, tau, x0)
    planner = SoftGreedyPlanner(tau)
    assert parts.total <= p_elbo(den, planner, x0).total + 1e-10
    assert parts.total <= log_marginal(den, planner, x0) + 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), eta=st.sampled_from([0.0, 1.0, 5.0]))
def test_p2_bound_below_parallel_log_marginal(seed, eta):
    den, x0 = random_instance(seed)
    planner = P2TopKPlanner(eta)
    law = exact_terminal_distribution_p2(den, planner, 3).marginal
    assert elbo_p2_topk(den, eta, x0) <= math.log(law[x0]) + 1e-10


def test_p2_unit_eta_path_and_bound_match_greedy(small_denoiser):
    for x0 in [(1, 1, 1), (2, 1, 2), (1, 2, 2)]:
        greedy_states = [x for x, _ in greedy_reference_path(small_denoiser, x0)]
        p2_states = [x for x, _ in p2_reference_path(small_denoiser, x0, 1.0)]
        assert greedy_states == p2_states
        assert elbo_p2_topk(small_denoiser, 1.0, x0) == elbo_greedy(small_denoiser, x0)


def test_p2_zero_eta_path_runs_left_to_right(small_denoiser):
    path = p2_reference_path(small_denoiser, (1, 2, 1), 0.0)
    assert [committed for _, committed in path] == [(0,), (0, 1), (0, 1, 2)]


def test_p2_bound_validates_input(small_denoiser):
    with pytest.raises(ValueError):
        elbo_p2_topk(small_denoiser, -1.0, (1, 2, 1))
    big = TabularDenoiser.uniform(Vocab(3), 4)
    with pytest.raises(BudgetError):
        elbo_p2_topk(big, 1.0, (1, 1, 1, 1))


# ---------------------------------------------------------------------------
# masking-schedule identity


def test_beta_identity_on_linear_schedule():
    for length in range(1, 7):
        for k in range(1, length + 1):
            res = beta_identity_check(length, k)
            assert res.rhs == 1.0 / (k * math.comb(length, k))
            assert res.abs_error <= 1e-10, (length, k)
            assert res.quadrature_error < 1e-10


def test_beta_identity_is_schedule_free():
    """Any schedule with the right endpoints gives the same stratum weight;
    checked with a curved one."""
    quadratic = MaskingSchedule(lambda s: 1.0 - s * s, lambda s: -2.0 * s, name="quadratic")
    for length, k in [(2, 1), (4, 2), (6, 5)]:
        res = beta_identity_check(length, k, schedule=quadratic)
        assert res.abs_error <= 1e-10, (length, k)


def test_beta_identity_validation():
    with pytest.raises(ValueError):
        beta_identity_check(4, 0)
    with pytest.raises(ValueError):
        beta_identity_check(4, 5)
    broken = MaskingSchedule(lambda s: 1.0 - s / 2, lambda s: -0.5, name="broken")
    with pytest.raises(ValueError):
        beta_identity_check(3, 1, schedule=broken)


# ---------------------------------------------------------------------------
# the two-position example


def test_mismatch_example_denoiser_rows():
    den = mismatch_example_denoiser()
    m = den.vocab.mask
    assert den.prob((m, m), 0, 1) == pytest.approx(0.25, abs=1e-15)
    assert den.prob((m, m), 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert den.prob((m, 1), 0, 1) == pytest.approx(0.25, abs=1e-15)
    assert den.prob((m, 2), 0, 1) == pytest.approx(0.3, abs=1e-15)
    assert den.prob((1, m), 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert den.prob((2, m), 1, 1) == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ValueError):
        mismatch_example_denoiser({"c7": 0.5})
    with pytest.raises(ValueError):
        mismatch_example_denoiser({"c1": 1.0})


def test_mismatch_report_frozen_values():
    report = greedy_mismatch_counterexample()
    assert math.isclose(report.uniform_bound, -2.0794415416798357, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(report.uniform_bound, math.log(1 / 8), rel_tol=0, abs_tol=1e-15)
    assert math.isclose(report.exp_uniform_bound, 0.125, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(report.greedy_terminal_prob, 1 / 32, rel_tol=0, abs_tol=1e-15)
    assert report.proof_lhs == 9 / 128
    assert report.proof_rhs == 16 / 128
    assert report.proof_lhs < report.proof_rhs
    assert report.selection_prob_pos0_first == 0.0
    assert report.selection_prob_pos1_first == 0.25
    assert report.bound_exceeds_log_marginal
    assert math.isclose(report.gap, math.log(4.0), rel_tol=0, abs_tol=1e-14)


def test_mismatch_report_hand_value_disagrees_with_enumeration():
    """The quoted closed form c2*c3*(1-c1) does not reproduce the enumerated
    terminal probability at the canonical constants; the report carries both
    so the discrepancy stays visible."""
    report = greedy_mismatch_counterexample()
    assert report.documented_hand_value == 0.09375
    assert not math.isclose(
        report.documented_hand_value, report.greedy_terminal_prob, rel_tol=0, abs_tol=1e-12
    )


def test_mismatch_report_internal_consistency():
    report = greedy_mismatch_counterexample()
    assert math.isclose(
        math.exp(report.log_greedy_terminal_prob),
        report.greedy_terminal_prob,
        rel_tol=1e-12,
    )
    assert math.isclose(
        report.gap,
        report.uniform_bound - report.log_greedy_terminal_prob,
        rel_tol=0,
        abs_tol=1e-15,
    )
    d = report.to_dict()
    assert d["constants"]["c1"] == 0.25
    assert d["bound_exceeds_log_marginal"] is True


def test_mismatch_report_perturbed_constants():
    # the published perturbation: the strict direction survives recomputation
    report = greedy_mismatch_counterexample({"c1": 0.4, "c3": 0.4, "c2": 0.5, "c5": 0.5})
    assert report.bound_exceeds_log_marginal
    # a parameterization where the greedy sampler concentrates hard enough
    # that the vanilla bound sits below its log-marginal
    flipped = {"c1": 0.5, "c5": 0.5, "c2": 0.9, "c3": 0.6}
    report = greedy_mismatch_counterexample(flipped, check=False)
    assert not report.bound_exceeds_log_marginal
    assert report.gap < 0.0
    with pytest.raises(AssertionError):
        greedy_mismatch_counterexample(flipped)
