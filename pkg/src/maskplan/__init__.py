"""Exact desk-scale laboratory for planner-aware masked-diffusion language
models: brute-force path enumeration, lower-bound evaluation, and tabular
denoiser training."""

from .core import (
    MAX_LENGTH,
    MAX_LENGTH_PARALLEL,
    MAX_VOCAB,
    MAX_VOCAB_PARALLEL,
    BudgetError,
    Sequence,
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
from .planners import (
    GreedyPlanner,
    P2TopKPlanner,
    PositionPlanner,
    SoftGreedyPlanner,
    UniformPlanner,
    effective_planner_F,
    effective_planner_table,
    effective_set_planner_F,
    greedy_pick,
    log_confidence_normalizer,
    p2_scores,
    plan_greedy,
    plan_p2_topk,
    plan_soft_greedy,
    plan_uniform,
    position_planner,
    rdm_planner,
)
from .chains import (
    PathDistribution,
    PathKLResult,
    compose_marginals,
    exact_terminal_distribution,
    exact_terminal_distribution_p2,
    kl_categorical,
    p2_kernel,
    p2_reference_kernel,
    p2_successors,
    path_kl,
    path_kl_chain_rule,
    planned_kernel,
    reference_chain_marginals,
    reference_kernel,
    vanilla_kernel,
)
from .sampling import (
    SampleBatch,
    SamplerConfig,
    chi_square_fit,
    dump_traces,
    sample_p2,
    sample_planned,
    sample_vanilla,
    terminal_counts,
)
from .elbo import (
    BetaIdentityResult,
    ElboReport,
    GreedyMismatchReport,
    MaskingSchedule,
    PElboParts,
    SoftmaxElboParts,
    beta_identity_check,
    elbo_greedy,
    elbo_p2_topk,
    elbo_softmax,
    elbo_uniform_permutation_form,
    elbo_uniform_timestep_form,
    greedy_mismatch_counterexample,
    greedy_reference_path,
    linear_schedule,
    mismatch_example_denoiser,
    p2_reference_path,
    p_elbo,
)
from .training import (
    DataDistribution,
    TrainConfig,
    TrainingDivergence,
    TrainMetrics,
    TrainResult,
    grad_analytic,
    grad_norm,
    loss_papl,
    loss_pure_planner,
    loss_vanilla,
    sample_batch,
    three_mode_toy,
    train,
    write_metrics_csv,
)

__version__ = "0.1.0"
