"""Evidence lower bounds for the unmasking samplers, all exact by default.

Every bound here is a lower bound on the log-probability that a particular
sampler assigns to a clean sequence: the order-averaged bound for the
vanilla sampler, the planner-aware two-term bound for planned samplers, the
deterministic-path bounds for the greedy and parallel top-k samplers, and
the soft-greedy bound with its normalizer-ratio correction.  A quadrature
check of the masking-schedule identity (the per-k weights integrate to
1/(k*C(L,k)) for any valid schedule) lives here too, as does the worked
two-position example showing the greedy sampler's log-marginal falling
below the vanilla bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from .chains import exact_terminal_distribution, reference_chain_marginals
from .core import (
    Sequence,
    TabularDenoiser,
    Vocab,
    all_masked,
    apply_token,
    check_budget,
    check_budget_parallel,
    enumerate_masked_states,
    is_clean,
    mask_out,
    masked_positions,
)
from .planners import (
    GreedyPlanner,
    P2TopKPlanner,
    PositionPlanner,
    SoftGreedyPlanner,
    effective_planner_F,
    greedy_pick,
    plan_p2_topk,
    plan_soft_greedy,
)


@dataclass(frozen=True)
class ElboReport:
    """A bound value next to the exact log-marginal it is supposed to bound."""

    bound_kind: str
    bound_value: float
    exact_log_marginal: float
    evaluation_mode: str = "exact"

    @property
    def gap(self) -> float:
        return self.exact_log_marginal - self.bound_value

    def to_dict(self) -> dict:
        return {
            "bound_kind": self.bound_kind,
            "bound_value": self.bound_value,
            "exact_log_marginal": self.exact_log_marginal,
            "gap": self.gap,
            "evaluation_mode": self.evaluation_mode,
        }


def _require_clean(x0: Sequence, vocab: Vocab) -> None:
    vocab.check_sequence(x0)
    if not is_clean(x0, vocab):
        raise ValueError(f"{x0} contains masks; bounds are evaluated at clean sequences")


# ---------------------------------------------------------------------------
# vanilla sampler bound, two algebraically equal forms


def elbo_uniform_permutation_form(denoiser: TabularDenoiser, x0: Sequence) -> float:
    """Average over all L! unmask orders of the sum of log-confidences of the
    true token at each newly revealed position."""
    _require_clean(x0, denoiser.vocab)
    check_budget(denoiser.vocab, len(x0))
    length = len(x0)
    total = 0.0
    for sigma in itertools.permutations(range(length)):
        x = all_masked(denoiser.vocab, length)
        for i in sigma:
            total += denoiser.log_prob(x, i, x0[i])
            x = apply_token(x, i, x0[i])
    return total / math.factorial(length)


def elbo_uniform_timestep_form(denoiser: TabularDenoiser, x0: Sequence) -> float:
    """Same bound organized by mask count: for each number of masks, average
    the mean log-confidence over all states with that mask pattern."""
    _require_clean(x0, denoiser.vocab)
    check_budget(denoiser.vocab, len(x0))
    length = len(x0)
    total = 0.0
    for n_masks in range(1, length + 1):
        states = list(enumerate_masked_states(x0, n_masks, denoiser.vocab))
        inner = 0.0
        for x in states:
            inner += sum(denoiser.log_prob(x, i, x0[i]) for i in masked_positions(x, denoiser.vocab)) / n_masks
        total += inner / len(states)
    return total


# ---------------------------------------------------------------------------
# planner-aware bound (two terms)


@dataclass(frozen=True)
class PElboParts:
    """Planner-aware bound: planner-weighted reconstruction plus a penalty
    for the gap between the ideal planner at the clean sequence and its
    effective, draw-averaged counterpart.

    The penalty is identically zero for draw-independent planners but is
    otherwise signed: the effective selections are averaged under different
    pins per position, so they are not a normalized distribution and the
    log-ratio term is not a KL."""

    reconstruction: float
    selection_penalty: float
    std_error: float | None = None

    @property
    def total(self) -> float:
        return self.reconstruction + self.selection_penalty


def p_elbo(
    denoiser: TabularDenoiser,
    planner: PositionPlanner,
    x0: Sequence,
    mode: str = "exact",
    n_samples: int = 2000,
    f_samples: int = 500,
    seed: int = 0,
) -> PElboParts:
    """Two-term planner-aware lower bound on the planned sampler's
    log-marginal at ``x0``.

    Exact mode enumerates the reference-chain marginals and the effective
    selection probabilities.  MC mode draws (step, state) pairs by simulating
    the reference chain and estimates the effective selection probabilities
    by sampling too; the returned ``std_error`` is for the total.

    A planner that ignores the draw makes the penalty identically 0.0: the
    ideal and effective planners are then computed by the same expression,
    so their log-ratio is exactly zero term by term.
    """
    _require_clean(x0, denoiser.vocab)
    check_budget(denoiser.vocab, len(x0))
    length = len(x0)

    if mode == "exact":
        marginals = reference_chain_marginals(x0, denoiser, planner)
        recon = 0.0
        penalty = 0.0
        for k in range(length):
            for x, px in marginals[k].items():
                if px == 0.0:
                    continue
                w = planner.distribution(x0, x, denoiser)
                for i in masked_positions(x, denoiser.vocab):
                    wi = float(w[i])
                    if wi == 0.0:
                        continue
                    recon += px * wi * denoiser.log_prob(x, i, x0[i])
                    eff = effective_planner_F(denoiser, planner, x, x0[i], i)
                    if eff == 0.0:
                        penalty = -math.inf
                    else:
                        penalty -= px * wi * (math.log(wi) - math.log(eff))
        return PElboParts(recon, penalty)

    if mode == "mc":
        rng = np.random.Generator(np.random.Philox(seed))
        totals = np.empty(n_samples)
        recon_sum = 0.0
        penalty_sum = 0.0
        for t in range(n_samples):
            k = int(rng.integers(length))
            x = all_masked(denoiser.vocab, length)
            for _ in range(k):
                w = planner.distribution(x0, x, denoiser)
                i = int(rng.choice(length, p=w))
                x = apply_token(x, i, x0[i])
            w = planner.distribution(x0, x, denoiser)
            recon_t = 0.0
            penalty_t = 0.0
            for i in masked_positions(x, denoiser.vocab):
                wi = float(w[i])
                if wi == 0.0:
                    continue
                recon_t += wi * denoiser.log_prob(x, i, x0[i])
                eff = effective_planner_F(
                    denoiser, planner, x, x0[i], i, mode="mc", n_samples=f_samples, rng=rng
                )
                penalty_t -= wi * (math.log(wi) - math.log(eff)) if eff > 0 else math.inf
            recon_sum += length * recon_t
            penalty_sum += length * penalty_t
            totals[t] = length * (recon_t + penalty_t)
        se = float(totals.std(ddof=1) / math.sqrt(n_samples))
        return PElboParts(recon_sum / n_samples, penalty_sum / n_samples, std_error=se)

    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# greedy sampler bound (deterministic path)


def greedy_reference_path(denoiser: TabularDenoiser, x0: Sequence) -> list[tuple[Sequence, int]]:
    """The deterministic unmasking path toward ``x0`` that always reveals the
    masked position where the denoiser is most confident in the true token.
    Returns (state, revealed position) per step."""
    _require_clean(x0, denoiser.vocab)
    x = all_masked(denoiser.vocab, len(x0))
    out = []
    for _ in range(len(x0)):
        j = greedy_pick(x0, x, denoiser)
        out.append((x, j))
        x = apply_token(x, j, x0[j])
    return out


def elbo_greedy(denoiser: TabularDenoiser, x0: Sequence) -> float:
    """Sum of log-confidences of the true tokens at every masked position of
    every state along the greedy path (the bound accumulates terms beside
    the path as well as on it)."""
    total = 0.0
    for x, _ in greedy_reference_path(denoiser, x0):
        total += sum(denoiser.log_prob(x, i, x0[i]) for i in masked_positions(x, denoiser.vocab))
    return total


# ---------------------------------------------------------------------------
# soft-greedy sampler bound


@dataclass(frozen=True)
class SoftmaxElboParts:
    """Soft-greedy bound: planner-weighted reconstruction plus the exact
    expectation of the log-ratio of confidence normalizers between the clean
    sequence and the redrawn candidate."""

    reconstruction: float
    normalizer_correction: float

    @property
    def total(self) -> float:
        return self.reconstruction + self.normalizer_correction


def elbo_softmax(denoiser: TabularDenoiser, tau: float, x0: Sequence) -> SoftmaxElboParts:
    """Lower bound for the soft-greedy planned sampler at temperature ``tau``.

    The reference chain and the draw expectation in the correction term are
    both enumerated exactly.  Normalizers are handled in log space, so very
    small and very large temperatures are safe.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    _require_clean(x0, denoiser.vocab)
    check_budget(denoiser.vocab, len(x0))
    length = len(x0)
    vocab = denoiser.vocab
    planner = SoftGreedyPlanner(tau)
    marginals = reference_chain_marginals(x0, denoiser, planner)

    recon = 0.0
    correction = 0.0
    for k in range(length):
        for x, px in marginals[k].items():
            if px == 0.0:
                continue
            masked = masked_positions(x, vocab)
            n = len(masked)
            prob_map = denoiser.masked_probs(x)
            log_rows = np.log(np.stack([prob_map[i] for i in masked], axis=0))  # (n, d-1)
            true_digits = np.array([x0[i] - 1 for i in masked])
            log_conf_true = log_rows[np.arange(n), true_digits]
            weights = np.exp(log_conf_true / tau - logsumexp(log_conf_true / tau))
            recon += px * float(weights @ log_conf_true)

            # correction: E over the full draw of sum_i w_i * (log C(x0) - log C(z pinned at i))
            log_norm_true = float(logsumexp(log_conf_true / tau))
            combos = np.array(list(itertools.product(range(vocab.n_clean), repeat=n)), dtype=np.intp)
            log_conf = log_rows[np.arange(n)[None, :], combos]  # (n_z, n)
            draw_weights = np.exp(log_conf.sum(axis=1))
            for a in range(n):
                modified = log_conf.copy()
                modified[:, a] = log_conf_true[a]
                log_norm_z = logsumexp(modified / tau, axis=1)
                correction += px * float(weights[a]) * float(draw_weights @ (log_norm_true - log_norm_z))
    return SoftmaxElboParts(recon, correction)


# ---------------------------------------------------------------------------
# parallel top-k sampler bound


def p2_reference_path(
    denoiser: TabularDenoiser, x0: Sequence, eta: float
) -> list[tuple[Sequence, tuple[int, ...]]]:
    """Deterministic committed-set recursion toward ``x0``: at each step the
    top-(k+1) positions by the clean sequence's scores are held.  Returns
    (state, committed set) per step."""
    _require_clean(x0, denoiser.vocab)
    length = len(x0)
    x = all_masked(denoiser.vocab, length)
    out = []
    for k in range(length):
        committed = plan_p2_topk(x0, x, denoiser, eta, k + 1)
        out.append((x, committed))
        x = mask_out(x0, [i for i in range(length) if i not in committed], denoiser.vocab)
    return out


def elbo_p2_topk(denoiser: TabularDenoiser, eta: float, x0: Sequence) -> float:
    """Log-confidence sum over the masked positions of every state along the
    deterministic committed-set path; valid for any eta >= 0."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    check_budget_parallel(denoiser.vocab, len(x0))
    total = 0.0
    for x, _ in p2_reference_path(denoiser, x0, eta):
        total += sum(denoiser.log_prob(x, i, x0[i]) for i in masked_positions(x, denoiser.vocab))
    return total


# ---------------------------------------------------------------------------
# masking-schedule identity


@dataclass(frozen=True)
class MaskingSchedule:
    """Mask-survival schedule alpha on [0, 1] with alpha(0)=1, alpha(1)=0,
    plus its derivative."""

    alpha: Callable[[float], float]
    alpha_prime: Callable[[float], float]
    name: str = "custom"


def linear_schedule() -> MaskingSchedule:
    return MaskingSchedule(lambda s: 1.0 - s, lambda s: -1.0, name="linear")


@dataclass(frozen=True)
class BetaIdentityResult:
    lhs: float
    rhs: float
    quadrature_error: float

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)


def beta_identity_check(
    length: int, k: int, schedule: MaskingSchedule | None = None
) -> BetaIdentityResult:
    """Quadrature check that the schedule-dependent weight of the k-masks
    stratum integrates to 1/(k*C(L,k)) regardless of the schedule.

    With u(t) = 1 - alpha(1-t), the integrand beta_t * u^k * (1-u)^(L-k)
    equals -alpha'(1-t) * u^(k-1) * (1-u)^(L-k), which is smooth at u -> 0;
    the latter form is integrated.
    """
    if not 1 <= k <= length:
        raise ValueError(f"k={k} outside 1..{length}")
    if schedule is None:
        schedule = linear_schedule()
    if abs(schedule.alpha(0.0) - 1.0) > 1e-12 or abs(schedule.alpha(1.0)) > 1e-12:
        raise ValueError(f"schedule {schedule.name!r} must have alpha(0)=1 and alpha(1)=0")

    def integrand(t: float) -> float:
        u = 1.0 - schedule.alpha(1.0 - t)
        return -schedule.alpha_prime(1.0 - t) * u ** (k - 1) * (1.0 - u) ** (length - k)

    value, err = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    rhs = 1.0 / (k * math.comb(length, k))
    return BetaIdentityResult(value, rhs, err)


# ---------------------------------------------------------------------------
# worked two-position example: greedy log-marginal below the vanilla bound


_CANONICAL_CONSTANTS = {"c1": 0.25, "c2": 0.5, "c3": 0.25, "c4": 0.3, "c5": 0.5, "c6": 0.3}


def mismatch_example_denoiser(constants: dict[str, float] | None = None) -> TabularDenoiser:
    """Two-position, two-clean-token denoiser parameterized by six
    probabilities of the first clean token, one per (state, position):

    c1, c2: both-masked state, positions 0 and 1;
    c3, c4: second position holds token 1 / token 2, predicting position 0;
    c5, c6: first position holds token 1 / token 2, predicting position 1.
    """
    c = dict(_CANONICAL_CONSTANTS)
    if constants:
        unknown = set(constants) - set(c)
        if unknown:
            raise ValueError(f"unknown constants {sorted(unknown)}")
        c.update(constants)
    for name, value in c.items():
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name}={value} outside (0, 1)")
    vocab = Vocab(3)
    m = vocab.mask
    table = {
        ((m, m), 0): [c["c1"], 1 - c["c1"]],
        ((m, m), 1): [c["c2"], 1 - c["c2"]],
        ((m, 1), 0): [c["c3"], 1 - c["c3"]],
        ((m, 2), 0): [c["c4"], 1 - c["c4"]],
        ((1, m), 1): [c["c5"], 1 - c["c5"]],
        ((2, m), 1): [c["c6"], 1 - c["c6"]],
    }
    return TabularDenoiser.from_table(vocab, 2, table)


@dataclass(frozen=True)
class GreedyMismatchReport:
    """Exact quantities for the two-position greedy-vs-vanilla-bound example.

    ``documented_hand_value`` is the value c2*c3*(1-c1) quoted for the
    greedy sampler's probability of (1,1) in the source derivation;
    ``greedy_terminal_prob`` is the enumerated value.  The two disagree at
    the canonical constants: the hand derivation evaluates the probability
    of committing position 0 where the probability of committing position 1
    is required, and the enumerated value is c1*c2*c3 instead.
    """

    constants: dict[str, float]
    uniform_bound: float
    exp_uniform_bound: float
    greedy_terminal_prob: float
    log_greedy_terminal_prob: float
    documented_hand_value: float
    proof_lhs: float
    proof_rhs: float
    selection_prob_pos0_first: float
    selection_prob_pos1_first: float
    bound_exceeds_log_marginal: bool
    gap: float

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["constants"] = dict(self.constants)
        return out


def greedy_mismatch_counterexample(
    constants: dict[str, float] | None = None, check: bool = True
) -> GreedyMismatchReport:
    """Evaluate the two-position example exactly: the vanilla bound at (1,1),
    the greedy sampler's exact probability of (1,1), both effective
    selection probabilities, and the derivation's two proof-side constants.

    With the canonical constants the vanilla bound strictly exceeds the
    greedy log-marginal; ``check=True`` asserts that.  Pass perturbed
    constants (and check=False) to just report the recomputed direction.
    """
    denoiser = mismatch_example_denoiser(constants)
    c = dict(_CANONICAL_CONSTANTS)
    if constants:
        c.update(constants)
    target = (1, 1)

    uniform_bound = elbo_uniform_permutation_form(denoiser, target)
    dist = exact_terminal_distribution(denoiser, GreedyPlanner(), 2)
    p_greedy = dist.marginal.get(target, 0.0)
    both_masked = (denoiser.vocab.mask, denoiser.vocab.mask)
    sel0 = effective_planner_F(denoiser, GreedyPlanner(), both_masked, 1, 0)
    sel1 = effective_planner_F(denoiser, GreedyPlanner(), both_masked, 1, 1)
    log_p = math.log(p_greedy) if p_greedy > 0 else -math.inf
    holds = uniform_bound > log_p

    report = GreedyMismatchReport(
        constants=c,
        uniform_bound=uniform_bound,
        exp_uniform_bound=math.exp(uniform_bound),
        greedy_terminal_prob=p_greedy,
        log_greedy_terminal_prob=log_p,
        documented_hand_value=c["c2"] * c["c3"] * (1 - c["c1"]),
        proof_lhs=(1 - c["c1"]) ** 2 * c["c2"] * c["c3"],
        proof_rhs=c["c1"] * c["c5"],
        selection_prob_pos0_first=sel0,
        selection_prob_pos1_first=sel1,
        bound_exceeds_log_marginal=holds,
        gap=uniform_bound - log_p,
    )
    if check:
        assert holds, f"expected the vanilla bound to exceed the greedy log-marginal, got {report}"
    return report
