"""Losses, analytic gradients, and the SGD loop for tabular denoisers.

Three objectives share one weighted cross-entropy core: the vanilla loss
(every masked position weighted 1/N_M), the planner-augmented loss (the
vanilla weight scaled by 1 + alpha * planner weight, weights detached by
default), and the pure planner-weighted loss kept as an instability
diagnostic.  Because all three run through the same accumulation order,
alpha = 0 reproduces the vanilla loss and gradients bit for bit, not just
to rounding.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .chains import compose_marginals, kl_categorical, planned_kernel, vanilla_kernel
from .core import (
    Sequence,
    TabularDenoiser,
    Vocab,
    all_masked,
    is_clean,
    mask_out,
    masked_positions,
    state_id,
)
from .elbo import elbo_uniform_timestep_form, p_elbo
from .planners import GreedyPlanner, SoftGreedyPlanner, plan_soft_greedy

BatchItem = tuple[Sequence, int, Sequence]  # (x0, k unmasked, partially masked x_k)

LOSS_KINDS = ("vanilla", "papl", "pure")


class TrainingDivergence(RuntimeError):
    """Raised when the loss stops being finite mid-run."""


@dataclass(frozen=True)
class DataDistribution:
    """Finite distribution over clean sequences."""

    vocab: Vocab
    length: int
    support: tuple[Sequence, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support and probs must be nonempty and aligned")
        for x in self.support:
            self.vocab.check_sequence(x)
            if len(x) != self.length or not is_clean(x, self.vocab):
                raise ValueError(f"{x} is not a clean length-{self.length} sequence")
        if len(set(self.support)) != len(self.support):
            raise ValueError("duplicate support points")
        if any(p <= 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probs must be positive and sum to 1")

    def as_dict(self) -> dict[Sequence, float]:
        return dict(zip(self.support, self.probs))

    def sample(self, rng: np.random.Generator) -> Sequence:
        return self.support[rng.choice(len(self.support), p=self.probs)]


def three_mode_toy() -> DataDistribution:
    """Fixed three-mode target used by the training-comparison study."""
    return DataDistribution(
        vocab=Vocab(4),
        length=4,
        support=((1, 1, 2, 2), (2, 3, 1, 3), (3, 2, 3, 1)),
        probs=(0.5, 0.3, 0.2),
    )


def sample_batch(
    p_data: DataDistribution, rng: np.random.Generator, batch_size: int
) -> list[BatchItem]:
    """Draw (x0, k, x_k) triples: x0 from the data, k uniform on 0..L-1, and
    x_k equal to x0 with a uniformly chosen set of L-k coordinates masked."""
    length = p_data.length
    batch = []
    for _ in range(batch_size):
        x0 = p_data.sample(rng)
        k = int(rng.integers(length))
        hidden = rng.choice(length, size=length - k, replace=False)
        batch.append((x0, k, mask_out(x0, hidden.tolist(), p_data.vocab)))
    return batch


def _check_item(x0: Sequence, k: int, x_k: Sequence, vocab: Vocab) -> tuple[int, ...]:
    masked = masked_positions(x_k, vocab)
    if len(masked) != len(x0) - k:
        raise ValueError(f"x_k has {len(masked)} masks, expected {len(x0) - k}")
    for i, tok in enumerate(x_k):
        if tok != vocab.mask and tok != x0[i]:
            raise ValueError(f"x_k disagrees with x0 at unmasked position {i}: {x_k} vs {x0}")
    return masked


def _loss_and_grad(
    denoiser: TabularDenoiser,
    batch: list[BatchItem],
    kind: str,
    alpha: float,
    tau: float,
    detach_weights: bool,
    want_grad: bool,
):
    """Shared weighted cross-entropy core.

    Loss coefficient per masked position i: vanilla 1/N_M; papl
    (1 + alpha*w_i)/N_M; pure w_i — with w the soft-greedy planner weights
    at the clean sequence.  With detached weights the gradient at a touched
    (state, position) logit row is coefficient * (softmax - onehot); the
    non-detached variant adds the weight-path term
    scale * w_i * (logconf_i - sum_j w_j logconf_j) / tau to the coefficient
    (scale is alpha/N_M for papl, 1 for pure).
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    if kind == "papl" and alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if kind != "vanilla" and tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not batch:
        raise ValueError("empty batch")

    vocab = denoiser.vocab
    inv_b = 1.0 / len(batch)
    loss = 0.0
    grads: dict[tuple[int, int], np.ndarray] = {}
    for x0, k, x_k in batch:
        masked = _check_item(x0, k, x_k, vocab)
        sid = state_id(x_k, vocab)
        inv_n = 1.0 / len(masked)
        if kind == "vanilla":
            weights = None
        else:
            weights = plan_soft_greedy(x0, x_k, denoiser, tau)
        log_conf = {i: denoiser.log_prob(x_k, i, x0[i]) for i in masked}

        coefs = {}
        for i in masked:
            if kind == "vanilla":
                coefs[i] = inv_n
            elif kind == "papl":
                coefs[i] = float(inv_n * (1.0 + alpha * weights[i]))
            else:
                coefs[i] = float(weights[i])
        for i in masked:
            loss -= inv_b * coefs[i] * log_conf[i]

        if not want_grad:
            continue
        grad_coefs = dict(coefs)
        if kind != "vanilla" and not detach_weights:
            mean_log_conf = float(sum(weights[i] * log_conf[i] for i in masked))
            scale = alpha * inv_n if kind == "papl" else 1.0
            for i in masked:
                grad_coefs[i] += float(scale * weights[i] * (log_conf[i] - mean_log_conf) / tau)
        for i in masked:
            probs = softmax(denoiser.logits[sid, i])
            g = probs.copy()
            g[x0[i] - 1] -= 1.0
            g *= inv_b * grad_coefs[i]
            key = (sid, i)
            if key in grads:
                grads[key] += g
            else:
                grads[key] = g
    return loss, grads


def loss_vanilla(denoiser: TabularDenoiser, batch: list[BatchItem]) -> float:
    loss, _ = _loss_and_grad(denoiser, batch, "vanilla", 0.0, 1.0, True, want_grad=False)
    return loss


def loss_papl(denoiser: TabularDenoiser, batch: list[BatchItem], alpha: float, tau: float) -> float:
    loss, _ = _loss_and_grad(denoiser, batch, "papl", alpha, tau, True, want_grad=False)
    return loss


def loss_pure_planner(denoiser: TabularDenoiser, batch: list[BatchItem], tau: float) -> float:
    loss, _ = _loss_and_grad(denoiser, batch, "pure", 0.0, tau, True, want_grad=False)
    return loss


def grad_analytic(
    denoiser: TabularDenoiser,
    batch: list[BatchItem],
    kind: str,
    alpha: float = 0.0,
    tau: float = 1.0,
    detach_weights: bool = True,
) -> tuple[float, dict[tuple[int, int], np.ndarray]]:
    """Loss and its exact gradient over the touched logit rows, keyed by
    (state id, position)."""
    return _loss_and_grad(denoiser, batch, kind, alpha, tau, detach_weights, want_grad=True)


def grad_norm(grads: dict[tuple[int, int], np.ndarray]) -> float:
    return math.sqrt(sum(float(np.dot(g, g)) for g in grads.values()))


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "vanilla"
    alpha: float = 0.0
    tau_train: float = 1.0
    detach_planner_weights: bool = True
    learning_rate: float = 0.5
    steps: int = 400
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 50
    eval_planner_tau: float = 1.0  # temperature of the planner used in the eval bound
    loss_window: int = 50

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.alpha < 0 or self.tau_train <= 0 or self.eval_planner_tau <= 0:
            raise ValueError("alpha must be >= 0 and temperatures > 0")
        if min(self.learning_rate, self.steps, self.batch_size, self.eval_every) <= 0:
            raise ValueError("learning_rate, steps, batch_size, eval_every must be positive")


@dataclass(frozen=True)
class TrainMetrics:
    step: int
    loss: float
    kl_uniform: float
    kl_greedy: float
    elbo_uniform: float
    p_elbo: float
    grad_norm: float
    loss_var: float


@dataclass
class TrainResult:
    denoiser: TabularDenoiser
    history: list[TrainMetrics]


def _eval_metrics(
    denoiser: TabularDenoiser, p_data: DataDistribution, config: TrainConfig
) -> tuple[float, float, float, float]:
    start = all_masked(p_data.vocab, p_data.length)
    target = p_data.as_dict()
    uniform_terminal = compose_marginals(vanilla_kernel(denoiser), start, p_data.length)
    greedy_terminal = compose_marginals(
        planned_kernel(denoiser, GreedyPlanner()), start, p_data.length
    )
    kl_uniform = kl_categorical(target, uniform_terminal)
    kl_greedy = kl_categorical(target, greedy_terminal)
    planner = SoftGreedyPlanner(config.eval_planner_tau)
    elbo = sum(p * elbo_uniform_timestep_form(denoiser, x0) for x0, p in target.items())
    planned_elbo = sum(p * p_elbo(denoiser, planner, x0).total for x0, p in target.items())
    return kl_uniform, kl_greedy, elbo, planned_elbo


def train(
    denoiser: TabularDenoiser, p_data: DataDistribution, config: TrainConfig
) -> TrainResult:
    """Plain SGD on the configured loss.

    Batches are drawn with replacement; the mask pattern of each item is
    uniform over the subsets of the right size regardless of the planner.
    Metrics (with exact terminal KLs under the vanilla and greedy samplers)
    are recorded every ``eval_every`` steps and at the final step.  A
    non-finite loss aborts the run.
    """
    if (denoiser.vocab, denoiser.length) != (p_data.vocab, p_data.length):
        raise ValueError("denoiser and data disagree on vocab or length")
    current = denoiser.copy()
    rng = np.random.Generator(np.random.Philox(config.seed))
    recent = deque(maxlen=config.loss_window)
    history: list[TrainMetrics] = []
    for step in range(1, config.steps + 1):
        batch = sample_batch(p_data, rng, config.batch_size)
        loss, grads = grad_analytic(
            current,
            batch,
            config.loss_kind,
            alpha=config.alpha,
            tau=config.tau_train,
            detach_weights=config.detach_planner_weights,
        )
        if not math.isfinite(loss):
            raise TrainingDivergence(
                f"loss {loss!r} at step {step} under {config.loss_kind} "
                f"(alpha={config.alpha}, tau={config.tau_train})"
            )
        for (sid, pos), g in grads.items():
            current.logits[sid, pos] -= config.learning_rate * g
        recent.append(loss)
        if step % config.eval_every == 0 or step == config.steps:
            kl_u, kl_g, elbo_u, elbo_p = _eval_metrics(current, p_data, config)
            history.append(
                TrainMetrics(
                    step=step,
                    loss=loss,
                    kl_uniform=kl_u,
                    kl_greedy=kl_g,
                    elbo_uniform=elbo_u,
                    p_elbo=elbo_p,
                    grad_norm=grad_norm(grads),
                    loss_var=float(np.var(recent)),
                )
            )
    return TrainResult(current, history)


def write_metrics_csv(history: list[TrainMetrics], path: "str | Path") -> None:
    """One row per eval point; floats are written with full repr precision so
    byte-identical runs produce byte-identical files."""
    names = [f.name for f in fields(TrainMetrics)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in history:
            writer.writerow([repr(getattr(row, name)) for name in names])
