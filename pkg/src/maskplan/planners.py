"""Position and set planners, and their effective selection probabilities.

A position planner maps (draw z, current state x) to a distribution over
positions that puts no mass on unmasked coordinates.  A set planner (the
parallel top-k family) maps (z, x, target size) to a committed index set.

The "effective" selection probability of committing position ``i`` with
token ``y`` is the planner probability averaged over the denoiser draw at
the other masked coordinates, with the draw at ``i`` pinned to ``y``.  It is
what turns a planner into a Markov transition kernel on states.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .core import Sequence, TabularDenoiser, masked_positions


# ---------------------------------------------------------------------------
# position planners


def plan_uniform(x: Sequence, vocab) -> np.ndarray:
    """Uniform distribution over the masked positions of ``x``."""
    out = np.zeros(len(x))
    masked = masked_positions(x, vocab)
    if not masked:
        raise ValueError("no masked position to plan for")
    out[list(masked)] = 1.0 / len(masked)
    return out


def greedy_pick(z: Sequence, x: Sequence, denoiser: TabularDenoiser) -> int:
    """Masked position with the largest confidence ``Cat(z^j; D^j(x))``.

    Ties break to the lowest index.
    """
    best_j = -1
    best_conf = -1.0
    for j, tok in enumerate(x):
        if tok != denoiser.vocab.mask:
            continue
        conf = denoiser.prob(x, j, z[j])
        if conf > best_conf:
            best_conf = conf
            best_j = j
    if best_j < 0:
        raise ValueError("no masked position to plan for")
    return best_j


def plan_greedy(z: Sequence, x: Sequence, denoiser: TabularDenoiser) -> np.ndarray:
    """Point mass on the argmax-confidence masked position."""
    out = np.zeros(len(x))
    out[greedy_pick(z, x, denoiser)] = 1.0
    return out


def plan_soft_greedy(z: Sequence, x: Sequence, denoiser: TabularDenoiser, tau: float) -> np.ndarray:
    """Masked positions weighted proportionally to confidence^(1/tau).

    Computed in log space, so both tau -> 0 (greedy, up to ties) and
    tau -> inf (uniform) limits are numerically exact.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    masked = masked_positions(x, denoiser.vocab)
    if not masked:
        raise ValueError("no masked position to plan for")
    log_conf = np.array([denoiser.log_prob(x, j, z[j]) for j in masked])
    weights = softmax(log_conf / tau)
    out = np.zeros(len(x))
    out[list(masked)] = weights
    return out


def log_confidence_normalizer(z: Sequence, x: Sequence, denoiser: TabularDenoiser, tau: float) -> float:
    """log of the soft-greedy normalizer: logsumexp of confidence/tau over
    the masked positions of ``x``."""
    masked = masked_positions(x, denoiser.vocab)
    if not masked:
        raise ValueError("no masked position to plan for")
    log_conf = np.array([denoiser.log_prob(x, j, z[j]) for j in masked])
    return float(logsumexp(log_conf / tau))


@dataclass(frozen=True)
class UniformPlanner:
    """Ignores the draw entirely; every masked slot is equally likely."""

    z_independent = True

    @property
    def name(self) -> str:
        return "uniform"

    def distribution(self, z, x: Sequence, denoiser: TabularDenoiser) -> np.ndarray:
        return plan_uniform(x, denoiser.vocab)


@dataclass(frozen=True)
class GreedyPlanner:
    z_independent = False

    @property
    def name(self) -> str:
        return "greedy"

    def distribution(self, z: Sequence, x: Sequence, denoiser: TabularDenoiser) -> np.ndarray:
        return plan_greedy(z, x, denoiser)


@dataclass(frozen=True)
class SoftGreedyPlanner:
    tau: float
    z_independent = False

    @property
    def name(self) -> str:
        return f"soft-greedy(tau={self.tau:g})"

    def distribution(self, z: Sequence, x: Sequence, denoiser: TabularDenoiser) -> np.ndarray:
        return plan_soft_greedy(z, x, denoiser, self.tau)


PositionPlanner = UniformPlanner | GreedyPlanner | SoftGreedyPlanner


def position_planner(kind: str, tau: float | None = None) -> PositionPlanner:
    """Factory used by the command line: 'uniform', 'greedy' or 'soft'."""
    if kind == "uniform":
        return UniformPlanner()
    if kind == "greedy":
        return GreedyPlanner()
    if kind == "soft":
        if tau is None:
            raise ValueError("soft planner needs a temperature")
        return SoftGreedyPlanner(tau)
    raise ValueError(f"unknown planner kind {kind!r}")


# ---------------------------------------------------------------------------
# parallel top-k set planner


def p2_scores(z: Sequence, x: Sequence, denoiser: TabularDenoiser, eta: float) -> np.ndarray:
    """Per-position commit scores: eta * confidence at masked positions,
    agreement indicator at held ones."""
    mask = denoiser.vocab.mask
    scores = np.empty(len(x))
    for i, tok in enumerate(x):
        if tok == mask:
            scores[i] = eta * denoiser.prob(x, i, z[i])
        else:
            scores[i] = 1.0 if z[i] == tok else 0.0
    return scores


def plan_p2_topk(z: Sequence, x: Sequence, denoiser: TabularDenoiser, eta: float, size: int) -> tuple[int, ...]:
    """Indices of the ``size`` largest commit scores, ties to lower index.

    Returned sorted by position.
    """
    if not 1 <= size <= len(x):
        raise ValueError(f"committed-set size {size} outside 1..{len(x)}")
    scores = p2_scores(z, x, denoiser, eta)
    order = sorted(range(len(x)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[:size]))


@dataclass(frozen=True)
class P2TopKPlanner:
    """Parallel planner committing the top-``k`` positions by score.

    ``eta`` rescales masked-position confidences against the held-position
    agreement score of 1.  With the point-mass convention the redrawn token
    at a held position always agrees, so remasking can only trigger when
    eta * confidence exceeds 1, i.e. for eta > 1.  The eta-free
    confidence-everywhere variant is identical to eta = 1 under the same
    convention; use :func:`rdm_planner` for that reading.
    """

    eta: float
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or f"p2-topk(eta={self.eta:g})"

    def select(self, z: Sequence, x: Sequence, denoiser: TabularDenoiser, size: int) -> tuple[int, ...]:
        return plan_p2_topk(z, x, denoiser, self.eta, size)


def rdm_planner() -> P2TopKPlanner:
    """Confidence-everywhere top-k planner (no eta knob)."""
    return P2TopKPlanner(eta=1.0, label="rdm")


# ---------------------------------------------------------------------------
# effective selection probabilities


def effective_planner_F(
    denoiser: TabularDenoiser,
    planner: PositionPlanner,
    x: Sequence,
    token: int,
    i: int,
    mode: str = "exact",
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Probability that the planner commits position ``i`` when the draw at
    ``i`` is pinned to ``token``, averaged over the draw elsewhere.

    ``mode='exact'`` enumerates the (d-1)^(k-1) draws at the other masked
    coordinates; ``mode='mc'`` averages over ``n_samples`` draws instead.
    """
    vocab = denoiser.vocab
    if x[i] != vocab.mask:
        raise ValueError(f"position {i} of {x} is not masked")
    if planner.z_independent:
        return float(planner.distribution(None, x, denoiser)[i])

    free = [j for j in masked_positions(x, vocab) if j != i]
    if mode == "exact":
        total = 0.0
        for toks in itertools.product(vocab.clean_tokens, repeat=len(free)):
            z = list(x)
            z[i] = token
            weight = 1.0
            for j, tok in zip(free, toks):
                z[j] = tok
                weight *= denoiser.prob(x, j, tok)
            total += weight * planner.distribution(tuple(z), x, denoiser)[i]
        return total
    if mode == "mc":
        if rng is None:
            raise ValueError("mc mode needs an rng")
        probs = denoiser.masked_probs(x)
        total = 0.0
        for _ in range(n_samples):
            z = list(x)
            z[i] = token
            for j in free:
                z[j] = 1 + rng.choice(vocab.n_clean, p=probs[j])
            total += planner.distribution(tuple(z), x, denoiser)[i]
        return total / n_samples
    raise ValueError(f"unknown mode {mode!r}")


def effective_planner_table(
    denoiser: TabularDenoiser, planner: PositionPlanner, x: Sequence
) -> tuple[tuple[int, ...], np.ndarray]:
    """Effective selection probabilities for every (masked slot, token) pair.

    Returns the masked positions of ``x`` and an array ``F`` of shape
    ``(n_masked, d-1)`` with ``F[a, t-1]`` the probability of committing
    position ``masked[a]`` given its draw is pinned to token ``t``.  The
    greedy and soft-greedy cases enumerate all draws in one vectorized pass;
    other planners fall back to per-entry exact evaluation.  The full draw is
    enumerated including the pinned coordinate, which marginalizes out
    exactly because the pin overwrites it.
    """
    vocab = denoiser.vocab
    masked = masked_positions(x, vocab)
    k = len(masked)
    if k == 0:
        raise ValueError("state has no masked position")
    n_clean = vocab.n_clean

    if planner.z_independent:
        table = np.full((k, n_clean), 1.0 / k)
        return masked, table

    if not isinstance(planner, (GreedyPlanner, SoftGreedyPlanner)):
        table = np.empty((k, n_clean))
        for a, pos in enumerate(masked):
            for tok in vocab.clean_tokens:
                table[a, tok - 1] = effective_planner_F(denoiser, planner, x, tok, pos)
        return masked, table

    probs = denoiser.masked_probs(x)
    prob_cols = np.stack([probs[pos] for pos in masked], axis=1)  # (d-1, k)
    combos = np.array(list(itertools.product(range(n_clean), repeat=k)), dtype=np.intp)
    conf = prob_cols[combos, np.arange(k)]  # (n_z, k)
    weights = conf.prod(axis=1)

    table = np.empty((k, n_clean))
    if isinstance(planner, GreedyPlanner):
        for a in range(k):
            modified = conf.copy()
            for g in range(n_clean):
                modified[:, a] = prob_cols[g, a]
                picks = np.argmax(modified, axis=1)
                table[a, g] = weights[picks == a].sum()
    else:
        log_conf = np.log(conf)
        log_prob_cols = np.log(prob_cols)
        for a in range(k):
            modified = log_conf.copy()
            for g in range(n_clean):
                modified[:, a] = log_prob_cols[g, a]
                soft = softmax(modified / planner.tau, axis=1)
                table[a, g] = weights @ soft[:, a]
    return masked, table


def effective_set_planner_F(
    denoiser: TabularDenoiser,
    planner: P2TopKPlanner,
    x: Sequence,
    y: Sequence,
) -> float:
    """Probability that the top-k planner commits exactly the held set of
    ``y`` when the draw is pinned to ``y`` on that set.

    The draw at masked coordinates of ``x`` outside the committed set is
    enumerated exactly; held coordinates of ``x`` follow the point-mass
    convention.
    """
    vocab = denoiser.vocab
    committed = tuple(i for i, tok in enumerate(y) if tok != vocab.mask)
    size = len(committed)
    free = [j for j in masked_positions(x, vocab) if j not in committed]
    total = 0.0
    for toks in itertools.product(vocab.clean_tokens, repeat=len(free)):
        z = list(x)  # held coordinates of x stay put (point-mass draw)
        weight = 1.0
        for j, tok in zip(free, toks):
            z[j] = tok
            weight *= denoiser.prob(x, j, tok)
        for i in committed:
            z[i] = y[i]
        if planner.select(tuple(z), x, denoiser, size) == committed:
            total += weight
    return total
