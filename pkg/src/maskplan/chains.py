"""Exact finite-chain machinery.

Transition kernels are callables ``kernel(state, step) -> dict`` mapping a
state and a 0-based step index to the successor distribution (only positive
probabilities are listed).  The unmasking chains here have a fixed horizon:
``L`` steps from the all-mask state to a clean sequence.

Terminal distributions are computed two independent ways: per-path products
keyed by (terminal, unmask order), and step-kernel composition of marginals.
Tests cross-check them; callers that only need marginals should prefer the
composition route, which is much cheaper.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np

from .core import (
    Sequence,
    TabularDenoiser,
    all_masked,
    apply_token,
    is_clean,
    mask_out,
    masked_positions,
)
from .planners import (
    P2TopKPlanner,
    PositionPlanner,
    effective_planner_table,
    effective_set_planner_F,
    plan_p2_topk,
)

State = Hashable
Kernel = Callable[[State, int], Mapping[State, float]]

_ROW_SUM_TOL = 1e-10
_PATH_MASS_TOL = 1e-9


# ---------------------------------------------------------------------------
# divergences


def kl_categorical(p: "Mapping | np.ndarray", q: "Mapping | np.ndarray") -> float:
    """KL(p || q) for categoricals given as dicts or aligned arrays.

    Returns +inf when p puts mass outside q's support.  Both arguments must
    be normalized within 1e-9.
    """
    if isinstance(p, Mapping) != isinstance(q, Mapping):
        raise TypeError("p and q must both be mappings or both arrays")
    if isinstance(p, Mapping):
        keys = set(p) | set(q)
        pv = np.array([p.get(k, 0.0) for k in keys])
        qv = np.array([q.get(k, 0.0) for k in keys])
    else:
        pv = np.asarray(p, dtype=np.float64)
        qv = np.asarray(q, dtype=np.float64)
        if pv.shape != qv.shape:
            raise ValueError(f"shape mismatch {pv.shape} vs {qv.shape}")
    for name, v in (("p", pv), ("q", qv)):
        if (v < 0).any():
            raise ValueError(f"{name} has negative entries")
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {v.sum()!r}, not 1")
    live = pv > 0
    if (qv[live] == 0).any():
        return math.inf
    return float(np.sum(pv[live] * (np.log(pv[live]) - np.log(qv[live]))))


@dataclass(frozen=True)
class PathKLResult:
    """Joint path KL value; ``violation`` names the first (step, state,
    successor) where the reference moves outside the model's support."""

    value: float
    violation: tuple[int, State, State] | None = None


def _as_distribution(start: "State | Mapping[State, float]") -> dict:
    if isinstance(start, Mapping):
        return dict(start)
    return {start: 1.0}


def path_kl(reference: Kernel, model: Kernel, start, n_steps: int) -> PathKLResult:
    """KL between the two chains' path laws from a shared start.

    Enumerates the reference chain's path support and sums
    ``R(path) * log(R(path) / Q(path))`` directly.
    """
    total = 0.0

    def walk(x, step: int, prob: float, log_ratio: float):
        nonlocal total
        if step == n_steps:
            total += prob * log_ratio
            return None
        r_row = reference(x, step)
        q_row = model(x, step)
        for y, r in r_row.items():
            if r == 0.0:
                continue
            q = q_row.get(y, 0.0)
            if q == 0.0:
                return (step, x, y)
            bad = walk(y, step + 1, prob * r, log_ratio + math.log(r) - math.log(q))
            if bad is not None:
                return bad
        return None

    for x, p0 in _as_distribution(start).items():
        if p0 == 0.0:
            continue
        bad = walk(x, 0, p0, 0.0)
        if bad is not None:
            return PathKLResult(math.inf, bad)
    return PathKLResult(total)


def path_kl_chain_rule(reference: Kernel, model: Kernel, start, n_steps: int) -> PathKLResult:
    """Same divergence as :func:`path_kl`, via the chain rule: the sum over
    steps of the reference-marginal-weighted conditional KLs.  Kept as an
    independent route for cross-checking."""
    dist = _as_distribution(start)
    total = 0.0
    for step in range(n_steps):
        nxt: dict = {}
        for x, px in dist.items():
            if px == 0.0:
                continue
            r_row = reference(x, step)
            q_row = model(x, step)
            for y, r in r_row.items():
                if r == 0.0:
                    continue
                q = q_row.get(y, 0.0)
                if q == 0.0:
                    return PathKLResult(math.inf, (step, x, y))
                total += px * r * (math.log(r) - math.log(q))
                nxt[y] = nxt.get(y, 0.0) + px * r
        dist = nxt
    return PathKLResult(total)


def compose_marginals(kernel: Kernel, start, n_steps: int) -> dict:
    """Push the start distribution through ``n_steps`` kernel applications.

    States are visited in sorted order so the float accumulation order does
    not depend on dict insertion history.
    """
    dist = _as_distribution(start)
    for step in range(n_steps):
        nxt: dict = {}
        for x in sorted(dist):
            px = dist[x]
            if px == 0.0:
                continue
            for y, p in kernel(x, step).items():
                nxt[y] = nxt.get(y, 0.0) + px * p
        dist = nxt
    return dist


# ---------------------------------------------------------------------------
# unmasking kernels


def _check_row(row: Mapping, x) -> Mapping:
    total = sum(row.values())
    assert abs(total - 1.0) <= _ROW_SUM_TOL, f"kernel row at {x} sums to {total!r}"
    return row


def vanilla_kernel(denoiser: TabularDenoiser) -> Kernel:
    """Uniform position choice, then the denoiser's token draw there."""

    def kernel(x: Sequence, step: int) -> dict[Sequence, float]:
        probs = denoiser.masked_probs(x)
        if not probs:
            raise ValueError(f"state {x} has no masked position")
        w = 1.0 / len(probs)
        row = {}
        for i, p in probs.items():
            for tok in denoiser.vocab.clean_tokens:
                if p[tok - 1] > 0.0:
                    row[apply_token(x, i, tok)] = w * p[tok - 1]
        return _check_row(row, x)

    return kernel


def planned_kernel(denoiser: TabularDenoiser, planner: PositionPlanner) -> Kernel:
    """Token draw times the planner's effective selection probability.

    Effective-selection tables are memoized per state for the lifetime of
    the returned kernel.
    """
    tables: dict[Sequence, tuple] = {}

    def kernel(x: Sequence, step: int) -> dict[Sequence, float]:
        if x not in tables:
            masked, f_table = effective_planner_table(denoiser, planner, x)
            prob_map = denoiser.masked_probs(x)
            tables[x] = (masked, f_table, prob_map)
        masked, f_table, prob_map = tables[x]
        row = {}
        for a, i in enumerate(masked):
            for tok in denoiser.vocab.clean_tokens:
                p = prob_map[i][tok - 1] * f_table[a, tok - 1]
                if p > 0.0:
                    row[apply_token(x, i, tok)] = p
        return _check_row(row, x)

    return kernel


def reference_kernel(x0: Sequence, denoiser: TabularDenoiser, planner: PositionPlanner) -> Kernel:
    """Planner-guided unmasking toward the fixed clean sequence ``x0``.

    The planner is conditioned on the clean sequence itself in place of a
    denoiser draw; the revealed token is always the true one.
    """

    def kernel(x: Sequence, step: int) -> dict[Sequence, float]:
        w = planner.distribution(x0, x, denoiser)
        row = {}
        for i in masked_positions(x, denoiser.vocab):
            if w[i] > 0.0:
                row[apply_token(x, i, x0[i])] = float(w[i])
        return _check_row(row, x)

    return kernel


def p2_successors(
    denoiser: TabularDenoiser, planner: P2TopKPlanner, x: Sequence, step: int
) -> dict[Sequence, float]:
    """Successor distribution of the parallel top-k chain.

    At step ``k`` the state holds ``k`` committed positions; the successor
    commits exactly ``k + 1``, possibly remasking previously held ones.
    """
    vocab = denoiser.vocab
    length = len(x)
    held = [i for i in range(length) if x[i] != vocab.mask]
    if len(held) != step:
        raise ValueError(f"state {x} holds {len(held)} positions, expected {step}")
    size = step + 1
    row: dict[Sequence, float] = {}
    for committed in itertools.combinations(range(length), size):
        fresh = [i for i in committed if x[i] == vocab.mask]
        for toks in itertools.product(vocab.clean_tokens, repeat=len(fresh)):
            y = [vocab.mask] * length
            for i in committed:
                y[i] = x[i]
            token_prob = 1.0
            for i, tok in zip(fresh, toks):
                y[i] = tok
                token_prob *= denoiser.prob(x, i, tok)
            if token_prob == 0.0:
                continue
            y_t = tuple(y)
            p = token_prob * effective_set_planner_F(denoiser, planner, x, y_t)
            if p > 0.0:
                row[y_t] = row.get(y_t, 0.0) + p
    return row


def p2_kernel(denoiser: TabularDenoiser, planner: P2TopKPlanner) -> Kernel:
    def kernel(x: Sequence, step: int) -> dict[Sequence, float]:
        return _check_row(p2_successors(denoiser, planner, x, step), x)

    return kernel


def p2_reference_kernel(x0: Sequence, denoiser: TabularDenoiser, planner: P2TopKPlanner) -> Kernel:
    """Deterministic parallel reference path toward ``x0``: at each step the
    planner scores the clean sequence against the current state and the
    top-(k+1) set is committed."""

    def kernel(x: Sequence, step: int) -> dict[Sequence, float]:
        committed = plan_p2_topk(x0, x, denoiser, planner.eta, step + 1)
        rest = [i for i in range(len(x0)) if i not in committed]
        return {mask_out(x0, rest, denoiser.vocab): 1.0}

    return kernel


def reference_chain_marginals(
    x0: Sequence, denoiser: TabularDenoiser, planner: PositionPlanner
) -> list[dict[Sequence, float]]:
    """Marginals of the planner-guided reference chain, all-mask to ``x0``.

    Returns ``L + 1`` dicts; entry ``k`` is supported on states agreeing
    with ``x0`` that hold exactly ``k`` revealed positions.
    """
    if not is_clean(x0, denoiser.vocab):
        raise ValueError("x0 must be clean")
    kernel = reference_kernel(x0, denoiser, planner)
    dist: dict[Sequence, float] = {all_masked(denoiser.vocab, len(x0)): 1.0}
    out = [dist]
    for step in range(len(x0)):
        nxt: dict[Sequence, float] = {}
        for x in sorted(dist):
            for y, p in kernel(x, step).items():
                nxt[y] = nxt.get(y, 0.0) + dist[x] * p
        dist = nxt
        out.append(dist)
    return out


# ---------------------------------------------------------------------------
# exact terminal distributions


@dataclass(frozen=True)
class PathDistribution:
    """Exact law of a finite unmasking chain, resolved per path.

    ``paths`` maps (terminal sequence, unmask order) — or, for the parallel
    chain, (terminal, committed-set trajectory) — to its probability.
    ``marginal`` is the terminal law.
    """

    paths: dict
    marginal: dict

    def __post_init__(self):
        total = math.fsum(self.paths.values())
        assert abs(total - 1.0) <= _PATH_MASS_TOL, f"path mass {total!r}"
        for p in self.paths.values():
            assert p >= 0.0, "negative path probability"

    @property
    def total_mass(self) -> float:
        return math.fsum(self.paths.values())


def _paths_for_orders(denoiser, planner, tables, orders, length) -> list:
    vocab = denoiser.vocab
    out = []

    def tables_for(x):
        if x not in tables:
            masked, f_table = effective_planner_table(denoiser, planner, x)
            prob_map = denoiser.masked_probs(x)
            probs = np.stack([prob_map[i] for i in masked], axis=0)
            tables[x] = (masked, probs, f_table)
        return tables[x]

    for sigma in orders:
        stack = [(all_masked(vocab, length), 1.0, 0)]
        while stack:
            x, prob, step = stack.pop()
            if step == length:
                out.append((x, sigma, prob))
                continue
            masked, probs, f_table = tables_for(x)
            a = masked.index(sigma[step])
            for tok in vocab.clean_tokens:
                p = probs[a, tok - 1] * f_table[a, tok - 1]
                if p > 0.0:
                    stack.append((apply_token(x, sigma[step], tok), prob * p, step + 1))
    return out


def exact_terminal_distribution(
    denoiser: TabularDenoiser, planner: PositionPlanner, length: int, jobs: int = 1
) -> PathDistribution:
    """Brute-force path law of the planned one-position-per-step chain.

    Enumerates all ``L!`` unmask orders and all token assignments; path
    probabilities are products of token and effective-selection factors.
    Work is split over ``jobs`` threads by contiguous blocks of orders and
    merged in block order, so results are bit-identical for any ``jobs``.
    Cost grows as ``L! * (d-1)^L``; for terminal marginals only, composing
    :func:`planned_kernel` with :func:`compose_marginals` is far cheaper.
    """
    orders = list(itertools.permutations(range(length)))
    tables: dict = {}
    if jobs <= 1:
        triples = _paths_for_orders(denoiser, planner, tables, orders, length)
    else:
        chunk = -(-len(orders) // jobs)
        blocks = [orders[i : i + chunk] for i in range(0, len(orders), chunk)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(lambda b: _paths_for_orders(denoiser, planner, tables, b, length), blocks)
            )
        triples = [t for block in results for t in block]

    paths: dict = {}
    marginal: dict = {}
    for terminal, sigma, prob in triples:
        paths[(terminal, sigma)] = paths.get((terminal, sigma), 0.0) + prob
        marginal[terminal] = marginal.get(terminal, 0.0) + prob
    return PathDistribution(paths, marginal)


def exact_terminal_distribution_p2(
    denoiser: TabularDenoiser, planner: P2TopKPlanner, length: int
) -> PathDistribution:
    """Brute-force path law of the parallel top-k chain.

    Paths are keyed by the trajectory of committed index sets; several state
    paths that share a trajectory (same sets, different remasked tokens) are
    aggregated.
    """
    vocab = denoiser.vocab
    paths: dict = {}
    marginal: dict = {}

    def walk(x, step, traj, prob):
        if step == length:
            key = (x, traj)
            paths[key] = paths.get(key, 0.0) + prob
            marginal[x] = marginal.get(x, 0.0) + prob
            return
        for y, p in p2_successors(denoiser, planner, x, step).items():
            committed = tuple(i for i in range(length) if y[i] != vocab.mask)
            walk(y, step + 1, traj + (committed,), prob * p)

    walk(all_masked(vocab, length), 0, (), 1.0)
    return PathDistribution(paths, marginal)
