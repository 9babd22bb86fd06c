"""Stochastic samplers mirroring the exact kernels, plus a goodness-of-fit
harness.

All samplers are vectorized over the whole batch: sequences live in an
(n, L) token matrix, the denoiser is consulted through its dense per-state
probability table, and each step consumes a fixed-shape block of uniforms,
so runs are reproducible by seed alone.  Counter-based generators are used;
when more than one stream is configured, each stream gets a child seed and
the outputs are concatenated in stream order, which keeps results
independent of how the streams are scheduled.

Following the sampling procedure literally, a candidate draw z is taken at
every position each step; held positions "draw" from a point mass and so
keep their token.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.stats import chisquare

from .core import Sequence, TabularDenoiser, Vocab
from .planners import (
    GreedyPlanner,
    P2TopKPlanner,
    PositionPlanner,
    SoftGreedyPlanner,
    UniformPlanner,
)


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n_samples: int
    record_paths: bool = False
    n_streams: int = 1

    def __post_init__(self):
        if self.n_samples <= 0 or self.n_streams <= 0:
            raise ValueError("n_samples and n_streams must be positive")


@dataclass
class SampleBatch:
    """Terminal sequences as an (n, L) token matrix.

    ``unmask_orders[s, k]`` is the position committed at step k of sample s
    (one-position-per-step samplers).  ``committed_sets[s, k]`` is the
    boolean mask of positions held after step k (parallel sampler).  Either
    may be None when paths were not recorded.
    """

    terminals: np.ndarray
    unmask_orders: np.ndarray | None = None
    committed_sets: np.ndarray | None = None

    def sequences(self) -> list[Sequence]:
        return [tuple(int(t) for t in row) for row in self.terminals]


def _stream_sizes(config: SamplerConfig) -> list[int]:
    base, extra = divmod(config.n_samples, config.n_streams)
    return [base + (1 if i < extra else 0) for i in range(config.n_streams)]


def _stream_generators(config: SamplerConfig) -> list[np.random.Generator]:
    children = np.random.SeedSequence(config.seed).spawn(config.n_streams)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _draw_digits(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws, one per row of ``probs``; returns 0-based digits."""
    cdf = np.cumsum(probs, axis=1)
    u = 1.0 - rng.random(probs.shape[0])  # in (0, 1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def _encode(tokens: np.ndarray, d: int) -> np.ndarray:
    powers = d ** np.arange(tokens.shape[1], dtype=np.int64)
    return (tokens - 1) @ powers


def _draw_candidates(rng, tokens, table, ids):
    """Candidate draw at every position; held rows of the table are point
    masses, so held positions keep their token."""
    n, length = tokens.shape
    z = np.empty_like(tokens)
    conf = np.empty((n, length))
    rows = np.arange(n)
    for i in range(length):
        p = table[ids, i, :]
        digits = _draw_digits(rng, p)
        z[:, i] = digits + 1
        conf[:, i] = p[rows, digits]
    return z, conf


def sample_vanilla(denoiser: TabularDenoiser, length: int, config: SamplerConfig) -> SampleBatch:
    """Unmask one uniformly chosen masked position per step, drawing its
    token from the denoiser."""
    d = denoiser.vocab.size
    table = denoiser.probs_table()
    terminals, orders = [], []
    for n, rng in zip(_stream_sizes(config), _stream_generators(config)):
        if n == 0:
            continue
        tokens = np.full((n, length), d, dtype=np.int64)
        order = np.empty((n, length), dtype=np.int64) if config.record_paths else None
        rows = np.arange(n)
        for step in range(length):
            mask_bool = tokens == d
            j = rng.integers(0, length - step, size=n)
            cummask = np.cumsum(mask_bool, axis=1)
            pos = (((cummask == (j + 1)[:, None]) & mask_bool)).argmax(axis=1)
            ids = _encode(tokens, d)
            digits = _draw_digits(rng, table[ids, pos, :])
            tokens[rows, pos] = digits + 1
            if order is not None:
                order[:, step] = pos
        terminals.append(tokens)
        if order is not None:
            orders.append(order)
    return SampleBatch(
        np.concatenate(terminals),
        unmask_orders=np.concatenate(orders) if orders else None,
    )


def sample_planned(
    denoiser: TabularDenoiser, planner: PositionPlanner, length: int, config: SamplerConfig
) -> SampleBatch:
    """Per step: draw a candidate at every position, let the planner pick a
    masked position from the candidate's confidences, and commit the
    candidate token there."""
    d = denoiser.vocab.size
    table = denoiser.probs_table()
    terminals, orders = [], []
    for n, rng in zip(_stream_sizes(config), _stream_generators(config)):
        if n == 0:
            continue
        tokens = np.full((n, length), d, dtype=np.int64)
        order = np.empty((n, length), dtype=np.int64) if config.record_paths else None
        rows = np.arange(n)
        for step in range(length):
            mask_bool = tokens == d
            ids = _encode(tokens, d)
            z, conf = _draw_candidates(rng, tokens, table, ids)
            pos = _pick_position(rng, planner, conf, mask_bool)
            tokens[rows, pos] = z[rows, pos]
            if order is not None:
                order[:, step] = pos
        terminals.append(tokens)
        if order is not None:
            orders.append(order)
    return SampleBatch(
        np.concatenate(terminals),
        unmask_orders=np.concatenate(orders) if orders else None,
    )


def _pick_position(rng, planner, conf, mask_bool) -> np.ndarray:
    n, length = conf.shape
    if isinstance(planner, UniformPlanner):
        counts = mask_bool.sum(axis=1)
        j = rng.integers(0, counts)
        cummask = np.cumsum(mask_bool, axis=1)
        return (((cummask == (j + 1)[:, None]) & mask_bool)).argmax(axis=1)
    if isinstance(planner, GreedyPlanner):
        scores = np.where(mask_bool, conf, -np.inf)
        return scores.argmax(axis=1)
    if isinstance(planner, SoftGreedyPlanner):
        with np.errstate(divide="ignore"):
            logits = np.where(mask_bool, np.log(conf) / planner.tau, -np.inf)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        cdf = np.cumsum(w, axis=1)
        u = 1.0 - rng.random(n)
        pos = np.minimum((cdf < u[:, None]).sum(axis=1), length - 1)
        # a float-edge draw can land on a zero-width (unmasked) cell; resolve
        # those rows to their highest-weight masked position
        bad = ~mask_bool[np.arange(n), pos]
        if bad.any():
            pos[bad] = np.where(mask_bool[bad], w[bad], -1.0).argmax(axis=1)
        return pos
    raise TypeError(f"no sampler rule for planner {planner!r}")


def sample_p2(
    denoiser: TabularDenoiser, planner: P2TopKPlanner, length: int, config: SamplerConfig
) -> SampleBatch:
    """Parallel sampler: per step draw candidates everywhere, score positions
    (masked: eta * confidence; held: agreement with the held token), keep
    the top-(k+1) scoring positions, and remask the rest."""
    d = denoiser.vocab.size
    table = denoiser.probs_table()
    terminals, committed_all = [], []
    for n, rng in zip(_stream_sizes(config), _stream_generators(config)):
        if n == 0:
            continue
        tokens = np.full((n, length), d, dtype=np.int64)
        committed = np.zeros((n, length, length), dtype=bool) if config.record_paths else None
        rows = np.arange(n)
        for step in range(length):
            mask_bool = tokens == d
            ids = _encode(tokens, d)
            z, conf = _draw_candidates(rng, tokens, table, ids)
            scores = np.where(mask_bool, planner.eta * conf, (z == tokens).astype(np.float64))
            keep = np.argsort(-scores, axis=1, kind="stable")[:, : step + 1]
            nxt = np.full_like(tokens, d)
            flat_rows = np.repeat(rows, step + 1)
            flat_cols = keep.ravel()
            nxt[flat_rows, flat_cols] = z[flat_rows, flat_cols]
            tokens = nxt
            if committed is not None:
                committed[flat_rows, step, flat_cols] = True
        terminals.append(tokens)
        if committed is not None:
            committed_all.append(committed)
    return SampleBatch(
        np.concatenate(terminals),
        committed_sets=np.concatenate(committed_all) if committed_all else None,
    )


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    n_bins: int
    pooled_bins: int
    support_violation: bool

    def rejects(self, significance: float) -> bool:
        return self.support_violation or self.pvalue < significance


def terminal_counts(batch: SampleBatch) -> dict[Sequence, int]:
    uniq, counts = np.unique(batch.terminals, axis=0, return_counts=True)
    return {tuple(int(t) for t in row): int(c) for row, c in zip(uniq, counts)}


def chi_square_fit(
    counts: Mapping[Sequence, int],
    expected: Mapping[Sequence, float],
    min_expected: float = 5.0,
) -> ChiSquareResult:
    """Pearson chi-square of observed terminal counts against exact
    probabilities.

    Bins with expected count below ``min_expected`` are pooled (smallest
    first) before testing, the standard validity fix for sparse cells.  A
    sampled terminal outside the exact support is an automatic failure.
    """
    n = sum(counts.values())
    if n == 0:
        raise ValueError("no samples")
    support = {x for x, p in expected.items() if p > 0}
    if any(x not in support for x in counts):
        return ChiSquareResult(math.inf, 0, 0.0, 0, 0, support_violation=True)

    keys = sorted(support)
    obs = np.array([counts.get(x, 0) for x in keys], dtype=np.float64)
    exp = np.array([expected[x] * n for x in keys])
    order = np.argsort(exp, kind="stable")
    pooled_obs, pooled_exp = [], []
    acc_o = acc_e = 0.0
    pooled = 0
    for idx in order:
        if exp[idx] >= min_expected:
            pooled_obs.append(obs[idx])
            pooled_exp.append(exp[idx])
        else:
            acc_o += obs[idx]
            acc_e += exp[idx]
            pooled += 1
            if acc_e >= min_expected:
                pooled_obs.append(acc_o)
                pooled_exp.append(acc_e)
                acc_o = acc_e = 0.0
    if acc_e > 0.0:
        # residual below the floor: fold it into an already-valid bin (the
        # grouping is chosen from expected counts only, so this is fair)
        if pooled_obs:
            pooled_obs[-1] += acc_o
            pooled_exp[-1] += acc_e
        else:
            raise ValueError("expected counts too small to form a single valid bin")
    obs_arr = np.array(pooled_obs)
    exp_arr = np.array(pooled_exp)
    if len(obs_arr) < 2:
        raise ValueError("need at least two bins after pooling")
    # guard against rescaling error: chisquare requires equal totals
    exp_arr *= obs_arr.sum() / exp_arr.sum()
    stat, pvalue = chisquare(obs_arr, exp_arr)
    return ChiSquareResult(
        float(stat), len(obs_arr) - 1, float(pvalue), len(obs_arr), pooled, support_violation=False
    )


def dump_traces(path: "str | Path", batch: SampleBatch) -> None:
    """One JSON record per sample: the terminal sequence plus the unmask
    order or committed-set trajectory when recorded."""
    with open(path, "w") as fh:
        for s in range(batch.terminals.shape[0]):
            record: dict = {"terminal": [int(t) for t in batch.terminals[s]]}
            if batch.unmask_orders is not None:
                record["order"] = [int(i) for i in batch.unmask_orders[s]]
            if batch.committed_sets is not None:
                record["committed_sets"] = [
                    [int(i) for i in np.flatnonzero(batch.committed_sets[s, k])]
                    for k in range(batch.committed_sets.shape[1])
                ]
            fh.write(json.dumps(record) + "\n")
