"""Vocabulary, masked sequences, and tabular denoisers.

Tokens are the integers ``1 .. d`` and the top index ``d`` doubles as the
mask symbol.  Sequences are plain tuples of ints.  A tabular denoiser holds
one logit vector over the ``d - 1`` clean tokens for every (state, position)
pair, densely indexed by a base-``d`` state id so that samplers can operate
on whole batches with numpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy.special import log_softmax, softmax

Sequence = tuple[int, ...]

# Exact enumeration is only supported at desk scale; the parallel-planner
# machinery enumerates far more paths and gets a tighter cap.
MAX_VOCAB = 5
MAX_LENGTH = 6
MAX_VOCAB_PARALLEL = 3
MAX_LENGTH_PARALLEL = 3


class BudgetError(ValueError):
    """Inputs exceed the exact-enumeration budget."""


def check_budget(vocab: "Vocab", length: int) -> None:
    if vocab.size > MAX_VOCAB or length > MAX_LENGTH:
        raise BudgetError(
            f"exact enumeration supports d <= {MAX_VOCAB}, L <= {MAX_LENGTH}; got d={vocab.size}, L={length}"
        )


def check_budget_parallel(vocab: "Vocab", length: int) -> None:
    if vocab.size > MAX_VOCAB_PARALLEL or length > MAX_LENGTH_PARALLEL:
        raise BudgetError(
            f"parallel-planner enumeration supports d <= {MAX_VOCAB_PARALLEL}, "
            f"L <= {MAX_LENGTH_PARALLEL}; got d={vocab.size}, L={length}"
        )


@dataclass(frozen=True)
class Vocab:
    """Token alphabet ``{1, .., size}`` whose top index is the mask."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"vocab needs at least one clean token and a mask, got size={self.size}")

    @property
    def mask(self) -> int:
        return self.size

    @property
    def n_clean(self) -> int:
        return self.size - 1

    @property
    def clean_tokens(self) -> range:
        return range(1, self.size)

    def check_sequence(self, x: Sequence) -> None:
        for tok in x:
            if not 1 <= tok <= self.size:
                raise ValueError(f"token {tok} outside 1..{self.size}")


def hamming(x: Sequence, y: Sequence) -> int:
    """Number of coordinates where the two sequences differ."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    return sum(a != b for a, b in zip(x, y))


def masked_positions(x: Sequence, vocab: Vocab) -> tuple[int, ...]:
    return tuple(i for i, tok in enumerate(x) if tok == vocab.mask)


def n_masked(x: Sequence, vocab: Vocab) -> int:
    return sum(tok == vocab.mask for tok in x)


def is_clean(x: Sequence, vocab: Vocab) -> bool:
    return vocab.mask not in x


def all_masked(vocab: Vocab, length: int) -> Sequence:
    return (vocab.mask,) * length


def apply_token(x: Sequence, i: int, tok: int) -> Sequence:
    """Copy of ``x`` with position ``i`` set to ``tok``."""
    return x[:i] + (tok,) + x[i + 1 :]


def mask_out(x0: Sequence, positions: Iterable[int], vocab: Vocab) -> Sequence:
    """Copy of ``x0`` with the given positions replaced by the mask."""
    keep = set(positions)
    return tuple(vocab.mask if i in keep else tok for i, tok in enumerate(x0))


def enumerate_masked_states(x0: Sequence, k: int, vocab: Vocab) -> Iterator[Sequence]:
    """All sequences equal to ``x0`` except at exactly ``k`` masked coordinates.

    ``x0`` must be clean.  Yields ``C(L, k)`` states in lexicographic order of
    the masked index set.
    """
    if not is_clean(x0, vocab):
        raise ValueError("x0 must contain no masks")
    if not 0 <= k <= len(x0):
        raise ValueError(f"k={k} outside 0..{len(x0)}")
    for idx in itertools.combinations(range(len(x0)), k):
        yield mask_out(x0, idx, vocab)


def enumerate_all_states(vocab: Vocab, length: int, n_masks: int) -> Iterator[Sequence]:
    """All sequences of the given length with exactly ``n_masks`` masked coords."""
    for idx in itertools.combinations(range(length), n_masks):
        idx_set = set(idx)
        free = [i for i in range(length) if i not in idx_set]
        for toks in itertools.product(vocab.clean_tokens, repeat=len(free)):
            x = [vocab.mask] * length
            for i, tok in zip(free, toks):
                x[i] = tok
            yield tuple(x)


def state_id(x: Sequence, vocab: Vocab) -> int:
    """Base-``d`` integer id of a sequence (token ``t`` is digit ``t - 1``)."""
    acc = 0
    for tok in reversed(x):
        acc = acc * vocab.size + (tok - 1)
    return acc


def state_from_id(sid: int, vocab: Vocab, length: int) -> Sequence:
    toks = []
    for _ in range(length):
        sid, digit = divmod(sid, vocab.size)
        toks.append(digit + 1)
    return tuple(toks)


class TabularDenoiser:
    """Per-position categorical predictor over clean tokens, one logit row
    per (state, position).

    ``predict`` applies the point-mass convention at unmasked positions: the
    categorical there puts all mass on the held token, regardless of the
    stored logits.  Only logits at masked (state, position) pairs ever
    influence probabilities, and they are the trainable parameters.
    """

    def __init__(self, vocab: Vocab, length: int, logits: np.ndarray):
        expected = (vocab.size**length, length, vocab.n_clean)
        if logits.shape != expected:
            raise ValueError(f"logits shape {logits.shape}, expected {expected}")
        self.vocab = vocab
        self.length = length
        self.logits = np.asarray(logits, dtype=np.float64)

    # -- constructors ---------------------------------------------------

    @classmethod
    def random(cls, vocab: Vocab, length: int, rng: np.random.Generator, scale: float = 1.0) -> "TabularDenoiser":
        """Independent uniform(-scale, scale) logits for every entry."""
        shape = (vocab.size**length, length, vocab.n_clean)
        return cls(vocab, length, rng.uniform(-scale, scale, size=shape))

    @classmethod
    def uniform(cls, vocab: Vocab, length: int) -> "TabularDenoiser":
        shape = (vocab.size**length, length, vocab.n_clean)
        return cls(vocab, length, np.zeros(shape))

    @classmethod
    def from_table(
        cls,
        vocab: Vocab,
        length: int,
        table: Mapping[tuple[Sequence, int], "np.ndarray | list[float]"],
    ) -> "TabularDenoiser":
        """Build a denoiser from explicit probabilities.

        ``table`` maps ``(state, position)`` to a probability vector over the
        clean tokens ``1 .. d-1``.  Entries not present fall back to uniform.
        Each given vector must be positive and sum to 1 (1e-9).
        """
        logits = np.zeros((vocab.size**length, length, vocab.n_clean))
        for (state, pos), probs in table.items():
            vocab.check_sequence(state)
            if len(state) != length:
                raise ValueError(f"state {state} has length {len(state)}, expected {length}")
            if not 0 <= pos < length:
                raise ValueError(f"position {pos} outside 0..{length - 1}")
            p = np.asarray(probs, dtype=np.float64)
            if p.shape != (vocab.n_clean,):
                raise ValueError(f"probability vector for {(state, pos)} has shape {p.shape}")
            if (p <= 0).any():
                raise ValueError(f"probabilities for {(state, pos)} must be strictly positive")
            if abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"probabilities for {(state, pos)} sum to {p.sum()}")
            logits[state_id(state, vocab), pos, :] = np.log(p)
        return cls(vocab, length, logits)

    # -- predictions ----------------------------------------------------

    def predict(self, x: Sequence) -> np.ndarray:
        """Per-position distributions over clean tokens, shape ``(L, d-1)``.

        Row ``i`` is softmax(logits) when ``x[i]`` is masked and a point mass
        on ``x[i]`` otherwise.
        """
        sid = state_id(x, self.vocab)
        out = np.empty((self.length, self.vocab.n_clean))
        for i, tok in enumerate(x):
            if tok == self.vocab.mask:
                out[i] = softmax(self.logits[sid, i])
            else:
                out[i] = 0.0
                out[i, tok - 1] = 1.0
        return out

    def prob(self, x: Sequence, i: int, tok: int) -> float:
        """``Cat(tok; D^i(x))`` for a clean token ``tok``."""
        if not 1 <= tok <= self.vocab.n_clean:
            raise ValueError(f"{tok} is not a clean token")
        if x[i] != self.vocab.mask:
            return 1.0 if x[i] == tok else 0.0
        sid = state_id(x, self.vocab)
        return float(softmax(self.logits[sid, i])[tok - 1])

    def log_prob(self, x: Sequence, i: int, tok: int) -> float:
        if not 1 <= tok <= self.vocab.n_clean:
            raise ValueError(f"{tok} is not a clean token")
        if x[i] != self.vocab.mask:
            return 0.0 if x[i] == tok else -math.inf
        sid = state_id(x, self.vocab)
        return float(log_softmax(self.logits[sid, i])[tok - 1])

    def masked_probs(self, x: Sequence) -> dict[int, np.ndarray]:
        """Distributions over clean tokens at each masked position of ``x``."""
        sid = state_id(x, self.vocab)
        return {
            i: softmax(self.logits[sid, i])
            for i, tok in enumerate(x)
            if tok == self.vocab.mask
        }

    def probs_table(self) -> np.ndarray:
        """Dense ``(d^L, L, d-1)`` table of predict() rows for every state.

        Used by the vectorized samplers; recomputed on each call so it always
        reflects the current logits.
        """
        d = self.vocab.size
        n_states = d**self.length
        table = softmax(self.logits, axis=-1)
        ids = np.arange(n_states)
        for i in range(self.length):
            digits = (ids // d**i) % d
            held = digits != d - 1
            table[held, i, :] = 0.0
            table[ids[held], i, digits[held]] = 1.0
        return table

    def copy(self) -> "TabularDenoiser":
        return TabularDenoiser(self.vocab, self.length, self.logits.copy())
