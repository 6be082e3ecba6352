"""Grammar-constrained autoregressive sampling of prefix expressions.

Every step samples from a masked, renormalized categorical over the
vocabulary. The mask enforces two things: the arity budget must be able to
close within the remaining length budget, and BOS is never emitted. Under it
every sampled sequence is a valid prefix expression by construction.

The same masking drives log_prob, so the likelihood of a sampled sequence
reproduces the value accumulated during sampling exactly. For sequences
longer than the sampling horizon (GP-evolved trees), the horizon extends to
the sequence's own length so the log-probability stays finite.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..expressions import Token, validate_prefix
from .vocab import Vocabulary

DEFAULT_MAX_LEN = 64


def allowed_token_mask(vocab: Vocabulary, budget: int, steps_left: int) -> np.ndarray:
    """Tokens that keep the arity budget closable within the length budget.

    Emitting a token turns the budget into budget - 1 + arity, which must be
    coverable by the steps remaining after it.
    """
    mask = (budget - 1 + vocab.arities) <= (steps_left - 1)
    mask[vocab.bos] = False
    return mask


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities renormalized over the allowed set; -inf elsewhere."""
    allowed = logits[mask]
    m = np.max(allowed)
    lse = m + np.log(np.sum(np.exp(allowed - m)))
    out = np.full(logits.shape, -np.inf)
    out[mask] = logits[mask] - lse
    return out


class PrefixContext:
    """Tracks the (parent, sibling) conditioning pair while a prefix grows.

    The parent is the operator awaiting operands; the sibling is the root of
    that operator's previously completed operand subtree. BOS stands in for
    either when absent.
    """

    def __init__(self, vocab: Vocabulary) -> None:
        self.vocab = vocab
        # stack frames: [parent_index, children_still_needed, prev_child_root]
        self.stack: list[list[int | None]] = [[vocab.bos, 1, None]]

    @property
    def budget(self) -> int:
        return sum(frame[1] for frame in self.stack)  # type: ignore[misc]

    @property
    def done(self) -> bool:
        return not self.stack

    def current(self) -> tuple[int, int]:
        frame = self.stack[-1]
        parent = frame[0]
        sibling = frame[2] if frame[2] is not None else self.vocab.bos
        return int(parent), int(sibling)  # type: ignore[arg-type]

    def push(self, index: int) -> None:
        arity = int(self.vocab.arities[index])
        if arity > 0:
            self.stack.append([index, arity, None])
            return
        # A terminal completes a subtree; completion may cascade upward.
        root = index
        while self.stack:
            frame = self.stack[-1]
            frame[1] -= 1  # type: ignore[operator]
            frame[2] = root
            if frame[1] > 0:  # type: ignore[operator]
                return
            self.stack.pop()
            root = int(frame[0])  # type: ignore[arg-type]


def sample_sequence(policy, rng: np.random.Generator,
                    max_len: int = DEFAULT_MAX_LEN) -> tuple[list[Token], float]:
    """Sample one valid prefix expression and its log-probability.

    Deterministic given (policy parameters, rng state). The returned
    sequence always satisfies validate_prefix and has at most max_len tokens.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    vocab = policy.vocab
    stepper = policy.start_stepper()
    indices: list[int] = []
    budget = 1
    log_prob = 0.0
    while budget > 0:
        logits = stepper.logits()
        mask = allowed_token_mask(vocab, budget, max_len - len(indices))
        logp = masked_log_softmax(logits, mask)
        probs = np.exp(logp[mask])
        choice_within = int(rng.choice(np.count_nonzero(mask), p=probs / probs.sum()))
        index = int(np.flatnonzero(mask)[choice_within])
        log_prob += float(logp[index])
        stepper.push(index)
        indices.append(index)
        budget += int(vocab.arities[index]) - 1
    return vocab.decode(indices), log_prob


def log_prob(policy, tokens: Sequence[Token],
             max_len: int = DEFAULT_MAX_LEN) -> float:
    """Log-probability of a token sequence under the masked sampling rules.

    Uses horizon max(max_len, len(tokens)); raises on invalid prefixes or
    tokens outside the vocabulary.
    """
    if not validate_prefix(list(tokens)):
        raise ValueError("not a valid prefix token sequence")
    vocab = policy.vocab
    indices = vocab.encode(tokens)
    horizon = max(max_len, len(indices))
    rows = policy.emission_logits(indices)
    budget = 1
    total = 0.0
    for t, index in enumerate(indices):
        mask = allowed_token_mask(vocab, budget, horizon - t)
        logp = masked_log_softmax(rows[t], mask)
        total += float(logp[index])
        budget += int(vocab.arities[index]) - 1
    return total


def step_masks(vocab: Vocabulary, indices: Sequence[int], horizon: int) -> np.ndarray:
    """Per-step allowed masks for a whole sequence (training helper)."""
    masks = np.zeros((len(indices), vocab.size), dtype=bool)
    budget = 1
    for t, index in enumerate(indices):
        masks[t] = allowed_token_mask(vocab, budget, horizon - t)
        budget += int(vocab.arities[index]) - 1
    return masks
