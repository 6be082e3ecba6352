"""Single-layer LSTM policy over (parent, sibling) tree contexts.

The cell input at each step is the concatenated embedding of the parent
operator and previous sibling root of the position being generated (BOS when
absent), so the recurrence follows preorder tree construction rather than
flat left-to-right text. Forward and backward passes are hand-written in
float64 numpy; gradients are checked against central finite differences in
the test suite.
"""

from __future__ import annotations

import numpy as np

from .sampling import PrefixContext
from .vocab import Vocabulary, default_vocabulary

# Uniform logits over 30 tokens put ~2/3 of the mass on terminals, so an
# untrained policy emits stub expressions a few tokens long. Biasing the
# output layer toward operators at init brings the branching factor near
# critical, giving fresh policies ramped-size samples like GP's own init.
OPERATOR_INIT_BIAS = 0.4


def operator_bias(vocab: Vocabulary) -> np.ndarray:
    bias = np.zeros(vocab.size)
    bias[vocab.arities > 0] = OPERATOR_INIT_BIAS
    return bias


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LstmPolicy:
    kind = "lstm"

    def __init__(self, vocab: Vocabulary | None = None, hidden: int = 32,
                 embed: int = 8, seed: int = 0) -> None:
        self.vocab = vocab or default_vocabulary()
        self.hidden = hidden
        self.embed = embed
        rng = np.random.default_rng(seed)
        V, H, De = self.vocab.size, hidden, embed
        self.params: dict[str, np.ndarray] = {
            "embed": rng.normal(0.0, 0.1, (V, De)),
            "w_x": rng.normal(0.0, 1.0 / np.sqrt(2 * De), (4 * H, 2 * De)),
            "w_h": rng.normal(0.0, 1.0 / np.sqrt(H), (4 * H, H)),
            "b": np.zeros(4 * H),
            "w_out": rng.normal(0.0, 1.0 / np.sqrt(H), (V, H)),
            "b_out": operator_bias(self.vocab),
        }

    @property
    def max_train_len(self) -> int | None:
        return None  # no positional table, any length trains

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- cell --------------------------------------------------------------

    def _cell(self, parent: int, sibling: int, h: np.ndarray, c: np.ndarray):
        p = self.params
        H = self.hidden
        x = np.concatenate([p["embed"][parent], p["embed"][sibling]])
        z = p["w_x"] @ x + p["w_h"] @ h + p["b"]
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c2 = f * c + i * g
        tanh_c2 = np.tanh(c2)
        h2 = o * tanh_c2
        logits = p["w_out"] @ h2 + p["b_out"]
        cache = (parent, sibling, x, h, c, i, f, g, o, tanh_c2, h2)
        return logits, h2, c2, cache

    # -- sequence API --------------------------------------------------------

    def forward(self, indices: list[int]):
        """Teacher-forced logits for each position, plus the backward cache."""
        ctx = PrefixContext(self.vocab)
        h = np.zeros(self.hidden)
        c = np.zeros(self.hidden)
        rows = np.empty((len(indices), self.vocab.size))
        caches = []
        for t, index in enumerate(indices):
            parent, sibling = ctx.current()
            logits, h, c, cache = self._cell(parent, sibling, h, c)
            rows[t] = logits
            caches.append(cache)
            ctx.push(index)
        return rows, caches

    def emission_logits(self, indices: list[int]) -> np.ndarray:
        return self.forward(indices)[0]

    def backward(self, dlogits: np.ndarray, caches) -> dict[str, np.ndarray]:
        """Accumulate parameter gradients for one sequence via BPTT."""
        p = self.params
        H = self.hidden
        De = self.embed
        grads = self.zero_grads()
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in range(len(caches) - 1, -1, -1):
            parent, sibling, x, h_prev, c_prev, i, f, g, o, tanh_c2, h2 = caches[t]
            dl = dlogits[t]
            grads["w_out"] += np.outer(dl, h2)
            grads["b_out"] += dl
            dh = p["w_out"].T @ dl + dh_next
            do = dh * tanh_c2
            dc = dh * o * (1.0 - tanh_c2 ** 2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g ** 2),
                do * o * (1.0 - o),
            ])
            grads["w_x"] += np.outer(dz, x)
            grads["w_h"] += np.outer(dz, h_prev)
            grads["b"] += dz
            dx = p["w_x"].T @ dz
            grads["embed"][parent] += dx[:De]
            grads["embed"][sibling] += dx[De:]
            dh_next = p["w_h"].T @ dz
        return grads

    # -- incremental sampling ------------------------------------------------

    def start_stepper(self) -> "_LstmStepper":
        return _LstmStepper(self)


class _LstmStepper:
    """One-token-at-a-time interface used by sample_sequence."""

    def __init__(self, policy: LstmPolicy) -> None:
        self.policy = policy
        self.ctx = PrefixContext(policy.vocab)
        self.h = np.zeros(policy.hidden)
        self.c = np.zeros(policy.hidden)
        self._pending: tuple[np.ndarray, np.ndarray] | None = None

    def logits(self) -> np.ndarray:
        parent, sibling = self.ctx.current()
        logits, h2, c2, _ = self.policy._cell(parent, sibling, self.h, self.c)
        self._pending = (h2, c2)
        return logits

    def push(self, index: int) -> None:
        if self._pending is None:
            raise RuntimeError("push() before logits()")
        self.h, self.c = self._pending
        self._pending = None
        self.ctx.push(index)
