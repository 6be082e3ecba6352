"""Decoder-only transformer policy, hand-written forward and backward.

Post-norm layers: x = LayerNorm(x + MaskedAttention(x)), then
x = LayerNorm(x + FFN(x)). The causal mask adds -1e30 to future scores,
which underflows to an exact zero weight after softmax, so position t is
bitwise independent of tokens after t. Backward passes are validated
against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .lstm import operator_bias
from .vocab import Vocabulary, default_vocabulary

_MASK_VALUE = -1e30
_LN_EPS = 1e-5


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
              mask: np.ndarray | None = None,
              return_weights: bool = False):
    """Scaled dot-product attention: softmax(q kT / sqrt(d_k)) v.

    q is (Lq, d_k), k is (Lk, d_k), v is (Lk, d_v); mask, if given, is an
    additive (Lq, Lk) matrix (use large negatives to forbid positions).
    Weight rows are a probability distribution over key positions.
    """
    q, k, v = np.asarray(q, dtype=float), np.asarray(k, dtype=float), np.asarray(v, dtype=float)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects 2-D q, k, v")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"q/k width mismatch: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"k/v length mismatch: {k.shape} vs {v.shape}")
    if q.shape[1] < 1:
        raise ValueError("d_k must be positive")
    scores = q @ k.T / np.sqrt(q.shape[1])
    if mask is not None:
        mask = np.asarray(mask, dtype=float)
        if mask.shape != scores.shape:
            raise ValueError(f"mask shape {mask.shape} != scores shape {scores.shape}")
        scores = scores + mask
    weights = _softmax_rows(scores)
    out = weights @ v
    return (out, weights) if return_weights else out


def causal_mask(n: int) -> np.ndarray:
    """Additive mask forbidding attention to strictly-future positions."""
    return np.triu(np.full((n, n), _MASK_VALUE), k=1)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _softmax_rows_backward(dw: np.ndarray, w: np.ndarray) -> np.ndarray:
    return w * (dw - np.sum(dw * w, axis=-1, keepdims=True))


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_backward(dy: np.ndarray, g: np.ndarray, cache):
    xhat, inv = cache
    dg = np.sum(dy * xhat, axis=0)
    db = np.sum(dy, axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - np.mean(dxhat, axis=-1, keepdims=True)
                - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dg, db


class TransformerPolicy:
    kind = "transformer"

    def __init__(self, vocab: Vocabulary | None = None, layers: int = 2,
                 d_model: int = 32, heads: int = 2, d_ff: int = 64,
                 max_positions: int = 513, seed: int = 0) -> None:
        if d_model % heads != 0:
            raise ValueError("d_model must divide evenly across heads")
        self.vocab = vocab or default_vocabulary()
        self.layers = layers
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.d_ff = d_ff
        self.max_positions = max_positions
        rng = np.random.default_rng(seed)
        V, D, F = self.vocab.size, d_model, d_ff
        params: dict[str, np.ndarray] = {
            "tok": rng.normal(0.0, 0.1, (V, D)),
            "pos": rng.normal(0.0, 0.1, (max_positions, D)),
            "out_w": rng.normal(0.0, 1.0 / np.sqrt(D), (V, D)),
            "out_b": operator_bias(self.vocab),
        }
        for layer in range(layers):
            s = 1.0 / np.sqrt(D)
            for name in ("wq", "wk", "wv", "wo"):
                params[f"l{layer}_{name}"] = rng.normal(0.0, s, (D, D))
            params[f"l{layer}_ln1_g"] = np.ones(D)
            params[f"l{layer}_ln1_b"] = np.zeros(D)
            params[f"l{layer}_w1"] = rng.normal(0.0, s, (F, D))
            params[f"l{layer}_b1"] = np.zeros(F)
            params[f"l{layer}_w2"] = rng.normal(0.0, 1.0 / np.sqrt(F), (D, F))
            params[f"l{layer}_b2"] = np.zeros(D)
            params[f"l{layer}_ln2_g"] = np.ones(D)
            params[f"l{layer}_ln2_b"] = np.zeros(D)
        self.params = params

    @property
    def max_train_len(self) -> int | None:
        return self.max_positions - 1  # one slot goes to BOS

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- forward -------------------------------------------------------------

    def _inputs_for(self, indices: list[int]) -> list[int]:
        return [self.vocab.bos] + list(indices[:-1])

    def forward(self, input_ids: list[int]):
        """Logits for every position of an input id sequence, plus cache."""
        L = len(input_ids)
        if L > self.max_positions:
            raise ValueError(f"sequence length {L} exceeds position table "
                             f"({self.max_positions})")
        p = self.params
        ids = np.asarray(input_ids, dtype=np.int64)
        x = p["tok"][ids] + p["pos"][:L]
        mask = causal_mask(L)
        layer_caches = []
        for layer in range(self.layers):
            x, cache = self._layer_forward(layer, x, mask)
            layer_caches.append(cache)
        logits = x @ p["out_w"].T + p["out_b"]
        return logits, (ids, x, layer_caches)

    def _layer_forward(self, layer: int, x: np.ndarray, mask: np.ndarray):
        p = self.params
        H, dh, D = self.heads, self.d_head, self.d_model
        L = x.shape[0]
        q = x @ p[f"l{layer}_wq"].T
        k = x @ p[f"l{layer}_wk"].T
        v = x @ p[f"l{layer}_wv"].T
        qh = q.reshape(L, H, dh).transpose(1, 0, 2)
        kh = k.reshape(L, H, dh).transpose(1, 0, 2)
        vh = v.reshape(L, H, dh).transpose(1, 0, 2)
        scores = np.einsum("hld,hmd->hlm", qh, kh) / np.sqrt(dh) + mask
        weights = _softmax_rows(scores)
        ctx = np.einsum("hlm,hmd->hld", weights, vh)
        ctx_m = ctx.transpose(1, 0, 2).reshape(L, D)
        attn_out = ctx_m @ p[f"l{layer}_wo"].T
        x1, ln1_cache = _ln_forward(x + attn_out, p[f"l{layer}_ln1_g"], p[f"l{layer}_ln1_b"])
        z1 = x1 @ p[f"l{layer}_w1"].T + p[f"l{layer}_b1"]
        a1 = np.maximum(z1, 0.0)
        ffn = a1 @ p[f"l{layer}_w2"].T + p[f"l{layer}_b2"]
        x2, ln2_cache = _ln_forward(x1 + ffn, p[f"l{layer}_ln2_g"], p[f"l{layer}_ln2_b"])
        cache = (x, qh, kh, vh, weights, ctx_m, ln1_cache, x1, z1, a1, ln2_cache)
        return x2, cache

    def emission_logits(self, indices: list[int]) -> np.ndarray:
        """Row t holds the logits that generated indices[t] (teacher forcing)."""
        logits, _ = self.forward(self._inputs_for(indices))
        return logits

    # -- backward ------------------------------------------------------------

    def backward(self, dlogits: np.ndarray, cache) -> dict[str, np.ndarray]:
        p = self.params
        ids, x_final, layer_caches = cache
        grads = self.zero_grads()
        grads["out_w"] += dlogits.T @ x_final
        grads["out_b"] += dlogits.sum(axis=0)
        dx = dlogits @ p["out_w"]
        for layer in range(self.layers - 1, -1, -1):
            dx = self._layer_backward(layer, dx, layer_caches[layer], grads)
        L = len(ids)
        np.add.at(grads["tok"], ids, dx)
        grads["pos"][:L] += dx
        return grads

    def _layer_backward(self, layer: int, dx2: np.ndarray, cache,
                        grads: dict[str, np.ndarray]) -> np.ndarray:
        p = self.params
        H, dh, D = self.heads, self.d_head, self.d_model
        x, qh, kh, vh, weights, ctx_m, ln1_cache, x1, z1, a1, ln2_cache = cache
        L = x.shape[0]

        dres2, dg2, db2 = _ln_backward(dx2, p[f"l{layer}_ln2_g"], ln2_cache)
        grads[f"l{layer}_ln2_g"] += dg2
        grads[f"l{layer}_ln2_b"] += db2
        dffn = dres2
        dx1 = dres2.copy()
        grads[f"l{layer}_w2"] += dffn.T @ a1
        grads[f"l{layer}_b2"] += dffn.sum(axis=0)
        da1 = dffn @ p[f"l{layer}_w2"]
        dz1 = da1 * (z1 > 0.0)
        grads[f"l{layer}_w1"] += dz1.T @ x1
        grads[f"l{layer}_b1"] += dz1.sum(axis=0)
        dx1 += dz1 @ p[f"l{layer}_w1"]

        dres1, dg1, db1 = _ln_backward(dx1, p[f"l{layer}_ln1_g"], ln1_cache)
        grads[f"l{layer}_ln1_g"] += dg1
        grads[f"l{layer}_ln1_b"] += db1
        dattn = dres1
        dx = dres1.copy()
        grads[f"l{layer}_wo"] += dattn.T @ ctx_m
        dctx_m = dattn @ p[f"l{layer}_wo"]
        dctx = dctx_m.reshape(L, H, dh).transpose(1, 0, 2)
        dweights = np.einsum("hld,hmd->hlm", dctx, vh)
        dvh = np.einsum("hlm,hld->hmd", weights, dctx)
        dscores = _softmax_rows_backward(dweights, weights) / np.sqrt(dh)
        dqh = np.einsum("hlm,hmd->hld", dscores, kh)
        dkh = np.einsum("hlm,hld->hmd", dscores, qh)
        dq = dqh.transpose(1, 0, 2).reshape(L, D)
        dk = dkh.transpose(1, 0, 2).reshape(L, D)
        dv = dvh.transpose(1, 0, 2).reshape(L, D)
        grads[f"l{layer}_wq"] += dq.T @ x
        grads[f"l{layer}_wk"] += dk.T @ x
        grads[f"l{layer}_wv"] += dv.T @ x
        dx += dq @ p[f"l{layer}_wq"] + dk @ p[f"l{layer}_wk"] + dv @ p[f"l{layer}_wv"]
        return dx

    # -- incremental sampling --------------------------------------------------

    def start_stepper(self) -> "_TransformerStepper":
        return _TransformerStepper(self)


class _TransformerStepper:
    """Full-prefix recompute per step; bitwise-consistent with emission_logits."""

    def __init__(self, policy: TransformerPolicy) -> None:
        self.policy = policy
        self.prefix: list[int] = []

    def logits(self) -> np.ndarray:
        inputs = [self.policy.vocab.bos] + self.prefix
        rows, _ = self.policy.forward(inputs)
        return rows[-1]

    def push(self, index: int) -> None:
        self.prefix.append(index)
