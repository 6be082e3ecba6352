"""Policy-gradient training of the sequence policies.

The surrogate loss is -(1/|B|) sum_i (R_i - b) * log p(seq_i), whose gradient
is the REINFORCE estimator with an exponentially-weighted moving-average
baseline b. Parameters update with adaptive moments (lr 0.001). Episode
returns default to heuristic fitness; a shaped reward can be mixed in by the
caller.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..expressions import Token, from_polish
from ..gp import FitnessEvaluator, Individual
from .lstm import LstmPolicy
from .sampling import DEFAULT_MAX_LEN, masked_log_softmax, sample_sequence, step_masks
from .transformer import TransformerPolicy
from .vocab import Vocabulary, default_vocabulary

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)

    def update(self, params: dict[str, np.ndarray],
               grads: dict[str, np.ndarray]) -> None:
        self.ensure(params)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)


@dataclass
class TrainState:
    """Policy parameters plus optimizer state, EWMA baseline, episode count."""

    policy: LstmPolicy | TransformerPolicy
    adam: AdamState = field(default_factory=AdamState)
    baseline: float = 0.0
    baseline_decay: float = 0.9
    episodes: int = 0           # en, incremented per training step
    kappa: float = 10.0
    standardize: bool = False   # standardize advantages within a batch

    @property
    def delta(self) -> float:
        """Imitation weight kappa/en for the current (1-based) episode."""
        return self.kappa / max(1, self.episodes)


def vpg_loss(policy, batch: Sequence[tuple[Sequence[Token], float]],
             baseline: float, *, max_len: int = DEFAULT_MAX_LEN,
             standardize: bool = False) -> tuple[float, dict[str, np.ndarray]]:
    """Surrogate loss and its exact parameter gradients for one batch.

    batch holds (token sequence, return R) pairs; R must be finite. The
    gradient of the returned loss matches the advantage-weighted score
    function estimator.
    """
    if not batch:
        raise ValueError("empty batch")
    returns = np.array([r for _, r in batch], dtype=float)
    if not np.all(np.isfinite(returns)):
        raise ValueError("non-finite return in batch")
    advantages = returns - baseline
    if standardize and len(batch) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    vocab = policy.vocab
    total_loss = 0.0
    grads = policy.zero_grads()
    scale = 1.0 / len(batch)
    for (tokens, _), adv in zip(batch, advantages):
        indices = vocab.encode(tokens)
        horizon = max(max_len, len(indices))
        if policy.kind == "transformer":
            rows, cache = policy.forward(policy._inputs_for(indices))
        else:
            rows, cache = policy.forward(indices)
        masks = step_masks(vocab, indices, horizon)
        dlogits = np.zeros_like(rows)
        lp = 0.0
        for t, index in enumerate(indices):
            logp = masked_log_softmax(rows[t], masks[t])
            lp += float(logp[index])
            probs = np.where(masks[t], np.exp(logp), 0.0)
            probs[index] -= 1.0
            dlogits[t] = (adv * scale) * probs
        total_loss += -scale * adv * lp
        for k, g in policy.backward(dlogits, cache).items():
            grads[k] += g
    return total_loss, grads


def train_step(state: TrainState,
               batch: Sequence[tuple[Sequence[Token], float]],
               *, max_len: int = DEFAULT_MAX_LEN) -> TrainState:
    """One REINFORCE update: loss, adaptive-moment step, baseline and episode
    bookkeeping. Non-finite gradients reject the parameter update."""
    loss, grads = vpg_loss(state.policy, batch, state.baseline,
                           max_len=max_len, standardize=state.standardize)
    finite = all(np.all(np.isfinite(g)) for g in grads.values())
    if not finite or not np.isfinite(loss):
        logger.warning("rejected training step: non-finite loss/gradients")
    else:
        state.adam.update(state.policy.params, grads)
    mean_return = float(np.mean([r for _, r in batch]))
    state.baseline = (state.baseline_decay * state.baseline
                      + (1.0 - state.baseline_decay) * mean_return)
    state.episodes += 1
    return state


# ---------------------------------------------------------------------------
# Checkpoints (bit-exact round trip)
# ---------------------------------------------------------------------------

_CHECKPOINT_VERSION = 1


def save_policy_checkpoint(path, state: TrainState) -> None:
    policy = state.policy
    config: dict = {"hidden": getattr(policy, "hidden", None),
                    "embed": getattr(policy, "embed", None),
                    "layers": getattr(policy, "layers", None),
                    "d_model": getattr(policy, "d_model", None),
                    "heads": getattr(policy, "heads", None),
                    "d_ff": getattr(policy, "d_ff", None),
                    "max_positions": getattr(policy, "max_positions", None)}
    meta = {
        "version": _CHECKPOINT_VERSION,
        "kind": policy.kind,
        "vocab": list(policy.vocab.symbols),
        "config": config,
        "baseline": state.baseline,
        "baseline_decay": state.baseline_decay,
        "episodes": state.episodes,
        "kappa": state.kappa,
        "standardize": state.standardize,
        "adam": {"lr": state.adam.lr, "beta1": state.adam.beta1,
                 "beta2": state.adam.beta2, "eps": state.adam.eps,
                 "t": state.adam.t},
    }
    arrays = {f"p_{k}": v for k, v in policy.params.items()}
    arrays.update({f"m_{k}": v for k, v in state.adam.m.items()})
    arrays.update({f"v_{k}": v for k, v in state.adam.v.items()})
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_policy_checkpoint(path) -> TrainState:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta["version"] != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    vocab = default_vocabulary()
    if list(vocab.symbols) != meta["vocab"]:
        raise ValueError("checkpoint vocabulary does not match this build")
    cfg = meta["config"]
    if meta["kind"] == "lstm":
        policy: LstmPolicy | TransformerPolicy = LstmPolicy(
            vocab, hidden=cfg["hidden"], embed=cfg["embed"])
    elif meta["kind"] == "transformer":
        policy = TransformerPolicy(vocab, layers=cfg["layers"],
                                   d_model=cfg["d_model"], heads=cfg["heads"],
                                   d_ff=cfg["d_ff"],
                                   max_positions=cfg["max_positions"])
    else:
        raise ValueError(f"unknown policy kind {meta['kind']!r}")
    for k in policy.params:
        policy.params[k] = data[f"p_{k}"].copy()
    adam_meta = meta["adam"]
    adam = AdamState(lr=adam_meta["lr"], beta1=adam_meta["beta1"],
                     beta2=adam_meta["beta2"], eps=adam_meta["eps"],
                     t=adam_meta["t"])
    for k in policy.params:
        if f"m_{k}" in data:
            adam.m[k] = data[f"m_{k}"].copy()
            adam.v[k] = data[f"v_{k}"].copy()
    return TrainState(policy=policy, adam=adam, baseline=meta["baseline"],
                      baseline_decay=meta["baseline_decay"],
                      episodes=meta["episodes"], kappa=meta["kappa"],
                      standardize=meta["standardize"])


# ---------------------------------------------------------------------------
# Standalone policy-gradient search (the ablation baselines)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchStats:
    evaluations: int
    best_fitness: float


def standalone_search(policy, budget: int, evaluator: FitnessEvaluator,
                      rng: np.random.Generator, *, batch_size: int = 8,
                      max_len: int = DEFAULT_MAX_LEN,
                      state: TrainState | None = None,
                      ) -> tuple[Individual, list[SearchStats]]:
    """Pure sample -> simulate -> reinforce loop; returns the best heuristic.

    Spends exactly `budget` sampled-heuristic evaluations. Individuals whose
    simulation fails (-inf fitness) still consume budget but are excluded
    from training batches.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    state = state or TrainState(policy=policy, standardize=True)
    best: Individual | None = None
    history: list[SearchStats] = []
    spent = 0
    while spent < budget:
        take = min(batch_size, budget - spent)
        batch: list[tuple[list[Token], float]] = []
        for _ in range(take):
            tokens, _ = sample_sequence(policy, rng, max_len)
            tree = from_polish(tokens)
            fitness = evaluator.fitness(tree)
            spent += 1
            candidate = Individual(tree, fitness, origin="nn_seeded")
            if best is None or fitness > best.fitness:  # type: ignore[operator]
                best = candidate
            if np.isfinite(fitness):
                batch.append((tokens, fitness))
        if batch:
            train_step(state, batch, max_len=max_len)
        history.append(SearchStats(spent, float(best.fitness)))  # type: ignore[union-attr]
    assert best is not None
    return best, history
