"""Token vocabulary shared by the sequence policies.

30 entries in a stable order: the 11 operators, the 14 state features, the
5 pool constants, and BOS. BOS is never emitted; it marks sequence start for
the transformer and doubles as the "no parent / no sibling" context marker
for the LSTM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..expressions import (
    CONSTANT_SYMBOLS,
    OPERATOR_ARITY,
    OPERATOR_SYMBOLS,
    Token,
    parse_token,
)
from ..features import FEATURE_NAMES

BOS_SYMBOL = "<bos>"


@dataclass(frozen=True)
class Vocabulary:
    symbols: tuple[str, ...]
    arities: np.ndarray          # arity per index, 0 for BOS
    bos: int                     # index of BOS
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index_of(self, token: Token) -> int:
        idx = self._index.get(token.symbol)
        if idx is None and token.kind == "feature":
            # f1..f14 aliases resolve to their canonical column name.
            idx = self._index.get(token.feature or "")
        if idx is None:
            raise KeyError(f"token {token.symbol!r} outside vocabulary")
        return idx

    def token_at(self, index: int) -> Token:
        if index == self.bos:
            raise KeyError("BOS is not an expression token")
        return parse_token(self.symbols[index])

    def encode(self, tokens) -> list[int]:
        return [self.index_of(t) for t in tokens]

    def decode(self, indices) -> list[Token]:
        return [self.token_at(int(i)) for i in indices]


def default_vocabulary() -> Vocabulary:
    symbols = OPERATOR_SYMBOLS + FEATURE_NAMES + CONSTANT_SYMBOLS + (BOS_SYMBOL,)
    arities = np.zeros(len(symbols), dtype=np.int64)
    for i, s in enumerate(OPERATOR_SYMBOLS):
        arities[i] = OPERATOR_ARITY[s]
    return Vocabulary(symbols=symbols, arities=arities, bos=len(symbols) - 1)
