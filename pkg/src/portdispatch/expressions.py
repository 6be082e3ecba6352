"""Heuristic expression language: tokens, trees, Polish round trip, evaluation.

A dispatch heuristic is an operator tree whose leaves are state features or
constants from a small shared pool. Trees serialize to bracket-free prefix
(Polish) token sequences, the common representation shared by the GP engine
and the neural sequence policies.

Semantics are totalized: division by zero yields 1, comparison and boolean
operators return 1.0/0.0, and if_else(c, x, y) picks x when c is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import FEATURE_INDEX, canonical_feature

# Operator symbol -> arity. Order is the vocabulary order.
OPERATOR_ARITY: dict[str, int] = {
    "+": 2,
    "-": 2,
    "*": 2,
    "/": 2,   # protected: x / 0 == 1
    ">=": 2,
    "<=": 2,
    "if_else": 3,
    "and": 2,
    "or": 2,
    "max": 2,
    "min": 2,
}

OPERATOR_SYMBOLS: tuple[str, ...] = tuple(OPERATOR_ARITY)

# Shared constant pool: the GP ephemeral constants and the policy vocabulary
# must emit the same token set.
CONSTANT_POOL: tuple[float, ...] = (0.5, 1.0, 2.0, 5.0, 10.0)
CONSTANT_SYMBOLS: tuple[str, ...] = ("0.5", "1", "2", "5", "10")
_CONSTANT_BY_SYMBOL = dict(zip(CONSTANT_SYMBOLS, CONSTANT_POOL))
_SYMBOL_BY_CONSTANT = dict(zip(CONSTANT_POOL, CONSTANT_SYMBOLS))

KIND_OP = "operator"
KIND_FEATURE = "feature"
KIND_CONST = "constant"


class PrefixParseError(ValueError):
    """Raised for a token stream that is not a valid prefix expression."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"{message} (token index {index})")
        self.index = index


@dataclass(frozen=True)
class Token:
    """One vocabulary element: an operator, a feature terminal, or a constant.

    `symbol` is the exact surface text, preserved through parse/serialize so
    that files round-trip bit-exactly even when written with f1..f14 aliases.
    `feature`/`value` carry the resolved identity used for evaluation.
    """

    kind: str
    symbol: str
    arity: int = 0
    feature: str | None = None
    value: float | None = None

    @staticmethod
    def op(symbol: str) -> "Token":
        return Token(KIND_OP, symbol, OPERATOR_ARITY[symbol])

    @staticmethod
    def feat(symbol: str) -> "Token":
        return Token(KIND_FEATURE, symbol, 0, feature=canonical_feature(symbol))

    @staticmethod
    def const(value: float) -> "Token":
        symbol = _SYMBOL_BY_CONSTANT.get(value)
        if symbol is None:
            symbol = repr(float(value))
        return Token(KIND_CONST, symbol, 0, value=float(value))

    @property
    def canonical(self) -> str:
        """Identity used for structural hashing and memoization."""
        if self.kind == KIND_FEATURE:
            return self.feature  # type: ignore[return-value]
        if self.kind == KIND_CONST:
            return repr(self.value)
        return self.symbol


def parse_token(text: str) -> Token:
    """Map one token of surface text to a Token.

    Operators match exactly; any finite numeric literal is a constant (the
    GP/policy layers only ever emit the pool constants, but hand-written
    expressions may use other values); anything else is a feature terminal,
    with aliases f1..f14 resolving to canonical names.
    """
    if text in OPERATOR_ARITY:
        return Token.op(text)
    if text in _CONSTANT_BY_SYMBOL:
        return Token(KIND_CONST, text, 0, value=_CONSTANT_BY_SYMBOL[text])
    try:
        value = float(text)
    except ValueError:
        return Token.feat(text)
    if not np.isfinite(value):
        return Token.feat(text)
    return Token(KIND_CONST, text, 0, value=value)


@dataclass(frozen=True)
class ExprNode:
    """A node of an expression tree; the root node stands for the tree."""

    token: Token
    children: tuple["ExprNode", ...] = ()

    def __post_init__(self) -> None:
        if len(self.children) != self.token.arity:
            raise ValueError(
                f"token {self.token.symbol!r} expects {self.token.arity} children, "
                f"got {len(self.children)}"
            )


# The root node is the tree.
ExprTree = ExprNode


def leaf(token: Token) -> ExprNode:
    return ExprNode(token)


def tree_depth(tree: ExprNode) -> int:
    """Edge depth: a single leaf has depth 0."""
    if not tree.children:
        return 0
    return 1 + max(tree_depth(c) for c in tree.children)


def token_count(tree: ExprNode) -> int:
    return 1 + sum(token_count(c) for c in tree.children)


def iter_nodes(tree: ExprNode) -> Iterable[ExprNode]:
    """Preorder traversal."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def to_polish(tree: ExprNode) -> list[Token]:
    """Serialize to a prefix (Polish) token sequence."""
    return [node.token for node in iter_nodes(tree)]


def from_polish(tokens: Sequence[Token]) -> ExprNode:
    """Parse a prefix token sequence back into a tree.

    Inverse of to_polish: round trips preserve structure and token symbols.
    Raises PrefixParseError with the offending index on malformed input.
    """
    pos = 0

    def build() -> ExprNode:
        nonlocal pos
        if pos >= len(tokens):
            raise PrefixParseError("unexpected end of input", len(tokens))
        token = tokens[pos]
        pos += 1
        children = tuple(build() for _ in range(token.arity))
        return ExprNode(token, children)

    tree = build()
    if pos != len(tokens):
        raise PrefixParseError("trailing tokens after a complete expression", pos)
    return tree


def validate_prefix(tokens: Sequence[Token]) -> bool:
    """True iff the running arity budget hits 0 exactly at the last token."""
    if not tokens:
        return False
    budget = 1
    for i, token in enumerate(tokens):
        budget += token.arity - 1
        if budget == 0:
            return i == len(tokens) - 1
        if budget < 0:
            return False
    return False


def canonical_key(tree: ExprNode) -> str:
    """Alias-insensitive serialization, the memoization key for fitness caches."""
    return " ".join(t.canonical for t in to_polish(tree))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_expr(tree: ExprNode, fv: Mapping[str, float]) -> float:
    """Evaluate against a single feature mapping (canonical names as keys)."""
    token = tree.token
    if token.kind == KIND_CONST:
        return token.value  # type: ignore[return-value]
    if token.kind == KIND_FEATURE:
        return float(fv[token.feature])  # type: ignore[index]
    args = [eval_expr(c, fv) for c in tree.children]
    return _SCALAR_OPS[token.symbol](*args)


def eval_expr_columns(tree: ExprNode, matrix: np.ndarray) -> np.ndarray:
    """Evaluate over a (k, 14) feature matrix, one row per candidate.

    Vectorized across rows; returns shape (k,). Feature terminals must be
    canonical engine features (they index matrix columns).
    """
    k = matrix.shape[0]
    out = _eval_columns(tree, matrix)
    if np.ndim(out) == 0:
        return np.full(k, float(out))
    return out


def _eval_columns(tree: ExprNode, matrix: np.ndarray):
    token = tree.token
    if token.kind == KIND_CONST:
        return token.value
    if token.kind == KIND_FEATURE:
        idx = FEATURE_INDEX.get(token.feature)  # type: ignore[arg-type]
        if idx is None:
            raise KeyError(f"unknown engine feature {token.feature!r}")
        return matrix[:, idx]
    args = [_eval_columns(c, matrix) for c in tree.children]
    return _VECTOR_OPS[token.symbol](*args)


def _protected_div(x: float, y: float) -> float:
    return 1.0 if y == 0.0 else x / y


_SCALAR_OPS = {
    "+": lambda x, y: x + y,
    "-": lambda x, y: x - y,
    "*": lambda x, y: x * y,
    "/": _protected_div,
    ">=": lambda x, y: 1.0 if x >= y else 0.0,
    "<=": lambda x, y: 1.0 if x <= y else 0.0,
    "if_else": lambda c, x, y: x if c != 0.0 else y,
    "and": lambda x, y: 1.0 if (x != 0.0 and y != 0.0) else 0.0,
    "or": lambda x, y: 1.0 if (x != 0.0 or y != 0.0) else 0.0,
    "max": lambda x, y: x if x >= y else y,
    "min": lambda x, y: x if x <= y else y,
}


def _vdiv(x, y):
    zero = y == 0.0
    return np.where(zero, 1.0, np.asarray(x) / np.where(zero, 1.0, y))


_VECTOR_OPS = {
    "+": lambda x, y: x + y,
    "-": lambda x, y: x - y,
    "*": lambda x, y: x * y,
    "/": _vdiv,
    ">=": lambda x, y: np.where(np.greater_equal(x, y), 1.0, 0.0),
    "<=": lambda x, y: np.where(np.less_equal(x, y), 1.0, 0.0),
    "if_else": lambda c, x, y: np.where(np.not_equal(c, 0.0), x, y),
    "and": lambda x, y: np.where(np.logical_and(np.not_equal(x, 0.0), np.not_equal(y, 0.0)), 1.0, 0.0),
    "or": lambda x, y: np.where(np.logical_or(np.not_equal(x, 0.0), np.not_equal(y, 0.0)), 1.0, 0.0),
    "max": np.maximum,
    "min": np.minimum,
}


# ---------------------------------------------------------------------------
# Heuristic files: one prefix expression per line, '#' starts a comment.
# ---------------------------------------------------------------------------

def parse_heuristic_line(line: str) -> ExprNode:
    tokens = [parse_token(t) for t in line.split()]
    return from_polish(tokens)


def format_heuristic_line(tree: ExprNode) -> str:
    return " ".join(t.symbol for t in to_polish(tree))


def load_heuristics(path) -> list[ExprNode]:
    trees = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            trees.append(parse_heuristic_line(line))
    return trees


def save_heuristics(path, trees: Iterable[ExprNode], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for tree in trees:
            fh.write(format_heuristic_line(tree) + "\n")
