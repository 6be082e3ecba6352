import numpy as np
import pytest

from portdispatch import (
    ExprNode,
    PrefixParseError,
    Token,
    eval_expr,
    eval_expr_columns,
    format_heuristic_line,
    from_polish,
    leaf,
    parse_heuristic_line,
    parse_token,
    to_polish,
    token_count,
    tree_depth,
    validate_prefix,
)
from portdispatch.expressions import load_heuristics, save_heuristics
from portdispatch.features import FEATURE_NAMES
from portdispatch.gp import random_tree


def branch_example_tree() -> ExprNode:
    # if_else(a >= 5, b * c, 2)
    return from_polish([parse_token(s) for s in
                        "if_else >= a 5 * b c 2".split()])


def test_branching_tree_selects_then_branch():
    tree = branch_example_tree()
    assert eval_expr(tree, {"a": 6, "b": 3, "c": 4}) == 12.0


def test_branching_tree_selects_else_branch():
    tree = branch_example_tree()
    assert eval_expr(tree, {"a": 4, "b": 3, "c": 4}) == 2.0


def test_protected_division_by_zero_yields_one():
    tree = from_polish([parse_token(s) for s in "/ 5 0".split()])
    assert eval_expr(tree, {}) == 1.0


@pytest.mark.parametrize("text,expected", [
    (">= 5 5", 1.0),
    ("<= 5 2", 0.0),
    ("and 2 0", 0.0),
    ("and 2 1", 1.0),
    ("or 0 0", 0.0),
    ("or 0 5", 1.0),
    ("max 2 5", 5.0),
    ("min 2 5", 2.0),
    ("- 2 5", -3.0),
])
def test_operator_semantics(text, expected):
    assert eval_expr(parse_heuristic_line(text), {}) == expected


def test_boolean_operators_closed_over_zero_one(rng):
    ops = [">=", "<=", "and", "or"]
    for _ in range(200):
        op = ops[int(rng.integers(len(ops)))]
        x, y = rng.normal(size=2) * 10
        sx = "0.5" if x > 0 else "1"
        tree = parse_heuristic_line(f"{op} {sx} {'2' if y > 0 else '5'}")
        assert eval_expr(tree, {}) in (0.0, 1.0)


def test_round_trip_structural_identity(rng):
    for _ in range(1000):
        tree = random_tree(rng, int(rng.integers(1, 7)), "grow")
        seq = to_polish(tree)
        assert validate_prefix(seq)
        assert from_polish(seq) == tree
        assert to_polish(from_polish(seq)) == seq


def test_single_terminal_round_trip():
    tree = leaf(Token.feat("travel_time"))
    assert to_polish(tree) == [Token.feat("travel_time")]
    assert from_polish(to_polish(tree)) == tree


def test_missing_operand_is_parse_error_at_end():
    with pytest.raises(PrefixParseError) as err:
        from_polish([Token.op("+"), Token.feat("a")])
    assert err.value.index == 2


def test_trailing_token_is_parse_error():
    tokens = [parse_token(s) for s in "* b c 2".split()]
    assert not validate_prefix(tokens)
    with pytest.raises(PrefixParseError) as err:
        from_polish(tokens)
    assert err.value.index == 3


def test_validate_prefix_cases():
    assert validate_prefix([parse_token(s) for s in "* b c".split()])
    assert not validate_prefix([parse_token(s) for s in "* b c 2".split()])
    assert not validate_prefix([parse_token(s) for s in "+ a".split()])
    assert not validate_prefix([])


def test_depth_and_count():
    tree = branch_example_tree()
    assert tree_depth(tree) == 2
    assert token_count(tree) == 8
    assert tree_depth(leaf(Token.const(1.0))) == 0


def test_scalar_and_columns_paths_agree(rng):
    names = list(FEATURE_NAMES)
    for _ in range(200):
        tree = random_tree(rng, int(rng.integers(1, 6)), "grow")
        matrix = rng.normal(size=(5, len(names))) * 50
        vector = eval_expr_columns(tree, matrix)
        for row in range(5):
            fv = dict(zip(names, matrix[row]))
            assert vector[row] == eval_expr(tree, fv)


def test_eval_totality_on_random_trees(rng):
    names = list(FEATURE_NAMES)
    for _ in range(500):
        tree = random_tree(rng, int(rng.integers(1, 7)), "grow")
        matrix = np.abs(rng.normal(size=(3, len(names)))) * 1000
        assert np.isfinite(eval_expr_columns(tree, matrix)).all()


def test_heuristic_file_round_trip_preserves_alias_tokens(tmp_path):
    path = tmp_path / "rules.heur"
    path.write_text("# comment line\nif_else >= f1 5 * f3 f3 2\nmax travel_time 10\n")
    trees = load_heuristics(path)
    assert len(trees) == 2
    assert format_heuristic_line(trees[0]) == "if_else >= f1 5 * f3 f3 2"
    assert format_heuristic_line(trees[1]) == "max travel_time 10"
    # alias and canonical name evaluate identically
    fv = {name: 0.0 for name in FEATURE_NAMES}
    fv["travel_time"] = 7.0
    fv["qc_remaining_tasks"] = 3.0
    assert eval_expr(trees[0], fv) == 9.0
    out = tmp_path / "back.heur"
    save_heuristics(out, trees)
    assert out.read_text().splitlines() == [
        "if_else >= f1 5 * f3 f3 2", "max travel_time 10"]
