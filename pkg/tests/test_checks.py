"""Static checks: scope, base types, causality, pointwise function bodies."""

from __future__ import annotations

import pytest

from rill.checks import (
    BaseTypeError, CausalityError, ScopeError, check_program,
)
from rill.parser import parse


def ok(src: str) -> None:
    check_program(parse(src))


def rejects(exc, src: str) -> None:
    with pytest.raises(exc):
        check_program(parse(src))


# ---------------------------------------------------------------------------
# Scope.


def test_unbound_variable():
    rejects(ScopeError, "let x = 1 in y")


def test_unknown_function():
    rejects(ScopeError, "let a = 1.0 in f a")


def test_letrec_binder_visible_in_its_own_rhs():
    ok("let rec x = 0 fby x + 1 in x")


def test_let_binder_not_visible_in_its_own_rhs():
    rejects(ScopeError, "let x = 0 fby x in x")


def test_annotation_names_are_checked():
    rejects(ScopeError, "let rec x : {v : int | always (v >= w)} = 0 fby x in x")


def test_annotation_may_mention_enclosing_bindings():
    ok("let c = 3 in let rec x : {v : int | always (v >= c)} = 3 fby x + 1 in x")


# ---------------------------------------------------------------------------
# Base types.


def test_int_float_mix_rejected():
    rejects(BaseTypeError, "let x = 1 + 2.0 in x")


def test_if_branches_must_agree():
    rejects(BaseTypeError,
            "let b = true in let x = if b then 1 else 2.0 in x")


def test_division_is_float_only():
    rejects(BaseTypeError, "let x = 4 / 2 in x")
    ok("let x = 4.0 / 2.0 in x")


def test_tuple_binder_arity():
    rejects(BaseTypeError, "let rec (a, b) = (1, 2, 3) fby (a, b, a) in a")


def test_annotation_base_must_match_rhs():
    rejects(BaseTypeError,
            "let x : {v : int | v >= 0} = 1.0 in x")


def test_models_operands_share_a_type():
    rejects(BaseTypeError,
            'let x = (1.0 models robot_get "level") + 1 in x')


# ---------------------------------------------------------------------------
# Causality.


def test_zero_delay_self_reference_rejected():
    rejects(CausalityError, "let rec x = x + 1 in x")


def test_fby_breaks_the_cycle():
    ok("let rec x = 0 fby x + 1 in x")


def test_mutual_zero_delay_cycle_through_body():
    rejects(CausalityError, "let rec x = (let y = x in y) in x")


# ---------------------------------------------------------------------------
# Function bodies are pointwise.


def test_fby_in_function_body_rejected():
    rejects(CausalityError,
            "fun f (x : int) : int = 0 fby x\n\nlet a = 1 in f a")


def test_pointwise_function_accepted():
    ok("fun f (x : float) : float = x * x\n\nlet a = 2.0 in f a")


def test_corpus_passes_static_checks(corpus_dir):
    for path in sorted(corpus_dir.glob("*.mrv")):
        check_program(parse(path.read_text(encoding="utf-8")))
