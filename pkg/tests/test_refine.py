"""Refinement verification: the bundled corpus verdict matrix, exact
obligations for the counter, the declarative entry points (entail, subtype,
synthesize), and bounded re-verification of stepped programs."""

from __future__ import annotations

import pytest

from rill import refine
from rill.interp import run
from rill.parser import parse, parse_expr, parse_pred, parse_type
from rill.refine import (
    BaseTypeMismatch, Checker, Invalid, SynthesisUnsupported, Valid,
    WellFormednessError, discharge, entail, make_entry, subtype, synthesize,
    verify_program,
)
from rill.syntax import (
    Always, Eq, Program, Refined, SP, TVar, BOOL, INT,
)
from rill.temporal import hd

VERIFIED = [
    "counter", "delay", "straightline", "square", "tank", "tank_robot",
    "collision", "collision_stationary",
]
REFUTED = [
    "counter_bad", "square_weak", "tank_broken", "collision_bad",
    "collision_crawl",
]


# ---------------------------------------------------------------------------
# Corpus verdict matrix


@pytest.mark.parametrize("name", VERIFIED)
def test_corpus_program_verifies(name, load_program, solver_config):
    report = verify_program(load_program(name), solver_config)
    assert report.passed, report.render()


@pytest.mark.parametrize("name", REFUTED)
def test_corpus_program_is_refuted(name, load_program, solver_config):
    report = verify_program(load_program(name), solver_config)
    assert not report.passed
    assert all(isinstance(r.verdict, Invalid) for r in report.failures), \
        report.render()


# ---------------------------------------------------------------------------
# The counter induction, exact


def test_counter_obligations_exact(load_program, solver_config):
    report = verify_program(load_program("counter"), solver_config)
    assert report.to_rows() == [
        {
            "rule": "check",
            "location": "main/let x/fby-init",
            "formula": "0 <= 0",
            "verdict": "valid",
        },
        {
            "rule": "check",
            "location": "main/let x/fby-step",
            "formula": "0 <= x => 0 <= x + 1",
            "verdict": "valid",
        },
    ]


def test_counter_bad_fails_only_the_base_case(load_program, solver_config):
    report = verify_program(load_program("counter_bad"), solver_config)
    assert not report.passed
    [failure] = report.failures
    row = failure.row()
    assert row["location"] == "main/let x/fby-init"
    assert row["verdict"] == "invalid"
    # The base obligation is ground, so it is refuted without a solver and
    # the counterexample needs no variable assignments.
    assert row["model"] == {}


def test_square_weak_counterexample_is_replayed(load_program, solver_config):
    report = verify_program(load_program("square_weak"), solver_config)
    assert not report.passed
    rows = [r.row() for r in report.failures]
    assert any(
        row["rule"] == "fun-def" and row["replayed"] is True and "x" in row["model"]
        for row in rows
    ), rows


def test_application_argument_obligation_can_fail(solver_config):
    src = (
        "fun f (x : {v : float | v > 0.0}) : {v : float | v >= 0.0} = x\n"
        "\n"
        "f (-1.0)\n"
    )
    report = verify_program(parse(src), solver_config)
    assert not report.passed
    assert any(isinstance(r.verdict, Invalid) for r in report.failures)


def test_if_branches_check_against_the_annotation(solver_config):
    good = parse(
        "let rec n = 0 fby n + 1 in let b = n < 3 in"
        " let y : {v : int | always (v >= 0)} = if b then 1 else 2 in y"
    )
    assert verify_program(good, solver_config).passed
    bad = parse(
        "let rec n = 0 fby n + 1 in let b = n < 3 in"
        " let y : {v : int | always (v >= 0)} = if b then 1 else -2 in y"
    )
    assert not verify_program(bad, solver_config).passed


def test_dead_branch_obligations_hold_vacuously(solver_config):
    # The binding equation b = true makes the else branch unreachable, and
    # its obligation is discharged under the contradictory assumption.
    dead = parse(
        "let b = true in"
        " let y : {v : int | always (v >= 0)} = if b then 1 else -2 in y"
    )
    assert verify_program(dead, solver_config).passed


def test_fundefs_require_scalar_signatures():
    d = parse("fun f (x : int * int) : int = 1\n\nlet z = 2 in z").defs[0]
    with pytest.raises(WellFormednessError):
        Checker().check_fundef(d)


# ---------------------------------------------------------------------------
# Re-verifying a stepped program terminates with bounded obligations even
# though its embedded history grows with every instant.


@pytest.mark.parametrize("instants", [1, 10])
def test_stepped_counter_reverifies_bounded(instants, load_program, solver_config):
    counter = load_program("counter")
    trace = run(counter, instants)
    stepped = Program(counter.defs, trace.final)
    report = verify_program(stepped, solver_config)
    assert report.passed, report.render()
    assert len(report.results) == 6


# ---------------------------------------------------------------------------
# Declarative entry points


def test_entail_uses_environment_facts(solver_config):
    env = (make_entry("x", INT, parse_type("{v : int | always (v >= 0)}")),)
    ob = entail(env, hd(parse_pred("x + 1 >= 1")))
    [result] = discharge([ob], solver_config).results
    assert result.verdict == Valid()


def test_entail_reports_a_countermodel(solver_config):
    env = (make_entry("x", INT, parse_type("{v : int | always (v >= 0)}")),)
    ob = entail(env, hd(parse_pred("x >= 1")))
    [result] = discharge([ob], solver_config).results
    assert isinstance(result.verdict, Invalid)
    assert result.verdict.model["x"] == 0
    assert result.verdict.replayed is True


def test_subtype_accepts_a_stronger_refinement(solver_config):
    narrow = parse_type("{w : int | always (w >= 1)}")
    wide = parse_type("{w : int | always (w >= 0)}")
    report = discharge(subtype(narrow, wide), solver_config)
    assert report.passed
    report = discharge(subtype(wide, narrow), solver_config)
    assert not report.passed


def test_subtype_rejects_mismatched_bases():
    with pytest.raises(BaseTypeMismatch):
        subtype(parse_type("{w : int | always (w >= 0)}"),
                parse_type("{w : float | always (w >= 0.0)}"))


def test_synthesize_builds_an_equational_type():
    t = synthesize((), parse_expr("1 + 2"))
    assert isinstance(t, Refined)
    assert t.base == INT
    match t.pred:
        case Always(body=SP(pred=Eq(left=TVar(name=w)))):
            assert w == t.binder
        case _:
            pytest.fail(f"unexpected synthesized predicate {t.pred!r}")


def test_synthesize_covers_boolean_expressions():
    t = synthesize((), parse_expr("1 < 2"))
    assert t.base == BOOL


def test_synthesize_rejects_stateful_expressions():
    with pytest.raises(SynthesisUnsupported):
        synthesize((), parse_expr("0 fby 1"))
