"""SMT backend: deterministic lowering, model parsing, process driving with
fake solvers, and exact-rational model replay."""

from __future__ import annotations

import os
import stat
from fractions import Fraction

import pytest

from rill import smt
from rill.smt import (
    FunContract, RawModelValue, Sat, SmtScript, SolverConfig, SolverCrash,
    Unknown, Unsat, UnsupportedTerm, discover_solver, lower, lower_state,
    lower_term, lower_value, parse_model, replay_falsifies, smt_symbol, solve,
)
from rill.syntax import (
    And, BoolLit, Eq, FloatLit, Gt, IntLit, NotP, TApp, TIte, TLit, TOp,
    TVar, TrueP, BOOL, FLOAT, INT,
)

X = TVar("x")
ZERO = TLit(IntLit(0))
ONE = TLit(IntLit(1))


# ---------------------------------------------------------------------------
# Lowering


def test_lower_values():
    assert lower_value(IntLit(3)) == "3"
    assert lower_value(IntLit(-3)) == "(- 3)"
    assert lower_value(BoolLit(True)) == "true"
    assert lower_value(BoolLit(False)) == "false"


def test_lower_float_uses_source_text_when_decimal():
    assert lower_value(FloatLit(0.1, "0.1")) == "0.1"
    assert lower_value(FloatLit(-0.5, "-0.5")) == "(- 0.5)"


def test_lower_float_without_text_is_an_exact_rational():
    assert lower_value(FloatLit(0.5, None)) == "(/ 1.0 2.0)"
    assert lower_value(FloatLit(-2.0, None)) == "(- 2.0)"


def test_symbols_quote_only_when_needed():
    assert smt_symbol("x") == "x"
    assert smt_symbol("x@-1") == "x@-1"
    assert smt_symbol("two words") == "|two words|"


def test_lower_terms_and_predicates():
    assert lower_term(TOp("+", (X, ONE))) == "(+ x 1)"
    assert lower_term(TOp("neg", (X,))) == "(- x)"
    assert (
        lower_term(TIte(Gt(X, ZERO), X, TOp("neg", (X,))))
        == "(ite (> x 0) x (- x))"
    )
    assert lower_state(And(Eq(X, ZERO), NotP(Gt(X, ONE)))) \
        == "(and (= x 0) (not (> x 1)))"


def test_lower_builds_a_refutation_script():
    script = lower(
        sorts=(("x", INT), ("ok", BOOL)),
        assumptions=(Gt(X, ZERO),),
        goal=Gt(TOp("+", (X, ONE)), ZERO),
        comment="step case",
    )
    assert script.text == (
        "; step case\n"
        "(set-logic QF_UFNIRA)\n"
        "(declare-const x Int)\n"
        "(declare-const ok Bool)\n"
        "(assert (> x 0))\n"
        "(assert (not (> (+ x 1) 0)))\n"
        "(check-sat)\n"
        "(get-model)\n"
    )


def test_lowering_is_deterministic():
    args = dict(
        sorts=(("a", FLOAT),),
        assumptions=(Gt(TVar("a"), ZERO),),
        goal=Gt(TVar("a"), TLit(IntLit(-1))),
    )
    assert lower(**args).text == lower(**args).text


def test_lower_asserts_function_contracts_per_instance():
    c = FunContract(
        name="f", argname="x", argbase=INT, argpred=Gt(TVar("x"), ZERO),
        retbinder="v", retbase=INT, retpred=Gt(TVar("v"), ZERO),
    )
    script = lower(
        sorts=(("y", INT),),
        assumptions=(),
        goal=Gt(TApp("f", TVar("y")), ZERO),
        contracts=(c,),
    )
    assert "(declare-fun f (Int) Int)" in script.declarations
    assert "(assert (=> (> y 0) (> (f y) 0)))" in script.assertions


def test_lower_rejects_unknown_function_applications():
    with pytest.raises(UnsupportedTerm):
        lower(sorts=(), assumptions=(), goal=Gt(TApp("g", ZERO), ZERO))


# ---------------------------------------------------------------------------
# Model parsing


def test_parse_model_reads_constants():
    out = """
    (
      (define-fun x () Int 3)
      (define-fun y () Real (- (/ 1.0 2.0)))
      (define-fun b () Bool true)
      (define-fun z () Real 15.25)
    )
    """
    assert parse_model(out) == {
        "x": 3, "y": Fraction(-1, 2), "b": True, "z": Fraction(61, 4),
    }


def test_parse_model_unquotes_symbols_and_keeps_odd_values_raw():
    out = '((define-fun |l@-1| () Real (root-obj (+ (^ x 2) (- 2)) 1)))'
    model = parse_model(out)
    assert list(model) == ["l@-1"]
    assert isinstance(model["l@-1"], RawModelValue)


def test_parse_model_ignores_non_nullary_functions():
    out = "((define-fun f ((a Int)) Int (+ a 1)))"
    assert parse_model(out) == {}


# ---------------------------------------------------------------------------
# Driving a solver process. The solvers here are tiny shell scripts, which
# pins the process contract: argv is command + script path, stdout carries
# the verdict, timeouts and crashes are kept distinct from verdicts.


def _fake_solver(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/bin/sh\n" + body, encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return [str(path)]


@pytest.fixture(autouse=True)
def _fresh_cache():
    smt.clear_cache()
    yield
    smt.clear_cache()


def test_solve_unsat(tmp_path):
    cmd = _fake_solver(tmp_path, "s", "echo unsat\n")
    cfg = SolverConfig(command=cmd, cache=False)
    assert solve("(check-sat)\n", cfg) == Unsat()


def test_solve_sat_with_model(tmp_path):
    cmd = _fake_solver(
        tmp_path, "s",
        'echo sat\necho "((define-fun x () Int 3))"\n',
    )
    cfg = SolverConfig(command=cmd, cache=False)
    assert solve("(check-sat)\n", cfg) == Sat({"x": 3})


def test_solve_unknown(tmp_path):
    cmd = _fake_solver(tmp_path, "s", "echo unknown\n")
    cfg = SolverConfig(command=cmd, cache=False)
    assert solve("(check-sat)\n", cfg) == Unknown("solver returned unknown")


def test_solver_timeout_is_unknown_not_a_verdict(tmp_path):
    cmd = _fake_solver(tmp_path, "s", "sleep 5\necho unsat\n")
    cfg = SolverConfig(command=cmd, timeout=0.2, cache=False)
    result = solve("(check-sat)\n", cfg)
    assert isinstance(result, Unknown)
    assert "timeout" in result.reason


def test_garbage_output_is_a_crash(tmp_path):
    cmd = _fake_solver(tmp_path, "s", "echo segmentation fault >&2\nexit 139\n")
    cfg = SolverConfig(command=cmd, cache=False)
    with pytest.raises(SolverCrash) as e:
        solve("(check-sat)\n", cfg)
    assert "segmentation fault" in str(e.value)


def test_missing_binary_is_a_crash(tmp_path):
    cfg = SolverConfig(command=[str(tmp_path / "nope")], cache=False)
    with pytest.raises(SolverCrash):
        solve("(check-sat)\n", cfg)


def test_solver_receives_the_script_as_a_file(tmp_path):
    cmd = _fake_solver(tmp_path, "s", 'grep -q my-marker "$1" && echo unsat\n')
    cfg = SolverConfig(command=cmd, cache=False)
    assert solve("; my-marker\n(check-sat)\n", cfg) == Unsat()


def test_results_are_cached_by_script_text(tmp_path):
    counter = tmp_path / "count"
    counter.write_text("0")
    cmd = _fake_solver(
        tmp_path, "s",
        f'n=$(cat "{counter}")\nexpr "$n" + 1 > "{counter}"\necho unsat\n',
    )
    cfg = SolverConfig(command=cmd, cache=True)
    for _ in range(3):
        assert solve("(check-sat)\n", cfg) == Unsat()
    assert counter.read_text().strip() == "1"
    smt.clear_cache()
    solve("(check-sat)\n", cfg)
    assert counter.read_text().strip() == "2"


def test_dump_dir_keeps_numbered_scripts(tmp_path):
    cmd = _fake_solver(tmp_path, "s", "echo unsat\n")
    dump = tmp_path / "dump"
    cfg = SolverConfig(command=cmd, dump_dir=dump, cache=False)
    solve("(check-sat)\n", cfg)
    kept = list(dump.glob("*.smt2"))
    assert len(kept) == 1
    assert kept[0].read_text() == "(check-sat)\n"


# ---------------------------------------------------------------------------
# Discovery


def test_discovery_prefers_the_explicit_command(monkeypatch):
    monkeypatch.setenv("RILL_SOLVER", "env-solver")
    assert discover_solver("z3 -smt2") == ["z3", "-smt2"]


def test_discovery_reads_the_environment(monkeypatch):
    monkeypatch.setenv("RILL_SOLVER", "mysolver --flag")
    assert discover_solver(None) == ["mysolver", "--flag"]


# ---------------------------------------------------------------------------
# Model replay


def test_replay_confirms_a_falsifying_model():
    assumptions = (Gt(X, ZERO),)
    goal = Gt(X, ONE)
    assert replay_falsifies(assumptions, goal, {"x": 1})
    assert not replay_falsifies(assumptions, goal, {"x": 2})   # goal holds
    assert not replay_falsifies(assumptions, goal, {"x": 0})   # assumption fails


def test_replay_is_exact_rational():
    # 0.1 + 0.2 = 0.3 is false in floats but true for the source rationals.
    goal = Eq(
        TOp("+", (TLit(FloatLit(0.1, "0.1")), TLit(FloatLit(0.2, "0.2")))),
        TLit(FloatLit(0.3, "0.3")),
    )
    assert not replay_falsifies((), goal, {})


def test_replay_refuses_uninterpreted_model_values():
    with pytest.raises(UnsupportedTerm):
        replay_falsifies((), TrueP(), {"x": RawModelValue("(root-obj x 1)")})


# ---------------------------------------------------------------------------
# One round trip through the real solver


def test_real_solver_round_trip(solver_config):
    unsat = lower(
        sorts=(("x", INT),),
        assumptions=(Gt(X, ZERO),),
        goal=Gt(TOp("+", (X, ONE)), ZERO),
    )
    assert solve(unsat, solver_config) == Unsat()

    sat = lower(sorts=(("x", INT),), assumptions=(Gt(X, ZERO),), goal=Gt(X, ONE))
    result = solve(sat, solver_config)
    assert isinstance(result, Sat)
    assert replay_falsifies((Gt(X, ZERO),), Gt(X, ONE), result.model)
