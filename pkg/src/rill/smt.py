"""SMT-LIB 2 backend.

Lowering is a pure function of the obligation, producing byte-identical
scripts for identical inputs: one set-logic, sorted declarations, the
assumptions, exactly one (assert (not goal)), one (check-sat), one
(get-model). Solving shells out to an external solver, one process per call,
with a wall-clock timeout enforced by the driver so any SMT-LIB 2 solver
works unmodified.
"""

from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .syntax import (
    And, BoolLit, Eq, FalseP, FloatLit, Gt, IntLit, NotP, StatePredicate,
    TApp, TIte, TLit, TOp, TVar, Term, TrueP, VarP, float_rational,
    BOOL, FLOAT, INT,
)

LOGIC = "QF_UFNIRA"

_SORTS = {INT: "Int", FLOAT: "Real", BOOL: "Bool"}


class UnsupportedTerm(Exception):
    pass


class SolverCrash(Exception):
    """The solver exited abnormally or printed something unparseable."""

    def __init__(self, message: str, stderr: str = ""):
        self.stderr = stderr
        super().__init__(message if not stderr else f"{message}\n{stderr.strip()}")


class SolverUnavailable(Exception):
    pass


@dataclass(frozen=True)
class FunContract:
    """A proven function signature, asserted at each application instance."""

    name: str
    argname: str
    argbase: str
    argpred: StatePredicate
    retbinder: str
    retbase: str
    retpred: StatePredicate


@dataclass(frozen=True)
class SmtScript:
    logic: str
    declarations: tuple[str, ...]
    assertions: tuple[str, ...]  # the last one asserts the negated goal
    comment: str = ""

    @property
    def text(self) -> str:
        lines = []
        if self.comment:
            lines.append(f"; {self.comment}")
        lines.append(f"(set-logic {self.logic})")
        lines.extend(self.declarations)
        lines.extend(self.assertions)
        lines.append("(check-sat)")
        lines.append("(get-model)")
        return "\n".join(lines) + "\n"


_SIMPLE_SYMBOL = re.compile(r"[A-Za-z~!@$%^&*_+=<>.?/-][A-Za-z0-9~!@$%^&*_+=<>.?/-]*")


def smt_symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.fullmatch(name):
        return name
    return "|" + name.replace("|", "") + "|"


def _rational_sexpr(fr: Fraction) -> str:
    if fr < 0:
        return f"(- {_rational_sexpr(-fr)})"
    if fr.denominator == 1:
        return f"{fr.numerator}.0"
    return f"(/ {fr.numerator}.0 {fr.denominator}.0)"


_PLAIN_DECIMAL = re.compile(r"\d+\.\d+")


def lower_value(v) -> str:
    match v:
        case IntLit(value=n):
            return str(n) if n >= 0 else f"(- {-n})"
        case BoolLit(value=b):
            return "true" if b else "false"
        case FloatLit(value=x, text=t):
            if t is not None:
                if _PLAIN_DECIMAL.fullmatch(t):
                    return t
                if t.startswith("-") and _PLAIN_DECIMAL.fullmatch(t[1:]):
                    return f"(- {t[1:]})"
                return _rational_sexpr(Fraction(t))
            return _rational_sexpr(Fraction(x))
    raise UnsupportedTerm(f"cannot lower value {v!r}")


def lower_term(t: Term) -> str:
    match t:
        case TLit(value=v):
            return lower_value(v)
        case TVar(name=n):
            return smt_symbol(n)
        case TOp(op="neg", args=(a,)):
            return f"(- {lower_term(a)})"
        case TOp(op=op, args=(a, b)) if op in ("+", "-", "*", "/"):
            return f"({op} {lower_term(a)} {lower_term(b)})"
        case TIte(cond=c, then=a, els=b):
            return f"(ite {lower_state(c)} {lower_term(a)} {lower_term(b)})"
        case TApp(func=f, arg=a):
            return f"({smt_symbol(f)} {lower_term(a)})"
    raise UnsupportedTerm(f"cannot lower term {t!r}")


def lower_state(p: StatePredicate) -> str:
    match p:
        case TrueP():
            return "true"
        case FalseP():
            return "false"
        case VarP(name=n):
            return smt_symbol(n)
        case Eq(left=l, right=r):
            return f"(= {lower_term(l)} {lower_term(r)})"
        case Gt(left=l, right=r):
            return f"(> {lower_term(l)} {lower_term(r)})"
        case And(left=l, right=r):
            return f"(and {lower_state(l)} {lower_state(r)})"
        case NotP(body=b):
            return f"(not {lower_state(b)})"
    raise UnsupportedTerm(f"cannot lower predicate {p!r}")


def _collect_apps(t, out: dict) -> None:
    match t:
        case TApp(func=f, arg=a):
            out.setdefault(f, [])
            if a not in out[f]:
                out[f].append(a)
            _collect_apps(a, out)
        case TOp(args=args):
            for a in args:
                _collect_apps(a, out)
        case TIte(cond=c, then=a, els=b):
            _collect_apps_state(c, out)
            _collect_apps(a, out)
            _collect_apps(b, out)
        case _:
            return


def _collect_apps_state(p, out: dict) -> None:
    match p:
        case Eq(left=l, right=r) | Gt(left=l, right=r):
            _collect_apps(l, out)
            _collect_apps(r, out)
        case And(left=l, right=r):
            _collect_apps_state(l, out)
            _collect_apps_state(r, out)
        case NotP(body=b):
            _collect_apps_state(b, out)
        case _:
            return


def lower(
    sorts: "tuple[tuple[str, str], ...]",
    assumptions: "tuple[StatePredicate, ...]",
    goal: StatePredicate,
    contracts: "tuple[FunContract, ...]" = (),
    comment: str = "",
) -> SmtScript:
    """Build the refutation script: assumptions asserted, goal negated."""
    from .temporal import subst_state  # local import to avoid a cycle

    decls = [
        f"(declare-const {smt_symbol(name)} {_SORTS[base]})" for name, base in sorts
    ]
    by_name = {c.name: c for c in contracts}
    apps: dict[str, list] = {}
    for a in assumptions:
        _collect_apps_state(a, apps)
    _collect_apps_state(goal, apps)
    asserts = []
    for fname in sorted(apps):
        c = by_name.get(fname)
        if c is None:
            raise UnsupportedTerm(f"application of unknown function {fname}")
        decls.append(
            f"(declare-fun {smt_symbol(c.name)} ({_SORTS[c.argbase]}) {_SORTS[c.retbase]})"
        )
        for arg in apps[fname]:
            inst_arg = subst_state(c.argpred, {c.argname: arg})
            inst_ret = subst_state(
                c.retpred, {c.argname: arg, c.retbinder: TApp(c.name, arg)}
            )
            asserts.append(
                f"(assert (=> {lower_state(inst_arg)} {lower_state(inst_ret)}))"
            )
    for a in assumptions:
        asserts.append(f"(assert {lower_state(a)})")
    asserts.append(f"(assert (not {lower_state(goal)}))")
    return SmtScript(LOGIC, tuple(decls), tuple(asserts), comment)


# ---------------------------------------------------------------------------
# Solver results


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Sat:
    model: dict


@dataclass(frozen=True)
class Unknown:
    reason: str


@dataclass(frozen=True)
class RawModelValue:
    """A model value this client does not interpret (e.g. algebraic reals)."""

    text: str


# ---------------------------------------------------------------------------
# Model parsing: a tiny s-expression reader over the solver's stdout.


def _sexpr_tokens(s: str):
    for m in re.finditer(r"\(|\)|\"(?:[^\"]|\"\")*\"|[^\s()]+", s):
        yield m.group()


def _read_sexprs(tokens) -> list:
    out, stack = [], []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            node = stack.pop()
            (stack[-1] if stack else out).append(node)
        else:
            (stack[-1] if stack else out).append(tok)
    return out


def _model_value(node):
    match node:
        case "true":
            return True
        case "false":
            return False
        case str() as s:
            if re.fullmatch(r"-?\d+", s):
                return int(s)
            if re.fullmatch(r"-?\d+\.\d+", s):
                return Fraction(s)
            return RawModelValue(s)
        case ["-", v]:
            inner = _model_value(v)
            if isinstance(inner, (int, Fraction)):
                return -inner
            return RawModelValue(_render_sexpr(node))
        case ["/", a, b]:
            na, nb = _model_value(a), _model_value(b)
            if isinstance(na, (int, Fraction)) and isinstance(nb, (int, Fraction)):
                return Fraction(na) / Fraction(nb)
            return RawModelValue(_render_sexpr(node))
        case ["to_real", v]:
            return _model_value(v)
    return RawModelValue(_render_sexpr(node))


def _render_sexpr(node) -> str:
    if isinstance(node, list):
        return "(" + " ".join(_render_sexpr(n) for n in node) + ")"
    return str(node)


def parse_model(output: str) -> dict:
    """Extract constant assignments from (get-model) output."""
    nodes = _read_sexprs(_sexpr_tokens(output))
    model = {}

    def walk(ns):
        for n in ns:
            if isinstance(n, list):
                if len(n) >= 5 and n[0] == "define-fun" and n[2] == []:
                    name = n[1].strip("|") if isinstance(n[1], str) else n[1]
                    model[name] = _model_value(n[4])
                else:
                    walk(n)

    walk(nodes)
    return model


# ---------------------------------------------------------------------------
# Solver discovery and invocation

_SHIM_DIR = Path(__file__).parent / "solver" / "z3client"

_ENV_VAR = "RILL_SOLVER"


def discover_solver(explicit: "str | None" = None) -> list[str]:
    """Resolve the solver command: flag, env var, PATH, then the bundled shim."""
    if explicit:
        return shlex.split(explicit)
    env = os.environ.get(_ENV_VAR)
    if env:
        return shlex.split(env)
    for name in ("z3", "cvc5"):
        found = shutil.which(name)
        if found:
            return [found]
    node = shutil.which("node")
    shim = _SHIM_DIR / "z3smt2.mjs"
    if node and shim.exists() and (_SHIM_DIR / "node_modules" / "z3-solver").exists():
        return [node, str(shim)]
    raise SolverUnavailable(
        "no SMT solver found: pass --solver, set RILL_SOLVER, put z3 or cvc5 on "
        f"PATH, or run `npm install` in {_SHIM_DIR} to enable the bundled wasm z3"
    )


@dataclass
class SolverConfig:
    command: "list[str] | None" = None
    timeout: float = 10.0
    dump_dir: "Path | None" = None
    cache: bool = True

    def resolved_command(self) -> list[str]:
        if self.command is None:
            self.command = discover_solver()
        return self.command


_cache: dict = {}
_cache_lock = threading.Lock()
_dump_counter = [0]


def _dump_path(dump_dir: Path) -> Path:
    dump_dir.mkdir(parents=True, exist_ok=True)
    with _cache_lock:
        _dump_counter[0] += 1
        return dump_dir / f"{_dump_counter[0]:04d}.smt2"


def solve(script: "SmtScript | str", config: "SolverConfig | None" = None):
    """Run one solver process on the script; Unsat/Sat(model)/Unknown(reason).

    Timeouts and solver crashes never become Unsat or Sat: a timeout returns
    Unknown, and an unparseable or abnormal run raises SolverCrash.
    """
    config = config or SolverConfig()
    text = script.text if isinstance(script, SmtScript) else script
    if config.cache:
        with _cache_lock:
            if text in _cache:
                return _cache[text]
    cmd = config.resolved_command()

    if config.dump_dir is not None:
        path = _dump_path(Path(config.dump_dir))
        path.write_text(text, encoding="utf-8")
        keep = True
    else:
        fd, raw = tempfile.mkstemp(suffix=".smt2", prefix="rill-")
        path = Path(raw)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        keep = False

    try:
        try:
            proc = subprocess.run(
                cmd + [str(path)],
                capture_output=True,
                text=True,
                timeout=config.timeout,
            )
        except subprocess.TimeoutExpired:
            result = Unknown(f"timeout after {config.timeout}s")
            if config.cache:
                with _cache_lock:
                    _cache[text] = result
            return result
        except OSError as exc:
            raise SolverCrash(f"could not run solver {cmd[0]}: {exc}") from None
        result = _parse_verdict(proc)
        if config.cache:
            with _cache_lock:
                _cache[text] = result
        return result
    finally:
        if not keep:
            try:
                path.unlink()
            except OSError:
                pass


def _parse_verdict(proc):
    lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
    verdict = next((ln for ln in lines if ln in ("sat", "unsat", "unknown")), None)
    if verdict is None:
        raise SolverCrash(
            f"solver produced no verdict (exit {proc.returncode}): {proc.stdout[:500]!r}",
            proc.stderr,
        )
    if verdict == "unsat":
        return Unsat()
    if verdict == "unknown":
        return Unknown("solver returned unknown")
    rest = proc.stdout[proc.stdout.index("sat") + 3 :]
    return Sat(parse_model(rest))


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


# ---------------------------------------------------------------------------
# Model replay: evaluate predicates over exact rationals to confirm that a
# reported model really falsifies the implication.


def _replay_value(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    raise UnsupportedTerm(f"cannot replay model value {v!r}")


def replay_term(t: Term, model: dict):
    match t:
        case TLit(value=IntLit(value=n)):
            return Fraction(n)
        case TLit(value=FloatLit() as f):
            return float_rational(f)
        case TLit(value=BoolLit(value=b)):
            return b
        case TVar(name=n):
            if n in model:
                return _replay_value(model[n])
            return Fraction(0)
        case TOp(op="neg", args=(a,)):
            return -replay_term(a, model)
        case TOp(op="+", args=(a, b)):
            return replay_term(a, model) + replay_term(b, model)
        case TOp(op="-", args=(a, b)):
            return replay_term(a, model) - replay_term(b, model)
        case TOp(op="*", args=(a, b)):
            return replay_term(a, model) * replay_term(b, model)
        case TOp(op="/", args=(a, b)):
            d = replay_term(b, model)
            if d == 0:
                raise UnsupportedTerm("division by zero during replay")
            return replay_term(a, model) / d
        case TIte(cond=c, then=a, els=b):
            return replay_term(a, model) if replay_state(c, model) else replay_term(b, model)
    raise UnsupportedTerm(f"cannot replay term {t!r}")


def replay_state(p: StatePredicate, model: dict) -> bool:
    match p:
        case TrueP():
            return True
        case FalseP():
            return False
        case VarP(name=n):
            v = model.get(n, False)
            if not isinstance(v, bool):
                raise UnsupportedTerm(f"boolean variable {n} bound to {v!r}")
            return v
        case Eq(left=l, right=r):
            return replay_term(l, model) == replay_term(r, model)
        case Gt(left=l, right=r):
            return replay_term(l, model) > replay_term(r, model)
        case And(left=l, right=r):
            return replay_state(l, model) and replay_state(r, model)
        case NotP(body=b):
            return not replay_state(b, model)
    raise UnsupportedTerm(f"cannot replay predicate {p!r}")


def replay_falsifies(assumptions, goal, model: dict) -> bool:
    """True when the model satisfies all assumptions and falsifies the goal."""
    if any(isinstance(v, RawModelValue) for v in model.values()):
        raise UnsupportedTerm("model contains uninterpreted values")
    return all(replay_state(a, model) for a in assumptions) and not replay_state(
        goal, model
    )
