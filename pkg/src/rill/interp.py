"""Small-step interpreter.

step() advances an expression by one instant: it emits a value and returns
the rewritten expression with histories extended. fby rewrites to a delay of
its right operand; delay evaluates its body under the environment rewound by
one instant; both if branches advance every instant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .syntax import (
    App, BoolLit, Const, Delay, Expr, Fby, FloatLit, FunDef, If, IntLit, Let,
    LetRec, Models, Nil, Prim, Program, Refined, RobotGet, RobotStr, TupleE,
    TupleV, Value, Var, binder_names,
)
from .temporal import eval_prefix, type_tail


class InterpError(Exception):
    pass


class NilAccess(InterpError):
    """A stream was read at an instant where its value is not yet defined."""


class EmptyHistory(InterpError):
    """prev was taken of an environment containing an empty history."""


class MissingDeviceKey(InterpError):
    pass


class ArithError(InterpError):
    """Runtime arithmetic failure (division by zero)."""


History = "tuple[Value, ...]"
StreamEnv = "dict[str, tuple[Value, ...]]"


def prev_env(env) -> dict:
    """Drop the newest value of every history."""
    out = {}
    for name, h in env.items():
        if not h:
            raise EmptyHistory(name)
        out[name] = h[:-1]
    return out


class DeviceTable:
    """Sampled device streams keyed by name; the last sample holds forever."""

    def __init__(self, samples: dict):
        self.samples = {k: [as_value(v) for v in vs] for k, vs in samples.items()}

    @classmethod
    def load(cls, path) -> "DeviceTable":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def value_at(self, key: str, instant: int) -> Value:
        vs = self.samples.get(key)
        if not vs:
            raise MissingDeviceKey(key)
        return vs[min(instant, len(vs) - 1)]


def as_value(v) -> Value:
    if isinstance(v, Value):
        return v
    if isinstance(v, bool):
        return BoolLit(v)
    if isinstance(v, int):
        return IntLit(v)
    if isinstance(v, float):
        return FloatLit(v)
    if isinstance(v, (list, tuple)):
        return TupleV(tuple(as_value(x) for x in v))
    raise TypeError(f"cannot read {v!r} as a stream value")


@dataclass
class RunContext:
    """Per-instant interpreter context: mode, devices, logs."""

    robot_mode: bool = False
    devices: DeviceTable | None = None
    instant: int = 0
    writes: list = field(default_factory=list)
    observed: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    value: Value
    expr: Expr


@dataclass(frozen=True)
class RobotWrite:
    instant: int
    key: str
    value: Value


def _read(env, name: str) -> Value:
    try:
        h = env[name]
    except KeyError:
        raise InterpError(f"unbound variable {name}") from None
    v = h[-1]
    if isinstance(v, Nil):
        raise NilAccess(name)
    return v


def _bind(env, binder, history, v: Value) -> dict:
    """Extend env with the binder's history plus its current value."""
    out = dict(env)
    if isinstance(binder, str):
        out[binder] = history + (v,)
        return out
    names = binder_names(binder)
    if isinstance(v, Nil):
        parts = [Nil()] * len(names)
    else:
        if not isinstance(v, TupleV) or len(v.items) != len(names):
            raise InterpError(f"pattern {binder} bound to {v!r}")
        parts = list(v.items)
    for i, name in enumerate(names):
        past = tuple(h.items[i] if isinstance(h, TupleV) else h for h in history)
        out[name] = past + (parts[i],)
    return out


def _observe(ctx: RunContext, binder, v: Value) -> None:
    if isinstance(binder, str):
        ctx.observed[binder] = v
        return
    names = binder_names(binder)
    if isinstance(v, TupleV):
        for name, item in zip(names, v.items):
            ctx.observed[name] = item


def step(funcs, env, e: Expr, ctx: RunContext) -> StepResult:
    match e:
        case Const(value=v):
            return StepResult(v, e)

        case Var(name=x):
            return StepResult(_read(env, x), e)

        case Prim(op=op, args=args):
            results = [step(funcs, env, a, ctx) for a in args]
            v = apply_prim(op, [r.value for r in results])
            return StepResult(v, Prim(op, tuple(r.expr for r in results)))

        case Fby(left=l, right=r):
            rl = step(funcs, env, l, ctx)
            return StepResult(rl.value, Delay(r))

        case Delay(body=b):
            rb = step(funcs, prev_env(env), b, ctx)
            return StepResult(rb.value, Delay(rb.expr))

        case TupleE(items=items):
            results = [step(funcs, env, i, ctx) for i in items]
            return StepResult(
                TupleV(tuple(r.value for r in results)),
                TupleE(tuple(r.expr for r in results)),
            )

        case If(cond=c, then=t, els=f):
            cv = _read(env, c)
            if not isinstance(cv, BoolLit):
                raise InterpError(f"if condition {c} is not boolean")
            rt = step(funcs, env, t, ctx)
            rf = step(funcs, env, f, ctx)
            chosen = rt.value if cv.value else rf.value
            return StepResult(chosen, If(c, rt.expr, rf.expr))

        case App(func=f, arg=y):
            v = _read(env, y)
            d = funcs.get(f)
            if d is None:
                raise InterpError(f"unknown function {f}")
            return StepResult(eval_pointwise(funcs, {d.argname: v}, d.body), e)

        case Let(history=h, binder=x, ann=ann, rhs=r, body=b):
            rr = step(funcs, env, r, ctx)
            _observe(ctx, x, rr.value)
            env2 = _bind(env, x, h, rr.value)
            rb = step(funcs, env2, b, ctx)
            ann2 = type_tail(ann) if ann is not None else None
            return StepResult(rb.value, Let(h + (rr.value,), x, ann2, rr.expr, rb.expr))

        case LetRec(history=h, binder=x, ann=ann, rhs=r, body=b):
            env1 = _bind(env, x, h, Nil())
            rr = step(funcs, env1, r, ctx)
            _observe(ctx, x, rr.value)
            env2 = _bind(env, x, h, rr.value)
            rb = step(funcs, env2, b, ctx)
            ann2 = type_tail(ann) if ann is not None else None
            return StepResult(rb.value, LetRec(h + (rr.value,), x, ann2, rr.expr, rb.expr))

        case RobotStr(key=k, value=v):
            rv = step(funcs, env, v, ctx)
            ctx.writes.append(RobotWrite(ctx.instant, k, rv.value))
            return StepResult(rv.value, RobotStr(k, rv.expr))

        case Models(model=m, robot=robot):
            rm = step(funcs, env, m, ctx)
            if not ctx.robot_mode:
                return StepResult(rm.value, Models(rm.expr, robot))
            if isinstance(robot, RobotGet):
                if ctx.devices is None:
                    raise MissingDeviceKey(robot.key)
                v = ctx.devices.value_at(robot.key, ctx.instant)
                return StepResult(v, Models(rm.expr, robot))
            rv = step(funcs, env, robot.value, ctx)
            ctx.writes.append(RobotWrite(ctx.instant, robot.key, rv.value))
            return StepResult(rm.value, Models(rm.expr, robot))

    raise TypeError(f"cannot step {e!r}")


def eval_pointwise(funcs, vals: dict, e: Expr) -> Value:
    """Evaluate a pointwise function body: one instant, no stream state."""
    match e:
        case Const(value=v):
            return v
        case Var(name=x):
            try:
                return vals[x]
            except KeyError:
                raise InterpError(f"unbound variable {x} in function body") from None
        case Prim(op=op, args=args):
            return apply_prim(op, [eval_pointwise(funcs, vals, a) for a in args])
        case TupleE(items=items):
            return TupleV(tuple(eval_pointwise(funcs, vals, i) for i in items))
        case If(cond=c, then=t, els=f):
            cv = vals.get(c)
            if not isinstance(cv, BoolLit):
                raise InterpError(f"if condition {c} is not boolean")
            return eval_pointwise(funcs, vals, t if cv.value else f)
        case App(func=f, arg=y):
            d = funcs.get(f)
            if d is None:
                raise InterpError(f"unknown function {f}")
            return eval_pointwise(funcs, {d.argname: vals[y]}, d.body)
        case Let(binder=x, rhs=r, body=b):
            v = eval_pointwise(funcs, vals, r)
            out = dict(vals)
            if isinstance(x, str):
                out[x] = v
            else:
                for name, item in zip(binder_names(x), v.items):
                    out[name] = item
            return eval_pointwise(funcs, out, b)
    raise InterpError(f"function bodies are pointwise; cannot evaluate {e!r}")


def _num(op, a, b):
    try:
        return a.__class__(op(a.value, b.value))
    except ZeroDivisionError:
        raise ArithError("division by zero") from None


def apply_prim(op: str, vs: list) -> Value:
    for v in vs:
        if isinstance(v, Nil):
            raise NilAccess(op)
    match op, *vs:
        case ("neg", a):
            return a.__class__(-a.value)
        case ("not", BoolLit(value=a)):
            return BoolLit(not a)
        case ("and", BoolLit(value=a), BoolLit(value=b)):
            return BoolLit(a and b)
        case ("or", BoolLit(value=a), BoolLit(value=b)):
            return BoolLit(a or b)
        case ("+", a, b):
            return _num(lambda x, y: x + y, a, b)
        case ("-", a, b):
            return _num(lambda x, y: x - y, a, b)
        case ("*", a, b):
            return _num(lambda x, y: x * y, a, b)
        case ("/", FloatLit() as a, FloatLit() as b):
            return _num(lambda x, y: x / y, a, b)
        case ("=", a, b):
            return BoolLit(a.value == b.value)
        case (">", a, b):
            return BoolLit(a.value > b.value)
        case ("<", a, b):
            return BoolLit(a.value < b.value)
        case (">=", a, b):
            return BoolLit(a.value >= b.value)
        case ("<=", a, b):
            return BoolLit(a.value <= b.value)
    raise InterpError(f"bad primitive application {op} {vs!r}")


@dataclass
class Trace:
    """Per-instant observations: every let binding that fired, plus main.

    Bindings under a delay only start firing once the delay has elapsed, and
    bindings on the initial side of an fby stop firing after the first
    instant, so rows need not all share one key set.
    """

    rows: list
    writes: list
    final: Expr

    @property
    def columns(self) -> list:
        seen = []
        for row in self.rows:
            for k in row:
                if k != "instant" and k not in seen:
                    seen.append(k)
        return seen

    def column(self, name: str) -> list:
        """Values of one observation, covering the instants where it fired."""
        return [row[name] for row in self.rows if name in row]


def run(
    program: Program,
    steps: int,
    robot_mode: bool = False,
    devices: DeviceTable | None = None,
) -> Trace:
    funcs = {d.name: d for d in program.defs}
    e = program.main
    rows, writes = [], []
    for i in range(steps):
        ctx = RunContext(robot_mode=robot_mode, devices=devices, instant=i)
        try:
            res = step(funcs, {}, e, ctx)
        except InterpError as exc:
            exc.instant = i
            raise
        e = res.expr
        rows.append({"instant": i, **ctx.observed, "main": res.value})
        writes.extend(ctx.writes)
    return Trace(rows, writes, e)


# ---------------------------------------------------------------------------
# Trace monitoring: replay every annotation in main against the observations.


@dataclass(frozen=True)
class MonitorResult:
    location: str
    verdict: object  # temporal.Pass | Violation | Inconclusive


def _annotated_bindings(e: Expr, out: list) -> None:
    match e:
        case Let(binder=x, ann=ann, rhs=r, body=b) | LetRec(binder=x, ann=ann, rhs=r, body=b):
            if isinstance(ann, Refined):
                out.append((x, ann))
            _annotated_bindings(r, out)
            _annotated_bindings(b, out)
        case Fby(left=l, right=r):
            _annotated_bindings(l, out)
            _annotated_bindings(r, out)
        case Delay(body=b) | RobotStr(value=b) | Models(model=b):
            _annotated_bindings(b, out)
        case If(then=t, els=f):
            _annotated_bindings(t, out)
            _annotated_bindings(f, out)
        case Prim(args=args) | TupleE(items=args):
            for a in args:
                _annotated_bindings(a, out)
        case _:
            return


def monitor(program: Program, trace: Trace) -> list[MonitorResult]:
    """Three-valued verdict of each annotation in main over the trace.

    Predicate binder names map positionally onto the binding's observed
    streams; every other observation at the same instant stays visible under
    its own name, so predicates may mention enclosing bindings. Instants
    where the binding has not fired yet are skipped.
    """
    found: list = []
    _annotated_bindings(program.main, found)
    results = []
    for binder, ann in found:
        vnames = binder_names(binder)
        pnames = binder_names(ann.binder)
        rows = []
        for row in trace.rows:
            if any(n not in row for n in vnames):
                continue
            r = {k: v for k, v in row.items() if k != "instant"}
            for pn, vn in zip(pnames, vnames):
                r[pn] = row[vn]
            rows.append(r)
        verdict = eval_prefix(ann.pred, rows)
        results.append(MonitorResult("let " + ",".join(vnames), verdict))
    return results
