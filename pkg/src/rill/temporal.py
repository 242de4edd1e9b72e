"""Temporal predicate operators and finite-prefix evaluation.

split(q) decomposes a trace predicate into what must hold at the current
instant and what remains for the tail; the contract is the equivalence
q == hd(q1) and next(q2), not syntactic identity. Conjunctions are kept
flattened and deduplicated so that repeated tail-stepping of box predicates
reaches a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .syntax import (
    Always, And, Base, BoolLit, Conj, Eq, FalseP, FloatLit, Gt, IntLit, Next,
    NotP, Refined, RefType, SP, StatePredicate, TLit, TOp, TIte, TApp, TVar,
    Term, TracePredicate, TrueP, TupleV, Value, VarP, TOP,
)


class ValuationMissingVariable(Exception):
    """A predicate mentioned a variable the trace row does not define."""


# ---------------------------------------------------------------------------
# Canonical forms


def is_top(q: TracePredicate) -> bool:
    return isinstance(q, SP) and isinstance(q.pred, TrueP)


def _flatten(q: TracePredicate, out: list[TracePredicate]) -> None:
    if isinstance(q, Conj):
        _flatten(q.left, out)
        _flatten(q.right, out)
    elif not is_top(q):
        out.append(q)


def canon(q: TracePredicate) -> TracePredicate:
    """Flatten and dedupe conjunctions, drop true conjuncts, recurse."""
    match q:
        case SP():
            return q
        case Always(body=b):
            b = canon(b)
            return TOP if is_top(b) else Always(b)
        case Next(body=b):
            b = canon(b)
            return TOP if is_top(b) else Next(b)
        case Conj():
            parts: list[TracePredicate] = []
            _flatten(q, parts)
            seen: list[TracePredicate] = []
            for p in (canon(x) for x in parts):
                if not is_top(p) and p not in seen:
                    seen.append(p)
            return conj_trace(seen)
    raise TypeError(f"not a trace predicate: {q!r}")


def conj_trace(parts: Sequence[TracePredicate]) -> TracePredicate:
    parts = [p for p in parts if not is_top(p)]
    if not parts:
        return TOP
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Conj(p, out)
    return out


def simplify_state(p: StatePredicate) -> StatePredicate:
    """Drop true conjuncts and dedupe; purely cosmetic for obligations."""
    parts: list[StatePredicate] = []

    def flat(x: StatePredicate) -> None:
        if isinstance(x, And):
            flat(x.left)
            flat(x.right)
        elif not isinstance(x, TrueP):
            parts.append(x)

    flat(p)
    seen: list[StatePredicate] = []
    for x in parts:
        if x not in seen:
            seen.append(x)
    if not seen:
        return TrueP()
    out = seen[-1]
    for x in reversed(seen[:-1]):
        out = And(x, out)
    return out


# ---------------------------------------------------------------------------
# hd, impl, split


def hd(q: TracePredicate) -> StatePredicate:
    """The state predicate a trace predicate imposes on the current instant."""
    match q:
        case SP(pred=p):
            return p
        case Conj(left=l, right=r):
            return simplify_state(And(hd(l), hd(r)))
        case Always(body=b):
            return hd(b)
        case Next():
            return TrueP()
    raise TypeError(f"not a trace predicate: {q!r}")


def impl(guard: StatePredicate, q: TracePredicate) -> TracePredicate:
    """Guard every state layer of q by the (instantaneous) condition."""
    match q:
        case SP(pred=p):
            return SP(NotP(And(NotP(NotP(guard)), NotP(p))))
        case Conj(left=l, right=r):
            return Conj(impl(guard, l), impl(guard, r))
        case Always(body=b):
            return Always(impl(guard, b))
        case Next(body=b):
            return Next(impl(guard, b))
    raise TypeError(f"not a trace predicate: {q!r}")


def subst_term(t: Term, sub: Mapping[str, Term]) -> Term:
    """Capture-free substitution of terms for variables (terms bind nothing)."""
    match t:
        case TLit():
            return t
        case TVar(name=n):
            return sub.get(n, t)
        case TOp(op=op, args=args):
            return TOp(op, tuple(subst_term(a, sub) for a in args))
        case TIte(cond=c, then=a, els=b):
            return TIte(subst_state(c, sub), subst_term(a, sub), subst_term(b, sub))
        case TApp(func=f, arg=a):
            return TApp(f, subst_term(a, sub))
    raise TypeError(f"not a term: {t!r}")


def subst_state(p: StatePredicate, sub: Mapping[str, Term]) -> StatePredicate:
    match p:
        case TrueP() | FalseP():
            return p
        case VarP(name=n):
            t = sub.get(n)
            if t is None:
                return p
            if isinstance(t, TVar):
                return VarP(t.name)
            return Eq(t, TLit(BoolLit(True)))
        case Eq(left=l, right=r):
            return Eq(subst_term(l, sub), subst_term(r, sub))
        case Gt(left=l, right=r):
            return Gt(subst_term(l, sub), subst_term(r, sub))
        case And(left=l, right=r):
            return And(subst_state(l, sub), subst_state(r, sub))
        case NotP(body=b):
            return NotP(subst_state(b, sub))
    raise TypeError(f"not a state predicate: {p!r}")


def subst_pred(q: TracePredicate, sub: Mapping[str, Term]) -> TracePredicate:
    match q:
        case SP(pred=p):
            return SP(subst_state(p, sub))
        case Always(body=b):
            return Always(subst_pred(b, sub))
        case Next(body=b):
            return Next(subst_pred(b, sub))
        case Conj(left=l, right=r):
            return Conj(subst_pred(l, sub), subst_pred(r, sub))
    raise TypeError(f"not a trace predicate: {q!r}")


def fv_term(t: Term, out: set[str]) -> None:
    match t:
        case TLit():
            pass
        case TVar(name=n):
            out.add(n)
        case TOp(args=args):
            for a in args:
                fv_term(a, out)
        case TIte(cond=c, then=a, els=b):
            fv_state(c, out)
            fv_term(a, out)
            fv_term(b, out)
        case TApp(arg=a):
            fv_term(a, out)


def fv_state(p: StatePredicate, out: set[str]) -> None:
    match p:
        case TrueP() | FalseP():
            pass
        case VarP(name=n):
            out.add(n)
        case Eq(left=l, right=r) | Gt(left=l, right=r):
            fv_term(l, out)
            fv_term(r, out)
        case And(left=l, right=r):
            fv_state(l, out)
            fv_state(r, out)
        case NotP(body=b):
            fv_state(b, out)


def fv_pred(q: TracePredicate, out: set[str]) -> None:
    match q:
        case SP(pred=p):
            fv_state(p, out)
        case Always(body=b) | Next(body=b):
            fv_pred(b, out)
        case Conj(left=l, right=r):
            fv_pred(l, out)
            fv_pred(r, out)


@dataclass(frozen=True)
class SplitResult:
    """q == hd(now) at this instant, and tail from the next instant on."""

    now: TracePredicate
    tail: TracePredicate


def split(q: TracePredicate) -> SplitResult:
    match q:
        case SP():
            return SplitResult(q, TOP)
        case Next(body=b):
            return SplitResult(TOP, canon(b))
        case Conj(left=l, right=r):
            sl, sr = split(l), split(r)
            return SplitResult(
                canon(Conj(sl.now, sr.now)), canon(Conj(sl.tail, sr.tail))
            )
        case Always(body=b):
            sb = split(b)
            return SplitResult(sb.now, canon(Conj(sb.tail, Always(canon(b)))))
    raise TypeError(f"not a trace predicate: {q!r}")


# ---------------------------------------------------------------------------
# Type-level operators


def type_head(t: RefType) -> RefType:
    match t:
        case Refined(binder=w, base=b, pred=q):
            return Refined(w, b, SP(hd(split(q).now)))
        case _:
            return t


def type_tail(t: RefType) -> RefType:
    match t:
        case Refined(binder=w, base=b, pred=q):
            return Refined(w, b, split(q).tail)
        case _:
            return t


def type_prev(t: RefType) -> RefType:
    """Weakest statement about the same stream viewed one instant earlier."""
    match t:
        case Refined(binder=w, base=b, pred=q):
            q = canon(q)
            return Refined(w, b, TOP if is_top(q) else Next(q))
        case _:
            return t


def env_map(op, env):
    """Apply a type operator pointwise over an ordered (binder, type) env."""
    return tuple((binder, op(t)) for binder, t in env)


# ---------------------------------------------------------------------------
# Finite-prefix three-valued evaluation

Row = Mapping[str, object]


@dataclass(frozen=True)
class Pass:
    pass


@dataclass(frozen=True)
class Violation:
    instant: int
    pred: StatePredicate


@dataclass(frozen=True)
class Inconclusive:
    pass


Verdict = "Pass | Violation | Inconclusive"


def _as_python(v) -> object:
    match v:
        case IntLit(value=n):
            return n
        case FloatLit(value=x):
            return x
        case BoolLit(value=b):
            return b
        case TupleV(items=items):
            return tuple(_as_python(i) for i in items)
        case bool() | int() | float() | tuple():
            return v
    raise TypeError(f"not a runtime value: {v!r}")


def eval_term(t: Term, row: Row):
    match t:
        case TLit(value=v):
            return _as_python(v)
        case TVar(name=n):
            if n not in row:
                raise ValuationMissingVariable(n)
            return _as_python(row[n])
        case TOp(op="neg", args=(a,)):
            return -eval_term(a, row)
        case TOp(op="+", args=(a, b)):
            return eval_term(a, row) + eval_term(b, row)
        case TOp(op="-", args=(a, b)):
            return eval_term(a, row) - eval_term(b, row)
        case TOp(op="*", args=(a, b)):
            return eval_term(a, row) * eval_term(b, row)
        case TOp(op="/", args=(a, b)):
            return eval_term(a, row) / eval_term(b, row)
        case TIte(cond=c, then=a, els=b):
            return eval_term(a, row) if eval_state(c, row) else eval_term(b, row)
    raise TypeError(f"cannot evaluate term {t!r}")


def eval_state(p: StatePredicate, row: Row) -> bool:
    match p:
        case TrueP():
            return True
        case FalseP():
            return False
        case VarP(name=n):
            if n not in row:
                raise ValuationMissingVariable(n)
            v = _as_python(row[n])
            if not isinstance(v, bool):
                raise TypeError(f"{n} is not boolean in this row")
            return v
        case Eq(left=l, right=r):
            return eval_term(l, row) == eval_term(r, row)
        case Gt(left=l, right=r):
            return eval_term(l, row) > eval_term(r, row)
        case And(left=l, right=r):
            return eval_state(l, row) and eval_state(r, row)
        case NotP(body=b):
            return not eval_state(b, row)
    raise TypeError(f"not a state predicate: {p!r}")


def eval_prefix(q: TracePredicate, rows: Sequence[Row]) -> "Pass | Violation | Inconclusive":
    """Three-valued verdict of q over a finite prefix.

    State predicates past the end of the prefix are Inconclusive; always is
    never Pass on a finite prefix; a conjunction's Violation (earliest
    instant) dominates Inconclusive, which dominates Pass.
    """
    return _ev(q, 0, rows)


def _ev(q: TracePredicate, i: int, rows: Sequence[Row]):
    match q:
        case SP(pred=p):
            if i >= len(rows):
                return Inconclusive()
            return Pass() if eval_state(p, rows[i]) else Violation(i, p)
        case Next(body=b):
            return _ev(b, i + 1, rows)
        case Always(body=b):
            for j in range(i, len(rows)):
                v = _ev(b, j, rows)
                if isinstance(v, Violation):
                    return v
            return Inconclusive()
        case Conj(left=l, right=r):
            vl = _ev(l, i, rows)
            vr = _ev(r, i, rows)
            if isinstance(vl, Violation) and isinstance(vr, Violation):
                return vl if vl.instant <= vr.instant else vr
            if isinstance(vl, Violation):
                return vl
            if isinstance(vr, Violation):
                return vr
            if isinstance(vl, Inconclusive) or isinstance(vr, Inconclusive):
                return Inconclusive()
            return Pass()
    raise TypeError(f"not a trace predicate: {q!r}")
