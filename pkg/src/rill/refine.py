"""Refinement type checking.

Programs are checked against trace-refinement annotations by unrolling each
temporal goal instant by instant: at every depth the current-instant part
(hd of the split) becomes one SMT obligation and the residual advances, with
the environment's refinements advanced in lockstep. Residuals of always-bound
predicates reach a fixed point after canonicalization, so the unrolling stops
as soon as a depth would repeat the previous obligation verbatim; unbounded
chains of next are rejected with a depth diagnostic.

Obligations close over the environment by need: a symbol x@-2 pulls in the
concrete history value when one exists, the always-layers of x's declared
refinement otherwise, and the defining equation of x when its right-hand side
translates to a term. Expression-to-term translation covers the pointwise
fragment (constants, variables, arithmetic, conditionals, applications,
models, delays, inlined lets); anything else is left as a fresh unconstrained
constant, which keeps the checker sound at the price of completeness.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import checks, smt
from .smt import FunContract
from .syntax import (
    Always, And, App, Base, BoolLit, Conj, Const, Delay, Eq, Expr, FalseP,
    Fby, FunDef, Gt, If, Let, LetRec, Models, Next, Nil,
    NotP, Prim, Program, Refined, RefType, RobotGet, RobotStr, SP,
    StatePredicate, TApp, TIte, TLit, TOp, TVar, Term, TracePredicate,
    TrueP, TupleE, TupleV, Var, VarP, TOP, base_of, binder_names, is_scalar,
    or_, pretty_state, BOOL, FLOAT, INT,
)
from .temporal import (
    canon, fv_state, hd, impl, is_top, simplify_state, split, subst_pred,
    subst_state,
)

MAX_UNROLL = 64

# How many frames back an obligation materializes equations and facts for.
# Assumptions are antecedents, so dropping older frames is always sound; the
# cutoff is what lets unrolling reach a textual fixed point on programs whose
# embedded histories would otherwise chain one frame deeper per unroll. No
# obligation in this system links values more than a couple of frames apart
# (a delay contributes one frame), so the window is generous.
LOOKBACK = 4


class RefineError(Exception):
    pass


class WellFormednessError(RefineError):
    pass


class BaseTypeMismatch(RefineError):
    pass


class SynthesisUnsupported(RefineError):
    pass


class ObligationConstructionError(RefineError):
    pass


class _Untranslatable(Exception):
    """Internal: the expression has no term image in the logic."""


def _iff(a: StatePredicate, b: StatePredicate) -> StatePredicate:
    return And(or_(NotP(a), b), or_(NotP(b), a))


# ---------------------------------------------------------------------------
# Obligations and verdicts


@dataclass(frozen=True)
class Obligation:
    sorts: tuple[tuple[str, str], ...]
    assumptions: tuple[StatePredicate, ...]
    goal: StatePredicate
    rule: str
    location: str
    contracts: tuple[FunContract, ...] = ()

    def script(self) -> smt.SmtScript:
        return smt.lower(self.sorts, self.assumptions, self.goal, self.contracts)

    @property
    def pretty(self) -> str:
        g = pretty_state(self.goal)
        if not self.assumptions:
            return g
        return " /\\ ".join(pretty_state(a) for a in self.assumptions) + " => " + g


@dataclass(frozen=True)
class Valid:
    pass


@dataclass(frozen=True)
class Invalid:
    model: dict
    replayed: "bool | None" = None  # None: replay not applicable


@dataclass(frozen=True)
class Unknown:
    reason: str


@dataclass(frozen=True)
class ObligationResult:
    obligation: Obligation
    verdict: "Valid | Invalid | Unknown"

    def row(self) -> dict:
        out = {
            "rule": self.obligation.rule,
            "location": self.obligation.location,
            "formula": self.obligation.pretty,
        }
        match self.verdict:
            case Valid():
                out["verdict"] = "valid"
            case Invalid(model=m, replayed=r):
                out["verdict"] = "invalid"
                out["model"] = {k: _model_json(v) for k, v in m.items()}
                out["replayed"] = r
            case Unknown(reason=reason):
                out["verdict"] = "unknown"
                out["reason"] = reason
        return out


def _model_json(v):
    if isinstance(v, bool) or isinstance(v, int):
        return v
    if isinstance(v, smt.RawModelValue):
        return v.text
    return str(v)  # Fraction


@dataclass(frozen=True)
class CheckReport:
    results: tuple[ObligationResult, ...]

    @property
    def passed(self) -> bool:
        return all(isinstance(r.verdict, Valid) for r in self.results)

    @property
    def failures(self) -> tuple[ObligationResult, ...]:
        return tuple(r for r in self.results if not isinstance(r.verdict, Valid))

    def to_rows(self) -> list[dict]:
        return [r.row() for r in self.results]

    def render(self) -> str:
        lines = []
        n_valid = sum(isinstance(r.verdict, Valid) for r in self.results)
        for r in self.results:
            row = r.row()
            lines.append(f"[{row['verdict']}] {row['rule']} at {row['location']}")
            lines.append(f"    {row['formula']}")
            if "model" in row and row["model"]:
                binds = ", ".join(f"{k} = {v}" for k, v in sorted(row["model"].items()))
                lines.append(f"    counterexample: {binds}")
                if row.get("replayed") is True:
                    lines.append("    counterexample replayed: falsifies the obligation")
            if "reason" in row:
                lines.append(f"    reason: {row['reason']}")
        lines.append(f"{n_valid}/{len(self.results)} obligations valid")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Typing environment


@dataclass(frozen=True)
class Entry:
    """One let binding in scope.

    pred is the refinement as seen from the checker's current frame (it is
    advanced by typeTail during unrolling and wrapped by next when the
    checker moves under a delay); pred0 stays as annotated, anchored at
    anchor0, and supplies always-layer facts for other frames. Both are
    selfified: the type binder is already renamed to the bound names.
    """

    binder: object  # str | tuple[str, ...]
    base: object
    pred: "TracePredicate | None"
    pred0: "TracePredicate | None"
    rhs: "Expr | None"
    history: tuple
    anchor0: int

    @property
    def birth(self) -> int:
        return self.anchor0 - len(self.history)


TypeEnv = tuple  # tuple[Entry, ...]


def env_lookup(env: TypeEnv, name: str):
    for entry in reversed(env):
        names = binder_names(entry.binder)
        if name in names:
            return entry, names.index(name)
    return None


def _selfify(ann: RefType, binder) -> "TracePredicate | None":
    if not isinstance(ann, Refined):
        return None
    tnames = binder_names(ann.binder)
    bnames = binder_names(binder)
    sub = {t: TVar(b) for t, b in zip(tnames, bnames) if t != b}
    return canon(subst_pred(ann.pred, sub) if sub else ann.pred)


def make_entry(binder, base, ann: "RefType | None", rhs: "Expr | None" = None,
               history: tuple = (), anchor: int = 0) -> Entry:
    pred = _selfify(ann, binder) if ann is not None else None
    return Entry(binder, base, pred, pred, rhs, tuple(history), anchor)


def _advance_env(env: TypeEnv) -> TypeEnv:
    out = []
    for entry in env:
        if entry.pred is None:
            out.append(entry)
            continue
        tail = split(entry.pred).tail
        out.append(entry if tail == entry.pred else dataclasses.replace(entry, pred=tail))
    return tuple(out)


def _prev_env(env: TypeEnv) -> TypeEnv:
    out = []
    for entry in env:
        if entry.pred is None or is_top(entry.pred):
            out.append(entry)
        else:
            out.append(dataclasses.replace(entry, pred=canon(Next(entry.pred))))
    return tuple(out)


def _env_key(env: TypeEnv) -> tuple:
    return tuple((e.binder, e.pred) for e in env)


# ---------------------------------------------------------------------------
# Always-layer facts: (p, D) below means p holds at every frame >= anchor + D.


def _layers(q: TracePredicate) -> list:
    match q:
        case SP(pred=p):
            return [] if isinstance(p, TrueP) else [(p, 0)]
        case Next(body=b):
            return [(p, d + 1) for p, d in _layers(b)]
        case Always(body=b):
            return _layers(b)
        case Conj(left=l, right=r):
            return _layers(l) + _layers(r)
    return []


def box_facts(q: TracePredicate) -> list:
    match q:
        case SP():
            return []
        case Always(body=b):
            return _layers(b)
        case Next(body=b):
            return [(p, d + 1) for p, d in box_facts(b)]
        case Conj(left=l, right=r):
            return box_facts(l) + box_facts(r)
    return []


# ---------------------------------------------------------------------------
# Obligation builder: translation plus demand-driven assumption closure.


class ObBuilder:
    def __init__(self, env: TypeEnv, frame: int, funcs: dict, rule: str, location: str):
        self.env = env
        self.frame = frame
        self.funcs = funcs
        self.rule = rule
        self.location = location
        self.sorts: dict[str, object] = {}
        self.free: dict[str, object] = {}
        self.queue: deque = deque()
        self.done: set = set()
        self.assumptions: list[StatePredicate] = []
        self.used: set[str] = set()

    # -- symbols

    def add_free(self, name: str, base) -> str:
        if not is_scalar(base):
            raise ObligationConstructionError(
                f"{self.location}: {name} has a product base and cannot be a solver symbol"
            )
        self.free[name] = base
        self.sorts.setdefault(name, base)
        return name

    def fresh(self, base, stem: str = "w") -> str:
        taken = set(self.sorts)
        for entry in self.env:
            taken.update(binder_names(entry.binder))
        name = stem
        i = 0
        while name in taken:
            i += 1
            name = f"{stem}{i}"
        return self.add_free(name, base)

    def sym(self, name: str, f: int) -> str:
        delta = f - self.frame
        s = name if delta == 0 else f"{name}@{delta}"
        if s not in self.sorts:
            if name in self.free:
                base = self.free[name]
            else:
                found = env_lookup(self.env, name)
                if found is None:
                    raise _Untranslatable(f"unbound variable {name}")
                entry, idx = found
                names = binder_names(entry.binder)
                base = entry.base[idx] if len(names) > 1 else entry.base
                if not is_scalar(base):
                    raise _Untranslatable(f"{name} has a product base")
            self.sorts[s] = base
            self.queue.append((name, f))
        return s

    def base_at(self, name: str) -> object:
        if name in self.free:
            return self.free[name]
        found = env_lookup(self.env, name)
        if found is None:
            raise _Untranslatable(f"unbound variable {name}")
        entry, idx = found
        names = binder_names(entry.binder)
        return entry.base[idx] if len(names) > 1 else entry.base

    # -- assumptions

    def assume(self, p: StatePredicate) -> None:
        p = simplify_state(p)
        if isinstance(p, TrueP) or p in self.assumptions:
            return
        self.assumptions.append(p)

    def _assume_at(self, p: StatePredicate, f: int) -> None:
        names: set[str] = set()
        fv_state(p, names)
        sub = {}
        for n in sorted(names):
            if n in self.free or env_lookup(self.env, n) is not None:
                sub[n] = TVar(self.sym(n, f))
        self.assume(subst_state(p, sub) if sub else p)

    def seed_state(self, p: StatePredicate) -> None:
        """Queue the environment facts behind a predicate already at frame 0."""
        names: set[str] = set()
        fv_state(p, names)
        for n in sorted(names):
            if "@" in n or n in self.free:
                continue
            if env_lookup(self.env, n) is not None:
                self.sym(n, self.frame)

    # -- translation (raises _Untranslatable)

    def tr_term(self, e: Expr, f: int, local: dict) -> Term:
        match e:
            case Const(value=Nil()):
                raise _Untranslatable("nil has no term image")
            case Const(value=TupleV()):
                raise _Untranslatable("tuple value in term position")
            case Const(value=v):
                return TLit(v)
            case Var(name=n):
                if n in local:
                    v = local[n]
                    if isinstance(v, Term):
                        return v
                    if isinstance(v, StatePredicate):
                        raise _Untranslatable(f"{n} is boolean-only here")
                    raise _Untranslatable(f"{n} is a tuple")
                return TVar(self.sym(n, f))
            case Prim(op="neg", args=(a,)):
                return TOp("neg", (self.tr_term(a, f, local),))
            case Prim(op=op, args=(a, b)) if op in ("+", "-", "*", "/"):
                return TOp(op, (self.tr_term(a, f, local), self.tr_term(b, f, local)))
            case If(cond=c, then=t, els=el):
                return TIte(
                    self._cond(c, f, local),
                    self.tr_term(t, f, local),
                    self.tr_term(el, f, local),
                )
            case App(func=fn, arg=a):
                contract = self.funcs.get(fn)
                if contract is None:
                    raise _Untranslatable(f"no contract for function {fn}")
                self.used.add(fn)
                return TApp(fn, self.tr_term(Var(a), f, local))
            case Let(binder=x, rhs=r, body=b) if isinstance(x, str):
                return self.tr_term(b, f, self._extend(local, x, r, f))
            case Let(binder=x, rhs=r, body=b):
                comps = self.tr_components(r, f, local)
                inner = dict(local)
                for n, t in zip(binder_names(x), comps):
                    inner[n] = t
                return self.tr_term(b, f, inner)
            case Delay(body=b):
                return self.tr_term(b, f - 1, local)
            case Models(model=m):
                return self.tr_term(m, f, local)
            case RobotStr(value=v):
                return self.tr_term(v, f, local)
        raise _Untranslatable(f"no term image for {type(e).__name__}")

    def _extend(self, local: dict, x: str, r: Expr, f: int) -> dict:
        inner = dict(local)
        try:
            inner[x] = self.tr_term(r, f, local)
        except _Untranslatable:
            try:
                inner[x] = self.tr_state(r, f, local)
            except _Untranslatable:
                inner[x] = self.tr_components(r, f, local)
        return inner

    def _cond(self, name: str, f: int, local: dict) -> StatePredicate:
        if name in local:
            v = local[name]
            if isinstance(v, StatePredicate):
                return v
            if isinstance(v, TVar):
                return VarP(v.name)
            if isinstance(v, Term):
                return Eq(v, TLit(BoolLit(True)))
            raise _Untranslatable(f"{name} is a tuple")
        return VarP(self.sym(name, f))

    def tr_state(self, e: Expr, f: int, local: dict) -> StatePredicate:
        match e:
            case Const(value=BoolLit(value=b)):
                return TrueP() if b else FalseP()
            case Var(name=n):
                return self._cond(n, f, local)
            case Prim(op="not", args=(a,)):
                return NotP(self.tr_state(a, f, local))
            case Prim(op="and", args=(a, b)):
                return And(self.tr_state(a, f, local), self.tr_state(b, f, local))
            case Prim(op="or", args=(a, b)):
                return or_(self.tr_state(a, f, local), self.tr_state(b, f, local))
            case Prim(op="=", args=(a, b)):
                return Eq(self.tr_term(a, f, local), self.tr_term(b, f, local))
            case Prim(op=">", args=(a, b)):
                return Gt(self.tr_term(a, f, local), self.tr_term(b, f, local))
            case Prim(op="<", args=(a, b)):
                return Gt(self.tr_term(b, f, local), self.tr_term(a, f, local))
            case Prim(op=">=", args=(a, b)):
                return NotP(Gt(self.tr_term(b, f, local), self.tr_term(a, f, local)))
            case Prim(op="<=", args=(a, b)):
                return NotP(Gt(self.tr_term(a, f, local), self.tr_term(b, f, local)))
            case If(cond=c, then=t, els=el):
                g = self._cond(c, f, local)
                return or_(
                    And(g, self.tr_state(t, f, local)),
                    And(NotP(g), self.tr_state(el, f, local)),
                )
            case App():
                return Eq(self.tr_term(e, f, local), TLit(BoolLit(True)))
            case Let(binder=x, rhs=r, body=b) if isinstance(x, str):
                return self.tr_state(b, f, self._extend(local, x, r, f))
            case Delay(body=b):
                return self.tr_state(b, f - 1, local)
            case Models(model=m):
                return self.tr_state(m, f, local)
            case RobotStr(value=v):
                return self.tr_state(v, f, local)
        raise _Untranslatable(f"no boolean image for {type(e).__name__}")

    def tr_components(self, e: Expr, f: int, local: dict) -> list[Term]:
        match e:
            case TupleE(items=items):
                return [self.tr_term(i, f, local) for i in items]
            case Const(value=TupleV(items=items)):
                return [TLit(i) for i in items]
            case If(cond=c, then=t, els=el):
                g = self._cond(c, f, local)
                ts = self.tr_components(t, f, local)
                es = self.tr_components(el, f, local)
                if len(ts) != len(es):
                    raise _Untranslatable("branch arity mismatch")
                return [TIte(g, a, b) for a, b in zip(ts, es)]
            case Var(name=n) if n in local:
                v = local[n]
                if isinstance(v, list):
                    return list(v)
                raise _Untranslatable(f"{n} is not a tuple")
            case Let(binder=x, rhs=r, body=b) if isinstance(x, str):
                return self.tr_components(b, f, self._extend(local, x, r, f))
            case Let(binder=x, rhs=r, body=b):
                comps = self.tr_components(r, f, local)
                inner = dict(local)
                for n, t in zip(binder_names(x), comps):
                    inner[n] = t
                return self.tr_components(b, f, inner)
            case Delay(body=b):
                return self.tr_components(b, f - 1, local)
            case Models(model=m):
                return self.tr_components(m, f, local)
            case RobotStr(value=v):
                return self.tr_components(v, f, local)
        raise _Untranslatable(f"no tuple image for {type(e).__name__}")

    # -- closure

    def close(self) -> None:
        steps = 0
        while self.queue:
            steps += 1
            if steps > 10000:
                raise ObligationConstructionError(
                    f"{self.location}: assumption closure did not terminate"
                )
            name, f = self.queue.popleft()
            if (name, f) in self.done:
                continue
            self.done.add((name, f))
            if name in self.free:
                continue
            if self.frame - f > LOOKBACK:
                continue
            found = env_lookup(self.env, name)
            if found is None:
                continue
            entry, idx = found
            names = binder_names(entry.binder)
            if f < entry.birth:
                continue
            if f < entry.anchor0:
                v = entry.history[f - entry.anchor0]
                if isinstance(v, Nil):
                    continue
                comp = v.items[idx] if len(names) > 1 else v
                if isinstance(comp, Nil):
                    continue
                self.assume(Eq(TVar(self.sym(name, f)), TLit(comp)))
                continue
            if f == self.frame and entry.pred is not None:
                self._assume_at(hd(entry.pred), f)
            elif entry.pred0 is not None:
                for p, d in box_facts(entry.pred0):
                    if f >= entry.anchor0 + d:
                        self._assume_at(p, f)
            if entry.rhs is not None:
                self._equation(entry, names, idx, name, f)

    def _equation(self, entry: Entry, names, idx: int, name: str, f: int) -> None:
        try:
            if len(names) == 1:
                try:
                    t = self.tr_term(entry.rhs, f, {})
                    self.assume(Eq(TVar(self.sym(name, f)), t))
                except _Untranslatable:
                    if entry.base == BOOL:
                        p = self.tr_state(entry.rhs, f, {})
                        self.assume(_iff(VarP(self.sym(name, f)), p))
            else:
                comps = self.tr_components(entry.rhs, f, {})
                self.assume(Eq(TVar(self.sym(name, f)), comps[idx]))
        except _Untranslatable:
            pass

    def obligation(self, goal: StatePredicate) -> Obligation:
        self.seed_state(goal)
        self.close()
        contracts = tuple(
            sorted((self.funcs[n] for n in self.used), key=lambda c: c.name)
        )
        return Obligation(
            tuple(self.sorts.items()),
            tuple(self.assumptions),
            goal,
            self.rule,
            self.location,
            contracts,
        )


# ---------------------------------------------------------------------------
# The checker


class Checker:
    def __init__(self, bases: "dict | None" = None, funcs: "dict | None" = None):
        self.bases = bases or {}
        self.funcs: dict[str, FunContract] = dict(funcs or {})
        self.obligations: list[Obligation] = []

    # -- function definitions (pointwise, one obligation per definition)

    def check_fundef(self, d: FunDef) -> None:
        argb = base_of(d.argtype)
        retb = base_of(d.rettype)
        if not is_scalar(argb) or not is_scalar(retb):
            raise WellFormednessError(
                f"function {d.name}: argument and result must be scalar-based"
            )
        abinder, argpred = _sig_state(d.argtype, f"function {d.name} argument")
        rbinder, retpred = _sig_state(d.rettype, f"function {d.name} result")
        if abinder is not None and abinder != d.argname:
            argpred = subst_state(argpred, {abinder: TVar(d.argname)})
        if rbinder is None:
            rbinder = "ret"
        if rbinder == d.argname:
            fresh = rbinder + "'"
            retpred = subst_state(retpred, {rbinder: TVar(fresh)})
            rbinder = fresh

        B = ObBuilder((), 0, self.funcs, "fun-def", f"fun {d.name}")
        B.add_free(d.argname, argb)
        B.assume(argpred)
        try:
            body = B.tr_term(d.body, 0, {})
            goal = subst_state(retpred, {rbinder: body})
        except _Untranslatable:
            if retb != BOOL:
                raise ObligationConstructionError(
                    f"function {d.name}: body is outside the translatable fragment"
                ) from None
            p = B.tr_state(d.body, 0, {})
            w = B.fresh(BOOL)
            B.assume(_iff(VarP(w), p))
            goal = subst_state(retpred, {rbinder: TVar(w)})
        goal = simplify_state(goal)
        if not isinstance(goal, TrueP):
            self.obligations.append(B.obligation(goal))
        self.funcs[d.name] = FunContract(
            d.name, d.argname, argb, argpred, rbinder, retb, retpred
        )

    # -- expressions

    def check_expr(self, env: TypeEnv, e: Expr, goal: "RefType | None",
                   frame: int, loc: str) -> None:
        match e:
            case Const(value=Nil()):
                return
            case Const() | Var():
                if isinstance(goal, Refined):
                    self._leaf(env, e, goal, frame, loc)
            case Prim(args=args):
                for a in args:
                    self.check_expr(env, a, None, frame, loc)
                if isinstance(goal, Refined):
                    self._leaf(env, e, goal, frame, loc)
            case Fby(left=l, right=r):
                gl = gr = None
                if isinstance(goal, Refined):
                    s = split(goal.pred)
                    gl = Refined(goal.binder, goal.base, canon(SP(hd(s.now))))
                    gr = Refined(goal.binder, goal.base, s.tail)
                self.check_expr(env, l, gl, frame, loc + "/fby-init")
                self.check_expr(env, r, gr, frame, loc + "/fby-step")
            case Delay(body=b):
                self.check_expr(_prev_env(env), b, goal, frame - 1, loc)
            case If(cond=c, then=t, els=el):
                gt = ge = None
                if isinstance(goal, Refined):
                    gt = Refined(goal.binder, goal.base, canon(impl(VarP(c), goal.pred)))
                    ge = Refined(
                        goal.binder, goal.base, canon(impl(NotP(VarP(c)), goal.pred))
                    )
                self.check_expr(env, t, gt, frame, loc + "/then")
                self.check_expr(env, el, ge, frame, loc + "/else")
            case TupleE(items=items):
                for i, item in enumerate(items):
                    self.check_expr(env, item, None, frame, f"{loc}/{i}")
                if isinstance(goal, Refined):
                    self._leaf(env, e, goal, frame, loc)
            case App(func=fn, arg=a):
                contract = self.funcs.get(fn)
                if contract is not None and not isinstance(contract.argpred, TrueP):
                    agoal = Refined(
                        contract.argname,
                        contract.argbase,
                        Always(SP(contract.argpred)),
                    )
                    self._leaf(env, Var(a), agoal, frame, loc + "/arg", rule="app-arg")
                if isinstance(goal, Refined):
                    self._leaf(env, e, goal, frame, loc)
            case Let(history=h, binder=x, ann=ann, rhs=r, body=b) | LetRec(
                history=h, binder=x, ann=ann, rhs=r, body=b
            ):
                base = self._binder_base(e, x, ann)
                entry = make_entry(x, base, ann, rhs=r, history=h, anchor=frame)
                rgoal = ann if isinstance(ann, Refined) else None
                names = binder_names(x)
                bloc = f"{loc}/let {','.join(n for n in names)}"
                inner = env + (entry,)
                if isinstance(e, LetRec):
                    self.check_expr(inner, r, rgoal, frame, bloc)
                else:
                    self.check_expr(env, r, rgoal, frame, bloc)
                self.check_expr(inner, b, goal, frame, loc)
            case Models(model=m, robot=robot):
                self.check_expr(env, m, goal, frame, loc)
                if isinstance(robot, RobotStr):
                    self.check_expr(env, robot.value, None, frame, loc + "/robot")
            case RobotGet():
                return
            case RobotStr(value=v):
                self.check_expr(env, v, None, frame, loc)
            case _:
                raise TypeError(f"not an expression: {e!r}")

    def _binder_base(self, node: Expr, binder, ann: "RefType | None"):
        if ann is not None:
            return base_of(ann)
        base = self.bases.get(id(node))
        if base is not None:
            return base
        names = binder_names(binder)
        return INT if len(names) == 1 else tuple(INT for _ in names)

    # -- the unrolling entailment loop

    def _leaf(self, env: TypeEnv, e: Expr, goal: Refined, frame: int, loc: str,
              rule: str = "check") -> None:
        q = canon(goal.pred)
        if is_top(q):
            return
        gnames = binder_names(goal.binder)
        envk, k, prev_text = env, frame, None
        for _ in range(MAX_UNROLL + 1):
            s = split(q)
            hdp = simplify_state(hd(s.now))
            ob, text = None, ""
            if not isinstance(hdp, TrueP):
                B = ObBuilder(envk, k, self.funcs, rule, loc)
                theta = self._theta(B, e, k, gnames, goal.base)
                gstate = simplify_state(subst_state(hdp, theta))
                if not isinstance(gstate, TrueP):
                    ob = B.obligation(gstate)
                    text = ob.script().text
            q2 = canon(s.tail)
            env2 = _advance_env(envk)
            stable = q2 == q and _env_key(env2) == _env_key(envk)
            if stable and text == prev_text:
                return
            if ob is not None:
                self.obligations.append(ob)
            if is_top(q2):
                return
            q, envk, k, prev_text = q2, env2, k + 1, text
        raise ObligationConstructionError(
            f"{loc}: refinement unrolling exceeded {MAX_UNROLL} instants"
        )

    def _theta(self, B: ObBuilder, e: Expr, k: int, gnames, gbase) -> dict:
        if len(gnames) == 1:
            try:
                return {gnames[0]: B.tr_term(e, k, {})}
            except _Untranslatable:
                pass
            if gbase == BOOL:
                try:
                    p = B.tr_state(e, k, {})
                    w = B.fresh(BOOL)
                    B.assume(_iff(VarP(w), p))
                    return {gnames[0]: TVar(w)}
                except _Untranslatable:
                    pass
            if not is_scalar(gbase):
                raise ObligationConstructionError(
                    f"{B.location}: refinement on a product binder {gnames[0]} "
                    "is not checkable componentwise"
                )
            return {gnames[0]: TVar(B.fresh(gbase))}
        try:
            comps = B.tr_components(e, k, {})
        except _Untranslatable:
            comps = None
        out = {}
        for i, n in enumerate(gnames):
            if comps is not None:
                out[n] = comps[i]
            else:
                out[n] = TVar(B.fresh(gbase[i], stem=n))
        return out


def _sig_state(t: RefType, what: str):
    """Function signatures carry state-level refinements only."""
    match t:
        case Base():
            return None, TrueP()
        case Refined(binder=w, base=_, pred=p):
            if not isinstance(w, str):
                raise WellFormednessError(f"{what}: pattern binders are not allowed")
            q = canon(p)
            if is_top(q):
                return w, TrueP()
            if isinstance(q, SP):
                return w, q.pred
            raise WellFormednessError(
                f"{what}: only state-level refinements are allowed on functions"
            )
    raise WellFormednessError(f"{what}: unexpected signature {t!r}")


# ---------------------------------------------------------------------------
# Discharging obligations


def _ground_eval(ob: Obligation):
    try:
        for a in ob.assumptions:
            if not smt.replay_state(a, {}):
                return Valid()
        return Valid() if smt.replay_state(ob.goal, {}) else Invalid({}, True)
    except smt.UnsupportedTerm:
        return None


def _to_verdict(res, ob: Obligation):
    match res:
        case smt.Unsat():
            return Valid()
        case smt.Unknown(reason=r):
            return Unknown(r)
        case smt.Sat(model=m):
            try:
                replayed = smt.replay_falsifies(ob.assumptions, ob.goal, m)
            except smt.UnsupportedTerm:
                replayed = None
            return Invalid(m, replayed)
    raise TypeError(f"unexpected solver result {res!r}")


def discharge(obligations, config: "smt.SolverConfig | None" = None,
              parallel: bool = True) -> CheckReport:
    """Solve every obligation; identical scripts are solved once."""
    config = config or smt.SolverConfig()
    results: list = [None] * len(obligations)
    scripts: dict[str, smt.SmtScript] = {}
    by_text: dict[str, list[int]] = {}
    for i, ob in enumerate(obligations):
        try:
            script = ob.script()
        except smt.UnsupportedTerm as exc:
            results[i] = ObligationResult(ob, Unknown(f"cannot lower: {exc}"))
            continue
        if not ob.sorts and not ob.contracts:
            verdict = _ground_eval(ob)
            if verdict is not None:
                results[i] = ObligationResult(ob, verdict)
                continue
        scripts[script.text] = script
        by_text.setdefault(script.text, []).append(i)

    def run(text: str):
        try:
            return smt.solve(scripts[text], config)
        except smt.SolverCrash as exc:
            return smt.Unknown(f"solver crashed: {exc}")

    texts = list(by_text)
    if len(texts) > 1 and parallel:
        with ThreadPoolExecutor(max_workers=min(8, len(texts))) as pool:
            outs = list(pool.map(run, texts))
    else:
        outs = [run(t) for t in texts]
    for text, res in zip(texts, outs):
        for i in by_text[text]:
            results[i] = ObligationResult(obligations[i], _to_verdict(res, obligations[i]))
    return CheckReport(tuple(results))


# ---------------------------------------------------------------------------
# Entry points


def verify_program(program: Program, config: "smt.SolverConfig | None" = None,
                   parallel: bool = True) -> CheckReport:
    """Statically check, then build and discharge every proof obligation."""
    checks.check_program(program)
    bases = checks.binder_bases(program)
    checker = Checker(bases)
    notes: list[ObligationResult] = []
    for d in program.defs:
        try:
            checker.check_fundef(d)
        except RefineError as exc:
            notes.append(_note("fun-def", f"fun {d.name}", str(exc)))
    try:
        checker.check_expr((), program.main, None, 0, "main")
    except RefineError as exc:
        notes.append(_note("check", "main", str(exc)))
    report = discharge(checker.obligations, config, parallel)
    if notes:
        report = CheckReport(report.results + tuple(notes))
    return report


def _note(rule: str, loc: str, reason: str) -> ObligationResult:
    return ObligationResult(
        Obligation((), (), TrueP(), rule, loc), Unknown(reason)
    )


def check(env: TypeEnv, e: Expr, goal: "RefType | None",
          funcs: "dict | None" = None, bases: "dict | None" = None,
          location: str = "check") -> list[Obligation]:
    """Obligations for e against goal under env (not yet discharged)."""
    checker = Checker(bases, funcs)
    checker.check_expr(tuple(env), e, goal, 0, location)
    return checker.obligations


def subtype(lhs: RefType, rhs: RefType, env: TypeEnv = (),
            funcs: "dict | None" = None, location: str = "subtype") -> list[Obligation]:
    """Obligations under which every stream of lhs also has type rhs."""
    lb, rb = base_of(lhs), base_of(rhs)
    if lb != rb:
        raise BaseTypeMismatch(f"{location}: base {lb!r} vs {rb!r}")
    funcs = dict(funcs or {})
    lq = canon(lhs.pred) if isinstance(lhs, Refined) else TOP
    rq = canon(rhs.pred) if isinstance(rhs, Refined) else TOP
    lnames = binder_names(lhs.binder) if isinstance(lhs, Refined) else ("w",)
    rnames = binder_names(rhs.binder) if isinstance(rhs, Refined) else ("w",)
    if len(lnames) != len(rnames):
        raise BaseTypeMismatch(f"{location}: binder arity mismatch")
    comp_bases = [rb] if len(rnames) == 1 else list(rb)

    obligations: list[Obligation] = []
    envk, k, prev_text = tuple(env), 0, None
    for _ in range(MAX_UNROLL + 1):
        sl, sr = split(lq), split(rq)
        hl = simplify_state(hd(sl.now))
        hr = simplify_state(hd(sr.now))
        ob, text = None, ""
        if not isinstance(hr, TrueP):
            B = ObBuilder(envk, k, funcs, "subtype", location)
            wsyms = [TVar(B.fresh(cb, stem=n)) for cb, n in zip(comp_bases, rnames)]
            if not isinstance(hl, TrueP):
                asm = subst_state(hl, dict(zip(lnames, wsyms)))
                B.seed_state(asm)
                B.assume(asm)
            ob = B.obligation(subst_state(hr, dict(zip(rnames, wsyms))))
            text = ob.script().text
        lq2, rq2 = canon(sl.tail), canon(sr.tail)
        env2 = _advance_env(envk)
        stable = lq2 == lq and rq2 == rq and _env_key(env2) == _env_key(envk)
        if stable and text == prev_text:
            return obligations
        if ob is not None:
            obligations.append(ob)
        if is_top(rq2) and is_top(lq2):
            return obligations
        lq, rq, envk, k, prev_text = lq2, rq2, env2, k + 1, text
    raise ObligationConstructionError(
        f"{location}: subtype unrolling exceeded {MAX_UNROLL} instants"
    )


def entail(env: TypeEnv, goal: StatePredicate, funcs: "dict | None" = None,
           location: str = "entail") -> Obligation:
    """One obligation: the environment's current-instant facts entail goal."""
    B = ObBuilder(tuple(env), 0, dict(funcs or {}), "entail", location)
    return B.obligation(simplify_state(goal))


def synthesize(env: TypeEnv, e: Expr, funcs: "dict | None" = None) -> RefType:
    """An equational refinement type for a pointwise expression."""
    funcs = dict(funcs or {})
    base = _expr_base(tuple(env), e, funcs)
    B = ObBuilder(tuple(env), 0, funcs, "synthesize", "synthesize")
    w = _fresh_name(tuple(env))
    try:
        try:
            t = B.tr_term(e, 0, {})
            pred = Eq(TVar(w), t)
        except _Untranslatable:
            if base != BOOL:
                raise
            pred = _iff(VarP(w), B.tr_state(e, 0, {}))
    except _Untranslatable as exc:
        raise SynthesisUnsupported(str(exc)) from None
    if any("@" in s for s in B.sorts):
        raise SynthesisUnsupported("synthesis covers pointwise expressions only")
    return Refined(w, base, Always(SP(pred)))


def _fresh_name(env: TypeEnv, stem: str = "w") -> str:
    taken = set()
    for entry in env:
        taken.update(binder_names(entry.binder))
    name, i = stem, 0
    while name in taken:
        i += 1
        name = f"{stem}{i}"
    return name


def _expr_base(env: TypeEnv, e: Expr, funcs: dict):
    match e:
        case Const(value=Nil()):
            raise SynthesisUnsupported("nil has no synthesized type")
        case Const(value=v):
            return checks.value_base(v)
        case Var(name=n):
            found = env_lookup(env, n)
            if found is None:
                raise SynthesisUnsupported(f"unbound variable {n}")
            entry, idx = found
            names = binder_names(entry.binder)
            return entry.base[idx] if len(names) > 1 else entry.base
        case Prim(op=op) if op in ("not", "and", "or", "=", "<", ">", "<=", ">="):
            return BOOL
        case Prim(op="/"):
            return FLOAT
        case Prim(args=args):
            last = None
            for a in args:
                try:
                    return _expr_base(env, a, funcs)
                except SynthesisUnsupported as exc:
                    last = exc
            raise last if last is not None else SynthesisUnsupported("empty prim")
        case If(then=t):
            return _expr_base(env, t, funcs)
        case App(func=f):
            if f not in funcs:
                raise SynthesisUnsupported(f"no contract for function {f}")
            return funcs[f].retbase
        case TupleE(items=items):
            return tuple(_expr_base(env, i, funcs) for i in items)
        case Let(binder=x, rhs=r, body=b):
            inner = env + (make_entry(x, _expr_base(env, r, funcs), None),)
            return _expr_base(inner, b, funcs)
        case Models(model=m):
            return _expr_base(env, m, funcs)
        case RobotStr(value=v):
            return _expr_base(env, v, funcs)
        case Fby(left=l):
            return _expr_base(env, l, funcs)
        case Delay(body=b):
            return _expr_base(env, b, funcs)
    raise SynthesisUnsupported(f"cannot synthesize for {type(e).__name__}")


def well_formed(t: RefType, scope=()) -> None:
    """Binder shape matches the base and the predicate closes over scope."""
    match t:
        case Base():
            return
        case Refined(binder=w, base=b, pred=p):
            names = binder_names(w)
            if len(names) > 1:
                if not isinstance(b, tuple) or len(b) != len(names):
                    raise WellFormednessError(
                        f"pattern ({', '.join(names)}) does not match its base"
                    )
                if not all(is_scalar(x) for x in b):
                    raise WellFormednessError("pattern components must be scalar")
            from .temporal import fv_pred

            free: set[str] = set()
            fv_pred(p, free)
            out = free - set(names) - set(scope)
            if out:
                raise WellFormednessError(
                    f"refinement mentions unbound variables: {', '.join(sorted(out))}"
                )
            return
    raise WellFormednessError(f"unexpected type {t!r}")
