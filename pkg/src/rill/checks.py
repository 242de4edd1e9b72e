"""Static checks run before interpretation or verification.

Three passes: scope checking (including annotation predicates), base type
checking with light unification (letrec binders may be unannotated), and
causality (no zero-delay cycles; a letrec variable may only reach its own
definition through at least one fby right-operand or delay).
"""

from __future__ import annotations

from .syntax import (
    Always, And, App, Base, BoolLit, Conj, Const, Delay, Eq, Expr, Fby,
    FloatLit, FunDef, FunT, Gt, If, IntLit, Let, LetRec, Models, Next, Nil,
    NotP, Prim, Program, Refined, RefType, RobotGet, RobotStr, SP,
    StatePredicate, TApp, TIte, TLit, TOp, TVar, Term, TracePredicate, TupleE,
    TupleV, Value, Var, VarP, binder_names, pretty_base,
    BOOL, FLOAT, INT, is_scalar,
)


class ScopeError(Exception):
    pass


class BaseTypeError(Exception):
    pass


class CausalityError(Exception):
    pass


def check_program(p: Program) -> None:
    """Run all static checks; raises on the first problem found.

    Causality runs before base types: an instantaneous self-reference makes
    the binding's type vacuous anyway, and the causality message names the
    actual defect.
    """
    check_scopes(p)
    check_causality(p)
    check_base_types(p)


# ---------------------------------------------------------------------------
# Scopes


def check_scopes(p: Program) -> None:
    fnames: set[str] = set()
    for d in p.defs:
        if d.name in fnames:
            raise ScopeError(f"function {d.name} defined twice")
        _scope_type(d.argtype, {d.argname}, set())
        scope = {d.argname}
        _scope_type(d.rettype, scope, set())
        _scope_expr(d.body, scope, fnames)
        fnames.add(d.name)
    _scope_expr(p.main, set(), fnames)


def _scope_type(t: RefType, scope: set, fnames: set) -> None:
    if isinstance(t, Refined):
        inner = scope | set(binder_names(t.binder))
        _scope_pred(t.pred, inner)
    elif isinstance(t, FunT):
        _scope_type(t.arg, scope, fnames)
        _scope_type(t.ret, scope | {t.argname}, fnames)


def _scope_pred(q: TracePredicate, scope: set) -> None:
    match q:
        case SP(pred=p):
            _scope_state(p, scope)
        case Always(body=b) | Next(body=b):
            _scope_pred(b, scope)
        case Conj(left=l, right=r):
            _scope_pred(l, scope)
            _scope_pred(r, scope)


def _scope_state(p: StatePredicate, scope: set) -> None:
    match p:
        case VarP(name=n):
            if n not in scope:
                raise ScopeError(f"unbound variable {n} in predicate")
        case Eq(left=l, right=r) | Gt(left=l, right=r):
            _scope_term(l, scope)
            _scope_term(r, scope)
        case And(left=l, right=r):
            _scope_state(l, scope)
            _scope_state(r, scope)
        case NotP(body=b):
            _scope_state(b, scope)


def _scope_term(t: Term, scope: set) -> None:
    match t:
        case TVar(name=n):
            if n not in scope:
                raise ScopeError(f"unbound variable {n} in predicate")
        case TOp(args=args):
            for a in args:
                _scope_term(a, scope)
        case TApp(arg=a):
            _scope_term(a, scope)
        case TIte(cond=c, then=a, els=b):
            _scope_state(c, scope)
            _scope_term(a, scope)
            _scope_term(b, scope)


def _scope_expr(e: Expr, scope: set, fnames: set) -> None:
    match e:
        case Const():
            return
        case Var(name=n):
            if n not in scope:
                raise ScopeError(f"unbound variable {n}")
        case Prim(args=args):
            for a in args:
                _scope_expr(a, scope, fnames)
        case Fby(left=l, right=r):
            _scope_expr(l, scope, fnames)
            _scope_expr(r, scope, fnames)
        case Delay(body=b):
            _scope_expr(b, scope, fnames)
        case TupleE(items=items):
            for i in items:
                _scope_expr(i, scope, fnames)
        case If(cond=c, then=t, els=f):
            if c not in scope:
                raise ScopeError(f"unbound variable {c}")
            _scope_expr(t, scope, fnames)
            _scope_expr(f, scope, fnames)
        case App(func=f, arg=a):
            if f not in fnames:
                raise ScopeError(f"unknown function {f}")
            if a not in scope:
                raise ScopeError(f"unbound variable {a}")
        case Let(binder=x, ann=ann, rhs=r, body=b):
            if ann is not None:
                _scope_type(ann, scope, fnames)
            _scope_expr(r, scope, fnames)
            _scope_expr(b, scope | set(binder_names(x)), fnames)
        case LetRec(binder=x, ann=ann, rhs=r, body=b):
            if ann is not None:
                _scope_type(ann, scope, fnames)
            inner = scope | set(binder_names(x))
            _scope_expr(r, inner, fnames)
            _scope_expr(b, inner, fnames)
        case Models(model=m, robot=robot):
            _scope_expr(m, scope, fnames)
            if isinstance(robot, RobotStr):
                _scope_expr(robot.value, scope, fnames)
        case RobotStr(value=v):
            _scope_expr(v, scope, fnames)
        case _:
            raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Base types. Unknowns (for unannotated letrec binders) resolve by first use.


class _Unk:
    __slots__ = ("ref",)

    def __init__(self):
        self.ref = None


_binder_record: "list | None" = None


def _resolve(t):
    while isinstance(t, _Unk) and t.ref is not None:
        t = t.ref
    return t


def _unify(a, b, what: str):
    a, b = _resolve(a), _resolve(b)
    if a is b:
        return a
    if isinstance(a, _Unk):
        a.ref = b
        return b
    if isinstance(b, _Unk):
        b.ref = a
        return a
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return tuple(_unify(x, y, what) for x, y in zip(a, b))
    if a != b:
        raise BaseTypeError(f"{what}: {_show(a)} vs {_show(b)}")
    return a


def _show(t) -> str:
    t = _resolve(t)
    if isinstance(t, _Unk):
        return "?"
    if isinstance(t, tuple):
        return "(" + ", ".join(_show(x) for x in t) + ")"
    return pretty_base(t)


def _ground(t, what: str):
    t = _resolve(t)
    if isinstance(t, _Unk):
        raise BaseTypeError(f"{what}: type cannot be inferred")
    if isinstance(t, tuple):
        return tuple(_ground(x, what) for x in t)
    return t


def value_base(v: Value):
    match v:
        case IntLit():
            return INT
        case FloatLit():
            return FLOAT
        case BoolLit():
            return BOOL
        case TupleV(items=items):
            return tuple(value_base(i) for i in items)
        case Nil():
            return _Unk()
    raise TypeError(f"not a value: {v!r}")


def check_base_types(p: Program) -> dict:
    """Check the whole program; returns the base type of main under 'main'."""
    sigs: dict[str, tuple] = {}
    for d in p.defs:
        argb = _ann_base(d.argtype)
        retb = _ann_base(d.rettype)
        _pred_types_of_ann(d.argtype, {d.argname: argb})
        _pred_types_of_ann(d.rettype, {d.argname: argb})
        got = _infer(d.body, {d.argname: argb}, sigs)
        _unify(got, retb, f"function {d.name} result")
        sigs[d.name] = (argb, retb)
    main = _infer(p.main, {}, sigs)
    return {"main": _ground(main, "main expression")}


def binder_bases(p: Program) -> dict:
    """Base type of every let binder, keyed by id() of the binding node.

    Binders whose base is never pinned down (e.g. an unused nil) default to
    int per component; the returned map is only valid while the program
    object is alive.
    """
    global _binder_record
    _binder_record = []
    try:
        check_base_types(p)
        out = {}
        for node, cell in _binder_record:
            out[id(node)] = _default_ground(cell)
        return out
    finally:
        _binder_record = None


def _default_ground(t):
    t = _resolve(t)
    if isinstance(t, _Unk):
        return INT
    if isinstance(t, tuple):
        return tuple(_default_ground(x) for x in t)
    return t


def _ann_base(t: RefType):
    match t:
        case Base(base=b):
            return b
        case Refined(binder=w, base=b, pred=_):
            names = binder_names(w)
            if len(names) > 1:
                if not isinstance(b, tuple) or len(b) != len(names):
                    raise BaseTypeError(
                        f"pattern ({', '.join(names)}) does not match base {_show(b)}"
                    )
            return b
    raise BaseTypeError(f"unexpected type annotation {t!r}")


def _binder_env(binder, base) -> dict:
    names = binder_names(binder)
    if len(names) == 1:
        return {names[0]: base}
    base = _resolve(base)
    if isinstance(base, _Unk):
        parts = [_Unk() for _ in names]
        base.ref = tuple(parts)
        return dict(zip(names, parts))
    if not isinstance(base, tuple) or len(base) != len(names):
        raise BaseTypeError(
            f"pattern ({', '.join(names)}) does not match base {_show(base)}"
        )
    return dict(zip(names, base))


def _pred_types_of_ann(t: RefType, outer: dict) -> None:
    if not isinstance(t, Refined):
        return
    env = dict(outer)
    env.update(_binder_env(t.binder, t.base))
    _pred_types(t.pred, env)


def _pred_types(q: TracePredicate, env: dict) -> None:
    match q:
        case SP(pred=p):
            _state_types(p, env)
        case Always(body=b) | Next(body=b):
            _pred_types(b, env)
        case Conj(left=l, right=r):
            _pred_types(l, env)
            _pred_types(r, env)


def _state_types(p: StatePredicate, env: dict) -> None:
    match p:
        case VarP(name=n):
            _unify(env[n], BOOL, f"predicate variable {n}")
        case Eq(left=l, right=r):
            _unify(_term_type(l, env), _term_type(r, env), "equality operands")
        case Gt(left=l, right=r):
            t = _unify(_term_type(l, env), _term_type(r, env), "comparison operands")
            t = _resolve(t)
            if not isinstance(t, _Unk) and t not in (INT, FLOAT):
                raise BaseTypeError(f"comparison over {_show(t)}")
        case And(left=l, right=r):
            _state_types(l, env)
            _state_types(r, env)
        case NotP(body=b):
            _state_types(b, env)


def _term_type(t: Term, env: dict):
    match t:
        case TLit(value=v):
            return value_base(v)
        case TVar(name=n):
            return env[n]
        case TOp(op="neg", args=(a,)):
            return _term_type(a, env)
        case TOp(op="/", args=(a, b)):
            _unify(_term_type(a, env), FLOAT, "division operand")
            _unify(_term_type(b, env), FLOAT, "division operand")
            return FLOAT
        case TOp(args=(a, b)):
            return _unify(_term_type(a, env), _term_type(b, env), "arithmetic operands")
        case TIte(cond=c, then=a, els=b):
            _state_types(c, env)
            return _unify(_term_type(a, env), _term_type(b, env), "ite branches")
    raise BaseTypeError(f"unexpected term {t!r}")


_NUMERIC_OPS = ("+", "-", "*")
_CMP_OPS = ("<", ">", "<=", ">=")


def _infer(e: Expr, env: dict, sigs: dict):
    match e:
        case Const(value=v):
            return value_base(v)
        case Var(name=n):
            return env[n]
        case Prim(op="neg", args=(a,)):
            t = _infer(a, env, sigs)
            r = _resolve(t)
            if not isinstance(r, _Unk) and r not in (INT, FLOAT):
                raise BaseTypeError(f"negation over {_show(r)}")
            return t
        case Prim(op="not", args=(a,)):
            _unify(_infer(a, env, sigs), BOOL, "not operand")
            return BOOL
        case Prim(op="and" | "or", args=(a, b)):
            _unify(_infer(a, env, sigs), BOOL, "boolean operand")
            _unify(_infer(b, env, sigs), BOOL, "boolean operand")
            return BOOL
        case Prim(op="/", args=(a, b)):
            _unify(_infer(a, env, sigs), FLOAT, "division operand (division is float-only)")
            _unify(_infer(b, env, sigs), FLOAT, "division operand (division is float-only)")
            return FLOAT
        case Prim(op=op, args=(a, b)) if op in _NUMERIC_OPS:
            t = _unify(_infer(a, env, sigs), _infer(b, env, sigs), f"operands of {op}")
            r = _resolve(t)
            if not isinstance(r, _Unk) and r not in (INT, FLOAT):
                raise BaseTypeError(f"{op} over {_show(r)}")
            return t
        case Prim(op="=", args=(a, b)):
            t = _unify(_infer(a, env, sigs), _infer(b, env, sigs), "equality operands")
            r = _resolve(t)
            if isinstance(r, tuple):
                raise BaseTypeError("equality compares scalars only")
            return BOOL
        case Prim(op=op, args=(a, b)) if op in _CMP_OPS:
            t = _unify(_infer(a, env, sigs), _infer(b, env, sigs), "comparison operands")
            r = _resolve(t)
            if not isinstance(r, _Unk) and r not in (INT, FLOAT):
                raise BaseTypeError(f"comparison over {_show(r)}")
            return BOOL
        case Fby(left=l, right=r):
            return _unify(_infer(l, env, sigs), _infer(r, env, sigs), "fby operands")
        case Delay(body=b):
            return _infer(b, env, sigs)
        case TupleE(items=items):
            return tuple(_infer(i, env, sigs) for i in items)
        case If(cond=c, then=t, els=f):
            _unify(env[c], BOOL, f"if condition {c}")
            return _unify(
                _infer(t, env, sigs), _infer(f, env, sigs), "if branches"
            )
        case App(func=f, arg=a):
            argb, retb = sigs[f]
            _unify(env[a], argb, f"argument of {f}")
            return retb
        case Let(history=h, binder=x, ann=ann, rhs=r, body=b) | LetRec(
            history=h, binder=x, ann=ann, rhs=r, body=b
        ):
            bound = _ann_base(ann) if ann is not None else _Unk()
            if _binder_record is not None:
                _binder_record.append((e, bound))
            inner = dict(env)
            inner.update(_binder_env(x, bound))
            rhs_env = inner if isinstance(e, LetRec) else env
            got = _infer(r, rhs_env, sigs)
            _unify(got, bound, f"binding of {x}")
            for v in h:
                if not isinstance(v, Nil):
                    _unify(value_base(v), bound, f"history of {x}")
            if ann is not None:
                _pred_types_of_ann(ann, env)
            return _infer(b, inner, sigs)
        case Models(model=m, robot=robot):
            mt = _infer(m, env, sigs)
            if isinstance(robot, RobotStr):
                _unify(_infer(robot.value, env, sigs), mt, "models operands")
            return mt
        case RobotStr(value=v):
            return _infer(v, env, sigs)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Causality. free_delays(e) maps each free variable to the least delay at
# which e reads it (0 = this instant).


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = min(v, out[k]) if k in out else v
    return out


def _shift(d: dict, k: int) -> dict:
    return {name: delay + k for name, delay in d.items()}


def free_delays(e: Expr) -> dict:
    match e:
        case Const():
            return {}
        case Var(name=n):
            return {n: 0}
        case Prim(args=args):
            out: dict = {}
            for a in args:
                out = _merge(out, free_delays(a))
            return out
        case Fby(left=l, right=r):
            return _merge(free_delays(l), _shift(free_delays(r), 1))
        case Delay(body=b):
            return _shift(free_delays(b), 1)
        case TupleE(items=items):
            out = {}
            for i in items:
                out = _merge(out, free_delays(i))
            return out
        case If(cond=c, then=t, els=f):
            return _merge({c: 0}, _merge(free_delays(t), free_delays(f)))
        case App(arg=a):
            return {a: 0}
        case Models(model=m, robot=robot):
            out = free_delays(m)
            if isinstance(robot, RobotStr):
                out = _merge(out, free_delays(robot.value))
            return out
        case RobotStr(value=v):
            return free_delays(v)
        case Let(binder=x, rhs=r, body=b) | LetRec(binder=x, rhs=r, body=b):
            names = set(binder_names(x))
            fr = free_delays(r)
            if isinstance(e, LetRec):
                for n in names:
                    if fr.get(n, 1) == 0:
                        raise CausalityError(
                            f"{n} depends on itself without a delay (not under any fby right-operand)"
                        )
                fr = {k: v for k, v in fr.items() if k not in names}
            fb = free_delays(b)
            through = min((fb[n] for n in names if n in fb), default=None)
            out = {k: v for k, v in fb.items() if k not in names}
            if through is not None:
                out = _merge(out, _shift(fr, through))
            # The rhs still fires every instant; its own subterms were checked
            # by the recursive calls above.
            return out
    raise TypeError(f"not an expression: {e!r}")


def check_causality(p: Program) -> None:
    for d in p.defs:
        _check_pointwise_body(d.body, d.name)
    free_delays(p.main)


def _check_pointwise_body(e: Expr, fname: str) -> None:
    match e:
        case Fby() | Delay() | LetRec():
            raise CausalityError(
                f"function {fname} must be pointwise (no fby, delay or let rec)"
            )
        case Prim(args=args):
            for a in args:
                _check_pointwise_body(a, fname)
        case TupleE(items=items):
            for i in items:
                _check_pointwise_body(i, fname)
        case If(then=t, els=f):
            _check_pointwise_body(t, fname)
            _check_pointwise_body(f, fname)
        case Let(rhs=r, body=b):
            _check_pointwise_body(r, fname)
            _check_pointwise_body(b, fname)
        case Models(model=m, robot=robot):
            _check_pointwise_body(m, fname)
            if isinstance(robot, RobotStr):
                _check_pointwise_body(robot.value, fname)
        case RobotStr(value=v):
            _check_pointwise_body(v, fname)
        case _:
            return
