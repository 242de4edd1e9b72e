"""Core syntax: values, terms, predicates, refinement types, expressions.

Programs are synchronous stream expressions. Histories of past values are
embedded directly in Let/LetRec nodes, so a partially-executed program is
itself a program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

# ---------------------------------------------------------------------------
# Base types. Scalars are the strings "int", "float", "bool"; a product is a
# tuple of base types of arity >= 2.

INT = "int"
FLOAT = "float"
BOOL = "bool"

BaseTy = "str | tuple"

SCALARS = (INT, FLOAT, BOOL)


def is_scalar(b) -> bool:
    return b in SCALARS


def pretty_base(b) -> str:
    if isinstance(b, tuple):
        parts = []
        for item in b:
            s = pretty_base(item)
            parts.append(f"({s})" if isinstance(item, tuple) else s)
        return " * ".join(parts)
    return b


# ---------------------------------------------------------------------------
# Values


class Value:
    """A value emitted by a stream at one instant."""

    __slots__ = ()


@dataclass(frozen=True)
class Nil(Value):
    """The not-yet-defined value; only legal as the last element of a history."""


@dataclass(frozen=True)
class IntLit(Value):
    value: int


@dataclass(frozen=True)
class FloatLit(Value):
    """A float; `text` preserves the source decimal so logic can read it exactly."""

    value: float
    text: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class BoolLit(Value):
    value: bool


@dataclass(frozen=True)
class TupleV(Value):
    items: tuple[Value, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("tuple values have arity >= 2")
        if any(isinstance(v, Nil) for v in self.items):
            raise ValueError("Nil cannot appear inside a tuple value")


def float_rational(v: FloatLit) -> Fraction:
    """The exact rational a float literal denotes in the logic."""
    if v.text is not None:
        return Fraction(v.text)
    return Fraction(v.value)


# ---------------------------------------------------------------------------
# Terms: the arithmetic layer of predicates and of verification conditions.

ARITH_OPS = ("+", "-", "*", "/", "neg")


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class TLit(Term):
    value: Value  # scalar only


@dataclass(frozen=True)
class TVar(Term):
    name: str


@dataclass(frozen=True)
class TOp(Term):
    op: str  # one of ARITH_OPS
    args: tuple[Term, ...]


@dataclass(frozen=True)
class TIte(Term):
    """Conditional term; produced by expression translation, never by the parser."""

    cond: "StatePredicate"
    then: Term
    els: Term


@dataclass(frozen=True)
class TApp(Term):
    """Application of a program function symbol; treated as uninterpreted."""

    func: str
    arg: Term


# ---------------------------------------------------------------------------
# State predicates (per-instant) and trace predicates (LTL fragment).


class StatePredicate:
    __slots__ = ()


@dataclass(frozen=True)
class TrueP(StatePredicate):
    pass


@dataclass(frozen=True)
class FalseP(StatePredicate):
    pass


@dataclass(frozen=True)
class VarP(StatePredicate):
    """A boolean stream variable used as a predicate."""

    name: str


@dataclass(frozen=True)
class Eq(StatePredicate):
    left: Term
    right: Term


@dataclass(frozen=True)
class Gt(StatePredicate):
    left: Term
    right: Term


@dataclass(frozen=True)
class And(StatePredicate):
    left: StatePredicate
    right: StatePredicate


@dataclass(frozen=True)
class NotP(StatePredicate):
    body: StatePredicate


# Derived state connectives, kept out of the core.


def or_(a: StatePredicate, b: StatePredicate) -> StatePredicate:
    return NotP(And(NotP(a), NotP(b)))


def implies(a: StatePredicate, b: StatePredicate) -> StatePredicate:
    return or_(NotP(a), b)


def ge(l: Term, r: Term) -> StatePredicate:
    return NotP(Gt(r, l))


def le(l: Term, r: Term) -> StatePredicate:
    return NotP(Gt(l, r))


def lt(l: Term, r: Term) -> StatePredicate:
    return Gt(r, l)


def conj(preds) -> StatePredicate:
    preds = list(preds)
    if not preds:
        return TrueP()
    out = preds[0]
    for p in preds[1:]:
        out = And(out, p)
    return out


class TracePredicate:
    __slots__ = ()


@dataclass(frozen=True)
class SP(TracePredicate):
    """A state predicate lifted to the current instant of a trace."""

    pred: StatePredicate


@dataclass(frozen=True)
class Always(TracePredicate):
    body: TracePredicate


@dataclass(frozen=True)
class Next(TracePredicate):
    body: TracePredicate


@dataclass(frozen=True)
class Conj(TracePredicate):
    left: TracePredicate
    right: TracePredicate


TOP = SP(TrueP())


# ---------------------------------------------------------------------------
# Refinement types. A Refined binder is a single name or, over a product
# base, a pattern of component names. FunT only ever lives in function
# environments.

Binder = "str | tuple[str, ...]"


class RefType:
    __slots__ = ()


@dataclass(frozen=True)
class Base(RefType):
    base: object  # BaseTy


@dataclass(frozen=True)
class Refined(RefType):
    binder: object  # Binder
    base: object  # BaseTy
    pred: TracePredicate


@dataclass(frozen=True)
class FunT(RefType):
    argname: str
    arg: RefType
    ret: RefType


def base_of(t: RefType):
    match t:
        case Base(base=b) | Refined(base=b):
            return b
        case _:
            raise ValueError(f"no base type for {t!r}")


# ---------------------------------------------------------------------------
# Expressions


class Expr:
    __slots__ = ()


class RobotExpr:
    __slots__ = ()


@dataclass(frozen=True)
class RobotGet(RobotExpr):
    key: str

    def __post_init__(self):
        if not self.key:
            raise ValueError("device key must be nonempty")


@dataclass(frozen=True)
class RobotStr(RobotExpr):
    key: str
    value: Expr  # pointwise, binder-free

    def __post_init__(self):
        if not self.key:
            raise ValueError("device key must be nonempty")


@dataclass(frozen=True)
class Const(Expr):
    value: Value


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Prim(Expr):
    """Pointwise primitive operator application (SMT-safe fragment only)."""

    op: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Fby(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Delay(Expr):
    """Evaluate the body one instant in the past. Never produced by the parser."""

    body: Expr


@dataclass(frozen=True)
class TupleE(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("tuple expressions have arity >= 2")


@dataclass(frozen=True)
class If(Expr):
    """Conditional on a boolean variable; both branches advance each instant."""

    cond: str
    then: Expr
    els: Expr


@dataclass(frozen=True)
class App(Expr):
    """Application of a named function to a named argument stream."""

    func: str
    arg: str


@dataclass(frozen=True)
class Let(Expr):
    history: tuple[Value, ...]
    binder: object  # Binder
    ann: RefType | None
    rhs: Expr
    body: Expr


@dataclass(frozen=True)
class LetRec(Expr):
    history: tuple[Value, ...]
    binder: object  # Binder
    ann: RefType | None
    rhs: Expr
    body: Expr


@dataclass(frozen=True)
class Models(Expr):
    """`model models robot`: the verified model side paired with robot code."""

    model: Expr
    robot: RobotExpr


@dataclass(frozen=True)
class FunDef:
    """A pointwise function definition; bodies contain no Fby, Delay or LetRec."""

    name: str
    argname: str
    argtype: RefType
    rettype: RefType
    body: Expr


@dataclass(frozen=True)
class Program:
    defs: tuple[FunDef, ...]
    main: Expr


def binder_names(binder) -> tuple[str, ...]:
    return (binder,) if isinstance(binder, str) else tuple(binder)


def is_synthetic(name: str) -> bool:
    """Names the parser invents while desugaring; re-sugared when printing."""
    return name.startswith("$")


# ---------------------------------------------------------------------------
# Pretty-printing. parse(pretty(p)) == p for parser-produced programs;
# embedded histories are runtime state and are not printed.

_PREC_FBY = 0
_PREC_MODELS = 1
_PREC_IMP = 1  # implication only occurs in predicates, never beside fby/models
_PREC_OR = 2
_PREC_AND = 3
_PREC_CMP = 4
_PREC_ADD = 5
_PREC_MUL = 6
_PREC_UNARY = 7
_PREC_APP = 8
_PREC_ATOM = 9

_BINOP_PREC = {
    "or": _PREC_OR,
    "and": _PREC_AND,
    "=": _PREC_CMP,
    ">": _PREC_CMP,
    "<": _PREC_CMP,
    ">=": _PREC_CMP,
    "<=": _PREC_CMP,
    "+": _PREC_ADD,
    "-": _PREC_ADD,
    "*": _PREC_MUL,
    "/": _PREC_MUL,
}


def _paren(s: str, mine: int, outer: int) -> str:
    return f"({s})" if mine < outer else s


def pretty_value(v: Value) -> str:
    match v:
        case Nil():
            return "nil"
        case IntLit(value=n):
            return str(n)
        case FloatLit(value=x, text=t):
            return t if t is not None else repr(x)
        case BoolLit(value=b):
            return "true" if b else "false"
        case TupleV(items=items):
            return "(" + ", ".join(pretty_value(i) for i in items) + ")"
    raise TypeError(f"not a value: {v!r}")


def pretty_term(t: Term, outer: int = 0) -> str:
    match t:
        case TLit(value=v):
            s = pretty_value(v)
            return _paren(s, _PREC_UNARY, outer) if s.startswith("-") else s
        case TVar(name=n):
            return n
        case TOp(op="neg", args=(a,)):
            return _paren(f"-{pretty_term(a, _PREC_UNARY + 1)}", _PREC_UNARY, outer)
        case TOp(op=op, args=(a, b)):
            p = _BINOP_PREC[op]
            s = f"{pretty_term(a, p)} {op} {pretty_term(b, p + 1)}"
            return _paren(s, p, outer)
        case TApp(func=f, arg=a):
            return _paren(f"{f} ({pretty_term(a, 0)})", _PREC_APP, outer)
        case TIte(cond=c, then=a, els=b):
            s = f"if {pretty_state(c, 0)} then {pretty_term(a, 0)} else {pretty_term(b, 0)}"
            return f"({s})"
    raise TypeError(f"not a term: {t!r}")


def pretty_state(p: StatePredicate, outer: int = 0) -> str:
    match p:
        case TrueP():
            return "true"
        case FalseP():
            return "false"
        case VarP(name=n):
            return n
        case Eq(left=l, right=r):
            return _paren(f"{pretty_term(l, _PREC_CMP)} = {pretty_term(r, _PREC_CMP)}", _PREC_CMP, outer)
        case Gt(left=l, right=r):
            return _paren(f"{pretty_term(l, _PREC_CMP)} > {pretty_term(r, _PREC_CMP)}", _PREC_CMP, outer)
        case NotP(body=And(left=NotP(body=NotP(body=a)), right=NotP(body=b))):
            s = f"{pretty_state(a, _PREC_IMP + 1)} => {pretty_state(b, _PREC_IMP)}"
            return _paren(s, _PREC_IMP, outer)
        case NotP(body=And(left=NotP(body=a), right=NotP(body=b))):
            s = f"{pretty_state(a, _PREC_OR)} or {pretty_state(b, _PREC_OR + 1)}"
            return _paren(s, _PREC_OR, outer)
        case NotP(body=Gt(left=l, right=r)):
            return _paren(f"{pretty_term(l, _PREC_CMP)} <= {pretty_term(r, _PREC_CMP)}", _PREC_CMP, outer)
        case NotP(body=b):
            return _paren(f"not {pretty_state(b, _PREC_UNARY)}", _PREC_UNARY, outer)
        case And(left=a, right=b):
            s = f"{pretty_state(a, _PREC_AND)} and {pretty_state(b, _PREC_AND + 1)}"
            return _paren(s, _PREC_AND, outer)
    raise TypeError(f"not a state predicate: {p!r}")


def pretty_pred(q: TracePredicate, outer: int = 0) -> str:
    match q:
        case SP(pred=p):
            return pretty_state(p, outer)
        case Always(body=b):
            return _paren(f"always {pretty_pred(b, _PREC_UNARY)}", _PREC_UNARY, outer)
        case Next(body=b):
            return _paren(f"next {pretty_pred(b, _PREC_UNARY)}", _PREC_UNARY, outer)
        case Conj(left=a, right=b):
            s = f"{pretty_pred(a, _PREC_AND)} and {pretty_pred(b, _PREC_AND + 1)}"
            return _paren(s, _PREC_AND, outer)
    raise TypeError(f"not a trace predicate: {q!r}")


def pretty_type(t: RefType) -> str:
    match t:
        case Base(base=b):
            return pretty_base(b)
        case Refined(binder=w, base=b, pred=q):
            binder = w if isinstance(w, str) else "(" + ", ".join(w) + ")"
            return f"{{{binder}: {pretty_base(b)} | {pretty_pred(q)}}}"
        case FunT(argname=x, arg=a, ret=r):
            return f"({x}: {pretty_type(a)}) -> {pretty_type(r)}"
    raise TypeError(f"not a type: {t!r}")


def _pretty_binding(e, indent: int) -> str:
    kw = "let rec" if isinstance(e, LetRec) else "let"
    binder = e.binder if isinstance(e.binder, str) else "(" + ", ".join(e.binder) + ")"
    ann = f" : {pretty_type(e.ann)}" if e.ann is not None else ""
    pad = "  " * indent
    rhs = pretty_expr(e.rhs, 0, indent + 1)
    body = pretty_expr(e.body, 0, indent)
    return f"{kw} {binder}{ann} = {rhs} in\n{pad}{body}"


def _inline_synthetic(body: Expr, name: str, rhs_text: str, indent: int) -> str:
    """Print a parser-introduced binding back in its sugared position."""
    match body:
        case If(cond=c, then=t, els=e) if c == name:
            s = f"if {rhs_text} then {pretty_expr(t, 0, indent)} else {pretty_expr(e, 0, indent)}"
            return s
        case App(func=f, arg=a) if a == name:
            return f"{f} ({rhs_text})"
    raise ValueError(f"synthetic binding {name} not consumed where expected")


def pretty_expr(e: Expr, outer: int = 0, indent: int = 0) -> str:
    match e:
        case Const(value=v):
            s = pretty_value(v)
            return _paren(s, _PREC_UNARY, outer) if s.startswith("-") else s
        case Var(name=n):
            return n
        case Prim(op="neg", args=(a,)):
            return _paren(f"-{pretty_expr(a, _PREC_UNARY + 1, indent)}", _PREC_UNARY, outer)
        case Prim(op="not", args=(a,)):
            return _paren(f"not {pretty_expr(a, _PREC_UNARY, indent)}", _PREC_UNARY, outer)
        case Prim(op=op, args=(a, b)):
            p = _BINOP_PREC[op]
            s = f"{pretty_expr(a, p, indent)} {op} {pretty_expr(b, p + 1, indent)}"
            return _paren(s, p, outer)
        case Fby(left=l, right=r):
            s = f"{pretty_expr(l, _PREC_FBY + 1, indent)} fby {pretty_expr(r, _PREC_FBY, indent)}"
            return _paren(s, _PREC_FBY, outer)
        case Delay(body=b):
            # Debug form only; not part of the surface grammar.
            return f"@delay({pretty_expr(b, 0, indent)})"
        case TupleE(items=items):
            return "(" + ", ".join(pretty_expr(i, 0, indent) for i in items) + ")"
        case If(cond=c, then=t, els=f):
            s = f"if {c} then {pretty_expr(t, 0, indent)} else {pretty_expr(f, 0, indent)}"
            return _paren(s, _PREC_FBY, outer)
        case App(func=f, arg=a):
            return _paren(f"{f} {a}", _PREC_APP, outer)
        case Let(binder=x, ann=None, rhs=r, body=b) if isinstance(x, str) and is_synthetic(x):
            s = _inline_synthetic(b, x, pretty_expr(r, 0, indent), indent)
            return _paren(s, _PREC_FBY, outer)
        case Let() | LetRec():
            return _paren(_pretty_binding(e, indent), _PREC_FBY, outer)
        case Models(model=m, robot=RobotGet(key=k)):
            s = f'{pretty_expr(m, _PREC_MODELS + 1, indent)} models robot_get "{k}"'
            return _paren(s, _PREC_MODELS, outer)
        case Models(model=m, robot=RobotStr(key=k, value=v)):
            s = (
                f'{pretty_expr(m, _PREC_MODELS + 1, indent)} models '
                f'robot_str "{k}" {pretty_expr(v, _PREC_MODELS + 1, indent)}'
            )
            return _paren(s, _PREC_MODELS, outer)
        case RobotStr(key=k, value=v):
            s = f'robot_str "{k}" {pretty_expr(v, _PREC_MODELS + 1, indent)}'
            return _paren(s, _PREC_MODELS, outer)
    raise TypeError(f"not an expression: {e!r}")


def pretty_fundef(d: FunDef) -> str:
    return (
        f"fun {d.name} ({d.argname} : {pretty_type(d.argtype)}) : "
        f"{pretty_type(d.rettype)} =\n  {pretty_expr(d.body, 0, 1)}"
    )


def pretty(p: Program) -> str:
    chunks = [pretty_fundef(d) for d in p.defs]
    chunks.append(pretty_expr(p.main, 0, 0))
    return "\n\n".join(chunks) + "\n"
