"""Surface syntax parser.

Hand-rolled tokenizer and recursive descent. The parser desugars non-variable
if-conditions and application arguments into fresh `$`-named lets (those names
are not writable in source, and the printer sugars them back), folds signed
numeric literals, and never emits Delay nodes or nonempty histories.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    And, App, Always, Base, BoolLit, Conj, Const, Eq, Expr, Fby, FloatLit,
    FunDef, Gt, If, IntLit, Let, LetRec, Models, Next, NotP, Prim, Program,
    RefType, Refined, RobotGet, RobotStr, SP, StatePredicate, TLit, TOp,
    TracePredicate, TupleE, TVar, Term, TrueP, FalseP, Var, VarP,
    BOOL, FLOAT, INT,
)

KEYWORDS = {
    "let", "rec", "in", "fby", "if", "then", "else", "models", "robot_get",
    "robot_str", "fun", "true", "false", "not", "and", "or", "always", "next",
    "int", "float", "bool", "nil",
}

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r\n]+)
    | (?P<linecomment>--[^\n]*)
    | (?P<blockopen>\(\*)
    | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?)
    | (?P<int>\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
    | (?P<string>"[^"\n]*")
    | (?P<punct><=|>=|=>|->|[()={}|,:<>*/+-])
    """,
    re.VERBOSE,
)


class ParseError(Exception):
    """Syntax error with position and the token kinds that would have parsed."""

    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line = line
        self.col = col
        self.expected = frozenset(expected)
        hint = f" (expected {', '.join(sorted(self.expected))})" if expected else ""
        super().__init__(f"{line}:{col}: {message}{hint}")


@dataclass(frozen=True)
class Token:
    kind: str  # 'int' 'float' 'name' 'string' 'kw' 'punct' 'eof'
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, linestart = 0, 1, 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"stray character {src[pos]!r}", line, pos - linestart + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - linestart + 1
        if kind == "blockopen":
            depth, p = 1, m.end()
            while depth > 0:
                if p >= n:
                    raise ParseError("unterminated block comment", line, col)
                if src.startswith("(*", p):
                    depth, p = depth + 1, p + 2
                elif src.startswith("*)", p):
                    depth, p = depth - 1, p + 2
                else:
                    if src[p] == "\n":
                        line, linestart = line + 1, p + 1
                    p += 1
            pos = p
            continue
        if kind in ("ws", "linecomment"):
            for i, ch in enumerate(text):
                if ch == "\n":
                    line, linestart = line + 1, pos + i + 1
        elif kind == "name":
            toks.append(Token("kw" if text in KEYWORDS else "name", text, line, col))
        elif kind == "string":
            toks.append(Token("string", text[1:-1], line, col))
        else:
            toks.append(Token(kind, text, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, n - linestart + 1))
    return toks


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.fresh = 0

    # -- token plumbing ------------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_kw(self, *words: str) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.text in words

    def at_punct(self, *ps: str) -> bool:
        t = self.peek()
        return t.kind == "punct" and t.text in ps

    def eat_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            t = self.peek()
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, {f"'{word}'"})
        return self.next()

    def eat_punct(self, p: str) -> Token:
        if not self.at_punct(p):
            t = self.peek()
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, {f"'{p}'"})
        return self.next()

    def eat_name(self) -> Token:
        t = self.peek()
        if t.kind != "name":
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, {"identifier"})
        return self.next()

    def fail(self, what: str, expected=()):
        t = self.peek()
        raise ParseError(f"unexpected {t.text!r} while parsing {what}", t.line, t.col, expected)

    def fresh_name(self) -> str:
        self.fresh += 1
        return f"$t{self.fresh}"

    # -- program -------------------------------------------------------------

    def parse_program(self) -> Program:
        defs = []
        while self.at_kw("fun"):
            defs.append(self.parse_fundef())
        main = self.parse_expr()
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input {t.text!r}", t.line, t.col, {"end of input"})
        return Program(tuple(defs), main)

    def parse_fundef(self) -> FunDef:
        self.eat_kw("fun")
        name = self.eat_name().text
        self.eat_punct("(")
        arg = self.eat_name().text
        self.eat_punct(":")
        argty = self.parse_type()
        self.eat_punct(")")
        self.eat_punct(":")
        retty = self.parse_type()
        self.eat_punct("=")
        body = self.parse_expr()
        return FunDef(name, arg, argty, retty, body)

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> Expr:
        if self.at_kw("let"):
            return self.parse_let()
        if self.at_kw("if"):
            return self.parse_if()
        left = self.parse_models()
        if self.at_kw("fby"):
            self.next()
            return Fby(left, self.parse_expr())
        return left

    def parse_let(self) -> Expr:
        self.eat_kw("let")
        rec = False
        if self.at_kw("rec"):
            self.next()
            rec = True
        binder = self.parse_binder()
        ann = None
        if self.at_punct(":"):
            self.next()
            ann = self.parse_type()
        self.eat_punct("=")
        rhs = self.parse_expr()
        self.eat_kw("in")
        body = self.parse_expr()
        cls = LetRec if rec else Let
        return cls((), binder, ann, rhs, body)

    def parse_binder(self):
        if self.at_punct("("):
            self.next()
            names = [self.eat_name().text]
            while self.at_punct(","):
                self.next()
                names.append(self.eat_name().text)
            self.eat_punct(")")
            if len(names) < 2:
                t = self.peek()
                raise ParseError("tuple pattern needs at least two names", t.line, t.col)
            return tuple(names)
        return self.eat_name().text

    def parse_if(self) -> Expr:
        self.eat_kw("if")
        cond = self.parse_expr()
        self.eat_kw("then")
        then = self.parse_expr()
        self.eat_kw("else")
        els = self.parse_expr()
        if isinstance(cond, Var):
            return If(cond.name, then, els)
        name = self.fresh_name()
        return Let((), name, None, cond, If(name, then, els))

    def parse_models(self) -> Expr:
        e = self.parse_or()
        if self.at_kw("models"):
            self.next()
            return Models(e, self.parse_robot())
        return e

    def parse_robot(self):
        if self.at_kw("robot_get"):
            self.next()
            return RobotGet(self.eat_string())
        if self.at_kw("robot_str"):
            self.next()
            key = self.eat_string()
            value = self.parse_unary()
            _check_pointwise_robot(value, self.peek())
            return RobotStr(key, value)
        self.fail("robot expression", {"'robot_get'", "'robot_str'"})

    def eat_string(self) -> str:
        t = self.peek()
        if t.kind != "string":
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, {"string literal"})
        self.next()
        if not t.text:
            raise ParseError("device key must be nonempty", t.line, t.col)
        return t.text

    def parse_or(self) -> Expr:
        e = self.parse_and()
        while self.at_kw("or"):
            self.next()
            e = Prim("or", (e, self.parse_and()))
        return e

    def parse_and(self) -> Expr:
        e = self.parse_cmp()
        while self.at_kw("and"):
            self.next()
            e = Prim("and", (e, self.parse_cmp()))
        return e

    def parse_cmp(self) -> Expr:
        e = self.parse_add()
        if self.at_punct("=", "<", ">", "<=", ">="):
            op = self.next().text
            return Prim(op, (e, self.parse_add()))
        return e

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while self.at_punct("+", "-"):
            op = self.next().text
            e = Prim(op, (e, self.parse_mul()))
        return e

    def parse_mul(self) -> Expr:
        e = self.parse_unary()
        while self.at_punct("*", "/"):
            op = self.next().text
            e = Prim(op, (e, self.parse_unary()))
        return e

    def parse_unary(self) -> Expr:
        if self.at_punct("-"):
            self.next()
            arg = self.parse_unary()
            return _negate(arg)
        if self.at_kw("not"):
            self.next()
            return Prim("not", (self.parse_unary(),))
        return self.parse_app()

    def parse_app(self) -> Expr:
        e = self.parse_primary()
        t = self.peek()
        # The argument must start on the same line as the function name;
        # otherwise a definition body ending in a variable would swallow
        # whatever expression happens to follow it.
        starts_arg = (
            t.kind in ("name",) or (t.kind == "punct" and t.text == "(")
        ) and t.line == self.toks[self.i - 1].line
        if isinstance(e, Var) and starts_arg:
            if t.kind == "name":
                return App(e.name, self.next().text)
            arg = self.parse_primary()
            if isinstance(arg, Var):
                return App(e.name, arg.name)
            name = self.fresh_name()
            return Let((), name, None, arg, App(e.name, name))
        return e

    def parse_primary(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Const(IntLit(int(t.text)))
        if t.kind == "float":
            self.next()
            return Const(FloatLit(float(t.text), t.text))
        if self.at_kw("true"):
            self.next()
            return Const(BoolLit(True))
        if self.at_kw("false"):
            self.next()
            return Const(BoolLit(False))
        if t.kind == "name":
            self.next()
            return Var(t.text)
        if self.at_kw("robot_str"):
            # robot_get is only legal on the right of models; a write is an
            # ordinary expression that passes its value through.
            return self.parse_robot()
        if self.at_punct("("):
            self.next()
            items = [self.parse_expr()]
            while self.at_punct(","):
                self.next()
                items.append(self.parse_expr())
            self.eat_punct(")")
            return items[0] if len(items) == 1 else TupleE(tuple(items))
        self.fail("expression", {"literal", "identifier", "'('"})

    # -- refinement types ----------------------------------------------------

    def parse_type(self) -> RefType:
        if self.at_punct("{"):
            self.next()
            binder = self.parse_binder()
            self.eat_punct(":")
            base = self.parse_base()
            self.eat_punct("|")
            pred = self.parse_pred()
            self.eat_punct("}")
            return Refined(binder, base, pred)
        return Base(self.parse_base())

    def parse_base(self):
        items = [self.parse_base_atom()]
        while self.at_punct("*"):
            self.next()
            items.append(self.parse_base_atom())
        return items[0] if len(items) == 1 else tuple(items)

    def parse_base_atom(self):
        if self.at_kw("int"):
            self.next()
            return INT
        if self.at_kw("float"):
            self.next()
            return FLOAT
        if self.at_kw("bool"):
            self.next()
            return BOOL
        if self.at_punct("("):
            self.next()
            b = self.parse_base()
            self.eat_punct(")")
            return b
        self.fail("base type", {"'int'", "'float'", "'bool'", "'('"})

    # -- predicates ----------------------------------------------------------
    # Parsed into a small untyped tree, then classified: arithmetic below
    # comparisons becomes Terms, everything above becomes predicates.

    def parse_pred(self) -> TracePredicate:
        tree = self.p_imp()
        return _as_trace(tree, self.peek())

    def p_imp(self):
        e = self.p_or()
        if self.at_punct("=>"):
            self.next()
            return ("bin", "=>", e, self.p_imp())
        return e

    def p_or(self):
        e = self.p_and()
        while self.at_kw("or"):
            self.next()
            e = ("bin", "or", e, self.p_and())
        return e

    def p_and(self):
        e = self.p_unit()
        while self.at_kw("and"):
            self.next()
            e = ("bin", "and", e, self.p_unit())
        return e

    def p_unit(self):
        if self.at_kw("always"):
            self.next()
            return ("un", "always", self.p_unit())
        if self.at_kw("next"):
            self.next()
            return ("un", "next", self.p_unit())
        return self.p_cmp()

    def p_cmp(self):
        e = self.p_add()
        if self.at_punct("=", "<", ">", "<=", ">="):
            op = self.next().text
            return ("bin", op, e, self.p_add())
        return e

    def p_add(self):
        e = self.p_mul()
        while self.at_punct("+", "-"):
            op = self.next().text
            e = ("bin", op, e, self.p_mul())
        return e

    def p_mul(self):
        e = self.p_unary()
        while self.at_punct("*", "/"):
            op = self.next().text
            e = ("bin", op, e, self.p_unary())
        return e

    def p_unary(self):
        if self.at_punct("-"):
            self.next()
            return ("un", "neg", self.p_unary())
        if self.at_kw("not"):
            self.next()
            return ("un", "not", self.p_unary())
        return self.p_atom()

    def p_atom(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return ("lit", IntLit(int(t.text)))
        if t.kind == "float":
            self.next()
            return ("lit", FloatLit(float(t.text), t.text))
        if self.at_kw("true"):
            self.next()
            return ("true",)
        if self.at_kw("false"):
            self.next()
            return ("false",)
        if t.kind == "name":
            self.next()
            return ("name", t.text)
        if self.at_punct("("):
            self.next()
            e = self.p_imp()
            self.eat_punct(")")
            return e
        self.fail("predicate", {"literal", "identifier", "'('", "'always'", "'next'", "'not'"})


def _neg_text(t: str | None) -> str | None:
    if t is None:
        return None
    return t[1:] if t.startswith("-") else "-" + t


def _negate(e: Expr) -> Expr:
    match e:
        case Const(value=IntLit(value=n)):
            return Const(IntLit(-n))
        case Const(value=FloatLit(value=x, text=t)):
            return Const(FloatLit(-x, _neg_text(t)))
    return Prim("neg", (e,))


def _check_pointwise_robot(e: Expr, tok: Token) -> None:
    match e:
        case Const() | Var():
            return
        case Prim(args=args):
            for a in args:
                _check_pointwise_robot(a, tok)
        case App():
            return
        case _:
            raise ParseError(
                "robot_str expression must be pointwise (no let, if, fby or models)",
                tok.line, tok.col,
            )


# -- predicate classification -------------------------------------------------

_CMP_OPS = ("=", "<", ">", "<=", ">=")


def _as_term(tree, tok: Token) -> Term:
    match tree:
        case ("lit", v):
            return TLit(v)
        case ("name", n):
            return TVar(n)
        case ("un", "neg", a):
            match _as_term(a, tok):
                case TLit(value=IntLit(value=n)):
                    return TLit(IntLit(-n))
                case TLit(value=FloatLit(value=x, text=t)):
                    return TLit(FloatLit(-x, _neg_text(t)))
                case t:
                    return TOp("neg", (t,))
        case ("bin", op, a, b) if op in ("+", "-", "*", "/"):
            return TOp(op, (_as_term(a, tok), _as_term(b, tok)))
    raise ParseError("expected an arithmetic term", tok.line, tok.col)


def _as_state(tree, tok: Token) -> StatePredicate:
    match tree:
        case ("true",):
            return TrueP()
        case ("false",):
            return FalseP()
        case ("name", n):
            return VarP(n)
        case ("un", "not", a):
            return NotP(_as_state(a, tok))
        case ("bin", "and", a, b):
            return And(_as_state(a, tok), _as_state(b, tok))
        case ("bin", "or", a, b):
            return NotP(And(NotP(_as_state(a, tok)), NotP(_as_state(b, tok))))
        case ("bin", "=>", a, b):
            return NotP(And(NotP(NotP(_as_state(a, tok))), NotP(_as_state(b, tok))))
        case ("bin", "=", a, b):
            return Eq(_as_term(a, tok), _as_term(b, tok))
        case ("bin", ">", a, b):
            return Gt(_as_term(a, tok), _as_term(b, tok))
        case ("bin", "<", a, b):
            return Gt(_as_term(b, tok), _as_term(a, tok))
        case ("bin", ">=", a, b):
            return NotP(Gt(_as_term(b, tok), _as_term(a, tok)))
        case ("bin", "<=", a, b):
            return NotP(Gt(_as_term(a, tok), _as_term(b, tok)))
        case ("un", "always", _) | ("un", "next", _):
            raise ParseError(
                "always/next cannot appear under 'not' or 'or' (no trace-level negation or disjunction)",
                tok.line, tok.col,
            )
    raise ParseError("expected a state predicate", tok.line, tok.col)


def _is_trace_level(tree) -> bool:
    match tree:
        case ("un", "always", _) | ("un", "next", _):
            return True
        case ("bin", "and", a, b):
            return _is_trace_level(a) or _is_trace_level(b)
        case _:
            return False


def _as_trace(tree, tok: Token) -> TracePredicate:
    if not _is_trace_level(tree):
        return SP(_as_state(tree, tok))
    match tree:
        case ("un", "always", a):
            return Always(_as_trace(a, tok))
        case ("un", "next", a):
            return Next(_as_trace(a, tok))
        case ("bin", "and", a, b):
            return Conj(_as_trace(a, tok), _as_trace(b, tok))
    raise ParseError("malformed trace predicate", tok.line, tok.col)


# -- public entry points -------------------------------------------------------


def parse(src: str) -> Program:
    """Parse a whole program: zero or more fun definitions, then the main expression."""
    return Parser(src).parse_program()


def parse_expr(src: str) -> Expr:
    p = Parser(src)
    e = p.parse_expr()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col, {"end of input"})
    return e


def parse_pred(src: str) -> TracePredicate:
    p = Parser(src)
    q = p.parse_pred()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col, {"end of input"})
    return q


def parse_type(src: str) -> RefType:
    p = Parser(src)
    ty = p.parse_type()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col, {"end of input"})
    return ty
