"""Independent oracles the test suite checks the implementation against.

Everything here is computed from first principles: the control systems are
plain float recurrences transcribed from their published dynamics, and the
temporal verdicts come from a direct recursive reading of the three-valued
finite-prefix semantics. Nothing imports interpreter, checker, or solver
code, and nothing in this file may be edited to make a failing test pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from rill.syntax import (
    And, Always, Conj, Eq, FalseP, Gt, Next, NotP, SP, StatePredicate, TLit,
    TOp, TVar, TIte, TracePredicate, TrueP, VarP,
)

# ---------------------------------------------------------------------------
# Control-system recurrences.


def tank_trajectory(steps: int, *, dt: float = 0.1, inflow: float = 0.5,
                    outflow: float = 0.1, low: float = 1.5, high: float = 18.5,
                    f0: float = 0.0, l0: float = 15.0) -> list[tuple[float, float]]:
    """(flow, level) per instant: level integrates the previous flow, then
    the controller picks the next flow from the fresh level."""
    out = [(f0, l0)]
    f, l = f0, l0
    for _ in range(steps - 1):
        l = l + (f - outflow) * dt
        if l < low:
            f = inflow
        elif l > high:
            f = 0.0
        out.append((f, l))
    return out


@dataclass(frozen=True)
class CollisionParams:
    dt: float = 0.1
    b: float = 0.136
    amax: float = 0.06
    xbrake: float = 4.0
    margin: float = 0.5
    xl0: float = 2.0
    vl0: float = 0.5
    xf0: float = 0.0
    vf0: float = 0.5
    leader: str = "halting"  # halting | stationary | crawl


STATIONARY = CollisionParams(xl0=6.0, vl0=0.0, leader="stationary")
CRAWL = CollisionParams(leader="crawl")


def collision_trajectory(steps: int, p: CollisionParams = CollisionParams()
                         ) -> list[tuple[float, float, float, float, float, float]]:
    """(xl, vl, al, xf, vf, af) per instant.

    Both vehicles integrate position with the current velocity, then clamp
    velocity at zero after applying the commanded acceleration. The leader
    brakes once past xbrake (the crawl variant only while still above
    0.05 m/s); the ego compares its worst-case stopping point, margin
    included, against the leader's braking floor.
    """
    dt, b, amax = p.dt, p.b, p.amax
    state = (p.xl0, p.vl0, 0.0, p.xf0, p.vf0, amax)
    out = [state]
    for _ in range(steps - 1):
        xl, vl, al, xf, vf, af = state
        xl2 = xl + vl * dt
        vl2 = max(0.0, vl + al * dt)
        if p.leader == "crawl":
            al2 = -b if (xl >= p.xbrake and vl > 0.05) else 0.0
        else:
            al2 = -b if xl >= p.xbrake else 0.0
        xf2 = xf + vf * dt
        vf2 = max(0.0, vf + af * dt)
        lpos = xl + (vl - b * dt) ** 2 / (2.0 * b) + (vl - b * dt) * dt / 2.0
        sf = (vf ** 2 / (2.0 * b)
              + (1.0 + amax / b) * (2.0 * vf * dt + 2.0 * amax * dt * dt)
              + vf * dt / 2.0)
        af2 = -b if xf + sf + p.margin >= lpos else amax
        state = (xl2, vl2, al2, xf2, vf2, af2)
        out.append(state)
    return out


def separations(traj) -> list[float]:
    return [xl - xf for (xl, _, _, xf, _, _) in traj]


# ---------------------------------------------------------------------------
# The nested-binding pitfall trace, fixed by hand from the semantics: the
# inner stream is 0 then forever 1; the outer stream trails its own sum with
# the inner one by one instant.

DELAY_X = [0, 0, 1, 2, 3, 4]
DELAY_Y = [0, 1, 1, 1, 1, 1]


# ---------------------------------------------------------------------------
# Three-valued finite-prefix semantics, by direct recursion. Verdicts are
# ("pass", None), ("violation", instant), or ("inconclusive", None):
# a state predicate past the end of the prefix is undetermined, always is
# never "pass" on a finite prefix, and a conjunction takes the earliest
# violation, else is inconclusive if either side is.

PASS = ("pass", None)
INCONCLUSIVE = ("inconclusive", None)


def eval_term_naive(t, row):
    match t:
        case TLit(value=v):
            return v.value
        case TVar(name=n):
            return row[n]
        case TOp(op="neg", args=(a,)):
            return -eval_term_naive(a, row)
        case TOp(op=op, args=(a, b)):
            x, y = eval_term_naive(a, row), eval_term_naive(b, row)
            if op == "+":
                return x + y
            if op == "-":
                return x - y
            if op == "*":
                return x * y
            if op == "/":
                return x / y
        case TIte(cond=c, then=a, els=b):
            return eval_term_naive(a if eval_state_naive(c, row) else b, row)
    raise TypeError(f"not a term: {t!r}")


def eval_state_naive(p: StatePredicate, row: dict) -> bool:
    match p:
        case TrueP():
            return True
        case FalseP():
            return False
        case VarP(name=n):
            return bool(row[n])
        case Eq(left=l, right=r):
            return eval_term_naive(l, row) == eval_term_naive(r, row)
        case Gt(left=l, right=r):
            return eval_term_naive(l, row) > eval_term_naive(r, row)
        case And(left=l, right=r):
            return eval_state_naive(l, row) and eval_state_naive(r, row)
        case NotP(body=b):
            return not eval_state_naive(b, row)
    raise TypeError(f"not a state predicate: {p!r}")


def _both(a, b):
    if a[0] == "violation" and b[0] == "violation":
        return a if a[1] <= b[1] else b
    if a[0] == "violation":
        return a
    if b[0] == "violation":
        return b
    if a[0] == "inconclusive" or b[0] == "inconclusive":
        return INCONCLUSIVE
    return PASS


def naive_verdict(q: TracePredicate, rows, i: int = 0):
    match q:
        case SP(pred=p):
            if i >= len(rows):
                return INCONCLUSIVE
            return PASS if eval_state_naive(p, rows[i]) else ("violation", i)
        case Next(body=b):
            return naive_verdict(b, rows, i + 1)
        case Conj(left=l, right=r):
            return _both(naive_verdict(l, rows, i), naive_verdict(r, rows, i))
        case Always(body=b):
            out = INCONCLUSIVE  # the prefix never exhausts an always
            for j in range(i, len(rows)):
                out = _both(out, naive_verdict(b, rows, j))
            return out
    raise TypeError(f"not a trace predicate: {q!r}")
