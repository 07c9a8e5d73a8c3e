"""Horn-clause machinery: terms, atoms, clauses, substitutions, unification.

Terms are flat -- a term is a variable, a symbolic constant, or a numeric
literal (stored as an exact Fraction).  There are no function symbols; the
arithmetic the domain theories need is supplied by builtin relations
(`product`, `total`, `lt`, `eq`, ...) that the prover evaluates directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union


class ClauseSyntaxError(ValueError):
    """Raised when a clause or atom string cannot be parsed."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


# ============================================================
# Terms and atoms
# ============================================================

@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class Sym:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __post_init__(self) -> None:
        # Fractions are always finite; guard against float smuggling.
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    def __repr__(self) -> str:
        return format_fraction(self.value)


Term = Union[Var, Sym, Num]
Subst = Dict[Var, Term]


@dataclass(frozen=True)
class Atom:
    pred: str
    args: Tuple[Term, ...]

    def __repr__(self) -> str:
        inner = " ".join([self.pred] + [repr(a) for a in self.args])
        return f"({inner})"

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def variables(self) -> List[Var]:
        return [a for a in self.args if isinstance(a, Var)]


@dataclass(frozen=True)
class HornClause:
    """head <- body.  An empty body makes the clause a fact."""

    head: Atom
    body: Tuple[Atom, ...] = ()
    clause_id: str = ""

    def __repr__(self) -> str:
        if not self.body:
            return repr(self.head)
        return f"{self.head!r} <- " + " ".join(repr(b) for b in self.body)

    def variables(self) -> List[Var]:
        seen: List[Var] = []
        for atom in (self.head, *self.body):
            for v in atom.variables():
                if v not in seen:
                    seen.append(v)
        return seen


def format_fraction(x: Fraction) -> str:
    """Exact decimal string when the denominator allows it, else 'p/q'."""
    if x.denominator == 1:
        return str(x.numerator)
    d = x.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        # terminating decimal
        s = format(float(x), ".12f").rstrip("0").rstrip(".")
        # float round-trip is exact for short terminating decimals, but be safe
        if Fraction(s) == x:
            return s
    return f"{x.numerator}/{x.denominator}"


# ============================================================
# Substitutions and unification
# ============================================================

def walk(t: Term, s: Subst) -> Term:
    """Follow variable bindings until a non-variable or unbound variable."""
    while isinstance(t, Var) and t in s:
        t = s[t]
    return t


def occurs(v: Var, t: Term, s: Subst) -> bool:
    """Occurs check.  With flat terms a cycle can only be var-to-var."""
    t = walk(t, s)
    return t == v


def extend(s: Subst, v: Var, t: Term) -> Optional[Subst]:
    if occurs(v, t, s):
        return None
    out = dict(s)
    out[v] = t
    return out


def unify_terms(a: Term, b: Term, s: Optional[Subst] = None) -> Optional[Subst]:
    if s is None:
        s = {}
    a, b = walk(a, s), walk(b, s)
    if a == b:
        return s
    if isinstance(a, Var):
        return extend(s, a, b)
    if isinstance(b, Var):
        return extend(s, b, a)
    return None


def unify(a: Atom, b: Atom, s: Optional[Subst] = None) -> Optional[Subst]:
    """Most general unifier of two atoms, or None.  Failure is a value."""
    if a.pred != b.pred or a.arity != b.arity:
        return None
    out: Optional[Subst] = dict(s) if s else {}
    for x, y in zip(a.args, b.args):
        if out is None:
            return None
        out = unify_terms(x, y, out)
    return out


def apply_subst(atom: Atom, s: Subst) -> Atom:
    return Atom(atom.pred, tuple(walk(a, s) for a in atom.args))


def rename_clause(clause: HornClause, suffix: str) -> HornClause:
    """Standardize apart: give every variable a fresh name."""
    mapping = {v: Var(f"{v.name}#{suffix}") for v in clause.variables()}
    sub: Subst = dict(mapping)
    return HornClause(
        head=apply_subst(clause.head, sub),
        body=tuple(apply_subst(b, sub) for b in clause.body),
        clause_id=clause.clause_id,
    )


# ============================================================
# Builtin arithmetic relations
# ============================================================

BUILTIN_PREDS = ("product", "total", "lt", "le", "eq", "ne")


def is_builtin(pred: str) -> bool:
    return pred in BUILTIN_PREDS


def _num(t: Term) -> Optional[Fraction]:
    return t.value if isinstance(t, Num) else None


def eval_builtin(atom: Atom, s: Subst) -> Optional[Subst]:
    """Evaluate a builtin atom under s.  Returns the extended substitution on
    success, None on failure.  For product/total the last argument may be an
    unbound variable, in which case it is computed and bound; the input
    arguments must be numeric."""
    args = [walk(a, s) for a in atom.args]
    if atom.pred in ("product", "total"):
        if len(args) != 3:
            return None
        x, y, z = args
        nx, ny = _num(x), _num(y)
        if nx is None or ny is None:
            return None
        val = nx * ny if atom.pred == "product" else nx + ny
        return unify_terms(z, Num(val), s)
    if len(args) != 2:
        return None
    nx, ny = _num(args[0]), _num(args[1])
    if nx is None or ny is None:
        return None
    ok = {
        "lt": nx < ny,
        "le": nx <= ny,
        "eq": nx == ny,
        "ne": nx != ny,
    }[atom.pred]
    return dict(s) if ok else None


# ============================================================
# Prefix-syntax parser:  (Pred arg ?var 0.4 1/3) and
# clause strings  (Head ...) <- (B1 ...) (B2 ...)
# ============================================================

_ATOM_CHARS = set("() \t\n")


def _tokenize(text: str) -> Iterator[Tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()":
            yield c, i
            i += 1
            continue
        if text.startswith("<-", i):
            yield "<-", i
            i += 2
            continue
        j = i
        # a bare "-" only delimits as part of the "<-" arrow, so hyphenated
        # symbols like Box-0 stay whole
        while j < n and text[j] not in _ATOM_CHARS and not text.startswith("<-", j):
            j += 1
        yield text[i:j], i
        i = j


_NUM_RE_HINT = set("0123456789+-.")


def parse_term(token: str, text: str = "", pos: int = 0) -> Term:
    if token.startswith("?"):
        if len(token) == 1:
            raise ClauseSyntaxError("empty variable name", text, pos)
        return Var(token[1:])
    if token[0] in _NUM_RE_HINT and token not in ("-", "+", "."):
        try:
            return Num(Fraction(token))
        except (ValueError, ZeroDivisionError):
            raise ClauseSyntaxError(f"bad numeric literal {token!r}", text, pos)
    return Sym(token)


def parse_clause(text: str, clause_id: str = "") -> HornClause:
    """Parse '(Head ...)' or '(Head ...) <- (B1 ...) (B2 ...)'."""
    atoms: List[Atom] = []
    arrow_at: Optional[int] = None
    stack: Optional[List] = None
    for tok, pos in _tokenize(text):
        if tok == "(":
            if stack is not None:
                raise ClauseSyntaxError("nested atom", text, pos)
            stack = []
        elif tok == ")":
            if stack is None:
                raise ClauseSyntaxError("unbalanced ')'", text, pos)
            if not stack:
                raise ClauseSyntaxError("empty atom", text, pos)
            pred = stack[0]
            if not isinstance(pred, str):
                raise ClauseSyntaxError("predicate must be a symbol", text, pos)
            atoms.append(Atom(pred, tuple(stack[1:])))
            stack = None
        elif tok == "<-":
            if stack is not None or len(atoms) != 1:
                raise ClauseSyntaxError("misplaced '<-'", text, pos)
            arrow_at = len(atoms)
        else:
            if stack is None:
                raise ClauseSyntaxError(f"token {tok!r} outside atom", text, pos)
            if stack:
                stack.append(parse_term(tok, text, pos))
            else:
                stack.append(tok)  # predicate position stays a raw symbol
    if stack is not None:
        raise ClauseSyntaxError("unbalanced '('", text, len(text))
    if not atoms:
        raise ClauseSyntaxError("no atoms found", text, 0)
    if arrow_at is None and len(atoms) > 1:
        raise ClauseSyntaxError("multiple atoms without '<-'", text, 0)
    return HornClause(head=atoms[0], body=tuple(atoms[1:]), clause_id=clause_id)


def parse_atom(text: str) -> Atom:
    clause = parse_clause(text)
    if clause.body:
        raise ClauseSyntaxError("expected a single atom", text, 0)
    return clause.head


def print_clause(clause: HornClause) -> str:
    return repr(clause)
