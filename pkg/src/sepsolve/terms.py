"""Immutable terms of the base theory plus bounded set/function quantifiers.

Every term node carries its sort; the constructors below check sorts at
build time so that ill-sorted trees cannot be created.  Terms are interned,
which makes structural equality an identity check and keeps memo tables
cheap.  The quantifier node is always of the bounded shape: each bound
variable is a set-of-locations variable restricted to a finite union of
ground terms, or a function variable restricted to a finite domain/range
product.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

from .sorts import BOOL, INT, Sort, fun_sort, set_of


class SortError(Exception):
    """Raised when a term constructor is applied to ill-sorted arguments."""


@dataclass(frozen=True)
class SetBound:
    """Finite candidate universe for a quantified set variable."""

    terms: tuple["Term", ...]


@dataclass(frozen=True)
class FunBound:
    """Finite domain x range restriction for a quantified function variable."""

    dom: tuple["Term", ...]
    rng: tuple["Term", ...]


@dataclass(frozen=True)
class Binder:
    var: "Term"
    bound: "SetBound | FunBound"


class Term:
    """An interned, immutable term node.

    ``uid`` is the interning sequence number; it gives a deterministic
    total order on terms (construction order does not depend on hash
    randomization anywhere in this package).
    """

    __slots__ = ("op", "sort", "args", "data", "uid", "_hash")

    _table: dict = {}
    _lock = threading.Lock()

    def __new__(cls, op: str, sort: Sort, args: tuple = (), data=None):
        key = (op, sort, args, data)
        cached = cls._table.get(key)
        if cached is not None:
            return cached
        with cls._lock:
            cached = cls._table.get(key)
            if cached is not None:
                return cached
            self = object.__new__(cls)
            object.__setattr__(self, "op", op)
            object.__setattr__(self, "sort", sort)
            object.__setattr__(self, "args", args)
            object.__setattr__(self, "data", data)
            object.__setattr__(self, "uid", len(cls._table))
            object.__setattr__(self, "_hash", hash(key))
            cls._table[key] = self
            return self

    def __setattr__(self, name, value):
        raise AttributeError("terms are immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return self is other

    def __repr__(self) -> str:
        from .frontend import print_term

        return print_term(self)

    @property
    def name(self) -> str:
        assert self.op == "sym"
        return self.data

    @property
    def binders(self) -> tuple[Binder, ...]:
        assert self.op == "forall"
        return self.data


# ---------------------------------------------------------------------------
# constructors


def sym(name: str, sort: Sort) -> Term:
    return Term("sym", sort, (), name)


def intlit(value: int) -> Term:
    return Term("int", INT, (), int(value))


def boollit(value: bool) -> Term:
    return Term("bool", BOOL, (), bool(value))


TRUE = boollit(True)
FALSE = boollit(False)


def app(fn: Term, *args: Term) -> Term:
    if not fn.sort.is_fun:
        raise SortError("application of non-function %r" % fn)
    if len(args) != 1 or args[0].sort != fn.sort.dom:
        raise SortError("bad argument for %r" % fn)
    return Term("app", fn.sort.rng, (fn,) + tuple(args))


def eq(a: Term, b: Term) -> Term:
    if a.sort != b.sort:
        raise SortError("equality between sorts %r and %r" % (a.sort, b.sort))
    if b.uid < a.uid:
        a, b = b, a
    return Term("eq", BOOL, (a, b))


def _check_bool(args: Iterable[Term], what: str) -> tuple[Term, ...]:
    args = tuple(args)
    for a in args:
        if a.sort != BOOL:
            raise SortError("%s over non-Bool operand %r" % (what, a))
    return args


def neg(a: Term) -> Term:
    (a,) = _check_bool((a,), "not")
    return Term("not", BOOL, (a,))


def conj(*args: Term) -> Term:
    args = _check_bool(args, "and")
    if not args:
        return TRUE
    if len(args) == 1:
        return args[0]
    return Term("and", BOOL, args)


def disj(*args: Term) -> Term:
    args = _check_bool(args, "or")
    if not args:
        return FALSE
    if len(args) == 1:
        return args[0]
    return Term("or", BOOL, args)


def implies(a: Term, b: Term) -> Term:
    _check_bool((a, b), "=>")
    return Term("implies", BOOL, (a, b))


def iff(a: Term, b: Term) -> Term:
    _check_bool((a, b), "iff")
    return Term("iff", BOOL, (a, b))


def ite(c: Term, a: Term, b: Term) -> Term:
    if c.sort != BOOL:
        raise SortError("ite condition must be Bool")
    if a.sort != b.sort:
        raise SortError("ite branches differ in sort")
    return Term("ite", a.sort, (c, a, b))


def add(a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError("+ over non-Int operands")
    return Term("add", INT, (a, b))


def sub(a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError("- over non-Int operands")
    return Term("sub", INT, (a, b))


def le(a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError("<= over non-Int operands")
    return Term("le", BOOL, (a, b))


def lt(a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError("< over non-Int operands")
    return Term("lt", BOOL, (a, b))


def tup(*args: Term) -> Term:
    from .sorts import tuple_of

    if not args:
        raise SortError("empty tuple")
    return Term("tuple", tuple_of(*(a.sort for a in args)), tuple(args))


def set_empty(elem_sort: Sort) -> Term:
    return Term("set.empty", set_of(elem_sort))


def set_singleton(t: Term) -> Term:
    return Term("set.singleton", set_of(t.sort), (t,))


def set_union(a: Term, b: Term) -> Term:
    if not a.sort.is_set or a.sort != b.sort:
        raise SortError("union over mismatched sorts")
    return Term("set.union", a.sort, (a, b))


def set_inter(a: Term, b: Term) -> Term:
    if not a.sort.is_set or a.sort != b.sort:
        raise SortError("intersection over mismatched sorts")
    return Term("set.inter", a.sort, (a, b))


def set_subset(a: Term, b: Term) -> Term:
    if not a.sort.is_set or a.sort != b.sort:
        raise SortError("subset over mismatched sorts")
    return Term("set.subset", BOOL, (a, b))


def set_member(t: Term, s: Term) -> Term:
    if not s.sort.is_set or s.sort.elem != t.sort:
        raise SortError("membership over mismatched sorts")
    return Term("set.member", BOOL, (t, s))


def union_of(terms: Iterable[Term], elem_sort: Sort) -> Term:
    """Explicit finite set {t1, ..., tn} as a union of singletons."""
    terms = list(terms)
    if not terms:
        return set_empty(elem_sort)
    acc = set_singleton(terms[0])
    for t in terms[1:]:
        acc = set_union(acc, set_singleton(t))
    return acc


def forall(binders: Iterable[Binder], body: Term) -> Term:
    binders = tuple(binders)
    if body.sort != BOOL:
        raise SortError("quantified body must be Bool")
    if not binders:
        raise SortError("quantifier without binders")
    for b in binders:
        if isinstance(b.bound, SetBound):
            if not b.var.sort.is_set:
                raise SortError("set bound on non-set variable %r" % b.var)
        elif isinstance(b.bound, FunBound):
            if not b.var.sort.is_fun:
                raise SortError("function bound on non-function variable %r" % b.var)
        else:
            raise SortError("unknown bound kind")
    return Term("forall", BOOL, (body,), binders)


# ---------------------------------------------------------------------------
# traversal and substitution


def walk(t: Term) -> Iterator[Term]:
    """Yield every node of ``t`` (pre-order, each distinct node once)."""
    seen: set[int] = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(node.args)
        if node.op == "forall":
            for b in node.binders:
                if isinstance(b.bound, SetBound):
                    stack.extend(b.bound.terms)
                else:
                    stack.extend(b.bound.dom)
                    stack.extend(b.bound.rng)


def free_syms(t: Term) -> set[Term]:
    """All symbols of ``t`` not captured by a quantifier."""
    out: set[Term] = set()

    def go(node: Term, bound: frozenset[Term]) -> None:
        if node.op == "sym":
            if node not in bound:
                out.add(node)
            return
        if node.op == "forall":
            inner = bound | {b.var for b in node.binders}
            for b in node.binders:
                if isinstance(b.bound, SetBound):
                    for u in b.bound.terms:
                        go(u, bound)
                else:
                    for u in b.bound.dom + b.bound.rng:
                        go(u, bound)
            go(node.args[0], inner)
            return
        for a in node.args:
            go(a, bound)

    go(t, frozenset())
    return out


def substitute(t: Term, mapping: dict[Term, Term]) -> Term:
    """Replace free occurrences of symbol keys of ``mapping`` in ``t``.

    Bound variables shadow: occurrences under a binder for the same symbol
    are left alone.  Bound terms of inner quantifiers are substituted (they
    only ever contain ground terms).
    """
    memo: dict[tuple[Term, frozenset[Term]], Term] = {}

    def go(node: Term, shadow: frozenset[Term]) -> Term:
        key = (node, shadow)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if node.op == "sym":
            res = mapping.get(node, node) if node not in shadow else node
        elif node.op == "forall":
            inner = shadow | {b.var for b in node.binders}
            new_binders = []
            for b in node.binders:
                if isinstance(b.bound, SetBound):
                    nb = SetBound(tuple(go(u, shadow) for u in b.bound.terms))
                else:
                    nb = FunBound(
                        tuple(go(u, shadow) for u in b.bound.dom),
                        tuple(go(u, shadow) for u in b.bound.rng),
                    )
                new_binders.append(Binder(b.var, nb))
            res = Term("forall", BOOL, (go(node.args[0], inner),), tuple(new_binders))
        elif node.args:
            res = Term(node.op, node.sort, tuple(go(a, shadow) for a in node.args), node.data)
        else:
            res = node
        memo[key] = res
        return res

    return go(t, frozenset())


def substitute_fun(t: Term, fn: Term, entries: tuple[tuple[Term, Term], ...]) -> Term:
    """Replace applications of the function symbol ``fn`` by an explicit map.

    ``entries`` associates ground argument terms with value terms.  An
    application whose argument is syntactically a key resolves directly;
    otherwise the application unfolds to an equality-guarded lookup chain
    over the entries (arguments may alias keys without being identical).
    """
    memo: dict[Term, Term] = {}

    def lookup(arg: Term) -> Term:
        for k, v in entries:
            if k is arg:
                return v
        # Fall back to a chain keyed on semantic equality with the entries.
        acc = entries[-1][1] if entries else None
        if acc is None:
            raise SortError("application of empty function instance")
        for k, v in reversed(entries[:-1]):
            acc = ite(eq(arg, k), v, acc)
        return acc

    def go(node: Term) -> Term:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.op == "app" and node.args[0] is fn:
            res = lookup(go(node.args[1]))
        elif node.op == "forall":
            inner_binders = []
            for b in node.binders:
                if isinstance(b.bound, SetBound):
                    nb = SetBound(tuple(go(u) for u in b.bound.terms))
                else:
                    nb = FunBound(
                        tuple(go(u) for u in b.bound.dom),
                        tuple(go(u) for u in b.bound.rng),
                    )
                inner_binders.append(Binder(b.var, nb))
            res = Term("forall", BOOL, (go(node.args[0]),), tuple(inner_binders))
        elif node.args:
            res = Term(node.op, node.sort, tuple(go(a) for a in node.args), node.data)
        else:
            res = node
        memo[node] = res
        return res

    return go(t)


def term_size(t: Term) -> int:
    n = 0
    for _ in walk(t):
        n += 1
    return n


# ---------------------------------------------------------------------------
# fresh-name supply


class FreshNames:
    """Monotone counters for the reserved fresh-name families.

    The location constants produced by :meth:`loc_consts` form the totally
    ordered sequence that bound-set allocation draws from; indices are never
    reused, so any two allocations are disjoint.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counters: dict[str, itertools.count] = {}

    def _next(self, family: str) -> int:
        with self._lock:
            counter = self._counters.setdefault(family, itertools.count())
            return next(counter)

    def loc_consts(self, n: int, loc_sort: Sort) -> tuple[Term, ...]:
        return tuple(sym("__c%d" % self._next("c"), loc_sort) for _ in range(n))

    def data_const(self, data_sort: Sort) -> Term:
        return sym("__d%d" % self._next("d"), data_sort)

    def set_var(self, loc_sort: Sort) -> Term:
        return sym("__l%d" % self._next("l"), set_of(loc_sort))

    def fun_var(self, loc_sort: Sort, data_sort: Sort) -> Term:
        return sym("__pt%d" % self._next("pt"), fun_sort(loc_sort, data_sort))

    def guard(self) -> Term:
        return sym("__A%d" % self._next("A"), BOOL)

    def skolem(self, sort: Sort) -> Term:
        return sym("__k%d" % self._next("k"), sort)

    def plain(self, prefix: str, sort: Sort) -> Term:
        return sym("%s%d" % (prefix, self._next(prefix)), sort)
