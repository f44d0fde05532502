"""Spatial formula trees.

A spatial formula is built from the empty-heap atom, points-to atoms,
n-ary separating conjunction, the septraction-dual wand, classical
conjunction/negation, and embedded pure (heap-independent) base-theory
formulas.  Disjunction and implication are derived connectives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .sorts import BOOL, Sort
from .terms import SortError, Term, substitute

_OPS = {"emp", "pto", "star", "wand", "and", "not", "pure", "pred"}


@dataclass(frozen=True)
class SL:
    """One node of a spatial formula.

    ``pto`` carries the address/value terms, ``pure`` carries a Bool term,
    and ``pred`` is a named placeholder used only while writing inductive
    definitions (it must be unfolded away before solving).
    """

    op: str
    kids: tuple["SL", ...] = field(default=())
    terms: tuple[Term, ...] = field(default=())
    data: object = None

    def __post_init__(self):
        assert self.op in _OPS, self.op

    def __repr__(self) -> str:
        from .frontend import print_sl

        return print_sl(self)


EMP = SL("emp")


def pto(addr: Term, val: Term) -> SL:
    return SL("pto", terms=(addr, val))


def star(*parts: SL) -> SL:
    if len(parts) < 2:
        raise ValueError("separating conjunction needs at least two operands")
    return SL("star", kids=tuple(parts))


def wand(lhs: SL, rhs: SL) -> SL:
    return SL("wand", kids=(lhs, rhs))


def sl_and(*parts: SL) -> SL:
    if not parts:
        return pure(Term("bool", BOOL, (), True))
    if len(parts) == 1:
        return parts[0]
    return SL("and", kids=tuple(parts))


def sl_not(part: SL) -> SL:
    return SL("not", kids=(part,))


def sl_or(*parts: SL) -> SL:
    if not parts:
        raise ValueError("empty disjunction")
    if len(parts) == 1:
        return parts[0]
    return sl_not(sl_and(*(sl_not(p) for p in parts)))


def sl_implies(a: SL, b: SL) -> SL:
    return sl_not(sl_and(a, sl_not(b)))


def pure(t: Term) -> SL:
    if t.sort != BOOL:
        raise SortError("pure formula of non-Bool sort")
    return SL("pure", terms=(t,))


def pred(name: str, args: tuple[Term, ...]) -> SL:
    return SL("pred", terms=tuple(args), data=name)


def walk_sl(phi: SL) -> Iterator[SL]:
    stack = [phi]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.kids)


def sl_size(phi: SL) -> int:
    """Number of nodes in the spatial syntax tree (pure leaves count once)."""
    return sum(1 for _ in walk_sl(phi))


def spatial_atoms(phi: SL) -> int:
    return sum(1 for n in walk_sl(phi) if n.op in ("pto", "emp"))


def has_pred(phi: SL) -> bool:
    return any(n.op == "pred" for n in walk_sl(phi))


def free_syms_sl(phi: SL) -> set[Term]:
    from .terms import free_syms

    out: set[Term] = set()
    for node in walk_sl(phi):
        for t in node.terms:
            out |= free_syms(t)
    return out


def substitute_sl(phi: SL, mapping: dict[Term, Term]) -> SL:
    """Apply a symbol substitution to every term of the formula."""
    if not mapping:
        return phi
    kids = tuple(substitute_sl(k, mapping) for k in phi.kids)
    terms = tuple(substitute(t, mapping) for t in phi.terms)
    if kids == phi.kids and terms == phi.terms:
        return phi
    return SL(phi.op, kids=kids, terms=terms, data=phi.data)


def check_well_sorted(phi: SL, loc_sort: Sort, data_sort: Sort) -> None:
    """Raise SortError unless every atom respects the heap signature."""
    for node in walk_sl(phi):
        if node.op == "pto":
            addr, val = node.terms
            if addr.sort != loc_sort:
                raise SortError(
                    "points-to address %r has sort %r, expected %r"
                    % (addr, addr.sort, loc_sort)
                )
            if val.sort != data_sort:
                raise SortError(
                    "points-to value %r has sort %r, expected %r"
                    % (val, val.sort, data_sort)
                )
        elif node.op == "pure":
            if any(t.op == "forall" for t in _subterms(node.terms[0])):
                raise SortError("quantifier inside a pure formula")
        elif node.op == "pred":
            raise SortError("unexpanded predicate %r" % (node.data,))


def _subterms(t: Term) -> Iterator[Term]:
    from .terms import walk

    return walk(t)
