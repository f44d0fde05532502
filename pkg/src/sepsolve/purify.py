"""Guard/Skolem purification of bounded quantified formulas.

Each closed quantified formula gets a boolean guard proposition and one
Skolem symbol per bound variable.  ``purify`` swaps outermost quantified
subformulas for their guards; ``purify_rec`` closes the result under the
witness expansions ``not A => purify(not body[skolems])`` so that every
member is quantifier-free.  ``unpurify`` is the inverse substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .sorts import BOOL
from .terms import (
    Binder,
    FreshNames,
    FunBound,
    SetBound,
    Term,
    conj,
    implies,
    neg,
    set_subset,
    substitute,
    union_of,
)


class UnknownGuard(Exception):
    """A guard atom without a registry entry appeared during unpurify."""


@dataclass
class QEntry:
    """Registry record for one quantified formula.

    ``children`` collects the quantified formulas nested inside this one's
    witness expansion and inside any instance of it; the instantiation
    loop must settle children before their ancestors.
    """

    index: int
    qformula: Term
    guard: Term
    skolems: tuple[Term, ...]
    expansion: Optional[Term] = None
    children: set[int] = field(default_factory=set)

    @property
    def binders(self) -> tuple[Binder, ...]:
        return self.qformula.binders

    @property
    def body(self) -> Term:
        return self.qformula.args[0]


def bound_antecedent(binders: Iterable[Binder], mapping: dict[Term, Term]) -> Term:
    """The subset/product constraints of the binders, instantiated by ``mapping``.

    Set binders turn into subset atoms against their explicit bound union;
    function binders turn into range constraints per bound-domain element
    (the product restriction, instantiated pointwise).
    """
    from .terms import app, disj, eq

    parts = []
    for b in binders:
        x = mapping.get(b.var, b.var)
        if isinstance(b.bound, SetBound):
            elem = b.var.sort.elem
            cands = [t for t in b.bound.terms if t.sort == elem]
            parts.append(set_subset(x, union_of(cands, elem)))
        else:
            dom_sort = b.var.sort.dom
            rng_sort = b.var.sort.rng
            dom = [t for t in b.bound.dom if t.sort == dom_sort]
            rng = [t for t in b.bound.rng if t.sort == rng_sort]
            for c in dom:
                if x.op == "sym" and x.sort.is_fun:
                    val = app(x, c)
                    parts.append(disj(*(eq(val, w) for w in rng)))
    return conj(*parts)


class GuardRegistry:
    """Bijection between quantified formulas and their (guard, skolems) pair."""

    def __init__(self, names: FreshNames) -> None:
        self.names = names
        self.entries: list[QEntry] = []
        self._by_formula: dict[Term, QEntry] = {}
        self._by_guard: dict[str, QEntry] = {}

    def lookup(self, qformula: Term) -> Optional[QEntry]:
        return self._by_formula.get(qformula)

    def entry_for_guard(self, name: str) -> Optional[QEntry]:
        return self._by_guard.get(name)

    def intern(self, qformula: Term) -> QEntry:
        assert qformula.op == "forall"
        entry = self._by_formula.get(qformula)
        if entry is not None:
            return entry
        guard = self.names.guard()
        skolems = tuple(self.names.skolem(b.var.sort) for b in qformula.binders)
        entry = QEntry(len(self.entries), qformula, guard, skolems)
        self.entries.append(entry)
        self._by_formula[qformula] = entry
        self._by_guard[guard.name] = entry
        return entry

    def skolem_body(self, entry: QEntry) -> Term:
        """The quantifier body with bound variables replaced by Skolems,
        bound constraints conjoined as an antecedent."""
        mapping = {b.var: k for b, k in zip(entry.binders, entry.skolems)}
        ante = bound_antecedent(entry.binders, mapping)
        matrix = substitute(entry.body, mapping)
        return implies(ante, matrix)

    def expansion_of(self, entry: QEntry) -> Term:
        """``not A => purify(not body[skolems])``, cached per entry."""
        if entry.expansion is None:
            negated = neg(self.skolem_body(entry))
            purified, seen = purify_tracking(negated, self)
            entry.expansion = implies(neg(entry.guard), purified)
            entry.children |= {e.index for e in seen}
        return entry.expansion

    def note_children(self, entry: QEntry, found: Iterable[QEntry]) -> None:
        entry.children |= {e.index for e in found if e.index != entry.index}

    def descendants(self, entry: QEntry) -> set[int]:
        """Quantified formulas reachable through expansions and instances."""
        out: set[int] = set()
        work = [entry.index]
        while work:
            i = work.pop()
            if i in out:
                continue
            out.add(i)
            work.extend(self.entries[i].children)
        out.discard(entry.index)
        return out


def purify_tracking(t: Term, reg: GuardRegistry) -> tuple[Term, list[QEntry]]:
    """Replace outermost quantified subformulas by guards; report them."""
    seen: list[QEntry] = []

    def go(node: Term) -> Term:
        if node.op == "forall":
            entry = reg.intern(node)
            if entry not in seen:
                seen.append(entry)
            return entry.guard
        if not node.args:
            return node
        return Term(node.op, node.sort, tuple(go(a) for a in node.args), node.data)

    return go(t), seen


def purify(t: Term, reg: GuardRegistry) -> Term:
    """Outermost quantified subformulas of ``t`` replaced by their guards."""
    out, _ = purify_tracking(t, reg)
    return out


def purify_rec(t: Term, reg: GuardRegistry) -> list[Term]:
    """Least quantifier-free set: the purified formula plus, for every
    quantified formula reachable through guards, its witness expansion."""
    first, pending = purify_tracking(t, reg)
    out = [first]
    done: set[int] = set()
    queue = list(pending)
    while queue:
        entry = queue.pop(0)
        if entry.index in done:
            continue
        done.add(entry.index)
        out.append(reg.expansion_of(entry))
        queue.extend(reg.entries[i] for i in entry.children)
    return out


def guards_in(t: Term, reg: GuardRegistry) -> set[int]:
    """Registry indices of guards occurring in ``t``."""
    from .terms import walk

    out = set()
    for node in walk(t):
        if node.op == "sym" and node.sort == BOOL:
            e = reg.entry_for_guard(node.data)
            if e is not None:
                out.add(e.index)
    return out


def unpurify(formulas: Iterable[Term], reg: GuardRegistry) -> list[Term]:
    """Replace guards by the quantified formulas they stand for."""

    def go(node: Term) -> Term:
        if node.op == "sym" and node.sort == BOOL:
            if node.data.startswith("__A"):
                e = reg.entry_for_guard(node.data)
                if e is None:
                    raise UnknownGuard(node.data)
                return e.qformula
            return node
        if not node.args:
            return node
        return Term(node.op, node.sort, tuple(go(a) for a in node.args), node.data)

    return [go(f) for f in formulas]
