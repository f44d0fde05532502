"""Translation of spatial formulas into bounded second-order constraints.

The translation threads a context of footprint-set terms and points-to
function symbols through the formula.  Atoms constrain the footprint
union; separating conjunction introduces a (negated) bounded quantifier
over a split of the footprint; the wand introduces a bounded quantifier
over an extension footprint and an extension points-to function.  Every
quantifier it emits ranges over sets included in a finite union of ground
terms (or functions inside a finite domain/range product), built from the
formula's points-to terms plus freshly allocated location constants.

``measure`` computes the number of heap cells a formula can distinguish
beyond its own points-to terms; it sizes the fresh-constant allocations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from .sorts import BOOL, Sort
from .slformula import SL, sl_and, star
from .terms import (
    Binder,
    FreshNames,
    FunBound,
    SetBound,
    Term,
    TRUE,
    conj,
    eq,
    forall,
    implies,
    ite,
    neg,
    set_empty,
    set_inter,
    set_member,
    set_singleton,
    set_subset,
    set_union,
    sym,
    union_of,
)


@lru_cache(maxsize=None)
def _measure_cached(phi: SL) -> int:
    op = phi.op
    if op == "emp" or op == "pto":
        return 1
    if op == "pure":
        return 0
    if op == "star":
        return sum(_measure_cached(k) for k in phi.kids)
    if op == "wand":
        return _measure_cached(phi.kids[1])
    if op == "and":
        return max(_measure_cached(k) for k in phi.kids)
    if op == "not":
        return _measure_cached(phi.kids[0])
    raise ValueError("no measure for %r" % op)


def measure(phi: SL) -> int:
    """How many anonymous heap cells the formula can tell apart."""
    return _measure_cached(phi)


def pt_terms(phi: SL) -> tuple[Term, ...]:
    """Terms occurring on either side of a points-to atom, in first-occurrence order."""
    out: list[Term] = []

    def go(node: SL) -> None:
        if node.op == "pto":
            for t in node.terms:
                if t not in out:
                    out.append(t)
        for k in node.kids:
            go(k)

    go(phi)
    return tuple(out)


def fresh_bounds(phi: SL, names: FreshNames, loc_sort: Sort) -> tuple[Term, ...]:
    """Allocate ``measure(phi)`` location constants after all earlier ones.

    Constants come from the global ordered fresh sequence, so the result is
    disjoint from every previously returned bound set and from the terms of
    any input formula.
    """
    return names.loc_consts(measure(phi), loc_sort)


# ---------------------------------------------------------------------------
# spatial normal form


def normalize(phi: SL) -> SL:
    """Flatten nested separating conjunctions and hoist pure conjuncts.

    ``(a /\\ p) * b`` becomes ``p /\\ (a * b)`` for pure p; both rewrites are
    equivalences, and the result is a fixpoint of them.
    """
    kids = tuple(normalize(k) for k in phi.kids)
    if phi.op == "star":
        flat: list[SL] = []
        for k in kids:
            if k.op == "star":
                flat.extend(k.kids)
            else:
                flat.append(k)
        hoisted: list[SL] = []
        parts: list[SL] = []
        for k in flat:
            if k.op == "and":
                pures = [c for c in k.kids if c.op == "pure"]
                spatial = [c for c in k.kids if c.op != "pure"]
                if pures:
                    hoisted.extend(pures)
                    if spatial:
                        parts.append(sl_and(*spatial))
                    else:
                        # Fully pure operand: keep a trivial slice so the
                        # star keeps its arity and split semantics.
                        parts.append(SL("pure", terms=(TRUE,)))
                    continue
            parts.append(k)
        inner = star(*parts) if len(parts) >= 2 else parts[0]
        if hoisted:
            return sl_and(*hoisted, inner)
        return inner
    if phi.op == "and":
        flat = []
        for k in kids:
            if k.op == "and":
                flat.extend(k.kids)
            else:
                flat.append(k)
        return sl_and(*flat)
    if kids != phi.kids:
        return SL(phi.op, kids=kids, terms=phi.terms, data=phi.data)
    return phi


# ---------------------------------------------------------------------------
# labeling


@dataclass(frozen=True)
class LabelContext:
    """State threaded through the labeling rewrite.

    ``labels`` holds one footprint-set term per heap slice (outermost
    extension first), ``pts`` the matching points-to function symbols, and
    ``bound_consts`` the location constants currently available for
    anonymous cells.
    """

    labels: tuple[Term, ...]
    pts: tuple[Term, ...]
    bound_consts: tuple[Term, ...]

    def __post_init__(self):
        assert len(self.labels) == len(self.pts) >= 1


@dataclass
class Translation:
    """Result of translating a top-level formula."""

    formula: Term
    phi: SL
    ell0: Term
    pt0: Term
    consts: tuple[Term, ...]
    terms: tuple[Term, ...]
    loc_sort: Sort
    data_sort: Sort
    set_universes: dict[str, tuple[Term, ...]] = field(default_factory=dict)
    fun_bounds: dict[str, tuple[tuple[Term, ...], tuple[Term, ...]]] = field(default_factory=dict)
    data_consts: tuple[Term, ...] = ()


def _union_all(labels: tuple[Term, ...]) -> Term:
    acc = labels[0]
    for l in labels[1:]:
        acc = set_union(acc, l)
    return acc


def _pt_chain(t: Term, u: Term, ctx: LabelContext) -> Term:
    """ite(t in l1, pt1(t) = u, ite(t in l2, ..., true))."""
    from .terms import app

    acc: Term = TRUE
    for label, pt in zip(reversed(ctx.labels), reversed(ctx.pts)):
        acc = ite(set_member(t, label), eq(app(pt, t), u), acc)
    return acc


def label(phi: SL, ctx: LabelContext, names: FreshNames, loc_sort: Sort, data_sort: Sort) -> Term:
    """Rewrite ``phi`` under the given context into a bounded quantified formula."""
    op = phi.op
    if op == "pure":
        return phi.terms[0]
    if op == "emp":
        return eq(_union_all(ctx.labels), set_empty(loc_sort))
    if op == "pto":
        t, u = phi.terms
        nil = sym("sep.nil", loc_sort)
        return conj(
            eq(_union_all(ctx.labels), set_singleton(t)),
            _pt_chain(t, u, ctx),
            neg(eq(t, nil)),
        )
    if op == "and":
        return conj(*(label(k, ctx, names, loc_sort, data_sort) for k in phi.kids))
    if op == "not":
        return neg(label(phi.kids[0], ctx, names, loc_sort, data_sort))
    if op == "star":
        return _label_star(phi, ctx, names, loc_sort, data_sort)
    if op == "wand":
        return _label_wand(phi, ctx, names, loc_sort, data_sort)
    raise ValueError("cannot label %r" % op)


def _label_star(phi: SL, ctx: LabelContext, names: FreshNames, loc_sort: Sort, data_sort: Sort) -> Term:
    # Split the current footprint into one fresh bounded set per operand:
    # not forall s1..sn <= C u T(phi).
    #   not( pairwise-disjoint /\ union = current /\ each operand labeled on
    #        its slice intersected with the context labels ).
    bound = ctx.bound_consts + pt_terms(phi)
    slices = tuple(names.set_var(loc_sort) for _ in phi.kids)
    parts: list[Term] = []
    for i in range(len(slices)):
        for j in range(i + 1, len(slices)):
            parts.append(eq(set_inter(slices[i], slices[j]), set_empty(loc_sort)))
    union = slices[0]
    for s in slices[1:]:
        union = set_union(union, s)
    parts.append(eq(union, _union_all(ctx.labels)))
    for s, kid in zip(slices, phi.kids):
        inner = LabelContext(
            labels=tuple(set_inter(s, l) for l in ctx.labels),
            pts=ctx.pts,
            bound_consts=ctx.bound_consts,
        )
        parts.append(label(kid, inner, names, loc_sort, data_sort))
    binders = tuple(Binder(s, SetBound(bound)) for s in slices)
    return neg(forall(binders, neg(conj(*parts))))


def _label_wand(phi: SL, ctx: LabelContext, names: FreshNames, loc_sort: Sort, data_sort: Sort) -> Term:
    # Quantify over a disjoint extension footprint and its points-to
    # function; the extension is bounded by fresh constants plus the wand's
    # own points-to terms, the function range by those terms plus one fresh
    # datum.
    lhs, rhs = phi.kids
    terms = pt_terms(phi)
    new_consts = fresh_bounds(sl_and(lhs, rhs), names, loc_sort)
    datum = names.data_const(data_sort)
    set_bound = new_consts + terms
    dom_bound = new_consts + terms
    rng_bound = terms + (datum,)
    ext_label = names.set_var(loc_sort)
    ext_pt = names.fun_var(loc_sort, data_sort)
    lhs_ctx = LabelContext(labels=(ext_label,), pts=(ext_pt,), bound_consts=new_consts)
    rhs_ctx = LabelContext(
        labels=(ext_label,) + ctx.labels,
        pts=(ext_pt,) + ctx.pts,
        bound_consts=ctx.bound_consts,
    )
    body = implies(
        conj(
            eq(set_inter(ext_label, _union_all(ctx.labels)), set_empty(loc_sort)),
            label(lhs, lhs_ctx, names, loc_sort, data_sort),
        ),
        label(rhs, rhs_ctx, names, loc_sort, data_sort),
    )
    binders = (
        Binder(ext_label, SetBound(set_bound)),
        Binder(ext_pt, FunBound(dom_bound, rng_bound)),
    )
    return forall(binders, body)


def translate(phi: SL, names: FreshNames, loc_sort: Sort, data_sort: Sort) -> Translation:
    """Top-level entry: normal form, fresh context, labeling, bound registry."""
    phi_n = normalize(phi)
    consts = fresh_bounds(phi_n, names, loc_sort)
    ell0 = names.set_var(loc_sort)
    pt0 = names.fun_var(loc_sort, data_sort)
    ctx = LabelContext(labels=(ell0,), pts=(pt0,), bound_consts=consts)
    formula = label(phi_n, ctx, names, loc_sort, data_sort)
    terms = pt_terms(phi_n)
    tr = Translation(
        formula=formula,
        phi=phi_n,
        ell0=ell0,
        pt0=pt0,
        consts=consts,
        terms=terms,
        loc_sort=loc_sort,
        data_sort=data_sort,
    )
    tr.set_universes[ell0.name] = consts + terms
    _collect_bounds(formula, tr)
    return tr


def _collect_bounds(t: Term, tr: Translation) -> None:
    from .terms import walk

    data: list[Term] = []
    for node in walk(t):
        if node.op == "forall":
            for b in node.binders:
                if isinstance(b.bound, FunBound):
                    for r in b.bound.rng:
                        if r.op == "sym" and r.name.startswith("__d") and r not in data:
                            data.append(r)
    tr.data_consts = tuple(data)


# ---------------------------------------------------------------------------
# constant folding


def simplify(t: Term) -> Term:
    """Conservative constant folding: decided ites, boolean units, trivial
    set facts.  Only syntactically certain rewrites are applied."""
    memo: dict[Term, Term] = {}

    def go(node: Term) -> Term:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.op == "forall":
            res = Term(
                "forall", BOOL, (go(node.args[0]),), node.data
            )
            memo[node] = res
            return res
        args = tuple(go(a) for a in node.args)
        res = _fold(node.op, node.sort, args, node.data)
        memo[node] = res
        return res

    return go(t)


def _explicit_elems(t: Term) -> Optional[tuple[Term, ...]]:
    if t.op == "set.empty":
        return ()
    if t.op == "set.singleton":
        return (t.args[0],)
    if t.op == "set.union":
        a = _explicit_elems(t.args[0])
        b = _explicit_elems(t.args[1])
        if a is None or b is None:
            return None
        out = list(a)
        for x in b:
            if x not in out:
                out.append(x)
        return tuple(out)
    return None


def _fold(op: str, sort: Sort, args: tuple[Term, ...], data) -> Term:
    if op == "not":
        a = args[0]
        if a is TRUE:
            return Term("bool", BOOL, (), False)
        if a.op == "bool" and a.data is False:
            return TRUE
        if a.op == "not":
            return a.args[0]
        return Term("not", BOOL, args)
    if op == "and":
        flat: list[Term] = []
        for a in args:
            if a is TRUE:
                continue
            if a.op == "bool" and a.data is False:
                return a
            if a.op == "and":
                flat.extend(a.args)
            else:
                flat.append(a)
        if not flat:
            return TRUE
        if len(flat) == 1:
            return flat[0]
        return Term("and", BOOL, tuple(flat))
    if op == "or":
        flat = []
        for a in args:
            if a is TRUE:
                return a
            if a.op == "bool" and a.data is False:
                continue
            if a.op == "or":
                flat.extend(a.args)
            else:
                flat.append(a)
        if not flat:
            return Term("bool", BOOL, (), False)
        if len(flat) == 1:
            return flat[0]
        return Term("or", BOOL, tuple(flat))
    if op == "implies":
        a, b = args
        if a is TRUE:
            return b
        if a.op == "bool" and a.data is False:
            return TRUE
        if b is TRUE:
            return TRUE
        return Term("implies", BOOL, args)
    if op == "ite":
        c, a, b = args
        if c is TRUE:
            return a
        if c.op == "bool" and c.data is False:
            return b
        if a is b:
            return a
        return Term("ite", sort, args)
    if op == "eq":
        a, b = args
        if a is b:
            return TRUE
        if a.op == "int" and b.op == "int":
            return TRUE if a.data == b.data else Term("bool", BOOL, (), False)
        ea, eb = _explicit_elems(a), _explicit_elems(b)
        if ea is not None and eb is not None and set(ea) == set(eb):
            return TRUE
        return Term("eq", BOOL, args)
    if op == "set.member":
        x, s = args
        elems = _explicit_elems(s)
        if elems is not None:
            if x in elems:
                return TRUE
            if not elems:
                return Term("bool", BOOL, (), False)
        return Term("set.member", BOOL, args)
    if op == "set.subset":
        a, b = args
        ea, eb = _explicit_elems(a), _explicit_elems(b)
        if ea is not None and not ea:
            return TRUE
        if ea is not None and eb is not None and set(ea) <= set(eb):
            return TRUE
        return Term("set.subset", BOOL, args)
    if op == "set.inter":
        a, b = args
        if a.op == "set.empty":
            return a
        if b.op == "set.empty":
            return b
        return Term("set.inter", sort, args)
    if op == "set.union":
        a, b = args
        if a.op == "set.empty":
            return b
        if b.op == "set.empty":
            return a
        return Term("set.union", sort, args)
    return Term(op, sort, args, data)
