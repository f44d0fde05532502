"""Lowering of queries to boolean structure over equality/arithmetic atoms.

Three passes, all satisfiability-preserving:

1. tuple flattening -- tuple-sorted symbols and functions split into one
   component per position, tuple equalities become componentwise
   conjunctions;
2. if-then-else lifting -- term-level ites inside atoms float out into
   boolean case splits;
3. set elimination -- membership of a ground universe term in a set
   symbol becomes a boolean variable.  Membership in compound set terms
   is computed structurally, and membership of a term outside a symbol's
   declared universe is conditioned on equality with a universe term, so
   aliasing between ground terms is respected.  Per-symbol congruence
   constraints keep the flags of aliased universe terms in sync.

The output contains only: boolean symbols and connectives, equalities
over uninterpreted/Int terms, integer comparisons, and function
applications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..sorts import BOOL, INT, Sort, fun_sort
from ..terms import Term, app, conj, disj, eq, iff, implies, ite, neg, le, lt, sym
from .query import QFQuery, UnsupportedTheory


@dataclass
class EncodedQuery:
    assertions: list[Term]
    # (set symbol name, universe position) -> membership boolean symbol
    member_vars: dict[tuple[str, int], Term]
    universes: dict[str, tuple[Term, ...]]
    loc_sort: Optional[Sort]
    data_sort: Optional[Sort]


def encode_sets(query: QFQuery) -> EncodedQuery:
    """Lower a query to the set-free, tuple-free boolean core."""
    flat = [_flatten_tuples(a) for a in query.assertions]
    universes = {
        name: _loc_filtered(terms, query.loc_sort)
        for name, terms in query.set_universes.items()
    }
    enc = _SetEncoder(universes)
    lowered = [enc.formula(a) for a in flat]
    lowered.extend(enc.consistency_constraints())
    lifted = [_lift_ite(f) for f in lowered]
    return EncodedQuery(
        assertions=lifted,
        member_vars=enc.member_vars,
        universes=universes,
        loc_sort=query.loc_sort,
        data_sort=query.data_sort,
    )


def _loc_filtered(terms: tuple[Term, ...], loc_sort: Optional[Sort]) -> tuple[Term, ...]:
    # Universe lists may mix sorts (they come from quantifier bounds that
    # also carry data-side terms); only element-sorted entries can be
    # members, and the element sort of every set here is the location sort.
    out: list[Term] = []
    for t in terms:
        if loc_sort is not None:
            keep = t.sort == loc_sort
        else:
            keep = not (t.sort.is_set or t.sort.is_fun or t.sort == BOOL)
        if keep and t not in out:
            out.append(t)
    return tuple(out)


# ---------------------------------------------------------------------------
# tuples


def _flatten_tuples(t: Term) -> Term:
    memo: dict[Term, Term] = {}

    def comp(node: Term, i: int) -> Term:
        """The i-th component of a tuple-sorted term."""
        s = node.sort.params[i]
        if node.op == "tuple":
            return go(node.args[i])
        if node.op == "sym":
            return sym("%s#%d" % (node.data, i), s)
        if node.op == "app":
            fn, arg = node.args
            cfn = sym("%s#%d" % (fn.data, i), fun_sort(fn.sort.dom, s))
            return app(cfn, go(arg))
        if node.op == "ite":
            return ite(go(node.args[0]), comp(node.args[1], i), comp(node.args[2], i))
        raise UnsupportedTheory("tuple-sorted term %r cannot be flattened" % node.op)

    def go(node: Term) -> Term:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.op == "eq" and node.args[0].sort.is_tuple:
            a, b = node.args
            res = conj(*(eq(comp(a, i), comp(b, i)) for i in range(len(a.sort.params))))
        elif node.op == "eq" and node.args[0].sort == BOOL:
            res = iff(go(node.args[0]), go(node.args[1]))
        elif node.args:
            res = Term(node.op, node.sort, tuple(go(a) for a in node.args), node.data)
        else:
            res = node
        memo[node] = res
        return res

    return go(t)


# ---------------------------------------------------------------------------
# term-level if-then-else


def _lift_ite(t: Term) -> Term:
    """Float term-sorted ites out of atoms as boolean case splits."""

    def is_formula(node: Term) -> bool:
        return node.sort == BOOL

    def find_ite(node: Term) -> Optional[Term]:
        if node.op == "ite" and node.sort != BOOL:
            return node
        for a in node.args:
            if is_formula(a):
                continue
            found = find_ite(a)
            if found is not None:
                return found
        return None

    def replace(node: Term, target: Term, repl: Term) -> Term:
        if node is target:
            return repl
        if not node.args:
            return node
        return Term(
            node.op, node.sort, tuple(replace(a, target, repl) for a in node.args), node.data
        )

    def go(node: Term) -> Term:
        if node.op in ("and", "or", "not", "implies", "iff") or (
            node.op == "ite" and node.sort == BOOL
        ):
            return Term(node.op, BOOL, tuple(go(a) for a in node.args), node.data)
        if node.sort == BOOL and node.args:
            found = find_ite(node)
            if found is not None:
                cond = go(found.args[0])
                then = go(replace(node, found, found.args[1]))
                other = go(replace(node, found, found.args[2]))
                return disj(conj(cond, then), conj(neg(cond), other))
        return node

    return go(t)


# ---------------------------------------------------------------------------
# sets


class _SetEncoder:
    def __init__(self, universes: dict[str, tuple[Term, ...]]):
        self.universes = universes
        self.member_vars: dict[tuple[str, int], Term] = {}
        self._used_sets: list[str] = []

    def _mvar(self, set_name: str, idx: int) -> Term:
        key = (set_name, idx)
        v = self.member_vars.get(key)
        if v is None:
            v = sym("__mem$%s$%d" % (set_name, idx), BOOL)
            self.member_vars[key] = v
        if set_name not in self._used_sets:
            self._used_sets.append(set_name)
        return v

    def universe_of(self, set_term: Term) -> tuple[Term, ...]:
        """Candidate member terms of a compound set term."""
        out: list[Term] = []

        def go(node: Term) -> None:
            if node.op == "sym":
                if node.data not in self.universes:
                    raise UnsupportedTheory("set symbol without universe: %s" % node.data)
                for t in self.universes[node.data]:
                    if t not in out:
                        out.append(t)
            elif node.op == "set.singleton":
                if node.args[0] not in out:
                    out.append(node.args[0])
            elif node.op in ("set.union", "set.inter"):
                go(node.args[0])
                go(node.args[1])
            elif node.op == "set.empty":
                pass
            else:
                raise UnsupportedTheory("unsupported set term %r" % node.op)

        go(set_term)
        return tuple(out)

    def member(self, g: Term, set_term: Term) -> Term:
        """Boolean formula for value-of-g belonging to set_term."""
        op = set_term.op
        if op == "set.empty":
            return Term("bool", BOOL, (), False)
        if op == "set.singleton":
            if g.sort != set_term.args[0].sort:
                return Term("bool", BOOL, (), False)
            return eq(g, set_term.args[0])
        if op == "set.union":
            return disj(self.member(g, set_term.args[0]), self.member(g, set_term.args[1]))
        if op == "set.inter":
            return conj(self.member(g, set_term.args[0]), self.member(g, set_term.args[1]))
        if op == "sym":
            uni = self.universes.get(set_term.data)
            if uni is None:
                raise UnsupportedTheory("set symbol without universe: %s" % set_term.data)
            if g in uni:
                return self._mvar(set_term.data, uni.index(g))
            return disj(
                *(
                    conj(eq(g, c), self._mvar(set_term.data, i))
                    for i, c in enumerate(uni)
                    if c.sort == g.sort
                )
            )
        raise UnsupportedTheory("unsupported set term %r" % op)

    def formula(self, t: Term) -> Term:
        memo: dict[Term, Term] = {}

        def go(node: Term) -> Term:
            hit = memo.get(node)
            if hit is not None:
                return hit
            if node.op == "eq" and node.args[0].sort.is_set:
                a, b = node.args
                cands = _merge(self.universe_of(a), self.universe_of(b))
                res = conj(*(iff(self.member(g, a), self.member(g, b)) for g in cands))
            elif node.op == "set.subset":
                a, b = node.args
                res = conj(*(implies(self.member(g, a), self.member(g, b)) for g in self.universe_of(a)))
            elif node.op == "set.member":
                res = self.member(node.args[0], node.args[1])
            elif node.args:
                res = Term(node.op, node.sort, tuple(go(a) for a in node.args), node.data)
            else:
                res = node
            memo[node] = res
            return res

        return go(t)

    def consistency_constraints(self) -> list[Term]:
        """Aliased universe terms must carry equal membership flags."""
        out: list[Term] = []
        for name in self._used_sets:
            uni = self.universes[name]
            for i in range(len(uni)):
                for j in range(i + 1, len(uni)):
                    a, b = uni[i], uni[j]
                    if a.sort != b.sort:
                        continue
                    if a.op == "int" and b.op == "int":
                        continue  # distinct literals never alias
                    out.append(
                        implies(eq(a, b), iff(self._mvar(name, i), self._mvar(name, j)))
                    )
        return out


def _merge(a: tuple[Term, ...], b: tuple[Term, ...]) -> tuple[Term, ...]:
    out = list(a)
    for t in b:
        if t not in out:
            out.append(t)
    return tuple(out)
