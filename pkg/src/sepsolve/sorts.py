"""Sort algebra for the multi-sorted term language.

Sorts are immutable values: the built-ins ``Bool`` and ``Int``, named
uninterpreted sorts (locations live in one of these), and the composite
shapes ``Set(s)``, ``Tuple(s1, ..., sn)`` and ``Fun(dom, rng)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Sort:
    name: str
    params: tuple["Sort", ...] = field(default=())

    def __repr__(self) -> str:
        if not self.params:
            return self.name
        return "(%s %s)" % (self.name, " ".join(repr(p) for p in self.params))

    @property
    def is_set(self) -> bool:
        return self.name == "Set"

    @property
    def is_fun(self) -> bool:
        return self.name == "Fun"

    @property
    def is_tuple(self) -> bool:
        return self.name == "Tuple"

    @property
    def elem(self) -> "Sort":
        assert self.is_set
        return self.params[0]

    @property
    def dom(self) -> "Sort":
        assert self.is_fun
        return self.params[0]

    @property
    def rng(self) -> "Sort":
        assert self.is_fun
        return self.params[1]


BOOL = Sort("Bool")
INT = Sort("Int")

_RESERVED = {"Bool", "Int", "Set", "Tuple", "Fun"}


def uninterpreted(name: str) -> Sort:
    """A named uninterpreted sort (e.g. the location sort of a problem)."""
    if name in _RESERVED:
        raise ValueError("reserved sort name: %s" % name)
    return Sort(name)


def set_of(elem: Sort) -> Sort:
    return Sort("Set", (elem,))


def fun_sort(dom: Sort, rng: Sort) -> Sort:
    return Sort("Fun", (dom, rng))


def tuple_of(*comps: Sort) -> Sort:
    if len(comps) < 1:
        raise ValueError("tuple sorts need at least one component")
    return Sort("Tuple", tuple(comps))
