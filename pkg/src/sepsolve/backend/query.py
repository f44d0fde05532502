"""Quantifier-free query/verdict contract shared by all backends."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..heaps import Interpretation, eval_term
from ..sorts import Sort
from ..terms import Term


class BackendError(Exception):
    """Unrecoverable backend failure (crash, protocol error, internal bug)."""


class UnsupportedTheory(BackendError):
    """The query mixes constructs outside the supported theory fragment."""


@dataclass(frozen=True)
class QFQuery:
    """A quantifier-free satisfiability query.

    ``set_universes`` gives, per set-sorted symbol, the finite list of
    ground terms whose values may populate it; every set symbol occurring
    in the assertions must have one.
    """

    assertions: tuple[Term, ...]
    set_universes: dict[str, tuple[Term, ...]] = field(default_factory=dict)
    loc_sort: Optional[Sort] = None
    data_sort: Optional[Sort] = None


@dataclass
class Verdict:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Interpretation] = None
    reason: str = ""

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


def check_model(query: QFQuery, model: Interpretation) -> None:
    """Raise unless the model satisfies every assertion of the query."""
    for a in query.assertions:
        if not eval_term(model, a):
            raise BackendError("model does not satisfy assertion: %r" % a)
