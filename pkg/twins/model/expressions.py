"""
Predicate expressions used by schema constraints.

Constraints are small expression trees over the properties of one object:
property references, constants, comparisons and boolean connectives. The
tree serializes to JSON through its ``kind`` discriminator.
"""
from __future__ import annotations

import operator
from typing import Annotated, Any, Dict, Literal, Optional, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    ">": operator.gt,
}

# Flipped comparator when the constant sits on the left side
_MIRROR = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


class _Node(BaseModel):
    model_config = ConfigDict(frozen=True)

    def properties(self) -> Set[str]:
        return set()


class PropRef(_Node):
    kind: Literal["prop"] = "prop"
    name: str

    def evaluate(self, slots: Dict[str, Any]) -> Any:
        return slots.get(self.name)

    def properties(self) -> Set[str]:
        return {self.name}


class Const(_Node):
    kind: Literal["const"] = "const"
    value: Union[bool, int, float, str, None]

    def evaluate(self, slots: Dict[str, Any]) -> Any:
        return self.value


class Compare(_Node):
    kind: Literal["cmp"] = "cmp"
    op: Literal["<", "<=", "==", "!=", ">=", ">"]
    left: Expr
    right: Expr

    def evaluate(self, slots: Dict[str, Any]) -> bool:
        left = self.left.evaluate(slots)
        right = self.right.evaluate(slots)
        try:
            return bool(_COMPARATORS[self.op](left, right))
        except TypeError:
            # Values of incompatible types never satisfy a comparison
            return False

    def properties(self) -> Set[str]:
        return self.left.properties() | self.right.properties()

    def bound_on(self, prop: str) -> Optional[Tuple[str, Any]]:
        """Return (op, constant) when this compares ``prop`` with a constant."""
        if isinstance(self.left, PropRef) and self.left.name == prop and isinstance(self.right, Const):
            return self.op, self.right.value
        if isinstance(self.right, PropRef) and self.right.name == prop and isinstance(self.left, Const):
            return _MIRROR[self.op], self.left.value
        return None


class AllOf(_Node):
    kind: Literal["and"] = "and"
    terms: Tuple[Expr, ...]

    def evaluate(self, slots: Dict[str, Any]) -> bool:
        return all(t.evaluate(slots) for t in self.terms)

    def properties(self) -> Set[str]:
        return set().union(*(t.properties() for t in self.terms))


class AnyOf(_Node):
    kind: Literal["or"] = "or"
    terms: Tuple[Expr, ...]

    def evaluate(self, slots: Dict[str, Any]) -> bool:
        return any(t.evaluate(slots) for t in self.terms)

    def properties(self) -> Set[str]:
        return set().union(*(t.properties() for t in self.terms))


class Not(_Node):
    kind: Literal["not"] = "not"
    term: Expr

    def evaluate(self, slots: Dict[str, Any]) -> bool:
        return not self.term.evaluate(slots)

    def properties(self) -> Set[str]:
        return self.term.properties()


Expr = Annotated[Union[PropRef, Const, Compare, AllOf, AnyOf, Not], Field(discriminator="kind")]

for _model in (Compare, AllOf, AnyOf, Not):
    _model.model_rebuild()


def prop(name: str) -> PropRef:
    return PropRef(name=name)


def const(value: Any) -> Const:
    return Const(value=value)


def cmp(name: str, op: str, value: Any) -> Compare:
    return Compare(op=op, left=prop(name), right=const(value))


def all_of(*terms) -> AllOf:
    return AllOf(terms=tuple(terms))


def any_of(*terms) -> AnyOf:
    return AnyOf(terms=tuple(terms))


def between(name: str, lower: Any, upper: Any) -> AllOf:
    """Closed interval ``lower <= name <= upper``."""
    return all_of(cmp(name, ">=", lower), cmp(name, "<=", upper))


def numeric_bounds(expr, prop_name: str) -> Tuple[Optional[float], Optional[float]]:
    """
    Extract the closed interval a conjunctive predicate imposes on one property.

    Only top-level conjunctions of comparisons against constants contribute;
    anything else yields no bound. Strict comparisons on integers are
    tightened by one.
    """
    lower: Optional[float] = None
    upper: Optional[float] = None
    terms = expr.terms if isinstance(expr, AllOf) else (expr,)
    for term in terms:
        if not isinstance(term, Compare):
            continue
        bound = term.bound_on(prop_name)
        if bound is None:
            continue
        op, value = bound
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        if op in (">=", ">", "=="):
            value_lo = value + 1 if op == ">" and isinstance(value, int) else value
            lower = value_lo if lower is None else max(lower, value_lo)
        if op in ("<=", "<", "=="):
            value_hi = value - 1 if op == "<" and isinstance(value, int) else value
            upper = value_hi if upper is None else min(upper, value_hi)
    return lower, upper
