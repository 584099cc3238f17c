"""Query AST node definitions.

Pattern positions hold either concrete terms or Var markers; predicates may
additionally be property path expressions over `/`, `|` and `*`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from ..terms import Term


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


# -- property paths ----------------------------------------------------------


@dataclass(frozen=True)
class PathPred:
    iri: str


@dataclass(frozen=True)
class PathSeq:
    parts: Tuple["PathExpr", ...]


@dataclass(frozen=True)
class PathAlt:
    parts: Tuple["PathExpr", ...]


@dataclass(frozen=True)
class PathStar:
    inner: "PathExpr"


PathExpr = Union[PathPred, PathSeq, PathAlt, PathStar]


# -- expressions --------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    term: Term


@dataclass(frozen=True)
class VarRef:
    var: Var


@dataclass(frozen=True)
class Compare:
    op: str  # = != < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # && ||
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    expr: "Expr"


@dataclass(frozen=True)
class Arith:
    op: str  # + - * / neg
    left: "Expr"
    right: Optional["Expr"] = None


@dataclass(frozen=True)
class FuncCall:
    name: str  # lowercase builtin name or absolute cast IRI
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class InList:
    expr: "Expr"
    items: Tuple["Expr", ...]
    negated: bool = False


@dataclass(frozen=True)
class Exists:
    group: "GroupPattern"
    negated: bool = False


@dataclass(frozen=True)
class Aggregate:
    func: str  # min | max | count
    arg: Optional["Expr"]  # None means COUNT(*)


Expr = Union[Constant, VarRef, Compare, BoolOp, Not, Arith, FuncCall, InList, Exists, Aggregate]


# -- group patterns ------------------------------------------------------------


@dataclass
class TriplePattern:
    subject: Union[Term, Var]
    predicate: Union[Term, Var, PathExpr]
    object: Union[Term, Var]


@dataclass
class Filter:
    expr: Expr


@dataclass
class OptionalGroup:
    group: "GroupPattern"


@dataclass
class Bind:
    expr: Expr
    var: Var


@dataclass
class ValuesClause:
    vars: Tuple[Var, ...]
    rows: Tuple[Tuple[Optional[Term], ...], ...]


@dataclass
class ServiceClause:
    endpoint: str
    group: "GroupPattern"


PatternElement = Union[TriplePattern, Filter, OptionalGroup, Bind, ValuesClause, ServiceClause]


@dataclass
class GroupPattern:
    elements: List[PatternElement] = field(default_factory=list)
    source: str = ""  # raw text between the braces, for remote dispatch


@dataclass
class Query:
    prefixes: Dict[str, str]
    select_items: List[Tuple[Expr, str]]  # (expression, projected name)
    distinct: bool
    star: bool
    where: GroupPattern
    group_by: List[Var] = field(default_factory=list)
    having: Optional[Expr] = None
    order_by: List[Tuple[Expr, bool]] = field(default_factory=list)  # (expr, descending)


def walk_expr(expr: Expr):
    """Yield every node of an expression tree, preorder."""
    yield expr
    children: Tuple[Expr, ...] = ()
    if isinstance(expr, (Compare, BoolOp)):
        children = (expr.left, expr.right)
    elif isinstance(expr, Not):
        children = (expr.expr,)
    elif isinstance(expr, Arith):
        children = (expr.left,) + ((expr.right,) if expr.right is not None else ())
    elif isinstance(expr, FuncCall):
        children = expr.args
    elif isinstance(expr, InList):
        children = (expr.expr,) + expr.items
    elif isinstance(expr, Aggregate) and expr.arg is not None:
        children = (expr.arg,)
    for child in children:
        yield from walk_expr(child)


def has_aggregate(expr: Expr) -> bool:
    return any(isinstance(node, Aggregate) for node in walk_expr(expr))
