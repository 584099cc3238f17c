from .ast import (
    Aggregate,
    Arith,
    Bind,
    BoolOp,
    Compare,
    Constant,
    Exists,
    Filter,
    FuncCall,
    GroupPattern,
    InList,
    Not,
    OptionalGroup,
    PathAlt,
    PathPred,
    PathSeq,
    PathStar,
    Query,
    ServiceClause,
    TriplePattern,
    ValuesClause,
    Var,
    VarRef,
)
from .parser import QuerySyntaxError, parse_query
from .evaluator import (
    ResultSet,
    ServiceUnreachable,
    evaluate,
    evaluate_path,
    pattern_variables,
)

__all__ = [
    "Aggregate", "Arith", "Bind", "BoolOp", "Compare", "Constant", "Exists",
    "Filter", "FuncCall", "GroupPattern", "InList", "Not", "OptionalGroup",
    "PathAlt", "PathPred", "PathSeq", "PathStar", "Query", "QuerySyntaxError",
    "ResultSet", "ServiceClause", "ServiceUnreachable", "TriplePattern",
    "ValuesClause", "Var", "VarRef", "evaluate", "evaluate_path",
    "parse_query", "pattern_variables",
]
