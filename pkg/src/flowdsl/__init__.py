"""flowdsl: parser, catalog validation, metrics, retrieval, grounding, and
an experiment harness for a workflow-automation DSL."""

from .dsl import (
    ApiCall,
    ApiCallStatement,
    Comparison,
    Conditional,
    Flow,
    Literal,
    Logical,
    MemberAccess,
    Negation,
    ParseError,
    count_api_calls,
    extract_api_sequence,
    extract_parameter_usages,
    parse_flow,
    serialize_flow,
)

__all__ = [
    "ApiCall",
    "ApiCallStatement",
    "Comparison",
    "Conditional",
    "Flow",
    "Literal",
    "Logical",
    "MemberAccess",
    "Negation",
    "ParseError",
    "count_api_calls",
    "extract_api_sequence",
    "extract_parameter_usages",
    "parse_flow",
    "serialize_flow",
]

__version__ = "0.1.0"
