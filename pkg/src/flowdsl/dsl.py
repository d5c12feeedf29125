"""Workflow DSL: AST types, parser, serializer, and extraction helpers.

The DSL is a small JavaScript-flavored script for automation workflows.
Each statement either assigns the result of an API call to a variable or
branches on a condition:

    triggerOutputs = await shared_forms.WhenResponseSubmitted({});
    sent = shared_mail.SendMessage({"recipient": "ops@example.com"});
    if (triggerOutputs.body.urgent == true) {
      posted = shared_chat.PostUpdate({"channel": "alerts"});
    }

Grammar (whitespace between tokens is insignificant; strings and numbers
follow JSON rules):

    program     := statement+
    statement   := assignment | conditional
    assignment  := IDENT "=" ["await"] IDENT "." IDENT "(" object ")" ";"
    conditional := "if" "(" expression ")" "{" statement+ "}"
                   ["else" "{" statement+ "}"]
    object      := "{" [pair ("," pair)*] "}"
    pair        := STRING ":" value
    value       := STRING | NUMBER | "true" | "false" | "null"
                 | object | array | member
    array       := "[" [value ("," value)*] "]"
    member      := IDENT ("." IDENT)*
    expression  := and_expr ("||" and_expr)*
    and_expr    := unary ("&&" unary)*
    unary       := "!" unary | "(" expression ")" | comparison
    comparison  := operand [("=="|"!="|"<"|"<="|">"|">=") operand]
    operand     := member | STRING | NUMBER | "true" | "false"

Parsing is strict: the first violation raises :class:`ParseError` and
nothing is recovered.  ``serialize_flow`` produces canonical text, and
``parse_flow(serialize_flow(f))`` is structurally equal to ``f``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Union

# Guard against pathological nesting so arbitrary input can never blow
# the interpreter stack.
MAX_NESTING_DEPTH = 200


class ParseError(Exception):
    """First lexical or syntactic violation in a flow source.

    ``line`` and ``column`` are 1-based and always point inside the
    source text (or just past its end for unexpected end of input).
    """

    def __init__(self, line: int, column: int, expected: str, found: str):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(
            f"line {line}, column {column}: expected {expected}, found {found}"
        )


# ---------------------------------------------------------------------------
# AST


@dataclass
class MemberAccess:
    """Reference to a prior output, e.g. ``triggerOutputs.body.id``."""

    base_variable: str
    path: list[str] = field(default_factory=list)

    def dotted(self) -> str:
        return ".".join([self.base_variable, *self.path])


@dataclass
class Literal:
    value: str | int | float | bool


@dataclass
class Comparison:
    left: MemberAccess | Literal
    op: str  # one of == != < <= > >=
    right: MemberAccess | Literal


@dataclass
class Logical:
    op: str  # "and" | "or"
    left: "Expression"
    right: "Expression"


@dataclass
class Negation:
    inner: "Expression"


Expression = Union[MemberAccess, Literal, Comparison, Logical, Negation]

# Parameter values are JSON values plus MemberAccess; objects are plain
# insertion-ordered dicts.
ParamValue = Union[str, int, float, bool, None, dict, list, MemberAccess]


@dataclass
class ApiCall:
    namespace: str
    function: str
    arguments: dict[str, ParamValue]

    @property
    def qualified_name(self) -> str:
        return f"{self.namespace}.{self.function}"


@dataclass
class ApiCallStatement:
    target_variable: str
    awaited: bool
    call: ApiCall


@dataclass
class Conditional:
    condition: Expression
    then_branch: list["Statement"]
    else_branch: list["Statement"] | None = None


Statement = Union[ApiCallStatement, Conditional]


@dataclass
class Flow:
    """A parsed DSL program.  ``source_text`` is excluded from equality so
    canonical round-trips compare structurally."""

    statements: list[Statement]
    source_text: str = field(default="", compare=False)


# ---------------------------------------------------------------------------
# Lexer

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_KEYWORDS = frozenset({"await", "if", "else", "true", "false", "null"})
_TWO_CHAR = ("==", "!=", "<=", ">=", "&&", "||")
_ONE_CHAR = frozenset("{}()[],:;.=<>!")
_ESCAPES = {
    '"': '"', "\\": "\\", "/": "/", "b": "\b",
    "f": "\f", "n": "\n", "r": "\r", "t": "\t",
}


@dataclass
class _Token:
    kind: str  # "ident" | "number" | "string" | keyword | punctuation | "eof"
    value: object
    line: int
    column: int

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        if self.kind == "ident":
            return f"identifier '{self.value}'"
        if self.kind == "number":
            return f"number {self.value}"
        if self.kind == "string":
            return f"string {json.dumps(self.value)}"
        return f"'{self.kind}'"


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == '"':
            value, i2, line2, col2 = _scan_string(source, i, line, col)
            tokens.append(_Token("string", value, line, col))
            i, line, col = i2, line2, col2
            continue
        if ch.isascii() and (ch.isalpha() or ch == "_"):
            m = _IDENT_RE.match(source, i)
            text = m.group()
            kind = text if text in _KEYWORDS else "ident"
            tokens.append(_Token(kind, text, line, col))
            i = m.end()
            col += len(text)
            continue
        # ASCII range check, not isdigit(): unicode digits like "³" must
        # fall through to the error path rather than feed the number regex
        if "0" <= ch <= "9" or (ch == "-" and i + 1 < n and "0" <= source[i + 1] <= "9"):
            m = _NUMBER_RE.match(source, i)
            text = m.group()
            value: int | float
            if any(c in text for c in ".eE"):
                value = float(text)
            else:
                value = int(text)
            tokens.append(_Token("number", value, line, col))
            i = m.end()
            col += len(text)
            continue
        pair = source[i : i + 2]
        if pair in _TWO_CHAR:
            tokens.append(_Token(pair, pair, line, col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            if ch in "&|":
                raise ParseError(line, col, f"'{ch}{ch}'", f"'{ch}'")
            tokens.append(_Token(ch, ch, line, col))
            i += 1
            col += 1
            continue
        if ch in "&|":
            raise ParseError(line, col, f"'{ch}{ch}'", f"'{ch}'")
        raise ParseError(line, col, "a token", f"character {ch!r}")
    tokens.append(_Token("eof", None, line, col))
    return tokens


def _scan_string(source: str, i: int, line: int, col: int) -> tuple[str, int, int, int]:
    """Scan a JSON string literal starting at the opening quote."""
    out: list[str] = []
    n = len(source)
    i += 1
    col += 1
    while i < n:
        ch = source[i]
        if ch == '"':
            return "".join(out), i + 1, line, col + 1
        if ch == "\\":
            if i + 1 >= n:
                break
            esc = source[i + 1]
            if esc in _ESCAPES:
                out.append(_ESCAPES[esc])
                i += 2
                col += 2
                continue
            if esc == "u":
                hexdigits = source[i + 2 : i + 6]
                if len(hexdigits) == 4 and all(c in "0123456789abcdefABCDEF" for c in hexdigits):
                    out.append(chr(int(hexdigits, 16)))
                    i += 6
                    col += 6
                    continue
                raise ParseError(line, col, "four hex digits after '\\u'", f"{hexdigits!r}")
            raise ParseError(line, col, "a valid string escape", f"'\\{esc}'")
        if ch == "\n":
            raise ParseError(line, col, "'\"'", "end of line")
        if ord(ch) < 0x20:
            raise ParseError(line, col, "an escaped control character", repr(ch))
        out.append(ch)
        i += 1
        col += 1
    raise ParseError(line, col, "'\"'", "end of input")


# ---------------------------------------------------------------------------
# Parser

_COMPARISON_OPS = {"==": "==", "!=": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        return ParseError(tok.line, tok.column, expected, tok.describe())

    def expect(self, kind: str, expected: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(expected or f"'{kind}'")
        return self.advance()

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_NESTING_DEPTH:
            tok = self.peek()
            raise ParseError(
                tok.line, tok.column,
                f"nesting no deeper than {MAX_NESTING_DEPTH} levels",
                "deeper nesting",
            )

    def _leave(self) -> None:
        self.depth -= 1

    def parse_program(self) -> list[Statement]:
        statements = [self.parse_statement()]
        while self.peek().kind != "eof":
            statements.append(self.parse_statement())
        return statements

    def parse_statement(self) -> Statement:
        tok = self.peek()
        if tok.kind == "if":
            return self.parse_conditional()
        if tok.kind == "ident":
            return self.parse_assignment()
        raise self.error("a statement")

    def parse_assignment(self) -> ApiCallStatement:
        target = self.expect("ident", "an identifier").value
        self.expect("=")
        awaited = False
        if self.peek().kind == "await":
            self.advance()
            awaited = True
        namespace = self.expect("ident", "a namespace identifier").value
        self.expect(".")
        function = self.expect("ident", "a function identifier").value
        self.expect("(")
        arguments = self.parse_object()
        self.expect(")")
        self.expect(";")
        call = ApiCall(namespace=namespace, function=function, arguments=arguments)
        return ApiCallStatement(target_variable=target, awaited=awaited, call=call)

    def parse_conditional(self) -> Conditional:
        self._enter()
        self.expect("if")
        self.expect("(")
        condition = self.parse_expression()
        self.expect(")")
        then_branch = self.parse_block()
        else_branch = None
        if self.peek().kind == "else":
            self.advance()
            else_branch = self.parse_block()
        self._leave()
        return Conditional(condition=condition, then_branch=then_branch, else_branch=else_branch)

    def parse_block(self) -> list[Statement]:
        self.expect("{")
        statements = [self.parse_statement()]
        while self.peek().kind != "}":
            statements.append(self.parse_statement())
        self.expect("}")
        return statements

    def parse_object(self) -> dict[str, ParamValue]:
        self._enter()
        brace = self.expect("{")
        entries: dict[str, ParamValue] = {}
        if self.peek().kind != "}":
            while True:
                key_tok = self.expect("string", 'a string parameter key or \'}\'')
                key = key_tok.value
                if key in entries:
                    raise ParseError(
                        key_tok.line, key_tok.column,
                        "a unique parameter key",
                        f"duplicate key {json.dumps(key)}",
                    )
                self.expect(":")
                entries[key] = self.parse_value()
                if self.peek().kind == ",":
                    self.advance()
                    continue
                break
        self.expect("}")
        del brace
        self._leave()
        return entries

    def parse_array(self) -> list[ParamValue]:
        self._enter()
        self.expect("[")
        items: list[ParamValue] = []
        if self.peek().kind != "]":
            while True:
                items.append(self.parse_value())
                if self.peek().kind == ",":
                    self.advance()
                    continue
                break
        self.expect("]")
        self._leave()
        return items

    def parse_value(self) -> ParamValue:
        tok = self.peek()
        if tok.kind == "string" or tok.kind == "number":
            return self.advance().value
        if tok.kind == "true":
            self.advance()
            return True
        if tok.kind == "false":
            self.advance()
            return False
        if tok.kind == "null":
            self.advance()
            return None
        if tok.kind == "{":
            return self.parse_object()
        if tok.kind == "[":
            return self.parse_array()
        if tok.kind == "ident":
            return self.parse_member()
        raise self.error("a parameter value")

    def parse_member(self) -> MemberAccess:
        base = self.expect("ident", "an identifier").value
        path: list[str] = []
        while self.peek().kind == ".":
            self.advance()
            path.append(self.expect("ident", "an identifier after '.'").value)
        return MemberAccess(base_variable=base, path=path)

    # Expressions: "||" binds loosest, then "&&", then "!"; comparison
    # operands are restricted to member accesses and literals.

    def parse_expression(self) -> Expression:
        left = self.parse_and()
        while self.peek().kind == "||":
            self.advance()
            right = self.parse_and()
            left = Logical(op="or", left=left, right=right)
        return left

    def parse_and(self) -> Expression:
        left = self.parse_unary()
        while self.peek().kind == "&&":
            self.advance()
            right = self.parse_unary()
            left = Logical(op="and", left=left, right=right)
        return left

    def parse_unary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "!":
            self._enter()
            self.advance()
            inner = self.parse_unary()
            self._leave()
            return Negation(inner=inner)
        if tok.kind == "(":
            self._enter()
            self.advance()
            expr = self.parse_expression()
            self.expect(")")
            self._leave()
            return expr
        return self.parse_comparison()

    def parse_comparison(self) -> Expression:
        left = self.parse_operand()
        op = self.peek().kind
        if op in _COMPARISON_OPS:
            self.advance()
            right = self.parse_operand()
            return Comparison(left=left, op=op, right=right)
        return left

    def parse_operand(self) -> MemberAccess | Literal:
        tok = self.peek()
        if tok.kind == "ident":
            return self.parse_member()
        if tok.kind == "string" or tok.kind == "number":
            return Literal(self.advance().value)
        if tok.kind == "true":
            self.advance()
            return Literal(True)
        if tok.kind == "false":
            self.advance()
            return Literal(False)
        raise self.error("a comparison operand")


def parse_flow(source: str) -> Flow:
    """Parse DSL text into a :class:`Flow`.

    Raises :class:`ParseError` on the first violation; a source with no
    statements is an error.
    """
    tokens = _tokenize(source)
    parser = _Parser(tokens)
    statements = parser.parse_program()
    return Flow(statements=statements, source_text=source)


# ---------------------------------------------------------------------------
# Serialization (canonical text)


def serialize_flow(flow: Flow) -> str:
    """Render canonical text: one statement per line, a single space
    around '=', compact JSON-style parameter objects in source key order."""
    lines: list[str] = []
    for statement in flow.statements:
        _serialize_statement(statement, 0, lines)
    return "\n".join(lines)


def _serialize_statement(statement: Statement, depth: int, lines: list[str]) -> None:
    indent = "  " * depth
    if isinstance(statement, ApiCallStatement):
        call = statement.call
        awaited = "await " if statement.awaited else ""
        args = _serialize_object(call.arguments)
        lines.append(
            f"{indent}{statement.target_variable} = {awaited}"
            f"{call.namespace}.{call.function}({args});"
        )
        return
    lines.append(f"{indent}if ({_serialize_expression(statement.condition)}) {{")
    for inner in statement.then_branch:
        _serialize_statement(inner, depth + 1, lines)
    if statement.else_branch is not None:
        lines.append(f"{indent}}} else {{")
        for inner in statement.else_branch:
            _serialize_statement(inner, depth + 1, lines)
    lines.append(f"{indent}}}")


def _serialize_object(entries: dict[str, ParamValue]) -> str:
    if not entries:
        return "{}"
    parts = [f"{json.dumps(k)}: {_serialize_value(v)}" for k, v in entries.items()]
    return "{" + ", ".join(parts) + "}"


def _serialize_value(value: ParamValue) -> str:
    if isinstance(value, MemberAccess):
        return value.dotted()
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, dict):
        return _serialize_object(value)
    if isinstance(value, list):
        return "[" + ", ".join(_serialize_value(v) for v in value) + "]"
    return json.dumps(value)


def _serialize_expression(expr: Expression) -> str:
    if isinstance(expr, (MemberAccess, Literal)):
        return _serialize_operand(expr)
    if isinstance(expr, Comparison):
        return (
            f"{_serialize_operand(expr.left)} {expr.op} {_serialize_operand(expr.right)}"
        )
    if isinstance(expr, Negation):
        inner = _serialize_expression(expr.inner)
        # A negated comparison or logical needs parentheses to re-parse
        # into the same structure.
        if isinstance(expr.inner, (Comparison, Logical)):
            return f"!({inner})"
        return f"!{inner}"
    if isinstance(expr, Logical):
        symbol = "&&" if expr.op == "and" else "||"
        left = _serialize_logical_child(expr.left, expr.op, right_side=False)
        right = _serialize_logical_child(expr.right, expr.op, right_side=True)
        return f"{left} {symbol} {right}"
    raise TypeError(f"not an expression node: {expr!r}")


def _serialize_logical_child(child: Expression, parent_op: str, right_side: bool) -> str:
    text = _serialize_expression(child)
    if isinstance(child, Logical):
        # "or" under "and" always needs parentheses; a same-op child on
        # the right would otherwise re-associate to the left.
        if parent_op == "and" and child.op == "or":
            return f"({text})"
        if right_side and child.op == parent_op:
            return f"({text})"
    return text


def _serialize_operand(operand: MemberAccess | Literal) -> str:
    if isinstance(operand, MemberAccess):
        return operand.dotted()
    value = operand.value
    if isinstance(value, bool):
        return "true" if value else "false"
    return json.dumps(value)


# ---------------------------------------------------------------------------
# Extraction


def extract_api_sequence(flow: Flow) -> list[str]:
    """Qualified names of every API call in source order.

    Conditional branches are flattened then-branch first, else-branch
    second; duplicates are preserved (a sequence, not a set).
    """
    names: list[str] = []
    _walk_calls(flow.statements, lambda call: names.append(call.qualified_name))
    return names


def extract_parameter_usages(flow: Flow) -> list[tuple[str, list[str]]]:
    """For each API call in source order, its top-level argument keys.

    Keys inside nested objects are not included.
    """
    usages: list[tuple[str, list[str]]] = []
    _walk_calls(
        flow.statements,
        lambda call: usages.append((call.qualified_name, list(call.arguments.keys()))),
    )
    return usages


def _walk_calls(statements: list[Statement], visit) -> None:
    for statement in statements:
        if isinstance(statement, ApiCallStatement):
            visit(statement.call)
        else:
            _walk_calls(statement.then_branch, visit)
            if statement.else_branch is not None:
                _walk_calls(statement.else_branch, visit)


def count_api_calls(flow: Flow) -> int:
    """Number of ApiCall nodes in the AST (equals the extracted sequence length)."""
    count = 0

    def bump(_call: ApiCall) -> None:
        nonlocal count
        count += 1

    _walk_calls(flow.statements, bump)
    return count


# ---------------------------------------------------------------------------
# Plain-dict view (CLI and debugging output)


def flow_to_dict(flow: Flow) -> dict:
    return {"statements": [_statement_to_dict(s) for s in flow.statements]}


def _statement_to_dict(statement: Statement) -> dict:
    if isinstance(statement, ApiCallStatement):
        return {
            "type": "api_call",
            "target_variable": statement.target_variable,
            "awaited": statement.awaited,
            "function": statement.call.qualified_name,
            "arguments": _value_to_dict(statement.call.arguments),
        }
    return {
        "type": "conditional",
        "condition": _expression_to_dict(statement.condition),
        "then": [_statement_to_dict(s) for s in statement.then_branch],
        "else": (
            None
            if statement.else_branch is None
            else [_statement_to_dict(s) for s in statement.else_branch]
        ),
    }


def _value_to_dict(value: ParamValue):
    if isinstance(value, MemberAccess):
        return {"$ref": value.dotted()}
    if isinstance(value, dict):
        return {k: _value_to_dict(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_value_to_dict(v) for v in value]
    return value


def _expression_to_dict(expr: Expression) -> dict:
    if isinstance(expr, MemberAccess):
        return {"type": "member", "path": expr.dotted()}
    if isinstance(expr, Literal):
        return {"type": "literal", "value": expr.value}
    if isinstance(expr, Comparison):
        return {
            "type": "comparison",
            "op": expr.op,
            "left": _expression_to_dict(expr.left),
            "right": _expression_to_dict(expr.right),
        }
    if isinstance(expr, Logical):
        return {
            "type": expr.op,
            "left": _expression_to_dict(expr.left),
            "right": _expression_to_dict(expr.right),
        }
    return {"type": "not", "inner": _expression_to_dict(expr.inner)}
