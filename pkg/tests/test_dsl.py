"""Parser, serializer, and extraction tests for the DSL core."""

import random

import pytest

from flowdsl.dsl import (
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
    flow_to_dict,
    parse_flow,
    serialize_flow,
)

WORKED_EXAMPLE = (
    'triggerOutputs = await shared_microsoftforms.CreateFormWebhook'
    '({"form_id": "feedback"});\n'
    'posted = await shared_teams.PostMessageToConversation'
    '({"poster": "Flow bot", "location": "Channel"});'
)


def test_parse_simple_assignment():
    flow = parse_flow('result = await shared_mail.SendEmail({"to": "a@b.c"});')
    assert len(flow.statements) == 1
    stmt = flow.statements[0]
    assert isinstance(stmt, ApiCallStatement)
    assert stmt.target_variable == "result"
    assert stmt.awaited is True
    assert stmt.call.namespace == "shared_mail"
    assert stmt.call.function == "SendEmail"
    assert stmt.call.qualified_name == "shared_mail.SendEmail"
    assert stmt.call.arguments == {"to": "a@b.c"}


def test_parse_without_await():
    flow = parse_flow("x = ns.Fn({});")
    stmt = flow.statements[0]
    assert stmt.awaited is False
    assert stmt.call.arguments == {}


def test_parse_worked_example_sequence():
    flow = parse_flow(WORKED_EXAMPLE)
    assert extract_api_sequence(flow) == [
        "shared_microsoftforms.CreateFormWebhook",
        "shared_teams.PostMessageToConversation",
    ]


def test_parameter_value_kinds():
    src = (
        'x = ns.Fn({"s": "text", "i": 3, "f": 2.5, "neg": -7, '
        '"t": true, "fa": false, "n": null, '
        '"obj": {"inner": "v"}, "arr": [1, "two", {"k": true}], '
        '"ref": triggerOutputs.body.id});'
    )
    flow = parse_flow(src)
    args = flow.statements[0].call.arguments
    assert args["s"] == "text"
    assert args["i"] == 3
    assert isinstance(args["i"], int)
    assert args["f"] == 2.5
    assert args["neg"] == -7
    assert args["t"] is True
    assert args["fa"] is False
    assert args["n"] is None
    assert args["obj"] == {"inner": "v"}
    assert args["arr"] == [1, "two", {"k": True}]
    ref = args["ref"]
    assert isinstance(ref, MemberAccess)
    assert ref.base_variable == "triggerOutputs"
    assert ref.path == ["body", "id"]
    assert ref.dotted() == "triggerOutputs.body.id"


def test_string_escapes():
    flow = parse_flow(r'x = ns.Fn({"msg": "line1\nline2 \"q\" A"});')
    assert flow.statements[0].call.arguments["msg"] == 'line1\nline2 "q" A'


def test_conditional_with_else():
    src = (
        'a = await ns.Trigger({});\n'
        'if (a.body.count > 3) {\n'
        '  b = ns.ActionOne({"k": "v"});\n'
        '} else {\n'
        '  c = ns.ActionTwo({});\n'
        '}'
    )
    flow = parse_flow(src)
    assert len(flow.statements) == 2
    cond = flow.statements[1]
    assert isinstance(cond, Conditional)
    assert isinstance(cond.condition, Comparison)
    assert cond.condition.op == ">"
    assert isinstance(cond.condition.left, MemberAccess)
    assert cond.condition.right == Literal(3)
    assert len(cond.then_branch) == 1
    assert cond.else_branch is not None
    assert len(cond.else_branch) == 1


def test_conditional_without_else():
    flow = parse_flow('if (x.ok == true) { y = ns.Fn({}); }')
    cond = flow.statements[0]
    assert cond.else_branch is None


def test_nested_conditionals():
    src = (
        'if (a.x == 1) {\n'
        '  if (a.y == 2) {\n'
        '    r = ns.Deep({});\n'
        '  }\n'
        '} else {\n'
        '  s = ns.Shallow({});\n'
        '}'
    )
    flow = parse_flow(src)
    outer = flow.statements[0]
    inner = outer.then_branch[0]
    assert isinstance(inner, Conditional)
    assert extract_api_sequence(flow) == ["ns.Deep", "ns.Shallow"]


def test_logical_operators_and_precedence():
    flow = parse_flow('if (a.x == 1 && b.y == 2 || !c.z) { r = ns.Fn({}); }')
    cond = flow.statements[0].condition
    # || binds loosest: (a.x == 1 && b.y == 2) || (!c.z)
    assert isinstance(cond, Logical)
    assert cond.op == "or"
    assert isinstance(cond.left, Logical)
    assert cond.left.op == "and"
    assert isinstance(cond.right, Negation)


def test_parenthesized_condition():
    flow = parse_flow('if ((a.x == 1 || a.y == 2) && b.ok) { r = ns.Fn({}); }')
    cond = flow.statements[0].condition
    assert isinstance(cond, Logical)
    assert cond.op == "and"
    assert isinstance(cond.left, Logical)
    assert cond.left.op == "or"


def test_bare_member_condition():
    flow = parse_flow('if (t.body.flag) { r = ns.Fn({}); }')
    cond = flow.statements[0].condition
    assert isinstance(cond, MemberAccess)


# ---------------------------------------------------------------------------
# Errors


def test_empty_source_is_error():
    with pytest.raises(ParseError):
        parse_flow("")
    with pytest.raises(ParseError):
        parse_flow("   \n  ")


def test_error_position_missing_semicolon():
    src = 'x = ns.Fn({})'
    with pytest.raises(ParseError) as exc_info:
        parse_flow(src)
    err = exc_info.value
    assert err.line == 1
    # ')' is at column 13; eof lands one past it
    assert err.column == 14
    assert "';'" in err.expected


def test_error_position_second_line():
    src = 'x = ns.Fn({});\ny = ns.Broken({'
    with pytest.raises(ParseError) as exc_info:
        parse_flow(src)
    err = exc_info.value
    assert err.line == 2
    assert err.column == 16
    assert err.found == "end of input"


def test_error_unclosed_param_object():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = shared_a.F({)')
    err = exc_info.value
    assert err.line == 1
    assert err.column == 17
    assert err.found == "')'"


def test_error_non_string_key():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = ns.Fn({to: "a"});')
    assert exc_info.value.column == 12


def test_error_duplicate_key():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = ns.Fn({"k": 1, "k": 2});')
    err = exc_info.value
    assert "unique" in err.expected
    assert '"k"' in err.found


def test_error_keyword_as_variable():
    with pytest.raises(ParseError):
        parse_flow('if = ns.Fn({});')
    with pytest.raises(ParseError):
        parse_flow('x = await await ns.Fn({});')


def test_error_missing_namespace_dot():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = Fn({});')
    assert exc_info.value.expected == "'.'"


def test_error_single_ampersand():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('if (a.x & b.y) { r = ns.Fn({}); }')
    assert exc_info.value.expected == "'&&'"


def test_error_trailing_garbage():
    with pytest.raises(ParseError):
        parse_flow('x = ns.Fn({}); @')


def test_error_unterminated_string():
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = ns.Fn({"k": "unclosed});')
    assert exc_info.value.found in ("end of input", "end of line")


def test_error_assignment_without_call():
    # Plain value assignments are not in the language.
    with pytest.raises(ParseError):
        parse_flow('x = 5;')
    with pytest.raises(ParseError):
        parse_flow('x = "text";')


def test_deep_nesting_is_rejected_not_crash():
    depth = 500
    src = 'x = ns.Fn({"a": ' + "[" * depth + "]" * depth + '});'
    with pytest.raises(ParseError) as exc_info:
        parse_flow(src)
    assert "nesting" in exc_info.value.expected


def test_error_unicode_digit_is_not_a_number():
    # "³" passes str.isdigit() but is not ASCII; it must surface as a
    # ParseError, not crash the number scanner.
    with pytest.raises(ParseError) as exc_info:
        parse_flow('x = ns.Fn({"k": ³});')
    assert exc_info.value.line == 1
    assert exc_info.value.column >= 1


# ---------------------------------------------------------------------------
# Serialization


def test_serialize_canonical_form():
    flow = parse_flow('x=await  ns  .  Fn({"a":1,"b":"two"})   ;')
    assert serialize_flow(flow) == 'x = await ns.Fn({"a": 1, "b": "two"});'


def test_serialize_conditional_layout():
    src = 'if (a.x == 1) { b = ns.One({}); } else { c = ns.Two({}); }'
    flow = parse_flow(src)
    assert serialize_flow(flow) == (
        "if (a.x == 1) {\n"
        "  b = ns.One({});\n"
        "} else {\n"
        "  c = ns.Two({});\n"
        "}"
    )


def test_serialize_negation_parenthesizes_comparison():
    flow = parse_flow('if (!(a.x == 1)) { r = ns.Fn({}); }')
    text = serialize_flow(flow)
    assert "!(a.x == 1)" in text
    reparsed = parse_flow(text)
    assert reparsed == flow


def test_serialize_or_under_and_parenthesized():
    flow = parse_flow('if ((a.x || b.y) && c.z) { r = ns.Fn({}); }')
    text = serialize_flow(flow)
    assert "(a.x || b.y) && c.z" in text
    assert parse_flow(text) == flow


def test_roundtrip_fixed_corpus():
    sources = [
        'x = ns.Fn({});',
        'x = await ns.Fn({"k": "v"});',
        'x = ns.Fn({"n": null, "arr": [1, 2, [3]], "o": {"p": {"q": false}}});',
        'x = ns.Fn({"r": a.b.c});',
        'a = await t.Go({});\nif (a.ok) {\n  b = n.Act({"v": a.body.x});\n}',
        'if (!a.ok && (b.n < 3 || c.s != "x")) {\n  r = ns.Fn({});\n} else {\n  s = ns.Gn({});\n}',
        'if (a.x >= 1.5) {\n  if (a.y <= -2) {\n    r = ns.Deep({});\n  }\n}',
    ]
    for src in sources:
        flow = parse_flow(src)
        text = serialize_flow(flow)
        again = parse_flow(text)
        assert again == flow, src
        # Canonical text is a fixed point.
        assert serialize_flow(again) == text, src


def _random_flow(rng: random.Random, depth: int = 0) -> str:
    """Build random valid source text for round-trip checks."""
    def ident() -> str:
        return rng.choice(["alpha", "beta", "resp", "out", "trigger", "x9", "_tmp"])

    def member() -> str:
        parts = [ident()] + [ident() for _ in range(rng.randint(1, 2))]
        return ".".join(parts)

    def value(d: int) -> str:
        kinds = ["str", "int", "float", "bool", "null", "member"]
        if d < 2:
            kinds += ["obj", "arr"]
        kind = rng.choice(kinds)
        if kind == "str":
            return '"' + rng.choice(["hello", "a b c", "x/y", ""]) + '"'
        if kind == "int":
            return str(rng.randint(-50, 50))
        if kind == "float":
            return f"{rng.uniform(-5, 5):.2f}"
        if kind == "bool":
            return rng.choice(["true", "false"])
        if kind == "null":
            return "null"
        if kind == "member":
            return member()
        if kind == "obj":
            n = rng.randint(0, 2)
            keys = rng.sample(["p", "q", "r", "s"], n)
            return "{" + ", ".join(f'"{k}": {value(d + 1)}' for k in keys) + "}"
        n = rng.randint(0, 3)
        return "[" + ", ".join(value(d + 1) for _ in range(n)) + "]"

    def assignment() -> str:
        n = rng.randint(0, 3)
        keys = rng.sample(["to", "body", "subject", "id", "flag"], n)
        params = "{" + ", ".join(f'"{k}": {value(0)}' for k in keys) + "}"
        awaited = "await " if rng.random() < 0.5 else ""
        return f"{ident()} = {awaited}shared_{ident()}.Fn{rng.randint(1, 9)}({params});"

    def condition(d: int) -> str:
        kind = rng.choice(["cmp", "member", "not", "and", "or"] if d < 2 else ["cmp", "member"])
        if kind == "cmp":
            op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
            return f"{member()} {op} {rng.randint(0, 9)}"
        if kind == "member":
            return member()
        if kind == "not":
            return f"!({condition(d + 1)})"
        symbol = "&&" if kind == "and" else "||"
        return f"({condition(d + 1)}) {symbol} ({condition(d + 1)})"

    def statement(d: int) -> str:
        if d < 2 and rng.random() < 0.3:
            then = "\n".join(statement(d + 1) for _ in range(rng.randint(1, 2)))
            if rng.random() < 0.5:
                other = "\n".join(statement(d + 1) for _ in range(rng.randint(1, 2)))
                return f"if ({condition(0)}) {{\n{then}\n}} else {{\n{other}\n}}"
            return f"if ({condition(0)}) {{\n{then}\n}}"
        return assignment()

    return "\n".join(statement(depth) for _ in range(rng.randint(1, 4)))


def test_roundtrip_random_flows():
    rng = random.Random(20240817)
    for _ in range(200):
        src = _random_flow(rng)
        flow = parse_flow(src)
        text = serialize_flow(flow)
        again = parse_flow(text)
        assert again == flow, src
        assert serialize_flow(again) == text, src


# ---------------------------------------------------------------------------
# Extraction


def test_extract_sequence_flattens_then_before_else():
    src = (
        'a = await t.Go({});\n'
        'if (a.ok) {\n'
        '  b = n.Then1({});\n'
        '  c = n.Then2({});\n'
        '} else {\n'
        '  d = n.Else1({});\n'
        '}\n'
        'e = n.After({});'
    )
    flow = parse_flow(src)
    assert extract_api_sequence(flow) == [
        "t.Go", "n.Then1", "n.Then2", "n.Else1", "n.After",
    ]
    assert count_api_calls(flow) == 5


def test_extract_sequence_keeps_duplicates():
    flow = parse_flow('a = n.Same({});\nb = n.Same({});')
    assert extract_api_sequence(flow) == ["n.Same", "n.Same"]


def test_extract_parameter_usages_top_level_only():
    src = 'x = ns.Fn({"outer": {"inner": 1}, "flag": true});\ny = ns.Gn({});'
    flow = parse_flow(src)
    assert extract_parameter_usages(flow) == [
        ("ns.Fn", ["outer", "flag"]),
        ("ns.Gn", []),
    ]


def test_flow_to_dict_shapes():
    flow = parse_flow(
        'x = await ns.Fn({"k": t.body.v});\nif (t.ok) { y = ns.Gn({}); }'
    )
    data = flow_to_dict(flow)
    assert data["statements"][0] == {
        "type": "api_call",
        "target_variable": "x",
        "awaited": True,
        "function": "ns.Fn",
        "arguments": {"k": {"$ref": "t.body.v"}},
    }
    cond = data["statements"][1]
    assert cond["type"] == "conditional"
    assert cond["condition"] == {"type": "member", "path": "t.ok"}
    assert cond["else"] is None


def test_flow_equality_ignores_source_text():
    a = parse_flow('x = ns.Fn({"k": 1});')
    b = parse_flow('x  =  ns.Fn(  {"k": 1}  );')
    assert a == b
    assert Flow(statements=a.statements) == a
