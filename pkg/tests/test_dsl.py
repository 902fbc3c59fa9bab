from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euclidkit.dsl import (
    ArityMismatch,
    CollisionError,
    DslSyntaxError,
    Pick,
    Program,
    Step,
    UnknownTool,
    parse,
    render,
    rename_identifiers,
    static_validate,
)
from euclidkit.geometry import ToolKind


def test_parse_basic_program():
    prog = parse("line(A, B) -> l\ncircle(A, B) -> c\nintersect(l, c) [far A] -> P\n")
    assert list(prog.kinds) == [ToolKind.LINE, ToolKind.CIRCLE, ToolKind.INTERSECT]
    assert prog.steps[2].pick == Pick("far", ("A",))


def test_comments_and_blank_lines_are_skipped():
    assert len(parse("# header\n\nline(A, B) -> l  # trailing\n").steps) == 1


def test_unknown_tool_reports_position():
    with pytest.raises(UnknownTool, match="line 1"):
        parse("lasso(A, B) -> l")


def test_syntax_error_has_line_and_column():
    with pytest.raises(DslSyntaxError) as info:
        parse("line(A, B) -> l\nline(A B) -> m")
    assert info.value.line == 2 and info.value.column == 8


def test_arity_is_checked():
    with pytest.raises(ArityMismatch):
        parse("circle(A) -> c")


def test_pick_only_on_intersect():
    with pytest.raises(DslSyntaxError):
        parse("line(A, B) [near A] -> l")


def test_two_outputs_only_for_intersect():
    with pytest.raises(ArityMismatch):
        parse("line(A, B) -> l, m")


def test_static_validation_reports_every_problem():
    prog = parse("line(A, Z) -> l\nline(A, B) -> l")
    kinds = [(d.kind, d.step) for d in static_validate(prog, {"A", "B"})]
    assert kinds == [("UnboundIdentifier", 1), ("Rebinding", 2)]


def test_prose_render_of_circle_and_pick():
    prog = parse("circle(A, B) -> c\nintersect(c, AB) [far A] -> C")
    assert render(prog, "prose").splitlines() == [
        "Circle Tool: Construct the circle with center A and radius AB, named c.",
        "Intersect Tool: Mark the intersection of c and AB farthest from A as C.",
    ]


def test_render_single_circle_both_styles():
    prog = parse("circle(A, B) -> c1")
    assert render(prog) == "circle(A, B) -> c1"
    assert render(prog, "prose") == "Circle Tool: Construct the circle with center A and radius AB."
    assert render(Program()) == "" and render(Program(), "prose") == ""


def test_rename_statement_inside_point_sequences():
    text, inverse = rename_identifiers("the length of AC equals BC", {"C": "X"})
    assert text == "the length of AX equals BX"
    assert inverse == {"X": "C"}


def test_rename_collision():
    with pytest.raises(CollisionError):
        rename_identifiers(parse("line(A, B) -> l"), {"A": "B"})


names = st.sampled_from(["A", "B", "C", "D", "E", "l", "m", "c1", "P2"])


@st.composite
def programs(draw):
    steps = []
    for _ in range(draw(st.integers(0, 6))):
        tool = draw(st.sampled_from(list(ToolKind)))
        args = tuple(draw(names) for _ in range(tool.arity))
        pick = None
        n_out = 1
        if tool is ToolKind.INTERSECT:
            choice = draw(st.integers(0, 2))
            if choice == 1:
                n_out = 2
            elif choice == 2:
                kind = draw(st.sampled_from(["near", "far", "left", "right"]))
                pick = Pick(kind, tuple(draw(names) for _ in range(1 if kind in ("near", "far") else 2)))
        outs = tuple(draw(names) for _ in range(n_out))
        steps.append(Step(tool, args, outs, pick))
    return Program(tuple(steps))


@settings(max_examples=200, deadline=None)
@given(programs())
def test_parse_render_round_trip(prog):
    assert parse(render(prog)) == prog
    assert render(parse(render(prog))) == render(prog)
