"""Construction language: canonical grammar, renderers and identifier renaming.

Canonical form, one step per line::

    perp_bisector(A, C) -> m
    intersect(c1, c2) [near A] -> D
    intersect(m, AB) -> E, F

``#`` starts a comment. Identifiers beginning with ``auto`` are reserved for
names generated by :mod:`euclidkit.extract`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .geometry import ToolKind

IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
RESERVED_PREFIX = "auto"
PICK_KINDS = {"near": 1, "far": 1, "left": 2, "right": 2}


class DslError(Exception):
    pass


class DslSyntaxError(DslError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownTool(DslError):
    pass


class ArityMismatch(DslError):
    pass


class CollisionError(DslError):
    pass


@dataclass(frozen=True)
class Pick:
    kind: str
    refs: tuple[str, ...]

    def render(self) -> str:
        return f"[{self.kind} {' '.join(self.refs)}]"


@dataclass(frozen=True)
class Step:
    tool: ToolKind
    args: tuple[str, ...]
    outputs: tuple[str, ...]
    pick: Pick | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tool", ToolKind(self.tool))
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.outputs:
            raise DslError("a step needs at least one output")
        if self.pick is not None and self.tool is not ToolKind.INTERSECT:
            raise DslError("pick hints are only valid on intersect")

    def render(self) -> str:
        pick = f" {self.pick.render()}" if self.pick else ""
        return f"{self.tool.value}({', '.join(self.args)}){pick} -> {', '.join(self.outputs)}"


@dataclass(frozen=True)
class Program:
    steps: tuple[Step, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def kinds(self) -> tuple[ToolKind, ...]:
        return tuple(s.tool for s in self.steps)

    def identifiers(self) -> set[str]:
        out: set[str] = set()
        for s in self.steps:
            out.update(s.args)
            out.update(s.outputs)
            if s.pick:
                out.update(s.pick.refs)
        return out

    def outputs(self) -> list[str]:
        return [o for s in self.steps for o in s.outputs]


def check_arity(step: Step) -> None:
    tool = step.tool
    if len(step.args) != tool.arity:
        raise ArityMismatch(f"{tool.value} takes {tool.arity} argument(s), got {len(step.args)}")
    if len(step.outputs) > tool.max_outputs:
        raise ArityMismatch(f"{tool.value} binds at most {tool.max_outputs} output(s)")
    if step.pick is not None and len(step.outputs) != 1:
        raise ArityMismatch("a pick hint needs exactly one output")


# --- parsing -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<arrow>->)|(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<punct>[(),\[\]])|(?P<bad>\S))"
)


def _tokens(text: str, lineno: int) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            break
        kind = m.lastgroup
        col = m.start(kind) + 1
        if kind == "bad":
            raise DslSyntaxError(f"unexpected character {m.group(kind)!r}", lineno, col)
        out.append((kind, m.group(kind), col))
        pos = m.end()
    return out


class _Cursor:
    def __init__(self, toks: list[tuple[str, str, int]], lineno: int, width: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.width = width

    def peek(self) -> tuple[str, str, int] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, message: str):
        tok = self.peek()
        col = tok[2] if tok else self.width + 1
        raise DslSyntaxError(message, self.lineno, col)

    def take(self, kind: str, value: str | None = None) -> str:
        tok = self.peek()
        if tok is None or tok[0] != kind or (value is not None and tok[1] != value):
            self.fail(f"expected {value or kind}")
        self.i += 1
        return tok[1]

    def at(self, value: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[1] == value


def _parse_step(line: str, lineno: int) -> Step:
    cur = _Cursor(_tokens(line, lineno), lineno, len(line))
    name_tok = cur.peek()
    name = cur.take("ident")
    try:
        tool = ToolKind(name)
    except ValueError:
        raise UnknownTool(f"unknown tool {name!r} (line {lineno}, column {name_tok[2]})") from None
    cur.take("punct", "(")
    args: list[str] = []
    if not cur.at(")"):
        args.append(cur.take("ident"))
        while cur.at(","):
            cur.take("punct", ",")
            args.append(cur.take("ident"))
    cur.take("punct", ")")
    pick = None
    if cur.at("["):
        cur.take("punct", "[")
        kind = cur.take("ident")
        if kind not in PICK_KINDS:
            cur.i -= 1
            cur.fail(f"unknown pick {kind!r}")
        refs = tuple(cur.take("ident") for _ in range(PICK_KINDS[kind]))
        cur.take("punct", "]")
        pick = Pick(kind, refs)
    cur.take("arrow")
    outputs = [cur.take("ident")]
    while cur.at(","):
        cur.take("punct", ",")
        outputs.append(cur.take("ident"))
    if cur.peek() is not None:
        cur.fail("trailing input")
    if pick is not None and tool is not ToolKind.INTERSECT:
        raise DslSyntaxError("pick hints are only valid on intersect", lineno, 1)
    step = Step(tool, tuple(args), tuple(outputs), pick)
    try:
        check_arity(step)
    except ArityMismatch as exc:
        raise ArityMismatch(f"{exc} (line {lineno})") from None
    return step


def parse(text: str) -> Program:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        steps.append(_parse_step(line, lineno))
    return Program(tuple(steps))


# --- rendering -----------------------------------------------------------------


def _seq(idents: Sequence[str]) -> str:
    """Join point names the way geometry texts do: ``A, B`` -> ``AB``."""
    if all(len(i) == 1 and i.isupper() for i in idents):
        return "".join(idents)
    return " ".join(idents)


_PICK_TEXT = {
    "near": "closest to {0}",
    "far": "farthest from {0}",
    "left": "on the left of {0}{1}",
    "right": "on the right of {0}{1}",
}


_POINT_TOOLS = (ToolKind.INTERSECT, ToolKind.POINT_ON, ToolKind.FREE_POINT)


def _prose_sentence(step: Step) -> str:
    a = step.args
    t = step.tool
    if t is ToolKind.LINE:
        return f"Line Tool: Construct line {_seq(a)}."
    if t is ToolKind.RAY:
        return f"Line Tool: Construct the ray from {a[0]} through {a[1]}."
    if t is ToolKind.SEGMENT:
        return f"Line Tool: Construct segment {_seq(a)}."
    if t is ToolKind.CIRCLE:
        return f"Circle Tool: Construct the circle with center {a[0]} and radius {_seq(a)}."
    if t is ToolKind.COMPASS:
        return f"Compass Tool: Construct the circle with center {a[0]} and radius {_seq(a[1:])}."
    if t is ToolKind.PERP_BISECTOR:
        return f"Perpendicular Bisector Tool: Construct the perpendicular bisector of {_seq(a)}."
    if t is ToolKind.PERPENDICULAR:
        return f"Perpendicular Tool: Construct the perpendicular to {a[0]} through {a[1]}."
    if t is ToolKind.PARALLEL:
        return f"Parallel Tool: Construct the parallel to {a[0]} through {a[1]}."
    if t is ToolKind.ANGLE_BISECTOR:
        return f"Angle Bisector Tool: Construct the angle bisector of {_seq(a)}."
    if t is ToolKind.INTERSECT:
        where = ""
        if step.pick:
            where = " " + _PICK_TEXT[step.pick.kind].format(*step.pick.refs)
        outs = " and ".join(step.outputs)
        return f"Intersect Tool: Mark the intersection of {a[0]} and {a[1]}{where} as {outs}."
    if t is ToolKind.POINT_ON:
        return f"Point Tool: Mark an arbitrary point {step.outputs[0]} on {a[0]}."
    if t is ToolKind.FREE_POINT:
        return f"Point Tool: Mark an arbitrary point {step.outputs[0]}."
    raise AssertionError(t)


def render(program: Program, style: str = "canonical") -> str:
    if style == "canonical":
        return "\n".join(s.render() for s in program.steps)
    if style in ("prose", "prose-style"):
        used = {r for s in program.steps for r in s.args + (s.pick.refs if s.pick else ())}
        lines = []
        for step in program.steps:
            text = _prose_sentence(step)
            out = step.outputs[0]
            natural = step.tool in (ToolKind.LINE, ToolKind.SEGMENT) and out == "".join(step.args)
            if out in used and step.tool not in _POINT_TOOLS and not natural:
                # later steps refer to this object, so give it a name
                text = f"{text[:-1]}, named {out}."
            lines.append(text)
        return "\n".join(lines)
    raise ValueError(f"unknown style {style!r}")


# --- static validation -----------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    ident: str
    step: int

    def __str__(self) -> str:
        return f"{self.kind} {self.ident} @ step {self.step}"


def static_validate(program: Program, initial: Iterable[str]) -> list[Diagnostic]:
    """Report unbound references, rebinding and arity problems (1-based steps)."""
    bound = set(initial)
    out: list[Diagnostic] = []
    for n, step in enumerate(program.steps, start=1):
        try:
            check_arity(step)
        except ArityMismatch:
            out.append(Diagnostic("ArityMismatch", step.tool.value, n))
        refs = list(step.args) + (list(step.pick.refs) if step.pick else [])
        for ident in refs:
            if ident not in bound:
                out.append(Diagnostic("UnboundIdentifier", ident, n))
        for ident in step.outputs:
            if ident in bound:
                out.append(Diagnostic("Rebinding", ident, n))
            bound.add(ident)
    return out


# --- renaming --------------------------------------------------------------------

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_POINT_SEQ_RE = re.compile(r"(?:[A-Z][0-9]*)+")
_ATOM_RE = re.compile(r"[A-Z][0-9]*")


def _atoms(token: str) -> list[str] | None:
    """Split an all-caps point sequence (``ABC``, ``P1Q2``) into point names."""
    if len(token) > 1 and _POINT_SEQ_RE.fullmatch(token):
        return _ATOM_RE.findall(token)
    return None


def _rename_token(token: str, mapping: Mapping[str, str]) -> str:
    if token in mapping:
        return mapping[token]
    atoms = _atoms(token)
    if atoms and any(a in mapping for a in atoms):
        return "".join(mapping.get(a, a) for a in atoms)
    return token


def _names_in_text(text: str) -> set[str]:
    names = set()
    for tok in _WORD_RE.findall(text):
        names.add(tok)
        names.update(_atoms(tok) or ())
    return names


def _names_in_program(program: Program) -> set[str]:
    names = set()
    for ident in program.identifiers():
        names.add(ident)
        names.update(_atoms(ident) or ())
    return names


def _check_mapping(mapping: Mapping[str, str], present: set[str]) -> dict[str, str]:
    active = {k: v for k, v in mapping.items() if k in present and k != v}
    targets = list(active.values())
    if len(set(targets)) != len(targets):
        raise CollisionError("rename map is not injective")
    for src, dst in active.items():
        if not IDENT_RE.fullmatch(dst):
            raise CollisionError(f"invalid replacement name {dst!r}")
        if dst in present and dst not in active:
            raise CollisionError(f"{dst} already exists")
    return active


def rename_text(text: str, mapping: Mapping[str, str]) -> str:
    return _WORD_RE.sub(lambda m: _rename_token(m.group(0), mapping), text)


def rename_identifiers(obj, mapping: Mapping[str, str]):
    """Rename identifiers in a Program or a statement string.

    Returns ``(renamed, inverse_map)``. Whole tokens are replaced, and so are
    point names inside multi-letter point sequences (``AC`` -> ``AX`` for
    ``C -> X``). Raises :class:`CollisionError` when a replacement name is
    already in use.
    """
    if isinstance(obj, str):
        active = _check_mapping(mapping, _names_in_text(obj))
        renamed = rename_text(obj, active)
    elif isinstance(obj, Program):
        active = _check_mapping(mapping, _names_in_program(obj))
        renamed = rename_program(obj, active)
    else:
        raise TypeError(f"cannot rename {type(obj).__name__}")
    return renamed, {v: k for k, v in active.items()}


def rename_program(program: Program, mapping: Mapping[str, str]) -> Program:
    def r(ids: Iterable[str]) -> tuple[str, ...]:
        return tuple(_rename_token(i, mapping) for i in ids)

    steps = []
    for s in program.steps:
        pick = Pick(s.pick.kind, r(s.pick.refs)) if s.pick else None
        steps.append(replace(s, args=r(s.args), outputs=r(s.outputs), pick=pick))
    return Program(tuple(steps))


def names_in(*items) -> set[str]:
    """All identifiers and point atoms mentioned by programs and strings."""
    out: set[str] = set()
    for item in items:
        if isinstance(item, Program):
            out |= _names_in_program(item)
        elif isinstance(item, str):
            out |= _names_in_text(item)
        else:
            for sub in item:
                out |= names_in(sub)
    return out
