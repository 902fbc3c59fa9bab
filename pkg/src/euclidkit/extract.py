"""Tolerant extraction of construction programs from free-form tool sentences.

Handles the ``"<Name> Tool: ..."`` and ``"<Name Tool> k: ..."`` step styles
that solvers produce, e.g.::

    Perpendicular Bisector Tool: Construct the perpendicular bisector of AC,
    intersecting AB at E and CD at F.

Each recognised line becomes one or more canonical steps. Lines that cannot be
interpreted are skipped and listed in the report instead of failing the whole
candidate.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .dsl import RESERVED_PREFIX, DslError, Pick, Program, Step, _atoms
from .geometry import ToolKind


class EmptyExtraction(DslError):
    pass


@dataclass
class Skipped:
    line: int
    text: str
    reason: str


@dataclass
class Span:
    """Canonical steps produced by one source line (``number`` is its ``k``)."""

    line: int
    number: int | None
    steps: list[int]


@dataclass
class ExtractionReport:
    program: Program
    skipped: list[Skipped] = field(default_factory=list)
    spans: list[Span] = field(default_factory=list)
    ignored: list[Skipped] = field(default_factory=list)


_TOOL_NAMES = {
    "line": ToolKind.LINE,
    "straightedge": ToolKind.LINE,
    "ray": ToolKind.RAY,
    "circle": ToolKind.CIRCLE,
    "compass": ToolKind.COMPASS,
    "perpendicular bisector": ToolKind.PERP_BISECTOR,
    "perpendicular": ToolKind.PERPENDICULAR,
    "parallel": ToolKind.PARALLEL,
    "angle bisector": ToolKind.ANGLE_BISECTOR,
    "bisector": ToolKind.ANGLE_BISECTOR,
    "intersect": ToolKind.INTERSECT,
    "intersection": ToolKind.INTERSECT,
    "point": ToolKind.POINT_ON,
    "move": None,
}

_PREFIX_RE = re.compile(
    r"""^\s*(?:[-*•]\s*)?
    (?:
        <\s*(?P<tag>[A-Za-z ]+?)\s*>\s*(?P<num>\d+)?\s*[:.]
      | (?P<name>[A-Za-z ]+?)\s*(?P<num2>\d+)?\s*:
    )\s*(?P<body>.*)$""",
    re.X,
)

TOKEN = r"(?:[A-Z][A-Z0-9']*|[a-z][A-Za-z_]*[0-9][A-Za-z0-9_]*)"
_TOKEN_RE = re.compile(rf"\b{TOKEN}\b")
_SIDE_QUALIFIER_RE = re.compile(r"\s+with\s+\w+\s+(?:on|lying on)\s+the\s+(?:side|other side)\b.*$", re.I)
_PICK_RE = re.compile(
    rf"\s*,?\s*(?:(?P<near>closest|nearest|near)\s+to\s+(?:point\s+)?(?P<n>{TOKEN})"
    rf"|(?P<far>farthest|furthest|far)\s+from\s+(?:point\s+)?(?P<f>{TOKEN})"
    rf"|on\s+the\s+(?P<side>left|right)(?:\s+side)?\s+of\s+(?P<s>{TOKEN}))",
)


def _tool_from_name(raw: str) -> tuple[bool, ToolKind | None]:
    """``(recognized, tool)``; the Move tool is recognized but maps to None."""
    name = re.sub(r"\s*tool$", "", raw.strip().lower()).strip()
    if name in _TOOL_NAMES:
        return True, _TOOL_NAMES[name]
    return False, None


def _split_sentences(body: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+(?=[A-Z])", body.strip())
    return [p.strip().rstrip(".").strip() for p in parts if p.strip()]


def _tokens(text: str) -> list[str]:
    toks = _TOKEN_RE.findall(text)
    # a leading article "A circle ..." is not a point name
    m = re.match(r"\s*A\s+[a-z]{2,}", text)
    if m and toks and toks[0] == "A":
        toks = toks[1:]
    return [t for t in toks if t != "I"]


def _point_atoms(tokens: Iterable[str]) -> list[str]:
    out: list[str] = []
    for t in tokens:
        atoms = _atoms(t)
        out.extend(atoms if atoms else [t])
    return out


class _Extractor:
    def __init__(self, known: Iterable[str]):
        self.known = set(known)
        self.bound: set[str] = set()
        self.steps: list[Step] = []
        self.counter = 0
        self.lines_through: dict[frozenset, str] = {}
        self.circles_by_center: dict[str, str] = {}
        self.history: list[tuple[ToolKind, str]] = []
        # points known to lie on each linear object
        self.incident: dict[str, set[str]] = {}
        # explicit name for the next constructed object ("..., named m")
        self.next_name: str | None = None

    def snapshot(self) -> tuple:
        return (
            len(self.steps), set(self.bound), self.counter, list(self.history),
            dict(self.lines_through), dict(self.circles_by_center),
            {k: set(v) for k, v in self.incident.items()},
        )

    def restore(self, mark: tuple) -> None:
        n, self.bound, self.counter, self.history, self.lines_through, self.circles_by_center, self.incident = mark
        del self.steps[n:]

    # naming -----------------------------------------------------------------

    def fresh(self) -> str:
        if self.next_name is not None:
            name, self.next_name = self.next_name, None
            return name
        while True:
            self.counter += 1
            name = f"{RESERVED_PREFIX}{self.counter}"
            if name not in self.known and name not in self.bound:
                return name

    def taken(self, name: str) -> bool:
        return name in self.known or name in self.bound

    def emit(self, tool: ToolKind, args, outputs, pick=None) -> Step:
        step = Step(tool, tuple(args), tuple(outputs), pick)
        self.steps.append(step)
        self.bound.update(outputs)
        for o in outputs:
            self.history.append((tool, o))
        if tool in (ToolKind.LINE, ToolKind.RAY, ToolKind.SEGMENT):
            self.lines_through[frozenset(args)] = outputs[0]
            self.incident[outputs[0]] = set(args)
        elif tool in (ToolKind.PERPENDICULAR, ToolKind.PARALLEL):
            self.incident[outputs[0]] = {args[1]}
        elif tool in (ToolKind.INTERSECT, ToolKind.POINT_ON):
            for a in args:
                if a in self.incident:
                    self.incident[a].update(outputs)
        if tool in (ToolKind.CIRCLE, ToolKind.COMPASS):
            self.circles_by_center[args[0]] = outputs[0]
        return step

    # references -----------------------------------------------------------

    def _latest(self, *tools: ToolKind, count: int = 1) -> list[str] | None:
        names = [name for tool, name in self.history if tool in tools]
        if len(names) < count:
            return None
        return names[-count:]

    def ref(self, phrase: str) -> list[str] | None:
        """Resolve a noun phrase to one or more object identifiers."""
        text = phrase.strip().strip(",.").strip()
        low = text.lower()
        toks = _tokens(text)
        plural_two = bool(re.search(r"\b(two|both)\b", low)) or re.search(
            r"\b(circles|lines|bisectors|perpendiculars)\b", low
        )
        if "circle" in low and toks and len(toks) == 1 and toks[0] in self.circles_by_center:
            if not self.taken(toks[0]) or _is_point_name(toks[0]):
                return [self.circles_by_center[toks[0]]]
        if toks:
            tok = toks[0]
            if self.taken(tok):
                return [tok]
            atoms = _atoms(tok)
            if atoms and len(atoms) == 2:
                rev = "".join(reversed(atoms))
                if self.taken(rev):
                    return [rev]
                key = frozenset(atoms)
                if key in self.lines_through:
                    return [self.lines_through[key]]
                for name, pts in reversed(self.incident.items()):
                    if key <= pts:
                        return [name]
            return [tok]
        for word in re.findall(r"\b[a-z][A-Za-z0-9_]*\b", text):
            if len(word) <= 3 and self.taken(word):
                return [word]
        n = 2 if plural_two else 1
        if "perpendicular bisector" in low:
            return self._latest(ToolKind.PERP_BISECTOR, count=n)
        if "angle bisector" in low:
            return self._latest(ToolKind.ANGLE_BISECTOR, count=n)
        if "bisector" in low:
            return self._latest(ToolKind.PERP_BISECTOR, ToolKind.ANGLE_BISECTOR, count=n)
        if "perpendicular" in low:
            return self._latest(ToolKind.PERPENDICULAR, count=n)
        if "parallel" in low:
            return self._latest(ToolKind.PARALLEL, count=n)
        if "circle" in low:
            return self._latest(ToolKind.CIRCLE, ToolKind.COMPASS, count=n)
        if "ray" in low:
            return self._latest(ToolKind.RAY, count=n)
        if "line" in low or "diagonal" in low:
            if "other" in low or "given" in low or "original" in low:
                return None
            return self._latest(ToolKind.LINE, count=n)
        return None

    # tool handlers ----------------------------------------------------------

    def line_like(self, text: str) -> list[Step]:
        low = text.lower()
        toks = _tokens(text)
        if re.search(r"\bray\b", low):
            pts = _point_atoms(toks)
            if len(pts) < 2:
                raise _Skip("ray needs two points")
            return [self.emit(ToolKind.RAY, pts[:2], [self.fresh()])]
        tool = ToolKind.LINE
        if re.search(r"\bsegment\b", low) and not re.search(r"\bline\s+segment\b", low):
            tool = ToolKind.SEGMENT
        pairs: list[list[str]]
        if len(toks) >= 2 and all((_atoms(t) or []) and len(_atoms(t)) == 2 for t in toks):
            pairs = [_atoms(t) for t in toks]
        else:
            pts = _point_atoms(toks)
            if len(pts) < 2:
                raise _Skip("line needs two points")
            pairs = [pts[:2]]
        steps = []
        for a, b in pairs:
            natural = a + b if len(a) == 1 and len(b) == 1 else None
            if self.next_name is None and natural and not self.taken(natural):
                name = natural
            else:
                name = self.fresh()
            steps.append(self.emit(tool, [a, b], [name]))
        return steps

    def circle(self, text: str, compass: bool) -> list[Step]:
        center = None
        m = re.search(rf"\bcent(?:er|re)(?:ed)?(?:\s+(?:at|in|of))?(?:\s+point)?\s+({TOKEN})", text)
        if m:
            center = m.group(1)
        else:
            m = re.search(rf"\bcircle\s+(?:at|around|about|on)\s+(?:point\s+)?({TOKEN})", text)
            if m:
                center = m.group(1)
        radius: list[str] = []
        m = re.search(
            rf"\bradius\s+(?:equal\s+to\s+)?(?:the\s+(?:length|distance)\s+)?(?:of\s+|between\s+)?"
            rf"(?:(?:point|segment|side)\s+)?({TOKEN})(?:\s+(?:and\s+(?:point\s+)?)?({TOKEN}))?",
            text,
        )
        if m:
            radius = _point_atoms([g for g in m.groups() if g])
        else:
            m = re.search(rf"\b(?:through|passing\s+through)\s+(?:point\s+)?({TOKEN})", text)
            if m:
                radius = [m.group(1)]
        if center is None:
            pts = _point_atoms(_tokens(text))
            if len(pts) >= 2:
                center, radius = pts[0], pts[1:3]
        if center is None or not radius:
            raise _Skip("circle needs a center and a radius")
        if compass:
            if len(radius) == 1:
                radius = [center, radius[0]]
            return [self.emit(ToolKind.COMPASS, [center, *radius[:2]], [self.fresh()])]
        if len(radius) == 1:
            through = radius[0]
        elif radius[0] == center:
            through = radius[1]
        elif radius[1] == center:
            through = radius[0]
        else:
            return [self.emit(ToolKind.COMPASS, [center, *radius[:2]], [self.fresh()])]
        return [self.emit(ToolKind.CIRCLE, [center, through], [self.fresh()])]

    def perp_bisector(self, text: str) -> list[Step]:
        m = re.search(r"\bbisector\s+(?:of|for)\b(.*)$", text)
        pts = _point_atoms(_tokens(m.group(1) if m else text))
        if len(pts) < 2:
            raise _Skip("perpendicular bisector needs two points")
        return [self.emit(ToolKind.PERP_BISECTOR, pts[:2], [self.fresh()])]

    def _base_and_point(self, text: str, key: str) -> tuple[str, str]:
        base = point = None
        m = re.search(rf"\b(?:from|through|at|via)\s+(?:the\s+)?(?:point\s+)?({TOKEN})\b", text)
        if m:
            point = m.group(1)
        m2 = re.search(rf"\b{key}\w*(?:\s+line)?\s+(?:to|on|with)\s+(.+?)(?=\s+(?:from|through|at|via)\b|$)", text)
        if m2:
            got = self.ref(m2.group(1))
            base = got[0] if got else None
        if point is None or base is None:
            raise _Skip(f"{key} needs a base line and a point")
        return base, point

    def perpendicular(self, text: str) -> list[Step]:
        base, p = self._base_and_point(text, "perpendicular")
        return [self.emit(ToolKind.PERPENDICULAR, [base, p], [self.fresh()])]

    def parallel(self, text: str) -> list[Step]:
        base, p = self._base_and_point(text, "parallel")
        return [self.emit(ToolKind.PARALLEL, [base, p], [self.fresh()])]

    def angle_bisector(self, text: str) -> list[Step]:
        m = re.search(r"\bbisector\s+of\b(.*)$", text)
        pts = _point_atoms(_tokens(m.group(1) if m else text))
        if len(pts) != 3:
            raise _Skip("angle bisector needs an angle named by three points")
        return [self.emit(ToolKind.ANGLE_BISECTOR, pts, [self.fresh()])]

    def point(self, text: str) -> list[Step]:
        m = re.search(rf"\bpoint\s+({TOKEN})(?:\s+(?:on|lying\s+on)\s+(.+))?$", text)
        if not m:
            raise _Skip("point needs a name")
        name, where = m.group(1), m.group(2)
        if where:
            got = self.ref(where)
            if not got:
                raise _Skip("cannot resolve the object for the point")
            return [self.emit(ToolKind.POINT_ON, [got[0]], [name])]
        return [self.emit(ToolKind.FREE_POINT, [], [name])]

    def _outputs(self, text: str) -> tuple[str, list[str]]:
        pats = [
            rf"\b(?:as|at)\s+(?:the\s+)?(?:points?\s+)?({TOKEN})(?:\s*(?:,|and)\s*(?:point\s+)?({TOKEN}))?\s*$",
            rf"\b(?:call|name|label)\s+(?:it|them|this(?:\s+point)?)\s+(?:points?\s+)?({TOKEN})(?:\s*(?:,|and)\s*({TOKEN}))?",
            rf"\b(?:find|mark|label)\s+(?:the\s+)?points?\s+({TOKEN})(?:\s*(?:,|and)\s*({TOKEN}))?\b",
        ]
        for pat in pats:
            m = re.search(pat, text)
            if m:
                outs = [g for g in m.groups() if g]
                rest = text[: m.start()] + " " + text[m.end() :]
                return rest, outs
        raise _Skip("intersection needs a name for the new point")

    def _pick(self, text: str) -> tuple[str, Pick | None]:
        m = _PICK_RE.search(text)
        if not m:
            return text, None
        if m.group("near"):
            pick = Pick("near", (m.group("n"),))
        elif m.group("far"):
            pick = Pick("far", (m.group("f"),))
        else:
            atoms = _point_atoms([m.group("s")])
            if len(atoms) != 2:
                return text, None
            pick = Pick(m.group("side"), tuple(atoms))
        return text[: m.start()] + text[m.end() :], pick

    def intersection(self, text: str) -> list[Step]:
        text, pick = self._pick(text)
        rest, outs = self._outputs(text)
        m = re.search(r"\bintersection(?:\s+points?)?\s+(?:of|between|with)\b(.*)$", rest)
        body = m.group(1) if m else rest
        body = re.sub(r",?\s*which\s+is\s+the\b", " ", body)
        body = re.sub(r"\bintersection\s+of\b", " ", body)
        parts = [p for p in re.split(r"\s*,?\s+\band\b\s+|\s*,\s*", body) if p.strip()]
        refs: list[str] = []
        for part in parts:
            got = self.ref(part)
            if got:
                refs.extend(got)
        if len(refs) != 2:
            raise _Skip("intersection needs exactly two objects")
        if pick is not None and len(outs) != 1:
            pick = None
        return [self.emit(ToolKind.INTERSECT, refs, outs, pick)]

    def clause(self, main: str, text: str) -> list[Step]:
        """Expand ``AB at E and CD at F`` relative to the object ``main``."""
        words = re.findall(rf"{TOKEN}|[A-Za-z']+|,", text)
        steps: list[Step] = []
        ref_words: list[str] = []
        i = 0
        while i < len(words):
            w = words[i]
            if w == "at" and ref_words:
                j = i + 1
                while j < len(words) and words[j].lower() in ("point", "points", "the"):
                    j += 1
                if j >= len(words) or not _TOKEN_RE.fullmatch(words[j]):
                    raise _Skip("intersection clause without a point name")
                outs = [words[j]]
                j += 1
                if (
                    j + 1 < len(words)
                    and words[j] == "and"
                    and _TOKEN_RE.fullmatch(words[j + 1])
                    and (j + 2 >= len(words) or words[j + 2] in (",", "and"))
                ):
                    outs.append(words[j + 1])
                    j += 2
                phrase = " ".join(w for w in ref_words if w not in (",", "and"))
                got = self.ref(phrase)
                if not got:
                    raise _Skip(f"cannot resolve {phrase!r}")
                steps.append(self.emit(ToolKind.INTERSECT, [main, got[0]], outs))
                ref_words = []
                i = j
                continue
            if w in (",",) or (w == "and" and not ref_words):
                i += 1
                continue
            ref_words.append(w)
            i += 1
        return steps

    # dispatch ---------------------------------------------------------------

    def handle(self, tool: ToolKind, body: str) -> list[Step]:
        sentences = _split_sentences(body)
        if not sentences:
            raise _Skip("empty step")
        head, *tails = re.split(r"\s*;\s*", sentences[0])
        sentences[1:1] = tails
        first = _SIDE_QUALIFIER_RE.sub("", head)
        self.next_name = None
        m = re.search(r",?\s+(?:named|called)\s+([A-Za-z][A-Za-z0-9_']*)\s*$", first)
        if m and tool not in (ToolKind.INTERSECT, ToolKind.POINT_ON, None):
            first = first[: m.start()]
            if not self.taken(m.group(1)):
                self.next_name = m.group(1)
        main_text, clause = first, None
        m = re.search(r",?\s*\bintersecting\b\s*(?:with\s+)?", first)
        if m and tool is not ToolKind.INTERSECT:
            main_text, clause = first[: m.start()], first[m.end() :]
        if tool in (ToolKind.LINE, ToolKind.RAY, ToolKind.SEGMENT):
            steps = self.line_like(main_text)
        elif tool is ToolKind.CIRCLE:
            steps = self.circle(main_text, compass=False)
        elif tool is ToolKind.COMPASS:
            steps = self.circle(main_text, compass=True)
        elif tool is ToolKind.PERP_BISECTOR:
            steps = self.perp_bisector(main_text)
        elif tool is ToolKind.PERPENDICULAR:
            steps = self.perpendicular(main_text)
        elif tool is ToolKind.PARALLEL:
            steps = self.parallel(main_text)
        elif tool is ToolKind.ANGLE_BISECTOR:
            if re.search(r"\bperpendicular\b", main_text.lower()):
                steps = self.perp_bisector(main_text)
            else:
                steps = self.angle_bisector(main_text)
        elif tool is ToolKind.INTERSECT:
            steps = self.intersection(main_text)
        elif tool is ToolKind.POINT_ON:
            steps = self.point(main_text)
        else:
            raise _Skip(f"unsupported tool {tool.value}")
        main = steps[-1].outputs[0]
        if clause:
            steps += self.clause(main, clause)
        for extra in sentences[1:]:
            steps += self.follow_up(main, extra)
        return steps

    def follow_up(self, main: str, sentence: str) -> list[Step]:
        m = re.search(rf"\blet\s+({TOKEN})\s+be\s+(?:a|an|any)\b.*?\bpoint\s+on\s+(.+)$", sentence)
        if m:
            where = m.group(2).strip()
            got = [main] if re.match(r"(?:that|this|it)\b", where, re.I) else self.ref(where)
            if got:
                return [self.emit(ToolKind.POINT_ON, [got[0]], [m.group(1)])]
        m = re.search(rf"\bintersection\s+with\s+(.+?)\s+as\s+(?:point\s+)?({TOKEN})\b", sentence)
        if m:
            got = self.ref(m.group(1))
            if got:
                return [self.emit(ToolKind.INTERSECT, [main, got[0]], [m.group(2)])]
        m = re.search(r"^(?P<subj>.*?)\bintersects?\b(?:\s+with)?\s+(?P<rest>.+)$", sentence)
        if m:
            subj = self.ref(m.group("subj")) if m.group("subj").strip() else None
            return self.clause(subj[0] if subj else main, m.group("rest"))
        return []


class _Skip(Exception):
    pass


def _is_point_name(tok: str) -> bool:
    return bool(re.fullmatch(r"[A-Z][0-9']*", tok))


def _classify(line: str) -> tuple[ToolKind | None, int | None, str] | None:
    m = _PREFIX_RE.match(line)
    if not m:
        return None
    raw = m.group("tag") or m.group("name")
    num = m.group("num") or m.group("num2")
    ok, tool = _tool_from_name(raw)
    if not ok:
        return None
    return tool, int(num) if num else None, m.group("body")


def extract_report(text: str, known: Iterable[str] = ()) -> ExtractionReport:
    ex = _Extractor(known)
    report = ExtractionReport(Program())
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        hit = _classify(line)
        if hit is None:
            report.skipped.append(Skipped(lineno, line, "no tool prefix"))
            continue
        tool, num, body = hit
        if tool is None:
            report.ignored.append(Skipped(lineno, line, "move tool has no construction effect"))
            continue
        mark = ex.snapshot()
        try:
            steps = ex.handle(tool, body)
        except _Skip as exc:
            ex.restore(mark)
            report.skipped.append(Skipped(lineno, line, str(exc)))
            continue
        first = len(ex.steps) - len(steps)
        report.spans.append(Span(lineno, num, list(range(first, len(ex.steps)))))
    report.program = Program(tuple(ex.steps))
    return report


def extract(text: str, known: Iterable[str] = ()) -> Program:
    """Best-effort program from free text; raises EmptyExtraction if nothing parses."""
    report = extract_report(text, known)
    if not report.program.steps:
        raise EmptyExtraction("no construction step could be extracted")
    return report.program
