"""Problem definitions, seeded instantiation and pack-ordered knowledge bases."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator

from .dsl import RESERVED_PREFIX, DslError, Program, names_in, parse, static_validate
from .geometry import DEFAULT_TOL, Point, Scene, Tolerances, ToolKind

MAX_RESAMPLES = 100
MIN_SEPARATION = 0.02
BOX_MARGIN = 0.05

# tools every problem may use regardless of its whitelist
ALWAYS_ALLOWED = frozenset({ToolKind.INTERSECT, ToolKind.POINT_ON, ToolKind.FREE_POINT})
_LINE_FAMILY = (ToolKind.RAY, ToolKind.SEGMENT)

PARAM_KINDS = {
    "point_in_box": None,
    "segment": 2,
    "length_range": 2,
    "rectangle": 4,
    "square": 4,
    "triangle": 3,
    "angle": 3,
    "circle": 2,
}


class BankError(Exception):
    pass


class SchemaError(BankError):
    def __init__(self, field_name: str, location: str, message: str = "invalid"):
        super().__init__(f"{location}: {field_name}: {message}")
        self.field = field_name
        self.location = location


class DuplicateId(BankError):
    pass


class ConstraintUnsatisfiable(BankError):
    pass


@dataclass(frozen=True)
class Param:
    kind: str
    names: tuple[str, ...]
    options: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    id: str
    pack: str
    title: str
    statement: str
    tools: frozenset[ToolKind]
    params: tuple[Param, ...]
    init_program: Program
    references: tuple[Program, ...]
    goals: tuple[str, ...]
    target: str
    hidden: tuple[str, ...] = ()

    def allows(self, tool: ToolKind) -> bool:
        tool = ToolKind(tool)
        if tool in ALWAYS_ALLOWED or tool in self.tools:
            return True
        return tool in _LINE_FAMILY and ToolKind.LINE in self.tools

    @property
    def tool_whitelist(self) -> list[ToolKind]:
        """Declared tools, in enum order."""
        return [t for t in ToolKind if t in self.tools]

    def param_names(self) -> list[str]:
        return [n for p in self.params for n in p.names]

    def initial_labels(self) -> set[str]:
        labels = set(self.param_names()) | set(self.init_program.outputs())
        return labels - set(self.hidden)

    def to_dict(self) -> dict[str, Any]:
        from .dsl import render

        return {
            "id": self.id,
            "pack": self.pack,
            "title": self.title,
            "statement": self.statement,
            "tools": [t.value for t in self.tool_whitelist],
            "init": {
                "params": [{"kind": p.kind, "names": list(p.names), **p.options} for p in self.params],
                "program": render(self.init_program),
                **({"hidden": list(self.hidden)} if self.hidden else {}),
            },
            "references": [render(r) for r in self.references],
            "goals": list(self.goals),
            "target": self.target,
        }


@dataclass(frozen=True)
class Bank:
    format_version: int
    pack_order: tuple[str, ...]
    seed_ids: tuple[str, ...]
    problems: tuple[ProblemSpec, ...]

    def __iter__(self) -> Iterator[ProblemSpec]:
        return iter(self.problems)

    def __len__(self) -> int:
        return len(self.problems)

    def __getitem__(self, i: int) -> ProblemSpec:
        return self.problems[i]

    def get(self, problem_id: str) -> ProblemSpec:
        for p in self.problems:
            if p.id == problem_id:
                return p
        raise KeyError(problem_id)

    @property
    def seeds(self) -> list[ProblemSpec]:
        return [self.get(i) for i in self.seed_ids]

    def pack_index(self, pack: str) -> int:
        return self.pack_order.index(pack)

    def in_packs(self, packs: Iterable[str]) -> list[ProblemSpec]:
        wanted = set(packs)
        return [p for p in self.problems if p.pack in wanted]


# --- loading -----------------------------------------------------------------------


def _req(obj: dict, key: str, kind: type | tuple, where: str):
    if key not in obj:
        raise SchemaError(key, where, "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(key, where, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _program(text: Any, key: str, where: str) -> Program:
    if isinstance(text, list):
        text = "\n".join(text)
    if not isinstance(text, str):
        raise SchemaError(key, where, "expected a program string")
    try:
        return parse(text)
    except DslError as exc:
        raise SchemaError(key, where, str(exc)) from exc


def _params(raw: list, where: str) -> tuple[Param, ...]:
    out = []
    for i, p in enumerate(raw):
        loc = f"{where}.init.params[{i}]"
        if not isinstance(p, dict):
            raise SchemaError("params", loc, "expected an object")
        kind = _req(p, "kind", str, loc)
        if kind not in PARAM_KINDS:
            raise SchemaError("kind", loc, f"unknown parameter kind {kind!r}")
        names = p.get("names", [p["name"]] if "name" in p else None)
        if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
            raise SchemaError("names", loc, "expected a list of point names")
        need = PARAM_KINDS[kind]
        if need is not None and len(names) != need:
            raise SchemaError("names", loc, f"{kind} needs {need} names")
        options = {k: v for k, v in p.items() if k not in ("kind", "names", "name")}
        out.append(Param(kind, tuple(names), options))
    return tuple(out)


def _tools(raw: list, where: str) -> frozenset[ToolKind]:
    try:
        return frozenset(ToolKind(t) for t in raw)
    except ValueError as exc:
        raise SchemaError("tools", where, str(exc)) from exc


def _validate(spec: ProblemSpec, where: str) -> None:
    params = set(spec.param_names())
    for diag in static_validate(spec.init_program, params):
        raise SchemaError("init.program", where, str(diag))
    initial = spec.initial_labels()
    for n, ref in enumerate(spec.references):
        loc = f"{where}.references[{n}]"
        for diag in static_validate(ref, initial):
            raise SchemaError("references", loc, str(diag))
        for t in ref.kinds:
            if not spec.allows(t):
                raise SchemaError("references", loc, f"tool {t.value} is outside the whitelist")
        outs = set(ref.outputs())
        for g in spec.goals:
            if g not in outs:
                raise SchemaError("goals", loc, f"goal {g} is not bound by the reference")
    idents = set(params) | spec.init_program.identifiers()
    for ref in spec.references:
        idents |= ref.identifiers()
    for ident in idents:
        if ident.startswith(RESERVED_PREFIX):
            raise SchemaError("identifier", where, f"{ident!r} uses the reserved prefix")
    if spec.target not in names_in(spec.statement):
        raise SchemaError("target", where, f"{spec.target!r} does not occur in the statement")


def spec_from_dict(p: dict, where: str = "problem") -> ProblemSpec:
    pid = _req(p, "id", str, where)
    where = f"{where}[{pid}]"
    init = _req(p, "init", dict, where)
    refs = _req(p, "references", list, where)
    if not refs:
        raise SchemaError("references", where, "at least one reference is required")
    spec = ProblemSpec(
        id=pid,
        pack=_req(p, "pack", str, where),
        title=_req(p, "title", str, where),
        statement=_req(p, "statement", str, where),
        tools=_tools(_req(p, "tools", list, where), where),
        params=_params(init.get("params", []), where),
        init_program=_program(init.get("program", ""), "init.program", where),
        references=tuple(_program(r, "references", where) for r in refs),
        goals=tuple(_req(p, "goals", list, where)),
        target=_req(p, "target", str, where),
        hidden=tuple(init.get("hidden", [])),
    )
    _validate(spec, where)
    return spec


def bank_from_dict(data: dict, source: str = "<bank>") -> Bank:
    version = _req(data, "format_version", int, source)
    order = tuple(_req(data, "pack_order", list, source))
    problems = []
    seen: set[str] = set()
    for i, raw in enumerate(_req(data, "problems", list, source)):
        if not isinstance(raw, dict):
            raise SchemaError("problems", f"{source}.problems[{i}]", "expected an object")
        spec = spec_from_dict(raw, f"{source}.problems[{i}]")
        if spec.id in seen:
            raise DuplicateId(spec.id)
        if spec.pack not in order:
            raise SchemaError("pack", f"{source}.problems[{i}]", f"{spec.pack!r} is not in pack_order")
        seen.add(spec.id)
        problems.append(spec)
    seeds = tuple(data.get("seeds", []))
    for s in seeds:
        if s not in seen:
            raise SchemaError("seeds", source, f"unknown seed problem {s!r}")
    return Bank(version, order, seeds, tuple(problems))


def default_bank_path() -> Path:
    return Path(str(resources.files("euclidkit") / "data" / "problems.json"))


def load_bank(path: str | Path | None = None) -> Bank:
    """Load and validate a bank file (the bundled corpus when ``path`` is None)."""
    path = Path(path) if path is not None else default_bank_path()
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return bank_from_dict(data, str(path))


# --- instantiation -----------------------------------------------------------------


def _polar(o: tuple[float, float], r: float, th: float) -> tuple[float, float]:
    return (o[0] + r * math.cos(th), o[1] + r * math.sin(th))


def _range(opts: dict, key: str, default: tuple[float, float]) -> tuple[float, float]:
    lo, hi = opts.get(key, default)
    return float(lo), float(hi)


def _angle_at(v, a, b) -> float:
    ax, ay = a[0] - v[0], a[1] - v[1]
    bx, by = b[0] - v[0], b[1] - v[1]
    return abs(math.degrees(math.atan2(ax * by - ay * bx, ax * bx + ay * by)))


def _sample_param(p: Param, rng: random.Random) -> tuple[dict[str, tuple[float, float]], list]:
    """Raw coordinates for one parameter, plus bounding extents (circles add discs)."""
    o = (rng.random(), rng.random())
    th = rng.uniform(0, 2 * math.pi)
    opts = p.options
    pts: dict[str, tuple[float, float]] = {}
    discs: list[tuple[tuple[float, float], float]] = []
    if p.kind == "point_in_box":
        for n in p.names:
            pts[n] = (rng.random(), rng.random())
    elif p.kind in ("segment", "length_range"):
        a, b = p.names
        pts[a] = o
        pts[b] = _polar(o, rng.uniform(*_range(opts, "length", (0.4, 0.8))), th)
    elif p.kind in ("rectangle", "square"):
        a, b, c, d = p.names
        w = rng.uniform(0.4, 0.8)
        aspect = 1.0 if p.kind == "square" else rng.uniform(*_range(opts, "aspect", (1.3, 2.0)))
        h = w / aspect
        pts[a] = o
        pts[b] = _polar(o, w, th)
        pts[d] = _polar(o, h, th + math.pi / 2)
        pts[c] = _polar(pts[b], h, th + math.pi / 2)
    elif p.kind == "triangle":
        min_angle = float(opts.get("min_angle", 25))
        for _ in range(MAX_RESAMPLES):
            tri = [(rng.random(), rng.random()) for _ in range(3)]
            angles = [_angle_at(tri[i], tri[i - 1], tri[i - 2]) for i in range(3)]
            if min(angles) >= min_angle:
                break
        else:
            raise ConstraintUnsatisfiable("no admissible triangle")
        pts.update(zip(p.names, tri))
    elif p.kind == "angle":
        b, v, c = p.names
        alpha = math.radians(rng.uniform(*_range(opts, "degrees", (30, 150))))
        pts[v] = o
        pts[b] = _polar(o, rng.uniform(0.5, 0.9), th)
        pts[c] = _polar(o, rng.uniform(0.5, 0.9), th + alpha)
    elif p.kind == "circle":
        center, through = p.names
        r = rng.uniform(*_range(opts, "radius", (0.2, 0.4)))
        pts[center] = o
        pts[through] = _polar(o, r, th)
        discs.append((o, r))
    return pts, discs


def _normalizer(pts: dict, discs: list, rng: random.Random) -> tuple[float, tuple[float, float]]:
    xs = [p[0] for p in pts.values()] + [c[0] + s * r for c, r in discs for s in (-1, 1)]
    ys = [p[1] for p in pts.values()] + [c[1] + s * r for c, r in discs for s in (-1, 1)]
    w, h = max(xs) - min(xs), max(ys) - min(ys)
    extent = max(w, h, 1e-12)
    scale = rng.uniform(0.6, 1.0 - 2 * BOX_MARGIN) / extent
    cx, cy = (max(xs) + min(xs)) / 2, (max(ys) + min(ys)) / 2
    return scale, (0.5 - scale * cx, 0.5 - scale * cy)


def _in_box(p: Point) -> bool:
    return -1e-12 <= p.x <= 1 + 1e-12 and -1e-12 <= p.y <= 1 + 1e-12


def instantiate(spec: ProblemSpec, seed: int, tol: Tolerances = DEFAULT_TOL, check: bool = True) -> Scene:
    """Seeded instance of ``spec``, normalized into the unit box.

    Parameters are drawn, mapped into the unit box by a similarity, and the
    init program is run. Draws are repeated when points crowd together, leave
    the box, or (with ``check``) when a reference program fails on the
    instance.
    """
    from .verifier import StepError, execute

    rng = random.Random(f"{spec.id}:{seed}")
    for _ in range(MAX_RESAMPLES):
        raw: dict[str, tuple[float, float]] = {}
        discs: list = []
        for p in spec.params:
            pts, d = _sample_param(p, rng)
            raw.update(pts)
            discs += d
        scene = Scene(rng_seed=rng.getrandbits(32))
        if raw:
            scale, (sx, sy) = _normalizer(raw, discs, rng)
            for name, (x, y) in raw.items():
                scene.add(name, Point(scale * x + sx, scale * y + sy))
        pts = scene.points()
        if any(p.dist(q) < MIN_SEPARATION for i, p in enumerate(pts) for q in pts[i + 1 :]):
            continue
        try:
            execute(spec.init_program, scene, tol=tol)
        except StepError:
            continue
        if not all(_in_box(p) for p in scene.points()):
            continue
        if spec.hidden:
            scene = scene.drop(spec.hidden)
        if check:
            try:
                for ref in spec.references:
                    execute(ref, scene.copy(), tol=tol)
            except StepError:
                continue
        return scene
    raise ConstraintUnsatisfiable(f"{spec.id}: no admissible instance after {MAX_RESAMPLES} draws")


# --- knowledge base ----------------------------------------------------------------


@dataclass(frozen=True)
class KnowledgeEntry:
    spec: ProblemSpec
    solution: Program


@dataclass(frozen=True)
class KnowledgeBase:
    entries: tuple[KnowledgeEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.spec.id for e in self.entries]


def knowledge_for(current: ProblemSpec, bank: Bank) -> KnowledgeBase:
    """Seed problems plus every problem from a strictly earlier pack."""
    rank = bank.pack_index(current.pack)
    chosen: list[ProblemSpec] = []
    seen = {current.id}
    for spec in bank.seeds + [p for p in bank if bank.pack_index(p.pack) < rank]:
        if spec.id not in seen:
            seen.add(spec.id)
            chosen.append(spec)
    return KnowledgeBase(tuple(KnowledgeEntry(s, s.references[0]) for s in chosen))
