"""Prompt assembly: adaptive few-shot selection, renaming, scene descriptions and bundles."""
from __future__ import annotations

import hashlib
import re
import string
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .bank import KnowledgeBase, KnowledgeEntry, Param, ProblemSpec
from .dsl import CollisionError, Program, names_in, rename_program, rename_text, render
from .geometry import (
    DEFAULT_TOL,
    Circle,
    GeoObject,
    Line,
    Point,
    Ray,
    Scene,
    Segment,
    Tolerances,
    ToolKind,
    _cross,
    _dot,
    residual,
)


class AgentRole(str, Enum):
    SOLVER_NL = "solver_nl"
    SOLVER_GT = "solver_gt"
    VALIDATOR_NL = "validator_nl"
    VALIDATOR_GT = "validator_gt"

    @property
    def is_solver(self) -> bool:
        return self in (AgentRole.SOLVER_NL, AgentRole.SOLVER_GT)

    @property
    def domain(self) -> str:
        return self.value.split("_")[1]


# --- resources ---------------------------------------------------------------------


@lru_cache(maxsize=None)
def load_resource(name: str) -> str:
    return (resources.files("euclidkit") / "resources" / name).read_text(encoding="utf-8")


def role_preamble(role: AgentRole) -> str:
    return load_resource(f"roles/{AgentRole(role).value}.txt").strip()


def elements_excerpt() -> str:
    return load_resource("elements.txt").strip()


def incorrect_examples(domain: str) -> list[str]:
    text = load_resource(f"incorrect_{domain}.txt")
    return [block.strip() for block in text.split("\n---\n") if block.strip()]


TOOL_NAMES = {
    ToolKind.LINE: "Line Tool",
    ToolKind.RAY: "Line Tool",
    ToolKind.SEGMENT: "Line Tool",
    ToolKind.CIRCLE: "Circle Tool",
    ToolKind.COMPASS: "Compass Tool",
    ToolKind.PERP_BISECTOR: "Perpendicular Bisector Tool",
    ToolKind.PERPENDICULAR: "Perpendicular Tool",
    ToolKind.PARALLEL: "Parallel Tool",
    ToolKind.ANGLE_BISECTOR: "Angle Bisector Tool",
    ToolKind.INTERSECT: "Intersect Tool",
    ToolKind.POINT_ON: "Point Tool",
    ToolKind.FREE_POINT: "Point Tool",
}


@lru_cache(maxsize=None)
def tool_descriptions() -> dict[str, str]:
    out = {}
    for line in load_resource("tools.txt").splitlines():
        if ":" in line:
            name, desc = line.split(":", 1)
            out[name.strip()] = desc.strip()
    return out


def tool_names(spec: ProblemSpec) -> list[str]:
    """Display names of the declared tools, deduplicated, in enum order."""
    seen: list[str] = []
    for t in spec.tool_whitelist:
        if TOOL_NAMES[t] not in seen:
            seen.append(TOOL_NAMES[t])
    return seen


def tool_list(spec: ProblemSpec) -> str:
    return "[" + ", ".join(tool_names(spec)) + "]"


# --- similarity --------------------------------------------------------------------


class SimilarityBackend(Protocol):
    def score(self, a: str, b: str) -> float: ...


class TfidfSimilarity:
    """Cosine similarity of word TF-IDF vectors.

    The IDF weights come from ``corpus`` when given; otherwise from the pair
    being compared, which keeps the score symmetric either way.
    """

    def __init__(self, corpus: Iterable[str] | None = None):
        from sklearn.feature_extraction.text import TfidfVectorizer

        self._make = lambda: TfidfVectorizer(lowercase=True, token_pattern=r"(?u)\b\w+\b")
        self._fitted = None
        docs = list(corpus or [])
        if docs:
            self._fitted = self._make().fit(docs)

    def score(self, a: str, b: str) -> float:
        from sklearn.metrics.pairwise import cosine_similarity

        vec = self._fitted
        if vec is None:
            try:
                vec = self._make().fit([a, b])
            except ValueError:  # no tokens at all
                return 0.0
        m = vec.transform([a, b])
        return float(min(1.0, max(0.0, cosine_similarity(m[0], m[1])[0, 0])))


class EmbeddingSimilarity:
    """Cosine similarity of sentence embeddings from any ``embed`` callable."""

    def __init__(self, embed: Callable[[list[str]], Sequence[Sequence[float]]]):
        self.embed = embed

    @classmethod
    def sentence_transformer(cls, model: str = "all-MiniLM-L6-v2") -> EmbeddingSimilarity:
        from sentence_transformers import SentenceTransformer

        st = SentenceTransformer(model)
        return cls(lambda texts: st.encode(texts, normalize_embeddings=True).tolist())

    def score(self, a: str, b: str) -> float:
        u, v = self.embed([a, b])
        dot = sum(x * y for x, y in zip(u, v))
        nu = sum(x * x for x in u) ** 0.5
        nv = sum(x * x for x in v) ** 0.5
        if nu == 0 or nv == 0:
            return 0.0
        return min(1.0, max(0.0, dot / (nu * nv)))


# --- adaptive few-shot -------------------------------------------------------------


@dataclass(frozen=True)
class AdaptiveConfig:
    sim_threshold: float = 0.5
    prefilter_cap: int = 15
    final_k: int = 5
    mode: str = "ST"

    def __post_init__(self) -> None:
        if not 0 <= self.sim_threshold <= 1:
            raise ValueError("sim_threshold must lie in [0, 1]")
        if not 1 <= self.final_k <= self.prefilter_cap:
            raise ValueError("need 1 <= final_k <= prefilter_cap")
        if self.mode not in ("ST", "Self"):
            raise ValueError("mode must be ST or Self")


def similarity_text(spec: ProblemSpec) -> str:
    return f"{spec.statement} Available Tools: {tool_list(spec)}"


def stage_one(
    kb: KnowledgeBase, problem: ProblemSpec, cfg: AdaptiveConfig, backend: SimilarityBackend
) -> list[tuple[KnowledgeEntry, float]]:
    """Entries scoring above the threshold, best first, capped at ``prefilter_cap``."""
    query = similarity_text(problem)
    scored = [(e, backend.score(query, similarity_text(e.spec))) for e in kb if e.spec.id != problem.id]
    kept = [pair for pair in scored if pair[1] > cfg.sim_threshold]
    kept.sort(key=lambda pair: -pair[1])  # stable: ties keep knowledge-base order
    return kept[: cfg.prefilter_cap]


_ID_RE = re.compile(r"\d+")


def self_pick_prompt(problem: ProblemSpec, candidates: Sequence[KnowledgeEntry], k: int) -> list[dict[str, str]]:
    lines = [
        f"Current problem: {problem.statement}",
        f"Available Tools: {tool_list(problem)}",
        "",
        "Solved problems:",
    ]
    for i, e in enumerate(candidates, 1):
        lines.append(f"{i}. {e.spec.statement} Available Tools: {tool_list(e.spec)}")
    lines += ["", f"Reply with the numbers of the {k} solved problems that help most, most useful first, separated by commas."]
    return [{"role": "user", "content": "\n".join(lines)}]


def parse_pick(reply: str, m: int, k: int) -> list[int] | None:
    """0-based indices named in ``reply``, or None unless exactly ``k`` valid unique ids appear first."""
    ids: list[int] = []
    for tok in _ID_RE.findall(reply):
        i = int(tok)
        if not 1 <= i <= m or i - 1 in ids:
            return None
        ids.append(i - 1)
        if len(ids) == k:
            return ids
    return None


def adaptive_select(
    kb: KnowledgeBase,
    problem: ProblemSpec,
    cfg: AdaptiveConfig,
    backend: SimilarityBackend,
    llm=None,
    seeds: Sequence[KnowledgeEntry] | None = None,
    temperature: float = 0.0,
) -> list[KnowledgeEntry]:
    """Pick few-shot examples for ``problem``.

    An empty knowledge base falls back to the seed problems (from the
    bundled bank unless ``seeds`` is given).
    """
    if cfg.mode == "Self" and llm is None:
        raise ValueError("Self mode needs a chat backend")
    if len(kb) == 0:
        if seeds is None:
            from .bank import load_bank

            seeds = [KnowledgeEntry(s, s.references[0]) for s in load_bank().seeds]
        return [e for e in seeds if e.spec.id != problem.id]
    pool = [e for e, _ in stage_one(kb, problem, cfg, backend)]
    k = min(cfg.final_k, len(pool))
    if cfg.mode == "ST" or k == 0:
        return pool[:k]
    reply = llm.complete(self_pick_prompt(problem, pool, k), temperature)
    picked = parse_pick(reply, len(pool), k)
    if picked is None:
        return pool[:k]
    return [pool[i] for i in picked]


# --- renaming ----------------------------------------------------------------------


@dataclass(frozen=True)
class RenamePolicy:
    kind: str = "original"  # original | shift | x
    k: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("original", "shift", "x"):
            raise ValueError(f"unknown rename policy {self.kind!r}")
        if self.kind == "shift" and self.k not in (1, 2, 3):
            raise ValueError("shift must be 1, 2 or 3")

    @classmethod
    def parse(cls, text: str) -> RenamePolicy:
        t = text.strip().lower()
        if t in ("x", "+x"):
            return cls("x")
        if t in ("original", "+0", "0"):
            return cls("original")
        if t.lstrip("+").isdigit():
            return cls("shift", int(t.lstrip("+")))
        raise ValueError(f"unknown rename policy {text!r}")

    @property
    def label(self) -> str:
        return {"original": "+0", "x": "X"}.get(self.kind, f"+{self.k}")


@dataclass(frozen=True)
class RenameResult:
    spec: ProblemSpec
    mapping: dict[str, str]
    inverse: dict[str, str]
    note: str = ""


def _letter_after(start: str, avoid: set[str]) -> str:
    letters = string.ascii_uppercase
    i = letters.index(start)
    for j in range(26):
        cand = letters[(i + j) % 26]
        if cand not in avoid:
            return cand
    raise CollisionError("no free capital letter")


def rename_spec(spec: ProblemSpec, mapping: Mapping[str, str]) -> ProblemSpec:
    """Apply an identifier map to every name-bearing field of ``spec``."""
    m = dict(mapping)
    r = lambda name: rename_text(name, m)  # noqa: E731
    return replace(
        spec,
        statement=rename_text(spec.statement, m),
        params=tuple(Param(p.kind, tuple(r(n) for n in p.names), p.options) for p in spec.params),
        init_program=rename_program(spec.init_program, m),
        references=tuple(rename_program(ref, m) for ref in spec.references),
        goals=tuple(r(g) for g in spec.goals),
        target=r(spec.target),
        hidden=tuple(r(h) for h in spec.hidden),
    )


def spec_names(spec: ProblemSpec) -> set[str]:
    return names_in(spec.statement, spec.init_program, spec.references, spec.param_names(), spec.goals)


def apply_rename(policy: RenamePolicy, spec: ProblemSpec) -> RenameResult:
    """Rename the target point of ``spec`` according to ``policy``.

    When the wanted letter is taken, the next free letter is used and the
    substitution is reported in ``note``.
    """
    if policy.kind == "original":
        return RenameResult(spec, {}, {})
    target = spec.target
    if len(target) != 1 or target not in string.ascii_uppercase:
        raise CollisionError(f"target {target!r} is not a single capital letter")
    taken = spec_names(spec)
    wanted = "X" if policy.kind == "x" else string.ascii_uppercase[(string.ascii_uppercase.index(target) + policy.k) % 26]
    chosen = _letter_after(wanted, taken)
    note = "" if chosen == wanted else f"{wanted} is taken; using {chosen}"
    mapping = {target: chosen}
    return RenameResult(rename_spec(spec, mapping), mapping, {chosen: target}, note)


def restore(result: RenameResult) -> ProblemSpec:
    return rename_spec(result.spec, result.inverse)


# --- visual relations --------------------------------------------------------------


@dataclass(frozen=True)
class Relation:
    kind: str  # parallel | perpendicular | equal_length | incidence | isolated
    subjects: tuple[str, ...]
    objects: tuple[GeoObject, ...]
    text: str


@dataclass
class SceneDescription:
    shapes: list[str] = field(default_factory=list)
    points: list[str] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)

    def render(self) -> str:
        out = ["Scene description:"]
        for title, items in (
            ("Shapes", self.shapes),
            ("Points", self.points),
            ("Lines", self.lines),
            ("Relations", [r.text for r in self.relations]),
        ):
            out.append(f"{title}:")
            out.extend(items)
        return "\n".join(out)


_SHAPE_NAMES = {"rectangle": "Rectangle", "square": "Square", "triangle": "Triangle"}
_LINEAR_TOOLS = {ToolKind.LINE: "line", ToolKind.RAY: "ray", ToolKind.SEGMENT: "segment"}


def _fmt(p: Point) -> str:
    return f"({p.x:.3f}, {p.y:.3f})"


def _dir(obj: GeoObject) -> tuple[float, float]:
    return obj.dir


def scene_relations(scene: Scene, spec: ProblemSpec, tol: Tolerances = DEFAULT_TOL) -> SceneDescription:
    """Deterministic Shapes/Points/Lines/Relations description of an instance.

    Shapes come only from declared parameters; relations are evaluated on the
    coordinates with ``tol.eps_match``.
    """
    eps = tol.eps_match
    desc = SceneDescription()
    present = set(scene.labels)
    declared = {n: i for i, n in enumerate(spec.param_names())}
    ordered = sorted(scene.points(), key=lambda q: declared.get(q.label, len(declared)))
    pts = {q.label: q for q in ordered}
    # named linear objects: (name, object, defining point labels)
    linear: list[tuple[str, GeoObject, tuple[str, ...]]] = []
    circles: list[tuple[str, Circle, tuple[str, ...]]] = []
    role: dict[str, str] = {}
    shape_names: list[str] = []

    for p in spec.params:
        names = [n for n in p.names if n in present]
        if p.kind in _SHAPE_NAMES and len(names) == len(p.names):
            shape = f"{p.kind} {''.join(names)}"
            shape_names.append(shape)
            desc.shapes.append(f"{_SHAPE_NAMES[p.kind]}: {''.join(names)}")
            for a in names:
                role.setdefault(a, f"vertex of the {shape}")
            for a, b in zip(names, names[1:] + names[:1]):
                linear.append((a + b, Segment(pts[a], pts[b], a + b), (a, b)))
                desc.lines.append(f"{a}{b}: side of the {shape}.")
        elif p.kind == "angle" and len(names) == 3:
            b, v, c = names
            desc.shapes.append(f"Angle: {b}{v}{c}")
            role.setdefault(v, f"vertex of the angle {b}{v}{c}")

    shape_sides = {name for name, _, _ in linear}
    for step in spec.init_program.steps:
        for out in step.outputs:
            if out not in present or out in shape_sides:
                continue
            obj = scene.get(out)
            if step.tool in _LINEAR_TOOLS:
                a, b = step.args
                what = {"line": f"line through {a} and {b}", "ray": f"ray from {a} through {b}", "segment": f"segment from {a} to {b}"}
                linear.append((out, obj, (a, b)))
                desc.lines.append(f"{out}: {what[_LINEAR_TOOLS[step.tool]]}.")
            elif isinstance(obj, Circle):
                center, through = step.args[0], step.args[-1]
                circles.append((out, obj, (center, through)))
                desc.shapes.append(f"Circle {out}: center {center}, radius {obj.radius:.3f}")
                role.setdefault(center, f"center of circle {out}")
            elif isinstance(obj, (Line, Ray, Segment)):
                linear.append((out, obj, tuple(step.args)))
                desc.lines.append(f"{out}: {step.tool.value.replace('_', ' ')} of {', '.join(step.args)}.")

    for name, obj, _ in linear:
        for other, obj2, _ in linear:
            if name >= other:
                continue
            c = abs(_cross(_dir(obj), _dir(obj2)))
            if c < eps:
                desc.relations.append(Relation("parallel", (name, other), (obj, obj2), f"{name} is parallel to {other}."))
            elif abs(_dot(_dir(obj), _dir(obj2))) < eps:
                desc.relations.append(
                    Relation("perpendicular", (name, other), (obj, obj2), f"{name} is perpendicular to {other}.")
                )
    segs = [(n, o) for n, o, _ in linear if isinstance(o, Segment)]
    for i, (n1, s1) in enumerate(segs):
        for n2, s2 in segs[i + 1 :]:
            if abs(s1.length - s2.length) < eps:
                desc.relations.append(
                    Relation(
                        "equal_length", (n1, n2), (s1, s2), f"The length of {n1} is equal to the length of {n2}."
                    )
                )

    attached = set()
    for _, _, defs in linear + circles:
        attached.update(defs)
    for label, p in pts.items():
        incident = []
        for name, obj, defs in linear + circles:
            if label in defs and not isinstance(obj, Circle):
                continue
            if residual(obj, p) < eps:
                incident.append(name)
                what = f"circle {name}" if isinstance(obj, Circle) else name
                desc.relations.append(Relation("incidence", (label, name), (p, obj), f"{label} lies on {what}."))
        if label not in attached and not incident:
            if len(shape_names) == 1:
                text = f"{label} is an isolated point, not connected to any lines of the {shape_names[0]}."
            else:
                text = f"{label} is an isolated point, not connected to any other object."
            desc.relations.append(Relation("isolated", (label,), (p,), text))
            role.setdefault(label, "free point")
        desc.points.append(f"{label}: {role.get(label, 'given point')} at {_fmt(p)}.")
    return desc


def describe_scene(scene: Scene, spec: ProblemSpec, tol: Tolerances = DEFAULT_TOL) -> str:
    return scene_relations(scene, spec, tol).render()


def describe_scene_vlm(backend, scene: Scene, spec: ProblemSpec, temperature: float = 0.0) -> str:
    """Ask a chat backend for the description instead; the deterministic one is passed as context."""
    prompt = (
        f"Problem: {spec.statement}\n"
        f"Given objects:\n{describe_scene(scene, spec)}\n\n"
        "List the shapes, points, lines and relations between them as bullet points "
        "under the headings Shapes:, Points:, Lines: and Relations:."
    )
    return backend.complete([{"role": "user", "content": prompt}], temperature)


# --- bundles -----------------------------------------------------------------------


def render_example(entry: KnowledgeEntry) -> str:
    return (
        f"Problem: {entry.spec.statement}\n"
        f"Available Tools: {tool_list(entry.spec)}\n"
        f"Solution:\n{render(entry.solution, 'prose')}"
    )


@dataclass(frozen=True)
class PromptBundle:
    role: AgentRole
    preamble: str
    examples: tuple[str, ...]
    vrp: str | None
    statement: str
    tools: tuple[str, ...]
    inverse: dict[str, str] = field(default_factory=dict, hash=False)
    context_title: str = "Examples"

    @property
    def text(self) -> str:
        parts = [self.preamble]
        if self.examples:
            parts.append(f"{self.context_title}:\n\n" + "\n\n".join(self.examples))
        if self.vrp is not None:
            parts.append(self.vrp)
        parts.append(f"Problem: {self.statement}")
        parts.append("Available Tools:\n" + "\n".join(self.tools))
        return "\n\n".join(parts)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:16]

    def messages(self, history: Sequence[Mapping[str, str]] = ()) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.text}, *(dict(m) for m in history)]


def build_prompt(
    role: AgentRole,
    spec: ProblemSpec,
    examples: Sequence[KnowledgeEntry],
    vrp: str | None = None,
    policy: RenamePolicy = RenamePolicy(),
) -> PromptBundle:
    """Assemble the prompt for one agent.

    Solvers get the few-shot ``examples``; validators get the propositions
    excerpt and the incorrect-example collection of their domain instead.
    """
    role = AgentRole(role)
    renamed = apply_rename(policy, spec)
    if role.is_solver:
        shots = tuple(render_example(e) for e in examples)
        title = "Examples"
    else:
        shots = (elements_excerpt(), *incorrect_examples(role.domain))
        title = "Reference propositions and incorrect examples"
    descs = tool_descriptions()
    tools = tuple(f"{name}: {descs[name]}" for name in tool_names(spec))
    if vrp is not None and renamed.mapping:
        vrp = rename_text(vrp, renamed.mapping)
    return PromptBundle(role, role_preamble(role), shots, vrp, renamed.spec.statement, tools, renamed.inverse, title)


def program_text(program: Program) -> str:
    return render(program, "prose")
