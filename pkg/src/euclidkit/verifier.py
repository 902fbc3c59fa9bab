"""Program execution on concrete instances and functional verification."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Iterator, Mapping, Sequence

from .dsl import Pick, Program, Step
from .geometry import (
    DEFAULT_TOL,
    GeoObject,
    GeometryError,
    Point,
    Scene,
    Tolerances,
    ToolKind,
    _cross,
    construct,
    equivalent,
    intersect,
    residual,
    sample_point,
)

if TYPE_CHECKING:
    from .bank import ProblemSpec

DEFAULT_INSTANCES = 5
MAX_AMBIGUOUS = 8

STEP_ERROR_KINDS = (
    "NoIntersection",
    "DegenerateInput",
    "UnboundIdentifier",
    "TangencyShortfall",
    "Rebinding",
)


class StepError(Exception):
    """A step could not be applied. ``step`` is 1-based."""

    def __init__(self, step: int, kind: str, detail: str = ""):
        super().__init__(f"step {step}: {kind}" + (f" ({detail})" if detail else ""))
        self.step = step
        self.kind = kind
        self.detail = detail
        self.trace: ExecutionTrace | None = None


class BranchBudgetExceeded(Exception):
    pass


@dataclass
class TraceStep:
    index: int
    step: Step
    objects: tuple[GeoObject, ...]
    branch: int | None
    residuals: tuple[float, ...] = ()


@dataclass
class ExecutionTrace:
    steps: list[TraceStep]
    scene: Scene

    def __len__(self) -> int:
        return len(self.steps)

    def constructed(self) -> list[GeoObject]:
        return [o for s in self.steps for o in s.objects]


# --- single-step semantics ---------------------------------------------------------


def _resolve(scene: Scene, ident: str, n: int) -> GeoObject:
    if ident not in scene:
        raise StepError(n, "UnboundIdentifier", ident)
    return scene.get(ident)


def _apply_pick(pick: Pick, pts: list[Point], scene: Scene, n: int) -> Point:
    refs = [_resolve(scene, r, n) for r in pick.refs]
    if not all(isinstance(r, Point) for r in refs):
        raise StepError(n, "DegenerateInput", "pick references must be points")
    if pick.kind in ("near", "far"):
        ref = refs[0]
        key = lambda p: p.dist(ref)  # noqa: E731
        return min(pts, key=key) if pick.kind == "near" else max(pts, key=key)
    a, b = refs
    side = lambda p: _cross(b - a, p - a)  # noqa: E731
    return max(pts, key=side) if pick.kind == "left" else min(pts, key=side)


def ambiguous(step: Step, pts: Sequence[Point]) -> bool:
    """True when an intersect step must choose between two points without a hint."""
    return step.tool is ToolKind.INTERSECT and len(step.outputs) == 1 and step.pick is None and len(pts) == 2


def _intersection_points(step: Step, scene: Scene, n: int, tol: Tolerances) -> list[Point]:
    o1, o2 = (_resolve(scene, a, n) for a in step.args)
    if isinstance(o1, Point) or isinstance(o2, Point):
        raise StepError(n, "DegenerateInput", "cannot intersect a point")
    pts = intersect(o1, o2, tol)
    if not pts:
        raise StepError(n, "NoIntersection", f"{step.args[0]} and {step.args[1]}")
    if len(step.outputs) > len(pts):
        raise StepError(n, "TangencyShortfall", f"{len(step.outputs)} outputs, {len(pts)} point(s)")
    return pts


def apply_step(
    step: Step,
    scene: Scene,
    n: int,
    branch: int | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> TraceStep:
    """Apply one step in place. ``n`` is the 1-based step number for errors."""
    if len(step.args) != step.tool.arity:
        raise StepError(n, "DegenerateInput", "arity mismatch")
    taken = None
    res: tuple[float, ...] = ()
    if step.tool is ToolKind.INTERSECT:
        pts = _intersection_points(step, scene, n, tol)
        if len(step.outputs) == 2:
            objs: tuple[GeoObject, ...] = (pts[0], pts[1])
        elif step.pick is not None:
            objs = (_apply_pick(step.pick, pts, scene, n),)
        elif len(pts) == 2:
            taken = branch or 0
            objs = (pts[taken],)
        else:
            objs = (pts[0],)
        o1, o2 = (scene.get(a) for a in step.args)
        res = tuple(max(residual(o1, p), residual(o2, p)) for p in objs)
    elif step.tool in (ToolKind.POINT_ON, ToolKind.FREE_POINT):
        target = _resolve(scene, step.args[0], n) if step.args else None
        if isinstance(target, Point):
            raise StepError(n, "DegenerateInput", "cannot place a point on a point")
        try:
            objs = (sample_point(target, scene.rng, scene.points(), tol),)
        except GeometryError as exc:
            raise StepError(n, "DegenerateInput", str(exc)) from exc
    else:
        args = [_resolve(scene, a, n) for a in step.args]
        try:
            objs = (construct(step.tool, args, scene, tol),)
        except GeometryError as exc:
            raise StepError(n, "DegenerateInput", str(exc)) from exc
    bound = []
    for label, obj in zip(step.outputs, objs):
        if label in scene:
            raise StepError(n, "Rebinding", label)
        bound.append(scene.add(label, obj))
    return TraceStep(n - 1, step, tuple(bound), taken, res)


def execute(
    program: Program,
    scene: Scene,
    picks: Mapping[int, int] | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> ExecutionTrace:
    """Run ``program`` on ``scene`` (mutated in place).

    ``picks`` maps 0-based step indices of unhinted ambiguous intersections
    to the canonical point index to take; unlisted ones take the first point.
    Raises :class:`StepError` carrying the partial trace.
    """
    picks = picks or {}
    trace = ExecutionTrace([], scene)
    for i, step in enumerate(program.steps):
        try:
            trace.steps.append(apply_step(step, scene, i + 1, picks.get(i), tol))
        except StepError as err:
            err.trace = trace
            raise
    return trace


# --- branch search -----------------------------------------------------------------


@dataclass
class Leaf:
    trace: list[TraceStep]
    scene: Scene
    error: StepError | None
    choices: tuple[int, ...]


def branches(
    program: Program, scene: Scene, tol: Tolerances = DEFAULT_TOL, max_ambiguous: int = MAX_AMBIGUOUS
) -> Iterator[Leaf]:
    """Enumerate executions over every choice at unhinted two-point intersections.

    The scene is copied at each branch point. Raises
    :class:`BranchBudgetExceeded` once a path meets more than
    ``max_ambiguous`` such choices.
    """

    def walk(i: int, sc: Scene, trace: list[TraceStep], choices: tuple[int, ...]) -> Iterator[Leaf]:
        while i < len(program.steps):
            step = program.steps[i]
            if step.tool is ToolKind.INTERSECT and len(step.outputs) == 1 and step.pick is None:
                try:
                    pts = _intersection_points(step, sc, i + 1, tol)
                except StepError as err:
                    yield Leaf(trace, sc, err, choices)
                    return
                if len(pts) == 2:
                    if len(choices) >= max_ambiguous:
                        raise BranchBudgetExceeded(f"more than {max_ambiguous} ambiguous intersections")
                    for b in (0, 1):
                        fork = sc.copy()
                        ts = apply_step_safe(step, fork, i + 1, b, tol)
                        if isinstance(ts, StepError):
                            yield Leaf(trace, fork, ts, choices + (b,))
                        else:
                            yield from walk(i + 1, fork, trace + [ts], choices + (b,))
                    return
            ts = apply_step_safe(step, sc, i + 1, None, tol)
            if isinstance(ts, StepError):
                yield Leaf(trace, sc, ts, choices)
                return
            trace = trace + [ts]
            i += 1
        yield Leaf(trace, sc, None, choices)

    yield from walk(0, scene, [], ())


def apply_step_safe(step, scene, n, branch, tol) -> TraceStep | StepError:
    try:
        return apply_step(step, scene, n, branch, tol)
    except StepError as err:
        return err


# --- verification ------------------------------------------------------------------


@dataclass
class InstanceOutcome:
    seed: int
    verified: bool
    matched_goals: list[str] = field(default_factory=list)
    failure: str | None = None
    branches: int = 0


@dataclass
class VerifyReport:
    problem: str
    fully_correct: bool
    tool_sequence_correct: bool
    whitelist_ok: bool
    instances: list[InstanceOutcome]
    budget_exceeded: bool = False

    @property
    def branch_stats(self) -> dict[str, int]:
        counts = [o.branches for o in self.instances]
        return {"total": sum(counts), "max": max(counts, default=0)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch_stats"] = self.branch_stats
        return d


def tool_sequence_match(candidate: Program, references: Sequence[Program]) -> bool:
    kinds = candidate.kinds
    return any(kinds == ref.kinds for ref in references)


def goal_sets(spec: ProblemSpec, scene: Scene, tol: Tolerances = DEFAULT_TOL) -> list[list[GeoObject]]:
    """Goal objects produced by each reference program on ``scene``."""
    out = []
    for ref in spec.references:
        trace = execute(ref, scene.copy(), tol=tol)
        out.append([trace.scene.get(g) for g in spec.goals])
    return out


def _match(goals: list[GeoObject], made: list[GeoObject], tol: Tolerances) -> list[str]:
    return [g.label for g in goals if any(equivalent(g, m, tol) for m in made)]


def verify_instance(
    spec: ProblemSpec,
    program: Program,
    seed: int,
    tol: Tolerances = DEFAULT_TOL,
) -> InstanceOutcome:
    from .bank import instantiate

    scene = instantiate(spec, seed, tol)
    targets = goal_sets(spec, scene, tol)
    best: list[str] = []
    failure: str | None = None
    n = 0
    for leaf in branches(program, scene.copy(), tol):
        n += 1
        made = [o for s in leaf.trace for o in s.objects]
        for goals in targets:
            hit = _match(goals, made, tol)
            if len(hit) == len(goals):
                return InstanceOutcome(seed, True, hit, None, n)
            if len(hit) > len(best):
                best = hit
        if failure is None:
            failure = str(leaf.error) if leaf.error else "goals not constructed"
    return InstanceOutcome(seed, False, best, failure, n)


def verify(
    spec: ProblemSpec,
    program: Program,
    instances: int = DEFAULT_INSTANCES,
    base_seed: int = 0,
    tol: Tolerances = DEFAULT_TOL,
) -> VerifyReport:
    """Check ``program`` against ``spec`` on ``instances`` seeded instances.

    An instance verifies when some choice at the unhinted ambiguous
    intersections constructs every goal object of some reference program.
    """
    whitelist_ok = all(spec.allows(t) for t in program.kinds)
    outcomes: list[InstanceOutcome] = []
    exceeded = False
    for i in range(instances):
        seed = base_seed + i
        try:
            outcomes.append(verify_instance(spec, program, seed, tol))
        except BranchBudgetExceeded as exc:
            exceeded = True
            outcomes.append(InstanceOutcome(seed, False, [], f"BranchBudgetExceeded: {exc}"))
    ok = whitelist_ok and all(o.verified for o in outcomes)
    return VerifyReport(
        problem=spec.id,
        fully_correct=ok,
        tool_sequence_correct=tool_sequence_match(program, spec.references),
        whitelist_ok=whitelist_ok,
        instances=outcomes,
        budget_exceeded=exceeded,
    )
