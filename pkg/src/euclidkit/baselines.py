"""Random baselines: longest-common-solution replay and tool n-gram rollouts."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .bank import Bank, ProblemSpec, instantiate
from .dsl import Pick, Program, Step
from .geometry import Circle, GeoObject, Line, Point, Ray, Scene, Segment, ToolKind
from .verifier import StepError, execute, tool_sequence_match, verify

LCS_TOP = 5
LCS_ATTEMPTS = 50
DEFAULT_GAMMA = 0.5


class InsufficientCorpus(Exception):
    pass


def corpus(bank: Bank) -> list[Program]:
    """One ground-truth program per problem (the first reference)."""
    return [spec.references[0] for spec in bank]


# --- argument typing ---------------------------------------------------------------

P, LIN, OBJ = "point", "linear", "object"

ARG_TYPES: dict[ToolKind, tuple[str, ...]] = {
    ToolKind.LINE: (P, P),
    ToolKind.RAY: (P, P),
    ToolKind.SEGMENT: (P, P),
    ToolKind.CIRCLE: (P, P),
    ToolKind.COMPASS: (P, P, P),
    ToolKind.PERP_BISECTOR: (P, P),
    ToolKind.PERPENDICULAR: (LIN, P),
    ToolKind.PARALLEL: (LIN, P),
    ToolKind.ANGLE_BISECTOR: (P, P, P),
    ToolKind.INTERSECT: (OBJ, OBJ),
    ToolKind.POINT_ON: (OBJ,),
    ToolKind.FREE_POINT: (),
}

OUTPUT_TYPE = {
    ToolKind.INTERSECT: P,
    ToolKind.POINT_ON: P,
    ToolKind.FREE_POINT: P,
    ToolKind.CIRCLE: OBJ,
    ToolKind.COMPASS: OBJ,
}


def type_of(obj: GeoObject) -> str:
    if isinstance(obj, Point):
        return P
    if isinstance(obj, (Line, Ray, Segment)):
        return LIN
    assert isinstance(obj, Circle)
    return OBJ


def fits(have: str, want: str) -> bool:
    return have == want or (want == OBJ and have == LIN)


# --- longest common solutions ------------------------------------------------------


@dataclass
class LcsEntry:
    kinds: tuple[ToolKind, ...]
    template: tuple[Step, ...]
    count: int = 0


@dataclass
class LcsBank:
    entries: list[LcsEntry] = field(default_factory=list)


def _longest_common(a: Sequence, b: Sequence) -> tuple[int, list[int]]:
    """Length of the longest common substring and its start offsets in ``a``."""
    best, starts = 0, []
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best, starts = cur[j], [i - cur[j]]
                elif cur[j] == best and i - best not in starts:
                    starts.append(i - best)
        prev = cur
    return best, starts


def build_lcs_bank(programs: Sequence[Program], top: int = LCS_TOP) -> LcsBank:
    """Longest common contiguous tool-kind runs over all program pairs.

    Runs are ranked by length, then by the number of pairs sharing them,
    then by first appearance.
    """
    if len(programs) < 2:
        raise InsufficientCorpus("need at least two programs")
    found: dict[tuple[ToolKind, ...], LcsEntry] = {}
    for i, pa in enumerate(programs):
        for pb in programs[i + 1 :]:
            n, starts = _longest_common(pa.kinds, pb.kinds)
            if n == 0:
                continue
            for s in starts:
                kinds = tuple(pa.kinds[s : s + n])
                entry = found.setdefault(kinds, LcsEntry(kinds, pa.steps[s : s + n]))
                entry.count += 1
    order = {k: i for i, k in enumerate(found)}
    ranked = sorted(found.values(), key=lambda e: (-len(e.kinds), -e.count, order[e.kinds]))
    return LcsBank(ranked[:top])


class _Memory:
    """Identifiers with types and ages; recent ones weigh more (``gamma ** age``)."""

    def __init__(self, scene: Scene, gamma: float):
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        self.gamma = gamma
        self.items: list[list] = [[o.label, type_of(o), 0] for o in scene]
        self.counter = 0

    def weights(self, names: Sequence[str]) -> list[float]:
        age = {n: a for n, _, a in self.items}
        return [self.gamma ** age[n] for n in names]

    def sample(self, want: str, k_taken: set[str], rng: random.Random) -> str | None:
        pool = [n for n, t, _ in self.items if fits(t, want) and n not in k_taken]
        if not pool:
            pool = [n for n, _, _ in self.items if n not in k_taken]
        if not pool:
            return None
        return rng.choices(pool, weights=self.weights(pool))[0]

    def fresh(self, kind: str) -> str:
        self.counter += 1
        return f"{'P' if kind == P else 'g'}{self.counter}"

    def add(self, name: str, kind: str) -> None:
        self.items.append([name, kind, 0])

    def tick(self) -> None:
        for item in self.items:
            item[2] += 1


def _fill(tool: ToolKind, mem: _Memory, rng: random.Random, pick: Pick | None = None) -> Step | None:
    """A step for ``tool`` with arguments drawn from memory (without replacement)."""
    taken: set[str] = set()
    args = []
    for want in ARG_TYPES[tool]:
        name = mem.sample(want, taken, rng)
        if name is None:
            return None
        taken.add(name)
        args.append(name)
    if pick is not None:
        refs = []
        for _ in pick.refs:
            name = mem.sample(P, taken, rng)
            if name is None:
                return None
            taken.add(name)
            refs.append(name)
        pick = Pick(pick.kind, tuple(refs))
    kind = OUTPUT_TYPE.get(tool, LIN)
    out = mem.fresh(kind)
    return Step(tool, tuple(args), (out,), pick)


@dataclass
class Discarded:
    attempts: int


def run_lcs(bank: LcsBank, spec: ProblemSpec, seed: int, attempts: int = LCS_ATTEMPTS) -> Program | Discarded:
    """Replay a uniformly chosen common run with variables adapted to ``spec``'s instance."""
    if not bank.entries:
        raise InsufficientCorpus("empty LCS bank")
    rng = random.Random(f"lcs:{spec.id}:{seed}")
    scene = instantiate(spec, seed)
    for _ in range(attempts):
        entry = rng.choice(bank.entries)
        if not all(spec.allows(t) for t in entry.kinds):
            continue
        mem = _Memory(scene, DEFAULT_GAMMA)
        steps = []
        for tmpl in entry.template:
            step = _fill(tmpl.tool, mem, rng, tmpl.pick)
            if step is None:
                break
            steps.append(step)
            mem.add(step.outputs[0], OUTPUT_TYPE.get(step.tool, LIN))
        else:
            program = Program(tuple(steps))
            try:
                execute(program, scene.copy())
            except StepError:
                continue
            return program
    return Discarded(attempts)


# --- n-gram rollouts ---------------------------------------------------------------


@dataclass
class NGramDb:
    counts: dict[int, Counter] = field(default_factory=dict)

    @classmethod
    def build(cls, programs: Iterable[Program], orders: Sequence[int] = (1, 2, 3)) -> NGramDb:
        db = cls({n: Counter() for n in orders})
        for prog in programs:
            kinds = prog.kinds
            for n in orders:
                for i in range(len(kinds) - n + 1):
                    db.counts[n][tuple(kinds[i : i + n])] += 1
        return db


def run_ngram(
    db: NGramDb,
    n: int,
    spec: ProblemSpec,
    seed: int,
    gamma: float = DEFAULT_GAMMA,
    max_steps: int | None = None,
) -> Program:
    """Roll out ``max_steps`` steps by drawing tool n-grams in proportion to their counts."""
    table = db.counts.get(n)
    if not table:
        raise InsufficientCorpus(f"no {n}-grams")
    if max_steps is None:
        max_steps = min(len(r.steps) for r in spec.references)
    rng = random.Random(f"{n}gram:{spec.id}:{seed}")
    mem = _Memory(instantiate(spec, seed), gamma)
    grams = [g for g in table if all(spec.allows(t) for t in g)] or list(table)
    weights = [table[g] for g in grams]
    steps: list[Step] = []
    stalled = 0
    while len(steps) < max_steps and stalled < 100:
        gram = rng.choices(grams, weights=weights)[0]
        for tool in gram[: max_steps - len(steps)]:
            step = _fill(tool, mem, rng)
            mem.tick()
            if step is None:  # nothing in memory to feed this tool
                stalled += 1
                continue
            steps.append(step)
            mem.add(step.outputs[0], OUTPUT_TYPE.get(tool, LIN))
    return Program(tuple(steps))


# --- trials ------------------------------------------------------------------------

METHODS = ("lcs", "1gram", "2gram", "3gram")


@dataclass
class TrialOutcome:
    problem: str
    seed: int
    fully_correct: bool
    tool_sequence_correct: bool
    discarded: bool = False


@dataclass
class BaselineSummary:
    method: str
    trials: int
    fully_correct_rate: float
    tool_sequence_rate: float
    seed: int
    discarded: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "trials": self.trials,
            "fully_correct_rate": self.fully_correct_rate,
            "tool_sequence_rate": self.tool_sequence_rate,
            "seed": self.seed,
            "discarded": self.discarded,
        }


def run_trials(bank: Bank, method: str, trials: int, seed: int = 0) -> tuple[BaselineSummary, list[TrialOutcome]]:
    """Score ``trials`` baseline attempts on uniformly drawn problems."""
    if method not in METHODS:
        raise ValueError(f"unknown baseline {method!r}")
    programs = corpus(bank)
    lcs = build_lcs_bank(programs) if method == "lcs" else None
    db = NGramDb.build(programs) if method != "lcs" else None
    master = random.Random(seed)
    problems = list(bank)
    outcomes = []
    for _ in range(trials):
        spec = master.choice(problems)
        trial_seed = master.getrandbits(31)
        if lcs is not None:
            prog = run_lcs(lcs, spec, trial_seed)
        else:
            prog = run_ngram(db, int(method[0]), spec, trial_seed)
        if isinstance(prog, Discarded):
            outcomes.append(TrialOutcome(spec.id, trial_seed, False, False, True))
            continue
        report = verify(spec, prog, base_seed=trial_seed)
        outcomes.append(
            TrialOutcome(spec.id, trial_seed, report.fully_correct, tool_sequence_match(prog, spec.references))
        )
    summary = BaselineSummary(
        method,
        trials,
        sum(o.fully_correct for o in outcomes) / trials if trials else 0.0,
        sum(o.tool_sequence_correct for o in outcomes) / trials if trials else 0.0,
        seed,
        sum(o.discarded for o in outcomes),
    )
    return summary, outcomes
