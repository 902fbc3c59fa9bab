"""Solver/validator dialogues, feedback-mode verdicts and candidate sampling."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

from .backends import BackendError, ChatBackend
from .bank import ProblemSpec, instantiate
from .dsl import DslError, Program, rename_program
from .extract import extract, extract_report
from .geometry import equivalent
from .prompts import AgentRole, PromptBundle
from .verifier import DEFAULT_INSTANCES, BranchBudgetExceeded, StepError, branches, execute, verify


class Configuration(str, Enum):
    S_GT = "S_GT"
    SV_GT = "SV_GT"
    S_NL_S_GT = "S_NL_S_GT"
    SV_NL_SV_GT = "SV_NL_SV_GT"

    @property
    def has_nl(self) -> bool:
        return self in (Configuration.S_NL_S_GT, Configuration.SV_NL_SV_GT)

    @property
    def validated(self) -> bool:
        return self in (Configuration.SV_GT, Configuration.SV_NL_SV_GT)

    @property
    def roles(self) -> tuple[AgentRole, ...]:
        out = []
        if self.has_nl:
            out.append(AgentRole.SOLVER_NL)
            if self.validated:
                out.append(AgentRole.VALIDATOR_NL)
        out.append(AgentRole.SOLVER_GT)
        if self.validated:
            out.append(AgentRole.VALIDATOR_GT)
        return tuple(out)


@dataclass(frozen=True)
class DialogueConfig:
    configuration: Configuration = Configuration.S_GT
    feedback_mode: bool = False
    max_rounds: int = 5
    temperature: float = 0.2

    def __post_init__(self) -> None:
        object.__setattr__(self, "configuration", Configuration(self.configuration))
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.feedback_mode and not self.configuration.validated:
            raise ValueError("feedback mode needs a validated configuration")


class Status(str, Enum):
    APPROVED = "Approved"
    ROUND_CAP = "RoundCapReached"
    BACKEND_ERROR = "BackendError"
    COMPLETED = "Completed"  # no validator in the configuration


@dataclass
class Turn:
    role: AgentRole
    round: int
    prompt_digest: str
    reply: str
    temperature: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["role"] = self.role.value
        return d


@dataclass
class Transcript:
    turns: list[Turn] = field(default_factory=list)
    status: Status | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(t.to_dict(), sort_keys=True) + "\n" for t in self.turns)

    @property
    def roles(self) -> list[AgentRole]:
        return [t.role for t in self.turns]


# --- step text bookkeeping ---------------------------------------------------------

_STEP_LINE_RE = re.compile(
    r"^\s*(?:\[\.\.\.\]\s*)?(?:<\s*(?P<tag>[^>]+?)\s*>|(?P<word>step))\s*(?P<num>\d+)\s*[:.]\s*(?P<body>.*)$",
    re.I,
)


@dataclass
class StepText:
    """Numbered step lines keyed by step number, plus any unnumbered lines."""

    numbered: dict[int, str] = field(default_factory=dict)
    other: list[str] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> StepText:
        st = cls()
        for line in text.splitlines():
            m = _STEP_LINE_RE.match(line)
            if m:
                st.numbered[int(m.group("num"))] = line.strip().removeprefix("[...]").strip()
            elif line.strip():
                st.other.append(line.strip())
        return st

    def render(self) -> str:
        if not self.numbered:
            return "\n".join(self.other)
        return "\n".join(self.numbered[k] for k in sorted(self.numbered))


def merge_revision(current: str, revision: str) -> str:
    """Fold a solver revision into the current step text.

    A revision that restates step 1 replaces everything; otherwise its
    numbered lines replace (or extend) the matching steps. A revision with
    no numbered lines replaces the text only when it contains tool steps.
    """
    cur, rev = StepText.parse(current), StepText.parse(revision)
    if 1 in rev.numbered:
        return rev.render()
    if rev.numbered:
        merged = dict(cur.numbered)
        merged.update(rev.numbered)
        return StepText(merged).render()
    if extract_report(revision).spans:
        return rev.render()
    return cur.render() if cur.numbered else current


# --- verdicts ----------------------------------------------------------------------

_VERDICT_RE = re.compile(
    r"(?:<\s*[^>]+?\s*>|\bstep)\s*(?P<num>\d+)\s*[:.]\s*(?P<word>correct|incorrect|wrong|invalid)\b",
    re.I,
)


class VerdictKind(str, Enum):
    APPROVE = "approve"
    DELEGATE = "delegate"  # some steps accepted, none rejected: the solver fixes the rest on its own
    REVISE = "revise"


@dataclass
class Verdict:
    kind: VerdictKind
    steps: dict[int, bool]
    text: str


def step_numbers(solver_text: str) -> list[int]:
    st = StepText.parse(solver_text)
    if st.numbered:
        return sorted(st.numbered)
    return list(range(1, len(extract_report(solver_text).spans) + 1))


def parse_verdict(reply: str, solver_text: str) -> Verdict:
    """Lenient reading of "<STEP> k: Correct." lines; anything unreadable asks for a revision."""
    marks: dict[int, bool] = {}
    for m in _VERDICT_RE.finditer(reply):
        marks[int(m.group("num"))] = m.group("word").lower() == "correct"
    if not marks or not all(marks.values()):
        return Verdict(VerdictKind.REVISE, marks, reply)
    wanted = step_numbers(solver_text)
    if wanted and all(marks.get(k) for k in wanted):
        return Verdict(VerdictKind.APPROVE, marks, reply)
    return Verdict(VerdictKind.DELEGATE, marks, reply)


def _same(a: Sequence, b: Sequence) -> bool:
    if len(a) != len(b):
        return False
    if len(a) == 2:  # a two-point intersection is an unordered pair
        return (equivalent(a[0], b[0]) and equivalent(a[1], b[1])) or (
            equivalent(a[0], b[1]) and equivalent(a[1], b[0])
        )
    return all(equivalent(x, y) for x, y in zip(a, b))


def _prefix_on_instance(spec: ProblemSpec, program: Program, seed: int) -> int:
    """Longest candidate prefix that follows some reference step for step on one instance."""
    scene = instantiate(spec, seed)
    refs = []
    for ref in spec.references:
        try:
            refs.append((ref, execute(ref, scene.copy()).steps))
        except StepError:
            continue
    best = 0
    try:
        for leaf in branches(program, scene.copy()):
            for ref, ref_trace in refs:
                n = 0
                for cand, want in zip(leaf.trace, ref_trace):
                    if cand.step.tool is not want.step.tool or not _same(cand.objects, want.objects):
                        break
                    n += 1
                best = max(best, n)
    except BranchBudgetExceeded:
        return 0
    return best


def feedback_verdict(
    spec: ProblemSpec, solver_text: str, known: Sequence[str], instances: int = DEFAULT_INSTANCES
) -> Verdict:
    """Mechanical verdict that reveals only which steps are correct.

    A fully correct program gets every step approved. Otherwise a step is
    correct when, on every instance, it and all steps before it reproduce
    the matching steps of one reference program.
    """
    report = extract_report(solver_text, known)
    spans = report.spans
    numbers = [s.number if s.number is not None else i + 1 for i, s in enumerate(spans)]
    if not spans:
        return Verdict(VerdictKind.REVISE, {1: False}, "Step 1: Incorrect.")
    if verify(spec, report.program, instances).fully_correct:
        prefix = len(report.program.steps)
    else:
        prefix = min(_prefix_on_instance(spec, report.program, seed) for seed in range(instances))
    marks = {num: max(span.steps, default=prefix) < prefix and bool(span.steps) for num, span in zip(numbers, spans)}
    for sk in report.skipped:
        m = _STEP_LINE_RE.match(sk.text)
        if m:
            marks[int(m.group("num"))] = False
    text = "\n".join(f"Step {k}: {'Correct' if ok else 'Incorrect'}." for k, ok in sorted(marks.items()))
    kind = VerdictKind.APPROVE if all(marks.values()) else VerdictKind.REVISE
    return Verdict(kind, marks, text)


# --- dialogue ----------------------------------------------------------------------


@dataclass
class DialogueResult:
    candidate: Program | None
    transcript: Transcript
    text: str = ""
    error: str | None = None


def _digest(messages: Sequence[Mapping[str, str]]) -> str:
    raw = json.dumps([dict(m) for m in messages], sort_keys=True).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:16]


class _Dialogue:
    def __init__(self, cfg, spec, bundles, backends, known):
        self.cfg = cfg
        self.spec = spec
        self.bundles = bundles
        self.backends = backends
        self.known = known
        self.transcript = Transcript()

    def ask(self, role: AgentRole, rnd: int, messages: list[dict]) -> str:
        reply = self.backends[role].complete(messages, self.cfg.temperature)
        self.transcript.turns.append(Turn(role, rnd, _digest(messages), reply, self.cfg.temperature))
        return reply

    def loop(self, solver: AgentRole, validator: AgentRole | None, context: str) -> tuple[str, Status]:
        """One solver (and optional validator) exchange, capped at ``max_rounds`` verdicts."""
        opening = self.bundles[solver].text + (f"\n\n{context}" if context else "")
        history: list[dict] = [{"role": "user", "content": opening}]
        reply = self.ask(solver, 1, history)
        text = StepText.parse(reply).render() or reply
        if validator is None:
            return text, Status.COMPLETED
        for rnd in range(1, self.cfg.max_rounds + 1):
            if self.cfg.feedback_mode and validator is AgentRole.VALIDATOR_GT:
                verdict = feedback_verdict(self.spec, text, self.known)
                self.transcript.turns.append(Turn(validator, rnd, _digest([{"role": "user", "content": text}]), verdict.text, 0.0))
            else:
                vmsg = self.bundles[validator].text + (f"\n\n{context}" if context else "") + f"\n\nProposed steps:\n{text}"
                verdict = parse_verdict(self.ask(validator, rnd, [{"role": "user", "content": vmsg}]), text)
            if verdict.kind is VerdictKind.APPROVE:
                return text, Status.APPROVED
            if rnd == self.cfg.max_rounds:
                return text, Status.ROUND_CAP
            ask = "Correct the remaining steps." if verdict.kind is VerdictKind.DELEGATE else "Revise the steps that were not accepted."
            history += [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"Validator feedback:\n{verdict.text}\n{ask}"},
            ]
            reply = self.ask(solver, rnd + 1, history)
            text = merge_revision(text, reply)
            if verdict.kind is VerdictKind.DELEGATE:
                return text, Status.APPROVED
        raise AssertionError("unreachable")


def _swap_back(inverse: Mapping[str, str]) -> dict[str, str]:
    """Inverse rename map made safe against candidates that reuse the original name."""
    out = dict(inverse)
    for new, old in inverse.items():
        out.setdefault(old, new)
    return out


def run_dialogue(
    cfg: DialogueConfig,
    spec: ProblemSpec,
    bundles: Mapping[AgentRole, PromptBundle],
    backends: Mapping[AgentRole, ChatBackend],
) -> DialogueResult:
    """Run the configured agents on ``spec`` and extract the final candidate program.

    ``bundles`` must hold a prompt for every role of the configuration; the
    solver bundles decide the naming the agents see, and the candidate is
    mapped back to the original names before it is returned.
    """
    missing = [r for r in cfg.configuration.roles if r not in backends or r not in bundles]
    if missing and not (cfg.feedback_mode and missing == [AgentRole.VALIDATOR_GT]):
        raise ValueError(f"no backend or bundle for {', '.join(r.value for r in missing)}")
    gt_bundle = bundles[AgentRole.SOLVER_GT]
    forward = {v: k for k, v in gt_bundle.inverse.items()}
    known = {forward.get(n, n) for n in spec.initial_labels()}
    d = _Dialogue(cfg, spec, bundles, backends, sorted(known))
    conf = cfg.configuration
    status = Status.COMPLETED
    try:
        context = ""
        if conf.has_nl:
            rationale, status = d.loop(AgentRole.SOLVER_NL, AgentRole.VALIDATOR_NL if conf.validated else None, "")
            context = f"Expert rationale:\n{rationale}"
        text, gt_status = d.loop(AgentRole.SOLVER_GT, AgentRole.VALIDATOR_GT if conf.validated else None, context)
        status = gt_status if conf.validated else status
    except BackendError as exc:
        d.transcript.status = Status.BACKEND_ERROR
        return DialogueResult(None, d.transcript, "", str(exc))
    d.transcript.status = status
    try:
        program = extract(text, known)
    except DslError as exc:
        return DialogueResult(None, d.transcript, text, f"extraction failed: {exc}")
    if gt_bundle.inverse:
        program = rename_program(program, _swap_back(gt_bundle.inverse))
    return DialogueResult(program, d.transcript, text)


# --- sampling ----------------------------------------------------------------------


@dataclass
class SampleBatch:
    results: list[DialogueResult]

    @property
    def candidates(self) -> list[Program | None]:
        return [r.candidate for r in self.results]

    @property
    def backend_errors(self) -> int:
        return sum(r.transcript.status is Status.BACKEND_ERROR for r in self.results)


def sample_candidates(
    cfg: DialogueConfig,
    spec: ProblemSpec,
    n: int,
    base_seed: int,
    bundles: Mapping[AgentRole, PromptBundle],
    make_backends: Callable[[int], Mapping[AgentRole, ChatBackend]],
) -> SampleBatch:
    """``n`` independent dialogues; slot ``i`` uses backends built for seed ``base_seed + i``.

    Failed dialogues keep their slot with an absent candidate.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    results = []
    for i in range(n):
        try:
            backends = make_backends(base_seed + i)
        except BackendError as exc:
            results.append(DialogueResult(None, Transcript(status=Status.BACKEND_ERROR), "", str(exc)))
            continue
        results.append(run_dialogue(cfg, spec, bundles, backends))
    return SampleBatch(results)
