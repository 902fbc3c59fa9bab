"""pass@k scoring, multi-seed aggregation, reports and benchmark orchestration."""
from __future__ import annotations

import json
import statistics
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backends import BackendSpec
from .bank import Bank, ProblemSpec, instantiate, knowledge_for
from .prompts import (
    AdaptiveConfig,
    AgentRole,
    RenamePolicy,
    TfidfSimilarity,
    adaptive_select,
    build_prompt,
    describe_scene,
    describe_scene_vlm,
    similarity_text,
)
from .simulacra import Configuration, DialogueConfig, sample_candidates
from .verifier import verify


class DomainError(ValueError):
    pass


class SeedCoverageMismatch(ValueError):
    pass


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k, ``1 - C(n-c, k) / C(n, k)``, evaluated exactly as a product."""
    for name, v in (("n", n), ("c", c), ("k", k)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise DomainError(f"{name} must be an integer")
    if not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"need 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    miss = Fraction(1)
    for i in range(n - c + 1, n + 1):
        miss *= Fraction(i - k, i)
    return float(1 - miss)


# --- records and aggregation -------------------------------------------------------


@dataclass
class RunRecord:
    problem: str
    pack: str
    n: int
    c: int
    k: int
    seed: int
    method: str = "default"
    transcripts: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.c <= self.n:
            raise DomainError(f"c={self.c} outside [0, {self.n}]")

    @property
    def metric(self) -> str:
        return f"pass@{self.k}"

    @property
    def score(self) -> float:
        return pass_at_k(self.n, self.c, self.k)


@dataclass
class Stat:
    """Mean and sample standard deviation over seeds, in percent."""

    mean: float
    std: float
    seeds: int

    def cell(self) -> str:
        return f"{_round1(self.mean)} (± {_round1(self.std)})"


def _round1(x: float) -> str:
    return str(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass
class MethodResult:
    overall: dict[str, Stat] = field(default_factory=dict)
    packs: dict[str, dict[str, Stat]] = field(default_factory=dict)


@dataclass
class BenchReport:
    methods: dict[str, MethodResult] = field(default_factory=dict)
    baselines: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> BenchReport:
        def stats(m: Mapping) -> dict[str, Stat]:
            return {k: Stat(**v) for k, v in m.items()}

        methods = {
            name: MethodResult(stats(r["overall"]), {p: stats(s) for p, s in r["packs"].items()})
            for name, r in d.get("methods", {}).items()
        }
        return cls(methods, list(d.get("baselines", [])), dict(d.get("metadata", {})))


def _stat(values: Sequence[float]) -> Stat:
    pct = [100 * v for v in values]
    std = statistics.stdev(pct) if len(pct) > 1 else 0.0
    return Stat(statistics.fmean(pct), std, len(pct))


def _seed_scores(records: Sequence[RunRecord], pack_order: Sequence[str]) -> tuple[float, dict[str, float]]:
    by_pack: dict[str, list[float]] = {}
    for r in records:
        by_pack.setdefault(r.pack, []).append(r.score)
    order = [p for p in pack_order if p in by_pack] + sorted(p for p in by_pack if p not in pack_order)
    packs = {p: statistics.fmean(by_pack[p]) for p in order}
    return statistics.fmean(packs.values()), packs


def aggregate(
    records: Iterable[RunRecord], pack_order: Sequence[str] = (), metadata: Mapping | None = None
) -> BenchReport:
    """Per-seed scores (problems averaged within packs, then packs averaged), then mean and std over seeds."""
    groups: dict[tuple[str, str], dict[int, list[RunRecord]]] = {}
    for r in records:
        groups.setdefault((r.method, r.metric), {}).setdefault(r.seed, []).append(r)
    report = BenchReport(metadata=dict(metadata or {}))
    for (method, metric), by_seed in sorted(groups.items()):
        problem_sets = {s: sorted(r.problem for r in recs) for s, recs in by_seed.items()}
        first = next(iter(problem_sets.values()))
        for s, probs in sorted(problem_sets.items()):
            if probs != first:
                raise SeedCoverageMismatch(f"{method} {metric}: seed {s} covers a different problem set")
        per_seed = [_seed_scores(by_seed[s], pack_order) for s in sorted(by_seed)]
        res = report.methods.setdefault(method, MethodResult())
        res.overall[metric] = _stat([o for o, _ in per_seed])
        for pack in per_seed[0][1]:
            res.packs.setdefault(pack, {})[metric] = _stat([p[pack] for _, p in per_seed])
    return report


# --- report emission ---------------------------------------------------------------


def _metrics(report: BenchReport) -> list[str]:
    names = {m for r in report.methods.values() for m in r.overall}
    return sorted(names, key=lambda m: int(m.split("@")[1]))


def emit_report(report: BenchReport, fmt: str = "md") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt not in ("md", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    metrics = _metrics(report)
    lines = ["| Method | " + " | ".join(metrics) + " |", "|---" * (len(metrics) + 1) + "|"]
    for name, res in report.methods.items():
        cells = [res.overall[m].cell() if m in res.overall else "-" for m in metrics]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    for name, res in report.methods.items():
        if not res.packs:
            continue
        lines += ["", f"Per pack ({name}):", "", "| Pack | " + " | ".join(metrics) + " |", "|---" * (len(metrics) + 1) + "|"]
        for pack, stats in res.packs.items():
            lines.append(f"| {pack} | " + " | ".join(stats[m].cell() if m in stats else "-" for m in metrics) + " |")
    if report.baselines:
        lines += ["", "| Baseline | Correct tool sequence | Fully correct |", "|---|---|---|"]
        for b in report.baselines:
            lines.append(f"| {b['method']} | {b['tool_sequence_rate']:.2f} | {b['fully_correct_rate']:.2f} |")
    lines += ["", "Values are percentages: mean (± sample standard deviation over seeds)."]
    return "\n".join(lines) + "\n"


def load_report(text: str) -> BenchReport:
    return BenchReport.from_dict(json.loads(text))


# --- benchmark runs ----------------------------------------------------------------


@dataclass
class BenchConfig:
    configuration: Configuration = Configuration.S_GT
    feedback_mode: bool = False
    max_rounds: int = 5
    temperature_pass1: float = 0.2
    temperature_pass50: float = 0.6
    samples_pass50: int = 50
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    rename_policy: RenamePolicy = field(default_factory=RenamePolicy)
    vrp: str = "off"
    backends: dict[AgentRole, BackendSpec] = field(default_factory=dict)
    method: str = ""
    instances: int = 5
    workers: int = 4

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> BenchConfig:
        ad = d.get("adaptive", {})
        adaptive = AdaptiveConfig(
            float(ad.get("threshold", 0.5)), int(ad.get("cap", 15)), int(ad.get("k", 5)), ad.get("mode", "ST")
        )
        vrp = d.get("vrp", "off")
        if vrp not in ("on", "off", "vlm"):
            raise ValueError("vrp must be on, off or vlm")
        cfg = cls(
            configuration=Configuration(d.get("configuration", "S_GT")),
            feedback_mode=bool(d.get("feedback_mode", False)),
            max_rounds=int(d.get("max_rounds", 5)),
            temperature_pass1=float(d.get("temperature_pass1", 0.2)),
            temperature_pass50=float(d.get("temperature_pass50", 0.6)),
            samples_pass50=int(d.get("samples_pass50", 50)),
            adaptive=adaptive,
            rename_policy=RenamePolicy.parse(str(d.get("rename_policy", "+0"))),
            vrp=vrp,
            backends={AgentRole(k): BackendSpec.from_dict(v, base_dir) for k, v in d.get("backends", {}).items()},
            method=d.get("method", ""),
            instances=int(d.get("instances", 5)),
            workers=int(d.get("workers", 4)),
        )
        needed = [r for r in cfg.configuration.roles if not (cfg.feedback_mode and r is AgentRole.VALIDATOR_GT)]
        missing = [r.value for r in needed if r not in cfg.backends]
        if missing:
            raise ValueError(f"config has no backend for {', '.join(missing)}")
        return cfg

    @property
    def label(self) -> str:
        if self.method:
            return self.method
        fb = "+FB" if self.feedback_mode else ""
        return f"{self.configuration.value}{fb}"


def _bundles(cfg: BenchConfig, bank: Bank, spec: ProblemSpec, seed: int, sim) -> dict:
    llm = cfg.backends[AgentRole.SOLVER_GT].build(seed, spec.id) if cfg.adaptive.mode == "Self" else None
    examples = adaptive_select(knowledge_for(spec, bank), spec, cfg.adaptive, sim, llm, bank_seeds(bank))
    vrp = None
    if cfg.vrp != "off":
        scene = instantiate(spec, seed)
        if cfg.vrp == "on":
            vrp = describe_scene(scene, spec)
        else:
            vlm = cfg.backends[AgentRole.SOLVER_GT].build(seed, spec.id)
            vrp = describe_scene_vlm(vlm, scene, spec)
    return {r: build_prompt(r, spec, examples, vrp, cfg.rename_policy) for r in cfg.configuration.roles}


def bank_seeds(bank: Bank):
    from .bank import KnowledgeEntry

    return [KnowledgeEntry(s, s.references[0]) for s in bank.seeds]


def run_bench(
    bank: Bank,
    cfg: BenchConfig,
    out: str | Path,
    packs: Sequence[str] | None = None,
    seeds: int = 10,
) -> BenchReport:
    """Run pass@1 and pass@N sampling for every selected problem and harness seed.

    Writes ``records.jsonl``, per-problem transcripts, ``report.json`` and
    ``report.md`` under ``out``.
    """
    out = Path(out)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    problems = bank.in_packs(packs) if packs else list(bank)
    sim = TfidfSimilarity([similarity_text(p) for p in bank])
    runs = [(1, cfg.temperature_pass1), (cfg.samples_pass50, cfg.temperature_pass50)]
    lock = threading.Lock()
    records: list[RunRecord] = []

    def one(job: tuple[int, ProblemSpec, int, float]) -> RunRecord:
        seed, spec, n, temp = job
        dcfg = DialogueConfig(cfg.configuration, cfg.feedback_mode, cfg.max_rounds, temp)
        bundles = _bundles(cfg, bank, spec, seed, sim)
        base = seed * 100_000

        def make(i: int):
            return {r: b.build(i, spec.id) for r, b in cfg.backends.items()}

        batch = sample_candidates(dcfg, spec, n, base, bundles, make)
        c = sum(
            cand is not None and verify(spec, cand, cfg.instances, base_seed=seed).fully_correct
            for cand in batch.candidates
        )
        path = out / "transcripts" / f"seed{seed}" / f"pass{n}" / f"{spec.id}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for i, res in enumerate(batch.results):
                for turn in res.transcript.turns:
                    fh.write(json.dumps({"sample": i, "status": res.transcript.status, **turn.to_dict()}, sort_keys=True) + "\n")
        rec = RunRecord(spec.id, spec.pack, n, c, n, seed, cfg.label, str(path.relative_to(out)))
        with lock:
            records.append(rec)
        return rec

    jobs = [(s, spec, n, t) for s in range(seeds) for spec in problems for n, t in runs]
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        list(pool.map(one, jobs))
    records.sort(key=lambda r: (r.seed, r.k, r.problem))
    with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")
    meta = {
        "configuration": cfg.configuration.value,
        "feedback_mode": cfg.feedback_mode,
        "temperatures": {"pass@1": cfg.temperature_pass1, f"pass@{cfg.samples_pass50}": cfg.temperature_pass50},
        "seeds": seeds,
        "packs": list(packs) if packs else list(bank.pack_order),
        "rename_policy": cfg.rename_policy.label,
        "vrp": cfg.vrp,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    report = aggregate(records, bank.pack_order, meta)
    (out / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
    (out / "report.md").write_text(emit_report(report, "md"), encoding="utf-8")
    return report


def load_records(path: str | Path) -> list[RunRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RunRecord(**json.loads(line)) for line in fh if line.strip()]
