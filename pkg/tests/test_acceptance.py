"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
from __future__ import annotations

import itertools
import json
import math
import random
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

from euclidkit.backends import ScriptedBackend
from euclidkit.bank import KnowledgeBase, KnowledgeEntry, instantiate
from euclidkit.baselines import run_trials
from euclidkit.geometry import (
    Circle,
    Point,
    Segment,
    ToolKind,
    _cross,
    construct,
    intersect,
    residual,
)
from euclidkit.harness import pass_at_k
from euclidkit.prompts import (
    AdaptiveConfig,
    AgentRole,
    RenamePolicy,
    _dir,
    adaptive_select,
    apply_rename,
    build_prompt,
    describe_scene,
    restore,
    scene_relations,
    stage_one,
)
from euclidkit.simulacra import Configuration, DialogueConfig, Status, run_dialogue
from euclidkit.verifier import branches, verify
from mutants import arg_swaps, deletions, tool_swaps
from oracles import goals_met, oracle

ROOT = Path(__file__).resolve().parents[1]
R = AgentRole


@pytest.fixture()
def verdict(capsys):
    """Print one PASS/FAIL line for the criterion, then fail the test if needed."""

    def check(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return check


@pytest.fixture(scope="module")
def worked():
    path = ROOT / "tests" / "fixtures" / "inscribe_circle_dialogue.json"
    return json.loads(path.read_text(encoding="utf-8"))


def _brute(n, c, k):
    hits = total = 0
    for subset in itertools.combinations(range(n), k):
        total += 1
        hits += any(i < c for i in subset)
    return hits / total


def test_criterion_1_pass_at_k(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                worst = max(worst, abs(pass_at_k(n, c, k) - _brute(n, c, k)))
    spots = (pass_at_k(50, 0, 50), pass_at_k(1, 1, 1), pass_at_k(5, 2, 3))
    t_est = time.perf_counter()
    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                pass_at_k(n, c, k)
    elapsed = time.perf_counter() - t_est
    ok = worst <= 1e-12 and spots[0] == 0.0 and spots[1] == 1.0 and abs(spots[2] - 0.9) <= 1e-12 and elapsed < 1
    verdict(1, ok, f"max |diff| {worst:.1e} over n<=12, spots {spots}, estimator time {elapsed:.3f}s "
            f"(with enumeration {time.perf_counter() - t0:.2f}s)")


def test_criterion_2_references_verify(bank, worked, verdict):
    from euclidkit.extract import extract

    spec_h = bank.get(worked["problem"])
    text = worked["replies"]["solver_gt"][0].replace("radius AO.", "radius OE.")
    dialogue_program = extract(text, spec_h.initial_labels())
    cases = [(spec, ref) for spec in bank for ref in spec.references] + [(spec_h, dialogue_program)]
    trio = {"alpha-rhombus-in-rectangle", "gamma-lozenge", "theta-angle-54"}
    t0 = time.perf_counter()
    failures = []
    for spec, ref in cases:
        for seed in range(10):
            if not verify(spec, ref, instances=5, base_seed=1000 * seed).fully_correct:
                failures.append((spec.id, seed))
    elapsed = time.perf_counter() - t0
    ok = not failures and len(bank) >= 20 and trio <= {s.id for s in bank} and elapsed < 30
    verdict(2, ok, f"{len(cases)} programs on {len(bank)} problems x 5 instances x 10 seeds, "
            f"{len(failures)} failures, {elapsed:.1f}s")


def test_criterion_3_mutants_fail(bank, verdict):
    total = rejected = 0
    short = []
    unexplained = []
    for spec in bank:
        ref = spec.references[0]
        classes = {
            "tool": tool_swaps(ref),
            "arg": arg_swaps(ref, sorted(spec.initial_labels())),
            "delete": deletions(ref, spec.goals),
        }
        for name, mutants in classes.items():
            if len(mutants) < 5:
                short.append((spec.id, name, len(mutants)))
            for m in mutants:
                total += 1
                if not verify(spec, m).fully_correct:
                    rejected += 1
                    continue
                # a surviving mutant must really construct the goals
                for seed in range(5):
                    scene = instantiate(spec, seed)
                    alts = oracle(spec.id, scene)
                    if not any(goals_met(alts, [o for s in leaf.trace for o in s.objects]) for leaf in branches(m, scene.copy())):
                        unexplained.append((spec.id, name))
                        break
    rate = rejected / total
    ok = not short and rate >= 0.95 and not unexplained
    verdict(3, ok, f"{total} mutants, {rate:.1%} rejected, {total - rejected} survivors all confirmed by "
            f"closed-form goals" if not unexplained else f"unexplained survivors {unexplained[:5]}; short {short}")


def _rand_point(rng):
    return Point(rng.uniform(-1, 2), rng.uniform(-1, 2))


def _checks(rng, make, count=10_000):
    done = 0
    while done < count:
        if make(rng):
            done += 1
    return done


def test_criterion_4_geometry_properties(verdict):
    rng = random.Random(20240501)
    failures = {"bisector": 0, "angle": 0, "residual": 0, "parallel": 0}

    def bisector(r):
        a, b, t = _rand_point(r), _rand_point(r), r.uniform(-3, 3)
        if a.dist(b) < 1e-3:
            return False
        m = construct(ToolKind.PERP_BISECTOR, [a, b])
        q = Point(m.anchor.x + t * m.dir[0], m.anchor.y + t * m.dir[1])
        failures["bisector"] += abs(q.dist(a) - q.dist(b)) >= 1e-9
        return True

    def angle(r):
        a, v, b = _rand_point(r), _rand_point(r), _rand_point(r)
        if min(a.dist(v), b.dist(v)) < 1e-2:
            return False
        ua = ((a.x - v.x) / a.dist(v), (a.y - v.y) / a.dist(v))
        ub = ((b.x - v.x) / b.dist(v), (b.y - v.y) / b.dist(v))
        if abs(ua[0] * ub[1] - ua[1] * ub[0]) < 1e-3:
            return False
        ray = construct(ToolKind.ANGLE_BISECTOR, [a, v, b])
        ang = lambda u: math.atan2(abs(u[0] * ray.dir[1] - u[1] * ray.dir[0]), u[0] * ray.dir[0] + u[1] * ray.dir[1])  # noqa: E731
        failures["angle"] += abs(ang(ua) - ang(ub)) >= 1e-9
        return True

    def on_both(r):
        kinds = r.choice(["ll", "lc", "cc", "sc"])
        objs = []
        for k in kinds:
            p, q = _rand_point(r), _rand_point(r)
            if p.dist(q) < 1e-2:
                return False
            if k == "l":
                objs.append(construct(ToolKind.LINE, [p, q]))
            elif k == "s":
                objs.append(Segment(p, q))
            else:
                objs.append(Circle(p, p.dist(q)))
        pts = intersect(*objs)
        if not pts:
            return False
        failures["residual"] += any(residual(o, p) >= 1e-9 for o in objs for p in pts)
        return True

    def parallel(r):
        a, b, c = _rand_point(r), _rand_point(r), _rand_point(r)
        if a.dist(b) < 1e-2:
            return False
        base = construct(ToolKind.LINE, [a, b])
        if residual(base, c) < 1e-3:
            return False
        par = construct(ToolKind.PARALLEL, [base, c])
        failures["parallel"] += bool(intersect(base, par))
        return True

    counts = {name: _checks(rng, fn) for name, fn in
              (("bisector", bisector), ("angle", angle), ("residual", on_both), ("parallel", parallel))}
    ok = all(v == 0 for v in failures.values()) and all(c >= 10_000 for c in counts.values())
    verdict(4, ok, f"checks {counts}, failures {failures}")


def test_criterion_5_baselines(bank, verdict):
    lcs, lcs_out = run_trials(bank, "lcs", 1000, seed=0)
    uni, uni_out = run_trials(bank, "1gram", 1000, seed=0)
    uni2, uni2_out = run_trials(bank, "1gram", 1000, seed=0)
    identical = uni.to_dict() == uni2.to_dict() and uni_out == uni2_out
    lcs_ok = lcs.fully_correct_rate <= 0.05
    uni_ok = 0.02 <= uni.fully_correct_rate <= 0.20
    verdict(5, lcs_ok and uni_ok and identical,
            f"LCS fully correct {lcs.fully_correct_rate:.3f} (<= 0.05: {lcs_ok}), "
            f"1-gram fully correct {uni.fully_correct_rate:.3f} (in [0.02, 0.20]: {uni_ok}), "
            f"seeded rerun identical: {identical}")


class _Stub:
    def __init__(self, scores):
        self.scores = scores

    def score(self, a, b):
        return next(v for k, v in self.scores.items() if f"[{k}]" in b)


def _kb(bank, scores):
    base = bank.get("seed-equilateral")
    out = []
    for pid in scores:
        spec = replace(base, id=pid, statement=f"{base.statement} [{pid}]")
        out.append(KnowledgeEntry(spec, spec.references[0]))
    return KnowledgeBase(tuple(out))


def test_criterion_6_adaptive_shots(bank, verdict):
    problem = bank.get("alpha-circle-in-square")
    cfg = AdaptiveConfig()
    few = {"p1": 0.9, "p2": 0.7, "p3": 0.6, "p4": 0.4, "p5": 0.3}
    a = [e.spec.id for e in adaptive_select(_kb(bank, few), problem, cfg, _Stub(few))]
    many = {f"p{i:02d}": 0.8 for i in range(20)}
    stage = stage_one(_kb(bank, many), problem, cfg, _Stub(many))
    b = [e.spec.id for e in adaptive_select(_kb(bank, many), problem, cfg, _Stub(many))]
    rng = random.Random(6)
    rule_ok = True
    for _ in range(200):
        scores = {f"r{i}": rng.random() for i in range(rng.randint(0, 30))}
        theta, cap = rng.random(), rng.randint(1, 20)
        kept = stage_one(_kb(bank, scores), problem, AdaptiveConfig(theta, cap, 1), _Stub(scores))
        rule_ok &= len(kept) == min(sum(v > theta for v in scores.values()), cap)
    ok = a == ["p1", "p2", "p3"] and len(stage) == 15 and b == ["p00", "p01", "p02", "p03", "p04"] and rule_ok
    verdict(6, ok, f"{{0.9,0.7,0.6,0.4,0.3}} -> {a}; 20x0.8 -> stage one {len(stage)}, picked {b}; "
            f"random min(threshold, cap) rule holds: {rule_ok}")


def test_criterion_7_rename_round_trip(bank, verdict):
    bad = []
    for spec in bank:
        for policy in ("+1", "+2", "+3", "x"):
            back = restore(apply_rename(RenamePolicy.parse(policy), spec))
            if back.statement != spec.statement or back.to_dict() != spec.to_dict():
                bad.append((spec.id, policy))
    renamed = apply_rename(RenamePolicy.parse("x"), bank.get("beta-root-two")).spec.statement
    expected = (
        "Let |AB|=1. Construct a point X on the line AB such that the length of AX is equal to √2. "
        "Do not use arbitrary numbers but only existing lengths and sizes in your solution."
    )
    ok = not bad and renamed == expected
    verdict(7, ok, f"{len(bank)} problems x 4 policies, {len(bad)} mismatches; C->X statement verbatim: {renamed == expected}")


def test_criterion_8_simulacra(bank, worked, verdict):
    spec = bank.get(worked["problem"])
    bundles = {role: build_prompt(role, spec, []) for role in AgentRole}
    backends = {AgentRole(k): ScriptedBackend(v) for k, v in worked["replies"].items()}
    result = run_dialogue(DialogueConfig(Configuration.SV_NL_SV_GT), spec, bundles, backends)
    want = [R.SOLVER_NL, R.VALIDATOR_NL, R.SOLVER_NL, R.SOLVER_GT, R.VALIDATOR_GT, R.SOLVER_GT]
    flow_ok = (
        result.transcript.roles == want
        and result.transcript.status is Status.APPROVED
        and max(t.round for t in result.transcript.turns) < 5
        and result.candidate is not None
        and verify(spec, result.candidate).fully_correct
    )
    capped = {
        R.SOLVER_GT: ScriptedBackend(["<Line Tool> 1: Draw line AC."], cycle=True),
        R.VALIDATOR_GT: ScriptedBackend(["<Line Tool> 1: Incorrect."], cycle=True),
    }
    cap = run_dialogue(DialogueConfig(Configuration.SV_GT), spec, bundles, capped)
    cap_ok = cap.transcript.status is Status.ROUND_CAP and len(capped[R.VALIDATOR_GT].calls) == 5
    verdict(8, flow_ok and cap_ok, f"role order {[r.value for r in result.transcript.roles]}, "
            f"status {result.transcript.status.value}, candidate verifies: {flow_ok}; "
            f"round cap after {len(capped[R.VALIDATOR_GT].calls)} validator rounds")


def test_criterion_9_vrp(bank, verdict):
    from euclidkit.geometry import DEFAULT_TOL

    eps = DEFAULT_TOL.eps_match
    checked = wrong = 0
    for spec in bank:
        for seed in range(5):
            for r in scene_relations(instantiate(spec, seed), spec).relations:
                checked += 1
                o = r.objects
                if r.kind == "parallel":
                    good = abs(_cross(_dir(o[0]), _dir(o[1]))) < eps
                elif r.kind == "perpendicular":
                    d1, d2 = _dir(o[0]), _dir(o[1])
                    good = abs(d1[0] * d2[0] + d1[1] * d2[1]) < eps
                elif r.kind == "equal_length":
                    good = abs(o[0].length - o[1].length) < eps
                elif r.kind == "incidence":
                    good = residual(o[1], o[0]) < eps
                else:
                    point = o[0]
                    good = all(
                        residual(obj, point) >= eps
                        for obj in instantiate(spec, seed)
                        if not isinstance(obj, Point)
                    )
                wrong += not good
    spec = bank.get("delta-halve-rectangle")
    text = describe_scene(instantiate(spec, 0), spec)
    example_ok = "AB is parallel to CD" in text and "E is an isolated point" in text
    verdict(9, wrong == 0 and example_ok and checked > 0,
            f"{checked} relations checked, {wrong} false; rectangle+E example present: {example_ok}")


def test_criterion_10_disclosure(verdict):
    readme = (ROOT / "README.md").read_text(encoding="utf-8")
    smoke = ROOT / "tests" / "test_remote_smoke.py"
    disclosed = "not reproduced" in readme.lower() and "--run-remote" in readme
    run = subprocess.run(
        [sys.executable, "-m", "pytest", str(smoke), "-q", "-rs", "-p", "no:cacheprovider"],
        capture_output=True, text=True, cwd=ROOT,
    )
    skipped = "1 skipped" in run.stdout and "needs --run-remote" in run.stdout
    verdict(10, disclosed and skipped,
            f"README disclosure: {disclosed}; remote smoke test skipped without --run-remote: {skipped}")
