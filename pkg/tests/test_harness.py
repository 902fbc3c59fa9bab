from __future__ import annotations

import itertools
import json
import random
from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euclidkit import cli
from euclidkit.bank import default_bank_path
from euclidkit.dsl import render
from euclidkit.harness import (
    BenchConfig,
    DomainError,
    RunRecord,
    SeedCoverageMismatch,
    Stat,
    aggregate,
    emit_report,
    load_records,
    load_report,
    pass_at_k,
    run_bench,
)

BANK = str(default_bank_path())


def brute(n, c, k):
    """Share of k-subsets of n samples (the first c correct) holding a correct one."""
    hits = total = 0
    for subset in itertools.combinations(range(n), k):
        total += 1
        hits += any(i < c for i in subset)
    return hits / total


def test_spot_values():
    assert pass_at_k(50, 0, 50) == 0.0
    assert pass_at_k(1, 1, 1) == 1.0
    assert pass_at_k(5, 2, 3) == pytest.approx(0.9, abs=1e-12)


def test_matches_enumeration_small():
    for n in range(1, 9):
        for c in range(n + 1):
            for k in range(1, n + 1):
                assert abs(pass_at_k(n, c, k) - brute(n, c, k)) <= 1e-12


def test_large_n_is_stable():
    assert pass_at_k(1000, 1, 50) == pytest.approx(50 / 1000)
    assert 0 < pass_at_k(10_000, 3, 7) < 1


@pytest.mark.parametrize("args", [(5, 6, 1), (5, 1, 0), (5, 1, 6), (-1, 0, 1), (5, 1.0, 1), (5, True, 1)])
def test_domain_errors(args):
    with pytest.raises(DomainError):
        pass_at_k(*args)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_monotone_in_c_and_k(t):
    n, c, k = t
    v = pass_at_k(n, c, k)
    if c < n:
        assert pass_at_k(n, c + 1, k) >= v
    if k < n:
        assert pass_at_k(n, c, k + 1) >= v
    assert v == pytest.approx(1 - comb(n - c, k) / comb(n, k), abs=1e-12)


def rec(problem, pack, c, seed, n=1, method="m"):
    return RunRecord(problem, pack, n, c, n, seed, method)


def test_constant_series():
    recs = [rec("p", "A", 1, s) for s in range(10)] + [rec("q", "A", 0, s) for s in range(10)]
    stat = aggregate(recs).methods["m"].overall["pass@1"]
    assert (stat.mean, stat.std, stat.seeds) == (50.0, 0.0, 10)


def test_two_seed_std():
    recs = []
    for seed, hits in ((0, 2), (1, 3)):
        recs += [rec(f"p{i}", "A", int(i < hits), seed) for i in range(5)]
    stat = aggregate(recs).methods["m"].overall["pass@1"]
    assert stat.mean == pytest.approx(50.0)
    assert stat.std == pytest.approx(100 * (2 * 0.01) ** 0.5)


def test_packs_are_averaged_before_overall():
    recs = [rec("a1", "A", 1, 0), rec("a2", "A", 1, 0), rec("b1", "B", 0, 0)]
    res = aggregate(recs, ["A", "B"]).methods["m"]
    assert res.overall["pass@1"].mean == pytest.approx(50.0)
    assert res.packs["A"]["pass@1"].mean == 100.0


def test_missing_problem_in_one_seed():
    recs = [rec("p", "A", 1, s) for s in range(4)] + [rec("q", "A", 1, s) for s in range(4) if s != 3]
    with pytest.raises(SeedCoverageMismatch):
        aggregate(recs)


def test_seed_order_does_not_matter():
    recs = [rec(f"p{i}", "A", random.Random(i * 7 + s).randint(0, 1), s) for s in range(6) for i in range(4)]
    shuffled = recs[:]
    random.Random(3).shuffle(shuffled)
    assert aggregate(recs).to_dict() == aggregate(shuffled).to_dict()


def test_record_rejects_bad_counts():
    with pytest.raises(DomainError):
        rec("p", "A", 2, 0, n=1)


def test_cell_rounding():
    assert Stat(32.25, 1.31, 10).cell() == "32.3 (± 1.3)"
    assert Stat(0.05, 0.15, 10).cell() == "0.1 (± 0.2)"


def test_markdown_one_method():
    report = aggregate([rec("p", "A", 1, 0)])
    md = emit_report(report, "md")
    rows = [line for line in md.splitlines() if line.startswith("| m ")]
    assert rows == ["| m | 100.0 (± 0.0) |"]


def test_json_round_trip_is_byte_identical():
    recs = [rec("p", "A", s % 2, s) for s in range(3)] + [rec("p", "A", 5, s, n=50) for s in range(3)]
    text = emit_report(aggregate(recs, ["A"], {"note": "x"}), "json")
    assert emit_report(load_report(text), "json") == text


SOLVER_REPLY = "\n".join(
    [
        "Line Tool: Construct line AC.",
        "Perpendicular Bisector Tool: Construct the perpendicular bisector of AB, named m.",
        "Intersect Tool: Mark the intersection of m and AB as E.",
        "Intersect Tool: Mark the intersection of m and AC as F.",
        "Circle Tool: Construct the circle with center F and radius FE.",
    ]
)


@pytest.fixture()
def scripted_config(tmp_path):
    cfg = {
        "configuration": "SV_GT",
        "samples_pass50": 3,
        "rename_policy": "x",
        "vrp": "on",
        "backends": {
            "solver_gt": {
                "kind": "scripted",
                "cycle": True,
                "replies": ["Line Tool: Construct line AB."],
                "replies_by_problem": {"alpha-circle-in-square": [SOLVER_REPLY]},
            },
            "validator_gt": {"kind": "scripted", "cycle": True, "replies": ["Step 1: Correct."]},
        },
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_bench_end_to_end(tmp_path, scripted_config, bank):
    cfg = BenchConfig.from_dict(json.loads(scripted_config.read_text()), tmp_path)
    out = tmp_path / "run"
    report = run_bench(bank, cfg, out, ["Alpha"], seeds=2)
    alpha = len(bank.in_packs(["Alpha"]))
    res = report.methods["SV_GT"]
    assert res.overall["pass@1"].mean == pytest.approx(100 / alpha)
    assert res.overall["pass@3"].std == 0.0
    records = load_records(out / "records.jsonl")
    assert len(records) == 2 * 2 * alpha
    hit = next(r for r in records if r.problem == "alpha-circle-in-square" and r.k == 3)
    assert hit.c == 3
    lines = (out / hit.transcripts).read_text().splitlines()
    assert {json.loads(line)["sample"] for line in lines} == {0, 1, 2}
    assert (out / "report.md").read_text().startswith("| Method |")


def test_config_requires_backends():
    with pytest.raises(ValueError, match="validator_gt"):
        BenchConfig.from_dict({"configuration": "SV_GT", "backends": {"solver_gt": {"kind": "scripted"}}})
    cfg = BenchConfig.from_dict(
        {"configuration": "SV_GT", "feedback_mode": True, "backends": {"solver_gt": {"kind": "scripted"}}}
    )
    assert cfg.label == "SV_GT+FB"


# --- command line ---


def test_cli_verify(tmp_path, bank, capsys):
    spec = bank.get("alpha-circle-in-square")
    good = tmp_path / "good.txt"
    good.write_text(render(spec.references[0]))
    assert cli.main(["verify", "--bank", BANK, "--problem", spec.id, "--solution", str(good)]) == 0
    assert json.loads(capsys.readouterr().out)["fully_correct"] is True
    prose = tmp_path / "prose.txt"
    prose.write_text(SOLVER_REPLY)
    assert cli.main(["verify", "--bank", BANK, "--problem", spec.id, "--solution", str(prose)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("line(A, C) -> AC")
    assert cli.main(["verify", "--bank", BANK, "--problem", spec.id, "--solution", str(bad), "--instances", "2"]) == 1


def test_cli_unknown_problem(tmp_path, capsys):
    sol = tmp_path / "s.txt"
    sol.write_text("line(A, B) -> l")
    assert cli.main(["verify", "--bank", BANK, "--problem", "nope", "--solution", str(sol)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_rename(capsys):
    assert cli.main(["rename", "--bank", BANK, "--problem", "beta-root-two", "--policy", "x"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["map"] == {"C": "X"} and out["inverse"] == {"X": "C"}
    assert "length of AX" in out["statement"]


def test_cli_vrp(capsys):
    assert cli.main(["vrp", "--bank", BANK, "--problem", "delta-halve-rectangle"]) == 0
    assert "E is an isolated point" in capsys.readouterr().out


def test_cli_baseline(capsys):
    assert cli.main(["baseline", "--bank", BANK, "--method", "1gram", "--trials", "20", "--seed", "4"]) == 0
    first = capsys.readouterr().out
    cli.main(["baseline", "--bank", BANK, "--method", "1gram", "--trials", "20", "--seed", "4"])
    assert capsys.readouterr().out == first
    assert json.loads(first)["trials"] == 20


def test_cli_bench_and_report(tmp_path, scripted_config, capsys):
    out = tmp_path / "o"
    code = cli.main(
        ["bench", "--bank", BANK, "--config", str(scripted_config), "--out", str(out), "--packs", "Alpha", "--seeds", "1"]
    )
    assert code == 0
    capsys.readouterr()
    assert cli.main(["report", "--in", str(out), "--format", "json"]) == 0
    assert capsys.readouterr().out == (out / "report.json").read_text()
    assert cli.main(["report", "--in", str(out)]) == 0
    assert "SV_GT" in capsys.readouterr().out
