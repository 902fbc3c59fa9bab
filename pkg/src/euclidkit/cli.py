"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bank import instantiate, load_bank
from .dsl import DslError, parse


def _program(text: str, known):
    try:
        return parse(text)
    except DslError:
        from .extract import extract

        return extract(text, known)


def cmd_verify(args) -> int:
    from .verifier import verify

    spec = load_bank(args.bank).get(args.problem)
    program = _program(Path(args.solution).read_text(encoding="utf-8"), spec.initial_labels())
    report = verify(spec, program, args.instances, args.seed)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.fully_correct else 1


def cmd_bench(args) -> int:
    from .harness import BenchConfig, emit_report, run_bench

    bank = load_bank(args.bank)
    cfg_path = Path(args.config)
    cfg = BenchConfig.from_dict(json.loads(cfg_path.read_text(encoding="utf-8")), cfg_path.parent)
    packs = [p.strip() for p in args.packs.split(",")] if args.packs else None
    report = run_bench(bank, cfg, args.out, packs, args.seeds)
    print(emit_report(report, "md"), end="")
    return 0


def cmd_baseline(args) -> int:
    from .baselines import run_trials

    summary, _ = run_trials(load_bank(args.bank), args.method, args.trials, args.seed)
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_vrp(args) -> int:
    from .prompts import describe_scene

    spec = load_bank(args.bank).get(args.problem)
    print(describe_scene(instantiate(spec, args.seed), spec))
    return 0


def cmd_rename(args) -> int:
    from .prompts import RenamePolicy, apply_rename

    spec = load_bank(args.bank).get(args.problem)
    result = apply_rename(RenamePolicy.parse(args.policy), spec)
    out = {"statement": result.spec.statement, "map": result.mapping, "inverse": result.inverse}
    if result.note:
        out["note"] = result.note
    print(json.dumps(out, indent=2, sort_keys=True, ensure_ascii=False))
    return 0


def cmd_report(args) -> int:
    from .harness import emit_report, load_report

    src = Path(args.input)
    if src.is_dir():
        src = src / "report.json"
    print(emit_report(load_report(src.read_text(encoding="utf-8")), args.format), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="euclidkit", description="Constructive-geometry benchmark tools.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="verify a solution program against a problem")
    p.add_argument("--bank", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run agent dialogues and score pass@k")
    p.add_argument("--bank", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--packs", help="comma-separated pack names")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("baseline", help="score a random baseline")
    p.add_argument("--bank", required=True)
    p.add_argument("--method", required=True, choices=["lcs", "1gram", "2gram", "3gram"])
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("vrp", help="print the scene description of an instance")
    p.add_argument("--bank", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_vrp)

    p = sub.add_parser("rename", help="rename the target of a problem statement")
    p.add_argument("--bank", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--policy", required=True, choices=["x", "+1", "+2", "+3"])
    p.set_defaults(func=cmd_rename)

    p = sub.add_parser("report", help="render a saved benchmark report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["md", "json"], default="md")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, DslError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
