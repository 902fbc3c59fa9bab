"""Straightedge-and-compass construction benchmark: kernel, DSL, verifier and agent harness."""
from __future__ import annotations

from .bank import Bank, ProblemSpec, instantiate, knowledge_for, load_bank
from .dsl import Program, Step, parse, render
from .extract import extract
from .geometry import Scene, Tolerances, ToolKind
from .harness import aggregate, emit_report, pass_at_k
from .verifier import execute, verify

__all__ = [
    "Bank",
    "ProblemSpec",
    "Program",
    "Scene",
    "Step",
    "Tolerances",
    "ToolKind",
    "aggregate",
    "emit_report",
    "execute",
    "extract",
    "instantiate",
    "knowledge_for",
    "load_bank",
    "parse",
    "pass_at_k",
    "render",
    "verify",
]
