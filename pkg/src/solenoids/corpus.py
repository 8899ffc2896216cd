"""Bundled example rules and a seeded fuzz generator."""

from __future__ import annotations

import random
from importlib import resources

from .dsl import parse_solenoid_file
from .presolenoid import Letter, SolenoidError, WrappingRule, validate_axioms, wrapping_rule, graph

CORPUS_NAMES = ("w1", "w2", "w3", "w4", "dyadic", "disjoint", "w2sub")


def corpus_text(name: str) -> str:
    if name not in CORPUS_NAMES:
        raise KeyError(f"unknown corpus entry {name!r}")
    return resources.files("solenoids").joinpath("data").joinpath(f"{name}.sol").read_text()


def corpus_rule(name: str) -> WrappingRule:
    return parse_solenoid_file(corpus_text(name))


_EDGE_POOL = ("a", "b", "c")


def _attempt_wedge(rng: random.Random) -> WrappingRule:
    ids = list(_EDGE_POOL[: rng.randint(1, 3)])
    words = {}
    for e in ids:
        length = rng.randint(2, 5)
        word = []
        while len(word) < length:
            cand = Letter(rng.choice(ids), rng.choice((1, -1)))
            if word and word[-1].edge == cand.edge and word[-1].sign == -cand.sign:
                continue
            word.append(cand)
        words[e] = word
    g = graph(["v"], [(e, "v", "v") for e in ids])
    return wrapping_rule(g, {"v": "v"}, words)


def fuzz_rules(seed: int, count: int, require_stabilizable: bool = True) -> list:
    """Deterministic stream of single-vertex rules passing every axiom.

    With `require_stabilizable` the rules are additionally filtered to ones
    whose passage system stabilizes within a small power budget, so bulk
    property runs stay fast.
    """
    from .blocks import stabilize  # deferred: blocks depends on this package

    rng = random.Random(seed)
    out = []
    attempts = 0
    budget = max(2000, count * 500)
    while len(out) < count:
        attempts += 1
        if attempts > budget:
            raise RuntimeError("fuzz generator exhausted its attempt budget")
        rule = _attempt_wedge(rng)
        try:
            report = validate_axioms(rule, fold_bound=4)
        except SolenoidError:
            continue
        if not report.all_passed:
            continue
        if require_stabilizable:
            try:
                stabilize(rule, max_exponent=6, max_letters=50_000)
            except SolenoidError:
                continue
        out.append(rule)
    return out
