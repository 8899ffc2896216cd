"""Text format for wrapping rules.

Grammar (one statement per line, "#" starts a comment, blank lines ignored):

    vertices: v1 v2 ...          # optional; defaults to one vertex "v"
    edges: e1 e2 ...             # loop edges at the unique vertex
    edge e: u -> w               # edge with explicit endpoints
    rule e = x y^-1 z^3 ...      # the edge path for e

Identifiers match [A-Za-z0-9_]+ and must not collide between vertices and
edges.  A letter is an edge id with an optional nonzero integer exponent:
"x" means x, "x^-1" its reversal, "x^3" three copies, "x^-2" two reversed
copies.  Every declared edge needs exactly one rule line.  Vertex images are
inferred from word endpoints and must be consistent across edges.

Parse errors carry a line (and usually a column) plus a `kind`:
"syntax", "unknown-edge", "continuity", "cancellation", or "structure".
"""

from __future__ import annotations

import re

from .presolenoid import (
    Graph,
    Letter,
    ParseError,
    ValidationError,
    WrappingRule,
    graph,
    letter_end,
    letter_start,
    wrapping_rule,
)

_ID = re.compile(r"[A-Za-z0-9_]+\Z")
_LETTER = re.compile(r"([A-Za-z0-9_]+)(?:\^(-?\d+))?\Z")


def _err(kind: str, message: str, line: int, column=None) -> ParseError:
    e = ParseError(message, line=line, column=column)
    e.kind = kind
    return e


def _tokens(body: str):
    """Whitespace-separated tokens with 1-based column positions."""
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", body)]


def parse_solenoid_file(text: str) -> WrappingRule:
    vertices = None
    vertices_line = None
    edge_decls = []  # (edge id, src or None, dst or None, line)
    rule_lines = {}  # edge id -> (tokens, line)
    rule_order = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        toks = _tokens(body)
        head, head_col = toks[0]
        if head == "vertices:":
            if vertices is not None:
                raise _err("syntax", "duplicate vertices: line", lineno, head_col)
            if len(toks) == 1:
                raise _err("syntax", "vertices: needs at least one id", lineno, head_col)
            vertices = [t for t, _ in toks[1:]]
            vertices_line = lineno
            for t, c in toks[1:]:
                if not _ID.match(t):
                    raise _err("syntax", f"bad vertex id {t!r}", lineno, c)
        elif head == "edges:":
            if len(toks) == 1:
                raise _err("syntax", "edges: needs at least one id", lineno, head_col)
            for t, c in toks[1:]:
                if not _ID.match(t):
                    raise _err("syntax", f"bad edge id {t!r}", lineno, c)
                edge_decls.append((t, None, None, lineno))
        elif head == "edge":
            # edge e: u -> w
            joined = [t for t, _ in toks]
            if len(toks) != 5 or not joined[1].endswith(":") or joined[3] != "->":
                raise _err("syntax", "expected: edge <id>: <src> -> <dst>", lineno, head_col)
            eid = joined[1][:-1]
            if not _ID.match(eid) or not _ID.match(joined[2]) or not _ID.match(joined[4]):
                raise _err("syntax", "bad id in edge declaration", lineno, head_col)
            edge_decls.append((eid, joined[2], joined[4], lineno))
        elif head == "rule":
            if len(toks) < 4 or toks[2][0] != "=":
                raise _err("syntax", "expected: rule <edge> = <letters>", lineno, head_col)
            eid, eid_col = toks[1]
            if not _ID.match(eid):
                raise _err("syntax", f"bad edge id {eid!r}", lineno, eid_col)
            if eid in rule_lines:
                raise _err("syntax", f"duplicate rule for edge {eid}", lineno, eid_col)
            rule_lines[eid] = (toks[3:], lineno)
            rule_order.append(eid)
        else:
            raise _err("syntax", f"unrecognized statement {head!r}", lineno, head_col)

    if not edge_decls:
        raise _err("structure", "no edges declared", vertices_line or 1)
    if vertices is None:
        vertices = ["v"]
    loop_decls = [d for d in edge_decls if d[1] is None]
    if loop_decls and len(vertices) != 1:
        raise _err(
            "structure",
            "the edges: shorthand needs a single vertex",
            loop_decls[0][3],
        )
    only = vertices[0] if len(vertices) == 1 else None
    edges = [(e, s if s is not None else only, t if t is not None else only, ln) for e, s, t, ln in edge_decls]
    for e, s, t, ln in edges:
        if s not in vertices or t not in vertices:
            raise _err("structure", f"edge {e} uses an undeclared vertex", ln)
    try:
        g = graph(vertices, [(e, s, t) for e, s, t, _ in edges])
    except ValidationError as exc:
        raise _err("structure", str(exc), edges[0][3]) from exc

    edge_ids = set(g.edge_ids)
    for eid, (_, ln) in rule_lines.items():
        if eid not in edge_ids:
            raise _err("unknown-edge", f"rule for undeclared edge {eid}", ln)
    for e, _, _, ln in edges:
        if e not in rule_lines:
            raise _err("structure", f"edge {e} has no rule line", ln)

    words = {}
    lines_of = {}
    for eid in g.edge_ids:
        toks, ln = rule_lines[eid]
        word = []
        for t, c in toks:
            m = _LETTER.match(t)
            if not m:
                raise _err("syntax", f"bad letter {t!r}", ln, c)
            base, exp = m.group(1), m.group(2)
            if base not in edge_ids:
                raise _err("unknown-edge", f"unknown edge {base!r} in word", ln, c)
            k = int(exp) if exp is not None else 1
            if k == 0:
                raise _err("syntax", "zero exponent", ln, c)
            sign = 1 if k > 0 else -1
            word.extend(Letter(base, sign) for _ in range(abs(k)))
        words[eid] = tuple(word)
        lines_of[eid] = ln

    # infer vertex images from word endpoints
    image = {}
    for eid in g.edge_ids:
        word = words[eid]
        for v, w in ((g.source(eid), letter_start(g, word[0])), (g.target(eid), letter_end(g, word[-1]))):
            if v in image and image[v] != w:
                raise _err(
                    "continuity",
                    f"word for {eid} implies vertex {v} maps to {w}, but an earlier rule said {image[v]}",
                    lines_of[eid],
                )
            image[v] = w
    missing = [v for v in g.vertices if v not in image]
    if missing:
        raise _err("structure", f"cannot infer the image of isolated vertex {missing[0]}", 1)

    # located checks with positions before handing off to the constructor
    for eid in g.edge_ids:
        word, ln = words[eid], lines_of[eid]
        for k in range(len(word) - 1):
            # positions are 0-based; k+1 names the second letter of the pair
            if word[k].edge == word[k + 1].edge and word[k].sign == -word[k + 1].sign:
                raise _err(
                    "cancellation",
                    f"adjacent cancellation in word for {eid} at word position {k + 1}",
                    ln,
                )
            if letter_end(g, word[k]) != letter_start(g, word[k + 1]):
                raise _err(
                    "continuity",
                    f"word for {eid} is not a path at word position {k + 1}",
                    ln,
                )
    try:
        return wrapping_rule(g, image, words)
    except ValidationError as exc:
        raise _err("structure", str(exc), 1) from exc


def format_rule(rule: WrappingRule) -> str:
    """Render a rule back to DSL text (single-vertex rules use edges:)."""
    g = rule.graph
    lines = []
    single = len(g.vertices) == 1
    if not single:
        lines.append("vertices: " + " ".join(g.vertices))
        for e, s, t in g.edges:
            lines.append(f"edge {e}: {s} -> {t}")
    else:
        lines.append("edges: " + " ".join(g.edge_ids))
    for e in g.edge_ids:
        parts = []
        for letter in rule.words[e]:
            if parts and parts[-1][0] == letter:
                parts[-1][1] += 1
            else:
                parts.append([letter, 1])
        rendered = []
        for letter, count in parts:
            if letter.sign > 0:
                rendered.append(letter.edge if count == 1 else f"{letter.edge}^{count}")
            else:
                rendered.append(f"{letter.edge}^-{count}")
        lines.append(f"rule {e} = " + " ".join(rendered))
    return "\n".join(lines) + "\n"
