"""Reader and writer for the pairwise subset of the UAI ``MARKOV`` format.

Table entries are read as energies (no log transform). Factors may have
arity 0 (added to the constant), 1 or 2; repeated factors over the same
scope are summed. ``#`` starts a comment that runs to the end of the line.
"""
from __future__ import annotations

import numpy as np

from .model import GraphicalModel

__all__ = ["UAIFormatError", "parse_uai", "serialize_uai", "read_uai", "write_uai"]


class UAIFormatError(ValueError):
    def __init__(self, message, line=None, col=None):
        where = f"line {line}, col {col}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.col = col


class _Tokens:
    def __init__(self, text: str):
        self.items = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0]
            pos = 0
            for tok in body.split():
                col = body.index(tok, pos)
                pos = col + len(tok)
                self.items.append((tok, lineno, col + 1))
        self.k = 0

    def next(self, what):
        if self.k >= len(self.items):
            last = self.items[-1] if self.items else ("", 1, 1)
            raise UAIFormatError(f"unexpected end of file, expected {what}", last[1], last[2])
        tok = self.items[self.k]
        self.k += 1
        return tok

    def integer(self, what, lo=None, hi=None):
        tok, line, col = self.next(what)
        try:
            val = int(tok)
        except ValueError:
            raise UAIFormatError(f"expected integer {what}, got {tok!r}", line, col) from None
        if (lo is not None and val < lo) or (hi is not None and val > hi):
            raise UAIFormatError(f"{what} {val} out of range", line, col)
        return val, line, col

    def number(self, what):
        tok, line, col = self.next(what)
        try:
            val = float(tok)
        except ValueError:
            raise UAIFormatError(f"expected number {what}, got {tok!r}", line, col) from None
        if not np.isfinite(val):
            raise UAIFormatError(f"non-finite value {tok!r}", line, col)
        return val


def parse_uai(text: str) -> GraphicalModel:
    toks = _Tokens(text)
    head, line, col = toks.next("header")
    if head.upper() != "MARKOV":
        raise UAIFormatError(f"expected header MARKOV, got {head!r}", line, col)
    n, _, _ = toks.integer("node count", lo=0)
    labels = [toks.integer(f"cardinality of node {v}", lo=1)[0] for v in range(n)]
    n_factors, _, _ = toks.integer("factor count", lo=0)
    scopes = []
    for a in range(n_factors):
        arity, line, col = toks.integer(f"arity of factor {a}", lo=0)
        if arity > 2:
            raise UAIFormatError(f"factor {a} has arity {arity}; only arity <= 2 is supported", line, col)
        scope = tuple(toks.integer(f"variable of factor {a}", lo=0, hi=n - 1)[0] for _ in range(arity))
        if arity == 2 and scope[0] == scope[1]:
            raise UAIFormatError(f"factor {a} repeats variable {scope[0]}", line, col)
        scopes.append(scope)

    unary = [np.zeros(k) for k in labels]
    constant = 0.0
    edge_index = {}
    edges, pairwise = [], []
    for a, scope in enumerate(scopes):
        size = int(np.prod([labels[v] for v in scope])) if scope else 1
        count, line, col = toks.integer(f"entry count of factor {a}", lo=0)
        if count != size:
            raise UAIFormatError(f"factor {a} declares {count} entries, expected {size}", line, col)
        values = np.array([toks.number(f"entry of factor {a}") for _ in range(size)])
        if not scope:
            constant += values[0]
        elif len(scope) == 1:
            unary[scope[0]] += values
        else:
            u, v = scope
            table = values.reshape(labels[u], labels[v])
            if (u, v) in edge_index:
                pairwise[edge_index[(u, v)]] += table
            elif (v, u) in edge_index:
                pairwise[edge_index[(v, u)]] += table.T
            else:
                edge_index[(u, v)] = len(edges)
                edges.append((u, v))
                pairwise.append(table.copy())
    if toks.k != len(toks.items):
        tok, line, col = toks.items[toks.k]
        raise UAIFormatError(f"trailing data {tok!r}", line, col)
    return GraphicalModel(tuple(labels), tuple(edges), unary, pairwise, constant)


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def serialize_uai(f: GraphicalModel) -> str:
    """Text form with one unary factor per node, one factor per edge, then the constant."""
    out = ["MARKOV", str(f.n_nodes), " ".join(map(str, f.labels))]
    with_const = f.constant != 0.0
    out.append(str(f.n_nodes + f.n_edges + int(with_const)))
    out.extend(f"1 {v}" for v in range(f.n_nodes))
    out.extend(f"2 {u} {v}" for u, v in f.edges)
    if with_const:
        out.append("0")
    out.append("")
    for t in f.unary:
        out.append(str(t.size))
        out.append(" ".join(_fmt(x) for x in t))
        out.append("")
    for t in f.pairwise:
        out.append(str(t.size))
        out.extend(" ".join(_fmt(x) for x in row) for row in t)
        out.append("")
    if with_const:
        out.extend(["1", _fmt(f.constant), ""])
    return "\n".join(out)


def read_uai(path) -> GraphicalModel:
    with open(path, encoding="utf-8") as fh:
        return parse_uai(fh.read())


def write_uai(f: GraphicalModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_uai(f))
