"""Exact local-polytope machinery for small models.

Everything here solves LPs with the dense simplex in :mod:`.simplex` or
enumerates labelings, so it is only meant for desk-sized instances: test
oracles, the exact pruning algorithm and the maximum-persistency search.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import GraphicalModel, LiftedPoint, energies
from .simplex import Simplex
from .substitution import SubsetToOne, apply_many
from .verification import verification_costs

__all__ = [
    "OracleSizeError",
    "OracleLimits",
    "LocalPolytopeLP",
    "solve_lp",
    "support_sets",
    "is_strictly_improving_brute",
    "is_relaxed_improving_exact",
    "algorithm1",
    "max_persistency_brute",
    "brute_force_minimum",
    "all_labelings",
]

SUPPORT_TOL = 1e-7


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_nodes: int = 12
    max_labels: int = 5
    max_configurations: int = 10**7
    max_subsets_log2: int = 20

    def check_lp(self, f: GraphicalModel):
        if f.n_nodes > self.max_nodes or max(f.labels, default=1) > self.max_labels:
            raise OracleSizeError(
                f"model with {f.n_nodes} nodes and up to {max(f.labels)} labels exceeds the "
                f"LP oracle limits ({self.max_nodes} nodes, {self.max_labels} labels)"
            )


DEFAULT_LIMITS = OracleLimits()


def _layout(f: GraphicalModel):
    """Column offsets: ``mu_0`` first, then node blocks, then edge blocks."""
    unary_at, k = [], 1
    for n_lab in f.labels:
        unary_at.append(k)
        k += n_lab
    pair_at = []
    for u, v in f.edges:
        pair_at.append(k)
        k += f.labels[u] * f.labels[v]
    return unary_at, pair_at, k


class LocalPolytopeLP:
    """Constraint system of the local polytope for one model structure.

    Only labels and edges matter; any cost vector over the same structure
    can be optimized with :meth:`minimize`. ``column_order`` permutes the
    columns fed to the simplex (the results are reported in the natural
    order) and exists to test pivot-order independence.
    """

    def __init__(self, f: GraphicalModel, limits: OracleLimits = DEFAULT_LIMITS, column_order=None):
        limits.check_lp(f)
        self.labels = f.labels
        self.edges = f.edges
        self.unary_at, self.pair_at, n = _layout(f)
        self.n_vars = n
        rows, b = [], []

        def row(entries, rhs=0.0):
            r = np.zeros(n)
            for col, val in entries:
                r[col] += val
            rows.append(r)
            b.append(rhs)

        row([(0, 1.0)], 1.0)
        for v, k in enumerate(f.labels):
            row([(self.unary_at[v] + i, 1.0) for i in range(k)] + [(0, -1.0)])
        for e, (u, v) in enumerate(f.edges):
            ku, kv = f.labels[u], f.labels[v]
            base = self.pair_at[e]
            for i in range(ku):
                row([(base + i * kv + j, 1.0) for j in range(kv)] + [(self.unary_at[u] + i, -1.0)])
            for j in range(kv):
                row([(base + i * kv + j, 1.0) for i in range(ku)] + [(self.unary_at[v] + j, -1.0)])
        self.A = np.array(rows)
        self.b = np.array(b)
        self.order = np.arange(n) if column_order is None else np.asarray(column_order)
        if sorted(self.order.tolist()) != list(range(n)):
            raise ValueError("column_order must be a permutation of the columns")
        self.simplex = Simplex(self.A[:, self.order], self.b)

    def cost_vector(self, g: GraphicalModel) -> np.ndarray:
        if g.labels != self.labels or g.edges != self.edges:
            raise ValueError("cost vector structure differs from the LP structure")
        c = np.empty(self.n_vars)
        c[0] = g.constant
        for v, t in enumerate(g.unary):
            c[self.unary_at[v] : self.unary_at[v] + t.size] = t
        for e, t in enumerate(g.pairwise):
            c[self.pair_at[e] : self.pair_at[e] + t.size] = t.ravel()
        return c

    def unary_columns(self, v: int) -> range:
        return range(self.unary_at[v], self.unary_at[v] + self.labels[v])

    def minimize(self, c, forbidden=None):
        """Optimize over the polytope; vectors use the natural column order."""
        cp = np.asarray(c)[self.order]
        fp = None if forbidden is None else np.asarray(forbidden)[self.order]
        value, xp = self.simplex.minimize(cp, fp)
        x = np.empty_like(xp)
        x[self.order] = xp
        return value, x

    def reduced_costs(self) -> np.ndarray:
        dp = self.simplex.reduced_costs()
        d = np.empty_like(dp)
        d[self.order] = dp
        return d

    def to_point(self, x) -> LiftedPoint:
        unary = [x[self.unary_at[v] : self.unary_at[v] + k].copy() for v, k in enumerate(self.labels)]
        pairwise = [
            x[self.pair_at[e] : self.pair_at[e] + self.labels[u] * self.labels[v]].reshape(
                self.labels[u], self.labels[v]
            )
            for e, (u, v) in enumerate(self.edges)
        ]
        return LiftedPoint(float(x[0]), unary, pairwise)

    def optimal_face(self, c):
        """Minimize ``c``; returns ``(value, x, forbidden)``.

        ``forbidden`` marks columns with positive reduced cost: by
        complementary slackness the optimal face is exactly the feasible
        set with those columns at zero.
        """
        value, x = self.minimize(c)
        scale = 1.0 + float(np.abs(c).max(initial=0.0))
        forbidden = self.reduced_costs() > 1e-9 * scale
        return value, x, forbidden

    def maximize_on_face(self, columns, forbidden) -> tuple:
        """Max of the sum of ``columns`` over the optimal face."""
        c = np.zeros(self.n_vars)
        c[list(columns)] = -1.0
        value, x = self.minimize(c, forbidden)
        return -value, x


def solve_lp(g: GraphicalModel, lp: LocalPolytopeLP | None = None, limits=DEFAULT_LIMITS):
    """Optimal value of the relaxation and one optimal vertex."""
    lp = lp or LocalPolytopeLP(g, limits)
    value, x = lp.minimize(lp.cost_vector(g))
    return value, lp.to_point(x)


def support_sets(g: GraphicalModel, lp: LocalPolytopeLP | None = None, tol: float = SUPPORT_TOL,
                 limits=DEFAULT_LIMITS) -> list:
    """Per node, the labels used by at least one optimal relaxed solution.

    Solves for the optimal face, then repeatedly maximizes the total mass on
    the not-yet-confirmed node columns inside that face. Each round either
    confirms new labels or proves the rest identically zero, which gives the
    same sets as maximizing every coordinate separately.
    """
    lp = lp or LocalPolytopeLP(g, limits)
    _, x, forbidden = lp.optimal_face(lp.cost_vector(g))
    unary_cols = [c for v in range(len(lp.labels)) for c in lp.unary_columns(v)]
    support = {c for c in unary_cols if x[c] > tol}
    remaining = [c for c in unary_cols if c not in support and not forbidden[c]]
    while remaining:
        total, x = lp.maximize_on_face(remaining, forbidden)
        if total <= tol:
            break
        found = {c for c in remaining if x[c] > tol}
        if not found:
            found = {max(remaining, key=lambda c: x[c])}
        support |= found
        remaining = [c for c in remaining if c not in found]
    return [
        sorted(i for i, c in enumerate(lp.unary_columns(v)) if c in support)
        for v in range(len(lp.labels))
    ]


def all_labelings(labels, chunk: int = 1 << 16):
    """Yield every labeling, lexicographically, in ``(count, n)`` chunks."""
    it = itertools.product(*[range(k) for k in labels])
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), len(labels))


def _check_enumerable(labels, limits):
    total = 1
    for k in labels:
        total *= k
    if total > limits.max_configurations:
        raise OracleSizeError(f"{total} labelings exceed the enumeration limit {limits.max_configurations}")


def brute_force_minimum(f: GraphicalModel, limits=DEFAULT_LIMITS):
    """``(min energy, first minimizing labeling)`` by enumeration."""
    _check_enumerable(f.labels, limits)
    best, arg = np.inf, None
    for X in all_labelings(f.labels):
        E = energies(f, X)
        k = int(np.argmin(E))
        if E[k] < best:
            best, arg = float(E[k]), tuple(int(i) for i in X[k])
    return best, arg


class ImprovingCheck(NamedTuple):
    ok: bool
    witness: tuple | None

    def __bool__(self):
        return self.ok


def is_strictly_improving_brute(f: GraphicalModel, p: SubsetToOne, limits=DEFAULT_LIMITS) -> ImprovingCheck:
    """Check ``E(p(x)) < E(x)`` for every labeling with ``p(x) != x``.

    Integer models are compared exactly; otherwise a violation is any
    ``E(p(x)) >= E(x) - 1e-9 * scale``.
    """
    p.validate(f.labels)
    _check_enumerable(f.labels, limits)
    slack = 0.0 if f.integer_costs else 1e-9 * (1.0 + f.cost_scale())
    for X in all_labelings(f.labels):
        PX = apply_many(p, f.labels, X)
        moved = np.any(PX != X, axis=1)
        if not moved.any():
            continue
        bad = moved & (energies(f, PX) >= energies(f, X) - slack)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            return ImprovingCheck(False, tuple(int(i) for i in X[k]))
    return ImprovingCheck(True, None)


def is_relaxed_improving_exact(f: GraphicalModel, p: SubsetToOne, lp: LocalPolytopeLP | None = None,
                               tol: float = SUPPORT_TOL, limits=DEFAULT_LIMITS) -> bool:
    """Whether ``p`` fixes every label in the optimal support of its verification LP."""
    p.validate(f.labels)
    lp = lp or LocalPolytopeLP(f, limits)
    if p.size == 0:
        return True
    g = verification_costs(f, p)
    value, x, forbidden = lp.optimal_face(lp.cost_vector(g))
    if value < -tol:
        return False
    moved = [lp.unary_at[v] + i for v, s in enumerate(p.eliminated) for i in s]
    if any(x[c] > tol for c in moved):
        return False
    open_cols = [c for c in moved if not forbidden[c]]
    if not open_cols:
        return True
    total, _ = lp.maximize_on_face(open_cols, forbidden)
    return total <= tol


def algorithm1(f: GraphicalModel, y, lp: LocalPolytopeLP | None = None, on_round=None,
               limits=DEFAULT_LIMITS) -> SubsetToOne:
    """Iterative pruning with exact support sets.

    Starts from the substitution mapping everything to ``y`` and removes the
    support of the verification LP from the substituted sets until none of
    them intersects it. ``on_round(k, p)`` is called with each candidate.
    """
    lp = lp or LocalPolytopeLP(f, limits)
    p = SubsetToOne.full(f.labels, y)
    for k in range(sum(n - 1 for n in f.labels) + 1):
        if on_round is not None:
            on_round(k, p)
        if p.size == 0:
            return p
        support = support_sets(verification_costs(f, p), lp)
        hit = [set(s) & set(o) for s, o in zip(p.eliminated, support)]
        if not any(hit):
            return p
        p = p.with_eliminated([sorted(set(s) - h) for s, h in zip(p.eliminated, hit)])
    raise AssertionError("pruning did not terminate within the label-count bound")


def max_persistency_brute(f: GraphicalModel, y, lp: LocalPolytopeLP | None = None,
                          limits=DEFAULT_LIMITS) -> SubsetToOne:
    """Largest strictly relaxed-improving substitution towards ``y``, by enumeration.

    Also asserts that the maximum contains every other feasible candidate.
    """
    y = tuple(int(i) for i in y)
    movable = [[i for i in range(k) if i != yv] for k, yv in zip(f.labels, y)]
    if sum(len(m) for m in movable) > limits.max_subsets_log2:
        raise OracleSizeError("too many substitutions to enumerate")
    lp = lp or LocalPolytopeLP(f, limits)
    per_node = [
        [c for r in range(len(m) + 1) for c in itertools.combinations(m, r)] for m in movable
    ]
    feasible = []
    for combo in itertools.product(*per_node):
        p = SubsetToOne(y, combo)
        if is_relaxed_improving_exact(f, p, lp):
            feasible.append(p)
    best = max(feasible, key=lambda q: q.size)
    for q in feasible:
        assert all(set(a) <= set(b) for a, b in zip(q.eliminated, best.eliminated)), (
            "feasible substitutions have no unique maximum"
        )
    return best
