"""Min-cut pruning for the reduced verification problem.

Restricting every node to the two labels ``{y_v, x_v}`` turns the reduced
costs into a submodular binary energy, solved exactly by max-flow. Labels
``x_v`` that occur in some minimizer are dropped from ``Y_v``; so are
labels whose single-node move does not increase the reduced energy.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import GraphicalModel
from .substitution import SubsetToOne
from .verification import ReducedCosts

__all__ = [
    "BinaryEnergy",
    "FlowNetwork",
    "max_flow",
    "restrict_to_move",
    "binary_energy",
    "min_cut_support",
    "pruning_cut",
    "single_node_prune",
]


class FlowNetwork:
    """Residual graph for Dinic's algorithm; node ``s`` and ``t`` are terminals."""

    def __init__(self, n: int, s: int, t: int, eps: float = 0.0):
        self.n, self.s, self.t, self.eps = n, s, t, eps
        self.adj = [[] for _ in range(n)]
        self.to, self.cap = [], []

    def add_edge(self, a: int, b: int, cap: float, rev_cap: float = 0.0):
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be nonnegative")
        self.adj[a].append(len(self.to))
        self.to.append(b)
        self.cap.append(float(cap))
        self.adj[b].append(len(self.to))
        self.to.append(a)
        self.cap.append(float(rev_cap))

    def _levels(self):
        level = [-1] * self.n
        level[self.s] = 0
        q = deque([self.s])
        while q:
            a = q.popleft()
            for k in self.adj[a]:
                b = self.to[k]
                if level[b] < 0 and self.cap[k] > self.eps:
                    level[b] = level[a] + 1
                    q.append(b)
        return level

    def _augment(self, level, it):
        # iterative DFS along the level graph; returns pushed amount
        s, t, eps = self.s, self.t, self.eps
        path = []
        a = s
        while True:
            if a == t:
                push = min(self.cap[k] for k in path)
                for k in path:
                    self.cap[k] -= push
                    self.cap[k ^ 1] += push
                return push
            advanced = False
            while it[a] < len(self.adj[a]):
                k = self.adj[a][it[a]]
                b = self.to[k]
                if self.cap[k] > eps and level[b] == level[a] + 1:
                    path.append(k)
                    a = b
                    advanced = True
                    break
                it[a] += 1
            if not advanced:
                if a == s:
                    return 0.0
                level[a] = -1  # dead end
                k = path.pop()
                a = self.to[k ^ 1]
                it[a] += 1

    def run(self) -> float:
        flow = 0.0
        while True:
            level = self._levels()
            if level[self.t] < 0:
                return flow
            it = [0] * self.n
            while True:
                pushed = self._augment(level, it)
                if pushed <= 0:
                    break
                flow += pushed

    def source_side(self) -> set:
        """Nodes reachable from ``s`` in the residual graph (smallest min-cut side)."""
        seen = {self.s}
        q = deque([self.s])
        while q:
            a = q.popleft()
            for k in self.adj[a]:
                b = self.to[k]
                if b not in seen and self.cap[k] > self.eps:
                    seen.add(b)
                    q.append(b)
        return seen

    def sink_side(self) -> set:
        """Nodes that reach ``t`` in the residual graph (smallest sink side)."""
        seen = {self.t}
        q = deque([self.t])
        while q:
            b = q.popleft()
            for k in self.adj[b]:
                # residual arc a -> b is the reverse slot of k
                a = self.to[k]
                if a not in seen and self.cap[k ^ 1] > self.eps:
                    seen.add(a)
                    q.append(a)
        return seen


def max_flow(network: FlowNetwork):
    """Run max-flow in place; returns ``(value, source_side_set)``."""
    value = network.run()
    return value, network.source_side()


@dataclass(frozen=True, eq=False)
class BinaryEnergy:
    """Two-state energy; state 0 is the test label, state 1 the move label.

    ``nodes[k]`` is the original node of binary variable ``k`` and
    ``states[k]`` the original labels of its two states.
    """

    nodes: tuple
    states: tuple
    unary: np.ndarray
    edges: tuple
    pairwise: np.ndarray
    constant: float = 0.0

    def energy(self, z) -> float:
        z = np.asarray(z, dtype=np.intp)
        total = self.constant + float(self.unary[np.arange(len(z)), z].sum())
        for (a, b), t in zip(self.edges, self.pairwise):
            total += t[z[a], z[b]]
        return float(total)

    def submodularity_gaps(self) -> np.ndarray:
        """``t01 + t10 - t00 - t11`` per edge; nonnegative when submodular."""
        if not len(self.edges):
            return np.zeros(0)
        p = self.pairwise
        return p[:, 0, 1] + p[:, 1, 0] - p[:, 0, 0] - p[:, 1, 1]


def binary_energy(unary, edges, pairwise, constant=0.0) -> BinaryEnergy:
    unary = np.asarray(unary, dtype=np.float64).reshape(-1, 2)
    n = unary.shape[0]
    return BinaryEnergy(
        tuple(range(n)), tuple((0, 1) for _ in range(n)), unary, tuple(map(tuple, edges)),
        np.asarray(pairwise, dtype=np.float64).reshape(-1, 2, 2), float(constant),
    )


def restrict_to_move(r: ReducedCosts, x) -> BinaryEnergy:
    """Binary energy of ``gbar`` over labelings mixing ``y`` and ``x``.

    Nodes with ``x_v`` immovable are fixed; their costs equal those of ``y_v``
    under the reduction, so they fold into the neighbors' unaries.
    """
    g, y, masks = r.base, r.y, r.masks
    free = [v for v in range(g.n_nodes) if masks[v][x[v]]]
    local = {v: k for k, v in enumerate(free)}
    unary = np.array([[g.unary[v][y[v]], g.unary[v][x[v]]] for v in free]).reshape(-1, 2)
    constant = float(g.constant) + sum(float(g.unary[v][y[v]]) for v in range(g.n_nodes) if v not in local)
    edges, tables = [], []
    for (u, v), t in zip(g.edges, g.pairwise):
        su, sv = (y[u], x[u]), (y[v], x[v])
        if u in local and v in local:
            edges.append((local[u], local[v]))
            tables.append(t[np.ix_(su, sv)])
        elif u in local:
            unary[local[u]] += t[list(su), y[v]]
        elif v in local:
            unary[local[v]] += t[y[u], list(sv)]
        else:
            constant += float(t[y[u], y[v]])
    b = BinaryEnergy(
        tuple(free), tuple((y[v], x[v]) for v in free), unary, tuple(edges),
        np.array(tables, dtype=np.float64).reshape(-1, 2, 2), constant,
    )
    gaps = b.submodularity_gaps()
    assert gaps.size == 0 or gaps.min() >= -1e-9 * (1.0 + g.cost_scale()), "restricted energy is not submodular"
    return b


def _network(b: BinaryEnergy, integer: bool):
    # z = 0 <-> source side; z = 1 <-> sink side
    n = len(b.nodes)
    s, t = n, n + 1
    scale = 1.0 + float(np.abs(b.unary).max(initial=0.0)) + float(np.abs(b.pairwise).max(initial=0.0))
    net = FlowNetwork(n + 2, s, t, eps=0.0 if integer else 1e-12 * scale)
    unary = b.unary.copy()
    constant = b.constant
    for (a, c), tab in zip(b.edges, b.pairwise):
        A, B, C, D = tab[0, 0], tab[0, 1], tab[1, 0], tab[1, 1]
        constant += A
        unary[a, 1] += C - A
        unary[c, 1] += D - C
        w = B + C - A - D
        if w > 0:
            net.add_edge(a, c, w)
    for k in range(n):
        a0, a1 = unary[k]
        constant += min(a0, a1)
        if a1 > a0:
            net.add_edge(s, k, a1 - a0)
        elif a0 > a1:
            net.add_edge(k, t, a0 - a1)
    return net, constant


def min_cut_support(b: BinaryEnergy, integer: bool = False):
    """States taken by at least one minimizer, per binary variable.

    Returns ``(min_value, support)`` where ``support[k]`` is a sorted list of
    original labels. Uses the smallest source side and the largest source
    side of the min-cut lattice.
    """
    net, constant = _network(b, integer)
    value = net.run()
    s_min = net.source_side()
    s_max = set(range(net.n)) - net.sink_side()
    support = []
    for k, st in enumerate(b.states):
        labels = set()
        if k in s_max:
            labels.add(st[0])
        if k not in s_min:
            labels.add(st[1])
        support.append(sorted(labels))
    return constant + value, support


def pruning_cut(r: ReducedCosts, x):
    """Drop ``x_v`` from ``Y_v`` wherever it occurs in a minimizer over ``{y_v, x_v}``.

    Returns ``(new_substitution, removed_count)``. When ``energy(gbar, x) < 0``
    at least one label is removed.
    """
    x = tuple(int(i) for i in x)
    b = restrict_to_move(r, x)
    _, support = min_cut_support(b, integer=r.base.integer_costs)
    eliminated = [set(s) for s in r.eliminated]
    removed = 0
    for v, labels in zip(b.nodes, support):
        if x[v] in labels and x[v] in eliminated[v]:
            eliminated[v].discard(x[v])
            removed += 1
    return r.p.with_eliminated([sorted(s) for s in eliminated]), removed


def single_node_prune(f: GraphicalModel, p: SubsetToOne, tol: float | None = None):
    """Remove labels whose single-node move to them has nonpositive reduced cost.

    The value for ``(u, i)`` is ``gbar_u(i) + sum_v gbar_uv(i, y_v)``, which
    equals ``f_u(i) - f_u(y_u) + sum_v min_{j not in Y_v} [f_uv(i,j) - f_uv(y_u,j)]``.
    When ``Y_v`` shrinks the values at its neighbors can only decrease, so
    those nodes are re-queued. Returns ``(new_substitution, removed_count)``.
    """
    if tol is None:
        tol = 0.0 if f.integer_costs else 1e-9 * (1.0 + f.cost_scale())
    y = p.y
    masks = p.masks(f.labels)
    queue = deque(range(f.n_nodes))
    queued = [True] * f.n_nodes
    removed = 0
    while queue:
        u = queue.popleft()
        queued[u] = False
        if not masks[u].any():
            continue
        val = f.unary[u] - f.unary[u][y[u]]
        for e, v, is_tail in f.incidence(u):
            t = f.pairwise[e] if is_tail else f.pairwise[e].T
            keep = ~masks[v]
            val = val + (t[:, keep] - t[y[u], keep][None, :]).min(axis=1)
        drop = masks[u] & (val <= tol)
        if drop.any():
            masks[u] &= ~drop
            removed += int(drop.sum())
            for v in f.neighbors(u):
                if not queued[v]:
                    queued[v] = True
                    queue.append(v)
    return SubsetToOne.from_masks(y, masks), removed
