"""Pairwise graphical models, labeling energies and reparametrizations.

A model holds the cost vector ``f`` over the index set of a pairwise MRF:
a constant, one unary table per node and one pairwise table per directed
edge ``(u, v)`` with rows indexed by labels of ``u``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "GraphicalModel",
    "Reparametrization",
    "LiftedPoint",
    "DualBound",
    "check_labeling",
    "energy",
    "energies",
    "reparametrized",
    "dual_lower_bound",
    "lift",
    "inner",
    "random_model",
    "gen_random",
    "grid_edges",
]


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"table has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


def _is_integral(arrays) -> bool:
    return all(np.all(np.isfinite(a)) and np.all(a == np.round(a)) for a in arrays)


@dataclass(frozen=True, eq=False)
class GraphicalModel:
    """Immutable pairwise model ``f``.

    ``integer_costs`` is detected from the tables when left as ``None``;
    passing ``True`` asserts that every cost is an exact integer.
    """

    labels: tuple
    edges: tuple
    unary: tuple
    pairwise: tuple
    constant: float = 0.0
    integer_costs: bool | None = None

    def __post_init__(self):
        labels = tuple(int(k) for k in self.labels)
        if any(k < 1 for k in labels):
            raise ValueError("every node needs at least one label")
        n = len(labels)
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        seen = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) references a missing node")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge between {u} and {v}")
            seen.add(key)
        if len(self.unary) != n:
            raise ValueError(f"{len(self.unary)} unary tables for {n} nodes")
        if len(self.pairwise) != len(edges):
            raise ValueError(f"{len(self.pairwise)} pairwise tables for {len(edges)} edges")
        unary = tuple(_frozen(t, (labels[v],)) for v, t in enumerate(self.unary))
        pairwise = tuple(
            _frozen(t, (labels[u], labels[v])) for (u, v), t in zip(edges, self.pairwise)
        )
        constant = float(self.constant)
        integral = _is_integral(unary + pairwise + (np.array([constant]),))
        if self.integer_costs and not integral:
            raise ValueError("integer_costs is set but some cost is not an integer")
        if not all(np.all(np.isfinite(t)) for t in unary + pairwise) or not np.isfinite(constant):
            raise ValueError("costs must be finite")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "pairwise", pairwise)
        object.__setattr__(self, "constant", constant)
        object.__setattr__(self, "integer_costs", integral if self.integer_costs is None else True)
        nbrs = [[] for _ in range(n)]
        for e, (u, v) in enumerate(edges):
            nbrs[u].append((e, v, True))
            nbrs[v].append((e, u, False))
        object.__setattr__(self, "_incidence", tuple(tuple(x) for x in nbrs))

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def incidence(self, v: int):
        """Tuples ``(edge, other_node, v_is_tail)`` for the edges touching ``v``."""
        return self._incidence[v]

    def neighbors(self, v: int) -> list:
        return [w for _, w, _ in self._incidence[v]]

    def replace(self, *, unary=None, pairwise=None, constant=None) -> "GraphicalModel":
        return GraphicalModel(
            self.labels,
            self.edges,
            self.unary if unary is None else unary,
            self.pairwise if pairwise is None else pairwise,
            self.constant if constant is None else constant,
        )

    def cost_scale(self) -> float:
        """Largest absolute cost; used to scale tolerances."""
        m = abs(self.constant)
        for t in self.unary + self.pairwise:
            if t.size:
                m = max(m, float(np.abs(t).max()))
        return m

    def __eq__(self, other):
        if not isinstance(other, GraphicalModel):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.edges == other.edges
            and self.constant == other.constant
            and all(np.array_equal(a, b) for a, b in zip(self.unary, other.unary))
            and all(np.array_equal(a, b) for a, b in zip(self.pairwise, other.pairwise))
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"GraphicalModel(nodes={self.n_nodes}, edges={self.n_edges}, "
            f"labels={max(self.labels, default=0)} max, integer={self.integer_costs})"
        )


def check_labeling(f: GraphicalModel, x) -> tuple:
    x = tuple(int(i) for i in x)
    if len(x) != f.n_nodes:
        raise ValueError(f"labeling has {len(x)} entries, model has {f.n_nodes} nodes")
    for v, (i, k) in enumerate(zip(x, f.labels)):
        if not 0 <= i < k:
            raise ValueError(f"label {i} out of range for node {v} with {k} labels")
    return x


def energy(f: GraphicalModel, x) -> float:
    """``f_0 + sum_v f_v(x_v) + sum_uv f_uv(x_u, x_v)``."""
    x = check_labeling(f, x)
    total = f.constant
    for v, i in enumerate(x):
        total += f.unary[v][i]
    for (u, v), t in zip(f.edges, f.pairwise):
        total += t[x[u], x[v]]
    return float(total)


def energies(f: GraphicalModel, X: np.ndarray) -> np.ndarray:
    """Vectorized energies for a ``(count, n_nodes)`` array of labelings."""
    X = np.asarray(X, dtype=np.intp)
    out = np.full(X.shape[0], f.constant)
    for v in range(f.n_nodes):
        out += f.unary[v][X[:, v]]
    for (u, v), t in zip(f.edges, f.pairwise):
        out += t[X[:, u], X[:, v]]
    return out


@dataclass
class Reparametrization:
    """Dual point ``phi``.

    ``tail[e][i]`` is ``phi_uv(i)`` and ``head[e][j]`` is ``phi_vu(j)`` for the
    edge ``e = (u, v)``; ``offset[u]`` is ``phi_u``.
    """

    tail: list
    head: list
    offset: np.ndarray

    @classmethod
    def zeros(cls, f: GraphicalModel) -> "Reparametrization":
        return cls(
            [np.zeros(f.labels[u]) for u, _ in f.edges],
            [np.zeros(f.labels[v]) for _, v in f.edges],
            np.zeros(f.n_nodes),
        )

    def copy(self) -> "Reparametrization":
        return Reparametrization(
            [a.copy() for a in self.tail], [a.copy() for a in self.head], self.offset.copy()
        )

    def check_shapes(self, f: GraphicalModel):
        ok = (
            len(self.tail) == f.n_edges
            and len(self.head) == f.n_edges
            and self.offset.shape == (f.n_nodes,)
            and all(a.shape == (f.labels[u],) for a, (u, _) in zip(self.tail, f.edges))
            and all(a.shape == (f.labels[v],) for a, (_, v) in zip(self.head, f.edges))
        )
        if not ok:
            raise ValueError("reparametrization shapes do not match the model")


def reparametrized_unary(f: GraphicalModel, phi: Reparametrization, v: int) -> np.ndarray:
    out = f.unary[v] - phi.offset[v]
    for e, _, is_tail in f.incidence(v):
        out = out + (phi.tail[e] if is_tail else phi.head[e])
    return out


def reparametrized_pairwise(f: GraphicalModel, phi: Reparametrization, e: int) -> np.ndarray:
    return f.pairwise[e] - phi.tail[e][:, None] - phi.head[e][None, :]


def reparametrized(f: GraphicalModel, phi: Reparametrization) -> GraphicalModel:
    """The equivalent model ``f^phi``; every labeling keeps its energy."""
    phi.check_shapes(f)
    return f.replace(
        unary=[reparametrized_unary(f, phi, v) for v in range(f.n_nodes)],
        pairwise=[reparametrized_pairwise(f, phi, e) for e in range(f.n_edges)],
        constant=f.constant + float(phi.offset.sum()),
    )


class DualBound(NamedTuple):
    value: float
    feasible: bool
    normalized: bool


def dual_lower_bound(f: GraphicalModel, phi: Reparametrization, tol: float = 1e-9) -> DualBound:
    """``f^phi_0`` together with feasibility and normalization flags.

    The value bounds ``min_x energy(f, x)`` from below only when feasible.
    """
    g = reparametrized(f, phi)
    mins = [float(t.min()) for t in g.unary + g.pairwise if t.size]
    feasible = all(m >= -tol for m in mins)
    normalized = all(abs(m) <= tol for m in mins)
    return DualBound(g.constant, feasible, normalized)


@dataclass
class LiftedPoint:
    """A point of the lifted space: ``mu_0``, node and edge marginals."""

    constant: float
    unary: list
    pairwise: list


def lift(f: GraphicalModel, x) -> LiftedPoint:
    """Indicator vector of the labeling ``x``."""
    x = check_labeling(f, x)
    unary = []
    for v, i in enumerate(x):
        mu = np.zeros(f.labels[v])
        mu[i] = 1.0
        unary.append(mu)
    pairwise = []
    for u, v in f.edges:
        mu = np.zeros((f.labels[u], f.labels[v]))
        mu[x[u], x[v]] = 1.0
        pairwise.append(mu)
    return LiftedPoint(1.0, unary, pairwise)


def inner(f: GraphicalModel, mu: LiftedPoint) -> float:
    """Scalar product ``<f, mu>``."""
    total = f.constant * mu.constant
    for a, b in zip(f.unary, mu.unary):
        total += float(a @ b)
    for a, b in zip(f.pairwise, mu.pairwise):
        total += float((a * b).sum())
    return total


def grid_edges(rows: int, cols: int) -> list:
    """4-connected grid edges over row-major node indices."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return edges


FAMILIES = ("potts", "full")


def random_model(
    labels: Sequence[int],
    edges: Sequence,
    family: str = "full",
    cost_range=(0, 100),
    rng=None,
) -> GraphicalModel:
    """Integer-cost model on a given graph.

    Unary costs are i.i.d. uniform on the inclusive ``cost_range``. For
    ``full`` every pairwise entry is drawn the same way; for ``potts`` each
    edge gets ``lambda * [i != j]`` with ``lambda`` drawn from ``cost_range``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    lo, hi = int(cost_range[0]), int(cost_range[1])
    if lo > hi:
        raise ValueError(f"empty cost range [{lo}, {hi}]")
    rng = np.random.default_rng(rng)
    unary = [rng.integers(lo, hi, size=k, endpoint=True) for k in labels]
    pairwise = []
    for u, v in edges:
        ku, kv = labels[u], labels[v]
        if family == "full":
            pairwise.append(rng.integers(lo, hi, size=(ku, kv), endpoint=True))
        else:
            lam = rng.integers(lo, hi, endpoint=True)
            pairwise.append(lam * (np.arange(ku)[:, None] != np.arange(kv)[None, :]))
    return GraphicalModel(tuple(labels), tuple(edges), unary, pairwise, 0.0, integer_costs=True)


def gen_random(
    family: str, rows: int, cols: int, labels: int, cost_range=(0, 100), seed=0
) -> GraphicalModel:
    """Seeded random grid instance of the ``potts`` or ``full`` family."""
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be at least 1x1, got {rows}x{cols}")
    if labels < 2:
        raise ValueError(f"need at least 2 labels, got {labels}")
    return random_model(
        [labels] * (rows * cols), grid_edges(rows, cols), family, cost_range, np.random.default_rng(seed)
    )
