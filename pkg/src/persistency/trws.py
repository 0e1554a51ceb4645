"""Sequential tree-reweighted message passing on monotonic chains.

Messages live in a :class:`~persistency.model.Reparametrization`: the array
stored on node ``u``'s side of edge ``uv`` is ``phi_uv`` and is added to the
reparametrized unary of ``u``. Processing node ``u`` in pass direction sets
``phi_vu(j) = min_i [theta_u(i) / n_u - phi_uv(i) + f_uv(i, j)]`` for every
neighbor ``v`` later in that direction, where ``theta_u`` is the current
reparametrized unary and ``n_u`` the number of chains through ``u``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import GraphicalModel, Reparametrization, reparametrized_pairwise, reparametrized_unary
from .verification import ReducedCosts

__all__ = [
    "ChainDecomposition",
    "build_chains",
    "TRWS",
    "PassResult",
    "forward_pass",
    "backward_pass",
    "chain_lower_bound",
    "message",
    "AccessCounter",
    "dual_correct",
    "active_labels",
    "margin",
    "arc_consistency_check",
    "spread_inactive",
    "activity_tol",
]


def activity_tol(f: GraphicalModel) -> float:
    """Tolerance for treating a reparametrized cost as zero, relative to the cost scale.

    Integer costs get no coarser threshold: reparametrized unaries carry
    fractions of the costs, so their gaps can be far below one.
    """
    return 1e-7 * (1.0 + f.cost_scale())


@dataclass(frozen=True)
class ChainDecomposition:
    order: tuple
    position: tuple
    chains: tuple
    chain_edges: tuple
    n_chains: tuple
    n_first: tuple
    n_last: tuple
    isolated: tuple

    @property
    def n_term(self) -> tuple:
        """Chains having ``u`` as an endpoint, counting both ends."""
        return tuple(a + b for a, b in zip(self.n_first, self.n_last))


def build_chains(f: GraphicalModel, order=None) -> ChainDecomposition:
    """Greedy edge-disjoint cover of the edges by straight monotonic chains.

    Each chain starts at the earliest node with an unused forward edge and is
    extended while the next node has an unused forward edge with the same
    position step. On a row-major grid this yields rows and columns.
    """
    n = f.n_nodes
    order = tuple(range(n)) if order is None else tuple(int(u) for u in order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the nodes")
    pos = [0] * n
    for k, u in enumerate(order):
        pos[u] = k
    forward = [[] for _ in range(n)]
    for e, (a, b) in enumerate(f.edges):
        lo, hi = (a, b) if pos[a] < pos[b] else (b, a)
        forward[lo].append((pos[hi] - pos[lo], pos[hi], hi, e))
    for lst in forward:
        lst.sort()
    used = [False] * f.n_edges
    chains, chain_edges = [], []
    for u in order:
        for step, _, v, e in forward[u]:
            if used[e]:
                continue
            used[e] = True
            nodes, edges, cur = [u, v], [e], v
            while True:
                nxt = next(
                    ((w, e2) for d, _, w, e2 in forward[cur] if d == step and not used[e2]), None
                )
                if nxt is None:
                    break
                w, e2 = nxt
                used[e2] = True
                nodes.append(w)
                edges.append(e2)
                cur = w
            chains.append(tuple(nodes))
            chain_edges.append(tuple(edges))
    count = [0] * n
    first = [0] * n
    last = [0] * n
    for c in chains:
        for u in c:
            count[u] += 1
        first[c[0]] += 1
        last[c[-1]] += 1
    isolated = tuple(k == 0 for k in count)
    n_chains = tuple(max(k, 1) for k in count)
    return ChainDecomposition(
        order, tuple(pos), tuple(chains), tuple(chain_edges), n_chains, tuple(first), tuple(last), isolated
    )


class PassResult(NamedTuple):
    lower_bound: float
    labeling: tuple
    active: list


class TRWS:
    """Mutable solver state: a model, its chain cover and the current ``phi``."""

    def __init__(self, f: GraphicalModel, phi: Reparametrization | None = None,
                 decomposition: ChainDecomposition | None = None, tol: float | None = None):
        self.f = f
        self.dec = decomposition or build_chains(f)
        self.phi = Reparametrization.zeros(f) if phi is None else phi.copy()
        self.phi.check_shapes(f)
        self.tol = activity_tol(f) if tol is None else tol
        self.sweeps = 0
        pos = self.dec.position
        self._weight = [1.0 / k for k in self.dec.n_chains]
        self._end_weight = {
            +1: [(l + iso) / k for l, iso, k in zip(self.dec.n_last, self.dec.isolated, self.dec.n_chains)],
            -1: [(s + iso) / k for s, iso, k in zip(self.dec.n_first, self.dec.isolated, self.dec.n_chains)],
        }
        # per node: own-side slots and outgoing updates for each direction
        self._slots = []
        self._out = {+1: [], -1: []}
        for u in range(f.n_nodes):
            slots, out_f, out_b = [], [], []
            for e, v, is_tail in f.incidence(u):
                own = (self.phi.tail if is_tail else self.phi.head, e)
                other = (self.phi.head if is_tail else self.phi.tail, e)
                table = f.pairwise[e] if is_tail else f.pairwise[e].T
                slots.append(own)
                (out_f if pos[v] > pos[u] else out_b).append((own, other, table))
            self._slots.append(slots)
            self._out[+1].append(out_f)
            self._out[-1].append(out_b)

    def unary(self, u: int) -> np.ndarray:
        theta = self.f.unary[u] - self.phi.offset[u]
        for arrs, e in self._slots[u]:
            theta = theta + arrs[e]
        return theta

    def _pass(self, direction: int) -> PassResult:
        order = self.dec.order if direction > 0 else self.dec.order[::-1]
        lb = self.f.constant + float(self.phi.offset.sum())
        x = [0] * self.f.n_nodes
        active = [None] * self.f.n_nodes
        ends = self._end_weight[direction]
        for u in order:
            theta = self.unary(u)
            share = theta * self._weight[u]
            for (own_arrs, e), (other_arrs, _), table in self._out[direction][u]:
                other_arrs[e] = ((share - own_arrs[e])[:, None] + table).min(axis=0)
            m = float(theta.min())
            if ends[u]:
                lb += ends[u] * m
            x[u] = int(np.argmin(theta))
            active[u] = np.flatnonzero(theta <= m + self.tol).tolist()
        return PassResult(lb, tuple(x), active)

    def forward(self) -> PassResult:
        return self._pass(+1)

    def backward(self) -> PassResult:
        return self._pass(-1)

    def sweep(self) -> PassResult:
        """Forward then backward pass; returns the backward pass result."""
        self._pass(+1)
        self.sweeps += 1
        return self._pass(-1)

    def averaged_dual_point(self) -> Reparametrization:
        """Average of the chain dual points over every choice of chain root.

        Rooting chain ``(u_1..u_L)`` at ``u_k`` moves the share of each node
        before ``u_k`` onto its next edge and of each node after it onto its
        previous edge. Averaging over ``k`` leaves every node ``1/L`` of its
        share, so labels that are worse in every chain stay strictly worse on
        the node. At a fixed point of the sweeps the result is feasible with
        the chain bound; away from it ``dual_correct`` restores feasibility.
        """
        f = self.f
        phi = self.phi.copy()
        thetas = [self.unary(u) * w for u, w in zip(range(f.n_nodes), self._weight)]

        def slot(u, e):
            return phi.tail[e] if f.edges[e][0] == u else phi.head[e]

        for nodes, edges in zip(self.dec.chains, self.dec.chain_edges):
            L = len(nodes)
            for t, u in enumerate(nodes):
                if t + 1 < L:
                    s = slot(u, edges[t])
                    s -= (L - 1 - t) / L * thetas[u]
                if t > 0:
                    s = slot(u, edges[t - 1])
                    s -= t / L * thetas[u]
        return phi

    def dual_point(self, direction: int = -1) -> Reparametrization:
        """Feasible local-polytope dual point equivalent to the last pass.

        Right after a pass in ``direction`` the messages on the edges just
        updated are min-marginals of the chains. Moving the chain share
        ``theta_u / n_u`` from the node onto each such edge makes every
        pairwise table nonnegative with zero column (or row) minima, and the
        plain bound ``f_0 + sum_u min theta_u`` of the result equals the
        chain bound of that pass.
        """
        phi = self.phi.copy()
        alias = {id(self.phi.tail): phi.tail, id(self.phi.head): phi.head}
        thetas = [self.unary(u) for u in range(self.f.n_nodes)]
        for u in range(self.f.n_nodes):
            share = thetas[u] * self._weight[u]
            for (own_arrs, e), _, _ in self._out[direction][u]:
                alias[id(own_arrs)][e] = own_arrs[e] - share
        return phi


def forward_pass(f: GraphicalModel, phi: Reparametrization, dec: ChainDecomposition | None = None):
    """One forward pass on a copy of ``phi``; returns ``(phi, lb, x, active)``."""
    s = TRWS(f, phi, dec)
    r = s.forward()
    return s.phi, r.lower_bound, r.labeling, r.active


def backward_pass(f: GraphicalModel, phi: Reparametrization, dec: ChainDecomposition | None = None):
    s = TRWS(f, phi, dec)
    r = s.backward()
    return s.phi, r.lower_bound, r.labeling, r.active


def chain_lower_bound(f: GraphicalModel, phi: Reparametrization, dec: ChainDecomposition | None = None) -> float:
    """Bound ``f^phi_0 + sum over chains of the exact chain minimum``.

    Valid for every ``phi``; computed by dynamic programming and independent
    of the message schedule.
    """
    dec = dec or build_chains(f)
    lb = f.constant + float(phi.offset.sum())
    theta = [reparametrized_unary(f, phi, u) / dec.n_chains[u] for u in range(f.n_nodes)]
    for nodes, edges in zip(dec.chains, dec.chain_edges):
        acc = theta[nodes[0]].copy()
        for a, b, e in zip(nodes, nodes[1:], edges):
            t = reparametrized_pairwise(f, phi, e)
            if f.edges[e] != (a, b):
                t = t.T
            acc = (acc[:, None] + t).min(axis=0) + theta[b]
        lb += float(acc.min())
    for u, iso in enumerate(dec.isolated):
        if iso:
            lb += float(theta[u].min())
    return lb


class AccessCounter:
    """Counts cost-table and cached-difference reads in :func:`message`."""

    def __init__(self):
        self.count = 0

    def read(self, k: int = 1):
        self.count += k


def message(a, r: ReducedCosts, e: int, reverse: bool = False, reduced: bool = True,
            counter: AccessCounter | None = None) -> np.ndarray:
    """``out(j) = min_i [a(i) + gbar_uv(i, j)]`` along edge ``e`` of the reduced costs.

    With ``reverse`` the message goes from the head to the tail of ``e``.
    The naive mode scans the full ``gbar`` table. The reduced mode uses the
    original costs on ``Y_u x Y_v`` only, plus the cached ``Delta`` values,
    and requires ``a`` to be constant on the immovable labels of the sender.
    """
    a = np.asarray(a, dtype=np.float64)
    u, v = r.base.edges[e]
    if not reduced:
        t = r.base.pairwise[e]
        t = t.T if reverse else t
        if counter is not None:
            counter.read(t.size)
        return (a[:, None] + t).min(axis=0)

    t = r.source.pairwise[e]
    yu, yv = r.y[u], r.y[v]
    mu, mv = r.masks[u], r.masks[v]
    d_send, d_recv = r.delta_tail[e], r.delta_head[e]
    if reverse:
        t = t.T
        yu, yv = yv, yu
        mu, mv = mv, mu
        d_send, d_recv = d_recv, d_send
    rest = a[~mu]
    if rest.size and not np.allclose(rest, rest[0], rtol=0.0, atol=1e-9 * (1.0 + abs(rest[0]))):
        raise ValueError("message input must be constant on the immovable labels")
    ys = np.flatnonzero(mu)
    yr = np.flatnonzero(mv)
    read = counter.read if counter is not None else (lambda k=1: None)

    # min over all senders of a(i) + Delta(i); Delta vanishes off Y
    rep = rest[0] if rest.size else np.inf
    base = rep
    for i in ys:
        read()
        base = min(base, a[i] + d_send[i])
    out = np.full(t.shape[1], base)
    if yr.size:
        read()
        c = t[yu, yv]
        for j in yr:
            best = base + d_recv[j]
            read()
            for i in ys:
                read()
                best = min(best, a[i] + t[i, j] - c)
            out[j] = best
    return out


def dual_correct(phi: Reparametrization, gbar: GraphicalModel) -> Reparametrization:
    """Shift pairwise slack to the nodes and normalize the unary minima to zero.

    Afterwards every reparametrized unary has minimum zero and every row and
    column of every reparametrized pairwise table has minimum zero.
    """
    phi = phi.copy()
    for e in range(gbar.n_edges):
        t = reparametrized_pairwise(gbar, phi, e)
        phi.tail[e] += t.min()
        t = reparametrized_pairwise(gbar, phi, e)
        phi.tail[e] += t.min(axis=1)
        t = reparametrized_pairwise(gbar, phi, e)
        phi.head[e] += t.min(axis=0)
    for u in range(gbar.n_nodes):
        phi.offset[u] += reparametrized_unary(gbar, phi, u).min()
    return phi


def active_labels(gbar: GraphicalModel, phi: Reparametrization, tol: float | None = None) -> list:
    """Per node, labels within ``tol`` of the reparametrized unary minimum."""
    tol = activity_tol(gbar) if tol is None else tol
    out = []
    for u in range(gbar.n_nodes):
        theta = reparametrized_unary(gbar, phi, u)
        out.append(np.flatnonzero(theta <= theta.min() + tol).tolist())
    return out


class Margins(NamedTuple):
    node: list
    problem: float


def margin(gbar: GraphicalModel, phi: Reparametrization, y) -> Margins:
    """``m_u = min_i theta_u(i) - theta_u(y_u)`` per node and its minimum."""
    node = []
    for u in range(gbar.n_nodes):
        theta = reparametrized_unary(gbar, phi, u)
        node.append(float(theta.min() - theta[y[u]]))
    return Margins(node, min(node, default=0.0))


class ArcConsistency(NamedTuple):
    consistent: bool
    violations: list

    def __bool__(self):
        return self.consistent


def arc_consistency_check(gbar: GraphicalModel, phi: Reparametrization, tol: float | None = None) -> ArcConsistency:
    """Check both arc-consistency clauses on the active entries.

    An entry is active when within ``tol`` of its table's minimum. Violations
    are ``("pair", e, i, j)`` for an active pairwise entry with an inactive
    endpoint and ``("node", u, i, e)`` for an active label without an active
    pairwise partner on edge ``e``.
    """
    tol = activity_tol(gbar) if tol is None else tol
    act = []
    for u in range(gbar.n_nodes):
        theta = reparametrized_unary(gbar, phi, u)
        act.append(theta <= theta.min() + tol)
    violations = []
    for e, (u, v) in enumerate(gbar.edges):
        t = reparametrized_pairwise(gbar, phi, e)
        on = t <= t.min() + tol
        for i, j in zip(*np.nonzero(on & ~(act[u][:, None] & act[v][None, :]))):
            violations.append(("pair", e, int(i), int(j)))
        for i in np.flatnonzero(act[u] & ~on.any(axis=1)):
            violations.append(("node", u, int(i), e))
        for j in np.flatnonzero(act[v] & ~on.any(axis=0)):
            violations.append(("node", v, int(j), e))
    return ArcConsistency(not violations, violations)


def spread_inactive(gbar: GraphicalModel, phi: Reparametrization, tol: float | None = None) -> Reparametrization:
    """Move part of the cost of every inactive label into its pairwise rows.

    A normalized point has a zero in every row, also in rows of inactive
    labels, which the first arc-consistency clause forbids. Shifting cost
    from an inactive label onto its incident edges keeps the label inactive,
    keeps the bound and the active node sets, and makes those rows positive.
    """
    tol = activity_tol(gbar) if tol is None else tol
    phi = phi.copy()
    for u in range(gbar.n_nodes):
        inc = list(gbar.incidence(u))
        if not inc:
            continue
        theta = reparametrized_unary(gbar, phi, u)
        excess = theta - theta.min()
        # the node keeps (excess + tol) / 2 > tol, so inactive labels stay inactive
        share = np.where(excess > tol, (excess - tol) / (2 * len(inc)), 0.0)
        for e, _, is_tail in inc:
            (phi.tail if is_tail else phi.head)[e] -= share
    return phi
