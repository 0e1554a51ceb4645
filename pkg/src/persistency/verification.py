"""Verification costs and their partial submodular truncation.

For a substitution ``p`` the verification costs ``g = f - P^T f`` measure
the energy change ``E_f(x) - E_f(p(x))``. The reduced costs ``gbar`` lower
the pairwise entries of ``g`` so that every mixed difference involving an
immovable label is nonnegative, without changing which substitutions
below ``p`` are strictly relaxed-improving.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GraphicalModel
from .substitution import SubsetToOne, pullback

__all__ = [
    "ReducedCosts",
    "verification_costs",
    "reduce",
    "reduce_from_verification",
    "contract",
    "expand_labeling",
    "partial_submodularity_gaps",
]


def verification_costs(f: GraphicalModel, p: SubsetToOne) -> GraphicalModel:
    pf = pullback(p, f)
    return f.replace(
        unary=[a - b for a, b in zip(f.unary, pf.unary)],
        pairwise=[a - b for a, b in zip(f.pairwise, pf.pairwise)],
        constant=0.0,
    )


@dataclass(frozen=True, eq=False)
class ReducedCosts:
    """The reduced model ``gbar`` plus the cached truncation amounts.

    ``delta_tail[e][i]`` is ``Delta_uv(i)`` and ``delta_head[e][j]`` is
    ``Delta_vu(j)`` for ``e = (u, v)``; both are zero outside ``Y``.
    """

    base: GraphicalModel
    source: GraphicalModel
    p: SubsetToOne
    masks: tuple
    delta_tail: tuple
    delta_head: tuple

    @property
    def y(self):
        return self.p.y

    @property
    def eliminated(self):
        return self.p.eliminated


def _deltas(t: np.ndarray, yu: int, yv: int, mu: np.ndarray, mv: np.ndarray):
    # Delta_uv(i) = min_{j' not in Y_v} [t(i, j') - t(y_u, j')], i in Y_u
    keep_v = ~mv
    keep_u = ~mu
    assert keep_v.any() and keep_u.any(), "immovable sets always contain the test label"
    d_tail = np.zeros(t.shape[0])
    d_head = np.zeros(t.shape[1])
    if mu.any():
        d_tail[mu] = (t[np.ix_(mu, keep_v)] - t[yu, keep_v][None, :]).min(axis=1)
    if mv.any():
        d_head[mv] = (t[np.ix_(keep_u, mv)] - t[keep_u, yv][:, None]).min(axis=0)
    return d_tail, d_head


def reduce(f: GraphicalModel, p: SubsetToOne) -> ReducedCosts:
    """Build ``gbar`` straight from ``f``.

    Unary: ``f_u(i) - f_u(y_u)`` on ``Y_u``, zero elsewhere. Pairwise:
    zero when both labels are immovable, ``Delta`` when exactly one is
    movable, and ``min(f(i,j) - f(y_u,y_v), Delta_uv(i) + Delta_vu(j))``
    when both are.
    """
    p.validate(f.labels)
    masks = tuple(p.masks(f.labels))
    y = p.y
    unary = []
    for v, t in enumerate(f.unary):
        g = np.zeros_like(t)
        g[masks[v]] = t[masks[v]] - t[y[v]]
        unary.append(g)
    pairwise, d_tails, d_heads = [], [], []
    for (u, v), t in zip(f.edges, f.pairwise):
        mu, mv = masks[u], masks[v]
        d_tail, d_head = _deltas(t, y[u], y[v], mu, mv)
        g = d_tail[:, None] + d_head[None, :]
        both = np.ix_(mu, mv)
        g[both] = np.minimum(t[both] - t[y[u], y[v]], g[both])
        pairwise.append(g)
        d_tails.append(d_tail)
        d_heads.append(d_head)
    base = f.replace(unary=unary, pairwise=pairwise, constant=0.0)
    return ReducedCosts(base, f, p, masks, tuple(d_tails), tuple(d_heads))


def reduce_from_verification(g: GraphicalModel, p: SubsetToOne) -> GraphicalModel:
    """Apply the truncation to already-built verification costs ``g``.

    Independent path used to cross-check :func:`reduce`.
    """
    masks = p.masks(g.labels)
    pairwise = []
    for (u, v), t in zip(g.edges, g.pairwise):
        mu, mv = masks[u], masks[v]
        out = np.zeros_like(t)
        for i in range(t.shape[0]):
            for j in range(t.shape[1]):
                if not mu[i] and not mv[j]:
                    continue
                d_head = min(t[i2, j] for i2 in range(t.shape[0]) if not mu[i2]) if mv[j] else 0.0
                d_tail = min(t[i, j2] for j2 in range(t.shape[1]) if not mv[j2]) if mu[i] else 0.0
                if mu[i] and mv[j]:
                    out[i, j] = min(d_head + d_tail, t[i, j])
                else:
                    out[i, j] = d_head + d_tail
        pairwise.append(out)
    return g.replace(pairwise=pairwise, constant=0.0)


def partial_submodularity_gaps(r: ReducedCosts) -> float:
    """Smallest mixed difference ``g(i,j') + g(i',j) - g(i,j) - g(i',j')``.

    Taken over ``i in Y_u, j in Y_v, i' not in Y_u, j' not in Y_v`` on all
    edges; ``inf`` when no four-tuple exists. Nonnegative for valid output.
    """
    worst = np.inf
    for (u, v), t in zip(r.base.edges, r.base.pairwise):
        mu, mv = r.masks[u], r.masks[v]
        if not (mu.any() and mv.any()):
            continue
        a = t[np.ix_(mu, ~mv)]  # g(i, j')
        b = t[np.ix_(~mu, mv)]  # g(i', j)
        c = t[np.ix_(mu, mv)]  # g(i, j)
        d = t[np.ix_(~mu, ~mv)]  # g(i', j')
        gap = (
            a[:, None, None, :]
            + b[None, :, :, None]
            - c[:, None, :, None]
            - d[None, :, None, :]
        )
        worst = min(worst, float(gap.min()))
    return worst


def contract(r: ReducedCosts):
    """Merge the immovable labels of each node into the test label.

    Returns ``(model, label_maps)``; ``label_maps[v][k]`` is the original
    label behind contracted label ``k``, with ``k = 0`` the test label.
    """
    y = r.y
    label_maps = [np.array([y[v]] + list(r.eliminated[v]), dtype=np.intp) for v in range(len(y))]
    g = r.base
    unary = [t[m] for t, m in zip(g.unary, label_maps)]
    pairwise = [t[np.ix_(label_maps[u], label_maps[v])] for (u, v), t in zip(g.edges, g.pairwise)]
    model = GraphicalModel(
        tuple(len(m) for m in label_maps), g.edges, unary, pairwise, g.constant
    )
    return model, label_maps


def expand_labeling(x, label_maps) -> tuple:
    """Map a contracted labeling back to original labels."""
    return tuple(int(m[i]) for i, m in zip(x, label_maps))
