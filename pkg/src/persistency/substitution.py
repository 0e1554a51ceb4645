"""Subset-to-one substitutions.

A substitution is given by a test labeling ``y`` and, per node, a set
``Y_v`` of labels that get replaced by ``y_v``. All other labels are left
in place ("immovable").
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import GraphicalModel, check_labeling

__all__ = ["SubsetToOne", "Measures", "apply", "apply_many", "pullback", "leq", "measures"]


@dataclass(frozen=True)
class SubsetToOne:
    y: tuple
    eliminated: tuple

    def __post_init__(self):
        y = tuple(int(i) for i in self.y)
        if len(self.eliminated) != len(y):
            raise ValueError("need one eliminated set per node")
        sets = []
        for v, labels in enumerate(self.eliminated):
            s = tuple(sorted({int(i) for i in labels}))
            if y[v] in s:
                raise ValueError(f"test label {y[v]} of node {v} cannot be eliminated")
            if s and s[0] < 0:
                raise ValueError(f"negative label in node {v}")
            sets.append(s)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eliminated", tuple(sets))

    @classmethod
    def identity(cls, y) -> "SubsetToOne":
        return cls(tuple(y), tuple(() for _ in y))

    @classmethod
    def full(cls, labels: Sequence[int], y) -> "SubsetToOne":
        """Maps every label to ``y``."""
        return cls(tuple(y), tuple(tuple(i for i in range(k) if i != yv) for k, yv in zip(labels, y)))

    @classmethod
    def from_masks(cls, y, masks) -> "SubsetToOne":
        return cls(tuple(y), tuple(tuple(np.flatnonzero(m)) for m in masks))

    @property
    def n_nodes(self) -> int:
        return len(self.y)

    @property
    def size(self) -> int:
        """Total number of substituted labels."""
        return sum(len(s) for s in self.eliminated)

    def validate(self, labels: Sequence[int]):
        check_labeling(_Labels(labels), self.y)
        for v, (s, k) in enumerate(zip(self.eliminated, labels)):
            if s and s[-1] >= k:
                raise ValueError(f"eliminated label {s[-1]} out of range for node {v}")

    def masks(self, labels: Sequence[int]) -> list:
        """Boolean indicator of ``Y_v`` per node."""
        out = []
        for s, k in zip(self.eliminated, labels):
            m = np.zeros(k, dtype=bool)
            m[list(s)] = True
            out.append(m)
        return out

    def maps(self, labels: Sequence[int]) -> list:
        """Per-node lookup arrays ``p_v(i)``."""
        out = []
        for s, k, yv in zip(self.eliminated, labels, self.y):
            m = np.arange(k)
            m[list(s)] = yv
            out.append(m)
        return out

    def remaining(self, labels: Sequence[int]) -> list:
        """Sorted labels not substituted away, ``X_v minus Y_v``."""
        return [sorted(set(range(k)) - set(s)) for s, k in zip(self.eliminated, labels)]

    def with_eliminated(self, eliminated) -> "SubsetToOne":
        return SubsetToOne(self.y, eliminated)

    def to_dict(self) -> dict:
        return {"y": list(self.y), "eliminated": [list(s) for s in self.eliminated]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SubsetToOne":
        return cls(tuple(d["y"]), tuple(tuple(s) for s in d["eliminated"]))

    @classmethod
    def from_json(cls, text: str) -> "SubsetToOne":
        return cls.from_dict(json.loads(text))


class _Labels:
    # duck-types the two attributes check_labeling reads
    def __init__(self, labels):
        self.labels = tuple(labels)
        self.n_nodes = len(self.labels)


def apply(p: SubsetToOne, x) -> tuple:
    if len(x) != p.n_nodes:
        raise ValueError("labeling and substitution sizes differ")
    return tuple(yv if int(i) in s else int(i) for i, yv, s in zip(x, p.y, p.eliminated))


def apply_many(p: SubsetToOne, labels: Sequence[int], X: np.ndarray) -> np.ndarray:
    """Apply ``p`` to every row of a labeling matrix."""
    maps = p.maps(labels)
    out = np.empty_like(X)
    for v, m in enumerate(maps):
        out[:, v] = m[X[:, v]]
    return out


def pullback(p: SubsetToOne, f: GraphicalModel) -> GraphicalModel:
    """Costs ``P^T f`` with ``energy(P^T f, x) == energy(f, apply(p, x))``."""
    p.validate(f.labels)
    maps = p.maps(f.labels)
    unary = [t[m] for t, m in zip(f.unary, maps)]
    pairwise = [t[np.ix_(maps[u], maps[v])] for (u, v), t in zip(f.edges, f.pairwise)]
    return f.replace(unary=unary, pairwise=pairwise)


def leq(q: SubsetToOne, p: SubsetToOne) -> bool:
    """Whether ``q <= p``: every label moved by ``q`` is also moved by ``p``."""
    if q.y != p.y:
        raise ValueError("substitutions with different test labelings are not comparable")
    return all(set(a) <= set(b) for a, b in zip(q.eliminated, p.eliminated))


class Measures(NamedTuple):
    label_fraction: float
    log_fraction: float


def measures(p: SubsetToOne, labels) -> Measures:
    """Share of eliminated labels, plain and on the log-configuration scale.

    ``labels`` is a sequence of label counts or a model.
    """
    if isinstance(labels, GraphicalModel):
        labels = labels.labels
    removed = sum(len(s) for s in p.eliminated)
    movable = sum(k - 1 for k in labels)
    label_fraction = removed / movable if movable else 1.0
    num = den = 0.0
    for s, k in zip(p.eliminated, labels):
        if k > 1:
            num += math.log(k - len(s))
            den += math.log(k)
    log_fraction = 1.0 - num / den if den else 1.0
    return Measures(label_fraction, log_fraction)
