"""Dense-tableau primal simplex with Bland's rule.

Meant for oracle-sized problems (a few hundred columns). The tableau keeps
its basis between calls to :meth:`Simplex.minimize`, so a sequence of
objectives over the same feasible set warm-starts from the previous vertex.
"""
from __future__ import annotations

import numpy as np

__all__ = ["Simplex", "InfeasibleError", "UnboundedError", "CyclingError"]


class InfeasibleError(RuntimeError):
    pass


class UnboundedError(RuntimeError):
    pass


class CyclingError(RuntimeError):
    """Pivot limit hit; with Bland's rule this indicates a bug."""


class Simplex:
    """Feasible basis for ``A x = b, x >= 0`` found by a phase-1 run."""

    def __init__(self, A, b, tol: float = 1e-9, max_pivots: int = 100_000):
        A = np.array(A, dtype=np.float64)
        b = np.array(b, dtype=np.float64)
        m, n = A.shape
        self.n = n
        self.tol = tol
        self.max_pivots = max_pivots
        self.pivots = 0
        neg = b < 0
        A[neg] *= -1
        b[neg] *= -1
        # rows: constraints then objective; columns: x, artificials, rhs
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = A
        T[:m, n : n + m] = np.eye(m)
        T[:m, -1] = b
        T[m, :n] = -A.sum(axis=0)
        T[m, -1] = -b.sum()
        self.T = T
        self.basis = list(range(n, n + m))
        self._run(np.ones(n + m, dtype=bool))
        if -self.T[-1, -1] > tol * max(1.0, b.sum()):
            raise InfeasibleError(f"phase 1 ended with infeasibility {-self.T[-1, -1]:.3g}")
        self._drop_artificials()

    def _pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise CyclingError("pivot limit exceeded")

    def _run(self, allowed: np.ndarray):
        T, tol = self.T, self.tol
        m = T.shape[0] - 1
        while True:
            d = T[-1, : allowed.size]
            cand = np.flatnonzero((d < -tol) & allowed)
            if cand.size == 0:
                return
            j = cand[0]
            col = T[:m, j]
            rows = np.flatnonzero(col > tol)
            if rows.size == 0:
                raise UnboundedError(f"column {j} is unbounded")
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol]
            r = min(ties, key=lambda k: self.basis[k])
            self._pivot(r, j)

    def _drop_artificials(self):
        n = self.n
        keep = []
        for r, var in enumerate(self.basis):
            if var >= n:
                nz = np.flatnonzero(np.abs(self.T[r, :n]) > self.tol)
                if nz.size == 0:
                    continue  # redundant row
                self._pivot(r, int(nz[0]))
            keep.append(r)
        rows = keep + [self.T.shape[0] - 1]
        self.T = np.ascontiguousarray(np.hstack([self.T[rows, :n], self.T[rows, -1:]]))
        self.basis = [self.basis[r] for r in keep]

    @property
    def n_rows(self) -> int:
        return len(self.basis)

    def solution(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.basis] = self.T[:-1, -1]
        x[x < 0] = 0.0
        return x

    def minimize(self, c, forbidden=None):
        """Optimize ``c @ x`` from the current basis; returns ``(value, x)``.

        Columns flagged in ``forbidden`` never enter the basis, so they stay
        at zero if they are currently nonbasic.
        """
        c = np.asarray(c, dtype=np.float64)
        T = self.T
        cb = c[self.basis]
        T[-1, :-1] = c - cb @ T[:-1, :-1]
        T[-1, -1] = -(cb @ T[:-1, -1])
        allowed = np.ones(self.n, dtype=bool) if forbidden is None else ~np.asarray(forbidden)
        self._run(allowed)
        return -self.T[-1, -1], self.solution()

    def reduced_costs(self) -> np.ndarray:
        """Reduced costs of the last objective at the current basis."""
        return self.T[-1, :-1].copy()
