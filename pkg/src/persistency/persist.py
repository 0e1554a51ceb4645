"""Drivers that search for an improving substitution towards a test labeling.

``budgeted`` runs the iterative pruning loop with a fixed number of TRW-S
sweeps per round, a corrected dual point as the termination witness and
the min-cut and single-node speed-ups. ``arc_consistency`` uses the same
loop but only stops early on an arc-consistent corrected point.
``exact`` delegates to the LP-based pruning of :mod:`.lp_oracle`.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp_oracle
from .mincut import pruning_cut, single_node_prune
from .model import GraphicalModel, Reparametrization, check_labeling, energy
from .substitution import SubsetToOne, measures
from .trws import (
    TRWS,
    active_labels,
    activity_tol,
    arc_consistency_check,
    build_chains,
    dual_correct,
    margin,
    spread_inactive,
)
from .verification import contract, reduce

__all__ = [
    "Speedups",
    "PersistencyConfig",
    "PersistencyReport",
    "DichotomyViolation",
    "choose_test_labeling",
    "find_persistency",
    "report",
    "REPORT_SCHEMA",
]

log = logging.getLogger(__name__)

REPORT_SCHEMA = "persistency-report/1"
MODES = ("exact", "arc_consistency", "budgeted")


class DichotomyViolation(AssertionError):
    """A corrected dual point claimed termination with a nonzero bound."""


@dataclass
class Speedups:
    single_node: bool = True
    pruning_cut: bool = True
    fast_messages: bool = True


@dataclass
class PersistencyConfig:
    mode: str = "budgeted"
    sweeps_per_round: int = 50
    max_outer_rounds: int | None = None
    speedups: Speedups = field(default_factory=Speedups)
    activity_tol: float | None = None
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.sweeps_per_round < 1:
            raise ValueError("sweeps_per_round must be at least 1")
        if self.max_outer_rounds is not None and self.max_outer_rounds < 0:
            raise ValueError("max_outer_rounds must be nonnegative")


@dataclass
class PersistencyReport:
    substitution: SubsetToOne
    labels: tuple
    label_fraction: float
    log_fraction: float
    mode: str = "budgeted"
    outer_rounds: int = 0
    total_sweeps: int = 0
    prunes: dict = field(default_factory=dict)
    final_lower_bound: float | None = None
    exit: str = "verified"
    test_labeling_energy: float | None = None
    wall_time: float | None = None

    @property
    def remaining(self) -> list:
        """``|X_v minus Y_v|`` per node."""
        return [k - len(s) for k, s in zip(self.labels, self.substitution.eliminated)]

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "schema": REPORT_SCHEMA,
            "mode": self.mode,
            "labels": list(self.labels),
            "substitution": self.substitution.to_dict(),
            "remaining": self.remaining,
            "label_fraction": self.label_fraction,
            "log_fraction": self.log_fraction,
            "outer_rounds": self.outer_rounds,
            "total_sweeps": self.total_sweeps,
            "prunes": dict(sorted(self.prunes.items())),
            "final_lower_bound": self.final_lower_bound,
            "exit": self.exit,
            "test_labeling_energy": self.test_labeling_energy,
        }
        if timing and self.wall_time is not None:
            d["wall_time_s"] = self.wall_time
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PersistencyReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            SubsetToOne.from_dict(d["substitution"]),
            tuple(d["labels"]),
            d["label_fraction"],
            d["log_fraction"],
            d.get("mode", "budgeted"),
            d.get("outer_rounds", 0),
            d.get("total_sweeps", 0),
            dict(d.get("prunes", {})),
            d.get("final_lower_bound"),
            d.get("exit", "verified"),
            d.get("test_labeling_energy"),
            d.get("wall_time_s"),
        )


def report(p: SubsetToOne, f: GraphicalModel, counters: dict | None = None) -> PersistencyReport:
    """Assemble measures and run counters for ``p`` on ``f``."""
    counters = dict(counters or {})
    m = measures(p, f.labels)
    return PersistencyReport(
        p, f.labels, m.label_fraction, m.log_fraction,
        test_labeling_energy=energy(f, p.y), **counters,
    )


def choose_test_labeling(f: GraphicalModel, budget: int = 1000, mode: str = "budgeted",
                         patience: int = 10) -> tuple:
    """Test labeling from an approximate (or exact) LP solution.

    TRW-S runs until ``budget`` sweeps or until the bound gains nothing over
    ``patience`` sweeps, and the last pass's node-wise argmin is returned.
    ``mode="exact"`` takes the smallest label of each LP support set.
    """
    if mode == "exact":
        return tuple(s[0] for s in lp_oracle.support_sets(f))
    s = TRWS(f)
    x = tuple(int(np.argmin(t)) for t in f.unary)
    history = []
    for _ in range(budget):
        r = s.sweep()
        x = r.labeling
        history.append(r.lower_bound)
        if len(history) > patience and history[-1] - history[-1 - patience] <= 1e-9 * (1.0 + abs(history[-1])):
            break
    return x


def _project(phi_full: Reparametrization, f: GraphicalModel, maps, contracted: bool) -> Reparametrization:
    """Messages for the current reduced model; immovable labels share the test label's value."""
    tail, head = [], []
    for e, (u, v) in enumerate(f.edges):
        for src, dst, w in ((phi_full.tail[e], tail, u), (phi_full.head[e], head, v)):
            if contracted:
                dst.append(src[maps[w]].copy())
            else:
                a = np.full_like(src, src[maps[w][0]])
                a[maps[w][1:]] = src[maps[w][1:]]
                dst.append(a)
    return Reparametrization(tail, head, np.zeros(f.n_nodes))


def _write_back(phi_full: Reparametrization, phi: Reparametrization, f: GraphicalModel, maps, contracted: bool):
    for e, (u, v) in enumerate(f.edges):
        for dst, src, w in ((phi_full.tail[e], phi.tail[e], u), (phi_full.head[e], phi.head[e], v)):
            if contracted:
                dst[:] = src[0]
                dst[maps[w]] = src
            else:
                dst[:] = src


def find_persistency(f: GraphicalModel, y, cfg: PersistencyConfig | None = None, trace=None) -> PersistencyReport:
    """Improving substitution towards ``y`` with persistency guarantees.

    ``trace``, if given, is called with one dict per TRW-S sweep.
    """
    cfg = cfg or PersistencyConfig()
    cfg.validate()
    y = check_labeling(f, y)
    start = time.perf_counter()
    bound = sum(k - 1 for k in f.labels)
    cap = bound if cfg.max_outer_rounds is None else cfg.max_outer_rounds

    if cfg.mode == "exact":
        rounds = []
        p = lp_oracle.algorithm1(f, y, on_round=lambda k, q: q.size and rounds.append(k))
        prunes = {"support": bound - p.size}
        rep = report(p, f, {"mode": "exact", "outer_rounds": len(rounds), "prunes": prunes,
                            "final_lower_bound": 0.0})
        rep.wall_time = time.perf_counter() - start
        return rep

    tol = activity_tol(f) if cfg.activity_tol is None else cfg.activity_tol
    neg_tol = 0.5 if f.integer_costs else 1e-9 * (1.0 + f.cost_scale())
    lb_tol = 1e-6 * (1.0 + f.cost_scale())
    fast = cfg.speedups.fast_messages
    dec = build_chains(f)
    phi_full = Reparametrization.zeros(f)
    p = SubsetToOne.full(f.labels, y)
    prunes = {"single_node": 0, "pruning_cut": 0, "active": 0}
    rounds = sweeps = 0
    final_lb = None
    exit_reason = "verified"

    while True:
        if p.size == 0:
            exit_reason = "exhausted"
            break
        if rounds >= cap:
            log.warning("round limit %d reached before verification; returning identity", cap)
            p = SubsetToOne.identity(y)
            exit_reason = "round_limit"
            break
        rounds += 1
        if cfg.speedups.single_node:
            p, k = single_node_prune(f, p)
            prunes["single_node"] += k
            if p.size == 0:
                exit_reason = "exhausted"
                break
        r = reduce(f, p)
        maps = [np.array([y[v]] + list(r.eliminated[v]), dtype=np.intp) for v in range(f.n_nodes)]
        model = contract(r)[0] if fast else r.base
        solver = TRWS(model, _project(phi_full, f, maps, fast), dec, tol)
        done = restart = False
        hit = None
        for s in range(cfg.sweeps_per_round):
            res = solver.sweep()
            sweeps += 1
            x = tuple(int(m[i]) for i, m in zip(res.labeling, maps)) if fast else res.labeling
            if trace is not None:
                y_local = [0] * f.n_nodes if fast else y
                trace({
                    "round": rounds, "sweep": sweeps, "lower_bound": res.lower_bound,
                    "problem_margin": margin(model, solver.phi, y_local).problem,
                    "active_sizes": [len(a) for a in res.active], "substituted": p.size,
                })
            if cfg.speedups.pruning_cut and energy(r.base, x) < -neg_tol:
                p, k = pruning_cut(r, x)
                assert k >= 1, "a negative labeling must prune at least one label"
                prunes["pruning_cut"] += k
                restart = True
                break
            phi_c = dual_correct(solver.averaged_dual_point(), model)
            lb = model.constant + float(phi_c.offset.sum())
            active = active_labels(model, phi_c, tol)
            if fast:
                hit = [sorted(int(maps[u][i]) for i in a if i > 0) for u, a in enumerate(active)]
            else:
                hit = [sorted(int(i) for i in a if r.masks[u][i]) for u, a in enumerate(active)]
            final_lb = lb
            if not any(hit):
                if abs(lb) > lb_tol:
                    raise DichotomyViolation(f"termination witness with lower bound {lb}")
                if cfg.mode == "arc_consistency" and s < cfg.sweeps_per_round - 1:
                    if not arc_consistency_check(model, spread_inactive(model, phi_c, tol), tol):
                        continue
                done = True
                break
        _write_back(phi_full, solver.phi, f, maps, fast)
        if done:
            break
        if restart:
            continue
        removed = sum(len(h) for h in hit)
        assert removed >= 1
        prunes["active"] += removed
        p = p.with_eliminated([sorted(set(e) - set(h)) for e, h in zip(p.eliminated, hit)])

    rep = report(p, f, {
        "mode": cfg.mode, "outer_rounds": rounds, "total_sweeps": sweeps, "prunes": prunes,
        "final_lower_bound": final_lb, "exit": exit_reason,
    })
    rep.wall_time = time.perf_counter() - start
    log.info("persistency: %.2f%% labels eliminated in %d rounds, %d sweeps",
             100 * rep.label_fraction, rounds, sweeps)
    return rep
