"""Certification of the learned RoA estimate.

Each member grid point owns a hypercube of side gamma (the grid step); a
box is verified when interval branch-and-bound refutes the violation
formula  (||x|| >= eps) and (Vdot(x) >= 0)  everywhere inside it. Boxes at
the precision limit delta_sat whose enclosure still straddles zero are
delta-counterexamples; exhausted budgets also count as counterexamples so
the procedure never over-claims. Every failed cube prunes its grid point
and all points at equal or higher Lyapunov level, matching the sublevel-set
form a certified inner estimate must have.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .expr import BoxRegion
from .lyapunov import LyapCandidate, check_origin_decay
from .train import Grid


class VerifyError(RuntimeError):
    pass


@dataclass
class VerifyConfig:
    delta_sat: float
    eps_ball: float
    gamma: float
    max_boxes: int = 1_000_000
    workers: int = 1

    def __post_init__(self):
        if self.delta_sat <= 0 or self.gamma <= 0 or self.eps_ball <= 0:
            raise ValueError("delta_sat, gamma and eps_ball must be positive")


@dataclass
class CubeResult:
    index: int
    status: str  # verified | counterexample | delta_counterexample | budget_exhausted
    point: tuple | None = None
    enclosure: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.status == "verified"


@dataclass
class VerifyReport:
    statuses: dict              # grid index -> CubeResult
    member_mask: np.ndarray
    certified_mask: np.ndarray
    pruned_points: list         # indices removed by the level rule
    dropped_disconnected: list  # member cubes not connected to the origin
    V: np.ndarray
    Vdot: np.ndarray
    c_max_empirical: float
    eps_used: float
    delta_sat: float
    gamma: float
    wall_s: float = 0.0
    counts: dict = field(default_factory=dict)


def _min_max_norm(lo: np.ndarray, hi: np.ndarray):
    hi2 = np.maximum(lo * lo, hi * hi)
    lo2 = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(lo * lo, hi * hi))
    return float(np.sqrt(np.sum(lo2))), float(np.sqrt(np.sum(hi2)))


def check_box(c: LyapCandidate, lo, hi, cfg: VerifyConfig,
              eps: float | None = None) -> CubeResult:
    """Branch-and-bound check of one hypercube. Deterministic DFS: split
    the widest dimension, children pushed in fixed order."""
    if eps is None:
        eps = min(cfg.eps_ball, c.origin.eps)
    stack = [(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))]
    processed = 0
    while stack:
        processed += 1
        if processed > cfg.max_boxes:
            blo, bhi = stack[-1]
            mid = 0.5 * (blo + bhi)
            return CubeResult(-1, "budget_exhausted", tuple(mid))
        blo, bhi = stack.pop()
        _, maxn = _min_max_norm(blo, bhi)
        if maxn < eps:
            continue  # entirely inside the proven-decay ball
        box = BoxRegion.from_bounds(blo, bhi)
        encl = c.Vdot_interval(box)
        if encl.hi < 0.0:
            continue
        mid = 0.5 * (blo + bhi)
        if np.linalg.norm(mid) >= eps and c.Vdot(mid) >= 0.0:
            return CubeResult(-1, "counterexample", tuple(mid),
                              (encl.lo, encl.hi))
        widths = bhi - blo
        if float(np.max(widths)) <= cfg.delta_sat:
            return CubeResult(-1, "delta_counterexample", tuple(mid),
                              (encl.lo, encl.hi))
        d = int(np.argmax(widths))
        cut = 0.5 * (blo[d] + bhi[d])
        left_hi = bhi.copy(); left_hi[d] = cut
        right_lo = blo.copy(); right_lo[d] = cut
        stack.append((right_lo, bhi))
        stack.append((blo, left_hi))
    return CubeResult(-1, "verified")


def _origin_cell_indices(g: Grid, gamma: float) -> list:
    tol = 1e-12
    close = np.all(np.abs(g.points) <= gamma / 2.0 + tol, axis=1)
    return list(np.flatnonzero(close))


def origin_connected_component(mask: np.ndarray, g: Grid,
                               gamma: float) -> np.ndarray:
    """Flood fill over face-adjacent member cells, seeded at the cells
    whose cube touches the origin."""
    member = np.asarray(mask, dtype=bool).reshape(g.shape)
    keep = np.zeros_like(member)
    seeds = [np.unravel_index(i, g.shape)
             for i in _origin_cell_indices(g, gamma)]
    stack = [s for s in seeds if member[s]]
    for s in stack:
        keep[s] = True
    ndim = len(g.shape)
    while stack:
        cell = stack.pop()
        for d in range(ndim):
            for dd in (-1, 1):
                nb = list(cell)
                nb[d] += dd
                if not (0 <= nb[d] < g.shape[d]):
                    continue
                nb = tuple(nb)
                if member[nb] and not keep[nb]:
                    keep[nb] = True
                    stack.append(nb)
    return keep.ravel()


def build_hypercubes(mask: np.ndarray, g: Grid, gamma: float):
    """(kept_indices, boxes, dropped_indices): one cube of side gamma per
    member point of the origin-connected component."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise VerifyError("empty member set")
    keep = mask & origin_connected_component(mask, g, gamma)
    dropped = [int(i) for i in np.flatnonzero(mask & ~keep)]
    kept = [int(i) for i in np.flatnonzero(keep)]
    half = gamma / 2.0
    boxes = [(g.points[i] - half, g.points[i] + half) for i in kept]
    return kept, boxes, dropped


# worker-side state for the process pool
_WORK = {}


def _pool_init(candidate, cfg, eps):
    _WORK["c"] = candidate
    _WORK["cfg"] = cfg
    _WORK["eps"] = eps


def _pool_check(task):
    idx, lo, hi = task
    r = check_box(_WORK["c"], lo, hi, _WORK["cfg"], _WORK["eps"])
    r.index = idx
    return r


def certify(c: LyapCandidate, mask: np.ndarray, g: Grid,
            cfg: VerifyConfig) -> VerifyReport:
    """Check every member hypercube, then prune failures by Lyapunov level.

    The report is deterministic regardless of worker count: cube checks are
    independent and results are aggregated by grid index.
    """
    t0 = time.perf_counter()
    eps = min(cfg.eps_ball, c.origin.eps)
    if not eps > 0.0:
        raise VerifyError("origin exclusion radius must be positive")
    # runtime safeguard for the analytic origin radius
    check_origin_decay(c, n_samples=10_000, seed=0)

    kept, boxes, dropped = build_hypercubes(mask, g, cfg.gamma)
    tasks = [(i, lo, hi) for i, (lo, hi) in zip(kept, boxes)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers,
                                 initializer=_pool_init,
                                 initargs=(c, cfg, eps)) as ex:
            results = list(ex.map(_pool_check, tasks, chunksize=16))
    else:
        _pool_init(c, cfg, eps)
        results = [_pool_check(t) for t in tasks]
    statuses = {r.index: r for r in sorted(results, key=lambda r: r.index)}

    V = c.V_batch(g.points)
    Vd = c.Vdot_batch(g.points)
    failed = [i for i, r in statuses.items() if not r.ok]
    if failed:
        level = min(V[i] for i in failed)
        survivors = np.array([i for i in kept if V[i] < level], dtype=int)
        pruned = [i for i in kept if V[i] >= level]
    else:
        survivors = np.array(kept, dtype=int)
        pruned = []

    certified = np.zeros(g.N, dtype=bool)
    certified[survivors] = True
    # sublevel pruning can in principle disconnect the set; keep only the
    # origin component so the final union stays connected
    if certified.any():
        certified &= origin_connected_component(certified, g, cfg.gamma)
    c_max = float(np.max(V[certified])) if certified.any() else 0.0

    report = VerifyReport(
        statuses=statuses,
        member_mask=np.asarray(mask, dtype=bool).copy(),
        certified_mask=certified,
        pruned_points=pruned,
        dropped_disconnected=dropped,
        V=V, Vdot=Vd,
        c_max_empirical=c_max,
        eps_used=eps,
        delta_sat=cfg.delta_sat,
        gamma=cfg.gamma,
        wall_s=time.perf_counter() - t0,
    )
    sc = {"verified": 0, "counterexample": 0, "delta_counterexample": 0,
          "budget_exhausted": 0}
    for r in statuses.values():
        sc[r.status] += 1
    report.counts = {
        "grid": g.N,
        "members": int(report.member_mask.sum()),
        "checked": len(kept),
        "dropped_disconnected": len(dropped),
        "pruned": len(pruned),
        "certified": int(certified.sum()),
        **sc,
    }
    return report


def write_report_csv(path: str, report: VerifyReport, g: Grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["grid_index"] + [f"x{d + 1}" for d in range(g.n)] + \
            ["V", "Vdot", "member_before", "status", "pruned_by_level",
             "certified"]
        w.writerow(header)
        pruned = set(report.pruned_points)
        for i in range(g.N):
            r = report.statuses.get(i)
            w.writerow([i]
                       + [repr(float(v)) for v in g.points[i]]
                       + [repr(float(report.V[i])),
                          repr(float(report.Vdot[i])),
                          int(report.member_mask[i]),
                          r.status if r is not None else "",
                          int(i in pruned),
                          int(report.certified_mask[i])])


def write_summary_json(path: str, report: VerifyReport):
    doc = {
        "counts": report.counts,
        "c_max_empirical": report.c_max_empirical,
        "eps_used": report.eps_used,
        "delta_sat": report.delta_sat,
        "gamma": report.gamma,
        "wall_s": report.wall_s,
        "counterexamples": [
            {"grid_index": r.index, "status": r.status, "point": r.point}
            for r in report.statuses.values() if not r.ok
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
