"""Training: grid construction, the discrete RoA-membership oracle, its
smooth trainable surrogate, the Adam loop, and quadratic baselines.

A grid point belongs to the discrete RoA estimate iff every grid point at
equal or lower Lyapunov level has strictly decreasing V (margin
eps_vdot). The training loss is the negated smooth cardinality of that
set: for each point, the exclusion evidence is the best witness
max_j sigmoid(kV (V_i - V_j)) * sigmoid(kD (Vdot_j + eps_vdot)),
a product of indicators for "j is at or below i's level" and "j violates
decrease". The outer max stays hard (max-pool style credit assignment).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import dynamics as dyn
from . import linalg, net as netmod
from .expr import BoxRegion
from .lyapunov import ALPHA_FLOOR, LyapCandidate, build_candidate, \
    quadratic_candidate
from .net import NetGrads, NetParams, init_params


class TrainError(RuntimeError):
    pass


@dataclass
class Grid:
    points: np.ndarray  # (N, n) cell centers
    step: float
    shape: tuple

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass
class TrainConfig:
    hidden: int = 512
    lr: float = 5e-4
    epochs: int = 2000
    grid_per_dim: int = 50
    eps_vdot: float = 1e-3
    sigmoid_k: float = 50.0
    beta: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.eps_vdot <= 0 or self.sigmoid_k <= 0:
            raise ValueError("lr, eps_vdot and sigmoid_k must be positive")
        if self.hidden < 1:
            raise ValueError("hidden width must be >= 1")
        if self.beta <= 1.0:
            raise ValueError("beta must be > 1")


def make_grid(domain: BoxRegion, per_dim: int) -> Grid:
    """Cell-centered uniform grid; an even per_dim over a symmetric domain
    never contains the origin."""
    if per_dim < 2:
        raise ValueError("per_dim must be >= 2")
    steps = [iv.width / per_dim for iv in domain.intervals]
    if max(steps) - min(steps) > 1e-12 * max(steps):
        raise ValueError("grid cells must be square: equal width per dimension")
    step = steps[0]
    axes = [iv.lo + (np.arange(per_dim) + 0.5) * step
            for iv in domain.intervals]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    if np.min(np.linalg.norm(points, axis=1)) < 1e-12:
        raise ValueError("origin lies on a grid point; use an even per_dim")
    return Grid(points=points, step=step,
                shape=tuple([per_dim] * len(domain.intervals)))


def membership_from_values(V: np.ndarray, Vd: np.ndarray,
                           eps_vdot: float) -> np.ndarray:
    """O(N log N) evaluation of the discrete membership rule via sorting:
    point i is a member iff no point with V_j <= V_i has Vdot_j > -eps."""
    bad = Vd > -eps_vdot
    order = np.argsort(V, kind="stable")
    Vs = V[order]
    cumbad = np.cumsum(bad[order])
    pos = np.searchsorted(Vs, V, side="right")
    return cumbad[pos - 1] == 0


def roa_membership_hard(c: LyapCandidate, g: Grid,
                        eps_vdot: float) -> np.ndarray:
    V = c.V_batch(g.points)
    Vd = c.Vdot_batch(g.points)
    return membership_from_values(V, Vd, eps_vdot)


# -- smooth loss ----------------------------------------------------------

def _score_grads(V: np.ndarray, Vd: np.ndarray, kV: float, kD: float,
                 eps_vdot: float):
    """Smooth negated cardinality and its gradients wrt the V/Vdot arrays.

    loss = -N + sum_i max_j sigmoid(kV (V_i - V_j) / sV)
                         * sigmoid(kD (Vd_j + eps) / sD)
    with sV = mean|V|, sD = mean|Vd| differentiated through.
    """
    N = V.shape[0]
    sV = max(float(np.mean(np.abs(V))), 1e-30)
    sD = max(float(np.mean(np.abs(Vd))), 1e-30)
    cvec = kD * (Vd + eps_vdot) / sD
    s2 = expit(cvec)
    score = expit((kV / sV) * (V[:, None] - V[None, :])) * s2[None, :]
    jstar = np.argmax(score, axis=1)
    idx = np.arange(N)
    loss = -float(N) + float(np.sum(score[idx, jstar]))
    if not np.isfinite(loss):
        raise TrainError("non-finite loss")

    avec = (kV / sV) * (V - V[jstar])
    s1 = expit(avec)
    s2j = s2[jstar]
    wa = s1 * (1.0 - s1) * s2j          # dL/d a_ij at the argmax witness
    wc = s1 * s2j * (1.0 - s2j)         # dL/d c_j at the argmax witness
    gV = wa * (kV / sV)
    np.subtract.at(gV, jstar, wa * (kV / sV))
    gVd = np.zeros(N)
    np.add.at(gVd, jstar, wc * (kD / sD))
    # normalization paths: d a/d sV = -a/sV, d sV/d V_p = sign(V_p)/N
    gsV = -float(np.sum(wa * avec)) / sV
    gsD = -float(np.sum(wc * cvec[jstar])) / sD
    gV = gV + gsV * np.sign(V) / N
    gVd = gVd + gsD * np.sign(Vd) / N
    return loss, gV, gVd

@dataclass
class _EvalCache:
    """Per-run theta-independent precomputation over the grid."""
    X: np.ndarray
    F: np.ndarray
    q1: np.ndarray   # x^T P1 x
    qf: np.ndarray   # x^T P1 f
    lam_min: float

    @staticmethod
    def build(c: LyapCandidate, g: Grid) -> "_EvalCache":
        X = g.points
        F = c.sys.f_batch(X)
        q1 = np.einsum("pi,ij,pj->p", X, c.P1, X)
        qf = np.einsum("pi,ij,pj->p", X, c.P1, F)
        lam_min = linalg.sym_eig_extrema(c.P1)[0]
        return _EvalCache(X, F, q1, qf, lam_min)


def _loss_core(c: LyapCandidate, cache: _EvalCache, kV: float, kD: float,
               eps_vdot: float):
    """Loss, parameter gradients, and the V/Vdot arrays for one full batch.

    Logits are normalized in-graph by the mean magnitudes of V and Vdot.
    Without this the smooth loss has a spurious descent direction: scaling
    the candidate down shrinks every level logit toward sigmoid(0) = 0.5
    while leaving the hard membership unchanged, and training collapses the
    weights to zero. With in-graph normalization that direction is neutral
    for the level term and penalized by the decrease margin.
    """
    p = c.net
    X, F = cache.X, cache.F
    N = X.shape[0]
    w2 = p.w2
    z0 = np.tanh(p.b1)
    dz0 = 1.0 - z0 * z0
    phi0 = float(w2 @ z0)

    A1 = X @ p.W1.T + p.b1
    Z = np.tanh(A1)
    DZ = 1.0 - Z * Z
    u = Z @ w2 - phi0
    T = F @ p.W1.T
    S = (DZ * T) @ w2
    m = p.W1.T @ (dz0 * w2)
    mx = X @ m
    mf = F @ m
    alpha = c.alpha

    V = u * u + alpha * cache.q1 - mx * mx
    Vd = 2.0 * u * S + 2.0 * alpha * cache.qf - 2.0 * mx * mf

    loss, gV, gVd = _score_grads(V, Vd, kV, kD, eps_vdot)

    # -- backprop into theta ---------------------------------------------
    gW1 = np.zeros_like(p.W1)
    gb1 = np.zeros_like(p.b1)
    gw2 = np.zeros(p.h)

    # phi(x) - phi(0) path
    cu = 2.0 * (gV * u + gVd * S)
    gw2 += cu @ Z - cu.sum() * z0
    gb1 += w2 * (cu @ DZ - cu.sum() * dz0)
    gW1 += w2[:, None] * ((DZ * cu[:, None]).T @ X)

    # grad-phi . f path (the Vdot second path)
    cS = 2.0 * (gVd * u)
    ZDT = -2.0 * Z * DZ * T
    gw2 += cS @ (DZ * T)
    gb1 += w2 * (cS @ ZDT)
    gW1 += w2[:, None] * ((DZ * cS[:, None]).T @ F + (ZDT * cS[:, None]).T @ X)

    # quadratic-correction path: m . v terms with m = W1^T diag(dz0) w2
    ddz0 = -2.0 * z0 * dz0

    def mdot_path(omega, Vmat, TV):
        nonlocal gW1, gb1, gw2
        s = omega @ TV
        gw2 += dz0 * s
        gb1 += w2 * ddz0 * s
        gW1 += np.outer(dz0 * w2, omega @ Vmat)

    mdot_path(-2.0 * (gV * mx + gVd * mf), X, A1 - p.b1)
    mdot_path(-2.0 * (gVd * mx), F, T)

    # alpha path (theta-dependent unless clamped at the floor)
    calpha = float(gV @ cache.q1 + 2.0 * (gVd @ cache.qf))
    nw2 = float(np.linalg.norm(w2))
    if c.alpha > ALPHA_FLOOR and nw2 > 0.0:
        sig, u1, v1 = linalg.top_singular_vectors(p.W1)
        coef = calpha * c.beta / cache.lam_min
        gw2 += coef * sig * sig * 2.0 * w2
        gW1 += coef * nw2 * nw2 * 2.0 * sig * np.outer(u1, v1)

    grads = NetGrads(gW1, gb1, gw2.reshape(1, -1))
    return loss, grads, V, Vd


def loss_smooth(c: LyapCandidate, g: Grid, cfg: TrainConfig):
    """Smooth loss and full parameter gradients at the given sharpness."""
    if c.kind != "neural":
        raise TrainError("loss_smooth requires a neural candidate; quadratic "
                         "baselines train through their own loop")
    cache = _EvalCache.build(c, g)
    loss, grads, _, _ = _loss_core(c, cache, cfg.sigmoid_k, cfg.sigmoid_k,
                                   cfg.eps_vdot)
    return loss, grads


# -- Adam -----------------------------------------------------------------

class _Adam:
    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mh = self.m[i] / (1 - self.b1 ** self.t)
            vh = self.v[i] / (1 - self.b2 ** self.t)
            out.append(p - self.lr * mh / (np.sqrt(vh) + self.eps))
        return out


@dataclass
class TrainResult:
    candidate: LyapCandidate
    grid: Grid
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_cardinality: int = 0


def train(sys: dyn.DynSystem, cfg: TrainConfig) -> TrainResult:
    """Full-batch Adam on the smooth loss; returns the candidate with the
    best hard cardinality seen (never worse than the initialization)."""
    grid = make_grid(sys.domain, cfg.grid_per_dim)
    delta = grid.step
    params = init_params(sys.n, cfg.hidden, cfg.seed)
    adam = _Adam([params.W1.shape, params.b1.shape, params.W2.shape], cfg.lr)

    cand = build_candidate(params, sys, cfg.beta, delta)
    cache = _EvalCache.build(cand, grid)

    best_params = params.copy()
    best_card = -1
    best_epoch = 0
    log = []
    t0 = time.perf_counter()

    for epoch in range(cfg.epochs + 1):
        cand = build_candidate(params, sys, cfg.beta, delta)
        loss, grads, V, Vd = _loss_core(cand, cache, cfg.sigmoid_k,
                                        cfg.sigmoid_k, cfg.eps_vdot)
        card = int(np.sum(membership_from_values(V, Vd, cfg.eps_vdot)))
        if card > best_card:
            best_card = card
            best_params = params.copy()
            best_epoch = epoch
        log.append({"epoch": epoch, "smooth_loss": loss,
                    "hard_cardinality": card, "alpha": cand.alpha,
                    "eps": cand.origin.eps,
                    "wall_ms": (time.perf_counter() - t0) * 1e3})
        if epoch == cfg.epochs:
            break
        new = adam.step([params.W1, params.b1, params.W2.ravel()],
                        [grads.W1, grads.b1, grads.W2.ravel()])
        if not all(np.all(np.isfinite(a)) for a in new):
            break  # divergence: keep last good snapshot
        params = NetParams(new[0], new[1], new[2].reshape(1, -1))

    best = build_candidate(best_params, sys, cfg.beta, delta)
    return TrainResult(candidate=best, grid=grid, log=log,
                       best_epoch=best_epoch, best_cardinality=best_card)


def train_quadratic_baseline(sys: dyn.DynSystem, cfg: TrainConfig,
                             optimize: bool) -> TrainResult:
    """Quadratic certificates V = x^T P x.

    optimize=False: P = P1 from the linearization's Lyapunov equation.
    optimize=True: P = L L^T + 1e-6 I with lower-triangular L trained by
    Adam on the same smooth loss.
    """
    grid = make_grid(sys.domain, cfg.grid_per_dim)
    delta = grid.step
    X = grid.points
    F = sys.f_batch(X)
    N = grid.N
    base = quadratic_candidate(
        linalg.solve_lyapunov(sys.A, np.eye(sys.n)), sys, delta)
    P1 = base.P_theta

    if not optimize:
        V = base.V_batch(X)
        Vd = base.Vdot_batch(X, F)
        card = int(np.sum(membership_from_values(V, Vd, cfg.eps_vdot)))
        log = [{"epoch": 0, "smooth_loss": float("nan"),
                "hard_cardinality": card, "alpha": 0.0,
                "eps": base.origin.eps, "wall_ms": 0.0}]
        return TrainResult(candidate=base, grid=grid, log=log,
                           best_epoch=0, best_cardinality=card)

    L = np.linalg.cholesky(P1)
    tril = np.tril_indices(sys.n)
    adam = _Adam([L[tril].shape], cfg.lr)
    best_L = L.copy()
    best_card = -1
    best_epoch = 0
    log = []
    t0 = time.perf_counter()

    for epoch in range(cfg.epochs + 1):
        P = L @ L.T + 1e-6 * np.eye(sys.n)
        V = np.einsum("pi,ij,pj->p", X, P, X)
        Vd = 2.0 * np.einsum("pi,ij,pj->p", X, P, F)
        loss, gV, gVd = _score_grads(V, Vd, cfg.sigmoid_k, cfg.sigmoid_k,
                                     cfg.eps_vdot)
        GP = X.T @ (gV[:, None] * X) + 2.0 * X.T @ (gVd[:, None] * F)
        gL = (GP + GP.T) @ L

        card = int(np.sum(membership_from_values(V, Vd, cfg.eps_vdot)))
        if card > best_card:
            best_card = card
            best_L = L.copy()
            best_epoch = epoch
        log.append({"epoch": epoch, "smooth_loss": loss,
                    "hard_cardinality": card, "alpha": 0.0, "eps": 0.0,
                    "wall_ms": (time.perf_counter() - t0) * 1e3})
        if epoch == cfg.epochs:
            break
        flat = adam.step([L[tril]], [gL[tril]])[0]
        if not np.all(np.isfinite(flat)):
            break
        L = np.zeros_like(L)
        L[tril] = flat

    P_best = best_L @ best_L.T + 1e-6 * np.eye(sys.n)
    cand = quadratic_candidate(P_best, sys, delta)
    return TrainResult(candidate=cand, grid=grid, log=log,
                       best_epoch=best_epoch, best_cardinality=best_card)


def write_training_log(path: str, rows: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "smooth_loss", "hard_cardinality", "alpha",
                    "eps", "wall_ms"])
        for r in rows:
            w.writerow([r["epoch"], repr(r["smooth_loss"]),
                        r["hard_cardinality"], repr(r["alpha"]),
                        repr(r["eps"]), f"{r['wall_ms']:.1f}"])
