"""End-to-end acceptance checks.

Each test prints one PASS/FAIL verdict line (run with ``pytest -s`` to see
them as they happen). The trained benchmark models are shared through
session fixtures, so the expensive trainings run once; expect tens of
minutes on a single CPU core for the full file.
"""

import time

import numpy as np
import pytest

from roacert import dynamics as dyn
from roacert.expr import BoxRegion, Interval
from roacert.lyapunov import OriginCert, build_candidate, check_origin_decay, \
    quadratic_candidate
from roacert.net import init_params
from roacert.train import TrainConfig, loss_smooth, make_grid, \
    membership_from_values, roa_membership_hard, train, \
    train_quadratic_baseline
from roacert.verify import VerifyConfig, certify, \
    origin_connected_component, write_report_csv

VDP_EPOCHS = 2000
QUARTIC_EPOCHS = 600
BASELINE_EPOCHS = 600
SEEDS = (0, 1, 2)


def verdict(num, name, ok, detail=""):
    line = f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" -- {detail}"
    print("\n" + line)
    assert ok, line


def run_verify(c, grid, eps_vdot=1e-3, workers=1):
    mask = roa_membership_hard(c, grid, eps_vdot)
    cfg = VerifyConfig(delta_sat=1e-6 * grid.step,
                       eps_ball=min(1e-4, c.origin.eps),
                       gamma=grid.step, workers=workers)
    return mask, certify(c, mask, grid, cfg)


@pytest.fixture(scope="session")
def vdp_runs():
    """Trained Van der Pol candidates for three seeds, plus both quadratic
    baselines, all certified. Timed for the end-to-end budget."""
    t0 = time.time()
    sys_ = dyn.load_builtin("vanderpol_reverse")
    runs = {}
    for seed in SEEDS:
        res = train(sys_, TrainConfig(epochs=VDP_EPOCHS, seed=seed))
        mask, rep = run_verify(res.candidate, res.grid)
        runs[seed] = (res, mask, rep)
    plain = train_quadratic_baseline(sys_, TrainConfig(epochs=0, seed=0),
                                    optimize=False)
    opt = train_quadratic_baseline(
        sys_, TrainConfig(epochs=BASELINE_EPOCHS, seed=0), optimize=True)
    baselines = {}
    for name, r in (("quadratic", plain), ("optimized", opt)):
        mask, rep = run_verify(r.candidate, r.grid)
        baselines[name] = (r, mask, rep)
    return {"runs": runs, "baselines": baselines, "system": sys_,
            "wall": time.time() - t0}


@pytest.fixture(scope="session")
def quartic_run():
    t0 = time.time()
    sys_ = dyn.load_builtin("quartic_interaction")
    res = train(sys_, TrainConfig(epochs=QUARTIC_EPOCHS, seed=0))
    mask, rep = run_verify(res.candidate, res.grid)
    return {"res": res, "mask": mask, "report": rep, "system": sys_,
            "wall": time.time() - t0}


def test_criterion_1_gradient_integrity():
    t0 = time.time()
    sys_ = dyn.load_builtin("vanderpol_reverse")
    grid = make_grid(BoxRegion.from_bounds([-2.8, -2.8], [3.2, 3.2]), 3)
    cfg = TrainConfig(hidden=3, grid_per_dim=3, sigmoid_k=8.0)
    h = 1e-6
    worst = 0.0
    for seed in range(20):
        p = init_params(2, 3, seed)
        rng = np.random.default_rng(1000 + seed)
        p.b1[:] = rng.uniform(-0.5, 0.5, 3)  # break odd symmetry

        def loss_at(q):
            c = build_candidate(q, sys_, cfg.beta, grid.step)
            return loss_smooth(c, grid, cfg)[0]

        c = build_candidate(p, sys_, cfg.beta, grid.step)
        _, grads = loss_smooth(c, grid, cfg)
        for name in ("W1", "b1", "W2"):
            arr = getattr(p, name)
            ga = getattr(grads, name)
            for ij in np.ndindex(arr.shape):
                pp, pm = p.copy(), p.copy()
                getattr(pp, name)[ij] += h
                getattr(pm, name)[ij] -= h
                fd = (loss_at(pp) - loss_at(pm)) / (2 * h)
                err = abs(ga[ij] - fd) / max(1.0, abs(fd), abs(ga[ij]))
                worst = max(worst, err)
    wall = time.time() - t0
    verdict(1, "gradient integrity", worst <= 1e-5 and wall < 10,
            f"worst rel err {worst:.2e}, {wall:.1f}s")


def test_criterion_2_membership_oracle():
    t0 = time.time()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(200):
        N = int(rng.integers(5, 101))
        V = rng.uniform(0, 5, N)
        if rng.random() < 0.3:
            V = np.round(V, 1)  # force level ties
        Vd = rng.uniform(-2, 2, N)
        eps = float(rng.uniform(1e-4, 1.0))
        fast = membership_from_values(V, Vd, eps)
        slow = np.array([not any(V[j] <= V[i] and Vd[j] > -eps
                                 for j in range(N)) for i in range(N)])
        mismatches += int(not np.array_equal(fast, slow))
    wall = time.time() - t0
    verdict(2, "discrete-set oracle", mismatches == 0 and wall < 10,
            f"{mismatches} mismatching instances, {wall:.1f}s")


def test_criterion_3_interval_soundness(vdp_runs):
    t0 = time.time()
    c = vdp_runs["runs"][0][0].candidate
    rng = np.random.default_rng(7)
    escapes = 0
    for _ in range(10_000):
        lo = rng.uniform(-3.0, 2.5, 2)
        hi = lo + rng.uniform(0.0, 0.5, 2)
        iv = c.Vdot_interval(BoxRegion.from_bounds(lo, hi))
        x = lo + (hi - lo) * rng.random(2)
        vd = c.Vdot(x)
        tol = 1e-9 * (1.0 + abs(vd))
        escapes += int(not (iv.lo - tol <= vd <= iv.hi + tol))
    wall = time.time() - t0
    verdict(3, "interval soundness fuzz", escapes == 0 and wall < 60,
            f"{escapes}/10000 escapes, {wall:.1f}s")


def test_criterion_4_origin_analysis(vdp_runs, quartic_run):
    t0 = time.time()
    details = []
    ok = True
    for label, c in (("vdp", vdp_runs["runs"][0][0].candidate),
                     ("quartic", quartic_run["res"].candidate)):
        eps_ok = c.origin.eps > 0
        try:
            worst = check_origin_decay(c, n_samples=100_000, seed=0)
            decay_ok = worst < 0.0
        except Exception:
            worst, decay_ok = float("nan"), False
        ok = ok and eps_ok and decay_ok
        details.append(f"{label}: eps={c.origin.eps:.2e} worst Vdot={worst:.2e}")
    wall = time.time() - t0
    verdict(4, "origin analysis", ok and wall < 60,
            "; ".join(details) + f", {wall:.1f}s")


def test_criterion_5_vanderpol_dominance(vdp_runs):
    base_cert = {k: v[2].counts["certified"]
                 for k, v in vdp_runs["baselines"].items()}
    wins = 0
    details = [f"baselines {base_cert}"]
    connected_ok = True
    for seed in SEEDS:
        res, mask, rep = vdp_runs["runs"][seed]
        cert = rep.counts["certified"]
        win = all(cert > b for b in base_cert.values())
        wins += int(win)
        nonempty = rep.certified_mask.any()
        comp = origin_connected_component(rep.certified_mask, res.grid,
                                          res.grid.step)
        connected = nonempty and np.array_equal(rep.certified_mask, comp)
        connected_ok = connected_ok and connected
        details.append(f"seed {seed}: certified {cert}"
                       f"{' (win)' if win else ''}")
    wall = vdp_runs["wall"]
    verdict(5, "Van der Pol end-to-end dominance",
            wins >= 2 and connected_ok and wall <= 1800,
            "; ".join(details) + f"; {wins}/3 wins, {wall:.0f}s")


def test_criterion_6_quartic_excludes_unstable_equilibria(quartic_run):
    rep = quartic_run["report"]
    grid = quartic_run["res"].grid
    pts = grid.points[rep.certified_mask]
    ok = rep.certified_mask.any()
    details = []
    for eq in ((0.0, 1.0), (1.0, 0.0), (-1.0, 0.0)):
        d = float(np.min(np.max(np.abs(pts - np.array(eq)), axis=1))) \
            if len(pts) else float("inf")
        excl = d > grid.step  # at least one full cell away
        ok = ok and excl
        details.append(f"{eq}: inf-dist {d:.2f}")
    wall = quartic_run["wall"]
    verdict(6, "quartic excludes unstable equilibria", ok and wall <= 1800,
            "; ".join(details) + f"; step {grid.step:g}, {wall:.0f}s")


def test_criterion_7_trajectory_convergence(vdp_runs, quartic_run):
    t0 = time.time()
    rng = np.random.default_rng(3)
    ok = True
    details = []
    for label, res, rep in (
            ("vdp", vdp_runs["runs"][0][0], vdp_runs["runs"][0][2]),
            ("quartic", quartic_run["res"], quartic_run["report"])):
        grid = res.grid
        idx = np.flatnonzero(rep.certified_mask)
        pick = rng.choice(idx, size=100)
        X0 = grid.points[pick] + rng.uniform(-grid.step / 2, grid.step / 2,
                                             (100, 2))
        converged = 0
        for x0 in X0:
            traj = dyn.integrate_rk4(res.candidate.sys, x0, 0.01, 200.0,
                                     converge_tol=1e-3)
            converged += int(traj.flag == "converged")
        ok = ok and converged == 100
        details.append(f"{label}: {converged}/100")
    wall = time.time() - t0
    verdict(7, "trajectory convergence", ok and wall < 300,
            "; ".join(details) + f", {wall:.0f}s")


class _RiggedCircle:
    """Vdot(x) = ||x||^2 - r^2: analytic violation circle at radius r."""

    def __init__(self, r):
        self.r = r
        self.origin = OriginCert(delta=1.0, C_f=0.0, C_g=0.0, alpha_bar=0.0,
                                 eps_delta=1e-4, eps=1e-4)

    def Vdot(self, x, f=None):
        x = np.asarray(x, dtype=float)
        return float(x @ x - self.r * self.r)

    def Vdot_interval(self, box):
        lo = np.array([iv.lo for iv in box.intervals])
        hi = np.array([iv.hi for iv in box.intervals])
        sq_hi = np.maximum(lo * lo, hi * hi)
        sq_lo = np.where((lo <= 0) & (hi >= 0), 0.0,
                         np.minimum(lo * lo, hi * hi))
        return Interval(float(np.sum(sq_lo)) - self.r ** 2,
                        float(np.sum(sq_hi)) - self.r ** 2)


def test_criterion_8_verifier_calibration():
    from roacert.verify import check_box
    t0 = time.time()
    cfg = VerifyConfig(delta_sat=1e-7, eps_ball=1e-4, gamma=0.1)
    r = check_box(_RiggedCircle(0.1), [0.05, 0.05], [0.15, 0.15], cfg)
    rigged_ok = r.status in ("counterexample", "delta_counterexample") and \
        np.linalg.norm(r.point) >= 0.1 - cfg.delta_sat

    lin = dyn.load_system(
        'name = "lin"\nstates = ["x1", "x2"]\n'
        'f = ["-x1", "-x2"]\ndomain = [[-2, 2], [-2, 2]]\n')
    grid = make_grid(lin.domain, 50)
    c = quadratic_candidate(0.5 * np.eye(2), lin, delta=0.01)
    mask, rep = run_verify(c, grid)
    lin_ok = rep.counts["verified"] == 2500 and \
        rep.counts["counterexample"] == 0 and \
        rep.counts["delta_counterexample"] == 0 and \
        rep.counts["budget_exhausted"] == 0
    wall = time.time() - t0
    verdict(8, "verifier calibration", rigged_ok and lin_ok and wall < 120,
            f"rigged status {r.status} at |x|={np.linalg.norm(r.point):.4f}; "
            f"linear verified {rep.counts['verified']}/2500, {wall:.0f}s")


def test_criterion_9_worker_determinism(vdp_runs, quartic_run, tmp_path):
    pairs = []
    for label, res in (("vdp", vdp_runs["runs"][0][0]),
                       ("quartic", quartic_run["res"])):
        files = []
        for workers in (1, 2):
            _, rep = run_verify(res.candidate, res.grid, workers=workers)
            path = tmp_path / f"{label}_w{workers}.csv"
            write_report_csv(str(path), rep, res.grid)
            files.append(path.read_bytes())
        pairs.append((label, files[0] == files[1]))
    ok = all(same for _, same in pairs)
    verdict(9, "worker-count determinism", ok,
            "; ".join(f"{label}: {'identical' if same else 'DIFFER'}"
                      for label, same in pairs))
