"""Composite Lyapunov candidate: squared network-output deviation plus a
quadratic form, with a certified strict-decay neighborhood of the origin.

V(x)    = (phi(x) - phi(0))^2 + x^T P x
Vdot(x) = 2 (phi(x) - phi(0)) (grad phi(x) . f(x)) + 2 x^T P f(x)

For neural candidates P = alpha P1 - m m^T with m = W1^T D w2 and
D = diag(1 - tanh^2(b1)); this cancels the network's second-order term at
the origin so that Vdot = -alpha ||x||^2 + o(||x||^2) there. Quadratic
baseline certificates reuse the same container with a zero network.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import dynamics as dyn
from . import linalg, net as netmod
from .expr import BoxRegion, Interval
from .net import NetParams

ALPHA_FLOOR = 1e-6


class CandidateError(ValueError):
    pass


class OriginDecayError(RuntimeError):
    """Sampled strict-decay check failed inside the analysis ball; the
    certified neighborhood cannot be trusted."""


@dataclass
class OriginCert:
    delta: float
    C_f: float
    C_g: float
    alpha_bar: float
    eps_delta: float
    eps: float


# -- interval vector helpers (lo/hi ndarray pairs) ------------------------

def _iv_matvec(Wp, Wn, lo, hi):
    return Wp @ lo + Wn @ hi, Wp @ hi + Wn @ lo


def _iv_dotfixed(wp, wn, lo, hi):
    return float(wp @ lo + wn @ hi), float(wp @ hi + wn @ lo)


def _iv_mul(lo1, hi1, lo2, hi2):
    a = lo1 * lo2
    b = lo1 * hi2
    c = hi1 * lo2
    d = hi1 * hi2
    return np.minimum(np.minimum(a, b), np.minimum(c, d)), \
        np.maximum(np.maximum(a, b), np.maximum(c, d))


def _iv_sq(lo, hi):
    """Sharp elementwise square of an interval vector."""
    hi2 = np.maximum(lo * lo, hi * hi)
    lo2 = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(lo * lo, hi * hi))
    return lo2, hi2


@dataclass
class LyapCandidate:
    net: NetParams
    sys: dyn.DynSystem
    P1: np.ndarray
    P_theta: np.ndarray
    alpha: float
    beta: float
    origin: OriginCert
    kind: str = "neural"

    def __post_init__(self):
        w2 = self.net.w2
        self._z0 = np.tanh(self.net.b1)
        self._dz0 = 1.0 - self._z0 * self._z0
        self._phi0 = float(w2 @ self._z0)
        self._m = self.net.W1.T @ (self._dz0 * w2)
        # sign splits reused by interval evaluation
        self._W1p = np.maximum(self.net.W1, 0.0)
        self._W1n = np.minimum(self.net.W1, 0.0)
        self._w2p = np.maximum(w2, 0.0)
        self._w2n = np.minimum(w2, 0.0)
        self._Pp = np.maximum(self.P_theta, 0.0)
        self._Pn = np.minimum(self.P_theta, 0.0)

    # -- point evaluation -------------------------------------------------

    def V(self, x) -> float:
        x = np.asarray(x, dtype=float)
        u = netmod.forward(self.net, x) - self._phi0
        return float(u * u + x @ self.P_theta @ x)

    def V_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        u = netmod.forward_batch(self.net, X) - self._phi0
        return u * u + np.einsum("pi,ij,pj->p", X, self.P_theta, X)

    def Vdot(self, x, f=None) -> float:
        x = np.asarray(x, dtype=float)
        if f is None:
            f = self.sys.f_point(x)
        u = netmod.forward(self.net, x) - self._phi0
        g = netmod.grad_input(self.net, x)
        return float(2.0 * u * (g @ f) + 2.0 * (x @ self.P_theta @ f))

    def Vdot_batch(self, X: np.ndarray, F: np.ndarray | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if F is None:
            F = self.sys.f_batch(X)
        p = self.net
        Z = np.tanh(X @ p.W1.T + p.b1)
        u = Z @ p.w2 - self._phi0
        DZ = 1.0 - Z * Z
        S = ((DZ * (F @ p.W1.T)) @ p.w2)
        return 2.0 * u * S + 2.0 * np.einsum("pi,ij,pj->p", X, self.P_theta, F)

    # -- interval evaluation ----------------------------------------------

    def Vdot_interval(self, box: BoxRegion) -> Interval:
        lo = np.array([iv.lo for iv in box.intervals])
        hi = np.array([iv.hi for iv in box.intervals])
        flos, fhis = self._f_interval(box)
        l, h = self._vdot_enclosure(lo, hi, flos, fhis)
        return Interval(l, h)

    def _f_interval(self, box: BoxRegion):
        ivs = self.sys.f_interval(box)
        return (np.array([iv.lo for iv in ivs]),
                np.array([iv.hi for iv in ivs]))

    def _vdot_enclosure(self, lo, hi, flo, fhi):
        """Enclosure of Vdot over the box [lo, hi]; (flo, fhi) encloses f."""
        p = self.net
        # hidden pre-activations and tanh images (monotone endpoints)
        alo, ahi = _iv_matvec(self._W1p, self._W1n, lo, hi)
        zlo = np.tanh(alo + p.b1)
        zhi = np.tanh(ahi + p.b1)
        sqlo, sqhi = _iv_sq(zlo, zhi)
        dzlo, dzhi = 1.0 - sqhi, 1.0 - sqlo
        # u = w2 . z - phi(0)
        ulo, uhi = _iv_dotfixed(self._w2p, self._w2n, zlo, zhi)
        ulo -= self._phi0
        uhi -= self._phi0
        # S = w2 . (dz * (W1 f))
        tlo, thi = _iv_matvec(self._W1p, self._W1n, flo, fhi)
        dtlo, dthi = _iv_mul(dzlo, dzhi, tlo, thi)
        slo, shi = _iv_dotfixed(self._w2p, self._w2n, dtlo, dthi)
        # 2 u S
        t1lo, t1hi = _iv_mul(np.array(2.0 * ulo), np.array(2.0 * uhi),
                             np.array(slo), np.array(shi))
        # 2 x^T P f
        pflo, pfhi = _iv_matvec(self._Pp, self._Pn, flo, fhi)
        qlo, qhi = _iv_mul(lo, hi, pflo, pfhi)
        return (float(t1lo) + 2.0 * float(np.sum(qlo)),
                float(t1hi) + 2.0 * float(np.sum(qhi)))


def _p1_for(sys: dyn.DynSystem) -> np.ndarray:
    cached = getattr(sys, "_p1_cache", None)
    if cached is None:
        cached = linalg.solve_lyapunov(sys.A, np.eye(sys.n))
        sys._p1_cache = cached
    return cached


def build_candidate(net: NetParams, sys: dyn.DynSystem, beta: float,
                    delta: float) -> LyapCandidate:
    """Assemble the neural candidate and its origin certificate.

    alpha = max(beta * alpha_bar, ALPHA_FLOOR): the floor keeps the
    quadratic part positive definite when the network is degenerate
    (alpha_bar = 0 for a zero output layer).
    """
    if beta <= 1.0:
        raise CandidateError("beta must be > 1")
    if net.n != sys.n:
        raise CandidateError("network input dimension does not match system")
    P1 = _p1_for(sys)
    lam_min, lam_max = linalg.sym_eig_extrema(P1)
    nw1 = linalg.spectral_norm(net.W1)
    nw2 = float(np.linalg.norm(net.w2))
    alpha_bar = (nw1 * nw1 * nw2 * nw2) / lam_min
    alpha = max(beta * alpha_bar, ALPHA_FLOOR)

    z0 = np.tanh(net.b1)
    m = net.W1.T @ ((1.0 - z0 * z0) * net.w2)
    P_theta = alpha * P1 - np.outer(m, m)
    if not linalg.cholesky_pd(P_theta):
        raise CandidateError(
            "internal consistency failure: quadratic part lost positive "
            "definiteness despite alpha > alpha_bar")

    C_f = dyn.bound_Cf_cached(sys, delta)
    C_g = dyn.bound_Cg_cached(sys, delta)
    denom = 2.0 * (lam_min * (2.0 + nw1 * delta) * nw1 * C_f
                   + lam_max * beta * C_g)
    eps_delta = beta / denom if denom > 0.0 else float("inf")
    eps = min(delta, eps_delta)
    if eps <= 0.0:
        raise CandidateError("certified origin neighborhood collapsed (eps <= 0)")
    origin = OriginCert(delta=delta, C_f=C_f, C_g=C_g, alpha_bar=alpha_bar,
                        eps_delta=eps_delta, eps=eps)
    return LyapCandidate(net=net, sys=sys, P1=P1, P_theta=P_theta,
                         alpha=alpha, beta=beta, origin=origin, kind="neural")


def quadratic_candidate(P: np.ndarray, sys: dyn.DynSystem,
                        delta: float) -> LyapCandidate:
    """Wrap a positive definite matrix as a pure quadratic certificate
    V = x^T P x (zero network), with its own origin-decay radius.

    Vdot = x^T (A^T P + P A) x + 2 x^T P g(x); with
    mu = -lambda_max(A^T P + P A) > 0 the decay radius is
    mu / (2 ||P|| C_g). A non-contractive P gets eps = 0 and will be
    rejected at certification time.
    """
    P = np.asarray(P, dtype=float)
    if not linalg.cholesky_pd(P):
        raise CandidateError("quadratic certificate matrix must be PD")
    P1 = _p1_for(sys)
    M = sys.A.T @ P + P @ sys.A
    mu = -linalg.sym_eig_extrema(M)[1]
    C_f = dyn.bound_Cf_cached(sys, delta)
    C_g = dyn.bound_Cg_cached(sys, delta)
    if mu <= 0.0:
        eps_delta = 0.0
    elif C_g == 0.0:
        eps_delta = float("inf")
    else:
        eps_delta = mu / (2.0 * linalg.spectral_norm(P) * C_g)
    eps = min(delta, eps_delta)
    origin = OriginCert(delta=delta, C_f=C_f, C_g=C_g, alpha_bar=0.0,
                        eps_delta=eps_delta, eps=eps)
    return LyapCandidate(net=netmod.zero_params(sys.n), sys=sys, P1=P1,
                         P_theta=P, alpha=0.0, beta=0.0, origin=origin,
                         kind="quadratic")


def check_origin_decay(c: LyapCandidate, n_samples: int = 10_000,
                       seed: int = 0) -> float:
    """Sample the certified origin ball and confirm Vdot < 0 everywhere
    (excluding the numerical core ||x|| < 1e-9). Returns the worst Vdot
    seen; raises OriginDecayError on any violation.

    This is the runtime safeguard behind the analytic radius formula: if it
    fails, certification aborts instead of trusting the formula.
    """
    eps = c.origin.eps
    if not eps > 0.0:
        raise OriginDecayError("origin certificate has eps <= 0")
    rng = np.random.default_rng(seed)
    n = c.sys.n
    dirs = rng.standard_normal((n_samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = eps * rng.random(n_samples) ** (1.0 / n)
    X = dirs * radii[:, None]
    keep = np.linalg.norm(X, axis=1) >= 1e-9
    X = X[keep]
    vd = c.Vdot_batch(X)
    worst = float(np.max(vd)) if len(vd) else -np.inf
    if worst >= 0.0:
        i = int(np.argmax(vd))
        raise OriginDecayError(
            f"strict decay violated inside origin ball: Vdot({X[i].tolist()}) "
            f"= {worst:g}")
    return worst


# -- model file -----------------------------------------------------------

MODEL_FORMAT = "roacert-model-v1"


def save_model(path: str, c: LyapCandidate, metadata: dict | None = None):
    doc = {
        "format": MODEL_FORMAT,
        "kind": c.kind,
        "system": {"name": c.sys.name, "config": c.sys.config_text},
        "n": c.net.n,
        "h": c.net.h,
        "W1": c.net.W1.tolist(),
        "b1": c.net.b1.tolist(),
        "W2": c.net.W2.tolist(),
        "P_theta": c.P_theta.tolist(),
        "P1": c.P1.tolist(),
        "alpha": c.alpha,
        "beta": c.beta,
        "origin": asdict(c.origin),
        "epsilon": c.origin.eps,
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str):
    """Returns (candidate, metadata). Stored matrices are used verbatim so a
    save/load round trip is bit-exact."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise CandidateError(f"not a model file: {path}")
    sys = dyn.load_system(doc["system"]["config"])
    p = NetParams(np.array(doc["W1"], dtype=float),
                  np.array(doc["b1"], dtype=float),
                  np.array(doc["W2"], dtype=float))
    origin = OriginCert(**doc["origin"])
    cand = LyapCandidate(net=p, sys=sys,
                         P1=np.array(doc["P1"], dtype=float),
                         P_theta=np.array(doc["P_theta"], dtype=float),
                         alpha=float(doc["alpha"]), beta=float(doc["beta"]),
                         origin=origin, kind=doc.get("kind", "neural"))
    return cand, doc.get("metadata", {})
