"""Dynamical system container: vector field, derived Jacobian/Hessian grids,
ball-supremum smoothness bounds, and RK4 integration.

Systems are loaded from a small key = value config::

    name = "vanderpol_reverse"
    states = ["x1", "x2"]
    f = ["-x2", "x1 + (x1^2 - 1)*x2"]
    domain = [[-3, 3], [-3, 3]]

The origin must be an equilibrium and the linearization must be Hurwitz;
both are checked at load time because every downstream construction
silently assumes them.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .expr import BoxRegion, ExprNode, parse_expr


class SystemError_(ValueError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, n)
    flag: str  # "completed" | "converged" | "left_domain"


@dataclass
class DynSystem:
    name: str
    state_names: list
    f: list  # list[n] of ExprNode
    domain: BoxRegion
    jacobian: list = field(default_factory=list)   # n x n ExprNode
    hessian: list = field(default_factory=list)    # n x n x n ExprNode
    _cf_cache: dict = field(default_factory=dict, repr=False)
    _cg_cache: dict = field(default_factory=dict, repr=False)
    _A: np.ndarray = field(default=None, repr=False)
    config_text: str = ""

    @property
    def n(self) -> int:
        return len(self.f)

    def f_point(self, x) -> np.ndarray:
        return np.array([fi.eval(x) for fi in self.f])

    def f_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.column_stack([fi.eval_batch(X) for fi in self.f])

    def f_interval(self, box: BoxRegion):
        return [fi.eval_interval(box) for fi in self.f]

    @property
    def A(self) -> np.ndarray:
        """Jacobian of f at the origin."""
        if self._A is None:
            zero = [0.0] * self.n
            self._A = np.array([[self.jacobian[i][j].eval(zero)
                                 for j in range(self.n)] for i in range(self.n)])
        return self._A

    def domain_radius(self) -> float:
        """Largest r such that the inf-ball [-r, r]^n fits in the domain."""
        return min(min(-iv.lo, iv.hi) for iv in self.domain.intervals)


def _parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemError_(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        try:
            out[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as e:
            raise SystemError_(f"config line {lineno}: bad value: {e}") from e
    return out


def load_system(config_text: str) -> DynSystem:
    """Build a DynSystem from config text, deriving Jacobian/Hessian grids
    and rejecting systems whose origin is not a Hurwitz equilibrium."""
    cfg = _parse_config(config_text)
    for key in ("name", "states", "f", "domain"):
        if key not in cfg:
            raise SystemError_(f"config missing {key!r}")
    names = list(cfg["states"])
    n = len(names)
    if len(cfg["f"]) != n:
        raise SystemError_("need one dynamics expression per state")
    fs = [parse_expr(s, names) for s in cfg["f"]]
    dom = cfg["domain"]
    if len(dom) != n:
        raise SystemError_("domain must have one [lo, hi] pair per state")
    domain = BoxRegion.from_bounds([d[0] for d in dom], [d[1] for d in dom])
    for iv in domain.intervals:
        if not (iv.lo < 0.0 < iv.hi):
            raise SystemError_("domain must contain the origin strictly inside")

    sys = DynSystem(name=str(cfg["name"]), state_names=names, f=fs,
                    domain=domain, config_text=config_text)
    sys.jacobian = [[fi.diff(j) for j in range(n)] for fi in fs]
    sys.hessian = [[[sys.jacobian[i][j].diff(k) for k in range(n)]
                    for j in range(n)] for i in range(n)]

    zero = [0.0] * n
    f0 = sys.f_point(zero)
    if np.max(np.abs(f0)) > 1e-12:
        raise SystemError_(
            f"origin is not an equilibrium: f(0) = {f0.tolist()}")
    if not linalg.is_hurwitz(sys.A):
        raise SystemError_(
            "linearization at the origin is not Hurwitz (asymptotic "
            "stability of the origin requires all eigenvalues of the "
            "Jacobian to have strictly negative real part)")
    return sys


BUILTIN_CONFIGS = {
    "vanderpol_reverse": (
        'name = "vanderpol_reverse"\n'
        'states = ["x1", "x2"]\n'
        'f = ["-x2", "x1 + (x1^2 - 1)*x2"]\n'
        'domain = [[-3, 3], [-3, 3]]\n'
    ),
    "quartic_interaction": (
        'name = "quartic_interaction"\n'
        'states = ["x1", "x2"]\n'
        'f = ["-x1*(1 - x1^2 - 2*x2 + x2^4)", "-x2*(1 - x1^4 - x2^2)"]\n'
        'domain = [[-1.5, 1.5], [-1.5, 1.5]]\n'
    ),
}


def load_builtin(name: str) -> DynSystem:
    if name not in BUILTIN_CONFIGS:
        raise SystemError_(
            f"unknown builtin system {name!r}; available: "
            + ", ".join(sorted(BUILTIN_CONFIGS)))
    return load_system(BUILTIN_CONFIGS[name])


def _delta_box(sys: DynSystem, delta: float) -> BoxRegion:
    if delta <= 0:
        raise SystemError_("delta must be positive")
    if delta > sys.domain_radius() + 1e-15:
        raise SystemError_(
            f"delta {delta} exceeds domain radius {sys.domain_radius()}")
    return BoxRegion.from_bounds([-delta] * sys.n, [delta] * sys.n)


def bound_Cf(sys: DynSystem, delta: float) -> float:
    """Upper bound on sup over the delta-ball of the Jacobian spectral norm.

    The ball is outer-approximated by the box [-delta, delta]^n; each entry
    is majorized by its interval magnitude and the Frobenius norm of the
    majorant matrix dominates the spectral norm of any realized Jacobian.
    """
    box = _delta_box(sys, delta)
    mags = np.array([[sys.jacobian[i][j].eval_interval(box).magmax
                      for j in range(sys.n)] for i in range(sys.n)])
    return float(np.sqrt(np.sum(mags ** 2)))


def bound_Cg(sys: DynSystem, delta: float) -> float:
    """Upper bound on half the Hessian tensor norm over the delta-ball,
    using the full n^3 Frobenius majorant."""
    box = _delta_box(sys, delta)
    total = 0.0
    for i in range(sys.n):
        for j in range(sys.n):
            for k in range(sys.n):
                total += sys.hessian[i][j][k].eval_interval(box).magmax ** 2
    return 0.5 * float(np.sqrt(total))


def bound_Cf_cached(sys: DynSystem, delta: float) -> float:
    if delta not in sys._cf_cache:
        sys._cf_cache[delta] = bound_Cf(sys, delta)
    return sys._cf_cache[delta]


def bound_Cg_cached(sys: DynSystem, delta: float) -> float:
    if delta not in sys._cg_cache:
        sys._cg_cache[delta] = bound_Cg(sys, delta)
    return sys._cg_cache[delta]


def integrate_rk4(sys: DynSystem, x0, dt: float, t_end: float,
                  converge_tol: float = 1e-6) -> Trajectory:
    """Classical fixed-step RK4. Terminates early when the state leaves the
    domain or its norm drops below ``converge_tol``."""
    if dt <= 0 or t_end < dt:
        raise SystemError_("need dt > 0 and t_end >= dt")
    x = np.asarray(x0, dtype=float).copy()
    steps = int(math.ceil(t_end / dt))
    times = [0.0]
    states = [x.copy()]
    flag = "completed"
    for s in range(1, steps + 1):
        k1 = sys.f_point(x)
        k2 = sys.f_point(x + 0.5 * dt * k1)
        k3 = sys.f_point(x + 0.5 * dt * k2)
        k4 = sys.f_point(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SystemError_("non-finite state encountered during RK4")
        times.append(s * dt)
        states.append(x.copy())
        if not sys.domain.contains(x):
            flag = "left_domain"
            break
        if np.linalg.norm(x) <= converge_tol:
            flag = "converged"
            break
    return Trajectory(np.array(times), np.array(states), flag)
