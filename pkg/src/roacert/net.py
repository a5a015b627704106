"""One-hidden-layer tanh network: forward pass, input gradient, and
hand-rolled parameter gradients (no autodiff framework).

The output is scalar and there is no output bias: the downstream Lyapunov
candidate only ever uses differences phi(x) - phi(0), which cancel any
constant offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NetParams:
    W1: np.ndarray  # (h, n)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (1, h)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float).reshape(-1)
        self.W2 = np.asarray(self.W2, dtype=float).reshape(1, -1)
        h, n = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (1, h):
            raise ValueError("inconsistent parameter shapes")
        if not (np.all(np.isfinite(self.W1)) and np.all(np.isfinite(self.b1))
                and np.all(np.isfinite(self.W2))):
            raise ValueError("parameters must be finite")

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def w2(self) -> np.ndarray:
        return self.W2.ravel()

    def copy(self) -> "NetParams":
        return NetParams(self.W1.copy(), self.b1.copy(), self.W2.copy())


@dataclass
class NetGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray

    @staticmethod
    def zeros(p: NetParams) -> "NetGrads":
        return NetGrads(np.zeros_like(p.W1), np.zeros_like(p.b1),
                        np.zeros_like(p.W2))


def init_params(n: int, h: int, seed: int) -> NetParams:
    """Uniform fan-in initialization, zero hidden bias.

    The scale keeps tanh near its linear regime initially, so the
    linearization diagonal D = diag(1 - tanh^2(b1)) starts at the identity.
    """
    if h < 1:
        raise ValueError("hidden width must be >= 1")
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-1.0, 1.0, size=(h, n)) / np.sqrt(n)
    W2 = rng.uniform(-1.0, 1.0, size=(1, h)) / np.sqrt(h)
    b1 = np.zeros(h)
    return NetParams(W1, b1, W2)


def zero_params(n: int, h: int = 1) -> NetParams:
    """All-zero network; the Lyapunov candidate degenerates to its
    quadratic part."""
    return NetParams(np.zeros((h, n)), np.zeros(h), np.zeros((1, h)))


def forward(p: NetParams, x) -> float:
    x = np.asarray(x, dtype=float)
    z = np.tanh(p.W1 @ x + p.b1)
    return float(p.w2 @ z)


def forward_batch(p: NetParams, X: np.ndarray) -> np.ndarray:
    Z = np.tanh(X @ p.W1.T + p.b1)
    return Z @ p.w2


def grad_input(p: NetParams, x) -> np.ndarray:
    """Exact d phi / d x = W2 diag(1 - tanh^2(W1 x + b1)) W1."""
    x = np.asarray(x, dtype=float)
    z = np.tanh(p.W1 @ x + p.b1)
    return p.W1.T @ (p.w2 * (1.0 - z * z))


def backprop_params(p: NetParams, x, upstream: float,
                    v=None, upstream_v: float = 0.0) -> NetGrads:
    """Parameter gradients of  upstream * phi(x) + upstream_v * (grad phi . v).

    The second path (directional derivative of the input gradient) is what
    lets a loss containing Vdot backpropagate into the network.
    """
    x = np.asarray(x, dtype=float)
    w2 = p.w2
    a = p.W1 @ x + p.b1
    z = np.tanh(a)
    dz = 1.0 - z * z

    gW1 = upstream * np.outer(w2 * dz, x)
    gb1 = upstream * (w2 * dz)
    gw2 = upstream * z

    if v is not None and upstream_v != 0.0:
        v = np.asarray(v, dtype=float)
        t = p.W1 @ v
        ddz = -2.0 * z * dz  # derivative of dz wrt pre-activation
        gw2 = gw2 + upstream_v * (dz * t)
        gb1 = gb1 + upstream_v * (w2 * t * ddz)
        gW1 = gW1 + upstream_v * (np.outer(w2 * dz, v)
                                  + np.outer(w2 * ddz * t, x))
    return NetGrads(gW1, gb1, gw2.reshape(1, -1))
