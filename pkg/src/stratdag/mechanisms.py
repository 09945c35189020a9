"""Scoring mechanisms ``f(x; theta)``: the objects a principal deploys, which
agents best-respond to and which are scored for risk/improvement.

Mechanisms never read the outcome: linear weight vectors carry an explicit
zero at the y coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class MechanismError(ValueError):
    pass


@dataclass(frozen=True)
class LinearMechanism:
    """``f(x) = w . x`` with ``w[y] = 0``."""

    w: tuple[float, ...]

    def __post_init__(self):
        if self.w[-1] != 0.0:
            raise MechanismError("mechanisms read features only: w[y] must be 0")

    @classmethod
    def from_features(cls, w_features) -> "LinearMechanism":
        return cls(tuple(float(v) for v in w_features) + (0.0,))

    @property
    def n(self) -> int:
        return len(self.w) - 1

    def weights(self) -> np.ndarray:
        return np.array(self.w, dtype=float)

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights()

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.broadcast_to(self.weights(), X.shape).copy()

    def describe(self) -> dict:
        return {"kind": "linear", "w": list(self.w)}


@dataclass(frozen=True)
class IsolationMechanism:
    """``f(x) = x_target - ghat(x_P)`` for a fitted model ``ghat``; with the
    true structural function this incentivizes an intervention on the target
    node alone. ``model=None`` stands for ``ghat = 0``."""

    target: int
    model: object | None = None
    n_nodes: int = 0

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        s = X[:, self.target].copy()
        if self.model is not None:
            s -= self.model.predict(X)
        return s

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        g = np.zeros_like(X)
        g[:, self.target] = 1.0
        if self.model is not None:
            g -= self.model.grad(X)
        return g

    def describe(self) -> dict:
        d = {"kind": "isolation", "target": self.target}
        if self.model is not None:
            d["model"] = self.model.describe()
        return d


@dataclass(frozen=True)
class CustomMechanism:
    """Arbitrary differentiable scalar mechanism given as vectorized callables
    ``fn(X) -> (m,)`` and ``grad_fn(X) -> (m, n+1)``."""

    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(X)), dtype=float)

    def grad(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.grad_fn(np.atleast_2d(X)), dtype=float)

    def describe(self) -> dict:
        return {"kind": self.label}


Mechanism = LinearMechanism | IsolationMechanism | CustomMechanism


def unit_mechanism(i: int, n: int, sign: float = 1.0) -> LinearMechanism:
    """``f = +-x_i``, the per-node incentivization probe."""
    w = np.zeros(n + 1)
    w[i] = sign
    return LinearMechanism(tuple(w))


def as_linear_weights(mech: Mechanism, n: int) -> np.ndarray | None:
    """Collapse a mechanism to a weight vector when it is linear in ``x``
    (constants dropped: they never change a best response). Returns ``None``
    for genuinely non-linear mechanisms."""
    if isinstance(mech, LinearMechanism):
        return mech.weights()
    if isinstance(mech, IsolationMechanism):
        w = np.zeros(n + 1)
        w[mech.target] = 1.0
        model = mech.model
        if model is None:
            return w
        if getattr(model, "family", None) == "linear":
            for node, cs in zip(model.regressors, model.coeffs):
                w[node] -= cs[0]
            return w
        return None
    return None
