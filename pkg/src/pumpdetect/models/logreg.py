"""L2-regularized logistic regression fitted by BFGS with a backtracking line search."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core import PipelineError
from .forest import FORMAT_VERSION, DimensionMismatchError, check_training_data


class NonFiniteLossError(PipelineError, FloatingPointError):
    """The objective became NaN/inf, usually a feature scaling problem."""


@dataclass(frozen=True)
class LRParams:
    C: float = 1.0
    max_iterations: int = 500
    tol: float = 1e-6
    class_weight: str | None = None

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.max_iterations < 1 or not self.tol > 0:
            raise ValueError("max_iterations must be >= 1 and tol > 0")
        if self.class_weight not in (None, "balanced"):
            raise ValueError(f"unknown class_weight {self.class_weight!r}")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> Standardizer:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def loss_and_grad(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, C: float,
                  sample_weight: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Penalized negative log-likelihood and its gradient.

    ``theta = [w..., b]``; the penalty ``|w|^2 / (2C)`` leaves the intercept out.
    """
    w, b = theta[:-1], theta[-1]
    z = Z @ w + b
    sw = np.ones(len(y)) if sample_weight is None else sample_weight
    nll = float(np.sum(sw * (np.logaddexp(0.0, z) - y * z)))
    loss = nll + float(w @ w) / (2.0 * C)
    r = sw * (_sigmoid(z) - y)
    grad = np.empty_like(theta)
    grad[:-1] = Z.T @ r + w / C
    grad[-1] = r.sum()
    return loss, grad


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass
class FitInfo:
    initial_loss: float
    final_loss: float
    n_iterations: int
    grad_norm: float
    converged: bool


def bfgs_minimize(fg, x0: np.ndarray, tol: float, max_iterations: int) -> tuple[np.ndarray, FitInfo]:
    """Minimize a smooth function given ``fg(x) -> (f, grad)``.

    Armijo backtracking line search; the inverse-Hessian update is skipped when
    the curvature condition fails so the approximation stays positive definite.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fg(x)
    if not np.isfinite(f):
        raise NonFiniteLossError("initial loss is not finite")
    f0 = f
    n = len(x)
    H = np.eye(n)
    first = True
    it = 0
    gnorm = float(np.linalg.norm(g))
    while gnorm >= tol and it < max_iterations:
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:  # lost descent; restart from steepest descent
            H = np.eye(n)
            p = -g
            slope = -float(g @ g)
        step = 1.0
        for _ in range(60):
            x_new = x + step * p
            f_new, g_new = fg(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        if not np.isfinite(f_new):
            raise NonFiniteLossError("loss became non-finite")
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            if first:
                H = np.eye(n) * (sy / float(yv @ yv))
                first = False
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
    return x, FitInfo(float(f0), float(f), it, gnorm, gnorm < tol)


@dataclass
class LRModel:
    params: LRParams
    standardizer: Standardizer
    weights: np.ndarray
    intercept: float
    info: FitInfo | None = None
    model_id: str = "lr"

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features, got {X.shape[1]}")
        Z = self.standardizer.transform(X)
        return (Z * self.weights).sum(axis=1) + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def score(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X) >= 0.5

    def to_dict(self) -> dict[str, Any]:
        d = {"format_version": FORMAT_VERSION, "kind": "logistic_regression", "model_id": self.model_id,
             "params": dataclasses.asdict(self.params),
             "standardizer": {"mean": self.standardizer.mean.tolist(),
                              "scale": self.standardizer.scale.tolist()},
             "weights": self.weights.tolist(), "intercept": self.intercept}
        if self.info is not None:
            d["fit"] = dataclasses.asdict(self.info)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LRModel:
        st = Standardizer(np.array(d["standardizer"]["mean"]), np.array(d["standardizer"]["scale"]))
        info = FitInfo(**d["fit"]) if "fit" in d else None
        return cls(LRParams(**d["params"]), st, np.array(d["weights"], dtype=np.float64),
                   float(d["intercept"]), info, d.get("model_id", "lr"))


def train_logreg(X, y, params: LRParams = LRParams()) -> LRModel:
    """Standardize on this training set, then fit weights and intercept by BFGS."""
    X, y = check_training_data(X, y)
    st = Standardizer.fit(X)
    Z = st.transform(X)
    yf = y.astype(np.float64)
    sw = None
    if params.class_weight == "balanced":
        n, n_pos = len(y), yf.sum()
        sw = np.where(y, n / (2 * n_pos), n / (2 * (n - n_pos)))
    theta, info = bfgs_minimize(lambda th: loss_and_grad(th, Z, yf, params.C, sw),
                                np.zeros(X.shape[1] + 1), params.tol, params.max_iterations)
    return LRModel(params, st, theta[:-1].copy(), float(theta[-1]), info)
