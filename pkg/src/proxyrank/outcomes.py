"""Weighted outcome regressors f(x, a) and per-unit effect estimates.

Every family minimizes a weighted empirical loss sum_i w_i * L(y_i, f(x_i, a_i));
with unit weights each fit reduces exactly to the ordinary (non-causal)
regression. The per-unit effect estimate is f(x, 1) - f(x, 0), with both
counterfactual predictions retained.

Families
--------
linear_wls      closed-form weighted least squares
linear_sgd      the same model fit by minibatch stochastic gradient descent
poisson         log-link Poisson regression (IRLS), for non-negative outcomes
svr_linear      linear epsilon-insensitive regression by subgradient descent
tree / forest / boosted_trees
                weighted CART variants consuming (x, a) raw

Linear-type families use a design of [1 | x | a | a*x] by default; without
the interaction block they cannot express heterogeneous effects (their
estimate is the same for every unit). Tree families learn interactions
natively. Note that ``svr_linear`` consumes features on their raw scale, as
SVM implementations conventionally do; standardize covariates first if they
live on wildly different scales.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .rng import substream
from .trees import GradientBoostedTrees, RandomForest, RegressionTree

FAMILIES = ("linear_wls", "linear_sgd", "poisson", "svr_linear",
            "tree", "forest", "boosted_trees")
_TREE_FAMILIES = ("tree", "forest", "boosted_trees")

_LOSS_KIND = {
    "linear_wls": "squared_error",
    "linear_sgd": "squared_error",
    "poisson": "poisson_deviance",
    "svr_linear": "epsilon_insensitive",
    "tree": "squared_error",
    "forest": "squared_error",
    "boosted_trees": "squared_error",
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """How (x, a) is encoded for the linear-type families.

    ``include_treatment`` appends the treatment column; ``interactions``
    additionally appends the full a*x block. Tree families receive [x | a]
    raw (or [x] when the treatment column is excluded).
    """

    include_treatment: bool = True
    interactions: bool = True

    def __post_init__(self) -> None:
        if self.interactions and not self.include_treatment:
            raise ModelError("interaction features require the treatment column")

    def design(self, X: np.ndarray, a: np.ndarray) -> np.ndarray:
        cols = [np.ones((len(a), 1)), X]
        if self.include_treatment:
            cols.append(a.reshape(-1, 1).astype(np.float64))
        if self.interactions:
            cols.append(a.reshape(-1, 1) * X)
        return np.hstack(cols)

    def tree_design(self, X: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.include_treatment:
            return np.hstack([X, a.reshape(-1, 1).astype(np.float64)])
        return np.asarray(X, dtype=np.float64)


@dataclass
class OutcomeModel:
    """A fitted regressor supporting counterfactual prediction for both arms."""

    family: str
    feature_map: FeatureMap
    n_features: int
    params: dict
    loss_kind: str
    final_loss: float
    n_iter: int
    _predictor: object = field(default=None, repr=False)

    @property
    def heterogeneous(self) -> bool:
        """Whether the model can express unit-varying effects."""
        return (self.family in _TREE_FAMILIES and self.feature_map.include_treatment) \
            or self.feature_map.interactions

    def predict(self, X: np.ndarray, a: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        a = np.asarray(a)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} covariates, got "
                             f"{X.shape[1] if X.ndim == 2 else 'non-matrix'}")
        if self.family in _TREE_FAMILIES:
            return self._predictor.predict(self.feature_map.tree_design(X, a))
        D = self.feature_map.design(X, a)
        if self.family == "linear_wls":
            return D @ np.asarray(self.params["coefficients"])
        if self.family == "linear_sgd":
            mu = np.asarray(self.params["design_mean"])
            sd = np.asarray(self.params["design_scale"])
            theta = np.asarray(self.params["theta"])
            return ((D - mu) / sd) @ theta * self.params["y_scale"] + self.params["y_mean"]
        if self.family == "poisson":
            eta = D @ np.asarray(self.params["coefficients"])
            return np.exp(np.clip(eta, -30.0, 30.0))
        if self.family == "svr_linear":
            theta = np.asarray(self.params["theta"])
            return D @ theta * self.params["y_scale"] + self.params["y_mean"]
        raise ModelError(f"unknown family {self.family!r}")

    def to_dict(self) -> dict:
        out = {"family": self.family, "feature_map": asdict(self.feature_map),
               "n_features": self.n_features, "loss_kind": self.loss_kind,
               "final_loss": self.final_loss, "n_iter": self.n_iter}
        if self.family in _TREE_FAMILIES:
            out["params"] = self._predictor.to_dict()
        else:
            out["params"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                             for k, v in self.params.items()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeModel":
        fm = FeatureMap(**d["feature_map"])
        model = cls(family=d["family"], feature_map=fm, n_features=d["n_features"],
                    params=d["params"], loss_kind=d["loss_kind"],
                    final_loss=d["final_loss"], n_iter=d["n_iter"])
        if d["family"] == "tree":
            model._predictor = RegressionTree.from_dict(d["params"])
        elif d["family"] == "forest":
            model._predictor = RandomForest.from_dict(d["params"])
        elif d["family"] == "boosted_trees":
            model._predictor = GradientBoostedTrees.from_dict(d["params"])
        return model


def save_model(model: OutcomeModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | Path) -> OutcomeModel:
    return OutcomeModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fit_linear_wls(D, y, w, l2=0.0):
    if l2 < 0:
        raise ModelError("l2 must be >= 0")
    sq = np.sqrt(w)
    if l2 == 0.0:
        coef, *_ = np.linalg.lstsq(D * sq[:, None], y * sq, rcond=None)
    else:
        A = D.T @ (D * w[:, None])
        pen = np.full(D.shape[1], l2)
        pen[0] = 0.0  # intercept unpenalized
        coef = np.linalg.solve(A + np.diag(pen), D.T @ (w * y))
    resid = y - D @ coef
    return coef, float(np.sum(w * resid ** 2))


def _fit_linear_sgd(D, y, w, lr0=0.1, decay=200.0, epochs=80, batch_size=64, seed=0):
    """Minibatch SGD on the standardized design with tail-iterate averaging."""
    mu = D.mean(axis=0)
    sd = D.std(axis=0)
    sd[sd == 0.0] = 1.0
    mu[0], sd[0] = 0.0, 1.0  # keep the intercept column as-is
    Ds = (D - mu) / sd
    y_mean, y_scale = float(y.mean()), float(y.std()) or 1.0
    yn = (y - y_mean) / y_scale
    wn = w / w.mean()
    n, p = Ds.shape
    theta = np.zeros(p)
    rng = substream(seed, "linear-sgd")
    t = 0
    n_batches = max(1, -(-n // batch_size))
    total = epochs * n_batches
    tail_from = total - max(1, total // 4)
    theta_sum = np.zeros(p)
    n_avg = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            b = order[s:s + batch_size]
            t += 1
            lr = lr0 / (1.0 + t / decay)
            resid = yn[b] - Ds[b] @ theta
            grad = -(Ds[b] * (wn[b] * resid)[:, None]).mean(axis=0)
            theta = theta - lr * grad
            if t > tail_from:
                theta_sum += theta
                n_avg += 1
    theta = theta_sum / n_avg if n_avg else theta
    resid = y - (Ds @ theta * y_scale + y_mean)
    params = {"theta": theta, "design_mean": mu, "design_scale": sd,
              "y_mean": y_mean, "y_scale": y_scale}
    return params, float(np.sum(w * resid ** 2)), t


def _poisson_deviance(y, mu, w):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(w * (term - (y - mu))))


def _fit_poisson(D, y, w, tol=1e-8, max_iter=100):
    if (y < 0).any():
        raise ModelError("poisson family requires non-negative outcomes")
    n, p = D.shape
    coef = np.zeros(p)
    coef[0] = np.log(max(np.average(y, weights=w), 1e-8))
    dev = _poisson_deviance(y, np.exp(np.clip(D @ coef, -30, 30)), w)
    it = 0
    for it in range(1, max_iter + 1):
        eta = np.clip(D @ coef, -30.0, 30.0)
        mu = np.exp(eta)
        grad = D.T @ (w * (y - mu))
        if np.max(np.abs(grad)) < tol * max(1.0, abs(dev)):
            it -= 1
            break
        H = D.T @ (D * (w * mu)[:, None]) + 1e-10 * np.eye(p)
        step = np.linalg.solve(H, grad)
        # step halving keeps the deviance non-increasing
        scale = 1.0
        while scale > 1e-8:
            trial = coef + scale * step
            new_dev = _poisson_deviance(y, np.exp(np.clip(D @ trial, -30, 30)), w)
            if new_dev <= dev + 1e-12:
                coef, dev = trial, new_dev
                break
            scale *= 0.5
        else:
            break
    return coef, dev, it


def _fit_svr(D, y, w, epsilon=0.1, C=1.0, lr0=0.1, epochs=30, batch_size=64,
             grad_clip=1.0, seed=0):
    """Primal epsilon-insensitive subgradient descent (last iterate).

    The outcome is standardized internally so the default step sizes are
    scale-free in y; the design is consumed raw.
    """
    if C <= 0 or epsilon < 0:
        raise ModelError("svr_linear requires C > 0 and epsilon >= 0")
    y_mean, y_scale = float(y.mean()), float(y.std()) or 1.0
    yn = (y - y_mean) / y_scale
    wn = w / w.mean()
    n, p = D.shape
    lam = 1.0 / (C * n)
    theta = np.zeros(p)
    rng = substream(seed, "svr")
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            b = order[s:s + batch_size]
            t += 1
            lr = lr0 / np.sqrt(t)
            resid = yn[b] - D[b] @ theta
            outside = np.abs(resid) > epsilon
            grad = lam * theta.copy()
            grad[0] -= lam * theta[0]  # intercept unpenalized
            if outside.any():
                grad -= (D[b][outside] *
                         (wn[b][outside] * np.sign(resid[outside]))[:, None]).sum(axis=0) / len(b)
            if grad_clip is not None:
                norm = float(np.linalg.norm(grad))
                if norm > grad_clip:
                    grad *= grad_clip / norm
            theta = theta - lr * grad
    resid = yn - D @ theta
    loss = float(np.sum(w * np.maximum(np.abs(resid) - epsilon, 0.0)))
    params = {"theta": theta, "y_mean": y_mean, "y_scale": y_scale,
              "epsilon": epsilon, "C": C}
    return params, loss, t


def fit_outcome_model(d: Dataset, weights: np.ndarray | None = None,
                      family: str = "linear_wls",
                      feature_map: FeatureMap | None = None,
                      **hyperparams) -> OutcomeModel:
    """Fit a weighted outcome regressor of the requested family.

    ``weights=None`` or all-ones gives exactly the ordinary regression fit.
    Weights must be positive; rescaling them all by a constant does not
    change the fitted model.
    """
    if family not in FAMILIES:
        raise ModelError(f"unknown family {family!r}; choose from {FAMILIES}")
    fm = feature_map or FeatureMap()
    X, a, y = d.covariates, d.treatment, d.outcome
    w = np.ones(d.n) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(w) != d.n:
        raise ModelError("weights length differs from dataset length")
    if d.n == 0:
        raise ModelError("cannot fit on an empty dataset")
    if w.min() <= 0.0:
        raise ModelError("weights must be positive")

    if family in _TREE_FAMILIES:
        F = fm.tree_design(X, a)
        if family == "tree":
            predictor = RegressionTree(**hyperparams).fit(F, y, w)
            n_iter = 1
        elif family == "forest":
            predictor = RandomForest(**hyperparams).fit(F, y, w)
            n_iter = predictor.n_trees
        else:
            predictor = GradientBoostedTrees(**hyperparams).fit(F, y, w)
            n_iter = predictor.n_rounds
        resid = y - predictor.predict(F)
        model = OutcomeModel(family=family, feature_map=fm, n_features=d.k,
                             params={}, loss_kind=_LOSS_KIND[family],
                             final_loss=float(np.sum(w * resid ** 2)), n_iter=n_iter)
        model._predictor = predictor
        return model

    D = fm.design(X, a)
    if family == "linear_wls":
        coef, loss = _fit_linear_wls(D, y, w, **hyperparams)
        params, n_iter = {"coefficients": coef}, 1
    elif family == "linear_sgd":
        params, loss, n_iter = _fit_linear_sgd(D, y, w, **hyperparams)
    elif family == "poisson":
        coef, loss, n_iter = _fit_poisson(D, y, w, **hyperparams)
        params = {"coefficients": coef}
    else:
        params, loss, n_iter = _fit_svr(D, y, w, **hyperparams)
    return OutcomeModel(family=family, feature_map=fm, n_features=d.k,
                        params=params, loss_kind=_LOSS_KIND[family],
                        final_loss=loss, n_iter=n_iter)


@dataclass(frozen=True)
class ITETable:
    """Per-unit effect estimates with both counterfactual predictions."""

    index: np.ndarray
    ite: np.ndarray
    y_hat_1: np.ndarray
    y_hat_0: np.ndarray


def compute_ite(model: OutcomeModel, d: Dataset) -> ITETable:
    """Per-unit f(x, 1) - f(x, 0) for every row of ``d``."""
    if d.k != model.n_features:
        raise ModelError(f"model expects {model.n_features} covariates, dataset has {d.k}")
    ones = np.ones(d.n, dtype=np.int64)
    y1 = model.predict(d.covariates, ones)
    y0 = model.predict(d.covariates, np.zeros(d.n, dtype=np.int64))
    return ITETable(index=np.arange(d.n), ite=y1 - y0, y_hat_1=y1, y_hat_0=y0)
