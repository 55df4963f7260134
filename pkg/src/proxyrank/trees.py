"""Weighted regression trees, bagged forests, and least-squares boosting.

Instance weights enter the split criterion as frequency weights (weighted
variance reduction) and leaves predict weighted means, so rescaling all
weights by a constant leaves every fitted tree unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import derive_seed, substream

_MIN_GAIN = 1e-12


@dataclass
class _Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {"value": self.value, "feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "_Node":
        node = cls(value=d["value"])
        if "feature" in d:
            node.feature = d["feature"]
            node.threshold = d["threshold"]
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


def _best_split(F: np.ndarray, y: np.ndarray, w: np.ndarray, rows: np.ndarray,
                features: np.ndarray, min_leaf: int):
    """Split with the largest weighted-SSE reduction, or None."""
    best = None
    yw = y[rows] * w[rows]
    sw = float(w[rows].sum())
    swy = float(yw.sum())
    swyy = float((yw * y[rows]).sum())
    parent_sse = swyy - swy * swy / sw
    for j in features:
        xv = F[rows, j]
        order = np.argsort(xv, kind="mergesort")
        xs = xv[order]
        ws = w[rows][order]
        ys = y[rows][order]
        cw = np.cumsum(ws)
        cwy = np.cumsum(ws * ys)
        cwyy = np.cumsum(ws * ys * ys)
        m = len(rows)
        # candidate cut after position i (left = [:i+1]); values must differ
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        valid = valid[(valid + 1 >= min_leaf) & (m - valid - 1 >= min_leaf)]
        if valid.size == 0:
            continue
        lw, lwy, lwyy = cw[valid], cwy[valid], cwyy[valid]
        rw, rwy, rwyy = sw - lw, swy - lwy, swyy - lwyy
        sse = (lwyy - lwy * lwy / lw) + (rwyy - rwy * rwy / rw)
        i = int(np.argmin(sse))
        gain = parent_sse - float(sse[i])
        if gain > _MIN_GAIN and (best is None or gain > best[0]):
            cut = valid[i]
            thr = 0.5 * (xs[cut] + xs[cut + 1])
            best = (gain, int(j), float(thr))
    return best


@dataclass
class RegressionTree:
    """CART regression tree with frequency-weighted splits and leaf means."""

    max_depth: int | None = 8
    min_samples_leaf: int = 5
    max_features: int | None = None  # per-split subsample; None = all
    seed: int = 0
    root: _Node | None = None

    def fit(self, F: np.ndarray, y: np.ndarray, w: np.ndarray) -> "RegressionTree":
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        rng = substream(self.seed, "tree-features")
        k = F.shape[1]
        mtry = k if self.max_features is None else min(self.max_features, k)

        def build(rows: np.ndarray, depth: int) -> _Node:
            value = float(np.average(y[rows], weights=w[rows]))
            node = _Node(value=value)
            if (self.max_depth is not None and depth >= self.max_depth) \
                    or len(rows) < 2 * self.min_samples_leaf:
                return node
            feats = np.arange(k) if mtry == k else np.sort(rng.choice(k, mtry, replace=False))
            best = _best_split(F, y, w, rows, feats, self.min_samples_leaf)
            if best is None:
                return node
            _, j, thr = best
            mask = F[rows, j] <= thr
            node.feature, node.threshold = j, thr
            node.left = build(rows[mask], depth + 1)
            node.right = build(rows[~mask], depth + 1)
            return node

        self.root = build(np.arange(len(y)), 0)
        return self

    def predict(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        out = np.empty(len(F))

        def walk(node: _Node, rows: np.ndarray) -> None:
            if node.is_leaf:
                out[rows] = node.value
                return
            mask = F[rows, node.feature] <= node.threshold
            walk(node.left, rows[mask])
            walk(node.right, rows[~mask])

        walk(self.root, np.arange(len(F)))
        return out

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "max_features": self.max_features, "seed": self.seed,
                "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        tree = cls(max_depth=d["max_depth"], min_samples_leaf=d["min_samples_leaf"],
                   max_features=d["max_features"], seed=d["seed"])
        tree.root = _Node.from_dict(d["root"])
        return tree


@dataclass
class RandomForest:
    """Bagging over weighted regression trees with per-split feature subsampling."""

    n_trees: int = 100
    min_samples_leaf: int = 20
    max_depth: int | None = None
    seed: int = 0
    trees: list[RegressionTree] = field(default_factory=list)

    def fit(self, F: np.ndarray, y: np.ndarray, w: np.ndarray) -> "RandomForest":
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        n, k = F.shape
        mtry = max(1, int(np.sqrt(k)))
        self.trees = []
        for b in range(self.n_trees):
            rows = substream(self.seed, "bag", b).integers(0, n, size=n)
            tree = RegressionTree(max_depth=self.max_depth,
                                  min_samples_leaf=self.min_samples_leaf,
                                  max_features=mtry, seed=derive_seed(self.seed, "rf", b))
            tree.fit(F[rows], y[rows], w[rows])
            self.trees.append(tree)
        return self

    def predict(self, F: np.ndarray) -> np.ndarray:
        preds = np.zeros(len(F))
        for tree in self.trees:
            preds += tree.predict(F)
        return preds / len(self.trees)

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "min_samples_leaf": self.min_samples_leaf,
                "max_depth": self.max_depth, "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        forest = cls(n_trees=d["n_trees"], min_samples_leaf=d["min_samples_leaf"],
                     max_depth=d["max_depth"], seed=d["seed"])
        forest.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return forest


@dataclass
class GradientBoostedTrees:
    """Least-squares gradient boosting: shallow trees fit to residuals.

    With squared loss and weighted-mean leaves, the weighted training loss is
    non-increasing in every round for any shrinkage in (0, 2).
    """

    n_rounds: int = 100
    max_depth: int = 4
    shrinkage: float = 0.1
    min_samples_leaf: int = 5
    seed: int = 0
    base_value: float = 0.0
    trees: list[RegressionTree] = field(default_factory=list)
    train_losses: list[float] = field(default_factory=list)

    def fit(self, F: np.ndarray, y: np.ndarray, w: np.ndarray) -> "GradientBoostedTrees":
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        self.base_value = float(np.average(y, weights=w))
        current = np.full(len(y), self.base_value)
        self.trees = []
        self.train_losses = [float(np.average((y - current) ** 2, weights=w))]
        for r in range(self.n_rounds):
            residual = y - current
            tree = RegressionTree(max_depth=self.max_depth,
                                  min_samples_leaf=self.min_samples_leaf,
                                  seed=derive_seed(self.seed, "gbt", r))
            tree.fit(F, residual, w)
            current = current + self.shrinkage * tree.predict(F)
            self.trees.append(tree)
            self.train_losses.append(float(np.average((y - current) ** 2, weights=w)))
        return self

    def predict(self, F: np.ndarray) -> np.ndarray:
        preds = np.full(len(F), self.base_value)
        for tree in self.trees:
            preds += self.shrinkage * tree.predict(F)
        return preds

    def to_dict(self) -> dict:
        return {"n_rounds": self.n_rounds, "max_depth": self.max_depth,
                "shrinkage": self.shrinkage, "min_samples_leaf": self.min_samples_leaf,
                "seed": self.seed, "base_value": self.base_value,
                "train_losses": self.train_losses,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostedTrees":
        gbt = cls(n_rounds=d["n_rounds"], max_depth=d["max_depth"],
                  shrinkage=d["shrinkage"], min_samples_leaf=d["min_samples_leaf"],
                  seed=d["seed"])
        gbt.base_value = d["base_value"]
        gbt.train_losses = list(d["train_losses"])
        gbt.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return gbt
