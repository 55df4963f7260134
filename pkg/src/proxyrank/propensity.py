"""Treatment model: logistic propensity scores, trimming, stabilized weights,
and covariate-balance diagnostics.

The fit maximizes the L2-penalized mean Bernoulli log-likelihood by
full-batch gradient ascent with a backtracking step size. Deterministic,
no stochastic elements.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset


class FitError(ValueError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class PropensityFit:
    """Fitted treatment model and its per-unit scores.

    ``coefficients``/``intercept`` are on the original covariate scale.
    ``marginal`` is the empirical treated fraction of the fitted data (it is
    re-derived after trimming). ``trim_bounds`` records absolute score
    thresholds once :func:`trim_extremes` has been applied, which is what
    makes a second trim at the same quantiles a no-op.
    """

    coefficients: np.ndarray
    intercept: float
    scores: np.ndarray
    marginal: float
    converged: bool
    n_iter: int
    grad_norm: float
    trim_bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        s = np.asarray(self.scores, dtype=np.float64)
        if s.size and (s.min() <= 0.0 or s.max() >= 1.0):
            raise FitError("propensity scores must lie strictly inside (0, 1)")
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=np.float64))
        object.__setattr__(self, "scores", s)


def fit_propensity(d: Dataset, l2: float = 0.0, tol: float = 1e-6,
                   max_iter: int = 500) -> PropensityFit:
    """Fit P(A=1 | X) by penalized maximum likelihood.

    Covariates are standardized internally before optimization; reported
    coefficients are mapped back to the original scale. The objective is the
    mean log-likelihood minus ``0.5 * l2 * ||w||^2`` (intercept unpenalized).
    Ascent stops when the gradient max-norm drops below ``tol``; hitting
    ``max_iter`` first is reported via ``converged=False``, not an error.
    """
    if l2 < 0:
        raise FitError("l2 must be >= 0")
    a = d.treatment.astype(np.float64)
    if a.min() == a.max():
        raise FitError("no variation in treatment: both arms are required")
    X = d.covariates
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    Xs = (X - mu) / sd
    n, k = Xs.shape
    D = np.hstack([np.ones((n, 1)), Xs])

    def objective(w: np.ndarray) -> float:
        eta = D @ w
        return float(np.mean(a * eta - np.logaddexp(0.0, eta))
                     - 0.5 * l2 * float(w[1:] @ w[1:]))

    def gradient(w: np.ndarray) -> np.ndarray:
        g = D.T @ (a - _sigmoid(D @ w)) / n
        g[1:] -= l2 * w[1:]
        return g

    w = np.zeros(k + 1)
    step = 1.0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        g = gradient(w)
        if float(np.max(np.abs(g))) < tol:
            n_iter -= 1
            break
        f0 = objective(w)
        gsq = float(g @ g)
        t = step
        while t > 1e-14 and objective(w + t * g) < f0 + 0.5 * t * gsq:
            t *= 0.5
        w = w + t * g
        step = min(t * 2.0, 1e6)
    grad_norm = float(np.max(np.abs(gradient(w))))

    # |eta| capped at 30 keeps scores strictly inside (0, 1) even when the
    # data are separable and the unpenalized optimum diverges
    scores = _sigmoid(np.clip(D @ w, -30.0, 30.0))
    coef = w[1:] / sd
    intercept = float(w[0] - np.sum(w[1:] * mu / sd))
    return PropensityFit(coefficients=coef, intercept=intercept, scores=scores,
                         marginal=float(a.mean()), converged=grad_norm < tol,
                         n_iter=n_iter, grad_norm=grad_norm)


def predict_scores(fit: PropensityFit, d: Dataset) -> np.ndarray:
    eta = fit.intercept + d.covariates @ fit.coefficients
    return _sigmoid(np.clip(eta, -30.0, 30.0))


def trim_extremes(fit: PropensityFit, d: Dataset, lo_q: float = 0.01,
                  hi_q: float = 0.99) -> tuple[Dataset, PropensityFit]:
    """Drop units with scores strictly outside the [lo_q, hi_q] score quantiles.

    The absolute thresholds are recorded on the returned fit; re-trimming at
    the same quantiles reuses them and removes nothing further (idempotence).
    The returned fit re-indexes scores and recomputes the marginal treated
    fraction on the retained rows.
    """
    if not 0.0 <= lo_q < hi_q <= 1.0:
        raise FitError("need 0 <= lo_q < hi_q <= 1")
    if len(fit.scores) != d.n:
        raise FitError(f"fit covers {len(fit.scores)} units, dataset has {d.n}")
    if fit.trim_bounds is not None and fit.trim_bounds[:2] == (lo_q, hi_q):
        t_lo, t_hi = fit.trim_bounds[2], fit.trim_bounds[3]
    else:
        t_lo, t_hi = np.quantile(fit.scores, [lo_q, hi_q])
    keep = (fit.scores >= t_lo) & (fit.scores <= t_hi)
    a_kept = d.treatment[keep]
    if a_kept.size == 0 or a_kept.min() == a_kept.max():
        raise FitError("trimming would remove an entire treatment arm")
    trimmed = d.subset(np.flatnonzero(keep))
    new_fit = replace(fit, scores=fit.scores[keep], marginal=float(a_kept.mean()),
                      trim_bounds=(lo_q, hi_q, float(t_lo), float(t_hi)))
    return trimmed, new_fit


def stabilized_weights(fit: PropensityFit, d: Dataset) -> np.ndarray:
    """Stabilized inverse-propensity weights.

    w_i = a_i * P(a=1) / e(x_i) + (1 - a_i) * (1 - P(a=1)) / (1 - e(x_i)),
    with P(a=1) the empirical treated fraction of the fitted (post-trim)
    data. Scores strictly inside (0, 1) make every weight positive.
    """
    e = fit.scores
    if len(e) != d.n:
        raise FitError(f"fit covers {len(e)} units, dataset has {d.n}")
    if e.size and (e.min() <= 0.0 or e.max() >= 1.0):
        raise FitError("scores at 0 or 1 cannot be weighted")
    a = d.treatment
    p = fit.marginal
    return np.where(a == 1, p / e, (1.0 - p) / (1.0 - e))


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    smd_before: float
    smd_after: float
    degenerate: bool = False


@dataclass(frozen=True)
class BalanceReport:
    """Standardized mean differences per covariate, before and after weighting."""

    rows: tuple[BalanceRow, ...]
    threshold: float = 0.2

    @property
    def flagged(self) -> tuple[str, ...]:
        return tuple(r.covariate for r in self.rows if r.smd_after > self.threshold)

    def mean_before(self) -> float:
        return float(np.mean([r.smd_before for r in self.rows]))

    def mean_after(self) -> float:
        return float(np.mean([r.smd_after for r in self.rows]))


def _smd(x1: np.ndarray, x0: np.ndarray,
         w1: np.ndarray | None, w0: np.ndarray | None) -> tuple[float, bool]:
    if w1 is None:
        m1, m0 = float(x1.mean()), float(x0.mean())
        v1 = float(x1.var(ddof=1)) if len(x1) > 1 else 0.0
        v0 = float(x0.var(ddof=1)) if len(x0) > 1 else 0.0
    else:
        m1 = float(np.average(x1, weights=w1))
        m0 = float(np.average(x0, weights=w0))
        v1 = float(np.average((x1 - m1) ** 2, weights=w1))
        v0 = float(np.average((x0 - m0) ** 2, weights=w0))
    denom = np.sqrt((v1 + v0) / 2.0)
    if denom == 0.0:
        return 0.0, True
    return abs(m1 - m0) / denom, False


def balance_report(d: Dataset, weights: np.ndarray, threshold: float = 0.2) -> BalanceReport:
    """SMD of each covariate between arms, unweighted and IPTW-weighted.

    SMD = |m1 - m0| / sqrt((s1^2 + s0^2) / 2). The weighted pass uses
    weighted means and frequency-weight variances. A covariate with zero
    variance in both arms reports SMD 0 with a degeneracy flag.
    """
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != d.n:
        raise FitError("weights length differs from dataset length")
    if w.size and w.min() <= 0.0:
        raise FitError("weights must be positive")
    t = d.treatment == 1
    rows = []
    for j, name in enumerate(d.covariate_names):
        x = d.covariates[:, j]
        before, degen_b = _smd(x[t], x[~t], None, None)
        after, degen_a = _smd(x[t], x[~t], w[t], w[~t])
        rows.append(BalanceRow(covariate=name, smd_before=before, smd_after=after,
                               degenerate=degen_b and degen_a))
    return BalanceReport(rows=tuple(rows), threshold=threshold)
