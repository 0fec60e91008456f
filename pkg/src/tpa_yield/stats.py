"""Univariate significance screening and logistic-regression feature ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateInput, InvalidArgument, NonConvergence
from .schema import AMBIENT_PRESSURE_ATM, Dataset


def pearson_pvalue(x, y) -> tuple[float, float]:
    """Sample correlation and its two-sided p-value (Student t, n - 2 dof)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if y.shape[0] != n:
        raise DegenerateInput(f"length mismatch: {n} vs {y.shape[0]}")
    if n < 3:
        raise DegenerateInput(f"need at least 3 points, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("constant input vector")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    one_minus = 1.0 - r * r
    if one_minus <= 0.0:
        return r, 0.0
    t2 = r * r * df / one_minus
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    p = float(special.betainc(0.5 * df, 0.5, df / (df + t2)))
    return r, min(1.0, max(0.0, p))


def midranks(values) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.shape[0], dtype=float)
    start = 0
    n = sv.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and sv[stop] == sv[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
        start = stop
    return ranks


def kruskal_wallis_pvalue(groups) -> tuple[float, float]:
    """Tie-corrected Kruskal-Wallis H and its chi-square p-value."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2:
        raise InvalidArgument("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise InvalidArgument("every group must be nonempty")
    pooled = np.concatenate(groups)
    N = pooled.size
    if N < 3:
        raise InvalidArgument(f"need at least 3 observations, got {N}")
    ranks = midranks(pooled)
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    correction = 1.0 - tie_term / (N ** 3 - N)
    if correction <= 0.0:
        return 0.0, 1.0
    h = 0.0
    pos = 0
    for g in groups:
        rsum = ranks[pos:pos + g.size].sum()
        h += rsum * rsum / g.size
        pos += g.size
    h = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    h = max(h, 0.0) / correction
    p = float(special.gammaincc(0.5 * (len(groups) - 1), 0.5 * h))
    return h, min(1.0, max(0.0, p))


@dataclass
class SignificanceRow:
    feature: str
    test: str
    statistic: float | None
    p_value: float | None
    significant: bool
    note: str = ""


@dataclass
class SignificanceTable:
    alpha: float
    rows: list[SignificanceRow]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "rows": [vars(r).copy() for r in self.rows]}

    def to_text(self) -> str:
        """Rows ordered by ascending p-value, like a printed screening table."""
        ordered = sorted(self.rows, key=lambda r: (math.inf if r.p_value is None else r.p_value))
        width = max(len(r.feature) for r in self.rows)
        lines = [f"{'feature':<{width}}  {'test':<15}  {'statistic':>12}  {'p-value':>10}  sig"]
        for r in ordered:
            stat = "-" if r.statistic is None else f"{r.statistic:12.4f}"
            if r.p_value is None:
                pv = "-"
            elif r.p_value < 0.001:
                pv = "< 0.001"
            else:
                pv = f"{r.p_value:.3f}"
            flag = "yes" if r.significant else "no"
            line = f"{r.feature:<{width}}  {r.test:<15}  {stat:>12}  {pv:>10}  {flag}"
            if r.note:
                line += f"  ({r.note})"
            lines.append(line)
        return "\n".join(lines)


def significance_table(dataset: Dataset, alpha: float = 0.05) -> SignificanceTable:
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must be in (0, 1), got {alpha}")
    y = dataset.target()
    rows = []
    for j, spec in enumerate(dataset.schema):
        values = [r.inputs[j] for r in dataset.records]
        try:
            if spec.is_categorical:
                test = "kruskal-wallis"
                labels = list(dict.fromkeys(values))
                groups = [y[[i for i, v in enumerate(values) if v == lab]] for lab in labels]
                if len(groups) < 2:
                    raise DegenerateInput("single category present")
                stat, p = kruskal_wallis_pvalue(groups)
            else:
                test = "pearson"
                x = np.array([AMBIENT_PRESSURE_ATM if v is None else v for v in values], dtype=float)
                stat, p = pearson_pvalue(x, y)
            rows.append(SignificanceRow(spec.name, test, stat, p, p < alpha))
        except (DegenerateInput, InvalidArgument) as exc:
            rows.append(SignificanceRow(spec.name, test, None, None, False, note=str(exc)))
    return SignificanceTable(alpha, rows)


# ---------------------------------------------------------------------------
# logistic ranking

SEPARATION_LIMIT = 1e4
RIDGE_FALLBACK = 1e-6
GRAD_TOL = 1e-8


@dataclass
class FeatureRanking:
    features: list[str]
    coefficients: list[float]
    ranks: list[int]
    threshold: float
    ridge: float = 0.0
    separation_detected: bool = False
    iterations: int = 0

    def ordered(self) -> list[tuple[str, float, int]]:
        triples = [(f, abs(c), r) for f, c, r in zip(self.features, self.coefficients, self.ranks)]
        return sorted(triples, key=lambda t: t[2])

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "ridge": self.ridge,
            "separation_detected": self.separation_detected,
            "iterations": self.iterations,
            "ranking": [{"feature": f, "abs_coefficient": a, "rank": r} for f, a, r in self.ordered()],
        }

    def to_text(self) -> str:
        width = max(len(f) for f in self.features)
        lines = [f"{'rank':>4}  {'feature':<{width}}  |coefficient|"]
        for f, a, r in self.ordered():
            lines.append(f"{r:>4}  {f:<{width}}  {a:.6g}")
        return "\n".join(lines)


def _neg_loglik(beta, A, t, ridge):
    z = A @ beta
    # mean of log(1 + e^z) - t z
    val = np.mean(np.logaddexp(0.0, z) - t * z)
    return float(val + 0.5 * ridge * beta[1:] @ beta[1:])


def _newton(A, t, ridge, max_iter):
    """Damped Newton on the mean negative log-likelihood; intercept unpenalized."""
    n, p = A.shape
    beta = np.zeros(p)
    penalty = np.full(p, ridge)
    penalty[0] = 0.0
    f = _neg_loglik(beta, A, t, ridge)
    for it in range(1, max_iter + 1):
        prob = special.expit(A @ beta)
        grad = A.T @ (prob - t) / n + penalty * beta
        if np.max(np.abs(grad)) < GRAD_TOL:
            return beta, it - 1, True
        H = (A * (prob * (1.0 - prob))[:, None]).T @ A / n + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            return beta, it, None
        if not np.all(np.isfinite(step)) or (ridge == 0.0 and np.linalg.cond(H) > 1e14):
            return beta, it, None
        slope = float(grad @ step)
        alpha = 1.0
        while True:
            cand = beta - alpha * step
            fc = _neg_loglik(cand, A, t, ridge)
            if fc <= f - 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        beta, f = cand, fc
        if ridge == 0.0 and np.max(np.abs(beta)) > SEPARATION_LIMIT:
            return beta, it, None
    prob = special.expit(A @ beta)
    grad = A.T @ (prob - t) / n + penalty * beta
    return beta, max_iter, bool(np.max(np.abs(grad)) < GRAD_TOL)


def rank_features_logistic(X, y, max_iter: int = 100, feature_names=None) -> FeatureRanking:
    """Rank standardized features by |coefficient| of a median-split logistic fit.

    Falls back to a tiny ridge penalty when the unpenalized fit diverges
    (separable classes) or its Hessian is singular (collinear columns); the
    ranking then carries ``separation_detected=True``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise InvalidArgument(f"need more rows than features, got {n}x{p}")
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(p)]
    threshold = float(np.median(y))
    t = (y > threshold).astype(float)
    A = np.hstack([np.ones((n, 1)), X])

    ridge = 0.0
    beta, iters, converged = _newton(A, t, 0.0, max_iter)
    # complete separation: the likelihood has no finite maximizer even when the
    # gradient has already flattened below tolerance
    separated = converged is None or bool(np.all((2.0 * t - 1.0) * (A @ beta) > 0))
    if separated:
        ridge = RIDGE_FALLBACK
        beta, iters, converged = _newton(A, t, ridge, max_iter)
    if not converged:
        raise NonConvergence(f"logistic fit did not converge in {max_iter} iterations")

    coef = beta[1:]
    mags = np.abs(coef)
    # ties broken by schema order; magnitudes equal to ~1e-12 relative count as tied
    scale = max(float(mags.max()), 1e-300)
    keys = np.round(mags / scale, 10)
    order = sorted(range(p), key=lambda j: (-keys[j], j))
    ranks = [0] * p
    for pos, j in enumerate(order):
        ranks[j] = pos + 1
    return FeatureRanking(list(feature_names), coef.tolist(), ranks, threshold, ridge, separated, iters)
