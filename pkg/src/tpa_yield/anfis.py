"""First-order Takagi-Sugeno ANFIS with generalized-bell premises.

Layers: bell memberships per (rule, input); product firing strength per rule;
normalization across rules; linear consequent per rule; weighted sum.
Firing strengths are combined in log space so that ten-input products do
not underflow; a sample whose every rule has log-strength -inf gets uniform
normalized strengths.

Rules are seeded by subtractive clustering and trained by the hybrid rule:
exact least squares on consequents, normalized gradient steps on premises.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import DimensionMismatch, InvalidArgument, NonFiniteLoss

PARAM_FLOOR = 1e-6


@dataclass(frozen=True)
class BellMF:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidArgument(f"bell parameters need a > 0 and b > 0, got a={self.a}, b={self.b}")


def membership(mf: BellMF, x: float) -> float:
    """Generalized bell ``1 / (1 + ((x - c) / a) ** (2 b))``."""
    z = (x - mf.c) / mf.a
    return 1.0 / (1.0 + (z * z) ** mf.b)


@dataclass(frozen=True)
class Rule:
    premise: tuple[BellMF, ...]
    consequent: tuple[float, ...]


@dataclass
class AnfisModel:
    a: np.ndarray  # (n_rules, input_dim)
    b: np.ndarray
    c: np.ndarray
    consequents: np.ndarray  # (n_rules, input_dim + 1): intercept first
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=float)
        self.b = np.ascontiguousarray(self.b, dtype=float)
        self.c = np.ascontiguousarray(self.c, dtype=float)
        self.consequents = np.ascontiguousarray(self.consequents, dtype=float)
        R, D = self.c.shape
        if R < 1:
            raise InvalidArgument("model needs at least one rule")
        if self.a.shape != (R, D) or self.b.shape != (R, D):
            raise DimensionMismatch("premise arrays must share one shape")
        if self.consequents.shape != (R, D + 1):
            raise DimensionMismatch(f"consequents must be {(R, D + 1)}, got {self.consequents.shape}")

    @property
    def n_rules(self) -> int:
        return self.c.shape[0]

    @property
    def input_dim(self) -> int:
        return self.c.shape[1]

    @property
    def rules(self) -> list[Rule]:
        return [Rule(tuple(BellMF(*abc) for abc in zip(self.a[r], self.b[r], self.c[r])),
                     tuple(self.consequents[r].tolist())) for r in range(self.n_rules)]

    @classmethod
    def from_rules(cls, rules) -> "AnfisModel":
        rules = list(rules)
        a = [[m.a for m in r.premise] for r in rules]
        b = [[m.b for m in r.premise] for r in rules]
        c = [[m.c for m in r.premise] for r in rules]
        return cls(np.array(a), np.array(b), np.array(c), np.array([r.consequent for r in rules]))

    def copy(self) -> "AnfisModel":
        return AnfisModel(self.a.copy(), self.b.copy(), self.c.copy(), self.consequents.copy(), dict(self.meta))

    def with_consequents(self, consequents) -> "AnfisModel":
        return AnfisModel(self.a, self.b, self.c, consequents, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "rules": [{"a": self.a[r].tolist(), "b": self.b[r].tolist(), "c": self.c[r].tolist(),
                       "consequent": self.consequents[r].tolist()} for r in range(self.n_rules)],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnfisModel":
        rules = d["rules"]
        return cls(np.array([r["a"] for r in rules]), np.array([r["b"] for r in rules]),
                   np.array([r["c"] for r in rules]), np.array([r["consequent"] for r in rules]),
                   dict(d.get("meta", {})))


@dataclass
class ForwardTrace:
    w: np.ndarray
    wbar: np.ndarray
    f: np.ndarray
    output: float


def _check_X(model: AnfisModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise DimensionMismatch(f"model takes {model.input_dim} inputs, got {X.shape[1]}")
    return X


def forward(model: AnfisModel, x) -> ForwardTrace:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("forward takes a single input vector")
    w, wbar, f, out = kernels.anfis_forward(model.a, model.b, model.c, model.consequents, _check_X(model, x))
    return ForwardTrace(w[0], wbar[0], f[0], float(out[0]))


def predict(model: AnfisModel, X) -> np.ndarray:
    X = _check_X(model, X)
    return kernels.anfis_forward(model.a, model.b, model.c, model.consequents, X)[3]


def mse(model: AnfisModel, X, y) -> float:
    r = predict(model, X) - np.asarray(y, dtype=float)
    return float(r @ r) / r.size


# ---------------------------------------------------------------------------
# subtractive clustering


@dataclass(frozen=True)
class SubClusterConfig:
    range_of_influence: float = 0.9
    squash_factor: float = 1.2
    acceptance_ratio: float = 0.5
    rejection_ratio: float = 0.2

    def validate(self) -> None:
        if not self.range_of_influence > 0:
            raise InvalidArgument("range_of_influence must be > 0")
        if not self.squash_factor > 0:
            raise InvalidArgument("squash_factor must be > 0")
        if not 0 < self.rejection_ratio <= self.acceptance_ratio <= 1:
            raise InvalidArgument("need 0 < rejection_ratio <= acceptance_ratio <= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _unit_scale(X):
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0] = 1.0
    return (X - lo) / span


def subtractive_cluster(X, cfg: SubClusterConfig = SubClusterConfig()) -> np.ndarray:
    """Cluster centers (rows of ``X``) chosen by the mountain-potential method.

    Distances are measured after scaling each column to [0, 1], so the
    influence radius is a fraction of every feature's range. Ties in
    potential go to the lowest row index.
    """
    cfg.validate()
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("need a nonempty 2-D matrix")
    Xn = np.ascontiguousarray(_unit_scale(X))
    ra = cfg.range_of_influence
    rb = cfg.squash_factor * ra
    pot = kernels.subclust_potential(Xn, ra)

    first = int(np.argmax(pot))
    p_first = pot[first]
    centers = [first]
    p_k, k = p_first, first
    while True:
        pot = pot - p_k * np.exp(-4.0 * np.sum((Xn - Xn[k]) ** 2, axis=1) / (rb * rb))
        np.maximum(pot, 0.0, out=pot)
        # candidate loop: grey-zone rejections zero a point and retry
        while True:
            k = int(np.argmax(pot))
            p_k = pot[k]
            ratio = p_k / p_first
            if p_k <= 0 or ratio < cfg.rejection_ratio:
                return X[centers].copy()
            if ratio >= cfg.acceptance_ratio:
                break
            d_min = math.sqrt(min(float(np.sum((Xn[k] - Xn[c]) ** 2)) for c in centers))
            if d_min / ra + ratio >= 1.0:
                break
            pot[k] = 0.0
        centers.append(k)


def init_from_clusters(centers, X, cfg: SubClusterConfig = SubClusterConfig()) -> AnfisModel:
    """One rule per center: bell centred on it, width ``r * sd / sqrt(8)``, b = 1."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    X = np.asarray(X, dtype=float)
    if centers.shape[0] < 1:
        raise InvalidArgument("need at least one center")
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    width = cfg.range_of_influence * sd / math.sqrt(8.0)
    R, D = centers.shape
    return AnfisModel(np.tile(width, (R, 1)), np.ones((R, D)), centers.copy(), np.zeros((R, D + 1)))


# ---------------------------------------------------------------------------
# hybrid learning


def design_matrix(model: AnfisModel, X) -> np.ndarray:
    """Rows ``[wbar_1 [1, x], ..., wbar_R [1, x]]``; output = A @ consequents.ravel()."""
    X = _check_X(model, X)
    _, wbar, _, _ = kernels.anfis_forward(model.a, model.b, model.c, model.consequents, X)
    xt = np.hstack([np.ones((X.shape[0], 1)), X])
    return (wbar[:, :, None] * xt[:, None, :]).reshape(X.shape[0], -1)


# Relative cutoff on the pivoted-QR diagonal for the consequent solve. The
# default only drops numerically null directions, so the result is the exact
# minimum-norm least-squares solution.
LS_RCOND = 1e-10
# Cutoff used during hybrid training. Inputs that are nearly constant inside
# a rule's region make the design ill-conditioned; dropping those directions
# costs a little training error and keeps predictions off the training rows
# bounded.
TRAIN_LS_RCOND = 1e-4


def fit_consequents_ls(model: AnfisModel, X, y, rcond: float = LS_RCOND) -> AnfisModel:
    """Least-squares consequents for fixed premises.

    Solved by a complete orthogonal factorization (QR with column pivoting),
    which returns the minimum-norm solution when the design is rank
    deficient. Rank and deficiency are recorded in ``meta["ls"]``.
    """
    A = design_matrix(model, X)
    y = np.asarray(y, dtype=float).ravel()
    theta, _, rank, _ = scipy.linalg.lstsq(A, y, cond=rcond, lapack_driver="gelsy", check_finite=False)
    out = model.with_consequents(theta.reshape(model.n_rules, model.input_dim + 1))
    out.meta["ls"] = {"rank": int(rank), "n_params": int(A.shape[1]),
                      "rank_deficient": bool(rank < min(A.shape))}
    return out


def premise_gradients(model: AnfisModel, X, y):
    """``(E, dE/da, dE/db, dE/dc)`` for mean squared error over the batch."""
    X = _check_X(model, X)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    return kernels.anfis_premise_grad(model.a, model.b, model.c, model.consequents, X, y)


def backprop_premise(model: AnfisModel, X, y, step: float) -> tuple[AnfisModel, float]:
    """One normalized gradient step of length ``step`` on all premise parameters.

    Returns the updated model and the error of the incoming one.
    """
    if step < 0:
        raise InvalidArgument(f"step must be >= 0, got {step}")
    E, da, db, dc = premise_gradients(model, X, y)
    norm = math.sqrt(float(np.sum(da * da) + np.sum(db * db) + np.sum(dc * dc)))
    if step == 0 or norm == 0 or not math.isfinite(norm):
        return model.copy(), E
    k = step / norm
    a = np.maximum(model.a - k * da, PARAM_FLOOR)
    b = np.maximum(model.b - k * db, PARAM_FLOOR)
    c = model.c - k * dc
    return AnfisModel(a, b, c, model.consequents.copy(), dict(model.meta)), E


@dataclass(frozen=True)
class HybridTrainConfig:
    epochs: int = 2
    max_iter: int = 200
    initial_step: float = 1e-4
    step_decrease: float = 0.9
    step_increase: float = 1.2
    tolerance: float = 1e-10
    ls_rcond: float = TRAIN_LS_RCOND
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.max_iter < 0:
            raise InvalidArgument("epochs and max_iter must be >= 0")
        if not self.initial_step > 0:
            raise InvalidArgument("initial_step must be > 0")
        if not 0 < self.step_decrease < 1 < self.step_increase:
            raise InvalidArgument("need 0 < step_decrease < 1 < step_increase")
        if not 0 <= self.ls_rcond < 1:
            raise InvalidArgument("ls_rcond must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def adapt_step(history: list[float], step: float, cfg: HybridTrainConfig) -> float:
    """Grow after four straight decreases, shrink after two up/down swings."""
    if len(history) < 5:
        return step
    d = np.diff(history[-5:])
    if np.all(d < 0):
        return step * cfg.step_increase
    signs = np.sign(d)
    if np.all(signs != 0) and np.all(signs[1:] == -signs[:-1]):
        return step * cfg.step_decrease
    return step


def train_hybrid(model: AnfisModel, X, y, cfg: HybridTrainConfig = HybridTrainConfig()):
    """Alternate LS consequents and premise gradient steps.

    ``history[i]`` is the training error right after the i-th LS pass. The
    returned model is the one with the lowest recorded error.
    """
    cfg.validate()
    X = _check_X(model, X)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    history: list[float] = []
    step = cfg.initial_step
    best, best_E = model.copy(), math.inf
    current = model
    for _ in range(cfg.max_iter):
        current = fit_consequents_ls(current, X, y, cfg.ls_rcond)
        E = mse(current, X, y)
        if not math.isfinite(E):
            raise NonFiniteLoss(f"ANFIS training error became {E}")
        history.append(E)
        if E < best_E:
            best, best_E = current.copy(), E
        if len(history) >= 2 and abs(history[-1] - history[-2]) < cfg.tolerance:
            break
        for _ in range(cfg.epochs):
            current, _ = backprop_premise(current, X, y, step)
        step = adapt_step(history, step, cfg)
    best.meta["train"] = {"iterations": len(history), "final_step": step,
                          "best_error": best_E if history else None}
    return best, history
