"""Two-layer perceptron regressor: tanh hidden layer, linear output.

Backpropagation supplies exact gradients of the mean squared error; they
feed either plain gradient descent or L-BFGS.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InvalidArgument, LengthMismatch, NonFiniteLoss
from .metrics import r_squared, rmse
from .optim import lbfgs
from .seeding import derive_seed


@dataclass
class MlpParams:
    W1: np.ndarray  # (S, R)
    b1: np.ndarray  # (S,)
    W2: np.ndarray  # (1, S)
    b2: float
    output_gain: float = 1.0

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), float(self.b2), self.output_gain)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), [self.b2]])

    def unpack(self, theta: np.ndarray) -> "MlpParams":
        S, R = self.W1.shape
        i = S * R
        W1 = theta[:i].reshape(S, R)
        b1 = theta[i:i + S]
        W2 = theta[i + S:i + 2 * S].reshape(1, S)
        return MlpParams(np.ascontiguousarray(W1), b1.copy(), np.ascontiguousarray(W2),
                         float(theta[-1]), self.output_gain)

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden, "W1": self.W1.tolist(),
                "b1": self.b1.tolist(), "W2": self.W2.tolist(), "b2": self.b2,
                "output_gain": self.output_gain}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        return cls(np.asarray(d["W1"], dtype=float), np.asarray(d["b1"], dtype=float),
                   np.asarray(d["W2"], dtype=float).reshape(1, -1), float(d["b2"]),
                   float(d.get("output_gain", 1.0)))


@dataclass
class Gradients:
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: float
    # 2 (yhat - y) / n per sample; the output-layer error term
    delta_out: np.ndarray | None = None
    # (1 - tanh^2) * W2^T delta_out, per sample and hidden unit
    delta_hidden: np.ndarray | None = None

    def pack(self) -> np.ndarray:
        return np.concatenate([self.dW1.ravel(), self.db1, self.dW2.ravel(), [self.db2]])


@dataclass
class MlpTrainConfig:
    learning_rate: float = 0.01
    max_iter: int = 200
    trainer: str = "lbfgs"
    lbfgs_memory: int = 10
    tolerance: float = 1e-6
    seed: int = 0
    # optimize only W2/b2 (a linear least-squares problem); used for testing
    freeze_hidden: bool = False

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_iter < 0:
            raise InvalidArgument(f"max_iter must be >= 0, got {self.max_iter}")
        if self.trainer not in ("gd", "lbfgs"):
            raise InvalidArgument(f"unknown trainer {self.trainer!r}")
        if self.lbfgs_memory < 1:
            raise InvalidArgument("lbfgs_memory must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def init(input_dim: int, hidden: int, seed: int) -> MlpParams:
    """Xavier-uniform weights, zero biases."""
    if input_dim < 1 or hidden < 1:
        raise InvalidArgument(f"dimensions must be >= 1, got ({input_dim}, {hidden})")
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (input_dim + hidden))
    lim2 = math.sqrt(6.0 / (hidden + 1))
    W1 = rng.uniform(-lim1, lim1, size=(hidden, input_dim))
    W2 = rng.uniform(-lim2, lim2, size=(1, hidden))
    return MlpParams(W1, np.zeros(hidden), W2, 0.0)


def forward(params: MlpParams, x) -> tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=float)
    a = np.tanh(params.W1 @ x + params.b1)
    return params.output_gain * (float(params.W2[0] @ a) + params.b2), a


def predict(params: MlpParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return params.output_gain * (np.tanh(X @ params.W1.T + params.b1) @ params.W2[0] + params.b2)


def loss(yhat, y) -> float:
    yhat = np.asarray(yhat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if yhat.shape != y.shape or y.size == 0:
        raise LengthMismatch(f"{yhat.size} predictions vs {y.size} targets")
    r = y - yhat
    return float(r @ r) / y.size


def backward(params: MlpParams, X, y) -> tuple[float, Gradients]:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if params.output_gain != 1.0:
        raise InvalidArgument("backward assumes output_gain == 1")
    E, dW1, db1, dW2, db2, d_out, d_hid = kernels.mlp_loss_grad(
        np.ascontiguousarray(params.W1), params.b1, np.ascontiguousarray(params.W2),
        float(params.b2), X, y)
    return E, Gradients(dW1, db1, dW2, db2, d_out, d_hid)


def gd_step(params: MlpParams, g: Gradients, eta: float) -> MlpParams:
    if eta < 0:
        raise InvalidArgument(f"learning rate must be >= 0, got {eta}")
    return MlpParams(params.W1 - eta * g.dW1, params.b1 - eta * g.db1,
                     params.W2 - eta * g.dW2, params.b2 - eta * g.db2, params.output_gain)


def _objective(params: MlpParams, X, y, freeze_hidden: bool):
    S, R = params.W1.shape
    hidden_len = S * R + S

    if freeze_hidden:
        frozen = params.pack()

        def fg(theta_out):
            theta = frozen.copy()
            theta[hidden_len:] = theta_out
            E, g = backward(params.unpack(theta), X, y)
            return E, g.pack()[hidden_len:]

        return fg, frozen[hidden_len:].copy(), lambda t: params.unpack(np.concatenate([frozen[:hidden_len], t]))

    def fg(theta):
        E, g = backward(params.unpack(theta), X, y)
        return E, g.pack()

    return fg, params.pack(), params.unpack


def train(params: MlpParams, X, y, cfg: MlpTrainConfig) -> tuple[MlpParams, list[float]]:
    """Full-batch training; returns the trained copy and the loss history."""
    cfg.validate()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise InvalidArgument(f"bad training data shapes {X.shape} / {y.shape}")
    if cfg.max_iter == 0:
        return params.copy(), []

    fg, theta0, rebuild = _objective(params, X, y, cfg.freeze_hidden)

    if cfg.trainer == "lbfgs":
        res = lbfgs(fg, theta0, max_iter=cfg.max_iter, memory=cfg.lbfgs_memory, tol=cfg.tolerance)
        if not math.isfinite(res.f):
            raise NonFiniteLoss("L-BFGS produced a non-finite loss")
        return rebuild(res.x), res.history

    theta = theta0.copy()
    history: list[float] = []
    E, g = fg(theta)
    for _ in range(cfg.max_iter):
        if not math.isfinite(E):
            raise NonFiniteLoss(f"loss diverged to {E}")
        if np.max(np.abs(g)) < cfg.tolerance:
            break
        theta = theta - cfg.learning_rate * g
        E, g = fg(theta)
        if not math.isfinite(E):
            raise NonFiniteLoss(f"loss diverged to {E}")
        history.append(E)
    return rebuild(theta), history


# ---------------------------------------------------------------------------
# hidden-size sweep


@dataclass
class SweepPoint:
    hidden: int
    train_r2: float = math.nan
    val_r2: float = math.nan
    train_rmse: float = math.nan
    val_rmse: float = math.nan
    ok: bool = True
    error: str = ""


@dataclass
class SweepResult:
    best_hidden: int
    curve: list[SweepPoint] = field(default_factory=list)

    @property
    def best(self) -> SweepPoint:
        return next(p for p in self.curve if p.hidden == self.best_hidden)

    def to_csv(self) -> str:
        lines = ["S,train_R2,val_R2,train_RMSE,val_RMSE"]
        for p in self.curve:
            lines.append(",".join([str(p.hidden)] + [repr(float(v)) for v in
                                   (p.train_r2, p.val_r2, p.train_rmse, p.val_rmse)]))
        return "\n".join(lines) + "\n"


def fit_hidden(S: int, X_train, y_train, cfg: MlpTrainConfig, seed: int) -> tuple[MlpParams, list[float]]:
    params = init(X_train.shape[1], S, seed)
    return train(params, X_train, y_train, replace(cfg, seed=seed))


def sweep_point(S, X_train, y_train, X_val, y_val, cfg, seed) -> SweepPoint:
    try:
        params, _ = fit_hidden(S, X_train, y_train, cfg, seed)
        p_tr = predict(params, X_train)
        p_va = predict(params, X_val)
        return SweepPoint(S, r_squared(y_train, p_tr), r_squared(y_val, p_va),
                          rmse(y_train, p_tr), rmse(y_val, p_va))
    except (ArithmeticError, ValueError) as exc:
        return SweepPoint(S, ok=False, error=f"{type(exc).__name__}: {exc}")


def select_best(curve: list[SweepPoint]) -> int:
    """Hidden size with the highest validation R^2; ties go to the smaller size."""
    valid = [p for p in curve if p.ok and math.isfinite(p.val_r2)]
    if not valid:
        raise NonFiniteLoss("every hidden size failed to train")
    return min(valid, key=lambda p: (-p.val_r2, p.hidden)).hidden


def sweep_hidden_size(lo: int, hi: int, X_train, y_train, X_val, y_val,
                      cfg: MlpTrainConfig, seed: int = 0, seed_key: tuple = (),
                      map_fn=map) -> SweepResult:
    """Train one network per hidden size in ``[lo, hi]`` and score it.

    The init seed for size ``S`` is derived from ``(seed, *seed_key, S)``, so
    the outcome does not depend on how ``map_fn`` schedules the work.
    """
    if lo < 1 or hi < lo:
        raise InvalidArgument(f"bad hidden range [{lo}, {hi}]")
    sizes = list(range(lo, hi + 1))
    seeds = [derive_seed(seed, *seed_key, S) for S in sizes]
    curve = list(map_fn(lambda args: sweep_point(args[0], X_train, y_train, X_val, y_val, cfg, args[1]),
                        zip(sizes, seeds)))
    return SweepResult(select_best(curve), curve)
