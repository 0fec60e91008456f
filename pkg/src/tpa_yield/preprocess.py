"""Categorical encoding, Yeo-Johnson scaling and repeated stratified splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFeature, DimensionMismatch, InvalidArgument, UnseenLabel
from .schema import AMBIENT_PRESSURE_ATM, Dataset

# ---------------------------------------------------------------------------
# categorical encoding


@dataclass(frozen=True)
class EncodingMap:
    """Per categorical feature, an ordered label -> integer code table."""

    tables: dict[str, dict[str, int]]

    def decode(self, feature: str, code: int) -> str:
        for label, c in self.tables[feature].items():
            if c == code:
                return label
        raise KeyError(f"no label with code {code} for {feature}")

    def to_dict(self) -> dict:
        return {name: dict(table) for name, table in self.tables.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "EncodingMap":
        return cls({name: {str(k): int(v) for k, v in table.items()} for name, table in data.items()})


def fit_encoding(dataset: Dataset) -> EncodingMap:
    tables: dict[str, dict[str, int]] = {}
    for j, spec in enumerate(dataset.schema):
        if not spec.is_categorical:
            continue
        table: dict[str, int] = {}
        for rec in dataset.records:
            label = rec.inputs[j]
            if label not in table:
                table[label] = len(table)
        tables[spec.name] = table
    return EncodingMap(tables)


def apply_encoding(enc: EncodingMap, dataset: Dataset) -> np.ndarray:
    """Numeric ``n x n_features`` matrix in schema column order.

    A missing pressure reading becomes ambient pressure (1 atm).
    """
    X = np.empty((dataset.n, len(dataset.schema)), dtype=float)
    for j, spec in enumerate(dataset.schema):
        table = enc.tables.get(spec.name) if spec.is_categorical else None
        for i, rec in enumerate(dataset.records):
            v = rec.inputs[j]
            if spec.is_categorical:
                if table is None or v not in table:
                    raise UnseenLabel(i, spec.name, f"label {v!r} not in encoding map")
                X[i, j] = table[v]
            else:
                X[i, j] = AMBIENT_PRESSURE_ATM if v is None else v
    return X


# ---------------------------------------------------------------------------
# Yeo-Johnson power transform

LAMBDA_BOUNDS = (-5.0, 5.0)
LAMBDA_TOL = 1e-6
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def yeo_johnson(x: np.ndarray, lmbda: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    eps = np.spacing(1.0)
    if abs(lmbda) < eps:
        out[pos] = np.log1p(x[pos])
    else:
        out[pos] = np.expm1(lmbda * np.log1p(x[pos])) / lmbda
    if abs(lmbda - 2.0) < eps:
        out[~pos] = -np.log1p(-x[~pos])
    else:
        out[~pos] = -np.expm1((2.0 - lmbda) * np.log1p(-x[~pos])) / (2.0 - lmbda)
    return out


def yeo_johnson_loglik(x: np.ndarray, lmbda: float) -> float:
    """Profile log-likelihood of ``lmbda`` under a Gaussian on the transformed column."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    yt = yeo_johnson(x, lmbda)
    var = np.var(yt)
    if not np.isfinite(var) or var <= 0:
        return -np.inf
    return -0.5 * n * math.log(var) + (lmbda - 1.0) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


def golden_section_max(f, lo: float, hi: float, tol: float = LAMBDA_TOL) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class PowerTransformParams:
    lambdas: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    @property
    def n_features(self) -> int:
        return self.lambdas.shape[0]

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "means": self.means.tolist(), "sds": self.sds.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PowerTransformParams":
        return cls(*(np.asarray(data[k], dtype=float) for k in ("lambdas", "means", "sds")))


def fit_power_transform(X: np.ndarray) -> PowerTransformParams:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidArgument("need a 2-D matrix with at least two rows")
    lambdas, means, sds = [], [], []
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.all(col == col[0]):
            raise DegenerateFeature(j)
        lam = golden_section_max(lambda lm: yeo_johnson_loglik(col, lm), *LAMBDA_BOUNDS)
        yt = yeo_johnson(col, lam)
        sd = float(np.std(yt))
        if not sd > 0:
            raise DegenerateFeature(j)
        lambdas.append(lam)
        means.append(float(np.mean(yt)))
        sds.append(sd)
    return PowerTransformParams(np.array(lambdas), np.array(means), np.array(sds))


def apply_power_transform(params: PowerTransformParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise DimensionMismatch(f"expected {params.n_features} columns, got shape {X.shape}")
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        out[:, j] = (yeo_johnson(X[:, j], params.lambdas[j]) - params.means[j]) / params.sds[j]
    return out


# ---------------------------------------------------------------------------
# split plans


@dataclass(frozen=True)
class Split:
    fold: int
    repeat: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)

    @property
    def label(self) -> str:
        return f"fold{self.fold}-repeat{self.repeat}"


@dataclass(frozen=True)
class SplitPlan:
    n: int
    folds: int
    repeats: int
    strat_bins: int
    seed: int
    assignments: tuple[Split, ...]

    def get(self, fold: int, repeat: int) -> Split:
        for s in self.assignments:
            if s.fold == fold and s.repeat == repeat:
                return s
        raise KeyError((fold, repeat))

    def rows(self):
        """Flat ``(fold, repeat, role, index)`` tuples, for audit listings."""
        for s in self.assignments:
            for role in ("train", "validation", "test"):
                for idx in getattr(s, role):
                    yield s.fold, s.repeat, role, int(idx)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "folds": self.folds,
            "repeats": self.repeats,
            "strat_bins": self.strat_bins,
            "seed": self.seed,
            "assignments": [
                {"fold": s.fold, "repeat": s.repeat, "train": s.train.tolist(),
                 "validation": s.validation.tolist(), "test": s.test.tolist()}
                for s in self.assignments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        splits = tuple(
            Split(a["fold"], a["repeat"], np.asarray(a["train"], dtype=np.int64),
                  np.asarray(a["validation"], dtype=np.int64), np.asarray(a["test"], dtype=np.int64))
            for a in data["assignments"]
        )
        return cls(data["n"], data["folds"], data["repeats"], data["strat_bins"], data["seed"], splits)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def quantile_bins(y: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-count bin index per record; ties broken by record index."""
    n = len(y)
    order = np.argsort(y, kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank * n_bins // n


def fold_quotas(bin_sizes: np.ndarray, k: int, m: int) -> np.ndarray:
    """Per-fold, per-bin draw counts for disjoint held-out pools of size ``m``.

    Bin ``b`` contributes floor or ceil of ``m * n_b / n`` to every fold; the
    leftover units are spread over folds by systematic sampling of the
    cumulative fractional parts, which keeps each fold at exactly ``m`` and
    never draws more from a bin than it holds.
    """
    n = int(bin_sizes.sum())
    base = (m * bin_sizes) // n
    rem = (m * bin_sizes) % n  # fractional part, in units of 1/n
    extra_per_fold = int(rem.sum() // n)
    cum_hi = np.cumsum(rem)
    cum_lo = cum_hi - rem
    quotas = np.tile(base, (k, 1))
    for f in range(k):
        for i in range(extra_per_fold):
            # point f/k + i, scaled by n*k
            p = f * n + i * n * k
            b = int(np.searchsorted(k * cum_hi, p, side="right"))
            assert k * cum_lo[b] <= p < k * cum_hi[b]
            quotas[f, b] += 1
    return quotas


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys]))


def validation_size(n: int, k: int) -> int:
    # 381 records, 5 folds -> 39 validation / 37 test out of a 76-record pool
    return min(-(-n // (2 * k)), n // k)


def make_splits(n: int, k: int = 5, repeats: int = 4, strat_bins: int = 5,
                y=None, seed: int = 0) -> SplitPlan:
    """Repeated stratified k-fold plan of (train, validation, test) triples.

    Each repeat reshuffles the records inside every quantile bin of ``y`` and
    carves ``k`` disjoint held-out pools of ``n // k`` records; each pool is
    shuffled again and cut into validation and test. Records left over after
    ``k`` pools always stay in train. Triples are ordered fold-major.
    """
    if not (isinstance(n, (int, np.integer)) and n >= k >= 2):
        raise InvalidArgument(f"need n >= k >= 2, got n={n}, k={k}")
    if repeats < 1:
        raise InvalidArgument(f"repeats must be >= 1, got {repeats}")
    if not 1 <= strat_bins <= n:
        raise InvalidArgument(f"strat_bins must be in [1, n], got {strat_bins}")
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise InvalidArgument(f"y must have length {n}")

    m = n // k
    n_val = validation_size(n, k)
    bins = quantile_bins(y, strat_bins)
    members = [np.flatnonzero(bins == b) for b in range(strat_bins)]
    quotas = fold_quotas(np.array([len(mb) for mb in members]), k, m)
    everything = np.arange(n)

    by_key = {}
    for r in range(repeats):
        rng = _rng(seed, r)
        shuffled = [rng.permutation(mb) for mb in members]
        offsets = np.zeros(strat_bins, dtype=np.int64)
        for f in range(k):
            pool = np.concatenate([shuffled[b][offsets[b]:offsets[b] + quotas[f, b]]
                                   for b in range(strat_bins)])
            offsets += quotas[f]
            pool = _rng(seed, r, f, 1).permutation(pool)
            val = np.sort(pool[:n_val])
            test = np.sort(pool[n_val:])
            train = np.setdiff1d(everything, pool)
            by_key[(f, r)] = Split(f, r, train, val, test)
    ordered = tuple(by_key[(f, r)] for f in range(k) for r in range(repeats))
    return SplitPlan(int(n), k, repeats, strat_bins, int(seed), ordered)
