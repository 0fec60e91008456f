"""R^2 / RMSE, parity-plot CSVs and the byte-stable run report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateTarget, LengthMismatch, MissingArtifact


def _pair(y, yhat, min_n):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise LengthMismatch(f"{y.shape[0]} targets vs {yhat.shape[0]} predictions")
    if y.shape[0] < min_n:
        raise LengthMismatch(f"need at least {min_n} samples, got {y.shape[0]}")
    return y, yhat


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateTarget("constant target, R^2 undefined")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 1)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


@dataclass(frozen=True)
class MetricPair:
    r2: float
    rmse: float
    n: int

    @classmethod
    def compute(cls, y, yhat) -> "MetricPair":
        return cls(r_squared(y, yhat), rmse(y, yhat), int(np.size(y)))

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "n": self.n}


# ---------------------------------------------------------------------------
# parity data


def emit_parity_data(y, yhat, tag: str, path) -> Path:
    """Write ``index,real,predicted,residual`` rows under a ``#`` metrics header."""
    y, yhat = _pair(y, yhat, 1)
    path = Path(path)
    header = f"# tag={tag} n={y.shape[0]}"
    if y.shape[0] >= 2 and np.ptp(y) > 0:
        m = MetricPair.compute(y, yhat)
        header += f" r2={m.r2!r} rmse={m.rmse!r}"
    else:
        header += f" rmse={rmse(y, yhat)!r}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "real", "predicted", "residual"])
        for i, (a, b) in enumerate(zip(y, yhat)):
            writer.writerow([i, repr(float(a)), repr(float(b)), repr(float(b - a))])
    return path


def read_parity_data(path) -> tuple[dict, np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        rows = list(csv.DictReader(fh))
    real = np.array([float(r["real"]) for r in rows])
    pred = np.array([float(r["predicted"]) for r in rows])
    return meta, real, pred


# ---------------------------------------------------------------------------
# byte-stable JSON


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def dumps_stable(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with sorted keys and every float at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps_stable(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps_stable(v) for v in obj) + "]"
        items = [pad + dumps_stable(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class RunReport:
    body: dict

    def to_json(self) -> str:
        return dumps_stable(self.body) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def build_report(*, dataset_fingerprint: dict, splits: dict, selected_hidden: int,
                 models: dict, significance: dict | None, ranking: dict | None,
                 artifacts: dict, config: dict, seeds: dict, extra: dict | None = None,
                 base_dir=None) -> RunReport:
    """Assemble the run report; every path in ``artifacts`` must already exist.

    ``artifacts`` maps a role name to a path relative to ``base_dir``.
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    for role, rel in artifacts.items():
        if not (base / rel).is_file():
            raise MissingArtifact(f"artifact {role!r} not found at {base / rel}")
    body = {
        "dataset": dataset_fingerprint,
        "splits": splits,
        "selected_hidden_size": int(selected_hidden),
        "models": models,
        "significance": significance,
        "feature_ranking": ranking,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "config": config,
        "seeds": seeds,
    }
    if extra:
        body.update(extra)
    return RunReport(body)
