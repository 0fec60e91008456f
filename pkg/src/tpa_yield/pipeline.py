"""End-to-end training run: splits, hidden-size sweep, final models, report.

Stages, in order:

1. ``split``      repeated stratified k-fold plan of (train, validation, test)
2. ``preprocess`` label encoding and power transform, fitted per triple on
                  its train subset only
3. ``sweep``      one MLP per (triple, hidden size), scored on validation
4. ``select``     the (triple, hidden size) with the best validation R^2
5. ``train``      final MLP and ANFIS on the selected train subset
6. ``evaluate``   both models on the untouched test subset
7. ``report``     screening statistics, artifacts and the JSON run report

Targets are only reached through :class:`TargetAccess`, which refuses test
rows until the evaluate stage unlocks them.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import anfis, kernels, mlp
from .errors import InvalidArgument, NonFiniteLoss, TpaYieldError
from .metrics import MetricPair, build_report, dumps_stable, emit_parity_data
from .preprocess import (
    EncodingMap,
    PowerTransformParams,
    Split,
    SplitPlan,
    apply_encoding,
    apply_power_transform,
    fit_encoding,
    fit_power_transform,
    make_splits,
)
from .schema import Dataset, load_csv
from .seeding import derive_seed
from .stats import rank_features_logistic, significance_table

STAGES = ("split", "preprocess", "sweep", "select", "train", "evaluate", "report")


class TestTargetsLocked(TpaYieldError):
    """Raised when test-row targets are requested before evaluation."""

    __test__ = False  # keep pytest from collecting it


class TargetAccess:
    """Gatekeeper for the target vector.

    Every read goes through one of the role methods and is appended to
    ``log`` as ``(role, indices)``. Test rows stay locked until
    :meth:`unlock_test` is called.
    """

    def __init__(self, y):
        self._y = np.asarray(y, dtype=float)
        self._test_unlocked = False
        self._test_rows: set[int] = set()
        self.log: list[tuple[str, tuple[int, ...]]] = []

    @property
    def n(self) -> int:
        return self._y.size

    def _read(self, role: str, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        self.log.append((role, tuple(int(i) for i in idx)))
        return self._y[idx].copy()

    def mark_test_rows(self, split_plan: SplitPlan) -> None:
        for s in split_plan.assignments:
            self._test_rows.update(int(i) for i in s.test)

    def stratification(self) -> np.ndarray:
        """All targets, used only to form the quantile strata of the split."""
        return self._read("stratify", np.arange(self.n))

    def train(self, idx) -> np.ndarray:
        return self._read("train", idx)

    def validation(self, idx) -> np.ndarray:
        return self._read("validation", idx)

    def unlock_test(self) -> None:
        self._test_unlocked = True

    def test(self, idx) -> np.ndarray:
        if not self._test_unlocked:
            raise TestTargetsLocked("test targets requested before the evaluate stage")
        return self._read("test", idx)

    def everything(self) -> np.ndarray:
        """All targets, for the post-evaluation screening statistics."""
        if not self._test_unlocked:
            raise TestTargetsLocked("full target vector requested before the evaluate stage")
        return self._read("all", np.arange(self.n))


@dataclass
class PipelineConfig:
    data: str | None = None
    seed: int = 0
    folds: int = 5
    repeats: int = 4
    strat_bins: int = 5
    hidden_min: int = 2
    hidden_max: int = 25
    mlp: mlp.MlpTrainConfig = field(default_factory=mlp.MlpTrainConfig)
    subclust: anfis.SubClusterConfig = field(default_factory=anfis.SubClusterConfig)
    hybrid: anfis.HybridTrainConfig = field(default_factory=anfis.HybridTrainConfig)
    alpha: float = 0.05
    out_dir: str = "out"
    threads: int = 1

    def validate(self) -> None:
        if self.folds < 2 or self.repeats < 1 or self.strat_bins < 1:
            raise InvalidArgument("need folds >= 2, repeats >= 1, strat_bins >= 1")
        if not 1 <= self.hidden_min <= self.hidden_max:
            raise InvalidArgument(f"bad hidden range [{self.hidden_min}, {self.hidden_max}]")
        if not 0 < self.alpha < 1:
            raise InvalidArgument(f"alpha must be in (0, 1), got {self.alpha}")
        if self.threads < 1:
            raise InvalidArgument(f"threads must be >= 1, got {self.threads}")
        self.mlp.validate()
        self.subclust.validate()
        self.hybrid.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def report_dict(self) -> dict:
        """Config echo for the report; leaves out settings that cannot change results."""
        d = self.to_dict()
        for key in ("out_dir", "threads"):
            d.pop(key)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown config key(s): {', '.join(sorted(unknown))}")
        nested = {"mlp": mlp.MlpTrainConfig, "subclust": anfis.SubClusterConfig,
                  "hybrid": anfis.HybridTrainConfig}
        kwargs = {}
        for key, value in d.items():
            if key in nested:
                sub_known = {f.name for f in fields(nested[key])}
                bad = set(value) - sub_known
                if bad:
                    raise InvalidArgument(f"unknown {key} key(s): {', '.join(sorted(bad))}")
                value = nested[key](**value)
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class PreparedTriple:
    split: Split
    encoding: EncodingMap
    transform: PowerTransformParams
    Z: np.ndarray  # all rows, encoded and transformed with train-fitted parameters


@dataclass
class SweepTask:
    triple: int
    fold: int
    repeat: int
    hidden: int
    seed: int


@dataclass
class RunResult:
    report_path: Path
    report: dict
    selected: SweepTask
    curves: dict = field(default_factory=dict)
    targets: TargetAccess | None = None


@contextmanager
def stage(name: str):
    """Tag any toolkit error raised inside with the stage it came from."""
    try:
        yield
    except TpaYieldError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def prepare_triple(dataset: Dataset, split: Split) -> PreparedTriple:
    enc = fit_encoding(dataset.subset(split.train))
    X = apply_encoding(enc, dataset)
    pt = fit_power_transform(X[split.train])
    return PreparedTriple(split, enc, pt, apply_power_transform(pt, X))


def screening(dataset: Dataset, alpha: float = 0.05, y=None):
    """Significance table and logistic feature ranking over the whole dataset.

    The ranking uses encoding and power-transform parameters fitted on all
    rows, since it describes the data rather than feeding a model.
    """
    sig = significance_table(dataset, alpha)
    X = apply_encoding(fit_encoding(dataset), dataset)
    Z = apply_power_transform(fit_power_transform(X), X)
    y = dataset.target() if y is None else y
    return sig, rank_features_logistic(Z, y, feature_names=dataset.feature_names)


def write_screening(sig, ranking, out: Path) -> dict:
    _write_json(out / "significance.json", sig.to_dict())
    (out / "significance.txt").write_text(sig.to_text() + "\n", encoding="utf-8")
    _write_json(out / "ranking.json", ranking.to_dict())
    (out / "ranking.txt").write_text(ranking.to_text() + "\n", encoding="utf-8")
    return {"significance": "significance.json", "significance_text": "significance.txt",
            "ranking": "ranking.json", "ranking_text": "ranking.txt"}


def sweep_seed(master: int, fold: int, repeat: int, hidden: int) -> int:
    return derive_seed(master, fold, repeat, hidden)


def _run_sweep_task(task: SweepTask, prepared: list[PreparedTriple], y_train: list, y_val: list,
                    cfg: mlp.MlpTrainConfig) -> mlp.SweepPoint:
    p = prepared[task.triple]
    s = p.split
    return mlp.sweep_point(task.hidden, p.Z[s.train], y_train[task.triple],
                           p.Z[s.validation], y_val[task.triple], cfg, task.seed)


def select_triple(tasks: list[SweepTask], points: list[mlp.SweepPoint]) -> int:
    """Index of the best task: highest validation R^2, ties to lowest (fold, repeat, S)."""
    ok = [i for i, p in enumerate(points) if p.ok and math.isfinite(p.val_r2)]
    if not ok:
        raise NonFiniteLoss("every sweep task failed to train")
    return min(ok, key=lambda i: (-points[i].val_r2, tasks[i].fold, tasks[i].repeat, tasks[i].hidden))


def _write_json(path: Path, obj) -> Path:
    path.write_text(dumps_stable(obj) + "\n", encoding="utf-8")
    return path


def _curve_csv(tasks, points, triple: int) -> str:
    curve = [p for t, p in zip(tasks, points) if t.triple == triple]
    return mlp.SweepResult(mlp.select_best(curve), curve).to_csv()


def run(config: PipelineConfig, dataset: Dataset | None = None,
        target_access: type[TargetAccess] = TargetAccess) -> RunResult:
    """Execute every stage and write artifacts under ``config.out_dir``."""
    config.validate()
    if dataset is None:
        if config.data is None:
            raise InvalidArgument("no dataset given and config.data is unset")
        dataset = load_csv(config.data)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    targets = target_access(dataset.target())

    with stage("split"):
        plan = make_splits(dataset.n, config.folds, config.repeats, config.strat_bins,
                           targets.stratification(), config.seed)
        targets.mark_test_rows(plan)
        plan.save(out / "splits.json")

    with stage("preprocess"):
        prepared = [prepare_triple(dataset, s) for s in plan.assignments]
        y_train = [targets.train(s.train) for s in plan.assignments]
        y_val = [targets.validation(s.validation) for s in plan.assignments]

    with stage("sweep"):
        tasks = [SweepTask(i, s.fold, s.repeat, S, sweep_seed(config.seed, s.fold, s.repeat, S))
                 for i, s in enumerate(plan.assignments)
                 for S in range(config.hidden_min, config.hidden_max + 1)]

        def work(task):
            return _run_sweep_task(task, prepared, y_train, y_val, config.mlp)

        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                points = list(pool.map(work, tasks))
        else:
            points = [work(t) for t in tasks]

    with stage("select"):
        best_i = select_triple(tasks, points)
        chosen = tasks[best_i]
        prep = prepared[chosen.triple]
        split = prep.split
        (out / "sweep_curve.csv").write_text(_curve_csv(tasks, points, chosen.triple), encoding="utf-8")
        lines = ["fold,repeat,S,train_R2,val_R2,train_RMSE,val_RMSE"]
        for t, p in zip(tasks, points):
            lines.append(",".join([str(t.fold), str(t.repeat), str(t.hidden)] +
                                  [repr(float(v)) for v in (p.train_r2, p.val_r2, p.train_rmse, p.val_rmse)]))
        (out / "sweep_all.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    Z_tr, y_tr = prep.Z[split.train], y_train[chosen.triple]
    with stage("train"):
        mlp_params, mlp_hist = mlp.fit_hidden(chosen.hidden, Z_tr, y_tr, config.mlp, chosen.seed)
        centers = anfis.subtractive_cluster(Z_tr, config.subclust)
        anfis_init = anfis.init_from_clusters(centers, Z_tr, config.subclust)
        anfis_model, anfis_hist = anfis.train_hybrid(anfis_init, Z_tr, y_tr, config.hybrid)
        _write_json(out / "mlp_model.json", mlp_params.to_dict())
        _write_json(out / "anfis_model.json", anfis_model.to_dict())
        _write_json(out / "preprocess.json", {"encoding": prep.encoding.to_dict(),
                                              "power_transform": prep.transform.to_dict()})

    with stage("evaluate"):
        targets.unlock_test()
        y_te = targets.test(split.test)
        Z_te = prep.Z[split.test]
        models = {}
        artifacts = {"splits": "splits.json", "sweep_curve": "sweep_curve.csv",
                     "sweep_all": "sweep_all.csv", "mlp_model": "mlp_model.json",
                     "anfis_model": "anfis_model.json", "preprocess": "preprocess.json"}
        predictors = {"mlp": lambda Z: mlp.predict(mlp_params, Z),
                      "anfis": lambda Z: anfis.predict(anfis_model, Z)}
        for name, predict in predictors.items():
            entry = {}
            for role, Z, y in (("train", Z_tr, y_tr), ("test", Z_te, y_te)):
                yhat = predict(Z)
                entry[role] = MetricPair.compute(y, yhat).to_dict()
                fname = f"parity_{name}_{role}.csv"
                emit_parity_data(y, yhat, f"{name}-{role}", out / fname)
                artifacts[f"parity_{name}_{role}"] = fname
            models[name] = entry
        models["mlp"]["hidden_size"] = chosen.hidden
        models["mlp"]["iterations"] = len(mlp_hist)
        models["anfis"]["rules"] = anfis_model.n_rules
        models["anfis"]["iterations"] = len(anfis_hist)
        models["anfis"]["least_squares"] = anfis_model.meta.get("ls")

    with stage("report"):
        sig, ranking = screening(dataset, config.alpha, targets.everything())
        artifacts.update(write_screening(sig, ranking, out))
        splits_info = {"plan": "splits.json", "n_triples": len(plan.assignments),
                       "selected": {"fold": split.fold, "repeat": split.repeat,
                                    "label": split.label, "sizes": list(split.sizes)}}
        seeds = {"master": config.seed, "final_mlp_init": chosen.seed}
        report = build_report(dataset_fingerprint=dataset.fingerprint(), splits=splits_info,
                              selected_hidden=chosen.hidden, models=models,
                              significance=sig.to_dict(), ranking=ranking.to_dict(),
                              artifacts=artifacts, config=config.report_dict(), seeds=seeds,
                              extra={"kernel_backend": kernels.BACKEND,
                                     "selection": {"val_r2": points[best_i].val_r2}},
                              base_dir=out)
        path = report.save(out / "report.json")

    curves = {"selected": [p for t, p in zip(tasks, points) if t.triple == chosen.triple]}
    return RunResult(path, report.body, chosen, curves, targets)
