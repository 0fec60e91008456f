"""Dataset schema, CSV ingestion/validation and the synthetic generator.

The ten reaction-condition inputs and the TPA yield target are fixed by the
literature table the models were built from. Column names and label
vocabularies below are the on-disk contract for every CSV the toolkit reads.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidArgument,
    MissingColumn,
    OutOfRange,
    ParseError,
    UnknownLabel,
)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
MISSING = "NR"
AMBIENT_PRESSURE_ATM = 1.0


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    kind: str
    unit: str = ""
    allowed_range: tuple[float, float] | None = None
    allowed_labels: tuple[str, ...] | None = None
    description: str = ""

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


INPUT_SCHEMA: tuple[FeatureSchema, ...] = (
    FeatureSchema("temperature_C", CONTINUOUS, "°C", (40.0, 385.0),
                  description="reaction temperature"),
    FeatureSchema("pressure_atm", CONTINUOUS, "atm", (1.0, 296.0),
                  description="reaction pressure"),
    FeatureSchema("pet_config", CATEGORICAL, "", None, ("A", "B", "C"),
                  description="PET sample configuration"),
    FeatureSchema("pet_amount_mol", CONTINUOUS, "mol", (0.001, 11.5),
                  description="PET sample amount"),
    FeatureSchema("catalyst_type", CATEGORICAL, "", None,
                  ("a", "b", "c", "d", "e", "f", "g", "h"),
                  description="catalyst type"),
    FeatureSchema("catalyst_conc_M", CONTINUOUS, "M", (0.0, 168.8),
                  description="overall catalyst concentration"),
    FeatureSchema("solution_mL", CONTINUOUS, "mL", (4.6, 1500.0),
                  description="solution amount"),
    FeatureSchema("reaction_type", CATEGORICAL, "", None, ("a1", "a2", "a3"),
                  description="reaction type"),
    FeatureSchema("time_hr", CONTINUOUS, "hr", (0.02, 145.0),
                  description="reaction time"),
    FeatureSchema("heat_mix", CATEGORICAL, "", None,
                  ("a1r", "a2r", "a3r", "a4r", "a5r", "a6r"),
                  description="heating/mixing condition"),
)

TARGET = FeatureSchema("tpa_yield_pct", CONTINUOUS, "%", (0.0, 100.0),
                       description="TPA yield")

# the only column where a missing ("NR") cell is legal
NULLABLE = frozenset({"pressure_atm"})

HEADER: tuple[str, ...] = tuple(f.name for f in INPUT_SCHEMA) + (TARGET.name,)


@dataclass(frozen=True)
class Record:
    inputs: tuple
    yield_pct: float
    source_tag: str | None = None


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    schema: tuple[FeatureSchema, ...] = INPUT_SCHEMA

    def __post_init__(self):
        if len(self.records) == 0:
            raise EmptyDataset("dataset has no records")
        width = len(self.schema)
        for i, rec in enumerate(self.records):
            if len(rec.inputs) != width:
                raise InvalidArgument(f"record {i} has {len(rec.inputs)} inputs, expected {width}")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    def column(self, name: str) -> list:
        j = self.feature_names.index(name)
        return [r.inputs[j] for r in self.records]

    def target(self) -> np.ndarray:
        return np.array([r.yield_pct for r in self.records], dtype=float)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.schema)

    def fingerprint(self) -> dict:
        digest = hashlib.sha256(to_csv_text(self).encode("utf-8")).hexdigest()
        return {"n": self.n, "sha256": digest}


# ---------------------------------------------------------------------------
# CSV


def _format_value(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, str):
        return value
    return repr(float(value))


def to_csv_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f.name for f in dataset.schema] + [TARGET.name])
    for rec in dataset.records:
        writer.writerow([_format_value(v) for v in rec.inputs] + [_format_value(rec.yield_pct)])
    return buf.getvalue()


def write_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.write_text(to_csv_text(dataset), encoding="utf-8", newline="")
    return path


def _parse_number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, f"cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(row, column, f"non-finite value {text!r}")
    return value


def _check_range(value: float, spec: FeatureSchema, row: int) -> None:
    lo, hi = spec.allowed_range
    if not lo <= value <= hi:
        raise OutOfRange(row, spec.name, f"{value!r} outside [{lo!r}, {hi!r}]")


def _lenient_number(text: str):
    if text == MISSING:
        return None
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def parse_rows(rows: Sequence[Sequence[str]], schema: Sequence[FeatureSchema] = INPUT_SCHEMA,
               strict: bool = True) -> Dataset:
    """Build a dataset from raw string rows, the first of which is the header.

    With ``strict=False`` bad cells are kept as-is (unparseable numbers stay
    strings, "NR" becomes None anywhere) so :func:`validate` can list them
    all; header and row-width problems still raise.
    """
    if not rows:
        raise MissingColumn("file is empty, no header row")
    header = [h.strip() for h in rows[0]]
    expected = [f.name for f in schema] + [TARGET.name]
    if header != expected:
        missing = [c for c in expected if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}")
        raise MissingColumn(f"header {header} does not match expected order {expected}")

    records = []
    for row_idx, raw in enumerate(rows[1:]):
        if not raw or all(not cell.strip() for cell in raw):
            continue
        if len(raw) != len(expected):
            raise ParseError(row_idx, "*", f"expected {len(expected)} cells, got {len(raw)}")
        cells = [c.strip() for c in raw]
        if not strict:
            values = [cell if spec.is_categorical else _lenient_number(cell)
                      for spec, cell in zip(schema, cells)]
            records.append(Record(tuple(values), _lenient_number(cells[-1])))
            continue
        values = []
        for spec, cell in zip(schema, cells):
            if spec.is_categorical:
                if cell not in spec.allowed_labels:
                    raise UnknownLabel(row_idx, spec.name, f"label {cell!r}")
                values.append(cell)
            elif cell == MISSING and spec.name in NULLABLE:
                values.append(None)
            else:
                value = _parse_number(cell, row_idx, spec.name)
                _check_range(value, spec, row_idx)
                values.append(value)
        y = _parse_number(cells[-1], row_idx, TARGET.name)
        _check_range(y, TARGET, row_idx)
        records.append(Record(tuple(values), y))

    if not records:
        raise EmptyDataset("no data rows after the header")
    return Dataset(tuple(records), tuple(schema))


def load_csv(path, schema: Sequence[FeatureSchema] = INPUT_SCHEMA, strict: bool = True) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return parse_rows(rows, schema, strict)


# ---------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    row: int
    column: str
    message: str


@dataclass
class ColumnSummary:
    name: str
    kind: str
    minimum: float | None = None
    maximum: float | None = None
    n_missing: int = 0
    labels: dict[str, int] = field(default_factory=dict)


@dataclass
class ValidationReport:
    columns: list[ColumnSummary]
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        cols = {}
        for c in self.columns:
            if c.kind == CATEGORICAL:
                cols[c.name] = {"kind": c.kind, "labels": dict(sorted(c.labels.items()))}
            else:
                cols[c.name] = {"kind": c.kind, "min": c.minimum, "max": c.maximum,
                                "n_missing": c.n_missing}
        return {
            "columns": cols,
            "violations": [{"row": v.row, "column": v.column, "message": v.message}
                           for v in self.violations],
        }


def _summarize_numeric(name, values, spec, nullable, violations):
    summary = ColumnSummary(name, CONTINUOUS)
    finite = []
    for i, v in enumerate(values):
        if v is None:
            summary.n_missing += 1
            if not nullable:
                violations.append(Violation(i, name, "missing value"))
            continue
        if isinstance(v, str) or not math.isfinite(v):
            violations.append(Violation(i, name, f"non-numeric or non-finite value {v!r}"))
            continue
        finite.append(v)
        lo, hi = spec.allowed_range
        if not lo <= v <= hi:
            violations.append(Violation(i, name, f"{v!r} outside [{lo!r}, {hi!r}]"))
    if finite:
        summary.minimum = float(min(finite))
        summary.maximum = float(max(finite))
    return summary


def validate(dataset: Dataset) -> ValidationReport:
    """Census every column and list each schema violation; never raises."""
    violations: list[Violation] = []
    columns: list[ColumnSummary] = []
    for j, spec in enumerate(dataset.schema):
        values = [r.inputs[j] for r in dataset.records]
        if spec.is_categorical:
            summary = ColumnSummary(spec.name, CATEGORICAL)
            for i, v in enumerate(values):
                summary.labels[v] = summary.labels.get(v, 0) + 1
                if v not in spec.allowed_labels:
                    violations.append(Violation(i, spec.name, f"unknown label {v!r}"))
        else:
            summary = _summarize_numeric(spec.name, values, spec, spec.name in NULLABLE, violations)
        columns.append(summary)
    ys = [r.yield_pct for r in dataset.records]
    columns.append(_summarize_numeric(TARGET.name, ys, TARGET, False, violations))
    violations.sort(key=lambda v: (v.row, HEADER.index(v.column) if v.column in HEADER else 99))
    return ValidationReport(columns, violations)


# ---------------------------------------------------------------------------
# synthetic data

# One row per literature study in the source table: per-feature ranges (or
# discrete choices) and the labels that study used, plus its record count.
# Continuous entries are ("range", lo, hi) or ("choice", v1, v2, ...);
# pressure None means the study did not report it.
STUDY_TABLE = (
    (("range", 60, 80), ("range", 1.97, 1.97), "A", ("choice", 0.052), "f", ("range", 2, 2.09),
     ("choice", 150), "a2", ("range", 0.5, 1.5), "a3r", 48),
    (("range", 100, 135), ("range", 1, 1), "A", ("choice", 0.0153), "a", ("range", 7.5, 7.5),
     ("choice", 25), "a1", ("range", 0.42, 145), "a1r", 29),
    (("range", 70, 100), ("range", 1, 1), "A", ("choice", 0.008), "b", ("range", 7, 13),
     ("choice", 50), "a1", ("range", 2, 100), "a1r", 41),
    (("range", 150, 190), ("range", 1, 1), "A", ("choice", 0.001), "a", ("range", 3, 9),
     ("choice", 25), "a1", ("range", 1, 12), "a2r", 58),
    (("range", 145, 145), None, "A", ("choice", 0.016), "c", ("range", 0.03, 0.03),
     ("choice", 30), "a1", ("range", 1, 4), "a3r", 18),
    (("range", 170, 190), None, "B", ("choice", 0.01), "d", ("range", 0.0031, 0.0031),
     ("choice", 20), "a1", ("range", 0.42, 7.92), "a4r", 35),
    (("range", 40, 90), ("range", 1, 1), "C", ("choice", 0.104), "a", ("range", 119.6, 168.8),
     ("range", 4.6, 4.9), "a1", ("range", 1, 15), "a3r", 60),
    (("range", 120, 160), ("range", 1.7, 4.6), "B", ("choice", 0.078), "e", ("range", 0.87, 3.47),
     ("choice", 90), "a2", ("range", 0.17, 2.0), "a5r", 24),
    (("range", 220, 220), None, "C", ("choice", 0.0052), "g", ("range", 2.75, 2.75),
     ("choice", 5, 10), "a2", ("range", 0.03, 2.0), "a4r", 14),
    (("range", 120, 200), None, "B", ("choice", 0.26), "g", ("range", 1.125, 1.125),
     ("choice", 520.45), "a2", ("range", 1, 7), "a3r", 9),
    (("range", 70, 95), ("range", 1, 1), "B", ("choice", 11.5), "f", ("range", 1.385, 4.125),
     ("choice", 1500), "a2", ("range", 1, 4), "a6r", 37),
    (("range", 300, 385), ("range", 296, 296), "C", ("choice", 0.011, 0.008), "h", ("range", 0, 0),
     ("choice", 15.3, 20.22), "a3", ("range", 0.02, 1.0), "a4r", 9),
)

# Ground truth used by synth_generate. Continuous inputs are standardized
# with the fixed (center, scale) pairs below, after log1p for the skewed
# ones (missing pressure counts as 1 atm):
#   eta = 1.4 zT + 0.9 zt + 0.6 zc + 0.3 tanh(zT) tanh(zt)
#         + 0.2 zs - 0.2 zm + 0.1 zp + label offsets
#   yield = 100 / (1 + exp(-eta))
# with zT, zt, zc, zs, zm, zp for temperature, time, catalyst concentration,
# solution amount, PET amount and pressure. d(eta)/dzT >= 1.1 and
# d(eta)/dzt >= 0.6 everywhere, so yield increases monotonically in
# temperature, time and catalyst concentration.
SYNTH_SCALING = {
    # name: (log1p first?, center, scale)
    "temperature_C": (False, 125.0, 60.0),
    "time_hr": (True, 1.8, 1.2),
    "catalyst_conc_M": (True, 1.9, 1.5),
    "solution_mL": (True, 3.8, 1.6),
    "pet_amount_mol": (True, 0.28, 0.74),
    "pressure_atm": (True, 0.9, 0.77),
}
SYNTH_WEIGHTS = {
    "temperature_C": 1.4,
    "time_hr": 0.9,
    "catalyst_conc_M": 0.6,
    "solution_mL": 0.2,
    "pet_amount_mol": -0.2,
    "pressure_atm": 0.1,
}
SYNTH_INTERACTION = 0.3  # tanh(zT) * tanh(zt)
SYNTH_OFFSETS = {
    "pet_config": {"A": 0.3, "B": 0.0, "C": -0.3},
    "catalyst_type": {"a": 0.4, "b": 0.2, "c": 0.5, "d": -0.3,
                      "e": 0.1, "f": 0.3, "g": 0.2, "h": -0.5},
    "reaction_type": {"a1": 0.2, "a2": 0.4, "a3": -0.2},
    "heat_mix": {"a1r": 0.0, "a2r": 0.2, "a3r": 0.1, "a4r": 0.3, "a5r": -0.1, "a6r": 0.0},
}


def _standardized(name: str, values) -> np.ndarray:
    use_log, center, scale = SYNTH_SCALING[name]
    v = np.array([AMBIENT_PRESSURE_ATM if x is None else x for x in values], dtype=float)
    if use_log:
        v = np.log1p(v)
    return (v - center) / scale


def ground_truth_yield(columns: dict[str, Sequence]) -> np.ndarray:
    """Noise-free synthetic yield (percent) for columns keyed by feature name."""
    z = {name: _standardized(name, columns[name]) for name in SYNTH_WEIGHTS}
    eta = SYNTH_INTERACTION * np.tanh(z["temperature_C"]) * np.tanh(z["time_hr"])
    for name, w in SYNTH_WEIGHTS.items():
        eta = eta + w * z[name]
    for name, table in SYNTH_OFFSETS.items():
        eta = eta + np.array([table[label] for label in columns[name]])
    return 100.0 / (1.0 + np.exp(-eta))


def _draw(rng, entry):
    kind, *vals = entry
    if kind == "choice":
        return float(vals[rng.integers(len(vals))]) if len(vals) > 1 else float(vals[0])
    lo, hi = vals
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _draw_studies(rng, n):
    counts = np.array([row[-1] for row in STUDY_TABLE], dtype=float)
    which = rng.choice(len(STUDY_TABLE), size=n, p=counts / counts.sum())
    columns: dict[str, list] = {spec.name: [] for spec in INPUT_SCHEMA}
    for k in which:
        row = STUDY_TABLE[k]
        for spec, entry in zip(INPUT_SCHEMA, row[:-1]):
            if spec.is_categorical:
                value = entry
            elif entry is None:
                value = None
            else:
                value = _draw(rng, entry)
            columns[spec.name].append(value)
    return columns


def _draw_uniform(rng, n):
    columns: dict[str, list] = {}
    for spec in INPUT_SCHEMA:
        if spec.is_categorical:
            idx = rng.integers(0, len(spec.allowed_labels), size=n)
            columns[spec.name] = [spec.allowed_labels[i] for i in idx]
        else:
            lo, hi = spec.allowed_range
            columns[spec.name] = rng.uniform(lo, hi, size=n).tolist()
    return columns


def synth_generate(n: int, seed: int, noise_sd: float = 2.0, layout: str = "studies") -> Dataset:
    """Draw ``n`` records with a known yield function.

    ``layout="studies"`` (default) picks a source study for each record in
    proportion to its record count, then draws every condition uniformly
    within that study's range and takes its labels. ``layout="uniform"``
    draws every feature independently over the global ranges, categoricals
    uniform over their label sets.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidArgument(f"n must be an integer >= 1, got {n}")
    if not (noise_sd >= 0 and math.isfinite(noise_sd)):
        raise InvalidArgument(f"noise_sd must be finite and >= 0, got {noise_sd}")
    if layout not in ("studies", "uniform"):
        raise InvalidArgument(f"unknown layout {layout!r}")
    rng = np.random.default_rng(seed)
    columns = _draw_studies(rng, n) if layout == "studies" else _draw_uniform(rng, n)
    y = ground_truth_yield(columns)
    if noise_sd > 0:
        y = y + rng.normal(0.0, noise_sd, size=n)
    y = np.clip(y, 0.0, 100.0)
    records = tuple(
        Record(tuple(columns[spec.name][i] for spec in INPUT_SCHEMA), float(y[i]))
        for i in range(n)
    )
    return Dataset(records)
