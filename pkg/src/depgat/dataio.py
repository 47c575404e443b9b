"""Tabular dataset ingestion, encoding, splitting, and exact round-trip export.

A dataset is a CSV file plus a schema that declares each column as ``real``,
``categorical``, or ``target``. Categorical features are one-hot encoded with
levels ordered by first appearance; real features can be standardized with
statistics fit on the training split only.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MISSING_MARKERS = {"", "na", "nan", "?", "null", "none"}

REAL = "real"
CATEGORICAL = "categorical"
TARGET = "target"

CLASSIFICATION = "classification"
REGRESSION = "regression"

SPLITS = ("train", "valid", "test")


class DataError(ValueError):
    """A cell, label, or category failed validation; message is row/column addressed."""


class ConfigError(ValueError):
    """A schema, split, or configuration value is unusable."""


@dataclass
class FeatureSpec:
    """Per-feature kinds plus the column layout of the encoded matrix."""

    names: list[str]
    kinds: list[str]                      # REAL or CATEGORICAL per feature
    levels: list[list[str] | None]        # category labels, None for real features

    def __post_init__(self):
        if not (len(self.names) == len(self.kinds) == len(self.levels)):
            raise ConfigError("feature spec fields must have equal length")
        for name, kind, lv in zip(self.names, self.kinds, self.levels):
            if kind == CATEGORICAL and (lv is None or len(lv) < 2):
                raise ConfigError(f"categorical feature {name!r} needs at least 2 levels")
            if kind == REAL and lv is not None:
                raise ConfigError(f"real feature {name!r} must not carry levels")

    @property
    def n_features(self) -> int:
        return len(self.names)

    def feature_width(self, i: int) -> int:
        return 1 if self.kinds[i] == REAL else len(self.levels[i])

    @property
    def offsets(self) -> list[tuple[int, int]]:
        """Half-open [start, stop) column ranges of each feature in the encoded matrix."""
        out, start = [], 0
        for i in range(self.n_features):
            stop = start + self.feature_width(i)
            out.append((start, stop))
            start = stop
        return out

    @property
    def width(self) -> int:
        return sum(self.feature_width(i) for i in range(self.n_features))

    def to_dict(self) -> dict:
        return {"names": self.names, "kinds": self.kinds, "levels": self.levels}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(names=list(d["names"]), kinds=list(d["kinds"]),
                   levels=[None if lv is None else list(lv) for lv in d["levels"]])


@dataclass
class Dataset:
    """Encoded feature matrix, labels, split tags, and encoding metadata."""

    X: np.ndarray                               # (n, spec.width) float64
    y: np.ndarray                               # (n,) int64 class index or float64
    task: str                                   # CLASSIFICATION or REGRESSION
    n_classes: int                              # 0 for regression
    spec: FeatureSpec
    split: np.ndarray                           # (n,) strings from SPLITS
    target_levels: list[str] | None = None      # class labels in index order
    mean: np.ndarray | None = None              # standardization, identity if None
    std: np.ndarray | None = None
    extras: dict = field(default_factory=dict)  # generator sidecar payload

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"feature/label row mismatch: {self.X.shape} vs {self.y.shape}")
        if self.X.shape[1] != self.spec.width:
            raise DataError(f"encoded width {self.X.shape[1]} does not match spec width {self.spec.width}")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def rows(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == split
        return self.X[mask], self.y[mask]

    def counts(self) -> dict[str, int]:
        return {s: int((self.split == s).sum()) for s in SPLITS}


def load_schema(path) -> dict:
    with open(path, encoding="utf-8") as f:
        schema = json.load(f)
    validate_schema(schema)
    return schema


def validate_schema(schema: dict) -> None:
    cols = schema.get("columns")
    if not isinstance(cols, list) or not cols:
        raise ConfigError("schema must carry a non-empty 'columns' list")
    kinds = set()
    for c in cols:
        if not isinstance(c, dict) or "name" not in c or "kind" not in c:
            raise ConfigError(f"schema column entries need 'name' and 'kind': {c!r}")
        if c["kind"] not in (REAL, CATEGORICAL, TARGET):
            raise ConfigError(f"unknown column kind {c['kind']!r} for {c['name']!r}")
        kinds.add(c["kind"])
    if sum(1 for c in cols if c["kind"] == TARGET) != 1:
        raise ConfigError("schema must declare exactly one target column")
    task = schema.get("task", CLASSIFICATION)
    if task not in (CLASSIFICATION, REGRESSION):
        raise ConfigError(f"unknown task {task!r}")


def _is_missing(value: str) -> bool:
    return value.strip().lower() in MISSING_MARKERS


def _parse_real(value: str, row: int, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError(f"row {row}, column {name!r}: cannot parse {value!r} as real")


def load_csv(path, schema: dict, spec: FeatureSpec | None = None,
             target_levels: list[str] | None = None) -> Dataset:
    """Read a CSV into an encoded Dataset.

    When ``spec``/``target_levels`` are given (evaluation against an already
    trained model) category levels are taken as fixed and unseen values are
    rejected; otherwise levels are collected in first-seen order.
    """
    validate_schema(schema)
    task = schema.get("task", CLASSIFICATION)
    col_kind = {c["name"]: c["kind"] for c in schema["columns"]}
    feature_names = [c["name"] for c in schema["columns"] if c["kind"] != TARGET]
    target_name = next(c["name"] for c in schema["columns"] if c["kind"] == TARGET)

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        missing_cols = [n for n in col_kind if n not in header]
        if missing_cols:
            raise DataError(f"{path}: columns {missing_cols} not present in header")
        col_index = {n: header.index(n) for n in col_kind}

        raw_rows: list[list[str]] = []
        dropped = 0
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            cells = [row[col_index[n]] for n in feature_names] + [row[col_index[target_name]]]
            if any(_is_missing(c) for c in cells):
                dropped += 1
                continue
            raw_rows.append(cells)
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, dropped)
    if not raw_rows:
        raise DataError(f"{path}: no complete rows")

    fixed = spec is not None
    if fixed:
        if spec.names != feature_names:
            raise DataError(f"{path}: feature columns {feature_names} do not match spec {spec.names}")
        kinds = spec.kinds
        levels: list[list[str] | None] = [None if lv is None else list(lv) for lv in spec.levels]
    else:
        kinds = [col_kind[n] for n in feature_names]
        levels = [None if k == REAL else [] for k in kinds]

    n = len(raw_rows)
    columns: list[np.ndarray] = []
    for j, name in enumerate(feature_names):
        if kinds[j] == REAL:
            columns.append(np.array([_parse_real(r[j], i + 2, name) for i, r in enumerate(raw_rows)]))
        else:
            codes = np.empty(n, dtype=np.int64)
            lv = levels[j]
            for i, r in enumerate(raw_rows):
                val = r[j].strip()
                if val not in lv:
                    if fixed:
                        raise DataError(f"row {i + 2}, column {name!r}: unknown category {val!r}")
                    lv.append(val)
                codes[i] = lv.index(val)
            columns.append(codes)

    if not fixed:
        spec = FeatureSpec(names=feature_names, kinds=list(kinds), levels=levels)

    X = np.zeros((n, spec.width))
    for j, (start, stop) in enumerate(spec.offsets):
        if spec.kinds[j] == REAL:
            X[:, start] = columns[j]
        else:
            X[np.arange(n), start + columns[j]] = 1.0

    raw_targets = [r[-1].strip() for r in raw_rows]
    if task == REGRESSION:
        y = np.array([_parse_real(v, i + 2, target_name) for i, v in enumerate(raw_targets)])
        n_classes, tlevels = 0, None
    else:
        if target_levels is not None:
            tlevels = list(target_levels)
            for i, v in enumerate(raw_targets):
                if v not in tlevels:
                    raise DataError(f"row {i + 2}, column {target_name!r}: unknown label {v!r}")
        else:
            tlevels = []
            for v in raw_targets:
                if v not in tlevels:
                    tlevels.append(v)
        if len(tlevels) < 2:
            raise DataError(f"{path}: classification target has a single level {tlevels!r}")
        y = np.array([tlevels.index(v) for v in raw_targets], dtype=np.int64)
        n_classes = len(tlevels)

    return Dataset(X=X, y=y, task=task, n_classes=n_classes, spec=spec,
                   split=np.array(["train"] * n), target_levels=tlevels)


def split_standardize(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0,
                      counts: tuple[int, int, int] | None = None,
                      standardize: bool = True) -> Dataset:
    """Assign seeded train/valid/test tags and standardize real columns.

    Split sizes are floor(fraction * n) with the remainder going to train,
    unless explicit ``counts`` override them. Standardization statistics are
    fit on the training rows only and applied to every split.
    """
    n = ds.n_rows
    if counts is None:
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions {fractions} must sum to 1")
        n_valid = int(n * fractions[1])
        n_test = int(n * fractions[2])
        n_train = n - n_valid - n_test
    else:
        n_train, n_valid, n_test = counts
        if n_train + n_valid + n_test != n:
            raise ConfigError(f"split counts {counts} do not sum to {n} rows")
    if min(n_train, n_valid, n_test) <= 0:
        raise ConfigError(f"empty split in ({n_train}, {n_valid}, {n_test})")

    order = np.random.default_rng(seed).permutation(n)
    split = np.empty(n, dtype=object)
    split[order[:n_train]] = "train"
    split[order[n_train:n_train + n_valid]] = "valid"
    split[order[n_train + n_valid:]] = "test"
    split = split.astype(str)

    X = ds.X.copy()
    mean = np.zeros(ds.spec.width)
    std = np.ones(ds.spec.width)
    if standardize:
        train_rows = X[split == "train"]
        for j, (start, stop) in enumerate(ds.spec.offsets):
            if ds.spec.kinds[j] != REAL:
                continue
            mu = train_rows[:, start].mean()
            sigma = train_rows[:, start].std()
            if sigma < 1e-12:
                sigma = 1.0
            mean[start], std[start] = mu, sigma
            X[:, start] = (X[:, start] - mu) / sigma

    return Dataset(X=X, y=ds.y.copy(), task=ds.task, n_classes=ds.n_classes,
                   spec=ds.spec, split=split, target_levels=ds.target_levels,
                   mean=mean, std=std, extras=dict(ds.extras))


def decode_features(ds: Dataset) -> list[list[str]]:
    """Render the encoded matrix back to per-row cell strings (one-hot -> level)."""
    rows = []
    for i in range(ds.n_rows):
        cells = []
        for j, (start, stop) in enumerate(ds.spec.offsets):
            if ds.spec.kinds[j] == REAL:
                cells.append(repr(float(ds.X[i, start])))
            else:
                cells.append(ds.spec.levels[j][int(np.argmax(ds.X[i, start:stop]))])
        rows.append(cells)
    return rows


def save_dataset(ds: Dataset, csv_path, sidecar_path) -> None:
    """Write the dataset as CSV plus a JSON sidecar; round-trips exactly."""
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(ds.spec.names + ["target", "split"])
        targets = ([ds.target_levels[int(v)] for v in ds.y] if ds.task == CLASSIFICATION
                   else [repr(float(v)) for v in ds.y])
        for cells, t, s in zip(decode_features(ds), targets, ds.split):
            writer.writerow(cells + [t, s])
    sidecar = {
        "format": "depgat-dataset",
        "version": 1,
        "task": ds.task,
        "n_classes": ds.n_classes,
        "target_levels": ds.target_levels,
        "spec": ds.spec.to_dict(),
        "standardization": None if ds.mean is None else
            {"mean": ds.mean.tolist(), "std": ds.std.tolist()},
        "extras": ds.extras,
    }
    with open(sidecar_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_dataset(csv_path, sidecar_path) -> Dataset:
    """Reload a dataset written by :func:`save_dataset` without re-encoding decisions."""
    with open(sidecar_path, encoding="utf-8") as f:
        sidecar = json.load(f)
    if sidecar.get("format") != "depgat-dataset":
        raise ConfigError(f"{sidecar_path}: not a dataset sidecar")
    spec = FeatureSpec.from_dict(sidecar["spec"])
    task = sidecar["task"]
    tlevels = sidecar["target_levels"]

    with open(csv_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        expected = spec.names + ["target", "split"]
        if header != expected:
            raise DataError(f"{csv_path}: header {header} does not match sidecar {expected}")
        rows = [r for r in reader if r]

    n = len(rows)
    X = np.zeros((n, spec.width))
    for j, (start, stop) in enumerate(spec.offsets):
        if spec.kinds[j] == REAL:
            X[:, start] = [float(r[j]) for r in rows]
        else:
            lv = spec.levels[j]
            for i, r in enumerate(rows):
                X[i, start + lv.index(r[j])] = 1.0
    if task == CLASSIFICATION:
        y = np.array([tlevels.index(r[-2]) for r in rows], dtype=np.int64)
    else:
        y = np.array([float(r[-2]) for r in rows])
    split = np.array([r[-1] for r in rows])

    norm = sidecar.get("standardization")
    mean = None if norm is None else np.array(norm["mean"])
    std = None if norm is None else np.array(norm["std"])
    return Dataset(X=X, y=y, task=task, n_classes=sidecar["n_classes"], spec=spec,
                   split=split, target_levels=tlevels, mean=mean, std=std,
                   extras=sidecar.get("extras", {}))
