"""Weighted dataset loading, synthesis, splitting, and submission files.

Datasets carry per-example importance weights that encode expected event
counts, so any subsetting operation that should preserve significance
estimates must rescale weights class by class; ``split`` does this when
asked.  Missing feature values are represented as NaN in memory and as the
literal -999.0 in CSV files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "MISSING_VALUE",
    "WeightedDataset",
    "CsvSchema",
    "SplitSpec",
    "SynthConfig",
    "load_csv",
    "write_csv",
    "split",
    "synthesize",
    "default_synth_config",
    "write_submission",
    "read_submission",
]

# sentinel used by the CSV interchange format for absent feature values
MISSING_VALUE = -999.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeightedDataset:
    """Immutable weighted binary-classification dataset.

    Attributes:
        features: (n, d) float array; NaN marks a missing value.
        labels: (n,) int array with values in {-1, +1}.
        weights: (n,) positive float array.
        event_ids: (n,) unique int array.
        column_names: d feature-column names.
    """

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    event_ids: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self) -> None:
        features = _frozen(np.ascontiguousarray(self.features, dtype=float))
        labels = _frozen(np.ascontiguousarray(self.labels, dtype=np.int64))
        weights = _frozen(np.ascontiguousarray(self.weights, dtype=float))
        event_ids = _frozen(np.ascontiguousarray(self.event_ids, dtype=np.int64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "event_ids", event_ids)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        n = features.shape[0] if features.ndim == 2 else -1
        if features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if features.shape[1] != len(self.column_names):
            raise DataError(
                f"{features.shape[1]} feature columns but "
                f"{len(self.column_names)} column names"
            )
        for name, arr in (
            ("labels", labels),
            ("weights", weights),
            ("event_ids", event_ids),
        ):
            if arr.shape != (n,):
                raise DataError(f"{name} must have shape ({n},), got {arr.shape}")
        if not np.all(np.isin(labels, (-1, 1))):
            raise DataError("labels must take values in {-1, +1}")
        if not np.all(weights > 0.0):
            raise DataError("all weights must be strictly positive")
        if np.unique(event_ids).size != n:
            raise DataError("event ids must be unique")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def signal_total(self) -> float:
        return float(self.weights[self.labels == 1].sum())

    @property
    def background_total(self) -> float:
        return float(self.weights[self.labels == -1].sum())

    def take(self, indices: np.ndarray, weights: Optional[np.ndarray] = None) -> "WeightedDataset":
        """Row subset (optionally with replacement weights), new dataset."""
        return WeightedDataset(
            features=self.features[indices].copy(),
            labels=self.labels[indices].copy(),
            weights=(self.weights[indices] if weights is None else weights).copy(),
            event_ids=self.event_ids[indices].copy(),
            column_names=self.column_names,
        )


@dataclass(frozen=True)
class CsvSchema:
    """Column-role mapping for the CSV interchange format."""

    id_column: str = "EventId"
    weight_column: str = "Weight"
    label_column: str = "Label"
    feature_columns: Optional[tuple[str, ...]] = None  # None: all other columns


@dataclass(frozen=True)
class SplitSpec:
    """Parameters of a stratified train/validation split."""

    validation_fraction: float
    seed: int
    renormalize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction!r}"
            )


@dataclass(frozen=True)
class SynthConfig:
    """Two-Gaussian synthetic dataset parameters.

    Classes are unit-covariance Gaussians in d dimensions whose means are
    ``separation`` apart along the first axis.  Per-class weights are
    constant and sum to the configured class totals.
    """

    d: int = 5
    n_signal: int = 2000
    n_background: int = 2000
    separation: float = 2.0
    signal_total: float = 691.0
    background_total: float = 410999.0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d!r}")
        if self.n_signal < 1 or self.n_background < 1:
            raise ConfigError("per-class counts must be >= 1")
        if self.separation < 0.0:
            raise ConfigError(f"separation must be >= 0, got {self.separation!r}")
        if self.signal_total <= 0.0 or self.background_total <= 0.0:
            raise ConfigError("class weight totals must be > 0")


def default_synth_config() -> SynthConfig:
    """Desk-scale stand-in for the challenge data (weight totals included)."""
    return SynthConfig()


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"line {line_no}: cannot parse {column}={text!r} as a number"
        ) from None


def load_csv(path: str, schema: CsvSchema = CsvSchema()) -> WeightedDataset:
    """Parse a weighted dataset from CSV.

    Labels must be exactly 's' (mapped to +1) or 'b' (mapped to -1).  A
    feature cell equal to -999.0 becomes NaN.  Row order is preserved.
    Line numbers in error messages count the header as line 1.
    """
    try:
        handle = open(path, "r", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path!r}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path!r} is empty; expected a header row") from None
        positions = {name: i for i, name in enumerate(header)}
        if len(positions) != len(header):
            raise DataError(f"{path!r} has duplicate column names")
        for role, name in (
            ("id", schema.id_column),
            ("weight", schema.weight_column),
            ("label", schema.label_column),
        ):
            if name not in positions:
                raise DataError(f"{path!r} is missing the {role} column {name!r}")
        if schema.feature_columns is None:
            reserved = {schema.id_column, schema.weight_column, schema.label_column}
            feature_names = tuple(c for c in header if c not in reserved)
        else:
            feature_names = tuple(schema.feature_columns)
            for name in feature_names:
                if name not in positions:
                    raise DataError(f"{path!r} is missing the feature column {name!r}")
        if not feature_names:
            raise DataError(f"{path!r} has no feature columns")

        id_pos = positions[schema.id_column]
        w_pos = positions[schema.weight_column]
        y_pos = positions[schema.label_column]
        f_pos = [positions[name] for name in feature_names]

        ids: list[int] = []
        weights: list[float] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                ids.append(int(row[id_pos]))
            except ValueError:
                raise DataError(
                    f"line {line_no}: cannot parse event id {row[id_pos]!r}"
                ) from None
            w = _parse_float(row[w_pos], line_no, schema.weight_column)
            if w <= 0.0:
                raise DataError(f"line {line_no}: weight must be > 0, got {w!r}")
            weights.append(w)
            label_text = row[y_pos]
            if label_text == "s":
                labels.append(1)
            elif label_text == "b":
                labels.append(-1)
            else:
                raise DataError(
                    f"line {line_no}: label must be 's' or 'b', got {label_text!r}"
                )
            values = [
                _parse_float(row[pos], line_no, feature_names[j])
                for j, pos in enumerate(f_pos)
            ]
            rows.append(
                [math.nan if v == MISSING_VALUE else v for v in values]
            )

    if not rows:
        raise DataError(f"{path!r} contains no data rows")
    return WeightedDataset(
        features=np.asarray(rows, dtype=float),
        labels=np.asarray(labels, dtype=np.int64),
        weights=np.asarray(weights, dtype=float),
        event_ids=np.asarray(ids, dtype=np.int64),
        column_names=feature_names,
    )


def _format_number(x: float) -> str:
    # shortest decimal that round-trips, without float noise in files
    return repr(float(x))


def write_csv(dataset: WeightedDataset, path: str, schema: CsvSchema = CsvSchema()) -> None:
    """Write a dataset in the CSV interchange format (NaN becomes -999.0)."""
    feature_names = dataset.column_names
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [schema.id_column, *feature_names, schema.weight_column, schema.label_column]
        )
        for i in range(dataset.n):
            row = [str(int(dataset.event_ids[i]))]
            for v in dataset.features[i]:
                row.append(_format_number(MISSING_VALUE if math.isnan(v) else v))
            row.append(_format_number(dataset.weights[i]))
            row.append("s" if dataset.labels[i] == 1 else "b")
            writer.writerow(row)


def split(dataset: WeightedDataset, spec: SplitSpec) -> tuple[WeightedDataset, WeightedDataset]:
    """Stratified train/validation split, deterministic in ``spec.seed``.

    Both classes appear on both sides (the per-class validation count is
    clamped to [1, class size - 1]).  With ``renormalize`` set, each side's
    weights are scaled per class so its class totals match the full
    dataset's, keeping significance estimates unbiased.
    """
    labels = dataset.labels
    rng = np.random.default_rng(spec.seed)
    val_mask = np.zeros(dataset.n, dtype=bool)
    for cls in (1, -1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise DataError(
                f"need at least 2 examples of class {cls:+d} to split, got {idx.size}"
            )
        n_val = int(round(spec.validation_fraction * idx.size))
        n_val = min(max(n_val, 1), idx.size - 1)
        chosen = rng.permutation(idx)[:n_val]
        val_mask[chosen] = True

    full_totals = {1: dataset.signal_total, -1: dataset.background_total}
    parts = []
    for mask in (~val_mask, val_mask):
        indices = np.flatnonzero(mask)
        part_weights = dataset.weights[indices].copy()
        if spec.renormalize:
            part_labels = labels[indices]
            for cls in (1, -1):
                cls_mask = part_labels == cls
                part_total = part_weights[cls_mask].sum()
                part_weights[cls_mask] *= full_totals[cls] / part_total
        parts.append(dataset.take(indices, weights=part_weights))
    return parts[0], parts[1]


def synthesize(config: SynthConfig, seed: int) -> WeightedDataset:
    """Generate the two-Gaussian synthetic dataset, deterministic in seed."""
    rng = np.random.default_rng(seed)
    half = config.separation / 2.0
    mean_s = np.zeros(config.d)
    mean_s[0] = half
    mean_b = np.zeros(config.d)
    mean_b[0] = -half
    x_s = rng.standard_normal((config.n_signal, config.d)) + mean_s
    x_b = rng.standard_normal((config.n_background, config.d)) + mean_b
    features = np.vstack([x_s, x_b])
    labels = np.concatenate(
        [np.ones(config.n_signal, dtype=np.int64), -np.ones(config.n_background, dtype=np.int64)]
    )
    weights = np.concatenate(
        [
            np.full(config.n_signal, config.signal_total / config.n_signal),
            np.full(config.n_background, config.background_total / config.n_background),
        ]
    )
    order = rng.permutation(features.shape[0])
    return WeightedDataset(
        features=features[order],
        labels=labels[order],
        weights=weights[order],
        event_ids=np.arange(features.shape[0], dtype=np.int64),
        column_names=tuple(f"x{j}" for j in range(config.d)),
    )


def _submission_order(event_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    # ascending score; equal scores resolved by lower event id first
    return np.lexsort((event_ids, scores))


def write_submission(
    path: str,
    event_ids: Sequence[int],
    scores: Sequence[float],
    selected: Sequence[int],
) -> None:
    """Write the ranked selection file: EventId,RankOrder,Class.

    RankOrder runs 1..n by ascending score with ties broken toward the
    lower event id; Class is 's' for selected (+1) events, else 'b'.
    """
    ids = np.asarray(event_ids, dtype=np.int64)
    sc = np.asarray(scores, dtype=float)
    sel = np.asarray(selected, dtype=np.int64)
    if not (ids.shape == sc.shape == sel.shape) or ids.ndim != 1:
        raise DataError("event_ids, scores, and selected must be equal-length 1-D")
    if np.unique(ids).size != ids.size:
        raise DataError("duplicate event ids in submission")
    if not np.all(np.isfinite(sc)):
        raise DataError("submission scores must be finite")
    if not np.all(np.isin(sel, (-1, 1))):
        raise DataError("selected must take values in {-1, +1}")
    ranks = np.empty(ids.size, dtype=np.int64)
    ranks[_submission_order(ids, sc)] = np.arange(1, ids.size + 1)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["EventId", "RankOrder", "Class"])
        for i in range(ids.size):
            writer.writerow(
                [str(int(ids[i])), str(int(ranks[i])), "s" if sel[i] == 1 else "b"]
            )


def read_submission(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a submission file back into (event_ids, ranks, selected)."""
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["EventId", "RankOrder", "Class"]:
            raise DataError(f"{path!r} is not a submission file (bad header)")
        ids, ranks, sel = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"line {line_no}: expected 3 fields, got {len(row)}")
            ids.append(int(row[0]))
            ranks.append(int(row[1]))
            if row[2] not in ("s", "b"):
                raise DataError(f"line {line_no}: class must be 's' or 'b'")
            sel.append(1 if row[2] == "s" else -1)
    return (
        np.asarray(ids, dtype=np.int64),
        np.asarray(ranks, dtype=np.int64),
        np.asarray(sel, dtype=np.int64),
    )
