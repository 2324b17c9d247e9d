"""Tabular survival data: CSV ingestion, the (features, time, event)
triplet, and seeded train/validation partitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .binning import CATEGORICAL, CONTINUOUS

MISSING_TOKENS = {"", "na", "nan"}

_TRUE_TOKENS = {"1", "true"}
_FALSE_TOKENS = {"0", "false"}


@dataclass(frozen=True)
class ColumnSchema:
    """Column roles for :func:`load_csv`.

    ``feature_cols`` defaults to every column that is neither the time nor
    the event column.  Columns named in ``categorical`` are treated as
    categorical; the rest are continuous if every non-missing cell parses
    as a number, categorical otherwise.
    """

    time_col: str
    event_col: str
    categorical: tuple[str, ...] = ()
    feature_cols: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable feature matrix plus observed time and event indicator.

    Continuous feature columns are float arrays with NaN for missing;
    categorical columns are object arrays with None for missing.
    """

    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    columns: tuple[np.ndarray, ...]
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        n = self.time.shape[0]
        if self.event.shape[0] != n:
            raise ValueError("time and event lengths differ")
        for name, col in zip(self.feature_names, self.columns):
            if col.shape[0] != n:
                raise ValueError(f"feature column {name!r} has wrong length")
        if len(self.feature_names) != len(self.columns) or len(
            self.feature_names
        ) != len(self.feature_kinds):
            raise ValueError("feature name/kind/column counts differ")
        if n and np.any(self.time < 0):
            raise ValueError("observed times must be nonnegative")
        # loaders/generators enforce >=1 event; subsets (e.g. validation
        # partitions) may legitimately contain none

    @property
    def n_samples(self) -> int:
        return self.time.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def subset(self, indices) -> "SurvivalDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return SurvivalDataset(
            feature_names=self.feature_names,
            feature_kinds=self.feature_kinds,
            columns=tuple(col[idx] for col in self.columns),
            time=self.time[idx],
            event=self.event[idx],
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray


def _is_missing_token(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def _parse_continuous(raw: np.ndarray, name: str) -> np.ndarray:
    out = np.empty(raw.shape[0], dtype=float)
    for i, cell in enumerate(raw):
        if _is_missing_token(cell):
            out[i] = np.nan
            continue
        try:
            out[i] = float(cell)
        except ValueError:
            raise ValueError(
                f"column {name!r}: non-numeric entry {cell!r} at row {i}"
            ) from None
    return out


def _parse_categorical(raw: np.ndarray) -> np.ndarray:
    out = np.empty(raw.shape[0], dtype=object)
    for i, cell in enumerate(raw):
        out[i] = None if _is_missing_token(cell) else cell.strip()
    return out


def _column_is_numeric(raw: np.ndarray) -> bool:
    saw_value = False
    for cell in raw:
        if _is_missing_token(cell):
            continue
        saw_value = True
        try:
            float(cell)
        except ValueError:
            return False
    return saw_value


def load_csv(path, schema: ColumnSchema) -> SurvivalDataset:
    """Read a survival dataset from a headered CSV file.

    Missing feature cells (empty or NA tokens) are kept as missing; missing
    time or event cells are an error, as are negative times, event codes
    outside {0, 1, true, false}, and files with zero events.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    for col in (schema.time_col, schema.event_col):
        if col not in df.columns:
            raise ValueError(f"column {col!r} not found in {path}")
    feature_cols = schema.feature_cols
    if feature_cols is None:
        feature_cols = tuple(
            c for c in df.columns if c not in (schema.time_col, schema.event_col)
        )
    if not feature_cols:
        raise ValueError("schema names no feature columns")
    for col in feature_cols:
        if col not in df.columns:
            raise ValueError(f"feature column {col!r} not found in {path}")

    time_raw = df[schema.time_col].to_numpy(dtype=str)
    for i, cell in enumerate(time_raw):
        if _is_missing_token(cell):
            raise ValueError(f"time column has a missing entry at row {i}")
    time = _parse_continuous(time_raw, schema.time_col)
    if np.any(time < 0):
        raise ValueError("time column contains negative entries")

    event = np.empty(len(df), dtype=bool)
    for i, cell in enumerate(df[schema.event_col].to_numpy(dtype=str)):
        tok = cell.strip().lower()
        if tok in _TRUE_TOKENS:
            event[i] = True
        elif tok in _FALSE_TOKENS:
            event[i] = False
        else:
            raise ValueError(
                f"event column value {cell!r} at row {i} is not in {{0,1,true,false}}"
            )
    if len(df) and not event.any():
        raise ValueError("dataset contains no observed events")

    kinds = []
    columns = []
    for col in feature_cols:
        raw = df[col].to_numpy(dtype=str)
        if col in schema.categorical:
            kinds.append(CATEGORICAL)
            columns.append(_parse_categorical(raw))
        elif _column_is_numeric(raw):
            kinds.append(CONTINUOUS)
            columns.append(_parse_continuous(raw, col))
        else:
            kinds.append(CATEGORICAL)
            columns.append(_parse_categorical(raw))

    return SurvivalDataset(
        feature_names=tuple(feature_cols),
        feature_kinds=tuple(kinds),
        columns=tuple(columns),
        time=time,
        event=event,
    )


def save_csv(ds: SurvivalDataset, path, time_col: str = "time", event_col: str = "event"):
    """Write a dataset back to CSV; finite reals round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = list(ds.feature_names) + [time_col, event_col]
        fh.write(",".join(header) + "\n")
        for i in range(ds.n_samples):
            cells = []
            for kind, col in zip(ds.feature_kinds, ds.columns):
                v = col[i]
                if kind == CONTINUOUS:
                    cells.append("" if math.isnan(v) else repr(float(v)))
                else:
                    cells.append("" if v is None else str(v))
            cells.append(repr(float(ds.time[i])))
            cells.append("1" if ds.event[i] else "0")
            fh.write(",".join(cells) + "\n")


def split(ds: SurvivalDataset, val_fraction: float, seed: int) -> SplitIndices:
    """Seeded disjoint train/validation partition of all row indices.

    Validation gets floor(n * val_fraction) rows; the permutation depends
    only on (n, val_fraction, seed).
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    n = ds.n_samples
    n_val = int(math.floor(n * val_fraction))
    if n_val < 1:
        raise ValueError("validation split would be empty")
    perm = np.random.default_rng(seed).permutation(n)
    validation = np.sort(perm[:n_val])
    train = np.sort(perm[n_val:])
    if not ds.event[train].any():
        raise ValueError("split leaves zero events in the training partition")
    return SplitIndices(train=train, validation=validation)
