"""Datasets with per-column privacy metadata.

Bounds and category lists are treated as public knowledge supplied by the
analyst; nothing in this module derives them from the data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Raised for malformed data, metadata or out-of-range arguments."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind == CONTINUOUS:
            if self.lower is None or self.upper is None:
                raise DataError(f"column {self.name!r}: continuous column needs lower and upper bounds")
            if not self.lower < self.upper:
                raise DataError(f"column {self.name!r}: lower must be < upper, got [{self.lower}, {self.upper}]")
            if self.categories is not None:
                raise DataError(f"column {self.name!r}: continuous column cannot have categories")
            object.__setattr__(self, "lower", float(self.lower))
            object.__setattr__(self, "upper", float(self.upper))
        elif self.kind == CATEGORICAL:
            if not self.categories:
                raise DataError(f"column {self.name!r}: categorical column needs a nonempty category list")
            cats = tuple(str(c) for c in self.categories)
            if len(set(cats)) != len(cats):
                raise DataError(f"column {self.name!r}: duplicate categories")
            if self.lower is not None or self.upper is not None:
                raise DataError(f"column {self.name!r}: categorical column cannot have bounds")
            object.__setattr__(self, "categories", cats)
        else:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS

    def check(self, value: Any) -> str | None:
        """Return a violation message for ``value``, or None if it conforms."""
        if self.is_continuous:
            if not isinstance(value, float) or not np.isfinite(value):
                return f"column {self.name!r}: expected a finite real, got {value!r}"
            return None
        if value not in self.categories:
            return f"column {self.name!r}: unknown category {value!r}"
        return None

    def to_dict(self) -> dict[str, Any]:
        if self.is_continuous:
            return {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}
        return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}


@dataclass(frozen=True)
class Dataset:
    """Immutable row-major table.

    Continuous cells are Python floats, categorical cells are strings.
    Column arrays are materialized lazily and cached; they are read-only.
    """

    columns: tuple[ColumnMeta, ...]
    rows: tuple[tuple, ...]
    target: str | None = None
    _by_name: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        object.__setattr__(self, "_by_name", {n: i for i, n in enumerate(names)})
        if self.target is not None and self.target not in self._by_name:
            raise DataError(f"target {self.target!r} is not a column")
        violations = self.violations()
        if violations:
            raise DataError(violations[0])

    @property
    def size(self) -> int:
        return len(self.rows)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def meta(self, name: str) -> ColumnMeta:
        try:
            return self.columns[self._by_name[name]]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def violations(self) -> list[str]:
        """Every metadata violation in the table; empty for a valid dataset."""
        out = []
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                out.append(f"row {i}: expected {width} values, got {len(row)}")
                continue
            for meta, value in zip(self.columns, row):
                msg = meta.check(value)
                if msg:
                    out.append(f"row {i}: {msg}")
        return out

    @cached_property
    def _arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for j, meta in enumerate(self.columns):
            dtype = float if meta.is_continuous else object
            a = np.array([row[j] for row in self.rows], dtype=dtype)
            a.setflags(write=False)
            arrays[meta.name] = a
        return arrays

    def column(self, name: str) -> np.ndarray:
        self.meta(name)
        return self._arrays[name]

    def with_rows(self, rows: Sequence[tuple]) -> Dataset:
        return Dataset(self.columns, tuple(rows), self.target)

    def take(self, indices: Sequence[int]) -> Dataset:
        """Rows at ``indices``; skips re-validation since every row is already valid.

        Column arrays are sliced from this dataset's, so a subsample never pays
        for materializing them inside a measured section.
        """
        idx = np.asarray(indices, dtype=np.intp)
        out = object.__new__(Dataset)
        object.__setattr__(out, "columns", self.columns)
        object.__setattr__(out, "rows", tuple(self.rows[i] for i in idx))
        object.__setattr__(out, "target", self.target)
        object.__setattr__(out, "_by_name", self._by_name)
        arrays = {}
        for name, a in self._arrays.items():
            sub = a[idx]
            sub.setflags(write=False)
            arrays[name] = sub
        out.__dict__["_arrays"] = arrays
        return out


def _coerce(meta: ColumnMeta, raw: str, row_no: int) -> Any:
    if meta.is_continuous:
        try:
            value = float(raw)
        except ValueError:
            raise DataError(f"row {row_no}, column {meta.name!r}: cannot parse {raw!r} as a real") from None
        if not np.isfinite(value):
            raise DataError(f"row {row_no}, column {meta.name!r}: non-finite value {raw!r}")
        return value
    if raw not in meta.categories:
        raise DataError(f"row {row_no}, column {meta.name!r}: unknown category {raw!r}")
    return raw


def load_csv(path: str | Path, meta: Sequence[ColumnMeta], target: str | None = None) -> Dataset:
    """Read a headed CSV file whose header names match ``meta`` exactly.

    Row numbers in error messages count data rows from 1 (the header is row 0).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = [m.name for m in meta]
        missing = [n for n in expected if n not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        extra = [h for h in header if h not in expected]
        if extra:
            raise DataError(f"{path}: unexpected column(s) {extra}")
        order = [header.index(n) for n in expected]
        rows = []
        for row_no, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} fields, got {len(raw)}")
            rows.append(tuple(_coerce(m, raw[k].strip(), row_no) for m, k in zip(meta, order)))
    return Dataset(tuple(meta), tuple(rows), target)


def write_csv(d: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(d.names)
        for row in d.rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def parse_meta(doc: dict[str, Any]) -> tuple[list[ColumnMeta], str | None]:
    """Validate a metadata document and build column metadata.

    Schema::

        {"columns": [{"name": str, "kind": "continuous", "lower": num, "upper": num}
                     | {"name": str, "kind": "categorical", "categories": [str, ...]}],
         "target": str (optional)}
    """
    if not isinstance(doc, dict):
        raise DataError("metadata must be an object")
    unknown = set(doc) - {"columns", "target"}
    if unknown:
        raise DataError(f"metadata: unknown field(s) {sorted(unknown)}")
    cols = doc.get("columns")
    if not isinstance(cols, list) or not cols:
        raise DataError("metadata: 'columns' must be a nonempty list")
    metas = []
    for i, c in enumerate(cols):
        if not isinstance(c, dict):
            raise DataError(f"metadata: column {i} must be an object")
        allowed = {"name", "kind", "lower", "upper", "categories"}
        bad = set(c) - allowed
        if bad:
            raise DataError(f"metadata: column {i}: unknown field(s) {sorted(bad)}")
        if not isinstance(c.get("name"), str):
            raise DataError(f"metadata: column {i}: 'name' must be a string")
        cats = c.get("categories")
        if cats is not None and not isinstance(cats, list):
            raise DataError(f"metadata: column {c['name']!r}: 'categories' must be a list")
        for key in ("lower", "upper"):
            if key in c and not isinstance(c[key], (int, float)):
                raise DataError(f"metadata: column {c['name']!r}: {key!r} must be a number")
        metas.append(
            ColumnMeta(
                name=c["name"],
                kind=c.get("kind", ""),
                lower=c.get("lower"),
                upper=c.get("upper"),
                categories=tuple(cats) if cats is not None else None,
            )
        )
    target = doc.get("target")
    if target is not None and target not in {m.name for m in metas}:
        raise DataError(f"metadata: target {target!r} is not a declared column")
    return metas, target


def load_meta(path: str | Path) -> tuple[list[ColumnMeta], str | None]:
    with Path(path).open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    return parse_meta(doc)


def dump_meta(d: Dataset, path: str | Path) -> None:
    doc: dict[str, Any] = {"columns": [c.to_dict() for c in d.columns]}
    if d.target is not None:
        doc["target"] = d.target
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def subsample(d: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample of ``n`` rows without replacement; row order follows the original."""
    if not 1 <= n <= d.size:
        raise DataError(f"subsample size {n} outside [1, {d.size}]")
    rng = np.random.default_rng(seed)
    return d.take(np.sort(rng.choice(d.size, size=n, replace=False)))


def split(d: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * d.size))
    perm = np.random.default_rng(seed).permutation(d.size)
    train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return d.take(train_idx), d.take(test_idx)


def neighbor(d: Dataset, mode: str, payload: int | Sequence[Any]) -> Dataset:
    """Dataset at add/remove-one distance from ``d``.

    ``remove`` drops the row at index ``payload``; ``add`` appends ``payload``.
    """
    if mode == "remove":
        if not isinstance(payload, (int, np.integer)) or not 0 <= payload < d.size:
            raise DataError(f"invalid row index {payload!r} for dataset of size {d.size}")
        return d.with_rows(d.rows[:payload] + d.rows[payload + 1 :])
    if mode == "add":
        row = tuple(payload)
        if len(row) != len(d.columns):
            raise DataError(f"row has {len(row)} values, expected {len(d.columns)}")
        row = tuple(float(v) if m.is_continuous and isinstance(v, (int, np.number)) else v
                    for m, v in zip(d.columns, row))
        for m, v in zip(d.columns, row):
            msg = m.check(v)
            if msg:
                raise DataError(f"invalid row: {msg}")
        return d.with_rows(d.rows + (row,))
    raise DataError(f"unknown neighbor mode {mode!r}")


def synth_regression(
    n: int,
    d: int,
    weights: Sequence[float],
    noise_std: float,
    seed: int,
    bias: float = 0.0,
) -> Dataset:
    """Linear-regression table: features ``x0..x{d-1}`` uniform on [-1, 1], target ``y``.

    ``y = w.x + bias + N(0, noise_std^2)``. The target is declared on
    ``bias -/+ (sum|w| + 6 noise_std)``; the rare draw beyond 6 sigma is
    clipped to that range so the table satisfies its own metadata.
    """
    if n < 1 or d < 1:
        raise DataError("n and d must be positive")
    w = np.asarray(weights, dtype=float)
    if w.shape != (d,):
        raise DataError(f"expected {d} weights, got {w.size}")
    if noise_std < 0:
        raise DataError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, d))
    y = x @ w + bias
    if noise_std > 0:
        y = y + rng.normal(0.0, noise_std, size=n)
    half = float(np.abs(w).sum() + 6.0 * noise_std)
    if half == 0.0:
        half = 1.0
    y = np.clip(y, bias - half, bias + half)
    cols = tuple(ColumnMeta(f"x{j}", CONTINUOUS, -1.0, 1.0) for j in range(d)) + (
        ColumnMeta("y", CONTINUOUS, bias - half, bias + half),
    )
    rows = tuple(tuple(float(v) for v in r) for r in np.column_stack([x, y]))
    return Dataset(cols, rows, target="y")


def with_categorical(d: Dataset, name: str, categories: Sequence[str], seed: int,
                     probs: Sequence[float] | None = None) -> Dataset:
    """Append a categorical column drawn i.i.d. from ``categories``."""
    meta = ColumnMeta(name, CATEGORICAL, categories=tuple(categories))
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(meta.categories), size=d.size, p=probs)
    rows = tuple(r + (meta.categories[k],) for r, k in zip(d.rows, labels))
    return Dataset(d.columns + (meta,), rows, d.target)


def features_and_target(d: Dataset) -> tuple[list[str], str]:
    """Names of the continuous feature columns and of the target column."""
    if d.target is None:
        raise DataError("dataset has no target column")
    if not d.meta(d.target).is_continuous:
        raise DataError(f"target {d.target!r} must be continuous")
    feats = [c.name for c in d.columns if c.is_continuous and c.name != d.target]
    if not feats:
        raise DataError("dataset has no continuous feature columns")
    return feats, d.target
