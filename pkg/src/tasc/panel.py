"""Panel-data model: ingestion, centering, splitting, permutation, stacking.

A panel is an N x T outcome matrix whose first row is the treated target unit
and whose remaining rows are untreated donor units.  The first ``t0`` columns
are pre-intervention; everything after is post-intervention.  The target's
post-intervention cells may be missing (NaN) or treatment-contaminated, in
which case ``target_post_missing`` is set and no estimator in this package
reads them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .errors import ConfigError, ParseError

__all__ = [
    "PanelData",
    "CenteredPanel",
    "load_csv",
    "save_csv",
    "mean_center",
    "split",
    "permute_columns",
    "stack_multivariate",
    "panel_metadata",
    "save_metadata",
    "load_metadata",
]


@dataclass(frozen=True)
class PanelData:
    """Immutable N x T outcome panel with the target unit in row 0.

    ``t0`` counts the pre-intervention columns, so columns ``0..t0-1`` are
    pre-intervention and ``t0..T-1`` are post-intervention.
    """

    values: np.ndarray
    t0: int
    unit_labels: tuple[str, ...]
    time_labels: tuple[str, ...]
    target_post_missing: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ConfigError("panel values must be a 2-D matrix")
        n, t = values.shape
        if n < 2:
            raise ConfigError(f"need at least 1 donor (got {n} rows)")
        if t < 2:
            raise ConfigError(f"need at least 2 time periods (got {t})")
        if not 1 <= self.t0 < t:
            raise ConfigError(f"t0 must satisfy 1 <= t0 < T, got t0={self.t0}, T={t}")
        if len(self.unit_labels) != n:
            raise ConfigError("unit_labels length does not match row count")
        if len(self.time_labels) != t:
            raise ConfigError("time_labels length does not match column count")
        if not np.all(np.isfinite(values[1:])):
            raise ConfigError("donor rows must be entirely finite")
        if not np.all(np.isfinite(values[0, : self.t0])):
            raise ConfigError("target pre-intervention values must be finite")
        if not self.target_post_missing and not np.all(np.isfinite(values[0, self.t0 :])):
            raise ConfigError(
                "target post-intervention values are non-finite; "
                "set target_post_missing=True to mark them as missing"
            )

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_donors(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def target(self) -> np.ndarray:
        return self.values[0]

    @property
    def donors(self) -> np.ndarray:
        return self.values[1:]

    def with_values(self, values: np.ndarray, target_post_missing: bool | None = None) -> "PanelData":
        """Copy of this panel with replaced outcome matrix (same shape)."""
        flag = self.target_post_missing if target_post_missing is None else target_post_missing
        return PanelData(values, self.t0, self.unit_labels, self.time_labels, flag)


@dataclass(frozen=True)
class CenteredPanel:
    """A panel with a per-period mean trajectory subtracted from every row.

    ``uncenter`` returns the exact source panel (kept by reference, so the
    round trip is bitwise).
    """

    panel: PanelData
    mean_trajectory: np.ndarray
    source: PanelData = field(repr=False, compare=False, default=None)

    def uncenter(self) -> PanelData:
        if self.source is not None:
            return self.source
        return self.panel.with_values(self.panel.values + self.mean_trajectory)


def _default_labels(prefix: str, count: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(count))


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r} at row {row}, column {col}", row=row) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite cell {text!r} at row {row}, column {col}", row=row)
    return value


def load_csv(
    source: str | Path | IO[str] | IO[bytes] | bytes,
    t0: int,
    has_header: bool = True,
    target_row: int = 0,
) -> PanelData:
    """Read a panel from CSV (rows = units, columns = time periods).

    With ``has_header`` the first row carries time labels (its first cell is a
    corner label) and the first column carries unit labels; without it the file
    is a bare numeric matrix and labels are generated.  ``target_row`` is the
    0-based position of the target among the data rows; it is moved to row 0.
    Empty cells are allowed only in the target's post-intervention columns and
    set ``target_post_missing``.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as handle:
            rows = list(csv.reader(handle))
    else:
        data = source.read() if hasattr(source, "read") else source
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        rows = list(csv.reader(io.StringIO(data)))

    rows = [row for row in rows if row]
    if not rows:
        raise ParseError("empty CSV input", row=0)

    time_labels: tuple[str, ...] | None = None
    if has_header:
        header = rows.pop(0)
        time_labels = tuple(label.strip() for label in header[1:])

    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"ragged row: expected {width} cells, found {len(row)}", row=i)

    unit_labels: list[str] = []
    numeric_rows: list[list[str]] = []
    for row in rows:
        if has_header:
            unit_labels.append(row[0].strip())
            numeric_rows.append(row[1:])
        else:
            numeric_rows.append(row)

    n = len(numeric_rows)
    t = len(numeric_rows[0])
    if not 0 <= target_row < n:
        raise ConfigError(f"target_row {target_row} out of range for {n} units")
    if not 1 <= t0 < t:
        raise ConfigError(f"t0={t0} out of range for {t} time periods")

    values = np.empty((n, t))
    missing = np.zeros((n, t), dtype=bool)
    for i, row in enumerate(numeric_rows):
        for j, cell in enumerate(row):
            text = cell.strip()
            if text == "":
                missing[i, j] = True
                values[i, j] = np.nan
            else:
                values[i, j] = _parse_cell(text, i, j)

    target_post_missing = False
    if missing.any():
        allowed = np.zeros_like(missing)
        allowed[target_row, t0:] = True
        if np.any(missing & ~allowed):
            i, j = np.argwhere(missing & ~allowed)[0]
            raise ParseError(f"empty cell at row {i}, column {j} outside target post period", row=int(i))
        target_post_missing = True

    order = [target_row] + [i for i in range(n) if i != target_row]
    values = values[order]
    if not unit_labels:
        unit_labels = list(_default_labels("unit", n))
    else:
        unit_labels = [unit_labels[i] for i in order]
    if time_labels is None:
        time_labels = _default_labels("t", t)

    return PanelData(values, t0, tuple(unit_labels), time_labels, target_post_missing)


def save_csv(panel: PanelData, dest: str | Path | IO[str]) -> None:
    """Write a panel as CSV with unit/time labels; NaN cells become empty.

    Values are printed with shortest round-trip precision, so reading the file
    back reproduces them exactly.
    """

    def _write(handle: IO[str]) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["unit"] + list(panel.time_labels))
        for label, row in zip(panel.unit_labels, panel.values):
            cells = ["" if not np.isfinite(v) else repr(float(v)) for v in row]
            writer.writerow([label] + cells)

    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as handle:
            _write(handle)
    else:
        _write(dest)


def panel_metadata(panel: PanelData) -> dict:
    """JSON-ready sidecar metadata for a panel stored as a bare numeric CSV."""
    return {
        "n_units": panel.n_units,
        "t_total": panel.n_periods,
        "t0": panel.t0,
        "target_label": panel.unit_labels[0],
    }


def save_metadata(panel: PanelData, dest: str | Path) -> None:
    Path(dest).write_text(json.dumps(panel_metadata(panel), indent=2) + "\n")


def load_metadata(source: str | Path) -> dict:
    meta = json.loads(Path(source).read_text())
    for key in ("n_units", "t_total", "t0", "target_label"):
        if key not in meta:
            raise ParseError(f"sidecar metadata missing key {key!r}")
    return meta


def mean_center(panel: PanelData, basis: str = "donors") -> CenteredPanel:
    """Subtract the per-period mean trajectory of the basis rows from every row.

    ``basis="donors"`` averages donor rows only (the default protocol for real
    data); ``basis="all"`` includes the target row, skipping missing cells.
    """
    if basis == "donors":
        mean = panel.values[1:].mean(axis=0)
    elif basis == "all":
        mean = np.nanmean(panel.values, axis=0)
    else:
        raise ConfigError(f"unknown centering basis {basis!r} (expected 'donors' or 'all')")
    centered = panel.with_values(panel.values - mean)
    return CenteredPanel(panel=centered, mean_trajectory=mean, source=panel)


def split(panel: PanelData) -> tuple[np.ndarray, np.ndarray]:
    """Pre- and post-intervention column blocks as (N x t0, N x (T - t0)) copies."""
    return panel.values[:, : panel.t0].copy(), panel.values[:, panel.t0 :].copy()


def _check_permutation(perm: Sequence[int], lo: int, hi: int, what: str) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(lo, hi)):
        raise ConfigError(f"{what} must be a permutation of [{lo}, {hi})")
    return perm


def permute_columns(panel: PanelData, perm_pre: Sequence[int], perm_post: Sequence[int]) -> PanelData:
    """Reorder columns within the pre and post segments independently.

    ``perm_pre`` is a permutation of ``range(t0)`` and ``perm_post`` of
    ``range(t0, T)``; new column ``j`` takes old column ``perm[j]``.  No column
    ever crosses the intervention boundary.
    """
    t0, t = panel.t0, panel.n_periods
    perm_pre = _check_permutation(perm_pre, 0, t0, "perm_pre")
    perm_post = _check_permutation(perm_post, t0, t, "perm_post")
    order = np.concatenate([perm_pre, perm_post])
    values = panel.values[:, order]
    labels = tuple(panel.time_labels[i] for i in order)
    return PanelData(values, t0, panel.unit_labels, labels, panel.target_post_missing)


def stack_multivariate(panels: Sequence[PanelData]) -> PanelData:
    """Stack panels of parallel outcome series vertically into one panel.

    All panels must share N, T, t0 and unit ordering.  Series ``s`` of unit
    ``i`` lands at row ``s*N + i``; the stacked target is the first panel's
    target row, and only that row may carry missing post values.
    """
    if not panels:
        raise ConfigError("need at least one panel to stack")
    if len(panels) == 1:
        return panels[0]
    first = panels[0]
    for p in panels[1:]:
        if p.values.shape != first.values.shape or p.t0 != first.t0:
            raise ConfigError("stacked panels must share dimensions and t0")
        if p.unit_labels != first.unit_labels:
            raise ConfigError("stacked panels must share unit ordering")
        if p.target_post_missing:
            raise ConfigError("only the first panel's target may have missing post values")
    values = np.vstack([p.values for p in panels])
    labels: list[str] = list(first.unit_labels)
    for s in range(1, len(panels)):
        labels.extend(f"{name}::{s}" for name in first.unit_labels)
    return PanelData(values, first.t0, tuple(labels), first.time_labels, first.target_post_missing)
