"""CSV ingestion and writing of curve datasets and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .data import CurveGroup, FunctionalDataset, Grid
from .exceptions import CovopError, DegenerateGroupError, InvalidInputError
from .validation import group_labels

OBSERVED_COLUMN = "observed"
DEFAULT_LABEL_COLUMN = "group"


class CurveFileError(CovopError):
    """A curve or label file is malformed."""


def _read_rows(path):
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]


def _parse_float(cell, where):
    text = cell.strip()
    try:
        return float(text)
    except ValueError:
        raise CurveFileError(f"{where}: non-numeric value {cell!r}") from None


def _read_labels(path):
    rows = _read_rows(path)
    if not rows:
        raise CurveFileError(f"{path}: empty label file")
    header = [h.strip() for h in rows[0]]
    col = header.index("label") if "label" in header else 0
    labels = []
    for r, row in enumerate(rows[1:], start=2):
        if col >= len(row) or not row[col].strip():
            raise CurveFileError(f"{path}, row {r}: missing label")
        labels.append(row[col].strip())
    return labels


def ingest_curves(data_path, labels_path=None, label_column=None):
    """Read curves from CSV into a :class:`FunctionalDataset`.

    The header row holds the grid abscissae, plus optionally a label
    column (`label_column`) and an ``observed`` column of 0/1 flags. Each
    further row is one curve. Labels come either from `label_column` or
    from a separate file `labels_path` (column ``label`` or the first
    column, one row per curve). Groups keep first-appearance order.
    Cells of unobserved curves may be empty or ``nan``.
    """
    data_path = Path(data_path)
    rows = _read_rows(data_path)
    if len(rows) < 2:
        raise CurveFileError(f"{data_path}: need a header row and at least one curve")
    header = [h.strip() for h in rows[0]]
    if label_column is None and labels_path is None:
        if DEFAULT_LABEL_COLUMN in header:
            label_column = DEFAULT_LABEL_COLUMN
        else:
            raise CurveFileError("group labels are required: pass a label column or a labels file")
    if label_column is not None and label_column not in header:
        raise CurveFileError(f"{data_path}: label column {label_column!r} not in header")

    special = {OBSERVED_COLUMN, label_column}
    grid_cols = [c for c, name in enumerate(header) if name not in special]
    points = [_parse_float(header[c], f"{data_path}, header column {c + 1}") for c in grid_cols]
    if len(set(points)) != len(points):
        dup = next(x for x in points if points.count(x) > 1)
        raise CurveFileError(f"{data_path}: duplicate grid value {dup!r} in header")
    try:
        grid = Grid(points)
    except InvalidInputError as exc:
        raise CurveFileError(f"{data_path}: {exc}") from None

    obs_col = header.index(OBSERVED_COLUMN) if OBSERVED_COLUMN in header else None
    lab_col = header.index(label_column) if label_column is not None else None
    values = np.empty((len(rows) - 1, len(grid_cols)))
    observed = np.ones(len(rows) - 1, dtype=bool)
    labels = []
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != len(header):
            raise CurveFileError(
                f"{data_path}, row {line}: {len(row)} cells, header has {len(header)}"
            )
        if obs_col is not None:
            flag = row[obs_col].strip()
            if flag not in ("0", "1"):
                raise CurveFileError(
                    f"{data_path}, row {line}, column {obs_col + 1}: observed flag must be 0 or 1, got {flag!r}"
                )
            observed[r] = flag == "1"
        if lab_col is not None:
            label = row[lab_col].strip()
            if not label:
                raise CurveFileError(f"{data_path}, row {line}: empty label")
            labels.append(label)
        for v, c in enumerate(grid_cols):
            where = f"{data_path}, row {line}, column {c + 1}"
            cell = row[c].strip()
            if not observed[r] and cell in ("", "nan", "NaN", "NA"):
                values[r, v] = np.nan
                continue
            x = _parse_float(cell, where)
            if observed[r] and not math.isfinite(x):
                raise CurveFileError(f"{where}: non-finite value in an observed curve")
            values[r, v] = x

    if labels_path is not None:
        labels = _read_labels(labels_path)
        if len(labels) != values.shape[0]:
            raise CurveFileError(
                f"{labels_path}: {len(labels)} labels for {values.shape[0]} curves"
            )

    names, codes = group_labels(labels)
    if len(names) < 2:
        raise CurveFileError("at least 2 groups are required")
    groups = []
    for g, name in enumerate(names):
        group = CurveGroup(values[codes == g], observed[codes == g])
        if group.n_observed < 2:
            raise DegenerateGroupError(
                f"group {name!r} has {group.n_observed} observed curve(s); at least 2 are needed"
            )
        groups.append(group)
    return FunctionalDataset(grid, tuple(groups), tuple(names))


def _fmt(x):
    return repr(float(x))


def write_curves(path, dataset: FunctionalDataset, label_column=DEFAULT_LABEL_COLUMN):
    """Write `dataset` in the format read by :func:`ingest_curves` (lossless)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([label_column] + [_fmt(x) for x in dataset.grid.points] + [OBSERVED_COLUMN])
        for label, g in zip(dataset.labels, dataset.groups):
            for row, obs in zip(g.values, g.observed):
                writer.writerow([label] + [_fmt(x) for x in row] + [int(obs)])


def file_digest(*paths):
    h = hashlib.sha256()
    for path in paths:
        if path is None:
            continue
        with open(path, "rb") as fh:
            h.update(fh.read())
    return "sha256:" + h.hexdigest()


def read_matrix_csv(path):
    """Square matrix from a headerless numeric CSV."""
    rows = _read_rows(path)
    mat = np.array(
        [[_parse_float(c, f"{path}, row {r + 1}") for c in row] for r, row in enumerate(rows)]
    )
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise CurveFileError(f"{path}: expected a square matrix, got shape {mat.shape}")
    return mat


def write_lower_triangle(path, labels, pairs, values):
    """Pairwise p-values as a labelled matrix with entries only below the diagonal."""
    q = len(labels)
    cells = [["" for _ in range(q)] for _ in range(q)]
    for (i, j), v in zip(pairs, values):
        cells[j][i] = _fmt(v)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + list(labels))
        for label, row in zip(labels, cells):
            writer.writerow([label] + row)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")
