"""Input checks that turn array-like curves and labels into a dataset."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .data import CurveGroup, FunctionalDataset, Grid
from .exceptions import InvalidInputError


def check_curves(X):
    """2-d float array of curves; NaN allowed (only in unobserved rows)."""
    return check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=2,
                       ensure_min_features=2)


def group_labels(y):
    """Distinct labels in order of first appearance and per-row group codes."""
    y = np.asarray(y).ravel()
    seen = {}
    codes = np.empty(y.size, dtype=int)
    for r, label in enumerate(y.tolist()):
        if label not in seen:
            seen[label] = len(seen)
        codes[r] = seen[label]
    return list(seen), codes


def check_functional_data(X, y, observed=None, grid=None):
    """Build a :class:`FunctionalDataset` from a curve matrix and group labels.

    Parameters
    ----------
    X : array-like, shape (n_curves, p)
    y : array-like, shape (n_curves,)
        Group label of each curve; groups keep first-appearance order.
    observed : array-like of bool, shape (n_curves,), optional
        Inclusion mask. Unobserved rows may contain NaN.
    grid : array-like, shape (p,), optional
        Abscissae; defaults to p equispaced points on [0, 1].
    """
    X = check_curves(X)
    y = np.asarray(y).ravel()
    if y.size != X.shape[0]:
        raise InvalidInputError(f"{y.size} labels for {X.shape[0]} curves")
    if observed is None:
        observed = np.ones(X.shape[0], dtype=bool)
    observed = np.asarray(observed).astype(bool).ravel()
    if observed.size != X.shape[0]:
        raise InvalidInputError(f"{observed.size} inclusion flags for {X.shape[0]} curves")
    bad = np.flatnonzero(observed & ~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise InvalidInputError(f"observed row {int(bad[0])} contains non-finite values")
    grid = Grid.equispaced(X.shape[1]) if grid is None else Grid(grid)
    if grid.size != X.shape[1]:
        raise InvalidInputError(f"grid has {grid.size} points but curves have {X.shape[1]}")
    labels, codes = group_labels(y)
    if len(labels) < 2:
        raise InvalidInputError("at least 2 groups are required")
    groups = tuple(CurveGroup(X[codes == g], observed[codes == g]) for g in range(len(labels)))
    dataset = FunctionalDataset(grid, groups, tuple(str(label) for label in labels))
    dataset.require_estimable()
    return dataset
