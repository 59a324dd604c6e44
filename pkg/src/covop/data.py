"""Containers for grouped functional data sampled on a shared grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .exceptions import DegenerateGroupError, InvalidInputError


@dataclass(frozen=True)
class Grid:
    """Strictly increasing abscissae shared by every curve."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise InvalidInputError("a grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            bad = int(np.argmax(np.diff(pts) <= 0))
            raise InvalidInputError(
                f"grid must be strictly increasing (points {bad} and {bad + 1})"
            )
        object.__setattr__(self, "points", pts)

    @classmethod
    def equispaced(cls, p=31, start=0.0, stop=1.0):
        return cls(np.linspace(start, stop, p))

    @property
    def size(self):
        return self.points.size

    @property
    def spacing(self):
        """Mean spacing; equals the step for equispaced grids."""
        return float((self.points[-1] - self.points[0]) / (self.size - 1))


@dataclass(frozen=True)
class CurveGroup:
    """Curves of one group (rows) with an inclusion mask.

    Values of unobserved rows are kept as given (often NaN) and never
    enter any computation.
    """

    values: np.ndarray
    observed: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise InvalidInputError("curve values must be a 2-d array (n, p)")
        if self.observed is None:
            obs = np.ones(vals.shape[0], dtype=bool)
        else:
            obs = np.asarray(self.observed).astype(bool).ravel()
        if obs.size != vals.shape[0]:
            raise InvalidInputError(
                f"mask length {obs.size} does not match {vals.shape[0]} rows"
            )
        if not np.all(np.isfinite(vals[obs])):
            raise InvalidInputError("observed curves contain non-finite values")
        vals.setflags(write=False)
        obs.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "observed", obs)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def n_observed(self):
        return int(self.observed.sum())

    @property
    def p(self):
        return self.values.shape[1]

    def filled(self):
        """Values with unobserved rows replaced by zeros."""
        out = np.where(self.observed[:, None], self.values, 0.0)
        return out

    def require_estimable(self, name="group"):
        if self.n_observed < 2:
            raise DegenerateGroupError(
                f"{name} has {self.n_observed} observed curve(s); at least 2 are needed"
            )


def pair_order(q):
    """Lexicographic list of 0-based pairs (i, j), i < j."""
    return list(combinations(range(q), 2))


@dataclass(frozen=True)
class FunctionalDataset:
    """q groups of curves on a common grid."""

    grid: Grid
    groups: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        groups = tuple(
            g if isinstance(g, CurveGroup) else CurveGroup(g) for g in self.groups
        )
        if len(groups) < 2:
            raise InvalidInputError("at least 2 groups are required")
        grid = self.grid if isinstance(self.grid, Grid) else Grid(self.grid)
        for i, g in enumerate(groups):
            if g.p != grid.size:
                raise InvalidInputError(
                    f"group {i + 1} has {g.p} columns but the grid has {grid.size} points"
                )
        labels = tuple(self.labels) if self.labels else tuple(
            str(i + 1) for i in range(len(groups))
        )
        if len(labels) != len(groups):
            raise InvalidInputError("one label per group is required")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_arrays(cls, arrays: Sequence, grid=None, observed=None, labels=()):
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        if grid is None:
            grid = Grid.equispaced(arrays[0].shape[1])
        if observed is None:
            observed = [None] * len(arrays)
        groups = tuple(CurveGroup(a, o) for a, o in zip(arrays, observed))
        return cls(grid, groups, tuple(labels))

    @property
    def q(self):
        return len(self.groups)

    @property
    def p(self):
        return self.grid.size

    @property
    def sizes(self):
        return tuple(g.n for g in self.groups)

    @property
    def kappa(self):
        """Observed-curve count of each group."""
        return tuple(g.n_observed for g in self.groups)

    @property
    def n_missing(self):
        return sum(g.n - g.n_observed for g in self.groups)

    @property
    def pairs(self):
        return pair_order(self.q)

    @property
    def is_balanced(self):
        return len(set(self.sizes)) == 1

    def require_estimable(self):
        for i, g in enumerate(self.groups):
            g.require_estimable(f"group {self.labels[i]!r}")

    def replace_groups(self, groups):
        return FunctionalDataset(self.grid, tuple(groups), self.labels)
