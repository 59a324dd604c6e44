"""Synthetic functional data for size and power studies.

Groups are drawn on an equispaced grid over [0, 1] around the mean
function sin(x). The default base covariances are analytic kernels: a
Brownian-motion kernel for the reference group and a squared-exponential
kernel rescaled to the same trace, so the shape-shift alternative changes
shape as well as spread.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .covmetrics import check_symmetric, matrix_sqrt, procrustes_aligner
from .data import CurveGroup, FunctionalDataset, Grid
from .exceptions import InvalidInputError
from .permengine import DEFAULT_ADJUSTMENT, PermutationPlan, global_test

CASES = ("shape-shift", "scale")
FAMILIES = ("gaussian", "student-t")


def brownian_kernel(grid):
    """min(s, t) on the grid."""
    pts = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    return np.minimum.outer(pts, pts)


def squared_exponential_kernel(grid, scale=0.04):
    """exp(-(s - t)^2 / scale) on the grid."""
    pts = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    return np.exp(-np.subtract.outer(pts, pts) ** 2 / scale)


def default_sigmas(grid):
    """Reference and alternative base covariances with equal trace."""
    sigma1 = brownian_kernel(grid)
    sigma2 = squared_exponential_kernel(grid)
    sigma2 *= np.trace(sigma1) / np.trace(sigma2)
    return sigma1, sigma2


def make_sigma_case1(sigma1, sigma2, gamma):
    """Geodesic-style path from sigma1 (gamma=0) to sigma2 (gamma=1) in root space.

    ``M = S1^(1/2) + gamma (S2^(1/2) R - S1^(1/2))`` with R the Procrustes
    rotation aligning the root of sigma2 to that of sigma1; returns M M'.
    """
    l1 = matrix_sqrt(sigma1)
    l2 = matrix_sqrt(sigma2)
    rot = procrustes_aligner(sigma1, sigma2)
    m = l1 + gamma * (l2 @ rot - l1)
    return m @ m.T


def make_sigma_case2(sigma1, gamma):
    """(1 + gamma) * sigma1."""
    return (1.0 + gamma) * np.asarray(sigma1, dtype=float)


def sin_mean(grid):
    pts = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    return np.sin(pts)


def sample_gaussian(mean, sigma, n, rng):
    """n curves ``mean + A z`` with ``A A' = sigma`` (symmetric root) and z ~ N(0, I)."""
    root = matrix_sqrt(sigma)
    mean = np.asarray(mean, dtype=float)
    z = rng.standard_normal((n, root.shape[0]))
    return CurveGroup(mean + z @ root.T)


def correlation_from_covariance(sigma):
    sigma = check_symmetric(sigma)
    d = np.diag(sigma)
    if np.any(d <= 0):
        raise InvalidInputError(
            "covariance has a non-positive diagonal entry; the implied correlation is undefined"
        )
    s = 1.0 / np.sqrt(d)
    return sigma * np.outer(s, s)


def sample_student_t(df, sigma, n, rng, mean=None):
    """Multivariate t curves with the correlation matrix implied by `sigma`.

    The population covariance is ``df / (df - 2)`` times the correlation,
    so the scale of `sigma` is not carried over.
    """
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    corr = correlation_from_covariance(sigma)
    root = matrix_sqrt(corr)
    p = root.shape[0]
    z = rng.standard_normal((n, p)) @ root.T
    w = rng.chisquare(df, size=n)
    x = z / np.sqrt(w / df)[:, None]
    if mean is not None:
        x = x + np.asarray(mean, dtype=float)
    return CurveGroup(x)


@dataclass
class ScenarioConfig:
    """A simulation design. Group indices in `affected` and `missing_group` are 1-based."""

    q: int = 3
    n_per_group: int = 20
    p: int = 31
    case: str = "scale"
    gammas: tuple = (0.0,)
    affected: tuple = (2, 3)
    family: str = "gaussian"
    df: int = 4
    replicates: int = 100
    seed: int = 0
    sigma1: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    missing_group: int | None = None
    metrics: tuple = ("sqrt",)
    strategy: str = "synchronized"
    combiner: str = "max-t"
    adjustment: str | None = None
    n_permutations: int = 1000
    alpha: float = 0.05
    p_value_rule: str = "plain"
    covariance_mode: str = "about-group-mean"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.gammas = tuple(float(g) for g in np.atleast_1d(self.gammas))
        self.affected = tuple(int(a) for a in self.affected)
        self.metrics = tuple(self.metrics)
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if self.n_per_group < 2 or self.p < 2:
            raise ValueError("n_per_group and p must be at least 2")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; use one of {CASES}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; use one of {FAMILIES}")
        if any(g < 0 for g in self.gammas):
            raise ValueError("gamma must be non-negative")
        if not self.affected or any(not 1 <= a <= self.q for a in self.affected):
            raise ValueError(f"affected groups must be a nonempty subset of 1..{self.q}")
        if self.missing_group is not None and not 1 <= self.missing_group <= self.q:
            raise ValueError(f"missing_group must be in 1..{self.q}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        for name in ("sigma1", "sigma2"):
            value = getattr(self, name)
            if value is not None:
                value = check_symmetric(np.asarray(value, dtype=float), name)
                if value.shape != (self.p, self.p):
                    raise ValueError(f"{name} must be {self.p} x {self.p}")
                setattr(self, name, value)
        if self.family == "student-t":
            for sigma in self.base_sigmas():
                correlation_from_covariance(sigma)

    @property
    def grid(self):
        return Grid.equispaced(self.p)

    def base_sigmas(self):
        if "base" not in self._cache:
            d1, d2 = default_sigmas(self.grid)
            self._cache["base"] = (
                d1 if self.sigma1 is None else self.sigma1,
                d2 if self.sigma2 is None else self.sigma2,
            )
        return self._cache["base"]

    def group_sigmas(self, gamma):
        sigma1, sigma2 = self.base_sigmas()
        if self.case == "scale":
            alt = make_sigma_case2(sigma1, gamma)
        else:
            alt = make_sigma_case1(sigma1, sigma2, gamma)
        return [alt if (i + 1) in self.affected else sigma1 for i in range(self.q)]

    def plan(self, replicate):
        return PermutationPlan(
            strategy=self.strategy,
            n_permutations=self.n_permutations,
            seed=permutation_seed(self.seed, replicate),
            p_value_rule=self.p_value_rule,
        )

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls) if not f.name.startswith("_")}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)


def data_seed_sequence(seed, replicate):
    return np.random.SeedSequence(int(seed), spawn_key=(int(replicate), 0))


def permutation_seed(seed, replicate):
    state = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), 1)).generate_state(
        1, np.uint64
    )
    return int(state[0])


def generate_dataset(config: ScenarioConfig, gamma, replicate):
    """Replicate `replicate` of the scenario at `gamma`.

    The data generator depends only on (seed, replicate), so the same
    underlying draws are reused across gammas and metrics.
    """
    rng = np.random.default_rng(data_seed_sequence(config.seed, replicate))
    grid = config.grid
    mean = sin_mean(grid)
    groups = []
    for sigma in config.group_sigmas(gamma):
        if config.family == "gaussian":
            g = sample_gaussian(mean, sigma, config.n_per_group, rng)
        else:
            g = sample_student_t(config.df, sigma, config.n_per_group, rng, mean)
        groups.append(g)
    if config.missing_group is not None:
        g = groups[config.missing_group - 1]
        vals = np.array(g.values)
        vals[-1] = np.nan
        obs = np.ones(g.n, dtype=bool)
        obs[-1] = False
        groups[config.missing_group - 1] = CurveGroup(vals, obs)
    return FunctionalDataset(grid, tuple(groups))


def _replicate_decisions(config, gamma, replicate, metrics, adjustment):
    dataset = generate_dataset(config, gamma, replicate)
    plan = config.plan(replicate)
    out = {}
    for metric in metrics:
        res = global_test(
            dataset,
            metric=metric,
            plan=plan,
            combiner=config.combiner,
            adjustment=adjustment,
            alpha=config.alpha,
            covariance_mode=config.covariance_mode,
        )
        out[metric] = (res.global_p, res.global_p <= config.alpha, res.rejected.copy())
    return out


@dataclass
class PowerTable:
    """Rejection proportions by gamma, method, metric and target."""

    rows: list
    global_p: dict = field(default_factory=dict)

    COLUMNS = ("gamma", "method", "metric", "target", "estimate", "stderr", "R", "B")

    def estimate(self, gamma, metric, target="global"):
        for row in self.rows:
            if row["gamma"] == gamma and row["metric"] == metric and row["target"] == target:
                return row["estimate"], row["stderr"]
        raise KeyError((gamma, metric, target))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self, **kwargs):
        return json.dumps({"columns": list(self.COLUMNS), "rows": self.rows}, **kwargs)


def run_power_study(config: ScenarioConfig, n_jobs=1):
    """Empirical rejection rates of the global and adjusted partial tests.

    For every gamma and replicate a dataset is generated, every requested
    metric is tested on it with the same permutation seed, and rejections
    at ``config.alpha`` are tallied.
    """
    adjustment = config.adjustment or DEFAULT_ADJUSTMENT[config.combiner]
    metrics = config.metrics
    method = f"{config.strategy}/{config.combiner}/{adjustment}"
    pairs = [(i, j) for i in range(config.q) for j in range(i + 1, config.q)]
    R = config.replicates
    rows = []
    global_p = {}
    for gamma in config.gammas:
        if n_jobs == 1:
            results = [
                _replicate_decisions(config, gamma, r, metrics, adjustment) for r in range(R)
            ]
        else:
            results = Parallel(n_jobs=n_jobs)(
                delayed(_replicate_decisions)(config, gamma, r, metrics, adjustment)
                for r in range(R)
            )
        for metric in metrics:
            glob = np.array([res[metric][1] for res in results], dtype=float)
            partial = np.array([res[metric][2] for res in results], dtype=float)
            global_p[(gamma, metric)] = [res[metric][0] for res in results]
            targets = [("global", glob)] + [
                (f"{i + 1}-{j + 1}", partial[:, m]) for m, (i, j) in enumerate(pairs)
            ]
            for target, hits in targets:
                est = float(hits.mean())
                rows.append(
                    {
                        "gamma": gamma,
                        "method": method,
                        "metric": metric,
                        "target": target,
                        "estimate": est,
                        "stderr": float(np.sqrt(est * (1.0 - est) / R)),
                        "R": R,
                        "B": config.n_permutations,
                    }
                )
    return PowerTable(rows, global_p)
