"""Multiple-sample permutation test for equal covariance operators.

The observed pairwise distances between group covariances are compared
with their joint permutation distribution; partial p-values are combined
into a global test with a combining function, and the same joint
distribution feeds the FWER adjustments in :mod:`covop.multadjust`.

Each permutation ``b`` draws from its own generator seeded by
``(seed, b)``, so the result does not depend on chunking or on how many
workers evaluate the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .covmetrics import COVARIANCE_MODES, METRICS, CovarianceTransform, batch_covariance, center_groups
from .data import CurveGroup, FunctionalDataset
from .exceptions import UnsupportedDesignError
from .multadjust import ADJUSTMENTS, AdjustmentInput, adjust
from .npc import (
    COMBINERS,
    P_VALUE_RULES,
    combine,
    combined_pvalue,
    empirical_tail,
    permutation_tail_pvalues,
    tail_pvalues,
    uses_statistics,
)

__all__ = [
    "STRATEGIES",
    "PermutationPlan",
    "TestResult",
    "combine",
    "empirical_tail",
    "global_test",
    "n_csp",
    "paired_permutation",
    "pairwise_stats",
    "pooled_permutation",
    "substream",
    "synchronized_permutation",
    "synchronized_subsets",
]

STRATEGIES = ("pooled", "paired", "synchronized")
DEFAULT_ADJUSTMENT = {"tippett": "tippett", "max-t": "max-t", "fisher": "closed"}
CHUNK_SIZE = 250


@dataclass(frozen=True)
class PermutationPlan:
    """How to resample: strategy, number of permutations, seed and p-value rule.

    ``exhaustive=True`` (synchronized only) enumerates every subset
    instead of sampling, and ``n_permutations`` is then ignored.
    """

    strategy: str = "synchronized"
    n_permutations: int = 1000
    seed: int = 0
    p_value_rule: str = "plain"
    exhaustive: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; use one of {STRATEGIES}")
        if int(self.n_permutations) < 1:
            raise ValueError("n_permutations must be at least 1")
        if self.p_value_rule not in P_VALUE_RULES:
            raise ValueError(f"unknown p-value rule {self.p_value_rule!r}")
        if self.exhaustive and self.strategy != "synchronized":
            raise ValueError("exhaustive enumeration is only available for synchronized permutations")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


@dataclass
class TestResult:
    """Outcome of :func:`global_test`; all per-pair arrays follow ``pairs``."""

    __test__ = False  # keep pytest from collecting this class

    global_p: float
    partial_p: np.ndarray
    adjusted_p: np.ndarray
    rejected: np.ndarray
    observed_stats: np.ndarray
    perm_stats: np.ndarray
    perm_p: np.ndarray
    pairs: list
    metadata: dict = field(default_factory=dict)

    def reject_global(self, alpha=None):
        alpha = self.metadata["alpha"] if alpha is None else alpha
        return self.global_p <= alpha

    def to_dict(self):
        return {
            "global_p": float(self.global_p),
            "partial_p": [
                {"i": i + 1, "j": j + 1, "raw": float(r), "adjusted": float(a)}
                for (i, j), r, a in zip(self.pairs, self.partial_p, self.adjusted_p)
            ],
            "observed_stats": [float(t) for t in self.observed_stats],
            "metadata": self.metadata,
        }


def check_combination(combiner, adjustment):
    if combiner not in COMBINERS:
        raise ValueError(f"unknown combining function {combiner!r}; use one of {COMBINERS}")
    if adjustment not in ADJUSTMENTS:
        raise ValueError(f"unknown adjustment {adjustment!r}; use one of {ADJUSTMENTS}")
    if combiner == "max-t" and adjustment not in ("max-t", "minp"):
        raise ValueError(
            "the max-t combining function is only compatible with the "
            f"'max-t' or 'minp' adjustments, not {adjustment!r}"
        )


def n_csp(n_bar):
    """Number of constrained synchronized permutations, C(2n, n)."""
    return math.comb(2 * n_bar, n_bar)


def substream(seed, b):
    """Independent generator for permutation `b`."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(b),)))


def _split_sorted(perm, sizes):
    out = []
    start = 0
    for n in sizes:
        out.append(np.sort(perm[start : start + n]))
        start += n
    return np.concatenate(out)


def synchronized_permutation(n_bar, rng):
    """Row arrangement of the pseudo-data matrix for one synchronized permutation.

    Returns an array of length 2 * n_bar: the first n_bar entries are the
    ascending subset of rows sent to the top block of every column, the
    rest the ascending complement.
    """
    return _split_sorted(rng.permutation(2 * n_bar), (n_bar, n_bar))


def synchronized_subsets(n_bar):
    """All C(2n, n) synchronized arrangements, identity first."""
    rows = []
    for top in combinations(range(2 * n_bar), n_bar):
        bottom = sorted(set(range(2 * n_bar)) - set(top))
        rows.append(list(top) + bottom)
    return np.array(rows, dtype=np.intp)


def pooled_permutation(dataset: FunctionalDataset, rng):
    """Randomly reassign all units to groups of the original sizes."""
    values = np.concatenate([g.values for g in dataset.groups])
    observed = np.concatenate([g.observed for g in dataset.groups])
    idx = _split_sorted(rng.permutation(values.shape[0]), dataset.sizes)
    groups = []
    start = 0
    for n in dataset.sizes:
        rows = idx[start : start + n]
        groups.append(CurveGroup(values[rows], observed[rows]))
        start += n
    return dataset.replace_groups(groups)


def paired_permutation(dataset: FunctionalDataset, pair, rng):
    """Randomly relabel the pooled units of one pair of groups."""
    i, j = pair
    gi, gj = dataset.groups[i], dataset.groups[j]
    values = np.concatenate([gi.values, gj.values])
    observed = np.concatenate([gi.observed, gj.observed])
    idx = _split_sorted(rng.permutation(values.shape[0]), (gi.n, gj.n))
    top, bottom = idx[: gi.n], idx[gi.n :]
    return CurveGroup(values[top], observed[top]), CurveGroup(values[bottom], observed[bottom])


def pairwise_stats(dataset: FunctionalDataset, metric="sqrt", covariance_mode="about-group-mean"):
    """Distances between the group covariances for every pair, lexicographic order."""
    dataset.require_estimable()
    transform = CovarianceTransform(metric)
    covs = np.stack(
        [batch_covariance(g.filled(), g.observed, covariance_mode) for g in dataset.groups]
    )
    feats = transform.prepare(covs)
    return np.array([float(transform.distance(feats[i], feats[j])) for i, j in dataset.pairs])


def _prepare_synchronized(dataset):
    """Balance the design for synchronized permutations.

    A group one row short of the others is padded with an unobserved row;
    more than one missing unit overall is rejected.
    """
    sizes = dataset.sizes
    n_bar = max(sizes)
    short = [i for i, n in enumerate(sizes) if n != n_bar]
    if short:
        if len(short) > 1 or sizes[short[0]] != n_bar - 1:
            raise UnsupportedDesignError(
                f"synchronized permutations need a balanced design; group sizes are {sizes}"
            )
        g = dataset.groups[short[0]]
        pad = np.full((1, dataset.p), np.nan)
        groups = list(dataset.groups)
        groups[short[0]] = CurveGroup(
            np.vstack([g.values, pad]), np.concatenate([g.observed, [False]])
        )
        dataset = dataset.replace_groups(groups)
    if dataset.n_missing > 1:
        raise UnsupportedDesignError(
            "synchronized permutations support at most one missing unit; "
            f"found {dataset.n_missing}"
        )
    return dataset


class _Evaluator:
    """Computes partial statistic vectors for batches of row arrangements."""

    def __init__(self, dataset, metric, strategy, covariance_mode):
        self.dataset = dataset
        self.strategy = strategy
        self.mode = covariance_mode
        self.transform = CovarianceTransform(metric)
        self.pairs = dataset.pairs
        self.values = [g.filled() for g in dataset.groups]
        self.weights = [g.observed.astype(float) for g in dataset.groups]
        if strategy == "pooled":
            self.all_values = np.concatenate(self.values)
            self.all_weights = np.concatenate(self.weights)

    def identity(self):
        sizes = self.dataset.sizes
        if self.strategy == "synchronized":
            return np.arange(2 * sizes[0])
        if self.strategy == "pooled":
            return np.arange(sum(sizes))
        return [np.arange(sizes[i] + sizes[j]) for i, j in self.pairs]

    def draw(self, seed, b):
        rng = substream(seed, b)
        sizes = self.dataset.sizes
        if self.strategy == "synchronized":
            return synchronized_permutation(sizes[0], rng)
        if self.strategy == "pooled":
            return _split_sorted(rng.permutation(sum(sizes)), sizes)
        return [
            _split_sorted(rng.permutation(sizes[i] + sizes[j]), (sizes[i], sizes[j]))
            for i, j in self.pairs
        ]

    def _pair_stats(self, m, idx):
        i, j = self.pairs[m]
        ni = self.dataset.sizes[i]
        z = np.concatenate([self.values[i], self.values[j]])
        w = np.concatenate([self.weights[i], self.weights[j]])
        top, bottom = idx[:, :ni], idx[:, ni:]
        fa = self.transform.prepare(batch_covariance(z[top], w[top], self.mode))
        fb = self.transform.prepare(batch_covariance(z[bottom], w[bottom], self.mode))
        return self.transform.distance(fa, fb)

    def stats(self, arrangements):
        """Partial statistics, shape (len(arrangements), k)."""
        n = len(arrangements)
        k = len(self.pairs)
        out = np.empty((n, k))
        if self.strategy == "synchronized":
            idx = np.asarray(arrangements)
            for m in range(k):
                out[:, m] = self._pair_stats(m, idx)
        elif self.strategy == "paired":
            for m in range(k):
                idx = np.stack([a[m] for a in arrangements])
                out[:, m] = self._pair_stats(m, idx)
        else:
            idx = np.asarray(arrangements)
            feats = []
            start = 0
            for size in self.dataset.sizes:
                rows = idx[:, start : start + size]
                cov = batch_covariance(self.all_values[rows], self.all_weights[rows], self.mode)
                feats.append(self.transform.prepare(cov))
                start += size
            for m, (i, j) in enumerate(self.pairs):
                out[:, m] = self.transform.distance(feats[i], feats[j])
        return out

    def stats_for_range(self, seed, start, stop):
        return self.stats([self.draw(seed, b) for b in range(start, stop)])


def _validate_design(dataset, plan):
    if plan.strategy == "synchronized":
        dataset = _prepare_synchronized(dataset)
    dataset.require_estimable()
    return dataset


def global_test(
    dataset: FunctionalDataset,
    metric="sqrt",
    plan: PermutationPlan | None = None,
    combiner="tippett",
    adjustment=None,
    alpha=0.05,
    covariance_mode="about-group-mean",
    n_jobs=1,
):
    """Run the permutation test with nonparametric combination.

    Parameters
    ----------
    dataset : FunctionalDataset
        Raw (uncentred) groups; each group is centred on its observed mean.
    metric : {'hs', 'sqrt', 'procrustes'}
    plan : PermutationPlan, optional
        Defaults to 1000 synchronized permutations with seed 0.
    combiner : {'tippett', 'max-t', 'fisher'}
    adjustment : {'minp', 'tippett', 'max-t', 'closed'}, optional
        FWER procedure for the partial tests. Defaults to the step-down
        procedure matching the combiner (closed testing for Fisher).
    alpha : float
        Level used for the adjusted rejection decisions.
    covariance_mode : {'about-group-mean', 'about-zero'}
        How permuted groups are turned into covariances.
    n_jobs : int
        joblib workers for the permutation loop; results do not depend on it.

    Returns
    -------
    TestResult
    """
    plan = PermutationPlan() if plan is None else plan
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; use one of {METRICS}")
    if covariance_mode not in COVARIANCE_MODES:
        raise ValueError(f"unknown covariance mode {covariance_mode!r}")
    adjustment = DEFAULT_ADJUSTMENT[combiner] if adjustment is None and combiner in COMBINERS else adjustment
    check_combination(combiner, adjustment)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")

    design = _validate_design(dataset, plan)
    centred = center_groups(design)
    evaluator = _Evaluator(centred, metric, plan.strategy, covariance_mode)
    observed = evaluator.stats([evaluator.identity()])[0]

    if plan.exhaustive:
        subsets = synchronized_subsets(design.sizes[0])
        perm_stats = np.concatenate(
            [evaluator.stats(subsets[s : s + CHUNK_SIZE]) for s in range(0, len(subsets), CHUNK_SIZE)]
        )
    else:
        n_perm = int(plan.n_permutations)
        bounds = [(s, min(s + CHUNK_SIZE, n_perm)) for s in range(0, n_perm, CHUNK_SIZE)]
        if n_jobs == 1:
            chunks = [evaluator.stats_for_range(plan.seed, a, b) for a, b in bounds]
        else:
            chunks = Parallel(n_jobs=n_jobs)(
                delayed(evaluator.stats_for_range)(plan.seed, a, b) for a, b in bounds
            )
        perm_stats = np.concatenate(chunks)

    rule = plan.p_value_rule
    partial_p = tail_pvalues(perm_stats, observed, rule)
    perm_p = permutation_tail_pvalues(perm_stats, observed, rule)
    if uses_statistics(combiner):
        global_p = combined_pvalue(observed, perm_stats, combiner, rule)
    else:
        global_p = combined_pvalue(partial_p, perm_p, combiner, rule)

    adj_input = AdjustmentInput(observed, partial_p, perm_stats, perm_p, alpha, rule)
    outcome = adjust(adj_input, adjustment, combiner)

    metadata = {
        "metric": metric,
        "combiner": combiner,
        "adjustment": adjustment,
        "strategy": plan.strategy,
        "n_permutations": int(perm_stats.shape[0]),
        "exhaustive": bool(plan.exhaustive),
        "seed": int(plan.seed),
        "p_value_rule": rule,
        "covariance_mode": covariance_mode,
        "alpha": float(alpha),
        "kappa_star": [int(k) for k in design.kappa],
        "group_sizes": [int(n) for n in design.sizes],
        "labels": list(design.labels),
        "version": __version__,
    }
    if plan.strategy == "paired":
        metadata["global_p_note"] = "dependence-ignoring"
    elif plan.strategy == "pooled":
        metadata["partial_p_note"] = "pooled permutations involve all groups in every partial test"

    return TestResult(
        global_p=float(global_p),
        partial_p=partial_p,
        adjusted_p=outcome.adjusted_p,
        rejected=outcome.rejected,
        observed_stats=observed,
        perm_stats=perm_stats,
        perm_p=perm_p,
        pairs=list(design.pairs),
        metadata=metadata,
    )
