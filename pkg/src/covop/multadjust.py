"""Family-wise error rate control for the pairwise partial tests.

All procedures work on the joint permutation distribution of the k
partial tests, so dependence between pairs is accounted for.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import UnsupportedSizeError
from .npc import (
    at_least,
    at_most,
    combined_pvalue,
    finish_pvalue,
    permutation_tail_pvalues,
    tail_pvalues,
    uses_statistics,
)

ADJUSTMENTS = ("minp", "tippett", "max-t", "closed")
MAX_CLOSED_K = 20


@dataclass
class AdjustmentInput:
    """Observed and permuted partial statistics with their p-values."""

    observed_stats: np.ndarray
    observed_p: np.ndarray
    perm_stats: np.ndarray
    perm_p: np.ndarray
    alpha: float = 0.05
    rule: str = "plain"

    def __post_init__(self):
        self.observed_stats = np.asarray(self.observed_stats, dtype=float).ravel()
        self.observed_p = np.asarray(self.observed_p, dtype=float).ravel()
        self.perm_stats = np.atleast_2d(np.asarray(self.perm_stats, dtype=float))
        self.perm_p = np.atleast_2d(np.asarray(self.perm_p, dtype=float))
        k = self.observed_stats.size
        if self.observed_p.size != k:
            raise ValueError("observed_p and observed_stats differ in length")
        if self.perm_stats.shape != self.perm_p.shape or self.perm_stats.shape[1] != k:
            raise ValueError(
                f"permutation matrices must both be (B, {k}); got "
                f"{self.perm_stats.shape} and {self.perm_p.shape}"
            )
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @classmethod
    def from_stats(cls, observed_stats, perm_stats, alpha=0.05, rule="plain"):
        """Derive both p-value sets from raw statistics."""
        observed_stats = np.asarray(observed_stats, dtype=float).ravel()
        perm_stats = np.atleast_2d(np.asarray(perm_stats, dtype=float))
        return cls(
            observed_stats,
            tail_pvalues(perm_stats, observed_stats, rule),
            perm_stats,
            permutation_tail_pvalues(perm_stats, observed_stats, rule),
            alpha,
            rule,
        )

    @property
    def k(self):
        return self.observed_stats.size

    @property
    def n_permutations(self):
        return self.perm_stats.shape[0]


@dataclass
class StepDownResult:
    rejected: np.ndarray
    adjusted_p: np.ndarray


def _check_perm_p(observed_p, perm_p):
    observed_p = np.asarray(observed_p, dtype=float).ravel()
    perm_p = np.atleast_2d(np.asarray(perm_p, dtype=float))
    if perm_p.shape[1] != observed_p.size:
        raise ValueError(
            f"perm_p has {perm_p.shape[1]} columns for {observed_p.size} hypotheses"
        )
    return observed_p, perm_p


def stepdown_minp(observed_p, perm_p, rule="plain"):
    """Westfall-Young step-down minP adjusted p-values.

    The i-th smallest raw p-value is compared with the permutation
    distribution of the minimum over the hypotheses ranked i..k; a running
    maximum keeps the adjusted values in raw-p order.
    """
    observed_p, perm_p = _check_perm_p(observed_p, perm_p)
    n_perm, k = perm_p.shape
    order = np.argsort(observed_p, kind="stable")
    # suffix minima: col i holds min over order[i:]
    suffix_min = np.minimum.accumulate(perm_p[:, order[::-1]], axis=1)[:, ::-1]
    counts = at_most(suffix_min, observed_p[order][None, :]).sum(axis=0)
    adjusted_sorted = np.maximum.accumulate(finish_pvalue(counts, n_perm, rule))
    adjusted = np.empty(k)
    adjusted[order] = adjusted_sorted
    return adjusted


def stepdown_tippett(raw_p, alpha=0.05, perm_p=None, rule="plain"):
    """Step-down Tippett procedure.

    At each stage the not-yet-rejected hypotheses are combined with the
    minimum p-value; the most significant one is rejected while the
    combined value is at most `alpha`, and testing stops at the first
    retention.

    Without `perm_p` the combined value is the minimum itself, which is
    only an adjustment when `raw_p` already are combined-test p-values.
    With `perm_p` (B x k) the combined value is the permutation p-value of
    the minimum over the remaining set.

    Returns
    -------
    StepDownResult
        Rejection mask and adjusted p-values, both in input order.
    """
    raw_p = np.asarray(raw_p, dtype=float).ravel()
    k = raw_p.size
    if perm_p is not None:
        raw_p, perm_p = _check_perm_p(raw_p, perm_p)
    order = np.argsort(raw_p, kind="stable")
    rejected = np.zeros(k, dtype=bool)
    adjusted = np.empty(k)
    previous = 0.0
    stopped = False
    for i in range(k):
        remaining = order[i:]
        observed_min = raw_p[remaining].min()
        if perm_p is None:
            combined = observed_min
        else:
            perm_min = perm_p[:, remaining].min(axis=1)
            count = np.count_nonzero(at_most(perm_min, observed_min))
            combined = float(finish_pvalue(count, perm_p.shape[0], rule))
        previous = max(previous, combined)
        adjusted[order[i]] = previous
        if not stopped and previous <= alpha:
            rejected[order[i]] = True
        else:
            stopped = True
    return StepDownResult(rejected, adjusted)


def maxt_critical_value(perm_stats, subset, alpha):
    """m-th smallest permutation maximum over `subset`, m = B - floor(B alpha)."""
    perm_stats = np.atleast_2d(np.asarray(perm_stats, dtype=float))
    n_perm = perm_stats.shape[0]
    maxima = np.sort(perm_stats[:, list(subset)].max(axis=1))
    m = n_perm - int(np.floor(n_perm * alpha))
    if m < 1:
        return np.inf
    return float(maxima[m - 1])


def singlestep_maxt(observed_stats, perm_stats, alpha=0.05):
    """Hypotheses whose statistic reaches the critical value of the full family."""
    observed_stats = np.asarray(observed_stats, dtype=float).ravel()
    c = maxt_critical_value(perm_stats, range(observed_stats.size), alpha)
    return at_least(observed_stats, c)


def stepdown_maxt(observed_stats, perm_stats, alpha=0.05, rule="plain"):
    """Step-down max-T procedure.

    Statistics are visited from largest to smallest; at stage i the
    critical value is recomputed over the hypotheses not yet rejected and
    the procedure stops at the first retention. The adjusted p-values are
    the matching step-down maxT values: the share of permutation maxima over
    the remaining set reaching the observed statistic, with a running max.
    """
    observed_stats = np.asarray(observed_stats, dtype=float).ravel()
    perm_stats = np.atleast_2d(np.asarray(perm_stats, dtype=float))
    n_perm, k = perm_stats.shape
    if k != observed_stats.size:
        raise ValueError("perm_stats columns do not match observed_stats")
    order = np.argsort(-observed_stats, kind="stable")
    rejected = np.zeros(k, dtype=bool)
    adjusted = np.empty(k)
    previous = 0.0
    stopped = False
    for i in range(k):
        remaining = order[i:]
        t = observed_stats[order[i]]
        if not stopped:
            c = maxt_critical_value(perm_stats, remaining, alpha)
            if at_least(t, c):
                rejected[order[i]] = True
            else:
                stopped = True
        maxima = perm_stats[:, remaining].max(axis=1)
        p_i = float(finish_pvalue(np.count_nonzero(at_least(maxima, t)), n_perm, rule))
        previous = max(previous, p_i)
        adjusted[order[i]] = previous
    return StepDownResult(rejected, adjusted)


def closed_testing(adj: AdjustmentInput, kind="tippett"):
    """Closed testing over all intersection hypotheses.

    Every nonempty subset of the k partial hypotheses is tested by
    combining its members with `kind` on the joint permutation
    distribution. A hypothesis' adjusted p-value is the largest combined
    p-value among the subsets that contain it.
    """
    k = adj.k
    if k > MAX_CLOSED_K:
        raise UnsupportedSizeError(
            f"closed testing enumerates 2^k - 1 subsets; k = {k} exceeds {MAX_CLOSED_K}"
        )
    if uses_statistics(kind):
        observed, permuted = adj.observed_stats, adj.perm_stats
    else:
        observed, permuted = adj.observed_p, adj.perm_p
    adjusted = np.zeros(k)
    for size in range(1, k + 1):
        for subset in combinations(range(k), size):
            cols = list(subset)
            p = combined_pvalue(observed[cols], permuted[:, cols], kind, adj.rule)
            adjusted[cols] = np.maximum(adjusted[cols], p)
    return adjusted


def adjust(adj: AdjustmentInput, method, kind="tippett"):
    """Adjusted p-values and rejection mask for one of :data:`ADJUSTMENTS`."""
    if method == "minp":
        adjusted = stepdown_minp(adj.observed_p, adj.perm_p, adj.rule)
        return StepDownResult(adjusted <= adj.alpha, adjusted)
    if method == "tippett":
        return stepdown_tippett(adj.observed_p, adj.alpha, adj.perm_p, adj.rule)
    if method == "max-t":
        return stepdown_maxt(adj.observed_stats, adj.perm_stats, adj.alpha, adj.rule)
    if method == "closed":
        adjusted = closed_testing(adj, kind)
        return StepDownResult(adjusted <= adj.alpha, adjusted)
    raise ValueError(f"unknown adjustment {method!r}; use one of {ADJUSTMENTS}")
