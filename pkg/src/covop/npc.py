"""Permutation tail probabilities and combining functions.

Ties are resolved with ``>=`` as in the usual permutation p-value. A
relative slack of ``TIE_RTOL`` absorbs floating-point noise so that two
arrangements producing the same statistic in exact arithmetic count as
tied (e.g. a synchronized subset and its complement under the Procrustes
metric, whose SVD may differ in the last ulp).
"""

from __future__ import annotations

import numpy as np

TIE_RTOL = 1e-10
P_VALUE_RULES = ("plain", "add-one")
COMBINERS = ("tippett", "max-t", "fisher")


def _check_rule(rule):
    if rule not in P_VALUE_RULES:
        raise ValueError(f"unknown p-value rule {rule!r}; use one of {P_VALUE_RULES}")


def at_least(values, threshold):
    threshold = np.asarray(threshold, dtype=float)
    return np.asarray(values) >= threshold - TIE_RTOL * np.abs(threshold)


def at_most(values, threshold):
    threshold = np.asarray(threshold, dtype=float)
    return np.asarray(values) <= threshold + TIE_RTOL * np.abs(threshold)


def finish_pvalue(count, n_permutations, rule="plain"):
    """Turn an exceedance count into a p-value under `rule`."""
    _check_rule(rule)
    count = np.asarray(count, dtype=float)
    if rule == "plain":
        return count / n_permutations
    return (1.0 + count) / (n_permutations + 1.0)


def empirical_tail(perm_values, observed, rule="plain"):
    """Proportion of permutation values at least as large as `observed`.

    >>> empirical_tail([1, 2, 3, 4], 2.5)
    0.5
    """
    perm = np.asarray(perm_values, dtype=float).ravel()
    if perm.size < 1:
        raise ValueError("at least one permutation value is required")
    count = np.count_nonzero(at_least(perm, observed))
    return float(finish_pvalue(count, perm.size, rule))


def tail_pvalues(perm_stats, observed, rule="plain"):
    """Column-wise :func:`empirical_tail` for a (B, k) matrix."""
    perm_stats = np.asarray(perm_stats, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if perm_stats.ndim != 2 or perm_stats.shape[1] != observed.size:
        raise ValueError("perm_stats must be (B, k) with k = len(observed)")
    if perm_stats.shape[0] < 1:
        raise ValueError("at least one permutation is required")
    counts = at_least(perm_stats, observed[None, :]).sum(axis=0)
    return finish_pvalue(counts, perm_stats.shape[0], rule)


def permutation_tail_pvalues(perm_stats, observed, rule="plain"):
    """p-value of every permuted statistic within its own column.

    Entry (b, m) is the share of the permutation distribution of column m
    lying at or above ``perm_stats[b, m]``. Under ``add-one`` the observed
    statistic joins the reference set, so the denominator is B + 1.
    """
    perm_stats = np.asarray(perm_stats, dtype=float)
    observed = np.asarray(observed, dtype=float)
    _check_rule(rule)
    n_perm, k = perm_stats.shape
    out = np.empty_like(perm_stats)
    for m in range(k):
        col = perm_stats[:, m]
        ordered = np.sort(col)
        thresh = col - TIE_RTOL * np.abs(col)
        counts = n_perm - np.searchsorted(ordered, thresh, side="left")
        if rule == "plain":
            out[:, m] = counts / n_perm
        else:
            counts = counts + at_least(observed[m], col)
            out[:, m] = counts / (n_perm + 1.0)
    return out


def larger_is_significant(kind):
    _check_kind(kind)
    return kind != "tippett"


def uses_statistics(kind):
    """True when the combiner acts on raw statistics rather than p-values."""
    _check_kind(kind)
    return kind == "max-t"


def _check_kind(kind):
    if kind not in COMBINERS:
        raise ValueError(f"unknown combining function {kind!r}; use one of {COMBINERS}")


def combine(values, kind, n_permutations=None):
    """Apply a combining function along the last axis.

    ``tippett`` is the minimum p-value (small is significant), ``fisher``
    is ``-2 sum log p`` with p floored at 1/(B+1) (large is significant),
    and ``max-t`` is the maximum raw statistic (large is significant).
    """
    _check_kind(kind)
    values = np.asarray(values, dtype=float)
    if values.shape[-1] == 0:
        raise ValueError("cannot combine an empty set of tests")
    if kind == "tippett":
        return values.min(axis=-1)
    if kind == "max-t":
        return values.max(axis=-1)
    if n_permutations is None:
        floor = np.finfo(float).tiny
    else:
        floor = 1.0 / (n_permutations + 1.0)
    return -2.0 * np.log(np.maximum(values, floor)).sum(axis=-1)


def combined_pvalue(observed, permuted, kind, rule="plain"):
    """Permutation p-value of a combined test.

    Parameters
    ----------
    observed : array, shape (k,)
        Observed partial p-values, or statistics for ``max-t``.
    permuted : array, shape (B, k)
        Same quantities for each permutation.
    """
    permuted = np.asarray(permuted, dtype=float)
    n_perm = permuted.shape[0]
    t_obs = combine(observed, kind, n_perm)
    t_perm = combine(permuted, kind, n_perm)
    if larger_is_significant(kind):
        count = np.count_nonzero(at_least(t_perm, t_obs))
    else:
        count = np.count_nonzero(at_most(t_perm, t_obs))
    return float(finish_pvalue(count, n_perm, rule))
