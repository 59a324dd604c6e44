"""Estimator-style front end to the permutation test."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .permengine import DEFAULT_ADJUSTMENT, PermutationPlan, check_combination, global_test
from .validation import check_functional_data


class CovarianceEqualityTest(BaseEstimator):
    """Test whether several groups of curves share one covariance operator.

    Pairwise distances between group covariances are combined into a
    global permutation test; the partial tests are adjusted for
    family-wise error.

    Parameters
    ----------
    metric : {'sqrt', 'procrustes', 'hs'}, default='sqrt'
    combiner : {'tippett', 'max-t', 'fisher'}, default='tippett'
    strategy : {'synchronized', 'pooled', 'paired'}, default='synchronized'
    adjustment : {'tippett', 'minp', 'max-t', 'closed'} or None
        None picks the step-down procedure matching `combiner`.
    n_permutations : int, default=1000
    alpha : float, default=0.05
    p_value_rule : {'plain', 'add-one'}, default='plain'
    covariance_mode : {'about-group-mean', 'about-zero'}
    random_state : int or None, default=0
        Seed of the permutation stream; None draws fresh entropy.
    n_jobs : int, default=1

    Attributes
    ----------
    result_ : TestResult
    global_p_value_ : float
    partial_p_values_, adjusted_p_values_, statistics_ : ndarray of shape (k,)
    pairs_ : list of (label_i, label_j)
    reject_ : bool
        Global decision at `alpha`.
    rejected_pairs_ : ndarray of bool, shape (k,)
    groups_ : list of str
    """

    def __init__(
        self,
        metric="sqrt",
        combiner="tippett",
        strategy="synchronized",
        adjustment=None,
        n_permutations=1000,
        alpha=0.05,
        p_value_rule="plain",
        covariance_mode="about-group-mean",
        random_state=0,
        n_jobs=1,
    ):
        self.metric = metric
        self.combiner = combiner
        self.strategy = strategy
        self.adjustment = adjustment
        self.n_permutations = n_permutations
        self.alpha = alpha
        self.p_value_rule = p_value_rule
        self.covariance_mode = covariance_mode
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
        if isinstance(self.random_state, np.random.Generator):
            return int(self.random_state.integers(2**63))
        return int(self.random_state)

    def fit(self, X, y, observed=None, grid=None):
        """Run the test on curves `X` (rows) labelled by group `y`."""
        adjustment = self.adjustment or DEFAULT_ADJUSTMENT.get(self.combiner)
        check_combination(self.combiner, adjustment)
        dataset = check_functional_data(X, y, observed, grid)
        plan = PermutationPlan(
            strategy=self.strategy,
            n_permutations=self.n_permutations,
            seed=self._seed(),
            p_value_rule=self.p_value_rule,
        )
        res = global_test(
            dataset,
            metric=self.metric,
            plan=plan,
            combiner=self.combiner,
            adjustment=adjustment,
            alpha=self.alpha,
            covariance_mode=self.covariance_mode,
            n_jobs=self.n_jobs,
        )
        self.result_ = res
        self.groups_ = list(dataset.labels)
        self.n_features_in_ = dataset.p
        self.global_p_value_ = res.global_p
        self.partial_p_values_ = res.partial_p
        self.adjusted_p_values_ = res.adjusted_p
        self.statistics_ = res.observed_stats
        self.pairs_ = [(self.groups_[i], self.groups_[j]) for i, j in res.pairs]
        self.reject_ = bool(res.global_p <= self.alpha)
        self.rejected_pairs_ = res.rejected
        return self

    def pvalue_matrix(self, adjusted=True):
        """q x q matrix with entry (i, j), j < i, holding the pair's p-value; NaN elsewhere."""
        check_is_fitted(self, "result_")
        q = len(self.groups_)
        values = self.adjusted_p_values_ if adjusted else self.partial_p_values_
        out = np.full((q, q), np.nan)
        for (i, j), v in zip(self.result_.pairs, values):
            out[j, i] = v
        return out
