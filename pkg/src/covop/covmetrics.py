"""Covariance estimation and distances between covariance operators.

Covariance operators are discretised as p x p kernel matrices on the
shared grid. All functions accept single matrices or stacks of matrices
(leading batch axes) so the permutation engine can evaluate thousands of
resampled groups at once.
"""

from __future__ import annotations

import numpy as np

from .data import CurveGroup, FunctionalDataset
from .exceptions import DegenerateGroupError, InvalidInputError

COVARIANCE_MODES = ("about-group-mean", "about-zero")
METRICS = ("hs", "sqrt", "procrustes")

SYMMETRY_RTOL = 1e-10
EIGEN_CLIP_RTOL = 1e-10


def _check_mode(mode):
    if mode not in COVARIANCE_MODES:
        raise ValueError(f"unknown covariance mode {mode!r}; use one of {COVARIANCE_MODES}")


def batch_covariance(values, weights, mode="about-group-mean"):
    """Covariances of stacked groups.

    Parameters
    ----------
    values : ndarray, shape (..., n, p)
        Curves; unobserved rows may hold anything finite.
    weights : ndarray, shape (..., n)
        1 for observed rows, 0 otherwise.
    mode : {'about-group-mean', 'about-zero'}
        ``about-group-mean`` subtracts the observed-row mean and divides by
        kappa - 1; ``about-zero`` returns the second moment divided by kappa.

    Returns
    -------
    ndarray, shape (..., p, p)
    """
    _check_mode(mode)
    w = np.asarray(weights, dtype=float)
    x = np.asarray(values, dtype=float) * w[..., None]
    kappa = w.sum(axis=-1)
    if np.any(kappa < 2):
        raise DegenerateGroupError("a group has fewer than 2 observed curves")
    if mode == "about-group-mean":
        mean = x.sum(axis=-2) / kappa[..., None]
        x = (x - mean[..., None, :]) * w[..., None]
        denom = kappa - 1.0
    else:
        denom = kappa
    cov = np.swapaxes(x, -1, -2) @ x
    return cov / denom[..., None, None]


def estimate_covariance(group, mode="about-group-mean"):
    """Sample covariance of the observed curves of `group`."""
    if not isinstance(group, CurveGroup):
        group = CurveGroup(group)
    group.require_estimable()
    return batch_covariance(group.filled(), group.observed, mode)


def center_groups(dataset: FunctionalDataset) -> FunctionalDataset:
    """Subtract each group's observed-row mean from its observed rows."""
    dataset.require_estimable()
    groups = []
    for g in dataset.groups:
        mean = g.values[g.observed].mean(axis=0)
        vals = np.array(g.values)
        vals[g.observed] -= mean
        groups.append(CurveGroup(vals, g.observed))
    return dataset.replace_groups(groups)


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    return a


def check_symmetric(sigma, name="covariance"):
    """Validate symmetry within 1e-10 * max|entry| and return the symmetrised matrix."""
    sigma = _as_square(sigma, name)
    scale = np.abs(sigma).max(axis=(-1, -2), keepdims=True)
    asym = np.abs(sigma - np.swapaxes(sigma, -1, -2))
    if np.any(asym > SYMMETRY_RTOL * scale):
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (sigma + np.swapaxes(sigma, -1, -2))


def _clipped_eigh(sigma):
    sigma = check_symmetric(sigma)
    evals, evecs = np.linalg.eigh(sigma)
    lam_max = np.maximum(evals[..., -1:], 0.0)
    if np.any(evals < -EIGEN_CLIP_RTOL * lam_max):
        raise InvalidInputError(
            "matrix has negative eigenvalues beyond round-off; it is not PSD"
        )
    return np.clip(evals, 0.0, None), evecs


def matrix_sqrt(sigma):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues within 1e-10 * lambda_max below zero are clipped to zero;
    anything more negative raises :class:`InvalidInputError`.
    """
    evals, evecs = _clipped_eigh(sigma)
    return (evecs * np.sqrt(evals)[..., None, :]) @ np.swapaxes(evecs, -1, -2)


def _same_shape(a, b):
    a = _as_square(a, "first covariance")
    b = _as_square(b, "second covariance")
    if a.shape[-2:] != b.shape[-2:]:
        raise InvalidInputError(f"dimension mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")
    return a, b


def _fro(a):
    return np.sqrt(np.sum(a * a, axis=(-1, -2)))


def dist_hs(a, b, spacing=None):
    """Hilbert-Schmidt (Frobenius) distance.

    ``spacing`` multiplies the result by the grid step, approximating the
    operator norm; it does not change permutation p-values.
    """
    a, b = _same_shape(a, b)
    d = _fro(a - b)
    if spacing is not None:
        d = d * spacing
    return d


def sqrt_distance_from_roots(la, lb):
    return _fro(la - lb)


def procrustes_distance_from_roots(la, lb):
    # any factors with L L' = Sigma give the same value
    nuclear = np.linalg.svd(np.swapaxes(lb, -1, -2) @ la, compute_uv=False).sum(axis=-1)
    d2 = np.sum(la * la, axis=(-1, -2)) + np.sum(lb * lb, axis=(-1, -2)) - 2.0 * nuclear
    return np.sqrt(np.maximum(d2, 0.0))


def dist_sqrt(a, b):
    """Square root distance ``||a^(1/2) - b^(1/2)||_F``."""
    a, b = _same_shape(a, b)
    return sqrt_distance_from_roots(matrix_sqrt(a), matrix_sqrt(b))


def dist_procrustes(a, b):
    """Procrustes size-and-shape distance, ``min_R ||L_a - L_b R||_F`` over orthogonal R."""
    a, b = _same_shape(a, b)
    return procrustes_distance_from_roots(matrix_sqrt(a), matrix_sqrt(b))


def procrustes_aligner(a, b):
    """Orthogonal R minimising ``||L_a - L_b R||_F`` for symmetric roots L_a, L_b."""
    a, b = _same_shape(a, b)
    la, lb = matrix_sqrt(a), matrix_sqrt(b)
    u, _, vt = np.linalg.svd(np.swapaxes(lb, -1, -2) @ la)
    return u @ vt


def distance(a, b, metric="sqrt"):
    """Dispatch to one of :data:`METRICS`."""
    if metric == "hs":
        return dist_hs(a, b)
    if metric == "sqrt":
        return dist_sqrt(a, b)
    if metric == "procrustes":
        return dist_procrustes(a, b)
    raise ValueError(f"unknown metric {metric!r}; use one of {METRICS}")


class CovarianceTransform:
    """Precomputes what a metric needs from a stack of covariances.

    For ``hs`` that is the covariance itself, for ``sqrt`` and
    ``procrustes`` the symmetric square root, so each group root is
    computed once even when it enters several pairs.
    """

    def __init__(self, metric):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; use one of {METRICS}")
        self.metric = metric

    def prepare(self, cov):
        if self.metric == "hs":
            return check_symmetric(cov)
        return matrix_sqrt(cov)

    def distance(self, fa, fb):
        if self.metric == "hs":
            return _fro(fa - fb)
        if self.metric == "sqrt":
            return sqrt_distance_from_roots(fa, fb)
        return procrustes_distance_from_roots(fa, fb)
