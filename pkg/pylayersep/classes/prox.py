# prox.py - closed-form solutions of the augmented-Lagrangian sub-problems

from dataclasses import dataclass

import numpy as np

from pylayersep.classes.errors import DimensionError, ProxError


@dataclass(frozen=True, eq=False)
class ProxParams:
    """Threshold with optional per-element nonnegative weights"""
    threshold: float
    weights: np.ndarray = None

    def __post_init__(self):
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ProxError(f"threshold must be finite and >= 0, got {self.threshold}")
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=np.float64)
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise ProxError("weights must be finite and >= 0")
            object.__setattr__(self, 'weights', weights)

    def shrink(self, x):
        if self.weights is None:
            return soft_threshold(x, self.threshold)
        return weighted_soft_threshold(x, self.threshold, self.weights)


def svt(M, tau):
    """Singular value thresholding: argmin_X τ‖X‖∗ + ½‖X − M‖²_F"""
    M = np.asarray(M, dtype=np.float64)
    if tau < 0:
        raise ProxError(f"tau must be >= 0, got {tau}")
    if not np.all(np.isfinite(M)):
        raise ProxError("svt input contains non-finite entries")
    if tau == 0:
        return M.copy()
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise ProxError(f"SVD failed: {e}") from e
    shrunk = np.maximum(s - tau, 0.0)
    keep = shrunk > 0
    return (U[:, keep] * shrunk[keep]) @ Vt[keep]


def soft_threshold(x, tau):
    """argmin_y τ‖y‖₁ + ½‖y − x‖²"""
    if tau < 0:
        raise ProxError(f"tau must be >= 0, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def weighted_soft_threshold(x, tau, w):
    """argmin_y τ‖w⊙y‖₁ + ½‖y − x‖²; per-element threshold τ·w"""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if tau < 0 or np.any(w < 0):
        raise ProxError("threshold and weights must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - tau * w, 0.0)


def project_nonneg(M):
    """Euclidean projection onto the nonnegative orthant"""
    return np.maximum(np.asarray(M, dtype=np.float64), 0.0)


def solve_quadratic_gradient(other, d_i, lam2, mu, anchor, threshold=0.0, weights=None):
    """Elementwise minimizer of

        λ₂(dI − y − other)² + (μ/2)(y − anchor)² + threshold·w·|y|

    The quadratic part collapses to ((2λ₂ + μ)/2)(y − q)² with
    q = (2λ₂(dI − other) + μ·anchor)/(2λ₂ + μ), so the ℓ¹ part is a soft
    threshold of q at threshold·w/(2λ₂ + μ).
    """
    if mu <= 0:
        raise ProxError(f"mu must be > 0, got {mu}")
    if lam2 < 0:
        raise ProxError(f"lambda2 must be >= 0, got {lam2}")
    other = np.asarray(other, dtype=np.float64)
    d_i = np.asarray(d_i, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if not (other.shape == d_i.shape == anchor.shape):
        raise DimensionError(f"non-conforming shapes {other.shape}, {d_i.shape}, {anchor.shape}")

    curvature = 2.0 * lam2 + mu
    target = (2.0 * lam2 * (d_i - other) + mu * anchor) / curvature
    if weights is None:
        return soft_threshold(target, threshold / curvature)
    return weighted_soft_threshold(target, threshold / curvature, weights)
