"""Common spatial patterns: covariances, filters and log-variance features."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateEpoch, ShapeMismatch, SingularComposite

__all__ = [
    "LOG_EPSILON", "CspModel", "shrink_covariance", "trial_covariance",
    "epoch_covariances", "fit_csp", "whitened_eig", "apply_csp",
    "log_variance_from_covariance",
]

LOG_EPSILON = 1e-12


def _as_array(epoch) -> np.ndarray:
    return np.asarray(getattr(epoch, "data", epoch), dtype=np.float64)


def shrink_covariance(cov: np.ndarray, shrink: float) -> np.ndarray:
    """Blend toward the identity scaled to the same trace:
    ``(1 - shrink) * cov + shrink * trace(cov) / C * I``."""
    if not 0.0 <= shrink <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrink}")
    c = cov.shape[0]
    if shrink == 0.0:
        return np.array(cov, dtype=np.float64)
    return (1.0 - shrink) * cov + shrink * (np.trace(cov) / c) * np.eye(c)


def trial_covariance(epoch) -> np.ndarray:
    """Trace-normalized spatial covariance of one mean-centered epoch."""
    x = _as_array(epoch)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DegenerateEpoch(f"epoch needs shape (channels, >=2 samples), got {x.shape}")
    x = x - x.mean(axis=1, keepdims=True)
    s = x @ x.T
    tr = np.trace(s)
    if not tr > 0:
        raise DegenerateEpoch("epoch has zero variance on every channel")
    s = s / tr
    return 0.5 * (s + s.T)


def epoch_covariances(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch version over a (trials, channels, samples) stack.

    Returns ``(normalized, sample)``: the trace-normalized covariances used
    to fit filters, and the unnormalized sample covariances (ddof=1) from
    which log-variance features follow without touching the signals again.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 3 or data.shape[2] < 2:
        raise DegenerateEpoch(f"need (trials, channels, >=2 samples), got {data.shape}")
    # one product per trial: results must not depend on how trials are batched
    s = np.empty((data.shape[0], data.shape[1], data.shape[1]))
    for i, trial in enumerate(data):
        x = trial - trial.mean(axis=1, keepdims=True)
        s[i] = x @ x.T
    s = 0.5 * (s + s.transpose(0, 2, 1))
    tr = np.trace(s, axis1=1, axis2=2)
    if np.any(~(tr > 0)):
        bad = int(np.flatnonzero(~(tr > 0))[0])
        raise DegenerateEpoch(f"trial {bad} has zero variance on every channel", trial=bad)
    return s / tr[:, None, None], s / (data.shape[2] - 1)


@dataclass(frozen=True)
class CspModel:
    """2m spatial filters as rows, ordered by eigenvalue descending."""

    filters: np.ndarray
    eigenvalues: np.ndarray
    m: int

    @property
    def n_channels(self) -> int:
        return self.filters.shape[1]

    def to_dict(self) -> dict:
        return {"m": self.m, "filters": self.filters.tolist(),
                "eigenvalues": self.eigenvalues.tolist()}

    @classmethod
    def from_dict(cls, d) -> "CspModel":
        return cls(np.asarray(d["filters"], dtype=float),
                   np.asarray(d["eigenvalues"], dtype=float), int(d["m"]))


def whitened_eig(sigma_a: np.ndarray, sigma_b: np.ndarray, rtol: float = 1e-10):
    """Solve ``sigma_a w = lam (sigma_a + sigma_b) w`` by whitening.

    Returns eigenvalues (descending) and the full eigenvector matrix ``W``
    with one filter per row, normalized so ``W (sigma_a + sigma_b) W.T = I``.
    """
    composite = sigma_a + sigma_b
    composite = 0.5 * (composite + composite.T)
    d, u = np.linalg.eigh(composite)
    if d[0] <= rtol * max(d[-1], 0.0) or d[-1] <= 0:
        raise SingularComposite(
            f"composite covariance is singular (eigenvalues {d[0]:.3g} .. {d[-1]:.3g})")
    p = (u / np.sqrt(d)).T  # whitening: p @ composite @ p.T = I
    s = p @ sigma_a @ p.T
    lam, v = np.linalg.eigh(0.5 * (s + s.T))
    order = np.argsort(lam)[::-1]
    lam, v = lam[order], v[:, order]
    w = v.T @ p
    # deterministic sign: largest-magnitude coefficient positive
    idx = np.argmax(np.abs(w), axis=1)
    w = w * np.sign(w[np.arange(len(w)), idx])[:, None]
    return np.clip(lam, 0.0, 1.0), w


def fit_csp(class_a: Sequence[np.ndarray], class_b: Sequence[np.ndarray], m: int = 3,
            shrink: float = 0.05) -> CspModel:
    """Fit CSP filters separating covariance sets `class_a` and `class_b`.

    The m filters with the largest eigenvalues maximize class-a variance
    relative to the composite; the m smallest do so for class b.
    """
    class_a = np.asarray(class_a, dtype=np.float64)
    class_b = np.asarray(class_b, dtype=np.float64)
    if class_a.ndim == 2:
        class_a = class_a[None]
    if class_b.ndim == 2:
        class_b = class_b[None]
    if len(class_a) == 0 or len(class_b) == 0:
        raise ValueError("both classes need at least one covariance")
    c = class_a.shape[-1]
    if m < 1 or 2 * m > c:
        raise ValueError(f"need 1 <= m and 2m <= {c} channels, got m={m}")
    sa = shrink_covariance(class_a.mean(axis=0), shrink)
    sb = shrink_covariance(class_b.mean(axis=0), shrink)
    lam, w = whitened_eig(sa, sb)
    keep = np.r_[np.arange(m), np.arange(c - m, c)]
    return CspModel(w[keep], lam[keep], m)


def apply_csp(model: CspModel, epoch) -> np.ndarray:
    """Log-variance of each spatially filtered row (sample variance, ddof=1)."""
    x = _as_array(epoch)
    if x.ndim != 2 or x.shape[0] != model.n_channels:
        raise ShapeMismatch(f"epoch shape {x.shape} does not match {model.n_channels} channels")
    z = model.filters @ x
    return np.log(z.var(axis=1, ddof=1) + LOG_EPSILON)


def log_variance_from_covariance(filters: np.ndarray, sample_cov: np.ndarray) -> np.ndarray:
    """Same features as :func:`apply_csp`, computed from sample covariances.

    `sample_cov` is (channels, channels) or a (trials, channels, channels)
    stack as returned by :func:`epoch_covariances`.
    """
    var = np.einsum("kc,...cd,kd->...k", filters, sample_cov, filters)
    return np.log(np.maximum(var, 0.0) + LOG_EPSILON)
