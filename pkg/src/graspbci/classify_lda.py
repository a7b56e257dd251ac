"""Regularized binary LDA and the one-versus-rest CSP+LDA decoder."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import MissingClass, ShapeMismatch, SingularCovariance
from .features_csp import (CspModel, apply_csp, epoch_covariances, fit_csp,
                           log_variance_from_covariance, shrink_covariance)

__all__ = [
    "LdaModel", "OvrModel", "fit_lda", "fit_ovr", "fit_ovr_covariances", "predict_ovr",
    "Decoder", "CspOvrLda", "CovarianceStack",
]

N_CLASSES = 5


@dataclass(frozen=True)
class LdaModel:
    w: np.ndarray
    b: float

    def score(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.w + self.b

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.score(x) > 0).astype(int)

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": float(self.b)}

    @classmethod
    def from_dict(cls, d) -> "LdaModel":
        return cls(np.asarray(d["w"], dtype=float), float(d["b"]))


def _scatter(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=0)
    return xc.T @ xc


def fit_lda(features: np.ndarray, labels: Sequence[int], shrink: float = 0.0) -> LdaModel:
    """Two-class LDA with equal priors; positive scores mean class 1.

    The pooled within-class covariance is shrunk toward the identity scaled
    to its own trace, as for CSP.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels)
    x0, x1 = x[y == 0], x[y == 1]
    if len(x0) == 0 or len(x1) == 0:
        raise MissingClass("LDA needs samples from both classes")
    if len(x0) + len(x1) != len(x):
        raise ValueError("binary labels must be 0 or 1")
    dof = max(len(x) - 2, 1)
    # a + b == b + a in IEEE arithmetic, so swapping labels negates w, b exactly
    pooled = (_scatter(x0) + _scatter(x1)) / dof
    s = shrink_covariance(pooled, shrink)
    d = s.shape[0]
    if not np.trace(s) > 0 or np.linalg.matrix_rank(s, tol=1e-12 * max(np.trace(s), 1e-300)) < d:
        raise SingularCovariance(
            f"pooled covariance is singular (shrink={shrink}); increase lda shrinkage")
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    w = np.linalg.solve(s, mu1 - mu0)
    b = -float(w @ (mu0 + mu1)) / 2.0
    return LdaModel(w, b)


@dataclass(frozen=True)
class OvrModel:
    """One (CSP, LDA) pair per class; the highest discriminant wins."""

    per_class: tuple[tuple[CspModel, LdaModel], ...]
    class_ids: tuple[int, ...] = tuple(range(N_CLASSES))

    def scores(self, epoch) -> np.ndarray:
        return np.array([lda.score(apply_csp(csp, epoch)) for csp, lda in self.per_class])

    def scores_from_covariance(self, sample_cov: np.ndarray) -> np.ndarray:
        """(trials, classes) discriminant scores from sample covariances."""
        cols = [lda.score(log_variance_from_covariance(csp.filters, sample_cov))
                for csp, lda in self.per_class]
        return np.stack(cols, axis=-1)

    def predict_covariance(self, sample_cov: np.ndarray) -> np.ndarray:
        scores = self.scores_from_covariance(sample_cov)
        return np.asarray(self.class_ids)[np.argmax(scores, axis=-1)]

    def to_json(self) -> str:
        return json.dumps({
            "class_ids": list(self.class_ids),
            "per_class": [{"csp": csp.to_dict(), "lda": lda.to_dict()}
                          for csp, lda in self.per_class],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "OvrModel":
        d = json.loads(text)
        pairs = tuple((CspModel.from_dict(p["csp"]), LdaModel.from_dict(p["lda"]))
                      for p in d["per_class"])
        return cls(pairs, tuple(d["class_ids"]))


def fit_ovr_covariances(norm_covs: np.ndarray, sample_covs: np.ndarray, labels,
                        m: int = 3, shrink_csp: float = 0.05,
                        shrink_lda: float = 0.0,
                        class_ids: Sequence[int] = tuple(range(N_CLASSES))) -> OvrModel:
    """Fit the one-versus-rest decoder from precomputed trial covariances."""
    y = np.asarray(labels)
    missing = [k for k in class_ids if not np.any(y == k)]
    if missing:
        raise MissingClass(f"training data lacks class(es) {missing}", classes=missing)
    pairs = []
    for k in class_ids:
        target = y == k
        csp = fit_csp(norm_covs[target], norm_covs[~target], m, shrink_csp)
        feats = log_variance_from_covariance(csp.filters, sample_covs)
        pairs.append((csp, fit_lda(feats, target.astype(int), shrink_lda)))
    return OvrModel(tuple(pairs), tuple(class_ids))


def fit_ovr(trials, m: int = 3, shrink_csp: float = 0.05, shrink_lda: float = 0.0) -> OvrModel:
    """Fit on a TrialSet (or anything with ``.data`` and ``.labels``)."""
    norm, sample = epoch_covariances(trials.data)
    return fit_ovr_covariances(norm, sample, trials.labels, m, shrink_csp, shrink_lda)


def predict_ovr(model: OvrModel, epoch) -> int:
    x = np.asarray(getattr(epoch, "data", epoch))
    for csp, _ in model.per_class:
        if x.ndim != 2 or x.shape[0] != csp.n_channels:
            raise ShapeMismatch(f"epoch shape {x.shape} does not match "
                                f"{csp.n_channels}-channel model")
    return int(model.class_ids[int(np.argmax(model.scores(x)))])


# ---------------------------------------------------------------------------
# decoder seam used by the evaluation harness

class Decoder(Protocol):
    """Anything the cross-validation harness can train and test.

    ``prepare`` maps a (trials, channels, samples) stack to a per-trial
    representation supporting integer-array indexing; it must not look at
    labels, so it can be computed once for all folds.
    """

    name: str

    def prepare(self, data: np.ndarray): ...

    def fit(self, prepared, labels: np.ndarray): ...

    def predict(self, model, prepared) -> np.ndarray: ...


@dataclass(frozen=True)
class CovarianceStack:
    norm: np.ndarray
    sample: np.ndarray

    def __len__(self):
        return len(self.norm)

    def __getitem__(self, idx) -> "CovarianceStack":
        return CovarianceStack(self.norm[idx], self.sample[idx])


@dataclass(frozen=True)
class CspOvrLda:
    m: int = 3
    shrink_csp: float = 0.05
    shrink_lda: float = 0.0
    name: str = "csp-ovr-lda"

    def prepare(self, data: np.ndarray) -> CovarianceStack:
        return CovarianceStack(*epoch_covariances(data))

    def fit(self, prepared: CovarianceStack, labels) -> OvrModel:
        return fit_ovr_covariances(prepared.norm, prepared.sample, labels,
                                   self.m, self.shrink_csp, self.shrink_lda)

    def predict(self, model: OvrModel, prepared: CovarianceStack) -> np.ndarray:
        return model.predict_covariance(prepared.sample)
