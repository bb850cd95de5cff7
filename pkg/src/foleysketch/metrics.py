"""Evaluation metrics: Frechet distance, KL, inception score, scaled cosine,
envelope correlation, and the band-energy class read-out.

These are desk-scale analogs computed over toy features (band energies
and envelope statistics), not scores from pretrained evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsp import MelSpectrogram


@dataclass
class GaussianStats:
    mean: np.ndarray  # (d,)
    cov: np.ndarray   # (d, d)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if self.mean.ndim != 1 or self.cov.shape != (len(self.mean),) * 2:
            raise ValueError("mean/cov dimension mismatch")


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Mean and covariance of a feature matrix (n, d)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need at least 2 feature rows")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    return GaussianStats(mean, np.atleast_2d(cov))


def _validate_cov(cov: np.ndarray) -> np.ndarray:
    if np.abs(cov - cov.T).max() > 1e-9:
        raise ValueError("invalid covariance: not symmetric")
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals.min() < -1e-9:
        raise ValueError("invalid covariance: negative eigenvalue")
    return cov


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD matrix square root via eigendecomposition."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("dimension mismatch")
    cov_a = _validate_cov(a.cov)
    cov_b = _validate_cov(b.cov)
    sqrt_a = _sqrtm_psd(cov_a)
    inner = _sqrtm_psd(sqrt_a @ cov_b @ sqrt_a)
    fd = float(np.sum((a.mean - b.mean) ** 2)
               + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner))
    return max(fd, 0.0)


def kl_divergence(p, q, q_floor: float = 1e-12) -> float:
    """Sum p_i ln(p_i / q_i) with q floored; p, q must sum to 1 +- 1e-9."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("dimension mismatch")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("invalid distribution: negative entries")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("invalid distribution: must sum to 1")
    q = np.maximum(q, q_floor)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def inception_score(class_distributions: np.ndarray) -> float:
    """exp(mean_i KL(row_i || marginal)); rows are per-sample distributions."""
    rows = np.asarray(class_distributions, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("need a (n, k) matrix of distributions")
    marginal = rows.mean(axis=0)
    kls = [kl_divergence(row, marginal) for row in rows]
    return float(np.exp(np.mean(kls)))


def scaled_cosine(a, b, gamma: float = 100.0) -> float:
    """gamma * cos(a, b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm input")
    return float(gamma * (a @ b) / (na * nb))


def envelope_correlation(a, b) -> float:
    """Pearson correlation of two envelopes (accepts curves or arrays)."""
    xa = np.asarray(getattr(a, "values", a), dtype=np.float64)
    xb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if xa.shape != xb.shape:
        raise ValueError("dimension mismatch")
    da = xa - xa.mean()
    db = xb - xb.mean()
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    tol_a = 1e-9 * max(1.0, float(np.abs(xa).max(initial=0.0)))
    tol_b = 1e-9 * max(1.0, float(np.abs(xb).max(initial=0.0)))
    if na <= tol_a or nb <= tol_b:
        raise ValueError("zero variance")
    return float(da @ db / (na * nb))


def band_energy_classify(spec: MelSpectrogram,
                         class_bands: Sequence[np.ndarray]) -> tuple[int, np.ndarray]:
    """Class read-out from summed mel-band energies.

    Returns (argmax class, softmax distribution over the summed exp-mel
    band energies).  Ties break toward the lowest class id.
    """
    energies = []
    power = np.exp(np.minimum(spec.values, 30.0))  # cap avoids overflow on wild inputs
    for band in class_bands:
        band = np.asarray(band, dtype=int)
        if band.size == 0:
            raise ValueError("empty band")
        energies.append(power[:, band].sum())
    e = np.asarray(energies)
    e = e - e.max()
    probs = np.exp(e)
    probs /= probs.sum()
    best = int(np.argmax(e == e.max()))  # first (lowest-id) maximum
    return best, probs
