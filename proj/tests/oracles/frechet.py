"""Squared Frechet distance on full covariances via scipy's matrix square root."""
import numpy as np
from scipy import linalg

from common import emit

rng = np.random.default_rng(7)
a = rng.normal(size=(40, 5))
b = rng.normal(size=(30, 5)) @ rng.normal(size=(5, 5)) * 0.7 + 0.3
mu1, mu2 = a.mean(0), b.mean(0)
s1, s2 = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
covmean = linalg.sqrtm(s1 @ s2).real
d2 = float(((mu1 - mu2) ** 2).sum() + np.trace(s1 + s2 - 2 * covmean))
emit("frechet", {"features_a": a.tolist(), "features_b": b.tolist(), "d2": d2})
