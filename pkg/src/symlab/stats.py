"""Finite-sample estimators used to turn equality-in-law claims into decisions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st


class StatsError(ValueError):
    pass


@dataclass
class Ensemble:
    """Samples of one scalar observable together with the seeds that produced them.

    Complex samples are split into real and imaginary parts by :meth:`parts`.
    """

    name: str
    samples: np.ndarray
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.size < 2:
            raise StatsError(f"ensemble {self.name!r} needs at least 2 samples")
        if len(set(self.seeds)) != len(self.seeds):
            raise StatsError(f"ensemble {self.name!r} has repeated seeds")

    def parts(self):
        if np.iscomplexobj(self.samples):
            return {
                f"{self.name}.re": Ensemble(f"{self.name}.re", self.samples.real, list(self.seeds)),
                f"{self.name}.im": Ensemble(f"{self.name}.im", self.samples.imag, list(self.seeds)),
            }
        return {self.name: self}


def _values(e):
    x = np.asarray(e.samples if isinstance(e, Ensemble) else e, dtype=float).ravel()
    return x


def mean_ci(e, level=0.95):
    """Sample mean and normal-approximation half-width at confidence ``level``."""
    if not 0 < level < 1:
        raise StatsError(f"level = {level} must lie in (0, 1)")
    x = _values(e)
    if x.size < 2:
        raise StatsError("mean_ci needs at least 2 samples")
    z = _st.norm.ppf(0.5 + level / 2)
    return float(np.mean(x)), float(z * np.std(x, ddof=1) / np.sqrt(x.size))


def ks_two_sample(e1, e2):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    x, y = _values(e1), _values(e2)
    if x.size == 0 or y.size == 0:
        raise StatsError("ks_two_sample needs two non-empty ensembles")
    res = _st.ks_2samp(x, y, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_one_sample(e, cdf):
    """KS test of ``e`` against a continuous distribution function."""
    x = _values(e)
    if x.size == 0:
        raise StatsError("ks_one_sample needs a non-empty ensemble")
    res = _st.kstest(x, cdf)
    return float(res.statistic), float(res.pvalue)


def loglog_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise StatsError("loglog_slope needs at least 3 paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise StatsError("loglog_slope needs positive values")
    return linear_fit(np.log(x), np.log(y))[:2]


def linear_fit(x, y):
    """Slope, its standard error and ``R^2`` of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ yc) / sxx
    resid = yc - slope * xc
    rss = float(resid @ resid)
    se = float(np.sqrt(rss / (n - 2) / sxx)) if n > 2 else float("nan")
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return slope, se, r2


def wrapped_normal_cdf(x, variance, mean=0.0, terms=8):
    """Distribution function on ``[-pi, pi)`` of ``N(mean, variance)`` wrapped to that interval."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(variance)
    k = np.arange(-terms, terms + 1)[:, None] if x.ndim else np.arange(-terms, terms + 1)
    shift = 2 * np.pi * k
    xx = x[None] if x.ndim else x
    tot = np.sum(_st.norm.cdf((xx - mean + shift) / s) - _st.norm.cdf((-np.pi - mean + shift) / s), axis=0)
    return np.clip(tot, 0.0, 1.0)


def wrap_angle(x):
    """Representative of ``x`` modulo ``2 pi`` in ``[-pi, pi)``."""
    return np.mod(np.asarray(x) + np.pi, 2 * np.pi) - np.pi
