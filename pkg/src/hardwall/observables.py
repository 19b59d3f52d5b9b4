"""Measurement layer over sampled fields.

Empirical level measures, block means, deviation-from-target-height
counts, extrema, and hitting-measure-weighted harmonic averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .bounds import RegimeSpec, predict_height
from .lattice import LatticeDomain, ShapeSpec, build_domain
from .sampler import Field
from .walk import Geometry, HittingTable, hitting_distribution

__all__ = [
    "Interval",
    "empirical_measure",
    "block_mean",
    "eps_count",
    "harmonic_average",
    "extrema",
    "aggregate",
    "ObservableReport",
]


@dataclass(frozen=True)
class Interval:
    """Half-open interval (a, b]; a=None means -inf, b=None means +inf."""

    a: Optional[float] = None
    b: Optional[float] = None

    def indicator(self, values: np.ndarray) -> np.ndarray:
        ok = np.ones(values.shape, dtype=bool)
        if self.a is not None:
            ok &= values > self.a
        if self.b is not None:
            ok &= values <= self.b
        return ok


def _site_subset(field: Field, A) -> np.ndarray:
    """Resolve A (site indices or coordinate rows) to values of the field."""
    A = np.asarray(A)
    if A.ndim == 1:  # indices into domain.sites
        if A.size == 0:
            raise ValueError("empty site set")
        return field.values[A]
    if A.shape[0] == 0:
        raise ValueError("empty site set")
    return field.values[field.domain.site_indices(A)]


def empirical_measure(field: Field, A, interval: Interval) -> float:
    """L_A(I): fraction of sites of A whose field value lies in I."""
    vals = _site_subset(field, A)
    return float(np.mean(interval.indicator(vals)))


def block_mean(field: Field, block: ShapeSpec, N: Optional[int] = None) -> float:
    """M_N^Lambda: arithmetic mean of the field over Lambda_N = N*Lambda cap Z^d."""
    if N is None:
        N = field.domain.N
    d = field.domain.d
    sub = build_domain(block, N, d, padding=1)
    inside = field.domain.contains_sites(sub.sites)
    if not np.all(inside):
        raise ValueError("block is not contained in the field's domain")
    return float(np.mean(field.values[field.domain.site_indices(sub.sites)]))


def eps_count(field: Field, N: int, eps: float, regime: RegimeSpec) -> float:
    """Fraction of domain sites whose height deviates from the regime's
    target by at least eps (relative)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    target = predict_height(regime, N)
    dev = np.abs(field.values / target - 1.0)
    return float(np.mean(dev >= eps))


def extrema(field: Field) -> tuple:
    return float(field.values.min()), float(field.values.max())


def harmonic_average(field: Field, y, geometry: Geometry,
                     hitting: Optional[HittingTable] = None) -> float:
    """Hitting-measure-weighted average of the field over the shell
    around y (the conditional mean of the field at y given the shell)."""
    y = np.asarray(y, dtype=np.int64)
    if hitting is None:
        hitting = hitting_distribution(np.zeros(field.domain.d, dtype=np.int64), geometry)
    q = hitting.row(np.zeros(field.domain.d, dtype=np.int64))
    shell = hitting.shell + y
    if not np.all(field.domain.contains_sites(shell)):
        raise ValueError("shell around y is not contained in the field's domain")
    return float(q @ field.values[field.domain.site_indices(shell)])


@dataclass
class ObservableReport:
    """Aggregated observables over a sample stream, with batch-mean errors."""

    n_samples: int
    values: dict = dc_field(default_factory=dict)    # name -> mean
    std_errors: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, "values": self.values,
                "std_errors": self.std_errors}


def batch_se(series: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of the mean by batch means (MCMC-correlation aware)."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 2:
        return float("nan")
    k = min(n_batches, n)
    b = n // k
    batches = series[: b * k].reshape(k, b).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(k))


def aggregate(per_sample: dict, n_batches: int = 20) -> ObservableReport:
    """Aggregate {name: per-sample series} into means with batch-mean s.e."""
    names = list(per_sample)
    if not names:
        return ObservableReport(n_samples=0)
    n = len(np.asarray(per_sample[names[0]]))
    report = ObservableReport(n_samples=n)
    for name in names:
        series = np.asarray(per_sample[name], dtype=float)
        report.values[name] = float(series.mean())
        report.std_errors[name] = batch_se(series, n_batches)
    return report
