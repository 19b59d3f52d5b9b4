"""Closed-form analytic toolbox.

Bennett's inequality, the Dirichlet-energy relative entropy of a shift,
the entropy and Jensen event inequalities, and the regime predictors for
large-deviation rates and repulsion heights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "RegimeSpec",
    "bennett_bound",
    "shift_entropy",
    "entropy_lower_bound",
    "jensen_conditional_bound",
    "predict_rate",
    "predict_height",
    "flat_wall_height",
    "naive_translate_level",
]


@dataclass(frozen=True)
class RegimeSpec:
    """Inputs of the rate/height predictors.

    regime: "critical" (needs G and Q), "sub_gaussian" (G only),
    "super_gaussian" (Q and beta).
    """

    regime: str
    G: float = 0.0
    Q: float = 0.0
    beta: float = 0.5
    cap_D: float = 0.0
    d: int = 3

    def __post_init__(self):
        if self.regime not in ("critical", "sub_gaussian", "super_gaussian"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime in ("critical", "sub_gaussian") and not self.G > 0:
            raise ValueError("G must be > 0")
        if self.regime in ("critical", "super_gaussian") and not self.Q > 0:
            raise ValueError("Q must be > 0")
        if self.regime == "super_gaussian" and not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.cap_D < 0:
            raise ValueError("capacity must be >= 0")


def bennett_bound(n: int, var1: float, t: float) -> float:
    """P(|sum of n centered IID variables bounded by 1| > t)
    <= 2 exp(-t^2 / (2 n var1 + 2t/3)), clamped at the trivial bound 2."""
    if not 0 < var1 <= 1:
        raise ValueError("var1 must lie in (0, 1]")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 2.0
    return min(2.0, 2.0 * math.exp(-(t * t) / (2.0 * n * var1 + 2.0 * t / 3.0)))


def shift_entropy(psi: np.ndarray, d: int) -> float:
    """Relative entropy of the field shifted by psi: the Dirichlet energy
    (1/4d) sum over ordered neighbor pairs of (psi_x - psi_y)^2.

    psi is a d-dimensional array of the finitely supported profile,
    extended by zero outside the array.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != d:
        raise ValueError(f"psi must be a {d}-dimensional array")
    padded = np.pad(psi, 1)
    total = 0.0
    for axis in range(d):
        diff = np.diff(padded, axis=axis)
        total += float(np.sum(diff * diff))
    # each unordered edge counted once above, ordered pairs double it
    return 2.0 * total / (4.0 * d)


def entropy_lower_bound(H: float, p_mu_of_E: float) -> float:
    """Lower bound on log(P_nu(E) / P_mu(E)): -(H + 1/e) / P_mu(E)."""
    if H < 0:
        raise ValueError("relative entropy must be >= 0")
    if not 0 < p_mu_of_E <= 1:
        raise ValueError("P_mu(E) must lie in (0, 1]")
    return -(H + math.exp(-1.0)) / p_mu_of_E


def jensen_conditional_bound(log_mgf_at_t: float, log_p_E: float, t: float) -> float:
    """Upper bound on E[Y | E]: (1/t) log E[e^{tY}] - (1/t) log P(E)."""
    if t <= 0:
        raise ValueError("t must be > 0")
    if not (math.isfinite(log_mgf_at_t) and math.isfinite(log_p_E)):
        raise ValueError("inputs must be finite")
    return (log_mgf_at_t - log_p_E) / t


def predict_rate(regime: RegimeSpec):
    """(rate constant, log exponent gamma): the asymptotic decay of
    log P(hard-wall event) is -constant * N^{d-2} (log N)^gamma."""
    if regime.regime == "critical":
        return 2.0 * (regime.G + regime.Q) * regime.cap_D, 1.0
    if regime.regime == "sub_gaussian":
        return 2.0 * regime.G * regime.cap_D, 1.0
    return (4.0 * regime.Q) ** (1.0 / regime.beta) * regime.cap_D / 2.0, 1.0 / regime.beta


def predict_height(regime: RegimeSpec, N: int) -> float:
    """Target repulsion height at scale N.

    critical: sqrt(4 (G+Q) log N); sub-Gaussian walls: sqrt(4 G log N);
    super-Gaussian walls: (4 Q log N)^{1/(2 beta)}.
    """
    if N < 3:
        raise ValueError("N must be >= 3")
    logN = math.log(N)
    if regime.regime == "critical":
        return math.sqrt(4.0 * (regime.G + regime.Q) * logN)
    if regime.regime == "sub_gaussian":
        return math.sqrt(4.0 * regime.G * logN)
    return (4.0 * regime.Q * logN) ** (1.0 / (2.0 * regime.beta))


def flat_wall_height(G: float, N: int) -> float:
    """Reference repulsion height above a flat wall: sqrt(4 G log N)."""
    return math.sqrt(4.0 * G * math.log(N))


def naive_translate_level(G: float, d: int, N: int) -> float:
    """Diagnostic only: the naive global-translate level sqrt(2 d G log N).

    This is the typical field minimum over the domain, NOT the optimal
    repulsion height; exposed for comparison plots.
    """
    return math.sqrt(2.0 * d * G * math.log(N))
