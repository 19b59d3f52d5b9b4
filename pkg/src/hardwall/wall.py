"""Quenched random substrates (hard walls).

IID per-site draws from the tail families (Gaussian, half-Gaussian,
bounded, stretched-exponential, flat), generated by a counter-based hash
of (seed, site coordinates). The same seed therefore reproduces the same
wall values on any domain containing the site, which is what "quenched"
requires across nested experiments.

Also the multiscale discretization of a wall into levels of width
theta0 * sqrt(log N) and the power-law predictor for the level counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.special import ndtri

from .lattice import LatticeDomain

__all__ = [
    "WallSpec",
    "WallField",
    "LevelDecomposition",
    "sample_wall",
    "discretize_wall",
    "predicted_level_count",
    "save_wall",
    "load_wall",
]

_FAMILIES = ("gaussian", "half_gaussian", "bounded", "stretched", "flat")


@dataclass(frozen=True)
class WallSpec:
    family: str
    seed: int = 0
    Q: float = 1.0          # gaussian / half_gaussian / stretched
    beta: float = 0.5       # stretched only
    lo: float = 0.0         # bounded only
    hi: float = 1.0         # bounded only
    c: float = 0.0          # flat only

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown wall family {self.family!r}")
        if self.family in ("gaussian", "half_gaussian", "stretched") and not self.Q > 0:
            raise ValueError("Q must be > 0")
        if self.family == "stretched" and not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.family == "bounded" and self.lo > self.hi:
            raise ValueError("bounded family needs lo <= hi")

    def to_json(self) -> dict:
        out = {"family": self.family, "seed": self.seed}
        if self.family in ("gaussian", "half_gaussian"):
            out["Q"] = self.Q
        elif self.family == "stretched":
            out["Q"] = self.Q
            out["beta"] = self.beta
        elif self.family == "bounded":
            out["lo"] = self.lo
            out["hi"] = self.hi
        else:
            out["c"] = self.c
        return out

    @staticmethod
    def from_json(obj: dict) -> "WallSpec":
        return WallSpec(**{k: v for k, v in obj.items()})


@dataclass
class WallField:
    domain: LatticeDomain
    values: np.ndarray
    spec: WallSpec

    def __post_init__(self):
        if self.values.shape != (self.domain.n_sites,):
            raise ValueError("wall length does not match the domain site count")


# -- counter-based per-site randomness ---------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z + _GOLDEN).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def site_uniforms(seed: int, sites: np.ndarray, stream: int) -> np.ndarray:
    """Deterministic uniforms in (0,1), one per site, keyed by coordinates."""
    with np.errstate(over="ignore"):
        h = np.full(sites.shape[0], np.uint64(seed & ((1 << 64) - 1)))
        h = _mix(h ^ np.uint64(stream))
        for axis in range(sites.shape[1]):
            h = _mix(h ^ sites[:, axis].astype(np.int64).view(np.uint64))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def sample_wall(spec: WallSpec, domain: LatticeDomain) -> WallField:
    """IID wall draws, bit-exact functions of (seed, site coordinates)."""
    sites = domain.sites
    if spec.family == "flat":
        values = np.full(domain.n_sites, spec.c)
    elif spec.family == "gaussian":
        u = site_uniforms(spec.seed, sites, 0)
        values = ndtri(u) * np.sqrt(spec.Q)
    elif spec.family == "half_gaussian":
        u = site_uniforms(spec.seed, sites, 0)
        values = np.abs(ndtri(u)) * np.sqrt(spec.Q)
    elif spec.family == "bounded":
        u = site_uniforms(spec.seed, sites, 0)
        values = spec.lo + u * (spec.hi - spec.lo)
    else:  # stretched: exact upper tail exp(-r^{2 beta} / 2Q), Gaussian negative part
        branch = site_uniforms(spec.seed, sites, 0)
        u = site_uniforms(spec.seed, sites, 1)
        pos = (2.0 * spec.Q * (-np.log(u))) ** (1.0 / (2.0 * spec.beta))
        neg = -np.abs(ndtri(u))
        values = np.where(branch < 0.5, pos, neg)
    return WallField(domain=domain, values=values, spec=spec)


# -- multiscale discretization ------------------------------------------------

@dataclass
class LevelDecomposition:
    """Level sets of the auxiliary (discretized) wall.

    Level k collects sites with wall value in ((k-1) theta, k theta] where
    theta = theta0 sqrt(log N); level 1 takes everything below theta, the
    top finite level ktilde spans (kbar theta, ktilde theta], and sites
    above ktilde theta land in the infinity set.
    """

    theta0: float
    kbar: int
    ktilde: int
    N: int
    level_sets: Dict[int, np.ndarray]   # level -> site indices into domain.sites
    counts: Dict[int, int]
    infinity_set: np.ndarray
    aux_values: np.ndarray              # discretized wall, inf on the infinity set

    @property
    def theta(self) -> float:
        return self.theta0 * np.sqrt(np.log(self.N))


def discretize_wall(wall: WallField, kbar: int, Q: float) -> LevelDecomposition:
    if kbar < 2:
        raise ValueError("kbar must be >= 2")
    N = wall.domain.N
    if N < 3:
        raise ValueError("N must be >= 3 (log N > 1)")
    d = wall.domain.d
    theta0 = np.sqrt(4.0 * Q) * (1.0 + 1.0 / (2.0 * kbar)) / kbar
    ktilde = int(np.floor(np.sqrt(2.0 * (d + 2.0) * Q) / theta0))
    theta = theta0 * np.sqrt(np.log(N))

    v = wall.values
    levels = np.minimum(np.maximum(np.ceil(v / theta), 1), kbar).astype(int)
    levels[(v > kbar * theta) & (v <= ktilde * theta)] = ktilde
    infinity = np.nonzero(v > ktilde * theta)[0]
    levels_masked = levels.copy()
    levels_masked[infinity] = -1

    ks = list(range(1, kbar + 1))
    if ktilde > kbar:
        ks.append(ktilde)
    level_sets = {}
    counts = {}
    for k in ks:
        members = np.nonzero(levels_masked == k)[0]
        level_sets[k] = members
        counts[k] = int(members.size)

    aux = np.where(levels_masked > 0, levels_masked * theta, np.inf)
    return LevelDecomposition(
        theta0=float(theta0), kbar=kbar, ktilde=ktilde, N=N,
        level_sets=level_sets, counts=counts, infinity_set=infinity,
        aux_values=aux,
    )


def predicted_level_count(k: int, N: int, d: int, theta0: float, Q: float,
                          kbar: int, ktilde: Optional[int] = None) -> float:
    """Power-law predictor f_N(k) = N^{d - (k-1)^2 theta0^2 / 2Q} for the
    level-k cardinality; the top level uses exponent kbar^2 theta0^2 / 2Q."""
    if ktilde is None:
        ktilde = int(np.floor(np.sqrt(2.0 * (d + 2.0) * Q) / theta0))
    if 2 <= k <= kbar:
        expo = (k - 1) ** 2 * theta0**2 / (2.0 * Q)
    elif k == ktilde:
        expo = kbar**2 * theta0**2 / (2.0 * Q)
    else:
        raise ValueError(f"level {k} outside 2..{kbar} and != {ktilde}")
    return float(N) ** (d - expo)


# -- persistence ---------------------------------------------------------------

def save_wall(wall: WallField, path) -> None:
    """CSV with one row per site: coordinates then value."""
    d = wall.domain.d
    header = ",".join([f"x{i}" for i in range(d)] + ["value"])
    data = np.column_stack([wall.domain.sites.astype(float), wall.values])
    fmt = ["%d"] * d + ["%.17g"]
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=fmt)


def load_wall(path, domain: LatticeDomain, spec: WallSpec) -> WallField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    coords = data[:, :-1].astype(np.int64)
    if not np.array_equal(coords, domain.sites):
        raise ValueError("wall file does not match the domain's site ordering")
    return WallField(domain=domain, values=data[:, -1].copy(), spec=spec)
