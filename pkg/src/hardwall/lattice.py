"""Lattice geometry: discretized domains D_N = N*D cap Z^d.

Continuum shapes are treated as open sets (strict inequalities), so the
site set is reproducible: same shape, same N, same ordered site list.
Sites are ordered lexicographically by coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["ShapeSpec", "LatticeDomain", "build_domain", "neighbors"]


@dataclass(frozen=True)
class ShapeSpec:
    """A bounded continuum shape containing the origin.

    kind: "box" (open box with given side lengths per axis), "ball"
    (open Euclidean ball of given radius), or "custom" (indicator
    function over a bounding half-width).
    """

    kind: str
    center: tuple = ()
    sides: tuple = ()          # box only
    radius: float = 0.0        # ball only
    indicator: Optional[Callable] = None  # custom only: f(points) -> bool array
    half_width: float = 0.0    # custom only: bounding box half-width

    def __post_init__(self):
        if self.kind not in ("box", "ball", "custom"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("ball radius must be > 0")
        if self.kind == "box" and not all(s > 0 for s in self.sides):
            raise ValueError("box sides must be > 0")
        if self.kind == "custom":
            if self.indicator is None or not self.half_width > 0:
                raise ValueError("custom shape needs indicator and half_width > 0")

    def center_for(self, d: int) -> np.ndarray:
        if self.center:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (d,):
                raise ValueError(f"center has length {c.shape[0]}, expected {d}")
            return c
        return np.zeros(d)

    def bounding_half_widths(self, d: int) -> np.ndarray:
        """Per-axis half-widths of a box containing the shape (around center)."""
        if self.kind == "box":
            sides = np.asarray(self.sides, dtype=float)
            if sides.shape != (d,):
                raise ValueError(f"box sides have length {sides.shape[0]}, expected {d}")
            return sides / 2.0
        if self.kind == "ball":
            return np.full(d, self.radius)
        return np.full(d, self.half_width)

    def contains(self, points: np.ndarray, d: int) -> np.ndarray:
        """Open-set membership for an (n, d) array of continuum points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.center_for(d)
        if self.kind == "box":
            hw = np.asarray(self.sides, dtype=float) / 2.0
            return np.all(np.abs(pts) < hw, axis=1)
        if self.kind == "ball":
            return np.einsum("ij,ij->i", pts, pts) < self.radius**2
        return np.asarray(self.indicator(pts), dtype=bool)

    def to_json(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom shapes are not serializable")
        out = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "box":
            out["sides"] = list(self.sides)
        else:
            out["radius"] = self.radius
        return out

    @staticmethod
    def from_json(obj: dict) -> "ShapeSpec":
        kind = obj["kind"]
        center = tuple(obj.get("center", ()))
        if kind == "box":
            return ShapeSpec(kind="box", center=center, sides=tuple(obj["sides"]))
        if kind == "ball":
            return ShapeSpec(kind="ball", center=center, radius=float(obj["radius"]))
        raise ValueError(f"cannot deserialize shape kind {kind!r}")


@dataclass(frozen=True)
class LatticeDomain:
    """D_N = N*D cap Z^d plus its padded embedding box.

    ``sites`` is an (n, d) int array in lexicographic order; ``lo``/``hi``
    are the inclusive corners of the embedding box.
    """

    d: int
    N: int
    shape: ShapeSpec
    sites: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    padding: int

    def __post_init__(self):
        self.sites.setflags(write=False)
        self.lo.setflags(write=False)
        self.hi.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def box_shape(self) -> tuple:
        return tuple((self.hi - self.lo + 1).tolist())

    def site_index(self, x) -> int:
        """Index of site x in the ordered site list (bijection)."""
        x = np.asarray(x).reshape(self.d)
        i = int(np.searchsorted(self._keys(), self._key_of(x)[0]))
        if i >= self.n_sites or not np.array_equal(self.sites[i], x):
            raise KeyError(f"{x.tolist()} is not a domain site")
        return i

    def site_indices(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized site_index for an (n, d) array; raises if any miss."""
        pts = np.atleast_2d(pts)
        keys = self._keys()
        q = self._key_of(pts)
        i = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
        if not np.all(keys[i] == q):
            missing = pts[keys[i] != q][0]
            raise KeyError(f"{missing.tolist()} is not a domain site")
        return i

    def contains_sites(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (n, d) int array."""
        keys = self._keys()
        q = self._key_of(np.atleast_2d(pts))
        i = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
        return keys[i] == q

    def in_box(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def box_flat_index(self, pts: np.ndarray) -> np.ndarray:
        """Row-major flat index of sites inside the embedding box."""
        pts = np.atleast_2d(pts)
        rel = pts - self.lo
        dims = self.hi - self.lo + 1
        return np.ravel_multi_index(tuple(rel.T), tuple(dims))

    def _key_of(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        span = (self.hi - self.lo + 1).astype(np.int64)
        rel = (pts - self.lo).astype(np.int64)
        key = rel[..., 0]
        for i in range(1, self.d):
            key = key * span[i] + rel[..., i]
        return key if key.ndim else np.int64(key)

    def _keys(self) -> np.ndarray:
        cached = getattr(self, "_key_cache", None)
        if cached is None:
            cached = self._key_of(self.sites)
            object.__setattr__(self, "_key_cache", cached)
        return cached


def build_domain(shape: ShapeSpec, N: int, d: int, padding: Optional[int] = None) -> LatticeDomain:
    """All integer points x with x/N in the (open) shape, padded box included.

    padding counts lattice sites added per axis on each side of the tight
    bounding box; default is max(N, 8).
    """
    if d < 3:
        raise ValueError("d >= 3 required: no infinite-volume field exists below d = 3")
    if N < 1:
        raise ValueError("N must be >= 1")
    if padding is None:
        padding = max(N, 8)
    if padding < 1:
        raise ValueError("padding must be >= 1")

    center = shape.center_for(d)
    if not shape.contains(np.zeros((1, d)), d)[0]:
        raise ValueError("shape must contain the origin")

    hw = shape.bounding_half_widths(d)
    lo_scan = np.floor((center - hw) * N).astype(np.int64)
    hi_scan = np.ceil((center + hw) * N).astype(np.int64)

    axes = [np.arange(lo_scan[i], hi_scan[i] + 1) for i in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    mask = shape.contains(grid / N, d)
    sites = grid[mask]
    if sites.shape[0] == 0:
        raise ValueError("empty lattice domain: increase N or enlarge the shape")

    lo = sites.min(axis=0) - padding
    hi = sites.max(axis=0) + padding
    return LatticeDomain(d=d, N=N, shape=shape, sites=sites, lo=lo, hi=hi, padding=padding)


def neighbors(x, domain: LatticeDomain):
    """The 2d nearest neighbors of x, each tagged 'interior' or 'boundary'.

    'boundary' means not strictly inside the embedding box. Axis order is
    fixed: +e_1, -e_1, +e_2, -e_2, ...
    """
    x = np.asarray(x, dtype=np.int64)
    if not domain.in_box(x):
        raise ValueError(f"{x.tolist()} lies outside the embedding box")
    out = []
    for axis in range(domain.d):
        for step in (1, -1):
            y = x.copy()
            y[axis] += step
            strictly_inside = bool(np.all(y > domain.lo) and np.all(y < domain.hi))
            out.append((y, "interior" if strictly_inside else "boundary"))
    return out
