"""Simple-random-walk primitives.

Hitting distributions on spheres and box shells (the discrete harmonic
measure), escape probabilities past trap sets, and the normalized
Lipschitz defect of the hitting kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .sampler import philox_gen

__all__ = [
    "Geometry",
    "HittingTable",
    "hitting_distribution",
    "lipschitz_defect",
    "escape_probability",
]

_TAG_WALK = 0x57414C4B
EXACT_GUARD = 400_000


@dataclass(frozen=True)
class Geometry:
    """Absorbing shell around the origin.

    kind "sphere": shell S_n = {|y| >= n with a neighbor |x| < n},
    interior {|x| < n} (Euclidean norm).
    kind "box": shell {max_i |y_i| = L/2}, interior {max_i |y_i| < L/2}.
    """

    kind: str
    size: int  # n for sphere, L for box
    d: int = 3

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ValueError(f"unknown geometry {self.kind!r}")
        if self.kind == "box" and (self.size < 2 or self.size % 2):
            raise ValueError("box geometry needs even L >= 2")
        if self.kind == "sphere" and self.size < 1:
            raise ValueError("sphere geometry needs n >= 1")

    @property
    def reach(self) -> int:
        # max |coordinate| over interior + shell
        return self.size if self.kind == "sphere" else self.size // 2

    def interior_mask(self, coords: np.ndarray) -> np.ndarray:
        if self.kind == "sphere":
            return np.einsum("ij,ij->i", coords, coords) < self.size**2
        return np.max(np.abs(coords), axis=1) < self.size // 2

    def grids(self):
        """(interior coords, shell coords), each an (n, d) int array in
        lexicographic order."""
        r = self.reach
        axes = [np.arange(-r, r + 1)] * self.d
        coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        inner = self.interior_mask(coords)
        interior = coords[inner]
        if self.kind == "box":
            shell = coords[np.max(np.abs(coords), axis=1) == self.size // 2]
        else:
            outer = coords[~inner]
            # shell members need a nearest neighbor strictly inside
            keep = np.zeros(outer.shape[0], dtype=bool)
            for axis in range(self.d):
                for step in (1, -1):
                    nb = outer.copy()
                    nb[:, axis] += step
                    keep |= self.interior_mask(nb)
            shell = outer[keep]
        return interior, shell


@dataclass
class HittingTable:
    """Rows H(x, .) of the hitting distribution over the shell."""

    geometry: Geometry
    starts: np.ndarray          # (k, d) start sites
    shell: np.ndarray           # (m, d) shell sites
    probabilities: np.ndarray   # (k, m)
    method: str                 # "exact" | "monte-carlo"
    std_errors: Optional[np.ndarray] = None
    censored: int = 0

    def row(self, x) -> np.ndarray:
        x = np.asarray(x)
        for i, s in enumerate(self.starts):
            if np.array_equal(s, x):
                return self.probabilities[i]
        raise KeyError(f"no row for start {x.tolist()}")


def _lex_key(coords: np.ndarray, reach: int) -> np.ndarray:
    span = 2 * reach + 3
    key = coords[:, 0] + reach + 1
    for i in range(1, coords.shape[1]):
        key = key * span + (coords[:, i] + reach + 1)
    return key


def _exact_rows(starts: np.ndarray, geometry: Geometry) -> tuple:
    interior, shell = geometry.grids()
    n = interior.shape[0]
    if n > EXACT_GUARD:
        raise ValueError(f"{n} interior sites exceeds the exact-solve guard")
    d = geometry.d
    r = geometry.reach
    side = 2 * r + 1
    shape = (side,) * d
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((interior + r).T)] = True
    inv2d = 1.0 / (2.0 * d)

    # killed operator on the masked grid; identity off the mask keeps the
    # full-grid operator symmetric positive definite so plain CG applies
    def apply_op(vflat):
        v = vflat.reshape(shape)
        vm = np.where(mask, v, 0.0)
        out = vm.copy()
        for axis in range(d):
            up = np.zeros_like(vm)
            dn = np.zeros_like(vm)
            sl_from = [slice(None)] * d
            sl_to = [slice(None)] * d
            sl_from[axis] = slice(1, None)
            sl_to[axis] = slice(None, -1)
            up[tuple(sl_to)] = vm[tuple(sl_from)]
            dn[tuple(sl_from)] = vm[tuple(sl_to)]
            out -= inv2d * (up + dn)
        return np.where(mask, out, v).ravel()

    op = spla.LinearOperator((side**d, side**d), matvec=apply_op, dtype=float)

    rows = np.empty((starts.shape[0], shell.shape[0]))
    for i, x in enumerate(starts):
        pos = tuple(int(c) + r for c in np.asarray(x).reshape(d))
        if not mask[pos]:
            raise ValueError(f"start {np.asarray(x).tolist()} is not interior")
        rhs = np.zeros(shape)
        rhs[pos] = 1.0
        g, info = spla.cg(op, rhs.ravel(), rtol=1e-14, atol=1e-300,
                          maxiter=200 * side)
        if info != 0:
            raise RuntimeError(f"CG failed to converge (info={info})")
        g = g.reshape(shape)
        # H(x, y) = (1/2d) sum over interior neighbors z of y of G(x, z)
        h = np.zeros(shell.shape[0])
        for axis in range(d):
            for step in (1, -1):
                nb = shell.copy()
                nb[:, axis] += step
                in_grid = np.all(np.abs(nb) <= r, axis=1)
                idx = tuple((nb[in_grid] + r).T)
                vals = np.where(mask[idx], g[idx], 0.0)
                h[in_grid] += vals
        rows[i] = h / (2.0 * d)
    return shell, rows


def _mc_rows(starts: np.ndarray, geometry: Geometry, walkers: int, seed: int,
             max_steps: int = 10_000_000) -> tuple:
    interior, shell = geometry.grids()
    reach = geometry.reach + 1
    shell_keys = _lex_key(shell, reach)
    shell_order = np.argsort(shell_keys)
    sorted_shell = shell_keys[shell_order]

    rows = np.empty((starts.shape[0], shell.shape[0]))
    ses = np.empty_like(rows)
    censored_total = 0
    rng = philox_gen(seed, _TAG_WALK)
    d = geometry.d
    for i, x in enumerate(starts):
        pos = np.tile(np.asarray(x, dtype=np.int64), (walkers, 1))
        alive = np.ones(walkers, dtype=bool)
        counts = np.zeros(shell.shape[0])
        steps = 0
        while alive.any() and steps < max_steps:
            k = int(alive.sum())
            moves = rng.integers(0, 2 * d, size=k)
            axis = moves // 2
            step = np.where(moves % 2 == 0, 1, -1)
            live_pos = pos[alive]
            live_pos[np.arange(k), axis] += step
            pos[alive] = live_pos
            absorbed = ~geometry.interior_mask(live_pos)
            if absorbed.any():
                landed = live_pos[absorbed]
                q = _lex_key(landed, reach)
                j = np.searchsorted(sorted_shell, q)
                np.add.at(counts, shell_order[j], 1.0)
                idx_alive = np.nonzero(alive)[0]
                alive[idx_alive[absorbed]] = False
            steps += 1
        censored_total += int(alive.sum())
        p = counts / walkers
        rows[i] = p
        ses[i] = np.sqrt(p * (1 - p) / walkers)
    return shell, rows, ses, censored_total


def hitting_distribution(x, geometry: Geometry, method: str = "exact",
                         walkers: int = 20_000, seed: int = 0) -> HittingTable:
    """Hitting table for one or more start sites.

    Exact method: sparse solve of the killed Green column, then
    H(x,y) = (1/2d) sum of the column over interior neighbors of y.
    """
    starts = np.atleast_2d(np.asarray(x, dtype=np.int64))
    if method == "exact":
        shell, rows = _exact_rows(starts, geometry)
        return HittingTable(geometry=geometry, starts=starts, shell=shell,
                            probabilities=rows, method="exact")
    if method == "monte-carlo":
        shell, rows, ses, censored = _mc_rows(starts, geometry, walkers, seed)
        return HittingTable(geometry=geometry, starts=starts, shell=shell,
                            probabilities=rows, method="monte-carlo",
                            std_errors=ses, censored=censored)
    raise ValueError(f"unknown method {method!r}")


def lipschitz_defect(x, x_prime, geometry: Geometry) -> float:
    """max_y |H(x,y) - H(x',y)| * n^{d-1}, the normalized continuity defect."""
    n = geometry.size if geometry.kind == "sphere" else geometry.size // 2
    x = np.asarray(x)
    xp = np.asarray(x_prime)
    if max(np.max(np.abs(x)), np.max(np.abs(xp))) > n / 4:
        raise ValueError("starts must satisfy |x|_inf <= n/4")
    table = hitting_distribution(np.vstack([x, xp]), geometry, method="exact")
    diff = np.max(np.abs(table.probabilities[0] - table.probabilities[1]))
    return float(diff * n ** (geometry.d - 1))


def escape_probability(x, trap_set: np.ndarray, kill_radius: float, walkers: int,
                       seed: int, max_steps: int = 10_000_000):
    """Monte Carlo probability that the walk from x exits kill_radius before
    hitting trap_set.

    Returns (probability, standard error, info) where info reports censored
    walkers and a transience-based bound on the truncation bias.
    """
    x = np.asarray(x, dtype=np.int64)
    d = x.size
    if d < 3:
        raise ValueError("escape probabilities need d >= 3")
    traps = np.atleast_2d(np.asarray(trap_set, dtype=np.int64)) if len(trap_set) else np.empty((0, d), np.int64)
    if traps.shape[0] and any(np.array_equal(t, x) for t in traps):
        return 0.0, 0.0, {"censored": 0, "truncation_bound": 0.0}
    if traps.shape[0] == 0:
        return 1.0, 0.0, {"censored": 0, "truncation_bound": 0.0}

    reach = int(np.ceil(kill_radius)) + int(np.max(np.abs(traps))) + 2
    trap_keys = np.sort(_lex_key(traps, reach))

    rng = philox_gen(seed, _TAG_WALK + 1)
    pos = np.tile(x, (walkers, 1))
    alive = np.ones(walkers, dtype=bool)
    escaped = 0
    trapped = 0
    steps = 0
    r2_kill = float(kill_radius) ** 2
    while alive.any() and steps < max_steps:
        k = int(alive.sum())
        moves = rng.integers(0, 2 * d, size=k)
        axis = moves // 2
        step = np.where(moves % 2 == 0, 1, -1)
        live_pos = pos[alive]
        live_pos[np.arange(k), axis] += step
        pos[alive] = live_pos
        out = np.einsum("ij,ij->i", live_pos, live_pos) >= r2_kill
        q = _lex_key(live_pos, reach)
        j = np.clip(np.searchsorted(trap_keys, q), 0, trap_keys.size - 1)
        hit = (trap_keys[j] == q) & ~out
        escaped += int(out.sum())
        trapped += int(hit.sum())
        idx_alive = np.nonzero(alive)[0]
        alive[idx_alive[out | hit]] = False
        steps += 1
    censored = int(alive.sum())
    p = escaped / walkers
    se = float(np.sqrt(p * (1 - p) / walkers))
    # a walker past the kill radius can still return: bias <= n_traps * R_d-ish
    # distance bound; report the crude transience bound
    trunc = traps.shape[0] * 0.5 * float(kill_radius) ** (2 - d)
    return p, se, {"censored": censored, "truncation_bound": trunc}
