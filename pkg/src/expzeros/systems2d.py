"""Common roots of two quasi-polynomials in C^2 by multistart Newton."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .spectrum import QuasiPolynomial, derivative

TAU_SYS = 1e-9
MAX_ITER = 50
MAX_STEP = 1.0


@dataclass(frozen=True)
class SearchRegion:
    """Roots are sought with ``|Re z_k| <= tube`` and ``|Im z| <= radius``.

    ``grid`` is the number of seeds per pi of each imaginary axis and
    ``tube_seeds`` the number across each real direction of the tube.
    """

    tube: float = 1.0
    radius: float = 10.0
    grid: int = 8
    tube_seeds: int = 4
    dedup: float = 0.1

    def __post_init__(self):
        if not (self.tube > 0 and self.radius > 0):
            raise ValueError("tube bound and radius must be positive")
        if not 0 < self.dedup < math.pi / 4:
            raise ValueError("dedup distance must lie in (0, pi/4)")
        if self.grid < 1 or self.tube_seeds < 1:
            raise ValueError("seed counts must be positive")


@dataclass
class RootSet2D:
    roots: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    singular: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.roots)

    def within(self, r: float) -> "RootSet2D":
        keep = np.sqrt((np.abs(self.roots) ** 2).sum(-1)) < r
        return RootSet2D(
            self.roots[keep], self.residuals[keep], self.iterations[keep], self.singular[keep], list(self.warnings)
        )

    def rows(self) -> list[dict]:
        return [
            {
                "re_z1": z[0].real,
                "im_z1": z[0].imag,
                "re_z2": z[1].real,
                "im_z2": z[1].imag,
                "residual": float(res),
                "iterations": int(it),
                "singular": bool(sing),
            }
            for z, res, it, sing in zip(self.roots, self.residuals, self.iterations, self.singular)
        ]


def default_tube_bound(f1: QuasiPolynomial, f2: QuasiPolynomial) -> float:
    """Crude bound on ``|Re z_k|`` of roots: max coefficient log-ratio over the
    smallest positive frequency gap, plus one."""
    logs, gaps = [], []
    for f in (f1, f2):
        mags = [np.abs(c).max() for _, c in f.polys]
        logs.append(math.log(max(mags) / min(mags)))
        d = np.abs(f.freqs[:, None, :] - f.freqs[None, :, :]).max(-1)
        pos = d[d > 0]
        if len(pos):
            gaps.append(pos.min())
    gap = min(gaps) if gaps else 1.0
    return max(logs) / gap + 1.0


def _seeds(region: SearchRegion) -> np.ndarray:
    step = math.pi / region.grid
    m = int(math.ceil(region.radius / step))
    ys = step * np.arange(-m, m + 1) + 0.5 * step
    ys = ys[np.abs(ys) <= region.radius + step]
    y1, y2 = np.meshgrid(ys, ys, indexing="ij")
    keep = y1**2 + y2**2 <= (region.radius + step) ** 2
    y1, y2 = y1[keep], y2[keep]
    xs = np.linspace(-region.tube, region.tube, region.tube_seeds) if region.tube_seeds > 1 else np.zeros(1)
    x1, x2 = np.meshgrid(xs, xs, indexing="ij")
    z1 = (x1.ravel()[:, None] + 1j * y1[None, :]).ravel()
    z2 = (x2.ravel()[:, None] + 1j * y2[None, :]).ravel()
    return np.stack([z1, z2], axis=-1)


def _system(fs, jac, z):
    """Values and Jacobian rows of each equation, scaled by a common positive factor."""
    vals, rows, scales = [], [], []
    for f, (d1, d2) in zip(fs, jac):
        m, shift, ts = f.eval_scaled(z)
        a, _, _ = d1.eval_scaled(z, shift=shift)
        b, _, _ = d2.eval_scaled(z, shift=shift)
        vals.append(m)
        rows.append((a, b))
        scales.append(ts)
    return vals, rows, scales


def _newton(fs, jac, z: np.ndarray):
    """Damped Newton on all seeds at once."""
    z = z.copy()
    iters = np.zeros(len(z), dtype=int)
    active = np.ones(len(z), dtype=bool)
    for it in range(MAX_ITER):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        (v1, v2), ((a, b), (c, d)), (s1, s2) = _system(fs, jac, z[idx])
        with np.errstate(all="ignore"):
            det = a * d - b * c
            dz1 = (d * v1 - b * v2) / det
            dz2 = (a * v2 - c * v1) / det
            norm = np.sqrt(np.abs(dz1) ** 2 + np.abs(dz2) ** 2)
            damp = np.minimum(1.0, MAX_STEP / norm)
        ok = np.isfinite(norm)
        z[idx[ok], 0] -= damp[ok] * dz1[ok]
        z[idx[ok], 1] -= damp[ok] * dz2[ok]
        iters[idx] += 1
        done = ~ok | (norm <= 1e-13 * (1 + np.sqrt((np.abs(z[idx]) ** 2).sum(-1))))
        active[idx[done]] = False
    return z, iters


def _unit_floor(tscale: np.ndarray, f: QuasiPolynomial, z: np.ndarray) -> np.ndarray:
    """Term scale, floored at the scaled size of a unit constant (capped at 1)."""
    shift = (z @ f.freqs.T).real.max(-1)
    return np.maximum(tscale, np.exp(-np.maximum(shift, 0.0)))


def solve_system(f1: QuasiPolynomial, f2: QuasiPolynomial, region: SearchRegion | None = None) -> RootSet2D:
    """Common roots of ``f1 = f2 = 0`` in the search region.

    Newton runs from every grid seed; converged points inside the region
    (with a margin of one dedup distance) are residual-checked and merged.
    """
    region = region or SearchRegion()
    for f in (f1, f2):
        if f.n != 2:
            raise ValueError("solve_system works on quasi-polynomials in two variables")
        if f.is_zero:
            raise ValueError("equations must not be identically zero")
    fs = (f1, f2)
    jac = [(derivative(f, 0), derivative(f, 1)) for f in fs]
    z, iters = _newton(fs, jac, _seeds(region))
    good = np.all(np.isfinite(z), axis=-1)
    z, iters = z[good], iters[good]
    margin = region.dedup
    inside = (np.abs(z.real) <= region.tube + margin).all(-1)
    inside &= np.sqrt((z.imag**2).sum(-1)) <= region.radius + margin
    z, iters = z[inside], iters[inside]
    warnings: list[str] = []
    if not len(z):
        warnings.append("no Newton run converged inside the region")
        empty = np.zeros(0)
        return RootSet2D(np.zeros((0, 2), dtype=complex), empty, empty.astype(int), empty.astype(bool), warnings)
    (v1, v2), ((a, b), (c, d)), (s1, s2) = _system(fs, jac, z)
    resid = np.maximum(np.abs(v1) / _unit_floor(s1, fs[0], z), np.abs(v2) / _unit_floor(s2, fs[1], z))
    conv = resid < TAU_SYS
    z, iters, resid = z[conv], iters[conv], resid[conv]
    det = np.abs(a * d - b * c)[conv]
    jscale = (np.abs(a) + np.abs(b))[conv] * (np.abs(c) + np.abs(d))[conv]
    singular = det <= 1e-8 * jscale
    # merge duplicates, keeping the smallest residual of each cluster
    order = np.argsort(resid, kind="stable")
    z, iters, resid, singular = z[order], iters[order], resid[order], singular[order]
    pts = np.concatenate([z.real, z.imag], axis=-1)
    tree = cKDTree(pts)
    taken = np.zeros(len(z), dtype=bool)
    keep = []
    for i in range(len(z)):
        if taken[i]:
            continue
        keep.append(i)
        taken[tree.query_ball_point(pts[i], region.dedup)] = True
    keep = np.array(keep, dtype=int)
    z, iters, resid, singular = z[keep], iters[keep], resid[keep], singular[keep]
    near = (np.abs(z.real) > region.tube - 2 * region.dedup).any(-1)
    if near.any():
        warnings.append(f"{int(near.sum())} root(s) near the tube boundary; the tube bound may be too small")
    if singular.any():
        warnings.append(f"{int(singular.sum())} root(s) with singular Jacobian")
    order = np.lexsort((z[:, 1].imag, z[:, 0].imag))
    return RootSet2D(z[order], resid[order], iters[order], singular[order], warnings)


def count_roots_ball(
    f1: QuasiPolynomial, f2: QuasiPolynomial, r: float, tube: float | None = None, grid: int = 8
) -> int:
    """Number of common roots with ``|z| < r`` in R^4."""
    tube = default_tube_bound(f1, f2) if tube is None else tube
    roots = solve_system(f1, f2, SearchRegion(tube=tube, radius=r, grid=grid))
    return len(roots.within(r))
