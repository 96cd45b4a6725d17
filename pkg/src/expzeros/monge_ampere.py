"""Monge-Ampere densities of smoothed support functions and pseudo-volumes.

Convention: ``dd^c = i d dbar``, so that for a plurisubharmonic ``u`` on C^n

    (dd^c u)^n = 2^n n! det(u_{z_j zbar_k}) dV_{2n}.

With this normalization ``pvol({0, 1}) = 1`` and the zero density of
``1 + e^z`` is ``(1/pi) dd^c h``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError
from scipy.stats import qmc

from ._parallel import parallel_map
from .spectrum import (
    DimensionError,
    Polytope,
    Spectrum,
    _chain_hull,
    as_points,
)

DEFAULT_REL_EPSILONS = (0.2, 0.1, 0.05, 0.025)
METHODS = ("auto", "grid", "qmc", "mc")


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate a density over the ball ``|z| < radius``.

    ``epsilons=None`` means ``DEFAULT_REL_EPSILONS`` times the spectrum
    diameter.  ``order`` is the degree of the polynomial in eps fitted for
    extrapolation to eps = 0.
    """

    method: str = "auto"
    samples: int | None = None
    radius: float = 1.0
    epsilons: tuple[float, ...] | None = None
    extrapolate: bool = True
    order: int = 2
    seed: int = 0
    batches: int = 16
    tolerance: float | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.samples is not None and self.samples < 1 or self.batches < 1:
            raise ValueError("sample budget and batch count must be positive")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.epsilons is not None:
            eps = tuple(float(e) for e in self.epsilons)
            if not eps or min(eps) <= 0 or any(a <= b for a, b in zip(eps, eps[1:])):
                raise ValueError("epsilons must be positive and strictly decreasing")
            object.__setattr__(self, "epsilons", eps)

    def budget(self, n: int) -> int:
        if self.samples is not None:
            return self.samples
        return 2**18 if n == 1 else 2**21

    def epsilon_schedule(self, K: Spectrum) -> tuple[float, ...]:
        if self.epsilons is not None:
            return self.epsilons
        return tuple(e * K.diameter for e in DEFAULT_REL_EPSILONS)


@dataclass
class PvolResult:
    value: float
    error: float
    epsilons: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    flagged: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["table"] = [
            {"epsilon": e, "value": v, "error": s}
            for e, v, s in zip(self.epsilons, self.values, self.errors)
        ]
        return d


# --------------------------------------------------------------------------
# densities


def _weights(K: Spectrum, eps: float, z: np.ndarray) -> np.ndarray:
    a = (z @ K.freqs.T).real / eps
    a -= a.max(axis=-1, keepdims=True)
    w = np.exp(a)
    return w / w.sum(axis=-1, keepdims=True)


def complex_hessian(K: Spectrum, eps: float, z) -> np.ndarray:
    """``d^2 h_eps / dz_k dzbar_l`` for the log-sum-exp smoothing of ``h_K``.

    Equals the softmax-weighted covariance of the frequencies over ``4 eps``.
    Broadcasts over leading axes of ``z``; returns shape ``(..., n, n)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = as_points(z, K.n)
    w = _weights(K, eps, z)
    mean = w @ K.freqs
    if K.n == 1:
        dev = K.freqs[:, 0] - mean
        var = (w * (dev.real**2 + dev.imag**2)).sum(-1)
        return (var / (4 * eps))[..., None, None].astype(complex)
    dev = K.freqs - mean[..., None, :]
    cov = np.einsum("...m,...mk,...ml->...kl", w, dev, dev.conj())
    return cov / (4 * eps)


def _det_density(h: np.ndarray) -> np.ndarray:
    n = h.shape[-1]
    if n == 1:
        det = h[..., 0, 0].real
    elif n == 2:
        det = (h[..., 0, 0] * h[..., 1, 1] - h[..., 0, 1] * h[..., 1, 0]).real
    else:
        det = np.linalg.det(h).real
    return (2**n) * math.factorial(n) * det


def ma_density(K: Spectrum, eps: float, z) -> np.ndarray | float:
    """Density of ``(dd^c h_eps)^n`` against Lebesgue measure on R^{2n}."""
    h = complex_hessian(K, eps, z)
    dens = _det_density(h)
    trace = np.trace(h, axis1=-2, axis2=-1).real
    scale = (2 * np.maximum(trace, 0)) ** K.n * math.factorial(K.n) + 1e-300
    if np.any(dens < -1e-10 * scale):
        raise ArithmeticError("negative Monge-Ampere density: Hessian is not semidefinite")
    dens = np.maximum(dens, 0.0)
    return dens[()] if np.ndim(dens) == 0 else dens


# --------------------------------------------------------------------------
# ball quadrature


def _gl_panels(radius: float, nodes: int, levels: int = 12):
    """Composite Gauss-Legendre nodes on [0, R], panels graded towards 0."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.concatenate([[0.0], radius * 2.0 ** -np.arange(levels, -1, -1)])
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(rs), np.concatenate(ws)


def _polar_grid(density, radius: float, n_r: int, n_theta: int, chunk: int) -> float:
    r, wr = _gl_panels(radius, n_r)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    ring = np.exp(1j * theta)
    rows_per_chunk = max(1, chunk // n_theta)
    total = []
    for i in range(0, len(r), rows_per_chunk):
        rr = r[i : i + rows_per_chunk]
        pts = (rr[:, None] * ring[None, :]).reshape(-1, 1)
        vals = np.asarray(density(pts), dtype=float).reshape(len(rr), n_theta)
        total.append(np.sum(wr[i : i + rows_per_chunk] * rr * vals.sum(axis=1)))
    return math.fsum(total) * 2 * np.pi / n_theta


def _random_batch(density, n: int, radius: float, count: int, seed, method: str, chunk: int):
    dim = 2 * n
    if method == "qmc":
        m = max(1, int(round(math.log2(max(count, 2)))))
        u = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed)).random_base2(m)
    else:
        u = np.random.default_rng(seed).random((count, dim))
    x = radius * (2 * u - 1)
    inside = (x**2).sum(-1) < radius**2
    pts = (x[:, :n] + 1j * x[:, n:])[inside]
    vals = [np.asarray(density(pts[i : i + chunk]), dtype=float) for i in range(0, len(pts), chunk)]
    vals = np.concatenate(vals) if vals else np.zeros(0)
    cube = (2 * radius) ** dim
    return cube * math.fsum(vals) / len(u)


def integrate_ball(
    density: Callable[[np.ndarray], np.ndarray],
    n: int,
    q: QuadratureSpec,
    chunk: int = 2**16,
) -> tuple[float, float]:
    """Integrate ``density`` (vectorized over ``(N, n)`` complex points) over
    the ball of radius ``q.radius`` in R^{2n}.

    n = 1 defaults to a polar Gauss-Legendre x trapezoid grid whose error is
    the difference to the half-resolution grid.  Otherwise the ball is sampled
    by rejection from scrambled Sobol (``qmc``) or uniform (``mc``) batches
    with independent sub-seeds; the error is the standard error across batches.
    """
    method = q.method
    if method == "auto":
        method = "grid" if n == 1 else "qmc"
    if method == "grid":
        if n != 1:
            raise ValueError("the tensor grid is only available for n = 1")
        n_r_nodes = 16
        n_r = 13 * n_r_nodes
        n_theta = max(64, q.budget(n) // n_r)
        fine = _polar_grid(density, q.radius, n_r_nodes, n_theta, chunk)
        coarse = _polar_grid(density, q.radius, n_r_nodes // 2, n_theta // 2, chunk)
        return fine, abs(fine - coarse)
    per_batch = max(2, q.budget(n) // q.batches)
    seeds = np.random.SeedSequence(q.seed).spawn(q.batches)
    est = parallel_map(
        lambda s: _random_batch(density, n, q.radius, per_batch, s, method, chunk),
        seeds,
        workers=q.workers,
    )
    est = np.array(est)
    mean = math.fsum(est) / len(est)
    if len(est) < 2:
        return mean, float("nan")
    return mean, float(est.std(ddof=1) / math.sqrt(len(est)))


# --------------------------------------------------------------------------
# pseudo-volumes


def _interp_at_zero(e: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
    """Value at 0 of the interpolating polynomial and its Lagrange weights."""
    lw = np.array(
        [np.prod([-e[j] / (e[i] - e[j]) for j in range(len(e)) if j != i]) for i in range(len(e))]
    )
    return float(lw @ v), lw


def extrapolate(epsilons, values, errors, order: int = 2) -> tuple[float, float]:
    """Extrapolate ``value(eps)`` to ``eps = 0``.

    A polynomial of degree ``order`` in eps interpolates the ``order + 1``
    smallest epsilons.  The error adds the propagated quadrature errors to the
    gap between this estimate and the degree ``order - 1`` one.
    """
    e = np.asarray(epsilons, dtype=float)
    v = np.asarray(values, dtype=float)
    s = np.nan_to_num(np.asarray(errors, dtype=float))
    sel = np.argsort(e)[: min(order, len(e) - 1) + 1]
    if len(sel) < 2:
        return float(v[sel[0]]), float(s[sel[0]])
    value, lw = _interp_at_zero(e[sel], v[sel])
    lower, _ = _interp_at_zero(e[sel[:-1]], v[sel[:-1]])
    return value, float(np.abs(lw) @ s[sel] + abs(value - lower))


def pvol(K: Spectrum, q: QuadratureSpec | None = None) -> PvolResult:
    """Pseudo-volume: the mass of ``(dd^c h_K)^n`` on the ball of radius ``q.radius``."""
    q = q or QuadratureSpec()
    if len(K) == 1:
        return PvolResult(0.0, 0.0)
    if K.n > 2:
        raise ValueError("pseudo-volume quadrature is limited to n <= 2")
    eps_list = q.epsilon_schedule(K)
    values, errors = [], []
    for eps in eps_list:
        v, s = integrate_ball(lambda z, e=eps: ma_density(K, e, z), K.n, q)
        values.append(v)
        errors.append(s)
    res = PvolResult(float("nan"), float("nan"), list(eps_list), values, errors)
    if q.extrapolate and len(eps_list) > 1:
        res.value, res.error = extrapolate(eps_list, values, errors, q.order)
    else:
        res.value, res.error = values[-1], errors[-1]
    if q.tolerance is not None and not res.error <= q.tolerance:
        res.flagged = True
        res.warnings.append(f"quadrature error {res.error:.3g} exceeds tolerance {q.tolerance:.3g}")
    return res


def minkowski_sum(spectra: Sequence[Spectrum]) -> Spectrum:
    out = spectra[0]
    for K in spectra[1:]:
        out = out.minkowski(K)
    return out


def mixed_pvol(Ks: Sequence[Spectrum], q: QuadratureSpec | None = None) -> PvolResult:
    """Mixed pseudo-volume by polarization over Minkowski sums.

    Normalized so that ``mixed_pvol([A] * n) == pvol(A)``.
    """
    q = q or QuadratureSpec()
    if not Ks:
        raise ValueError("need at least one spectrum")
    n = Ks[0].n
    if len(Ks) != n or any(K.n != n for K in Ks):
        raise DimensionError(f"mixed pseudo-volume needs exactly n = {n} spectra of dimension n")
    total, err = [], 0.0
    warnings: list[str] = []
    flagged = False
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            r = pvol(minkowski_sum([Ks[i] for i in subset]), q)
            total.append((-1) ** (n - size) * r.value)
            err += r.error
            flagged |= r.flagged
            warnings += r.warnings
    norm = math.factorial(n)
    return PvolResult(math.fsum(total) / norm, err / norm, flagged=flagged, warnings=warnings)


# --------------------------------------------------------------------------
# classical mixed volume of real polytopes


def _real_points(P: Polytope | Spectrum) -> np.ndarray:
    K = P.vertices if isinstance(P, Polytope) else P
    if np.any(np.abs(K.freqs.imag) > 1e-12):
        raise ValueError("mixed_volume_real needs polytopes with real vertices")
    return K.freqs.real


def _volume(pts: np.ndarray) -> float:
    d = pts.shape[1]
    if d == 1:
        return float(pts.max() - pts.min())
    if d == 2:
        if len(pts) < 3:
            return 0.0
        idx = _chain_hull(pts)
        x, y = pts[idx, 0], pts[idx, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    try:
        tri = Delaunay(pts)
    except (QhullError, ValueError):
        return 0.0
    simp = pts[tri.simplices]
    mats = simp[:, 1:, :] - simp[:, :1, :]
    return float(np.abs(np.linalg.det(mats)).sum() / math.factorial(d))


def mixed_volume_real(Ps: Sequence[Polytope | Spectrum]) -> float:
    """Mixed volume of ``n <= 3`` real polytopes, ``MV(A, ..., A) = vol(A)``."""
    pts = [_real_points(P) for P in Ps]
    n = len(pts)
    if n == 0 or n > 3:
        raise ValueError("mixed_volume_real supports 1 <= n <= 3")
    if any(p.shape[1] != n for p in pts):
        raise DimensionError("need n polytopes in R^n")
    total = []
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            acc = pts[subset[0]]
            for i in subset[1:]:
                acc = (acc[:, None, :] + pts[i][None, :, :]).reshape(-1, n)
                acc = np.unique(np.round(acc, 12), axis=0)
            total.append((-1) ** (n - size) * _volume(acc))
    return math.fsum(total) / math.factorial(n)
