"""Zeros of one-variable quasi-polynomials by the argument principle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .spectrum import QuasiPolynomial, derivative

TAU_EDGE = 1e-8
JITTER_STEP = 1e-3
MAX_ARG_STEP = math.pi / 2


class ContourError(RuntimeError):
    pass


class JitterExhausted(ContourError):
    """A zero stays too close to the contour after every radius perturbation."""


class RefinementExhausted(ContourError):
    pass


class CountMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ContourSpec:
    center: complex = 0j
    radius: float = 1.0
    segments: int = 64
    max_depth: int = 30
    jitter_budget: int = 8

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.segments < 8:
            raise ValueError("need at least 8 initial segments")


@dataclass
class ZeroCountReport:
    radius: float
    count: int
    winding_residual: float
    refinements: int
    jitters: int

    def as_row(self) -> dict:
        return {
            "radius": self.radius,
            "count": self.count,
            "winding_residual": float(self.winding_residual),
            "refinements": self.refinements,
            "jitters": self.jitters,
        }


@dataclass(frozen=True)
class Zero:
    location: complex
    multiplicity: int = 1


class _NearContour(Exception):
    pass


def _check_nonzero(f: QuasiPolynomial):
    if f.n != 1:
        raise ValueError("zero counting needs a quasi-polynomial in one variable")
    if f.is_zero:
        raise ValueError("f is identically zero")


def _values(f, df, z):
    """Scaled f, f'/f and |f| relative to the term scale."""
    mant, shift, tscale = f.eval_scaled(z[:, None])
    dmant, _, _ = df.eval_scaled(z[:, None], shift=shift)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(mant) / tscale
        logder = dmant / mant
    return mant, logder, rel


def _winding(f, df, path: Callable[[np.ndarray], np.ndarray], n0: int, max_depth: int):
    """Adaptive winding number of f along the closed path ``s in [0, 1)``.

    Returns (count, residual, refinements).  Raises _NearContour when the
    relative modulus drops below TAU_EDGE.
    """
    s = np.arange(n0 + 1) / n0
    z = path(s)
    mant, logder, rel = _values(f, df, z)
    depth = 0
    while True:
        if np.any(~(rel >= TAU_EDGE)):
            raise _NearContour
        dphi = np.angle(mant[1:] / mant[:-1])
        bad = np.flatnonzero(np.abs(dphi) >= MAX_ARG_STEP)
        total = dphi.sum() / (2 * math.pi)
        count = int(round(total))
        dz = np.diff(z)
        raw = ((logder[1:] + logder[:-1]) * 0.5 * dz).sum().imag / (2 * math.pi)
        residual = abs(raw - count)
        if not len(bad):
            if residual < 0.25:
                return count, residual, depth
            bad = np.arange(len(s) - 1)
        depth += 1
        if depth > max_depth:
            raise RefinementExhausted("argument steps stay above pi/2 at maximum refinement")
        s_new = 0.5 * (s[bad] + s[bad + 1])
        z_new = path(s_new)
        m_new, l_new, r_new = _values(f, df, z_new)
        s = np.insert(s, bad + 1, s_new)
        z = np.insert(z, bad + 1, z_new)
        mant = np.insert(mant, bad + 1, m_new)
        logder = np.insert(logder, bad + 1, l_new)
        rel = np.insert(rel, bad + 1, r_new)


def _initial_segments(f: QuasiPolynomial, length: float, base: int) -> int:
    width = f.spectrum.diameter + f.degree + 1
    need = int(math.ceil(4 * length * width / math.pi))
    return max(base, 1 << max(3, need - 1).bit_length())


def _jitter_factors(budget: int):
    yield 1.0
    for k in range(1, budget + 1):
        sign = 1 if k % 2 else -1
        yield 1.0 + sign * JITTER_STEP * ((k + 1) // 2)


def count_zeros_disk(f: QuasiPolynomial, c: ContourSpec | None = None, **kw) -> ZeroCountReport:
    """Number of zeros of ``f`` in the open disk described by ``c``.

    Keyword arguments override fields of ``c`` (e.g. ``radius=10``).
    """
    c = replace(c or ContourSpec(), **kw)
    _check_nonzero(f)
    df = derivative(f)
    n0 = _initial_segments(f, 2 * math.pi * c.radius, c.segments)
    for jitters, factor in enumerate(_jitter_factors(c.jitter_budget)):
        r = c.radius * factor

        def path(s, r=r):
            return c.center + r * np.exp(2j * math.pi * s)

        try:
            count, residual, depth = _winding(f, df, path, n0, c.max_depth)
        except _NearContour:
            continue
        if count < 0:
            raise ContourError("negative winding number for a holomorphic function")
        return ZeroCountReport(r, count, float(residual), depth, jitters)
    raise JitterExhausted(f"zero within {TAU_EDGE:g} of the contour after {c.jitter_budget} jitters")


def _rect_path(center: complex, hx: float, hy: float):
    corners = center + np.array([-hx - 1j * hy, hx - 1j * hy, hx + 1j * hy, -hx + 1j * hy, -hx - 1j * hy])

    def path(s):
        u = np.asarray(s) * 4
        k = np.minimum(u.astype(int), 3)
        return corners[k] + (u - k) * (corners[k + 1] - corners[k])

    return path


def count_zeros_rect(
    f: QuasiPolynomial, center: complex, hx: float, hy: float | None = None, segments: int = 32, max_depth: int = 30
) -> int:
    """Zeros of f in an open axis-aligned rectangle with half-widths ``hx``, ``hy``.

    Raises ContourError if a zero sits on the boundary.
    """
    _check_nonzero(f)
    hy = hx if hy is None else hy
    df = derivative(f)
    n0 = _initial_segments(f, 4 * (hx + hy), segments)
    try:
        count, _, _ = _winding(f, df, _rect_path(center, hx, hy), n0, max_depth)
    except _NearContour:
        raise ContourError("zero on the rectangle boundary") from None
    return count


def _newton(f, df, z: complex, mult: int, tol: float, max_iter: int = 60) -> complex:
    for _ in range(max_iter):
        mant, shift, tscale = f.eval_scaled(np.array([[z]]))
        if abs(mant[0]) <= tol * tscale[0]:
            break
        dmant, _, _ = df.eval_scaled(np.array([[z]]), shift=shift)
        if dmant[0] == 0:
            break
        step = mult * mant[0] / dmant[0]
        z = z - step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return complex(z)


def locate_zeros_disk(
    f: QuasiPolynomial,
    c: ContourSpec | None = None,
    tol: float = 1e-13,
    min_size: float | None = None,
    **kw,
) -> list[Zero]:
    """Zeros in the disk, with multiplicities, by quadtree isolation and Newton polish.

    A box whose count stays positive down to ``min_size`` is reported as a
    single zero of that multiplicity.  If the located multiplicities do not
    add up to the disk count a :class:`CountMismatchWarning` is issued and the
    partial list is returned.
    """
    c = replace(c or ContourSpec(), **kw)
    expected = count_zeros_disk(f, c)
    radius = expected.radius
    if expected.count == 0:
        return []
    df = derivative(f)
    min_size = min_size if min_size is not None else 1e-7 * max(radius, 1.0)
    center0 = complex(c.center)
    for factor in _jitter_factors(c.jitter_budget):
        half = radius * (1 + 1e-2) * factor
        try:
            stack = [(center0, half, half, count_zeros_rect(f, center0, half))]
            break
        except ContourError:
            continue
    else:
        raise JitterExhausted("bounding box edge runs through a zero")
    found: list[Zero] = []
    while stack:
        center, hx, hy, k = stack.pop()
        if k == 0:
            continue
        size = max(hx, hy)
        if k == 1 or size <= min_size:
            z = _newton(f, df, center, k, tol)
            inside_box = abs(z.real - center.real) <= hx and abs(z.imag - center.imag) <= hy
            if not inside_box and size > min_size:
                stack.extend(_children(f, center, hx, hy, c.jitter_budget))
                continue
            found.append(Zero(z if inside_box else center, k))
            continue
        stack.extend(_children(f, center, hx, hy, c.jitter_budget))
    inside = [zz for zz in found if abs(zz.location - center0) < radius]
    total = sum(zz.multiplicity for zz in inside)
    if total != expected.count:
        warnings.warn(
            f"located {total} zeros with multiplicity, contour count is {expected.count}",
            CountMismatchWarning,
        )
    return sorted(inside, key=lambda zz: (round(zz.location.imag, 9), zz.location.real))


def _children(f, center: complex, hx: float, hy: float, budget: int):
    """Split a box into four with their zero counts, moving the split point off any zero."""
    for k in range(budget + 1):
        mid = center + (0 if k == 0 else 1e-3 * k * complex(hx, 0.618 * hy))
        xs = (center.real - hx, mid.real, center.real + hx)
        ys = (center.imag - hy, mid.imag, center.imag + hy)
        try:
            out = []
            for i in range(2):
                for j in range(2):
                    cc = complex(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]))
                    cx, cy = 0.5 * (xs[i + 1] - xs[i]), 0.5 * (ys[j + 1] - ys[j])
                    out.append((cc, cx, cy, count_zeros_rect(f, cc, cx, cy)))
            return out
        except ContourError:
            continue
    raise JitterExhausted("could not split a box away from its zeros")


def density_slope(f: QuasiPolynomial, radii: Sequence[float], contour: ContourSpec | None = None):
    """Least-squares line ``N(r) = slope * r + intercept`` through zero counts.

    Returns ``(slope, intercept, residual, reports)`` with the rms residual.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4 or np.any(np.diff(radii) <= 0):
        raise ValueError("need at least 4 increasing radii")
    contour = contour or ContourSpec()
    reports = [count_zeros_disk(f, contour, radius=float(r)) for r in radii]
    rs = np.array([rep.radius for rep in reports])
    counts = np.array([rep.count for rep in reports], dtype=float)
    slope, intercept = np.polyfit(rs, counts, 1)
    resid = float(np.sqrt(np.mean((counts - (slope * rs + intercept)) ** 2)))
    return float(slope), float(intercept), resid, reports
