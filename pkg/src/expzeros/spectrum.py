"""Spectra, quasi-polynomials and support functions.

A frequency is a linear functional ``xi`` on ``C^n`` stored as its ``n``
complex coefficients, so that ``xi(z) = sum_k xi_k z_k``.  A quasi-polynomial
is a finite sum ``sum_xi p_xi(z) exp(xi(z))`` with polynomial coefficients.

Points and frequencies are handled as complex numpy arrays whose last axis has
length ``n``; every evaluation routine broadcasts over leading axes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

# relative to the spectrum diameter
TAU_DUP = 1e-9
# Re xi(z) beyond which evaluation switches to the log-scaled path
OVERFLOW_THRESHOLD = 700.0


class DimensionError(ValueError):
    pass


class FaceConditionError(ValueError):
    """Raised when some sub-face sum of a face exponential sum vanishes."""

    def __init__(self, message, failing):
        super().__init__(message)
        self.failing = failing


def as_points(z, n=None) -> np.ndarray:
    """Coerce ``z`` to a complex array with last axis ``n``.

    Scalars are accepted for ``n == 1``.
    """
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z.reshape(1)
    if n is not None and z.shape[-1] != n:
        if n == 1:
            z = z[..., None]
        else:
            raise DimensionError(f"expected points of dimension {n}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("points must be finite")
    return z


def real_embedding(freqs: np.ndarray) -> np.ndarray:
    """Map frequencies in C^n* to R^{2n} as (Re xi, Im xi)."""
    freqs = np.asarray(freqs, dtype=complex)
    return np.concatenate([freqs.real, freqs.imag], axis=-1)


def direction_embedding(z: np.ndarray) -> np.ndarray:
    """Vector w in R^{2n} with <real_embedding(xi), w> = Re xi(z)."""
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, -z.imag], axis=-1)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A finite set of frequencies in ``C^n*``."""

    freqs: np.ndarray

    def __post_init__(self):
        freqs = np.atleast_2d(np.asarray(self.freqs, dtype=complex))
        if freqs.ndim != 2 or freqs.shape[0] == 0 or freqs.shape[1] == 0:
            raise ValueError("a spectrum needs at least one frequency of dimension n >= 1")
        if not np.all(np.isfinite(freqs)):
            raise ValueError("frequencies must be finite")
        diam = _diameter(freqs)
        if len(freqs) > 1:
            d = np.abs(freqs[:, None, :] - freqs[None, :, :])
            d = np.sqrt((d**2).sum(-1))
            np.fill_diagonal(d, np.inf)
            if d.min() <= TAU_DUP * max(diam, 1.0):
                raise ValueError("spectrum has duplicate frequencies")
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)

    @classmethod
    def from_points(cls, points, n=None) -> "Spectrum":
        """Build a spectrum, silently merging near-duplicate points."""
        pts = np.asarray(points, dtype=complex)
        if pts.ndim < 2:
            pts = pts.reshape(-1, 1 if n is None else n)
        return cls(dedupe(pts))

    @property
    def n(self) -> int:
        return self.freqs.shape[1]

    def __len__(self):
        return self.freqs.shape[0]

    def __iter__(self):
        return iter(self.freqs)

    @property
    def diameter(self) -> float:
        return _diameter(self.freqs)

    def minkowski(self, other: "Spectrum") -> "Spectrum":
        if other.n != self.n:
            raise DimensionError("Minkowski sum of spectra of different dimension")
        pts = (self.freqs[:, None, :] + other.freqs[None, :, :]).reshape(-1, self.n)
        return Spectrum(dedupe(pts))

    def translate(self, shift) -> "Spectrum":
        return Spectrum(self.freqs + np.asarray(shift, dtype=complex))

    def scaled(self, lam: float) -> "Spectrum":
        return Spectrum(self.freqs * lam)

    def transform(self, u: np.ndarray) -> "Spectrum":
        """Apply the linear map ``xi -> u @ xi`` to every frequency."""
        return Spectrum(self.freqs @ np.asarray(u, dtype=complex).T)

    def contains(self, xi, tol: float = TAU_DUP) -> bool:
        d = np.sqrt((np.abs(self.freqs - np.asarray(xi, dtype=complex)) ** 2).sum(-1))
        return bool(d.min() <= tol * max(self.diameter, 1.0))

    def __repr__(self):
        return f"Spectrum(n={self.n}, size={len(self)})"


def _diameter(freqs: np.ndarray) -> float:
    if len(freqs) < 2:
        return 0.0
    d = freqs[:, None, :] - freqs[None, :, :]
    return float(np.sqrt((np.abs(d) ** 2).sum(-1)).max())


def dedupe(points: np.ndarray, tol: float = TAU_DUP) -> np.ndarray:
    """Drop points within ``tol * diameter`` of an earlier point."""
    points = np.atleast_2d(np.asarray(points, dtype=complex))
    thresh = tol * max(_diameter(points), 1.0)
    keep: list[np.ndarray] = []
    for p in points:
        if all(np.sqrt((np.abs(p - q) ** 2).sum()) > thresh for q in keep):
            keep.append(p)
    return np.array(keep)


# --------------------------------------------------------------------------
# quasi-polynomials


def _canonical_poly(poly: Mapping, n: int) -> tuple[np.ndarray, np.ndarray]:
    acc: dict[tuple[int, ...], complex] = {}
    for exps, coeff in poly.items():
        exps = tuple(int(e) for e in np.atleast_1d(exps))
        if len(exps) != n or min(exps) < 0:
            raise DimensionError(f"bad multi-exponent {exps} for n={n}")
        acc[exps] = acc.get(exps, 0) + complex(coeff)
    items = sorted((k, v) for k, v in acc.items() if v != 0)
    if not items:
        return np.zeros((0, n), dtype=int), np.zeros(0, dtype=complex)
    exps = np.array([k for k, _ in items], dtype=int)
    coeffs = np.array([v for _, v in items], dtype=complex)
    return exps, coeffs


@dataclass(frozen=True, eq=False)
class QuasiPolynomial:
    """``sum_xi p_xi(z) exp(xi(z))``.

    ``freqs`` has shape ``(T, n)``; ``polys[t]`` is a pair ``(exps, coeffs)``
    with ``exps`` an integer ``(k, n)`` array of multi-exponents.
    """

    n: int
    freqs: np.ndarray
    polys: tuple = field(default=())

    @classmethod
    def from_terms(cls, terms: Iterable, n: int | None = None) -> "QuasiPolynomial":
        """Build from ``[(freq, {multi_exponent: coeff}), ...]``.

        Terms sharing a frequency are merged and vanishing polynomials dropped.
        """
        terms = list(terms)
        if n is None:
            if not terms:
                raise ValueError("cannot infer n from an empty term list")
            n = np.atleast_1d(np.asarray(terms[0][0], dtype=complex)).shape[0]
        merged: list[tuple[np.ndarray, dict]] = []
        for freq, poly in terms:
            freq = np.atleast_1d(np.asarray(freq, dtype=complex))
            if freq.shape != (n,):
                raise DimensionError(f"frequency {freq} is not of dimension {n}")
            for f0, p0 in merged:
                if np.allclose(f0, freq, rtol=0, atol=TAU_DUP):
                    for k, v in poly.items():
                        k = tuple(np.atleast_1d(k).tolist())
                        p0[k] = p0.get(k, 0) + v
                    break
            else:
                merged.append((freq, {tuple(np.atleast_1d(k).tolist()): v for k, v in poly.items()}))
        freqs, polys = [], []
        for freq, poly in merged:
            exps, coeffs = _canonical_poly(poly, n)
            if len(coeffs):
                freqs.append(freq)
                polys.append((exps, coeffs))
        freqs_arr = np.array(freqs, dtype=complex).reshape(len(freqs), n)
        return cls(n, freqs_arr, tuple(polys))

    @classmethod
    def exponential_sum(cls, freqs, coeffs) -> "QuasiPolynomial":
        freqs = np.asarray(freqs, dtype=complex)
        if freqs.ndim == 1:
            freqs = freqs[:, None]
        n = freqs.shape[1]
        zero = (0,) * n
        return cls.from_terms([(f, {zero: c}) for f, c in zip(freqs, coeffs)], n=n)

    @property
    def num_terms(self) -> int:
        return len(self.polys)

    @property
    def is_zero(self) -> bool:
        return self.num_terms == 0

    @property
    def spectrum(self) -> Spectrum:
        return Spectrum(self.freqs)

    @property
    def degree(self) -> int:
        return max((int(e.sum(-1).max()) for e, _ in self.polys), default=0)

    def terms(self) -> list[tuple[tuple[complex, ...], dict[tuple[int, ...], complex]]]:
        out = []
        for freq, (exps, coeffs) in zip(self.freqs, self.polys):
            out.append((tuple(freq.tolist()), {tuple(e.tolist()): c for e, c in zip(exps, coeffs)}))
        return out

    def isclose(self, other: "QuasiPolynomial", tol: float = 1e-12) -> bool:
        if self.n != other.n or self.num_terms != other.num_terms:
            return False
        for freq, poly in other.terms():
            idx = np.flatnonzero(np.all(np.abs(self.freqs - np.array(freq)) <= tol, axis=1))
            if len(idx) != 1:
                return False
            mine = self.terms()[idx[0]][1]
            if mine.keys() != poly.keys():
                return False
            if any(abs(mine[k] - poly[k]) > tol * max(1.0, abs(poly[k])) for k in poly):
                return False
        return True

    def __add__(self, other: "QuasiPolynomial") -> "QuasiPolynomial":
        if other.n != self.n:
            raise DimensionError("dimension mismatch")
        return QuasiPolynomial.from_terms(self.terms() + other.terms(), n=self.n)

    def __mul__(self, c: complex) -> "QuasiPolynomial":
        return QuasiPolynomial.from_terms(
            [(f, {k: v * c for k, v in p.items()}) for f, p in self.terms()], n=self.n
        )

    __rmul__ = __mul__

    def __call__(self, z):
        return evaluate(self, z)

    def _term_parts(self, z: np.ndarray):
        """Polynomial values (..., T) and exponents (..., T) at points z (..., n)."""
        expo = z @ self.freqs.T
        pvals = np.empty(expo.shape, dtype=complex)
        for t, (exps, coeffs) in enumerate(self.polys):
            if exps.shape[0] == 1 and not exps.any():
                pvals[..., t] = coeffs[0]
                continue
            mono = np.prod(z[..., None, :] ** exps, axis=-1)
            pvals[..., t] = mono @ coeffs
        return pvals, expo

    def eval_scaled(self, z, shift=None):
        """Return ``(mantissa, log_scale, term_scale)`` with
        ``f(z) = mantissa * exp(log_scale)``.

        ``log_scale`` is ``max_xi Re xi(z)`` unless given, and ``term_scale`` is
        ``sum |p_xi(z) exp(xi(z) - log_scale)|``, a natural magnitude for
        relative tolerances.
        """
        z = as_points(z, self.n)
        if self.is_zero:
            zero = np.zeros(z.shape[:-1])
            return zero.astype(complex), zero, zero
        pvals, expo = self._term_parts(z)
        if shift is None:
            shift = expo.real.max(axis=-1)
        e = np.exp(expo - shift[..., None])
        terms = pvals * e
        return terms.sum(-1), shift, np.abs(terms).sum(-1)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "terms": [
                {
                    "freq": [[c.real, c.imag] for c in freq],
                    "poly": [
                        {"exps": list(exps), "coeff": [coeff.real, coeff.imag]}
                        for exps, coeff in poly.items()
                    ],
                }
                for freq, poly in self.terms()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "QuasiPolynomial":
        n = int(data["n"])
        terms = []
        for term in data["terms"]:
            freq = [_complex(c) for c in term["freq"]]
            poly = {tuple(p["exps"]): _complex(p["coeff"]) for p in term.get("poly", [])}
            if not poly:
                poly = {(0,) * n: 1.0}
            terms.append((freq, poly))
        return cls.from_terms(terms, n=n)


def _complex(c) -> complex:
    if isinstance(c, (list, tuple)):
        return complex(c[0], c[1] if len(c) > 1 else 0.0)
    return complex(c)


def evaluate(f: QuasiPolynomial, z) -> complex | np.ndarray:
    """Evaluate ``f`` at ``z``.

    Arguments with ``Re xi(z) > 700`` go through a max-shifted path; a result
    that still does not fit in a double raises ``OverflowError``.
    """
    z = as_points(z, f.n)
    scalar = z.ndim == 1
    if f.is_zero:
        out = np.zeros(z.shape[:-1], dtype=complex)
    else:
        pvals, expo = f._term_parts(z)
        shift = expo.real.max(axis=-1)
        shift = np.where(shift > OVERFLOW_THRESHOLD, shift, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            mant = (pvals * np.exp(expo - shift[..., None])).sum(-1)
            out = mant * np.exp(shift)
        if not np.all(np.isfinite(out)):
            raise OverflowError("quasi-polynomial value overflows double precision")
    return out[()] if scalar else out


def scale(f: QuasiPolynomial, t: float) -> QuasiPolynomial:
    """The quasi-polynomial ``z -> f(t z)``."""
    if not t > 0:
        raise ValueError("scale factor must be positive")
    polys = tuple((exps, coeffs * t ** exps.sum(-1)) for exps, coeffs in f.polys)
    return QuasiPolynomial(f.n, f.freqs * t, polys)


def derivative(f: QuasiPolynomial, k: int = 0) -> QuasiPolynomial:
    """Partial derivative in ``z_k``: ``(d_k p + xi_k p) exp(xi(z))`` termwise."""
    terms = []
    for freq, (exps, coeffs) in zip(f.freqs, f.polys):
        poly: dict[tuple[int, ...], complex] = {}
        for e, c in zip(exps, coeffs):
            key = tuple(e.tolist())
            poly[key] = poly.get(key, 0) + freq[k] * c
            if e[k] > 0:
                e2 = e.copy()
                e2[k] -= 1
                key2 = tuple(e2.tolist())
                poly[key2] = poly.get(key2, 0) + e[k] * c
        terms.append((freq, poly))
    return QuasiPolynomial.from_terms(terms, n=f.n) if terms else f


# --------------------------------------------------------------------------
# support functions


def support_function(K: Spectrum, z) -> float | np.ndarray:
    """``h_K(z) = max_xi Re xi(z)``."""
    z = as_points(z, K.n)
    h = (z @ K.freqs.T).real.max(axis=-1)
    return h[()] if z.ndim == 1 else h


def smoothed_support(K: Spectrum, eps: float, z) -> float | np.ndarray:
    """Log-sum-exp smoothing ``eps * log sum exp(Re xi(z) / eps)``.

    Lies between ``h_K`` and ``h_K + eps * log|K|``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = as_points(z, K.n)
    a = (z @ K.freqs.T).real
    h = a.max(axis=-1)
    out = h + eps * np.log(np.exp((a - h[..., None]) / eps).sum(-1))
    return out[()] if z.ndim == 1 else out


def supporting_face(K: Spectrum, z, tol: float = 0.0) -> Spectrum:
    """Frequencies of ``K`` on the face of ``conv(K)`` maximizing ``Re xi(z)``."""
    z = as_points(z, K.n)
    if z.ndim != 1:
        raise ValueError("supporting_face takes a single point")
    znorm = float(np.linalg.norm(z))
    if znorm == 0:
        raise ValueError("the supporting face is undefined at z = 0")
    vals = (K.freqs @ z).real
    # a few ulps so that exact ties survive rounding
    slack = tol * znorm + 8 * np.finfo(float).eps * znorm * max(np.abs(K.freqs).max(), 1.0)
    return Spectrum(K.freqs[vals >= vals.max() - slack])


# --------------------------------------------------------------------------
# convex hulls and faces


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of a spectrum in the underlying real ``2n``-space.

    For n = 1 the vertices are in counter-clockwise order.
    """

    vertices: Spectrum

    @property
    def n(self) -> int:
        return self.vertices.n

    def support(self, z):
        return support_function(self.vertices, z)

    @cached_property
    def faces(self) -> list[np.ndarray]:
        """Index sets (into ``vertices``) of all non-empty faces."""
        m = len(self.vertices)
        if self.n == 1 and m > 2:
            out = [np.arange(m)]
            out += [np.array([i]) for i in range(m)]
            out += [np.array([i, (i + 1) % m]) for i in range(m)]
            return out
        return point_set_faces(self.vertices.freqs)


def _in_hull(p: np.ndarray, others: np.ndarray) -> bool:
    """LP feasibility: is p a convex combination of the rows of ``others``?"""
    m = len(others)
    if m == 0:
        return False
    a_eq = np.vstack([others.T, np.ones(m)])
    b_eq = np.append(p, 1.0)
    res = linprog(np.zeros(m), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def _chain_hull(pts: np.ndarray) -> np.ndarray:
    """Indices of the strict vertices of a planar hull, counter-clockwise."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    scale_ = max(np.abs(pts).max(), 1.0)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(idx):
        out: list[int] = []
        for i in idx:
            while len(out) >= 2 and cross(pts[out[-2]], pts[out[-1]], pts[i]) <= 1e-12 * scale_**2:
                out.pop()
            out.append(i)
        return out

    lower = half(order)
    upper = half(order[::-1])
    chain = lower[:-1] + upper[:-1]
    if not chain:
        chain = [order[0]]
    return np.array(chain)


def hull(K: Spectrum) -> Polytope:
    """Vertex set of ``conv(K)``.

    n = 1 uses a monotone chain in the plane; higher n prunes points that are
    convex combinations of the remaining ones.
    """
    pts = real_embedding(K.freqs)
    if len(K) == 1:
        return Polytope(K)
    if K.n == 1:
        idx = _chain_hull(pts)
        return Polytope(Spectrum(K.freqs[idx]))
    keep = list(range(len(K)))
    for i in range(len(K)):
        rest = [j for j in keep if j != i]
        if _in_hull(pts[i], pts[rest]):
            keep = rest
    return Polytope(Spectrum(K.freqs[keep]))


def point_set_faces(freqs: np.ndarray, max_vertices: int = 12) -> list[np.ndarray]:
    """All non-empty faces of ``conv(freqs)`` as index arrays into ``freqs``.

    Each face lists every input point lying on it, not only its vertices.
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=complex))
    pts = real_embedding(freqs)
    verts = np.flatnonzero(
        [not _in_hull(pts[i], np.delete(pts, i, axis=0)) for i in range(len(pts))]
    ) if len(pts) > 1 else np.array([0])
    if len(verts) > max_vertices:
        raise ValueError(f"face enumeration limited to {max_vertices} vertices")
    scale_ = max(np.abs(pts).max(), 1.0)
    faces: list[np.ndarray] = [np.arange(len(pts))]
    seen = {tuple(range(len(pts)))}
    vpts = pts[verts]
    d = pts.shape[1]
    for size in range(1, len(verts)):
        for sub in itertools.combinations(range(len(verts)), size):
            inside = vpts[list(sub)]
            outside = np.delete(vpts, list(sub), axis=0)
            # variables (w, c): w.v - c = 0 on sub, w.v - c <= -1 elsewhere
            a_eq = np.hstack([inside, -np.ones((len(inside), 1))])
            a_ub = np.hstack([outside, -np.ones((len(outside), 1))])
            res = linprog(
                np.zeros(d + 1),
                A_ub=a_ub,
                b_ub=-np.ones(len(outside)),
                A_eq=a_eq,
                b_eq=np.zeros(len(inside)),
                bounds=(None, None),
                method="highs",
            )
            if res.status != 0:
                continue
            w, c = res.x[:d], res.x[d]
            on = np.flatnonzero(np.abs(pts @ w - c) <= 1e-9 * scale_ * max(np.abs(w).sum(), 1.0))
            key = tuple(on.tolist())
            if key not in seen:
                seen.add(key)
                faces.append(on)
    return faces


def construct_face_sum(K: Spectrum, z, coefficients) -> QuasiPolynomial:
    """Exponential sum supported on the supporting face of ``z``.

    ``coefficients`` is aligned with ``supporting_face(K, z)``.  Every face of
    that supporting face must carry a non-vanishing partial sum at ``z``;
    otherwise :class:`FaceConditionError` lists the offending faces.
    """
    z = as_points(z, K.n)
    face = supporting_face(K, z, 0.0)
    c = np.asarray(coefficients, dtype=complex).ravel()
    if c.shape != (len(face),):
        raise ValueError(f"need {len(face)} coefficients for the supporting face, got {c.size}")
    if np.any(c == 0):
        raise ValueError("face coefficients must be non-zero")
    expo = face.freqs @ z
    vals = c * np.exp(expo - expo.real.max())
    failing = []
    for idx in point_set_faces(face.freqs):
        s = vals[idx].sum()
        if abs(s) <= 1e-12 * np.abs(vals[idx]).sum():
            failing.append(face.freqs[idx])
    if failing:
        raise FaceConditionError(f"{len(failing)} sub-face sum(s) vanish at z", failing)
    return QuasiPolynomial.exponential_sum(face.freqs, c)


# --------------------------------------------------------------------------
# file I/O


def load_quasi_polynomial(path) -> QuasiPolynomial:
    return QuasiPolynomial.from_json(json.loads(Path(path).read_text()))


def spectrum_from_json(data: dict) -> Spectrum:
    """Accept the quasi-polynomial schema or a bare ``{"n", "freqs"}`` list."""
    if "terms" in data:
        return QuasiPolynomial.from_json(data).spectrum
    n = int(data["n"])
    freqs = [[_complex(c) for c in f] for f in data["freqs"]]
    return Spectrum(np.array(freqs, dtype=complex).reshape(-1, n))


def load_spectrum(path) -> Spectrum:
    return spectrum_from_json(json.loads(Path(path).read_text()))


def spectrum_to_json(K: Spectrum) -> dict:
    return {"n": K.n, "freqs": [[[c.real, c.imag] for c in f] for f in K.freqs]}


def disk_spectrum(num: int = 64, radius: float = 1.0) -> Spectrum:
    """Boundary discretization of a closed disk in ``C*``.

    The support function is within ``radius * (1 - cos(pi/num))`` of ``radius |z|``.
    """
    ang = 2 * math.pi * np.arange(num) / num
    return Spectrum((radius * np.exp(1j * ang))[:, None])


def unit_vector(n: int, k: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[k] = 1
    return e


def segment(n: int, k: int) -> Spectrum:
    """The spectrum ``{0, e_k}``."""
    return Spectrum(np.array([np.zeros(n), unit_vector(n, k)]))


def as_spectrum(K: Spectrum | Sequence) -> Spectrum:
    return K if isinstance(K, Spectrum) else Spectrum.from_points(K)
