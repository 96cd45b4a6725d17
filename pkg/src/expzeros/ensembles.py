"""Gaussian ensembles in finite-dimensional spaces of quasi-polynomials.

A space ``V`` carries a basis ``b_1..b_d`` and a Gram matrix ``G`` with
``||sum c_i b_i||^2 = c^H G c``.  With ``G = L L^H`` the functions
``e(z) = conj(L)^{-1} b(z)`` form an orthonormal frame, the evaluation
functional has norm ``||e(z)||``, and ``sum g_i e_i`` with i.i.d. standard
complex Gaussian ``g_i`` is the Gaussian whose projective class is
Fubini-Study distributed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import qmc

from ._parallel import parallel_map
from .monge_ampere import QuadratureSpec, integrate_ball
from .spectrum import QuasiPolynomial, Spectrum, as_points, derivative, scale, support_function
from .zeros1d import ContourError, ContourSpec, count_zeros_disk

RESAMPLE_FRACTION = 0.05


class ResampleBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class HermitianBasisSpace:
    basis: tuple
    gram: np.ndarray
    spectrum: Spectrum

    def __post_init__(self):
        basis = tuple(self.basis)
        if not basis:
            raise ValueError("a space needs at least one basis function")
        n = basis[0].n
        if any(b.n != n or b.is_zero for b in basis):
            raise ValueError("basis functions must be non-zero and share the dimension n")
        gram = np.asarray(self.gram, dtype=complex)
        d = len(basis)
        if gram.shape != (d, d):
            raise ValueError(f"Gram matrix must be {d}x{d}")
        if not np.allclose(gram, gram.conj().T, atol=1e-12 * np.abs(gram).max()):
            raise ValueError("Gram matrix is not Hermitian")
        ev = np.linalg.eigvalsh(gram)
        if ev.min() <= 1e-12 * ev.max():
            raise ValueError("Gram matrix is not positive definite")
        for b in basis:
            if not all(self.spectrum.contains(xi) for xi in b.freqs):
                raise ValueError("basis frequencies must lie in the declared spectrum")
        if d > 1:
            rng = np.random.default_rng(12345)
            pts = rng.normal(size=(4 * d, n)) + 1j * rng.normal(size=(4 * d, n))
            pts *= 0.5
            vals = np.stack([b.eval_scaled(pts, shift=np.zeros(len(pts)))[0] for b in basis], axis=1)
            sv = np.linalg.svd(vals, compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0]:
                raise ValueError("basis functions are linearly dependent")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "gram", gram)
        lower = np.linalg.cholesky(gram)
        object.__setattr__(self, "_chol", lower)
        freqs = np.concatenate([b.freqs for b in basis])
        object.__setattr__(self, "_freqs", freqs)

    @property
    def n(self) -> int:
        return self.basis[0].n

    @property
    def dim(self) -> int:
        return len(self.basis)

    def basis_values(self, z, derivative_basis: tuple | None = None):
        """Basis values at ``z`` scaled by a common factor ``exp(-shift)``.

        Returns ``(values, shift)`` with values of shape ``(N, d)``.
        """
        z = as_points(z, self.n).reshape(-1, self.n)
        shift = (z @ self._freqs.T).real.max(-1)
        funcs = self.basis if derivative_basis is None else derivative_basis
        vals = np.stack([b.eval_scaled(z, shift=shift)[0] for b in funcs], axis=1)
        return vals, shift

    def frame(self, vals: np.ndarray) -> np.ndarray:
        """Orthonormal-frame coordinates ``conj(L)^{-1} b`` (rows are points)."""
        return solve_triangular(self._chol.conj(), vals.T, lower=True).T

    def combination(self, coeffs) -> QuasiPolynomial:
        """``sum c_i b_i`` as a single quasi-polynomial."""
        terms = []
        for c, b in zip(np.asarray(coeffs, dtype=complex), self.basis):
            terms += [(f, {k: v * c for k, v in p.items()}) for f, p in b.terms()]
        return QuasiPolynomial.from_terms(terms, n=self.n)

    def with_gram(self, gram) -> "HermitianBasisSpace":
        return HermitianBasisSpace(self.basis, gram, self.spectrum)

    def rebased(self, a: np.ndarray) -> "HermitianBasisSpace":
        """The same space and inner product in the basis ``b'_j = sum_i a_ij b_i``."""
        a = np.asarray(a, dtype=complex)
        basis = tuple(self.combination(a[:, j]) for j in range(self.dim))
        gram = a.conj().T @ self.gram @ a
        return HermitianBasisSpace(basis, 0.5 * (gram + gram.conj().T), self.spectrum)

    def rotated(self, u: np.ndarray) -> "HermitianBasisSpace":
        """Basis ``u^T e`` built from the orthonormal frame ``e`` (Gram stays the identity)."""
        a = solve_triangular(self._chol.conj().T, np.asarray(u, dtype=complex), lower=False)
        return self.rebased(a)


def exponential_sum_space(K: Spectrum, gram=None, spectrum: Spectrum | None = None) -> HermitianBasisSpace:
    """Exponential sums with spectrum ``K`` (identity Gram by default)."""
    zero = (0,) * K.n
    basis = tuple(QuasiPolynomial.from_terms([(xi, {zero: 1.0})], n=K.n) for xi in K.freqs)
    gram = np.eye(len(basis)) if gram is None else gram
    return HermitianBasisSpace(basis, gram, spectrum or K)


def quasi_polynomial_space(K: Spectrum, degree: int, gram=None) -> HermitianBasisSpace:
    """Quasi-polynomials ``sum p_xi exp(xi(z))`` with ``deg p_xi <= degree``,
    basis ``z^a exp(xi(z))``."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=K.n) if sum(e) <= degree]
    basis = tuple(QuasiPolynomial.from_terms([(xi, {e: 1.0})], n=K.n) for xi in K.freqs for e in exps)
    gram = np.eye(len(basis)) if gram is None else gram
    return HermitianBasisSpace(basis, gram, K)


def log_functional_norm(V: HermitianBasisSpace, z) -> np.ndarray:
    """``log ||Theta(z)||`` computed without overflow."""
    vals, shift = V.basis_values(z)
    return np.log(np.linalg.norm(V.frame(vals), axis=-1)) + shift


def eval_functional_norm(V: HermitianBasisSpace, z) -> float | np.ndarray:
    """``sup_{||f|| = 1} |f(z)|`` for ``f`` in ``V``."""
    z = as_points(z, V.n)
    out = np.exp(log_functional_norm(V, z))
    return out[0] if z.ndim == 1 else out.reshape(z.shape[:-1])


def _as_seed(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_random_function(V: HermitianBasisSpace, seed) -> QuasiPolynomial:
    """``sum g_i e_i`` with i.i.d. standard complex Gaussian ``g_i``."""
    rng = np.random.default_rng(_as_seed(seed))
    while True:
        g = (rng.standard_normal(V.dim) + 1j * rng.standard_normal(V.dim)) / math.sqrt(2)
        if np.any(g != 0):
            break
    coeffs = solve_triangular(V._chol.conj().T, g, lower=False)
    return V.combination(coeffs)


@dataclass
class AverageResult:
    mean: float
    stderr: float
    values: list[float] = field(default_factory=list)
    resamples: int = 0
    t: float = 1.0
    radius: float = 1.0

    def __iter__(self):
        return iter((self.mean, self.stderr))


def _trial(V, t, r, seq: np.random.SeedSequence, max_retries: int):
    """One Monte-Carlo trial; on counting failure resample from a child seed."""
    attempts = 0
    current = seq
    while True:
        f = sample_random_function(V, current)
        try:
            rep = count_zeros_disk(scale(f, t), ContourSpec(radius=r))
            return rep.count / t, attempts
        except ContourError:
            attempts += 1
            if attempts > max_retries:
                return None, attempts
            current = seq.spawn(1)[0]


def averaged_count_1d(
    V: HermitianBasisSpace,
    t: float,
    r: float,
    trials: int,
    seed=0,
    workers: int | None = None,
) -> AverageResult:
    """Monte-Carlo mean of ``count(f(t .) in |z| < r) / t`` over the Gaussian ensemble."""
    if V.n != 1:
        raise ValueError("averaged_count_1d needs n = 1")
    if trials < 2:
        raise ValueError("need at least two trials")
    cap = max(1, int(RESAMPLE_FRACTION * trials))
    seqs = _as_seed(seed).spawn(trials)
    out = parallel_map(lambda s: _trial(V, t, r, s, cap), seqs, workers=workers)
    resamples = sum(a for _, a in out)
    if resamples > cap or any(v is None for v, _ in out):
        raise ResampleBudgetExceeded(f"{resamples} counting failures exceed the cap of {cap}")
    vals = np.array([v for v, _ in out])
    mean = math.fsum(vals) / trials
    stderr = float(vals.std(ddof=1) / math.sqrt(trials))
    return AverageResult(mean, stderr, vals.tolist(), resamples, t, r)


def expected_density_exact(V: HermitianBasisSpace, z) -> float | np.ndarray:
    """Expected zero density of the Gaussian ensemble at ``z`` (n = 1).

    ``(1/(4 pi)) Laplacian log ||e(z)||^2``, evaluated in closed form from the
    frame and its derivative.
    """
    if V.n != 1:
        raise ValueError("expected_density_exact needs n = 1")
    z = as_points(z, 1)
    scalar = z.ndim == 1
    dbasis = tuple(derivative(b) for b in V.basis)
    vals, _ = V.basis_values(z)
    dvals, _ = V.basis_values(z, derivative_basis=dbasis)
    v = V.frame(vals)
    dv = V.frame(dvals)
    nv = (np.abs(v) ** 2).sum(-1)
    if np.any(nv == 0):
        raise ZeroDivisionError("all functions of V vanish at some point")
    ndv = (np.abs(dv) ** 2).sum(-1)
    cross = np.abs((v.conj() * dv).sum(-1)) ** 2
    dens = np.maximum(nv * ndv - cross, 0.0) / (math.pi * nv**2)
    return dens[0] if scalar else dens.reshape(z.shape[:-1])


def expected_count_disk(V: HermitianBasisSpace, r: float, samples: int | None = None) -> tuple[float, float]:
    """Quadrature of ``expected_density_exact`` over ``|z| < r``."""
    return integrate_ball(
        lambda pts: expected_density_exact(V, pts), 1, QuadratureSpec(radius=r, samples=samples)
    )


@dataclass
class CroftonCheck:
    mc: AverageResult
    quadrature: float
    quadrature_error: float

    @property
    def zscore(self) -> float:
        s = math.hypot(self.mc.stderr, self.quadrature_error)
        return abs(self.mc.mean - self.quadrature) / s if s > 0 else math.inf


def crofton_check(V: HermitianBasisSpace, r: float, trials: int, seed=0, workers: int | None = None) -> CroftonCheck:
    """Monte-Carlo zero count in ``|z| < r`` against the integrated expected density."""
    mc = averaged_count_1d(V, 1.0, r, trials, seed, workers)
    q, qerr = expected_count_disk(V, r)
    return CroftonCheck(mc, q, qerr)


# --------------------------------------------------------------------------
# regularity


def sphere_sample(n: int, count: int | None = None, seed=0) -> np.ndarray:
    """Quasi-uniform unit vectors in C^n: equispaced angles for n = 1,
    normalized Gaussian images of a scrambled Sobol sequence otherwise."""
    if n == 1:
        count = count or 64
        return np.exp(2j * math.pi * np.arange(count) / count)[:, None]
    count = count or 256
    from scipy.special import ndtri

    u = qmc.Sobol(d=2 * n, scramble=True, seed=np.random.default_rng(_as_seed(seed))).random(count)
    x = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    z = x[:, :n] + 1j * x[:, n:]
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


@dataclass
class RegularityProfile:
    t_values: np.ndarray
    directions: np.ndarray
    deviations: np.ndarray  # signed, shape (len(t), len(directions))
    upper_eps: float
    upper_c: float
    violations: int
    warnings: list[str] = field(default_factory=list)

    @property
    def sup_deviation(self) -> np.ndarray:
        return np.abs(self.deviations).max(axis=1)

    @property
    def worst_directions(self) -> np.ndarray:
        return self.directions[np.abs(self.deviations).argmax(axis=1)]

    def deviation_at(self, z) -> np.ndarray:
        """Signed deviations per t at the sample direction closest to ``z``."""
        z = as_points(z, self.directions.shape[1])
        i = np.argmin(np.linalg.norm(self.directions - z, axis=-1))
        return self.deviations[:, i]

    def rows(self) -> list[dict]:
        worst = self.worst_directions
        return [
            {"t": float(t), "sup_deviation": float(d), "worst_direction": str(complex(w[0]) if len(w) == 1 else tuple(w))}
            for t, d, w in zip(self.t_values, self.sup_deviation, worst)
        ]


def regularity_profile(
    V: HermitianBasisSpace,
    K: Spectrum | None,
    t_list,
    sphere_samples: int | None = None,
    seed=0,
    eps: float = 0.1,
) -> RegularityProfile:
    """Deviation of ``(1/t) log ||Theta(t z)||`` from ``h_K(z)`` on a sphere sample.

    The upper bound ``dev <= C/t + eps |z|`` is fitted on the smaller half of
    ``t_list`` (``C`` as small as possible) and checked on the larger half;
    ``violations`` counts failures of that check.
    """
    K = K or V.spectrum
    t = np.asarray(t_list, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t values must be positive and increasing")
    dirs = sphere_sample(V.n, sphere_samples, seed)
    h = support_function(K, dirs)
    warnings: list[str] = []
    dev = np.empty((len(t), len(dirs)))
    for i, ti in enumerate(t):
        lg = log_functional_norm(V, ti * dirs)
        bad = ~np.isfinite(lg)
        if bad.any():
            warnings.append(f"t={ti:g}: non-finite norm in {int(bad.sum())} direction(s)")
        dev[i] = lg / ti - h
    absz = np.linalg.norm(dirs, axis=-1)
    k = max(1, len(t) // 2)
    excess = t[:, None] * (dev - eps * absz[None, :])
    c = max(0.0, float(np.nanmax(excess[:k])))
    viol = int(np.sum(excess[k:] > c + 1e-9 * (1 + c)))
    return RegularityProfile(t, dirs, dev, eps, c, viol, warnings)
