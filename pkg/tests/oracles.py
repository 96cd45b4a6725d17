"""Reference values computed independently of the package.

Nothing here imports ``expzeros``; each oracle uses a different route to the
same quantity (closed forms, enumeration, finite differences, flux integrals).
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy.special import logsumexp


def lattice_count_one_plus_exp(r: float) -> int:
    """Zeros of ``1 + e^z`` are ``i pi (2k + 1)``; count those with ``|z| < r``."""
    return 2 * sum(1 for k in range(int(r) + 2) if math.pi * (2 * k + 1) < r)


def exp_poly_zeros(coeffs, r: float) -> np.ndarray:
    """Zeros with ``|z| < r`` of ``sum_k coeffs[k] e^{k z}`` (integer frequencies).

    Every zero is ``log w + 2 pi i m`` for a root ``w`` of the polynomial
    ``sum coeffs[k] w^k``.
    """
    w = np.roots(list(coeffs)[::-1])
    w = w[np.abs(w) > 0]
    out = []
    m_max = int(r / (2 * math.pi)) + 2
    for root in w:
        base = cmath.log(complex(root))
        for m in range(-m_max, m_max + 1):
            z = base + 2j * math.pi * m
            if abs(z) < r:
                out.append(z)
    return np.array(out)


def lattice_roots_ball(r: float) -> int:
    """Common roots of ``1 + e^{z1}``, ``1 + e^{z2}`` with ``|z| < r``."""
    k = int(r / math.pi) + 2
    odd = math.pi * (2 * np.arange(-k, k) + 1)
    a, b = np.meshgrid(odd, odd)
    return int(np.sum(a**2 + b**2 < r**2))


def half_perimeter(points) -> float:
    """``(1/2) int_0^{2 pi} h_K(e^{i theta}) d theta`` for a planar point set,
    computed from the convex hull perimeter (Cauchy's formula)."""
    p = np.asarray(points, dtype=complex).ravel()
    if len(p) == 1:
        return 0.0
    pts = sorted(set((round(z.real, 14), round(z.imag, 14)) for z in p))
    if len(pts) == 2:
        (a, b), (c, d) = pts
        return math.hypot(a - c, b - d)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    for q in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    hullp = lower[:-1] + upper[:-1]
    per = sum(math.dist(hullp[i], hullp[(i + 1) % len(hullp)]) for i in range(len(hullp)))
    return per / 2


def lse_support(freqs, eps: float, z) -> np.ndarray:
    """``eps log sum exp(Re <xi, z> / eps)`` with ``z`` of shape (N, n)."""
    freqs = np.atleast_2d(np.asarray(freqs, dtype=complex))
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    return eps * logsumexp((z @ freqs.T).real / eps, axis=-1)


def flux_pvol_1d(freqs, eps: float, radius: float = 1.0, m: int = 4096, dr: float = 1e-5) -> float:
    """``(1/2) oint d_r h_eps`` over the circle of given radius (Green's theorem)."""
    th = 2 * math.pi * np.arange(m) / m
    u = np.exp(1j * th)[:, None]
    f = np.asarray(freqs, dtype=complex).reshape(-1, 1)
    d = (lse_support(f, eps, (radius + dr) * u) - lse_support(f, eps, (radius - dr) * u)) / (2 * dr)
    return 0.5 * radius * d.mean() * 2 * math.pi


def fd_complex_hessian(fun, z: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """``u_{z_j zbar_k}`` from real second differences of ``fun`` at one point."""
    z = np.asarray(z, dtype=complex)
    n = len(z)
    x = np.concatenate([z.real, z.imag])

    def g(v):
        return float(fun((v[:n] + 1j * v[n:])[None, :])[0])

    H = np.zeros((2 * n, 2 * n))
    for a in range(2 * n):
        for b in range(2 * n):
            ea, eb = np.eye(2 * n)[a] * h, np.eye(2 * n)[b] * h
            H[a, b] = (g(x + ea + eb) - g(x + ea - eb) - g(x - ea + eb) + g(x - ea - eb)) / (4 * h * h)
    xx, yy, xy = H[:n, :n], H[n:, n:], H[:n, n:]
    return 0.25 * (xx + yy + 1j * (xy - xy.T))


def density_one_plus_exp(x) -> np.ndarray:
    """Expected zero density of ``a + b e^z`` (i.i.d. Gaussian ``a, b``) at ``Re z = x``."""
    s = 1 / (1 + np.exp(-2 * np.asarray(x, dtype=float)))
    return s * (1 - s) / math.pi


def log_norm_s0(t: float, z: complex) -> float:
    """``(1/t) log ||Theta(t z)||`` for span{1, e^z} with the identity Gram."""
    return 0.5 * np.logaddexp(0.0, 2 * t * z.real) / t


def log_norm_s2(t: float, z: complex) -> float:
    """Same for span{z^a e^{xi z}: a <= 2, xi in {0, 1}} with the identity Gram."""
    r2 = abs(t * z) ** 2
    return 0.5 * (math.log(1 + r2 + r2 * r2) + np.logaddexp(0.0, 2 * t * z.real)) / t


# frozen values of the flux oracle for K = {0, 1}
FLUX_SEGMENT = {0.2: 0.923127, 0.1: 0.982845, 0.05: 0.995851, 0.025: 0.998970}
