import math

import numpy as np
import pytest

from expzeros.monge_ampere import (
    QuadratureSpec,
    complex_hessian,
    extrapolate,
    integrate_ball,
    ma_density,
    mixed_pvol,
    mixed_volume_real,
    pvol,
)
from expzeros.spectrum import DimensionError, Polytope, Spectrum, disk_spectrum, segment

from oracles import FLUX_SEGMENT, fd_complex_hessian, flux_pvol_1d, half_perimeter, lse_support

SEG = Spectrum([[0], [1]])
FAST2 = QuadratureSpec(samples=2**17)


def sigma(x):
    return 1 / (1 + math.exp(-x))


def test_hessian_examples():
    assert np.allclose(complex_hessian(Spectrum([[2 - 1j]]), 0.1, 0.3j), 0)
    eps = 0.2
    assert complex_hessian(SEG, eps, 0)[..., 0, 0] == pytest.approx(1 / (16 * eps))
    x = 0.13
    s = sigma(x / eps)
    assert complex_hessian(SEG, eps, x + 0.4j)[..., 0, 0].real == pytest.approx(s * (1 - s) / (4 * eps), rel=1e-12)


@pytest.mark.parametrize(
    "freqs,z",
    [
        ([[0], [1], [1j], [0.3 - 0.8j]], [0.2 - 0.1j]),
        ([[0, 0], [1, 0], [0, 1], [1j, 0.5]], [0.1 + 0.2j, -0.3 + 0.05j]),
    ],
)
def test_hessian_matches_finite_differences(freqs, z):
    K = Spectrum(freqs)
    eps = 0.3
    H = np.asarray(complex_hessian(K, eps, np.array(z))).reshape(K.n, K.n)
    fd = fd_complex_hessian(lambda p: lse_support(freqs, eps, p), np.array(z))
    assert np.allclose(H, fd, atol=1e-6 * np.abs(H).max())


def test_density_examples():
    eps = 0.1
    assert ma_density(Spectrum([[5]]), eps, 0.3) == 0
    assert ma_density(SEG, eps, 0) == pytest.approx(1 / (8 * eps))
    # discretized unit disk: density ~ 1 / (2 |z|) for eps << |z| << 1
    D = disk_spectrum(64)
    z = 0.3 * np.exp(0.2j)
    assert ma_density(D, 1e-2, z) == pytest.approx(0.5 / abs(z), rel=1e-3)
    # at eps below the vertex spacing it oscillates, but the circle average holds
    ring = 0.3 * np.exp(2j * math.pi * np.arange(4096) / 4096)[:, None]
    assert ma_density(D, 1e-3, ring).mean() == pytest.approx(0.5 / 0.3, rel=1e-4)


def test_density_nonnegative():
    rng = np.random.default_rng(1)
    K = Spectrum(rng.normal(size=(6, 2)) + 1j * rng.normal(size=(6, 2)))
    z = rng.normal(size=(500, 2)) + 1j * rng.normal(size=(500, 2))
    assert np.all(ma_density(K, 0.2, z) >= 0)


def test_integrate_ball_constants():
    v, _ = integrate_ball(lambda z: np.ones(len(z)), 1, QuadratureSpec())
    assert v == pytest.approx(math.pi, abs=1e-3)
    v, _ = integrate_ball(lambda z: np.ones(len(z)), 2, QuadratureSpec(samples=2**18))
    assert v == pytest.approx(math.pi**2 / 2, rel=1e-2)
    v, _ = integrate_ball(lambda z: 2 * np.ones(len(z)), 1, QuadratureSpec())
    assert v == pytest.approx(2 * math.pi, abs=2e-3)


def test_smoothed_values_match_flux_oracle():
    res = pvol(SEG, QuadratureSpec(extrapolate=False))
    for eps, v in zip(res.epsilons, res.values):
        assert v == pytest.approx(FLUX_SEGMENT[eps], abs=2e-5)
    # a complex spectrum, against a freshly computed flux integral
    K = Spectrum([[0], [1], [0.5 + 1j]])
    res = pvol(K, QuadratureSpec(epsilons=(0.3,), extrapolate=False))
    assert res.values[0] == pytest.approx(flux_pvol_1d(K.freqs, 0.3), rel=1e-4)


def test_pvol_examples():
    assert pvol(Spectrum([[0.3 + 2j]])).value == 0
    r = pvol(SEG)
    assert r.value == pytest.approx(1.0, abs=0.01)
    assert abs(r.value - 1) <= 3 * r.error
    K = Spectrum([[0], [1], [1j]])
    assert pvol(K).value == pytest.approx(half_perimeter(K.freqs), rel=0.01)


def test_extrapolation_of_exact_polynomial():
    eps = [0.4, 0.2, 0.1, 0.05]
    vals = [1 + 2 * e - 3 * e * e for e in eps]
    v, err = extrapolate(eps, vals, [0] * 4, order=2)
    assert v == pytest.approx(1, abs=1e-12)
    assert err >= 0


def test_flagging_and_json():
    r = pvol(SEG, QuadratureSpec(tolerance=1e-9))
    assert r.flagged and r.warnings
    d = r.to_json()
    assert len(d["table"]) == 4 and set(d["table"][0]) == {"epsilon", "value", "error"}


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(method="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(epsilons=(0.1, 0.2))
    with pytest.raises(ValueError):
        QuadratureSpec(radius=0)


def test_homogeneity_translation_rotation_n1():
    K = Spectrum([[0], [1], [0.4 + 0.7j]])
    base = pvol(K)
    for lam in (0.5, 2.0):
        r = pvol(K.scaled(lam))
        assert abs(r.value - lam * base.value) <= r.error + lam * base.error
    t = pvol(K.translate([3 - 1j]))
    assert abs(t.value - base.value) <= t.error + base.error
    u = np.array([[np.exp(0.7j)]])
    rot = pvol(K.transform(u))
    assert abs(rot.value - base.value) <= rot.error + base.error


def test_mixed_pvol_n1_is_pvol():
    r = mixed_pvol([SEG])
    assert r.value == pytest.approx(pvol(SEG).value)
    with pytest.raises(DimensionError):
        mixed_pvol([SEG, SEG])


def test_mixed_pvol_n2_symmetry():
    e1, e2 = segment(2, 0), segment(2, 1)
    a = mixed_pvol([e1, e2], FAST2)
    b = mixed_pvol([e2, e1], FAST2)
    assert abs(a.value - b.value) <= a.error + b.error
    assert a.value == pytest.approx(math.pi / 4, rel=0.05)


def test_translation_invariance_n2():
    K = Spectrum([[0, 0], [1, 0], [0, 1]])
    a = pvol(K, FAST2)
    b = pvol(K.translate([2, -1j]), FAST2)
    assert abs(a.value - b.value) <= a.error + b.error


def test_mixed_volume_real():
    e1, e2 = segment(2, 0), segment(2, 1)
    assert mixed_volume_real([e1, e2]) == pytest.approx(0.5)
    sq = Spectrum([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert mixed_volume_real([sq, sq]) == pytest.approx(1.0)
    assert mixed_volume_real([Spectrum([[0], [1]])]) == pytest.approx(1.0)
    assert mixed_volume_real([Polytope(sq), Polytope(sq)]) == pytest.approx(1.0)
    cube = Spectrum(np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=complex))
    assert mixed_volume_real([cube] * 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mixed_volume_real([Spectrum([[0], [1j]])])
