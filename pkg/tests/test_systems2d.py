import math

import numpy as np
import pytest

from expzeros.spectrum import QuasiPolynomial, evaluate, scale
from expzeros.systems2d import (
    TAU_SYS,
    SearchRegion,
    count_roots_ball,
    default_tube_bound,
    solve_system,
)

from oracles import lattice_roots_ball


def qp2(terms):
    return QuasiPolynomial.from_terms(terms, n=2)


F1 = qp2([((0, 0), {(0, 0): 1}), ((1, 0), {(0, 0): 1})])  # 1 + e^{z1}
F2 = qp2([((0, 0), {(0, 0): 1}), ((0, 1), {(0, 0): 1})])  # 1 + e^{z2}


def test_lattice_examples():
    roots = solve_system(F1, F2, SearchRegion(tube=1, radius=8)).within(8)
    assert len(roots) == lattice_roots_ball(8) == 4
    assert np.allclose(np.abs(roots.roots), math.pi, atol=1e-10)
    assert np.all(roots.residuals < TAU_SYS)
    assert count_roots_ball(F1, F2, 4.4) == 0  # below pi * sqrt(2)
    assert count_roots_ball(F1, F2, 4.5) == 4


def test_lattice_count_scaling():
    a, b = count_roots_ball(F1, F2, 10), count_roots_ball(F1, F2, 20)
    assert a == lattice_roots_ball(10) and b == lattice_roots_ball(20)
    assert b / a == pytest.approx(4, rel=0.35)


def test_polynomial_system():
    z1 = qp2([((0, 0), {(1, 0): 1})])
    z2 = qp2([((0, 0), {(0, 1): 1})])
    roots = solve_system(z1, z2, SearchRegion(tube=1, radius=3))
    assert len(roots) == 1 and np.allclose(roots.roots[0], 0, atol=1e-12)


def test_mixed_system_contains_known_root():
    g = qp2([((0, 0), {(0, 0): 1}), ((1, 1), {(0, 0): 1})])  # 1 + e^{z1 + z2}
    roots = solve_system(F1, g, SearchRegion(tube=1, radius=5))
    target = np.array([1j * math.pi, 0])
    assert np.min(np.linalg.norm(roots.roots - target, axis=1)) < 1e-9
    for z in roots.roots:
        assert abs(evaluate(F1, z)) < 1e-9 and abs(evaluate(g, z)) < 1e-9


def test_relabeling_and_conjugation():
    g = qp2([((0, 0), {(0, 0): 2}), ((1, 0), {(0, 0): -1}), ((0, 1), {(0, 0): 1})])
    region = SearchRegion(tube=2, radius=9)
    a = solve_system(F1, g, region).within(9)
    b = solve_system(g, F1, region).within(9)
    assert len(a) == len(b)
    conj = a.roots.conj()
    d = np.abs(conj[:, None, :] - a.roots[None, :, :]).max(-1)
    assert np.all(d.min(1) < 1e-8)


def test_scaling_of_roots():
    t = 2.0
    a = solve_system(scale(F1, t), scale(F2, t), SearchRegion(tube=1, radius=6, grid=16)).within(6)
    b = solve_system(F1, F2, SearchRegion(tube=1, radius=12)).within(12)
    assert len(a) == len(b)
    sa = a.roots[np.lexsort((a.roots[:, 1].imag, a.roots[:, 0].imag))]
    sb = b.roots[np.lexsort((b.roots[:, 1].imag, b.roots[:, 0].imag))] / t
    assert np.allclose(sa, sb, atol=1e-9)


def test_tube_bound_and_warnings():
    assert default_tube_bound(F1, F2) == pytest.approx(1.0)
    h = qp2([((0, 0), {(0, 0): math.exp(3)}), ((1, 0), {(0, 0): 1})])  # root at Re z1 = 3
    rs = solve_system(h, F2, SearchRegion(tube=3.05, radius=5))
    assert any("tube" in w for w in rs.warnings)
    assert default_tube_bound(h, F2) >= 3


def test_region_validation():
    with pytest.raises(ValueError):
        SearchRegion(dedup=1.0)
    with pytest.raises(ValueError):
        SearchRegion(tube=0)
    with pytest.raises(ValueError):
        solve_system(F1, QuasiPolynomial.exponential_sum([0, 1], [1, 1]))
