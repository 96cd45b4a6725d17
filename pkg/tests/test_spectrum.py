import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expzeros.spectrum import (
    FaceConditionError,
    Polytope,
    QuasiPolynomial,
    Spectrum,
    construct_face_sum,
    derivative,
    disk_spectrum,
    evaluate,
    hull,
    load_quasi_polynomial,
    point_set_faces,
    scale,
    smoothed_support,
    spectrum_from_json,
    spectrum_to_json,
    support_function,
    supporting_face,
)

ONE_PLUS_EXP = QuasiPolynomial.exponential_sum([0, 1], [1, 1])
SEG = Spectrum([[0], [1]])


def as_set(K):
    return sorted((round(z.real, 12), round(z.imag, 12)) for z in K.freqs.ravel())


def test_evaluate_examples():
    assert abs(evaluate(ONE_PLUS_EXP, 1j * math.pi)) < 1e-15
    assert evaluate(QuasiPolynomial.exponential_sum([1], [1]), 0) == 1
    f = QuasiPolynomial.from_terms([(2, {(0,): 1, (1,): 1})])
    assert evaluate(f, 1.0) == pytest.approx(2 * math.e**2, rel=1e-14)


def test_evaluate_large_arguments():
    f = QuasiPolynomial.exponential_sum([0, 1], [1, -1])
    # exp(800) overflows, but a cancelling combination at 705 does not
    g = QuasiPolynomial.exponential_sum([0, 1, 1.001], [1, 1, -1])
    assert np.isfinite(evaluate(g, 705.0 + 0j))
    with pytest.raises(OverflowError):
        evaluate(f, 800.0)


def test_scale_examples():
    assert scale(ONE_PLUS_EXP, 2).isclose(QuasiPolynomial.exponential_sum([0, 2], [1, 1]))
    zexp = QuasiPolynomial.from_terms([(1, {(1,): 1})])
    assert scale(zexp, 3).isclose(QuasiPolynomial.from_terms([(3, {(1,): 3})]))
    assert scale(zexp, 1).isclose(zexp)
    with pytest.raises(ValueError):
        scale(zexp, 0)


@settings(max_examples=50, deadline=None)
@given(
    t=st.floats(0.1, 20),
    x=st.floats(-3, 3),
    y=st.floats(-3, 3),
)
def test_scale_eval_commute(t, x, y):
    f = QuasiPolynomial.from_terms([(0, {(0,): 1, (2,): 0.5j}), (1 + 0.5j, {(1,): -2}), (-0.7, {(0,): 3})])
    z = complex(x, y)
    a, b = evaluate(scale(f, t), z), evaluate(f, t * z)
    assert abs(a - b) <= 1e-12 * max(abs(b), 1e-300) + 1e-12 * abs(f._term_parts(np.array([t * z]))[1]).max()


def test_derivative_matches_finite_difference():
    f = QuasiPolynomial.from_terms([(0.3 + 0.2j, {(2,): 1.5, (0,): -1}), (-1, {(1,): 2j})])
    df = derivative(f)
    z, h = 0.4 - 0.3j, 1e-6
    fd = (evaluate(f, z + h) - evaluate(f, z - h)) / (2 * h)
    assert abs(evaluate(df, z) - fd) < 1e-8


def test_support_examples():
    assert support_function(SEG, 1) == 1
    assert support_function(SEG, 1j) == 0
    assert support_function(Spectrum([[1j]]), 1) == 0
    assert smoothed_support(SEG, 0.1, 0) == pytest.approx(0.1 * math.log(2), abs=1e-15)
    K5 = Spectrum([[5]])
    assert smoothed_support(K5, 0.3, 0.7 - 2j) == pytest.approx(3.5, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    pts=st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=8, unique=True),
    x=st.floats(-5, 5),
    y=st.floats(-5, 5),
    lam=st.floats(0.01, 100),
    eps=st.floats(1e-3, 2),
)
def test_support_properties(pts, x, y, lam, eps):
    K = Spectrum.from_points([complex(a, b) for a, b in pts])
    z = complex(x, y)
    h = support_function(K, z)
    assert support_function(K, lam * z) == pytest.approx(lam * h, rel=1e-12, abs=1e-12)
    gap = smoothed_support(K, eps, z) - h
    assert -1e-12 <= gap <= eps * math.log(len(K)) + 1e-12
    assert smoothed_support(K, eps / 2, z) <= smoothed_support(K, eps, z) + 1e-12
    assert support_function(hull(K).vertices, z) == pytest.approx(h, rel=1e-12, abs=1e-12)


def test_supporting_face_examples():
    assert as_set(supporting_face(SEG, 1)) == [(1, 0)]
    assert as_set(supporting_face(SEG, 1j)) == [(0, 0), (1, 0)]
    assert as_set(supporting_face(Spectrum([[0], [1], [0.5]]), 1)) == [(1, 0)]
    with pytest.raises(ValueError):
        supporting_face(SEG, 0)


def test_face_coherence_under_perturbation():
    rng = np.random.default_rng(3)
    K = Spectrum([[0], [1], [1j], [1 + 1j], [0.5 + 0.5j]])
    for z in [1j, 1, 1 + 1j, -1 - 1j, 0.3 - 1j]:
        for _ in range(20):
            dx = 1e-4 * complex(*rng.normal(size=2))
            small = set(as_set(supporting_face(K, z + dx)))
            big = set(as_set(supporting_face(K, z, tol=10 * abs(dx) * K.diameter)))
            assert small <= big


def test_hull_examples():
    assert as_set(hull(Spectrum([[0], [0.5], [1]])).vertices) == [(0, 0), (1, 0)]
    assert as_set(hull(Spectrum([[0], [1], [1j]])).vertices) == [(0, 0), (0, 1), (1, 0)]
    assert as_set(hull(Spectrum([[2 + 1j]])).vertices) == [(2, 1)]
    # C^2: an interior point of the square in the real plane is dropped
    K = Spectrum([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]])
    assert len(hull(K).vertices) == 4


def test_faces_of_square():
    K = Spectrum([[0], [1], [1 + 1j], [1j]])
    faces = Polytope(K).faces
    sizes = sorted(len(f) for f in faces)
    assert sizes == [1, 1, 1, 1, 2, 2, 2, 2, 4]
    faces2 = point_set_faces(np.array([[0, 0], [1, 0], [0, 1]], dtype=complex))
    assert sorted(len(f) for f in faces2) == [1, 1, 1, 2, 2, 2, 3]


def test_construct_face_sum_examples():
    F = construct_face_sum(SEG, 1j, [1, 1])
    assert F.isclose(ONE_PLUS_EXP)
    G = construct_face_sum(SEG, 1, [2.5])
    assert G.isclose(QuasiPolynomial.exponential_sum([1], [2.5]))
    with pytest.raises(ValueError):
        construct_face_sum(SEG, 1j, [1])


def test_construct_face_sum_random_square():
    rng = np.random.default_rng(0)
    K = Spectrum([[0], [1], [1j], [1 + 1j]])
    face = supporting_face(K, 1j)
    for _ in range(20):
        c = np.exp(2j * math.pi * rng.random(len(face)))
        F = construct_face_sum(K, 1j, c)
        assert F.num_terms == len(face)


def test_construct_face_sum_vanishing_face():
    # 1 - e^{xi} on the face {0, 1} vanishes at z = 2 pi i / ... pick z where sum is zero:
    # Re(xi z) ties for z = i y; sum 1 - e^{i y} vanishes at y = 0 mod 2 pi -> choose z = 2 pi i
    with pytest.raises(FaceConditionError) as info:
        construct_face_sum(SEG, 2j * math.pi, [1, -1])
    assert len(info.value.failing) == 1


def test_spectrum_validation_and_minkowski():
    with pytest.raises(ValueError):
        Spectrum([[0], [1e-12]])
    assert len(Spectrum.from_points([0, 1e-12, 1])) == 2
    M = SEG.minkowski(SEG)
    assert as_set(M) == [(0, 0), (1, 0), (2, 0)]
    assert len(disk_spectrum(64)) == 64


def test_json_round_trip(tmp_path):
    f = QuasiPolynomial.from_terms([(0.5 - 1j, {(0,): 1 + 2j, (3,): -0.25}), (2, {(1,): 1})])
    p = tmp_path / "f.json"
    p.write_text(json.dumps(f.to_json()))
    assert load_quasi_polynomial(p).isclose(f)
    K = Spectrum([[0, 1j], [2, 0]])
    assert as_set(spectrum_from_json(spectrum_to_json(K))) == as_set(K)
    assert as_set(spectrum_from_json(f.to_json())) == as_set(f.spectrum)
