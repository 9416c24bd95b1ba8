import numpy as np
import pytest

from nlevel_core.errors import DegenerateSpectrum, DimensionMismatch
from nlevel_core.spectral import (
    eig_simple,
    eigen_coordinates,
    frame_residuals,
    k_matrix,
    projector_derivative,
    transport_generator,
)


def _random(n, seed=7):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_frame_resolves_matrix():
    A = _random(4)
    frame = eig_simple(A)
    res = frame_residuals(A, frame)
    assert res["completeness"] < 1e-10
    assert res["orthogonality"] < 1e-10
    assert res["resolution"] < 1e-10


def test_labels_ascend_on_real_spectrum():
    frame = eig_simple(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(frame.eigenvalues, [1.0, 2.0, 3.0])


def test_phase_convention_first_component_real_positive():
    frame = eig_simple(_random(3, seed=2))
    for j in range(3):
        col = frame.right[:, j]
        k = int(np.argmax(np.abs(col) > 1e-12))
        assert abs(col[k].imag) < 1e-14 and col[k].real > 0
        assert abs(np.linalg.norm(col) - 1.0) < 1e-12


@pytest.mark.parametrize("H", [np.eye(2), np.diag([1.0, 1.0, 2.0]), [[0.0, 1.0], [0.0, 0.0]]])
def test_repeated_or_defective_refused(H):
    with pytest.raises(DegenerateSpectrum):
        eig_simple(H)


def test_non_square_refused():
    with pytest.raises(DimensionMismatch):
        eig_simple(np.ones((2, 3)))


def test_generator_matches_projector_formula():
    H, Hp = _random(4, seed=1), _random(4, seed=3)
    frame = eig_simple(H)
    K = transport_generator(frame, Hp)
    K_ref = k_matrix(frame, projector_derivative(H, Hp, frame))
    assert np.linalg.norm(K - K_ref) < 1e-9 * max(1.0, np.linalg.norm(K))


def test_generator_has_no_diagonal_in_eigen_coordinates():
    frame = eig_simple(_random(3, seed=5))
    K = transport_generator(frame, _random(3, seed=6))
    assert np.max(np.abs(np.diag(eigen_coordinates(frame, K)))) < 1e-12


def test_generator_antihermitian_for_hermitian_family():
    A = _random(3, seed=11)
    H = A + A.conj().T
    B = _random(3, seed=12)
    frame = eig_simple(H)
    K = transport_generator(frame, B + B.conj().T)
    assert np.linalg.norm(K + K.conj().T) < 1e-10


def test_frame_invariants_over_random_matrices():
    rng = np.random.default_rng(2024)
    for i in range(500):
        n = 2 + i % 5
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        res = frame_residuals(A, eig_simple(A))
        assert res["completeness"] < 1e-9
        assert res["orthogonality"] < 1e-9
        assert res["resolution"] < 1e-9 * max(1.0, np.linalg.norm(A))


def _projectors_matching(H, eigenvalues):
    frame = eig_simple(H)
    order = [int(np.argmin(np.abs(frame.eigenvalues - e))) for e in eigenvalues]
    return frame.projectors[order]


def test_projector_derivative_is_second_order_consistent():
    rng = np.random.default_rng(17)
    steps = (1e-3, 5e-4)
    errors = np.zeros(len(steps))
    used = 0
    while used < 20:
        n = 2 + used % 5
        H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        Hp = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        frame = eig_simple(H)
        if frame.min_gap < 0.1:
            continue
        dP = np.array(projector_derivative(H, Hp, frame))
        for i, h in enumerate(steps):
            fd = (_projectors_matching(H + h * Hp, frame.eigenvalues)
                  - _projectors_matching(H - h * Hp, frame.eigenvalues)) / (2 * h)
            errors[i] += float(np.max(np.linalg.norm(fd - dP, axis=(1, 2))))
        used += 1
    assert np.log2(errors[0] / errors[1]) >= 1.9
