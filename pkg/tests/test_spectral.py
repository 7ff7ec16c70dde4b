import numpy as np
import pytest
from scipy.stats import unitary_group

from conftest import random_div_free, random_scalar

from app.core.exceptions import BandLimitError, SpectralError
from app.models.field import ScalarField
from app.models.grid import Grid
from app.models.operator import DenseOperator
from app.services.calculus_service import CalculusService
from app.services.field_service import FieldService
from app.services.norm_service import NormService
from app.services.spectral_service import SpectralService


def test_commutator_with_constant_is_zero(grid2):
    K = SpectralService.materialize_commutator(ScalarField.constant(grid2, 2.0), 0, 3.0)
    assert np.max(np.abs(K.matrix)) == 0
    assert np.all(K.singular_values == 0)


def test_commutator_single_mode(grid2):
    u = ScalarField.plane_wave(grid2, (1, 0))
    K = SpectralService.materialize_commutator(u, 0, 3.0)
    modes = K.modes
    for r, k in enumerate(modes):
        for c, m in enumerate(modes):
            expected = 0.0
            if tuple(k - m) == (1, 0):
                expected = k[0] / np.linalg.norm(k) - m[0] / np.linalg.norm(m)
            assert abs(K.matrix[r, c] - expected) < 1e-13


def test_commutator_matches_transform_side(rng):
    grid = Grid(2, 32)
    band = 5.0
    u = FieldService.band_limit(random_scalar(grid, rng, band=3.0), band)
    K = SpectralService.materialize_commutator(u, 1, band)
    assert K.truncation_error < 1e-12
    for _ in range(10):
        f = random_scalar(grid, rng, band=band)
        oracle = CalculusService.riesz_component(u * f, 1) - u * CalculusService.riesz_component(f, 1)
        action = K @ SpectralService.coefficients(f, K.modes)
        np.testing.assert_allclose(action, SpectralService.coefficients(oracle, K.modes), atol=1e-10)


def test_band_must_stay_below_nyquist(grid2):
    with pytest.raises(BandLimitError):
        SpectralService.materialize_commutator(ScalarField.zeros(grid2), 0, 8.0)
    with pytest.raises(BandLimitError):
        SpectralService.materialize_cwikel(ScalarField.zeros(grid2), 0.5)


def test_truncation_is_reported(rng, grid2):
    u = random_scalar(grid2, rng, band=6.0)
    K = SpectralService.materialize_commutator(u, 0, 2.0)
    assert K.truncation_error > 0


def test_cwikel_constant_and_zero(grid3):
    K = SpectralService.materialize_cwikel(ScalarField.constant(grid3, 3.0), 2.0)
    norms = np.linalg.norm(K.modes, axis=1)
    np.testing.assert_allclose(K.matrix, np.diag(3.0 / norms), atol=1e-13)
    np.testing.assert_allclose(K.singular_values, np.sort(3.0 / norms)[::-1], atol=1e-12)
    assert np.max(np.abs(SpectralService.materialize_cwikel(ScalarField.zeros(grid3), 2.0).matrix)) == 0


def test_cwikel_matches_transform_side(rng):
    grid = Grid(3, 16)
    band = 3.0
    u = FieldService.band_limit(random_scalar(grid, rng, band=2.0), band)
    K = SpectralService.materialize_cwikel(u, band)
    f = random_scalar(grid, rng, band=band)
    oracle = u * CalculusService.fractional_laplacian(f, -1.0)
    action = K @ SpectralService.coefficients(f, K.modes)
    np.testing.assert_allclose(action, SpectralService.coefficients(oracle, K.modes), atol=1e-10)


def test_singular_values_examples(rng):
    np.testing.assert_allclose(SpectralService.singular_values(np.diag([3.0, 1.0, 2.0])), [3, 2, 1])
    np.testing.assert_allclose(SpectralService.singular_values(np.zeros((4, 3))), [0, 0, 0])
    A = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    s = SpectralService.singular_values(A)
    eig = np.sort(np.linalg.eigvalsh(A.conj().T @ A))[::-1]
    np.testing.assert_allclose(s ** 2, eig, rtol=1e-9, atol=1e-9)


def test_singular_values_failure_surfaces():
    with pytest.raises(SpectralError):
        DenseOperator(np.array([[np.nan, 1.0], [0.0, 1.0]])).singular_values


def test_unitary_invariance(rng, grid2):
    K = SpectralService.materialize_commutator(random_scalar(grid2, rng), 0, 3.0)
    size = K.shape[0]
    U = unitary_group.rvs(size, random_state=rng)
    V = unitary_group.rvs(size, random_state=rng)
    rotated = SpectralService.singular_values(U @ K.matrix @ V)
    np.testing.assert_allclose(rotated, K.singular_values, atol=1e-10 * K.singular_values[0])


def test_weak_functional_is_homogeneous(rng, grid2):
    u = random_scalar(grid2, rng)
    base = NormService.weak_lp_functional(SpectralService.materialize_commutator(u, 0, 4.0).singular_values, 2)
    scaled = NormService.weak_lp_functional(SpectralService.materialize_commutator(u * -3.0, 0, 4.0).singular_values, 2)
    assert scaled == pytest.approx(3.0 * base, rel=1e-12)


def test_trace_pairing_equality_at_standard_basis():
    lhs, rhs = SpectralService.trace_pairing_bound(np.diag([2.0, 1.0]), np.eye(2), np.eye(2))
    assert lhs == pytest.approx(3.0)
    assert rhs == pytest.approx(3.0)


def test_trace_pairing_rotations():
    K = np.diag([2.0, 1.0])
    best = 0.0
    for theta in np.linspace(0, np.pi, 100):
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        lhs, rhs = SpectralService.trace_pairing_bound(K, R, np.eye(2))
        best = max(best, lhs)
        assert lhs <= rhs + 1e-10
    assert best <= 3.0 + 1e-10


def test_trace_pairing_random_triples(rng):
    for _ in range(100):
        rows, cols = rng.integers(2, 65, size=2)
        count = int(rng.integers(1, min(rows, cols) + 1))
        K = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        X = unitary_group.rvs(int(rows), random_state=rng)[:, :count]
        Y = unitary_group.rvs(int(cols), random_state=rng)[:, :count]
        lhs, rhs = SpectralService.trace_pairing_bound(K, X, Y)
        assert lhs <= rhs + 1e-10


def test_trace_pairing_equality_at_singular_vectors(rng):
    K = rng.standard_normal((12, 9))
    U, s, Vh = np.linalg.svd(K)
    lhs, rhs = SpectralService.trace_pairing_bound(K, U[:, :5], Vh.conj().T[:, :5])
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_trace_pairing_single_vector(rng):
    K = rng.standard_normal((6, 6))
    x = rng.standard_normal((6, 1))
    y = rng.standard_normal((6, 1))
    lhs, rhs = SpectralService.trace_pairing_bound(K, x / np.linalg.norm(x), y / np.linalg.norm(y))
    assert lhs <= rhs + 1e-12


def test_trace_pairing_rejects_non_orthonormal():
    with pytest.raises(SpectralError):
        SpectralService.trace_pairing_bound(np.eye(2), 2 * np.eye(2), np.eye(2))


def test_partial_sum_bound_examples():
    s = np.arange(1, 11) ** -0.5
    total, cap = SpectralService.partial_sum_bound(s, 2.0, 4)
    assert total == pytest.approx(1 + 2 ** -0.5 + 3 ** -0.5 + 0.5)
    assert cap == pytest.approx(4.0)
    total, cap = SpectralService.partial_sum_bound([1.0, 0.0, 0.0], 3.0, 1)
    assert total == 1.0 and cap == pytest.approx(1.5)
    assert SpectralService.partial_sum_bound(np.zeros(5), 2.0, 3) == (0.0, 0.0)
    with pytest.raises(ValueError):
        SpectralService.partial_sum_bound(s, 1.0, 2)


@pytest.mark.parametrize("p", [2.0, 1.5, 3.0])
def test_partial_sum_bound_on_commutator_spectra(rng, grid2, p):
    s = SpectralService.materialize_commutator(random_scalar(grid2, rng), 0, 5.0).singular_values
    for N in range(1, len(s) + 1, 7):
        total, cap = SpectralService.partial_sum_bound(s, p, N)
        assert total <= cap + 1e-10


def test_partial_square_sum_bound(rng, grid3):
    s = SpectralService.materialize_cwikel(random_scalar(grid3, rng, band=2.0), 2.5).singular_values
    for N in range(1, len(s) + 1, 5):
        total, cap = SpectralService.partial_square_sum_bound(s, 3.0, N)
        assert total <= cap + 1e-10


def test_tensor_identity_weak_norm(rng, grid3):
    K = SpectralService.materialize_cwikel(random_scalar(grid3, rng, band=2.0), 2.0)
    KM = SpectralService.tensor_identity(K, 3)
    assert KM.shape == (3 * K.shape[0], 3 * K.shape[1])
    weak = NormService.weak_lp_functional(K.singular_values, 3)
    weak_m = NormService.weak_lp_functional(KM.singular_values, 3)
    assert weak_m <= 3 ** (1 / 3) * weak + 1e-12
    assert weak_m >= weak - 1e-12


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_clifford_relations(d):
    algebra = SpectralService.clifford_generators(d)
    assert algebra.size == 2 ** (d // 2)
    assert len(algebra.gammas) == d
    check = algebra.check()
    assert check["anticommutation"] <= 1e-14
    assert check["hermiticity"] <= 1e-14


def test_clifford_range():
    with pytest.raises(ValueError):
        SpectralService.clifford_generators(1)
    with pytest.raises(ValueError):
        SpectralService.clifford_generators(9)


def test_clifford_recovery_constant_and_single_mode(grid2):
    lhs, rhs, deviation = SpectralService.clifford_commutator_recovery(ScalarField.constant(grid2, 1.0), 0, 2.0)
    assert np.max(np.abs(lhs)) == 0 and np.max(np.abs(rhs)) == 0
    _, _, deviation = SpectralService.clifford_commutator_recovery(ScalarField.plane_wave(grid2, (1, 0)), 1, 2.0)
    assert deviation <= 1e-12


def test_clifford_recovery_random_3d(rng, grid3):
    _, _, deviation = SpectralService.clifford_commutator_recovery(random_scalar(grid3, rng, band=2.0), 2, 2.0)
    assert deviation <= 1e-10


def test_commutator_pairing_identity(rng):
    grid = Grid(2, 32)
    band = 4.0
    u = random_scalar(grid, rng, band=3.0)
    E = CalculusService.gradient(random_scalar(grid, rng, band=band))
    B = random_div_free(grid, rng, band=band)
    f = CalculusService.riesz_preimage(E)
    lhs = FieldService.inner_product(FieldService.pointwise_dot_sum([E], [B]) * u, ScalarField.constant(grid, 1.0))
    rhs = 0.0
    for j in range(2):
        K = SpectralService.materialize_commutator(u, j, band)
        action = K @ SpectralService.coefficients(f, K.modes)
        rhs += np.vdot(SpectralService.coefficients(B.component(j), K.modes), action)
    scale = NormService.lp_norm(u, np.inf) * FieldService.norm(E) * FieldService.norm(B)
    assert abs(lhs + rhs) <= 1e-10 * scale
