import numpy as np
import pytest

from conftest import random_curl_free, random_div_free, random_scalar, random_vector

from app.core.exceptions import ConstraintViolationError, GridMismatchError
from app.models.field import ScalarField, VectorField
from app.models.grid import Grid
from app.services.calculus_service import CalculusService
from app.services.field_service import FieldService


def _close(a, b, tol=1e-12):
    return np.max(np.abs(a.values - b.values)) <= tol


def test_gradient_of_cosine(grid2):
    x1 = grid2.points[0]
    grad = CalculusService.gradient(ScalarField(grid2, np.cos(x1)))
    np.testing.assert_allclose(grad.values[0], -np.sin(x1), atol=1e-13)
    np.testing.assert_allclose(grad.values[1], 0, atol=1e-13)
    zero = CalculusService.gradient(ScalarField.constant(grid2, 3.0))
    assert np.max(np.abs(zero.values)) < 1e-13


def test_divergence_of_gradient_is_minus_laplacian(rng, grid2):
    phi = random_scalar(grid2, rng)
    lhs = CalculusService.divergence(CalculusService.gradient(phi))
    rhs = CalculusService.fractional_laplacian(phi, 2.0)
    assert _close(lhs, -rhs)


def test_divergence_examples(grid2):
    x1 = grid2.points[0]
    F = VectorField(grid2, np.stack([-np.sin(x1), np.zeros_like(x1)]))
    np.testing.assert_allclose(CalculusService.divergence(F).values, -np.cos(x1), atol=1e-13)
    T = VectorField(grid2, np.stack([np.zeros_like(x1), np.cos(x1)]))
    assert np.max(np.abs(CalculusService.divergence(T).values)) < 1e-13


def test_divergence_integration_by_parts(rng, grid2):
    F = random_vector(grid2, rng)
    phi = random_scalar(grid2, rng)
    lhs = FieldService.inner_product(CalculusService.divergence(F), phi)
    rhs = -FieldService.inner_product(F, CalculusService.gradient(phi))
    assert abs(lhs - rhs) < 1e-12


def test_curl_of_gradient_vanishes(rng, grid3):
    curl = CalculusService.curl(random_curl_free(grid3, rng))
    assert np.max(np.abs(curl.values)) < 1e-12


def test_curl_single_mode_3d(grid3):
    x1 = grid3.points[0]
    zeros = np.zeros_like(x1)
    curl = CalculusService.curl(VectorField(grid3, np.stack([zeros, np.sin(x1), zeros])))
    np.testing.assert_allclose(curl.component(0, 1).values, np.cos(x1), atol=1e-13)
    np.testing.assert_allclose(curl.component(0, 2).values, 0, atol=1e-13)
    np.testing.assert_allclose(curl.component(1, 2).values, 0, atol=1e-13)
    np.testing.assert_allclose(curl.component(1, 0).values, -np.cos(x1), atol=1e-13)


def test_curl_matches_classical_curl(rng, grid3):
    F = random_vector(grid3, rng)
    grads = [CalculusService.gradient(F.component(j)).values for j in range(3)]
    classical = np.stack([
        grads[2][1] - grads[1][2],
        grads[0][2] - grads[2][0],
        grads[1][0] - grads[0][1],
    ])
    np.testing.assert_allclose(CalculusService.classical_curl_3d(F).values, classical, atol=1e-12)


def test_riesz_single_mode(grid2):
    f = ScalarField.plane_wave(grid2, (3, 4))
    R = CalculusService.riesz(f)
    np.testing.assert_allclose(R.values[0], 0.6 * f.values, atol=1e-13)
    np.testing.assert_allclose(R.values[1], 0.8 * f.values, atol=1e-13)
    assert np.max(np.abs(CalculusService.riesz(ScalarField.constant(grid2, 2.0)).values)) < 1e-14


def test_riesz_is_curl_free_isometry(rng, grid2):
    f = random_scalar(grid2, rng)
    R = CalculusService.riesz(f)
    assert np.max(np.abs(CalculusService.curl(R).values)) < 1e-12
    assert FieldService.norm(R) == pytest.approx(FieldService.norm(f), rel=1e-12)


def test_leray_annihilates_gradients_and_is_idempotent(rng, grid3):
    assert np.max(np.abs(CalculusService.leray_project(random_curl_free(grid3, rng)).values)) < 1e-12
    B = random_div_free(grid3, rng)
    assert _close(CalculusService.leray_project(B), B)
    assert CalculusService.divergence_residual(B) < 1e-12


def test_helmholtz_split(rng, grid2):
    F = random_vector(grid2, rng)
    div_free = CalculusService.leray_project(F)
    phi = CalculusService.scalar_potential(F - div_free)
    assert _close(F, div_free + CalculusService.gradient(phi))


def test_fractional_laplacian_examples(grid2):
    f = ScalarField.plane_wave(grid2, (2, 0))
    assert _close(CalculusService.fractional_laplacian(f, 1.0), f * 2.0)
    assert _close(CalculusService.fractional_laplacian(f, -1.0), f * 0.5)
    with pytest.raises(ConstraintViolationError):
        CalculusService.fractional_laplacian(ScalarField.constant(grid2, 1.0), -1.0)


def test_fractional_laplacian_composition(rng, grid2):
    f = random_scalar(grid2, rng)
    back = CalculusService.fractional_laplacian(CalculusService.fractional_laplacian(f, -1.0), 1.0)
    assert _close(back, f)


def test_scalar_potential_examples(rng, grid2):
    x1 = grid2.points[0]
    E = VectorField(grid2, np.stack([-np.sin(x1), np.zeros_like(x1)]))
    np.testing.assert_allclose(CalculusService.scalar_potential(E).values, np.cos(x1), atol=1e-13)
    assert np.max(np.abs(CalculusService.scalar_potential(VectorField.zeros(grid2)).values)) == 0
    phi0 = random_scalar(grid2, rng)
    phi = CalculusService.scalar_potential(CalculusService.gradient(phi0))
    assert _close(phi, phi0)
    energy = CalculusService.gradient_energy(phi)
    assert energy == pytest.approx(FieldService.norm(CalculusService.gradient(phi0)) ** 2, rel=1e-12)


def test_scalar_potential_rejects_rotational_field(grid2):
    x1 = grid2.points[0]
    T = VectorField(grid2, np.stack([np.zeros_like(x1), np.cos(x1)]))
    with pytest.raises(ConstraintViolationError) as err:
        CalculusService.scalar_potential(T)
    assert err.value.residual > 0.5


def test_two_form_potential_single_mode(grid3):
    x1 = grid3.points[0]
    zeros = np.zeros_like(x1)
    B = VectorField(grid3, np.stack([zeros, zeros, np.cos(x1)]))
    alpha = CalculusService.two_form_potential(B)
    np.testing.assert_allclose(alpha.component(0, 2).values, -np.sin(x1), atol=1e-13)
    A = CalculusService.two_form_to_vector_3d(alpha)
    np.testing.assert_allclose(A.values[1], np.sin(x1), atol=1e-13)
    np.testing.assert_allclose(A.values[0], 0, atol=1e-13)
    np.testing.assert_allclose(A.values[2], 0, atol=1e-13)
    assert _close(CalculusService.codifferential(alpha), B)


def test_two_form_potential_of_zero(grid2):
    alpha = CalculusService.two_form_potential(VectorField.zeros(grid2))
    assert np.max(np.abs(alpha.values)) == 0


@pytest.mark.parametrize("dim,n", [(2, 16), (3, 8), (4, 6)])
def test_two_form_potential_random(rng, dim, n):
    grid = Grid(dim, n)
    B = random_div_free(grid, rng, band=2.0)
    alpha = CalculusService.two_form_potential(B)
    assert _close(CalculusService.codifferential(alpha), B, tol=1e-10)
    assert np.max(np.abs(CalculusService.exterior_derivative_2form(alpha)), initial=0.0) < 1e-10
    energy = CalculusService.gradient_energy(alpha)
    assert energy == pytest.approx(FieldService.norm(B) ** 2, rel=1e-10)


def test_two_form_potential_rejects_divergent_field(rng, grid2):
    with pytest.raises(ConstraintViolationError):
        CalculusService.two_form_potential(random_curl_free(grid2, rng))


def test_vector_potential_3d(rng, grid3):
    x1 = grid3.points[0]
    zeros = np.zeros_like(x1)
    A = CalculusService.vector_potential_3d(VectorField(grid3, np.stack([zeros, zeros, np.cos(x1)])))
    np.testing.assert_allclose(A.values[1], np.sin(x1), atol=1e-13)
    assert np.max(np.abs(CalculusService.vector_potential_3d(VectorField.zeros(grid3)).values)) == 0

    B = random_div_free(grid3, rng)
    A = CalculusService.vector_potential_3d(B)
    assert _close(CalculusService.classical_curl_3d(A), B, tol=1e-10)
    assert CalculusService.divergence_residual(A) < 1e-10
    energy = CalculusService.hodge_energy(A)
    assert energy["gradient"] == pytest.approx(energy["curl"] + energy["divergence"], rel=1e-10)
    assert energy["gradient"] == pytest.approx(FieldService.norm(B) ** 2, rel=1e-10)
    assert _close(CalculusService.two_form_to_vector_3d(CalculusService.two_form_potential(B)), A)


def test_vector_potential_requires_dim_3(grid2):
    with pytest.raises(GridMismatchError):
        CalculusService.vector_potential_3d(VectorField.zeros(grid2))


def test_hodge_energy_identity(rng, grid3):
    energy = CalculusService.hodge_energy(random_vector(grid3, rng))
    assert energy["gradient"] == pytest.approx(energy["curl"] + energy["divergence"], rel=1e-12)


def test_riesz_representation(rng, grid2):
    E = random_curl_free(grid2, rng)
    f = CalculusService.riesz_preimage(E)
    assert _close(CalculusService.riesz(f), E)
    assert FieldService.norm(f) == pytest.approx(FieldService.norm(E), rel=1e-12)


def test_cross_product_and_identification_round_trip(rng, grid3):
    A = random_vector(grid3, rng)
    B = random_vector(grid3, rng)
    cross = CalculusService.cross_3d(A, B)
    assert np.max(np.abs(np.sum(cross.values * A.values, axis=0))) < 1e-12
    alpha = CalculusService.vector_to_two_form_3d(A)
    assert _close(CalculusService.two_form_to_vector_3d(alpha), A, tol=0)
