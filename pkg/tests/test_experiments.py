import numpy as np
import pytest

from conftest import random_div_free

from app.core.exceptions import FamilyError, GridMismatchError
from app.models.field import ScalarField, VectorField
from app.models.grid import Grid
from app.schemas.config import URecipe
from app.schemas.family import FamilyRecipe
from app.schemas.weights import SequenceWeights
from app.services.extremizer_service import ExtremizerService
from app.services.family_service import FamilyService
from app.services.field_service import FieldService
from app.services.identity_service import PAIRING_IDENTITIES, IdentityCheck, IdentityService
from app.services.norm_service import NormService
from app.services.scaling_service import ScalingService
from app.services.schatten_service import SchattenService
from app.services.spectral_service import SpectralService

SEMICLASSICAL = FamilyRecipe(recipe="semiclassical", radius=4.5)


# ----------------------------------------------------------------------
# identity_suite
# ----------------------------------------------------------------------

def test_identity_suite_2d():
    record = IdentityService.identity_suite(Grid(2, 16), seed=7, band=3.0, u_band=2.0, trials=3)
    assert record.status == "ok"
    assert record.metrics["max_deviation"] <= 1e-9
    deviations = record.details["deviation_by_identity"]
    assert set(deviations) == {"commutator", "divergence", "two_form", "hodge_energy", "two_form_energy"}
    assert record.metrics["schwarz_violation"] <= 1e-12
    assert record.metrics["holder_slack"] >= -1e-12
    assert len(record.series) == 3
    assert record.metrics["max_pair_deviation"] <= 1e-9
    assert record.metrics["max_deviation"] >= record.metrics["max_pair_deviation"]


def test_pair_deviation_is_not_hidden_by_sums():
    check = IdentityCheck(0j, 0j, 2.0, pair_deviation=0.25)
    assert check.deviation == 0.0
    assert check.worst == 0.25


def test_cancelling_pairs_are_checked_one_by_one(grid2):
    draw = IdentityService.draw_trial(grid2, seed=4, trial=0, band=3.0, u_band=2.0, pairs=1)
    E, B = draw["e_list"][0], draw["b_list"][0]
    checks = IdentityService.check_identities(draw["u"], [E, -E], [B, B], 3.0)
    for name in ("commutator", "divergence", "two_form"):
        assert abs(checks[name].lhs) <= 1e-12
        assert checks[name].pair_deviation <= 1e-9
        assert checks[name].worst >= checks[name].deviation


def test_identity_suite_3d_includes_wedge():
    record = IdentityService.identity_suite(Grid(3, 8), seed=7, band=2.0, u_band=1.0, trials=2, pairs=2)
    deviations = record.details["deviation_by_identity"]
    assert "wedge" in deviations
    assert "vector_potential_energy" in deviations
    assert max(deviations.values()) <= 1e-9


def test_identity_suite_is_deterministic():
    grid = Grid(2, 16)
    first = IdentityService.identity_suite(grid, seed=11, band=3.0, trials=2)
    second = IdentityService.identity_suite(grid, seed=11, band=3.0, trials=2, jobs=2)
    assert first.model_dump() == second.model_dump()


def test_identity_suite_rejects_aliasing_bands():
    with pytest.raises(ValueError):
        IdentityService.identity_suite(Grid(2, 16), seed=0, band=6.0, u_band=5.0)
    with pytest.raises(ValueError):
        IdentityService.identity_suite(Grid(2, 32), seed=0, band=3.0, u_band=4.0)


def test_zero_curl_free_field_gives_exact_zero(rng, grid2):
    u = FieldService.random_real(grid2, rng, 2.0)
    E = VectorField.zeros(grid2, grid2.dim)
    B = random_div_free(grid2, rng, band=3.0)
    checks = IdentityService.check_identities(u, [E], [B], band=3.0)
    for name in PAIRING_IDENTITIES:
        if name in checks:
            assert checks[name].lhs == 0
            assert checks[name].rhs == 0
            assert checks[name].deviation == 0


def test_grid_refinement_does_not_inflate_deviations():
    coarse = IdentityService.identity_suite(Grid(2, 16), seed=5, band=3.0, u_band=2.0, trials=2)
    fine = IdentityService.identity_suite(Grid(2, 32), seed=5, band=3.0, u_band=2.0, trials=2)
    assert fine.metrics["max_deviation"] <= max(10 * coarse.metrics["max_deviation"], 1e-13)


# ----------------------------------------------------------------------
# scaling_study
# ----------------------------------------------------------------------

def test_triangle_baseline_is_linear():
    record = ScalingService.scaling_study("triangle", Grid(2, 32), SEMICLASSICAL, [4, 12, 32, 60])
    assert record.fit is not None
    assert record.fit.exponent == pytest.approx(1.0, abs=0.05)
    assert record.predictor_exponent == pytest.approx(1.0)


def test_main_variant_grows_sublinearly():
    record = ScalingService.scaling_study("main", Grid(2, 32), SEMICLASSICAL, [4, 12, 32, 60], q=2.0)
    assert record.fit.exponent <= 0.6
    assert record.predictor_exponent == pytest.approx(0.5)
    assert all(point.extras["exact"] for point in record.series)
    assert record.stability_ratio is not None and np.isfinite(record.stability_ratio)
    assert record.details["norm_window"]["lower"] == record.details["norm_window"]["upper"]
    assert record.metrics["equivalence_constant"] == pytest.approx(1.0)


def test_main_variant_rejects_wrong_q():
    with pytest.raises(ValueError):
        ScalingService.scaling_study("main", Grid(2, 16), SEMICLASSICAL.model_copy(update={"radius": 3.0}),
                                     [2, 4, 8], q=1.5)


def test_lorentz_predictor_for_three_equal_weights():
    record = ScalingService.scaling_study(
        "lorentz", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=2.0), [1, 2, 3],
        q=2.0, weights=SequenceWeights(values=[1.0, 1.0, 1.0]),
    )
    predictors = [point.predictor for point in record.series]
    assert predictors == pytest.approx([1.0, np.sqrt(2.0), np.sqrt(3.0)], abs=1e-12)
    assert all(point.ratio is not None and np.isfinite(point.ratio) for point in record.series)


def test_interpolated_variant():
    weights = SequenceWeights.power_law(0.5, 10)
    record = ScalingService.scaling_study(
        "interpolated", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=3.0), [2, 5, 10],
        q=1.5, weights=weights,
    )
    assert record.series[-1].predictor == pytest.approx(NormService.lq_norm(weights, 1.5))
    assert record.series[0].extras["s"] == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        ScalingService.scaling_study("interpolated", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=3.0),
                                     [2, 5, 10], q=2.0, weights=weights)


def test_weights_shorter_than_n_list():
    with pytest.raises(ValueError):
        ScalingService.scaling_study("lorentz", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=3.0),
                                     [2, 4, 8], q=2.0, weights=SequenceWeights(values=[1.0, 1.0]))


def test_family_too_small_for_n_list():
    with pytest.raises(FamilyError):
        ScalingService.scaling_study("main", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=1.0),
                                     [1, 2, 8], q=2.0)


def test_short_series_has_no_fit():
    record = ScalingService.scaling_study("triangle", Grid(2, 16), FamilyRecipe(recipe="semiclassical", radius=2.0),
                                          [2, 4])
    assert record.fit is None
    assert record.metrics["exponent"] is None


def test_one_sided_orthogonality_3d():
    recipe = FamilyRecipe(recipe="semiclassical", radius=2.0, e_orthogonal=False)
    record = ScalingService.scaling_study("main", Grid(3, 8), recipe, [2, 4, 8, 16], q=1.5,
                                          certify_steps=4)
    assert record.details["e_orthogonal"] is False
    assert record.details["capacity"] == 32
    assert record.fit is not None
    for point in record.series:
        assert point.measured > 0
        assert point.extras["exact"] is False
        assert point.extras["lower_bound"] >= 0
        assert point.extras["norm_window"] == [point.extras["lower_bound"], point.measured]


def test_one_sided_norm_window_names_equivalence_constant():
    recipe = FamilyRecipe(recipe="semiclassical", radius=2.0, e_orthogonal=False)
    record = ScalingService.scaling_study("main", Grid(3, 8), recipe, [2, 4, 8, 16], q=1.5,
                                          certify_steps=4)
    window = record.details["norm_window"]
    assert len(window["lower"]) == len(window["upper"]) == 4
    expected = max(lo / up for lo, up in zip(window["lower"], window["upper"]))
    assert window["equivalence_constant"] == pytest.approx(expected)
    assert record.metrics["equivalence_constant"] == pytest.approx(expected)


def test_liebsob_densities_and_component_ratio():
    record = ScalingService.scaling_study("liebsob", Grid(3, 8), None, [3, 6, 12], components=[1, 3])
    by_components = record.details["by_components"]
    assert by_components[0]["measured"] == pytest.approx([3.0, 6.0, 9.0], rel=1e-12)
    assert by_components[1]["measured"] == pytest.approx([3.0, 6.0, 12.0], rel=1e-12)
    assert record.metrics["component_ratio"] == pytest.approx(12.0 / 9.0)
    assert record.metrics["component_ratio"] <= 2 * 3 ** (2.0 / 3.0)
    assert record.series[0].predictor == pytest.approx(3 ** (1.0 / 3.0))


def test_liebsob_requires_three_dimensions():
    with pytest.raises(ValueError):
        ScalingService.scaling_study("liebsob", Grid(2, 16), None, [1, 2, 3], components=[1])


# ----------------------------------------------------------------------
# schatten_study
# ----------------------------------------------------------------------

def test_constant_u_is_exact_zero(grid2):
    study = SchattenService.study_u(ScalarField.constant(grid2, 1.5), "commutator", 4.0)
    assert np.all(study["singular_values"] == 0)
    assert study["exact_zero"]
    assert study["ratio"] == 0.0


def test_ratio_is_homogeneous(rng, grid2):
    u = FieldService.random_real(grid2, rng, 3.0)
    base = SchattenService.study_u(u, "commutator", 5.0)
    scaled = SchattenService.study_u(u * 7.0, "commutator", 5.0)
    assert scaled["ratio"] == pytest.approx(base["ratio"], rel=1e-12)


def test_cwikel_requires_three_dimensions(grid2):
    with pytest.raises(GridMismatchError):
        SchattenService.study_u(ScalarField.plane_wave(grid2, (1, 0)), "cwikel", 3.0)


def test_build_u_mode_recipe(grid2):
    recipe = URecipe(kind="mode", modes=[[1, 0], [0, 2]], amplitude=2.0)
    u = SchattenService.build_u(grid2, recipe, seed=0, index=0)
    x, y = grid2.points
    np.testing.assert_allclose(u.values, 2.0 * (np.cos(x) + np.cos(2 * y)), atol=1e-12)


def test_commutator_study_records(tmp_path):
    recipes = [
        URecipe(kind="mode", modes=[[1, 0]]),
        URecipe(kind="mode", modes=[[2, 1]], amplitude=3.0),
        URecipe(kind="mode", modes=[[3, 0], [0, 2]], phase="sin"),
        URecipe(kind="random", band=3.0, amplitude=5.0),
    ]
    record = SchattenService.schatten_study("commutator", Grid(2, 16), recipes, 5.0, seed=2, dump_dir=tmp_path)
    assert record.metrics["partial_sum_slack"] >= -1e-10
    assert record.metrics["rhs_spread"] > 1
    assert np.isfinite(record.metrics["ratio_spread"])
    assert len(record.details["u"]) == 4
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"singular_values_{i}.csv" for i in range(4)]


def test_cwikel_study_3d():
    recipes = [URecipe(kind="mode", modes=[[1, 0, 0]]), URecipe(kind="random", band=2.0, seed=4)]
    record = SchattenService.schatten_study("cwikel", Grid(3, 8), recipes, 2.5)
    assert record.details["p"] == 3.0
    assert record.details["expected_tail_slope"] == pytest.approx(-1.0 / 3.0)
    assert all(u["ratio"] > 0 for u in record.details["u"])


def test_cwikel_tensor_bound(rng, grid3):
    u = FieldService.random_real(grid3, rng, 2.0)
    K = SpectralService.materialize_cwikel(u, 2.5)
    weak = NormService.weak_lp_functional(K.singular_values, 3.0)
    tensor = SpectralService.tensor_identity(K, 3)
    weak_tensor = NormService.weak_lp_functional(tensor.singular_values, 3.0)
    assert weak_tensor <= 3 ** (1.0 / 3.0) * weak * (1 + 1e-12)


# ----------------------------------------------------------------------
# extremizer_search
# ----------------------------------------------------------------------

def test_extremizer_zero_steps():
    record = ExtremizerService.extremizer_search(Grid(2, 16), N=4, pool_modes=4, steps=0)
    assert record.metrics["final_objective"] == record.metrics["initial_objective"]
    assert len(record.series) == 1


def test_extremizer_single_member_initial_objective():
    grid = Grid(2, 16)
    record = ExtremizerService.extremizer_search(grid, N=1, pool_modes=2, steps=0)
    pair = FamilyService.build_pair(grid, FamilyRecipe(recipe="modes", modes=record.details["pool_modes"]), seed=0)
    g = FieldService.remove_mean(FieldService.pointwise_dot_sum([pair.e[0]], [pair.b[0]]))
    expected, _ = NormService.dual_norm_h1(g)
    assert record.metrics["initial_objective"] == pytest.approx(expected, rel=1e-12)


def test_extremizer_trace_is_monotone():
    record = ExtremizerService.extremizer_search(Grid(2, 16), N=4, pool_modes=6, steps=15, seed=3)
    trace = [point.measured for point in record.series]
    assert len(trace) == 16
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert record.metrics["final_objective"] >= record.metrics["initial_objective"]
    mixing = np.asarray(record.details["mixing_e"])
    np.testing.assert_allclose(mixing.T @ mixing, np.eye(4), atol=1e-12)


def test_extremizer_records_trace_without_fit():
    record = ExtremizerService.extremizer_search(Grid(2, 16), N=2, pool_modes=4, steps=5, seed=1)
    assert record.fit is None
    assert record.predictor_exponent is None
    assert record.details["monotone"] is True
    assert record.metrics["initial_objective"] == record.series[0].measured
    assert record.metrics["final_objective"] == record.series[-1].measured


def test_extremizer_rejects_small_pool():
    with pytest.raises(FamilyError):
        ExtremizerService.extremizer_search(Grid(2, 16), N=9, pool_modes=4, steps=1)


# ----------------------------------------------------------------------
# spectral_suite
# ----------------------------------------------------------------------

def test_spectral_suite_small():
    record = SpectralService.spectral_suite(Grid(2, 16), seed=1, band=3.0, trials=10, max_size=12)
    assert record.metrics["trace_slack"] >= -1e-10
    assert record.metrics["partial_sum_slack"] >= -1e-10
    assert record.metrics["max_deviation"] <= 1e-10
    assert set(record.details["anticommutation"]) == {"2", "3", "4", "5", "6"}
