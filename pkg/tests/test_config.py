from pathlib import Path

import pytest

from app.core.exceptions import ConfigError
from app.schemas.config import parse_config, validate_config

IDENTITY = """
[experiment]
name = "identity_suite"
seed = 3

[grid]
dim = 2
points_per_axis = 16
band = 3.0
"""

MAIN_3D = """
[experiment]
name = "scaling_study"
variant = "main"

[grid]
dim = 3
points_per_axis = 16

[family]
recipe = "semiclassical"
radius = 3.5
b_orthogonal = false

[norm]
q = 1.5
N_list = [2, 4, 8, 16]

[gates]
exponent_max = 0.8
"""


def violations_of(text: str) -> str:
    with pytest.raises(ConfigError) as info:
        parse_config(text, source="test.toml")
    assert info.value.violations
    return "\n".join(info.value.violations)


def test_minimal_identity_config():
    config = parse_config(IDENTITY)
    assert config.experiment.name == "identity_suite"
    assert config.experiment.seed == 3
    assert config.identity is None
    assert all(value is None for value in config.gates.model_dump().values())


def test_scaling_config_with_gates():
    config = parse_config(MAIN_3D)
    assert config.family.b_orthogonal is False
    assert config.norm.N_list == [2, 4, 8, 16]
    assert config.gates.exponent_max == 0.8


def test_echoed_config_reparses_equal():
    config = parse_config(MAIN_3D)
    assert validate_config(config.model_dump(mode="json")) == config


def test_one_dimensional_grid_is_rejected():
    text = IDENTITY.replace("dim = 2", "dim = 1")
    assert "grid.dim" in violations_of(text)


def test_odd_points_per_axis_is_rejected():
    text = IDENTITY.replace("points_per_axis = 16", "points_per_axis = 15")
    assert "grid.points_per_axis" in violations_of(text)


def test_unknown_key_is_rejected_with_path():
    text = IDENTITY.replace("band = 3.0", "band = 3.0\nspacing = 0.1")
    assert "grid.spacing" in violations_of(text)


def test_all_field_violations_are_collected():
    text = IDENTITY.replace("dim = 2", "dim = 1").replace("band = 3.0", "band = 3.0\nspacing = 0.1")
    message = violations_of(text)
    assert "grid.dim" in message
    assert "grid.spacing" in message


def test_cwikel_needs_three_dimensions():
    text = """
[experiment]
name = "schatten_study"

[grid]
dim = 2
points_per_axis = 16
band = 5.0

[schatten]
which = "cwikel"

[[schatten.u]]
kind = "mode"
modes = [[1, 0]]
"""
    assert "schatten.which" in violations_of(text)


def test_band_must_stay_below_nyquist():
    text = IDENTITY.replace("band = 3.0", "band = 8.0")
    assert "grid.band" in violations_of(text)


def test_identity_bands_must_not_alias():
    text = IDENTITY.replace("band = 3.0", "band = 6.0") + "\n[identity]\nu_band = 5.0\n"
    assert "identity.u_band" in violations_of(text)


def test_main_variant_requires_critical_q():
    assert "norm.q" in violations_of(MAIN_3D.replace("q = 1.5", "q = 2.0"))


def test_liebsob_rejects_two_dimensions():
    text = """
[experiment]
name = "scaling_study"
variant = "liebsob"

[grid]
dim = 2
points_per_axis = 16

[norm]
N_list = [1, 2, 4]
components = [1, 2]
"""
    assert "liebsob" in violations_of(text)


def test_weights_need_a_single_source():
    text = MAIN_3D.replace('variant = "main"', 'variant = "lorentz"') + "\n[weights]\npower = 0.5\n"
    assert "weights" in violations_of(text)


def test_unknown_experiment_name():
    assert "experiment.name" in violations_of(IDENTITY.replace("identity_suite", "heat_flow"))


def test_toml_syntax_error():
    assert "toml" in violations_of("[experiment\nname = 1")


def test_config_error_is_a_value_error():
    with pytest.raises(ValueError):
        parse_config("")


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs").glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_are_valid(path):
    config = parse_config(path.read_text(encoding="utf-8"), source=str(path))
    assert config.experiment.name in path.read_text(encoding="utf-8")
