import pytest

from gibbsmle.config import (
    ConfigError,
    format_keyvalue,
    model_from_keys,
    model_to_keys,
    parse_box,
    parse_keyvalue,
    read_keyvalue,
)
from gibbsmle.models import GibbsModel, ModelError


def test_parse_keyvalue():
    kv = parse_keyvalue("# model\nkind = strauss\n\nz = 0.3  # activity\nbeta=0.7\n")
    assert kv == {"kind": "strauss", "z": "0.3", "beta": "0.7"}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_keyvalue("z = 1\nz = 2\n")
    with pytest.raises(ConfigError, match=":2:"):
        parse_keyvalue("z = 1\nbeta\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_keyvalue(tmp_path / "nope.txt")


@pytest.mark.parametrize("model", [
    GibbsModel.poisson(0.4),
    GibbsModel.strauss(0.3, 0.7, 0.1),
    GibbsModel.hardcore_strauss(0.3, -0.5, 0.1, 0.05),
    GibbsModel.area_interaction(0.3, 0.7, 0.1),
    GibbsModel.piecewise(0.1, (0.9, 0.3), (0.05, 0.12)),
    GibbsModel.lennard_jones(0.0, 0.02, 0.02, truncation=0.5),
    GibbsModel.lennard_jones(0.0, 1.0, 1.0),
])
def test_model_round_trip(model, tmp_path):
    path = tmp_path / "m.txt"
    path.write_text(format_keyvalue(model_to_keys(model)))
    assert model_from_keys(read_keyvalue(path)) == model


def test_model_errors():
    with pytest.raises(ConfigError, match="kind"):
        model_from_keys({"z": "1"})
    with pytest.raises(ConfigError, match="unknown kind"):
        model_from_keys({"kind": "gauss", "z": "1"})
    with pytest.raises(ConfigError, match="'R'"):
        model_from_keys({"kind": "strauss", "z": "1", "beta": "1"})
    with pytest.raises(ConfigError, match="not a number"):
        model_from_keys({"kind": "poisson", "z": "x"})
    with pytest.raises(ModelError, match="no Gibbs measure"):
        model_from_keys({"kind": "strauss", "z": "0", "beta": "-1", "R": "0.1"})


def test_parse_box():
    assert parse_box("z=-1:1, beta=0:3") == {"z": (-1.0, 1.0), "beta": (0.0, 3.0)}
    for bad in ("z=1", "z:1", "z=2:1"):
        with pytest.raises(ConfigError):
            parse_box(bad)
