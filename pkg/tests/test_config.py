import os

import pytest

from curvedt import config as cfgmod
from curvedt.config import ConfigError, ExperimentConfig, dumps, load, loads

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def test_defaults_round_trip():
    cfg = ExperimentConfig().validate()
    assert loads(dumps(cfg)) == cfg
    assert dumps(loads(dumps(cfg))) == dumps(cfg)


def test_round_trip_after_edits():
    cfg = ExperimentConfig()
    cfg.plan.rotations = 5
    cfg.physics.frequency = 123456.789
    cfg.kernel.strict = False
    cfg.phantom.deformation = "4:0.1:0.3"
    assert loads(dumps(cfg)) == cfg


@pytest.mark.parametrize("name", ["shepp_logan.ini", "resolution.ini", "full_roi.ini"])
def test_shipped_configs_parse(name):
    cfg = load(os.path.join(CONFIG_DIR, name), environ={})
    assert loads(dumps(cfg)) == cfg


def test_experiment_numbers_are_defaults():
    cfg = ExperimentConfig()
    assert cfg.physics.frequency == 500e3 and cfg.physics.c0 == 1500.0
    assert cfg.phantom.c_scatter == 1550.0
    assert cfg.virtual.elements == 900 and cfg.virtual.span == 1.0 and cfg.virtual.separation == 0.220
    assert cfg.kernel.n_interior == 4500
    assert cfg.filter.cutoff_fraction == 0.9
    assert cfg.curve.spacing == 0.97e-3


def test_env_override():
    cfg = loads("[plan]\nrotations = 3\n", environ={"CURVEDT_PLAN_ROTATIONS": "4", "CURVEDT_KERNEL_STRICT": "no"})
    assert cfg.plan.rotations == 4 and cfg.kernel.strict is False
    assert cfgmod.apply_env(ExperimentConfig(), {}).plan.rotations == 2


@pytest.mark.parametrize("text", [
    "[nosuch]\na = 1\n",
    "[plan]\nnosuch = 1\n",
    "[plan]\nrotations = two\n",
    "[kernel]\nstrict = maybe\n",
    "[plan]\nrotations = 0\n",
    "[kernel]\nmethod = magic\n",
    "[phantom]\nkind = cube\n",
    "[physics]\nfrequency = -1\n",
    "no section header\n",
])
def test_bad_input_raises(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_bad_env_value_raises():
    with pytest.raises(ConfigError):
        loads("", environ={"CURVEDT_PLAN_PIXELS": "many"})


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load(str(tmp_path / "absent.ini"))


def test_derived_physics():
    p = ExperimentConfig().physics
    assert p.wavelength == pytest.approx(3e-3, rel=1e-15)
    assert p.k0 == pytest.approx(2094.3951023931954, rel=1e-14)
