import dataclasses
import math
import os
import tempfile

import pytest

from madfrc.config import (ConfigError, SystemConfig, config_as_dict,
                           default_config, emit_config, load_config)


def test_default_values():
    cfg = default_config()
    assert cfg.num_antennas == 4
    assert cfg.num_users == 3
    assert cfg.num_paths == 6
    assert cfg.wavelength == 0.1
    assert cfg.min_spacing == 0.05
    assert cfg.region_length == 1.0
    assert cfg.detection_samples == 100
    assert cfg.covertness_level == 0.1
    assert cfg.scheme == "ma"


def test_db_conversions():
    cfg = default_config()
    # 15 dBW -> 10^1.5 W
    assert math.isclose(cfg.total_power, 10.0 ** 1.5, rel_tol=1e-12)
    assert math.isclose(cfg.radar_snr_threshold, 10.0 ** 1.5, rel_tol=1e-12)
    # -90 dBW noise floors
    assert math.isclose(cfg.noise_user, 1e-9, rel_tol=1e-12)
    assert math.isclose(cfg.noise_radar, 1e-9, rel_tol=1e-12)
    assert math.isclose(cfg.noise_willie, 1e-9, rel_tol=1e-12)
    # target angle stored in radians
    assert math.isclose(cfg.target_angle, math.radians(35.0), rel_tol=1e-12)
    # warden channel gain 1e-3 * 60^-3.2
    assert math.isclose(cfg.willie_gain, 1e-3 * 60.0 ** -3.2, rel_tol=1e-12)
    assert math.isclose(cfg.reflection_gain, 1e-7, rel_tol=1e-12)


def test_validate_rejects_bad_fields():
    cfg = default_config()
    cases = [
        ({"num_antennas": 0}, "num_antennas"),
        ({"num_users": 0}, "num_users"),
        ({"num_paths": 0}, "num_paths"),
        ({"wavelength": -0.1}, "wavelength"),
        ({"total_power": 0.0}, "total_power"),
        ({"covertness_level": -0.1}, "covertness_level"),
        ({"target_angle": 4.0}, "target_angle"),
        ({"detection_samples": 0}, "detection_samples"),
        ({"min_spacing": -1.0}, "min_spacing"),
        ({"noise_user": 0.0}, "noise_user"),
    ]
    for patch, name in cases:
        with pytest.raises(ConfigError) as err:
            dataclasses.replace(cfg, **patch)
        assert name in str(err.value)


def test_region_too_short_for_array():
    # 4 antennas at >= 0.05 m spacing need at least 0.15 m of aperture
    with pytest.raises(ConfigError) as err:
        dataclasses.replace(default_config(), region_length=0.1)
    assert "region_length" in str(err.value)


def test_roundtrip_is_bitwise():
    cfg = default_config()
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "sys.cfg")
        emit_config(cfg, path)
        back = load_config(path)
    for field in dataclasses.fields(SystemConfig):
        a = getattr(cfg, field.name)
        b = getattr(back, field.name)
        assert a == b, f"{field.name}: {a!r} != {b!r}"


def test_load_emit_load_is_identity_on_ugly_db_values():
    import madfrc
    base = os.path.join(os.path.dirname(madfrc.__file__), "data", "default.cfg")
    with open(base) as f:
        text = f.read()
    text = (text.replace("power_dbw = 15.0", "power_dbw = 13.7")
                .replace("willie_gain_db = ", "willie_gain_db = -94.777 # ")
                .replace("user_center_m = 40.0", "user_center_m = 41.237"))
    with tempfile.TemporaryDirectory() as d:
        first = os.path.join(d, "a.cfg")
        second = os.path.join(d, "b.cfg")
        with open(first, "w") as f:
            f.write(text)
        cfg = load_config(first)
        emit_config(cfg, second)
        back = load_config(second)
    for field in dataclasses.fields(SystemConfig):
        a = getattr(cfg, field.name)
        b = getattr(back, field.name)
        assert a == b, f"{field.name}: {a!r} != {b!r}"


def test_shipped_default_file_matches_default_config():
    import madfrc
    path = os.path.join(os.path.dirname(madfrc.__file__), "data", "default.cfg")
    cfg = load_config(path)
    base = default_config()
    for field in dataclasses.fields(SystemConfig):
        assert getattr(cfg, field.name) == getattr(base, field.name), field.name


def test_load_rejects_unknown_key():
    import madfrc
    path = os.path.join(os.path.dirname(madfrc.__file__), "data", "default.cfg")
    with open(path) as f:
        text = f.read()
    with tempfile.TemporaryDirectory() as d:
        bad = os.path.join(d, "bad.cfg")
        with open(bad, "w") as f:
            f.write(text + "\nbogus_knob = 3\n")
        with pytest.raises(ConfigError) as err:
            load_config(bad)
    assert "bogus_knob" in str(err.value)


def test_config_as_dict_round_trips_through_replace():
    cfg = default_config()
    d = config_as_dict(cfg)
    assert d["num_antennas"] == 4
    assert d["scheme"] == "ma"
    assert SystemConfig(**d) == cfg
