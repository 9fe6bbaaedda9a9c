import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_canards import __version__
from torus_canards.config import DEFAULTS, RunConfig
from torus_canards.errors import ConfigError, GeometryError


def test_defaults_round_trip():
    cfg = RunConfig.from_dict({})
    assert cfg.data == DEFAULTS
    again = RunConfig.from_dict(json.loads(cfg.canonical()))
    assert again.hash == cfg.hash
    assert cfg.stamp() == {"config_hash": cfg.hash, "version": __version__}


def test_hash_ignores_key_order_and_tracks_values():
    a = RunConfig.from_dict({"k": 1.4, "seed": 3})
    b = RunConfig.from_dict({"seed": 3, "k": 1.4})
    c = RunConfig.from_dict({"seed": 4, "k": 1.4})
    assert a.hash == b.hash != c.hash
    assert len(a.hash) == 16


def test_nested_merge_keeps_other_defaults():
    cfg = RunConfig.from_dict({"tolerances": {"rel_tol": 1e-12}})
    assert cfg["tolerances"]["rel_tol"] == 1e-12
    assert cfg["tolerances"]["abs_tol"] == DEFAULTS["tolerances"]["abs_tol"]
    assert cfg.integrator().rel_tol == 1e-12


@given(st.text(min_size=1, max_size=12).filter(lambda s: s not in DEFAULTS))
def test_unknown_keys_rejected(key):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({key: 1})


@pytest.mark.parametrize("raw", [
    {"family": "van_der_pol"},
    {"k": "big"},
    {"k": float("nan")},
    {"delta_plus": -0.1},
    {"tolerances": {"rel_tol": -1}},
    {"tolerances": 5},
    {"windows": {"eps_lo": 0.3, "eps_hi": 0.1}},
    {"graph": {"colour": "red"}},
])
def test_invalid_values(raw):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"k": ')
    with pytest.raises(ConfigError, match="invalid JSON at line 1"):
        RunConfig.load(str(bad))
    with pytest.raises(ConfigError):
        RunConfig.load(str(tmp_path / "missing.json"))
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(str(arr))
    assert RunConfig.load(None).data == DEFAULTS


def test_builders():
    cfg = RunConfig.from_dict({"k": 1.5, "delta_plus": 0.3, "delta_minus": 0.25})
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    assert geom.delta_plus == 0.3 and geom.delta_minus == 0.25
    tol = cfg.tolerances()
    assert tol.n_scan == DEFAULTS["tolerances"]["n_scan"]
    with pytest.raises(GeometryError):
        RunConfig.from_dict({"k": 2.5}).system()
