import pytest
import yaml

from bayestof import config as C


def write_cfg(tmp_path, body):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(body))
    return str(path)


def minimal():
    return {k: C.DEFAULTS[k] for k in C.REQUIRED_KEYS}


def test_defaults_valid():
    cfg = C.load_config()
    assert cfg["alpha"] == 1.0 and cfg["K"] == 50.0
    assert C.noise_from(cfg).K == 50.0


def test_minimal_user_file(tmp_path):
    cfg = C.load_config(write_cfg(tmp_path, minimal()))
    assert C.config_hash(cfg) == C.config_hash(C.load_config())


@pytest.mark.parametrize("key", C.REQUIRED_KEYS)
def test_missing_key_is_named(tmp_path, key):
    body = minimal()
    del body[key]
    with pytest.raises(C.ConfigError, match=key):
        C.load_config(write_cfg(tmp_path, body))


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(C.ConfigError, match="bogus"):
        C.load_config(write_cfg(tmp_path, {**minimal(), "bogus": 1}))


def test_invalid_values_rejected(tmp_path):
    with pytest.raises(C.ConfigError):
        C.load_config(write_cfg(tmp_path, {**minimal(), "K": 0.0}))
    with pytest.raises(C.ConfigError):
        C.load_config(write_cfg(tmp_path, {**minimal(), "t_range": [300.0, 100.0]}))
    with pytest.raises(C.ConfigError):
        C.load_config(write_cfg(tmp_path, {**minimal(), "t_range": [50.0, 600.0]}))


def test_overrides_change_hash_but_workers_do_not():
    base = C.load_config()
    assert C.config_hash(C.load_config(overrides={"seed": 99})) != C.config_hash(base)
    assert C.config_hash({**base, "workers": 7}) == C.config_hash(base)


def test_dump_roundtrip():
    cfg = C.load_config()
    assert yaml.safe_load(C.dump_config(cfg)) == cfg


def test_design_entries_must_exist():
    basis = C.basis_from(C.load_config())
    with pytest.raises(C.ConfigError):
        C.design_from_entries(basis, [[[3.0, 5.0, 10]]])
