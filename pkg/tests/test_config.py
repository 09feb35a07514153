"""Config schema, merging, digesting, and object builders."""

import json

import pytest

from dualguide import config as cfgmod
from dualguide.errors import ConfigurationError
from dualguide.guidance import Strategy
from dualguide.perturb import PerturbTarget, ResampleMode


def _write(tmp_path, body):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(body))
    return p


def test_defaults_validate():
    cfg = cfgmod.validate(cfgmod._merge(cfgmod.DEFAULT_CONFIG, {}))
    assert cfg["schema_version"] == cfgmod.SCHEMA_VERSION


def test_empty_file_yields_defaults(tmp_path):
    cfg = cfgmod.load_config(_write(tmp_path, {}))
    assert cfg["guidance"]["strategy"] == "dog"
    assert cfg["schedule"]["T"] == 1000


def test_unknown_key_rejected_with_path(tmp_path):
    with pytest.raises(ConfigurationError, match="guidance.taau"):
        cfgmod.load_config(_write(tmp_path, {"guidance": {"taau": 3}}))
    with pytest.raises(ConfigurationError, match="bogus"):
        cfgmod.load_config(_write(tmp_path, {"bogus": 1}))


def test_deep_merge_preserves_siblings(tmp_path):
    cfg = cfgmod.load_config(_write(tmp_path, {"guidance": {"gs": 5.0}}))
    assert cfg["guidance"]["gs"] == 5.0
    assert cfg["guidance"]["u_T"] == 700  # untouched sibling


def test_missing_or_invalid_file(tmp_path):
    with pytest.raises(ConfigurationError):
        cfgmod.load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        cfgmod.load_config(bad)


def test_validation_messages_name_fields(tmp_path):
    with pytest.raises(ConfigurationError, match="schedule.T"):
        cfgmod.load_config(_write(tmp_path, {"schedule": {"T": 1}}))
    with pytest.raises(ConfigurationError, match="guidance.strategy"):
        cfgmod.load_config(_write(tmp_path, {"guidance": {"strategy": "nope"}}))
    with pytest.raises(ConfigurationError, match="content_id"):
        cfgmod.load_config(_write(tmp_path, {"condition": {"content_id": 99}}))
    with pytest.raises(ConfigurationError, match="u_T"):
        cfgmod.load_config(_write(tmp_path, {"guidance": {"u_T": 1000}}))


def test_digest_excludes_output_dir(tmp_path):
    a = cfgmod.load_config(_write(tmp_path, {"output_dir": "runs/a"}))
    b = cfgmod.load_config(_write(tmp_path, {"output_dir": "runs/b"}))
    assert cfgmod.config_digest(a) == cfgmod.config_digest(b)


def test_digest_sensitive_to_settings(tmp_path):
    a = cfgmod.load_config(_write(tmp_path, {}))
    b = cfgmod.load_config(_write(tmp_path, {"guidance": {"gs": 21.0}}))
    assert cfgmod.config_digest(a) != cfgmod.config_digest(b)


def test_output_dir_precedence(tmp_path, monkeypatch):
    path = _write(tmp_path, {"output_dir": "from_file"})
    assert cfgmod.load_config(path)["output_dir"] == "from_file"
    monkeypatch.setenv(cfgmod.OUTPUT_DIR_ENV, "from_env")
    assert cfgmod.load_config(path)["output_dir"] == "from_env"
    cfg = cfgmod.load_config(path, {"output_dir": "from_flag"})
    assert cfg["output_dir"] == "from_flag"


def test_build_guidance_from_defaults():
    cfg = cfgmod.validate(cfgmod._merge(cfgmod.DEFAULT_CONFIG, {}))
    g = cfgmod.build_guidance(cfg)
    assert g.strategy is Strategy.DOG
    assert g.gs == 20.0
    assert g.tau == "auto"
    assert g.perturb.p == 0.75
    assert g.perturb.lambda_s == 1000.0
    assert g.perturb.target is PerturbTarget.BOTH
    assert g.perturb.resample_mode is ResampleMode.PER_TRAJECTORY
    assert g.triangular.u_T == 700 and g.triangular.T == 1000


def test_build_guidance_replacements():
    cfg = cfgmod.validate(cfgmod._merge(cfgmod.DEFAULT_CONFIG, {}))
    g = cfgmod.build_guidance(cfg, strategy="cfg", gs=3.0, u_T=200,
                              perturb_target="style")
    assert g.strategy is Strategy.CFG
    assert g.gs == 3.0 and g.triangular.gs == 3.0
    assert g.triangular.u_T == 200
    assert g.perturb.target is PerturbTarget.STYLE


def test_build_schedule_and_gmm():
    cfg = cfgmod.validate(cfgmod._merge(cfgmod.DEFAULT_CONFIG, {}))
    sched = cfgmod.build_schedule(cfg)
    assert sched.T == 1000
    gmm = cfgmod.build_gmm(cfg)
    assert gmm.content_vocab == 4 and gmm.style_vocab == 4
    assert len(gmm.slices) == 16


def test_build_model_trained_requires_checkpoint(tmp_path):
    cfg = cfgmod._merge(cfgmod.DEFAULT_CONFIG, {"denoiser": {"kind": "trained"}})
    sched = cfgmod.build_schedule(cfg)
    gmm = cfgmod.build_gmm(cfg)
    with pytest.raises(ConfigurationError):
        cfgmod.build_model(cfg, sched, gmm)
    cfg["denoiser"]["checkpoint"] = str(tmp_path / "missing.ckpt")
    with pytest.raises(ConfigurationError):
        cfgmod.build_model(cfg, sched, gmm)


def test_build_training_dataset_covers_all_slices():
    cfg = cfgmod._merge(cfgmod.DEFAULT_CONFIG, {"denoiser": {"train": {"dataset_size": 64}}})
    gmm = cfgmod.build_gmm(cfg)
    dataset = cfgmod.build_training_dataset(cfg, gmm)
    pairs = {(c.content_id, c.style_id) for _, c in dataset}
    assert pairs == {(c, s) for c in range(4) for s in range(4)}
    assert len(dataset) == 64
