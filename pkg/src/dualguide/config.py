"""Run configuration: schema, validation, digesting, and object builders.

Configs are JSON files validated against a fixed schema tree (unknown keys
rejected, missing keys filled from defaults). The sha256 digest of the
canonicalized merged config, minus the output directory, is stamped on every
output file.
"""

import copy
import hashlib
import json
import os
from pathlib import Path

from .conditions import build_toy_gmm, embed_condition, sample_data
from .denoiser import AnalyticDenoiser, MLPDenoiser
from .errors import ConfigurationError
from .guidance import GuidanceConfig, Strategy
from .perturb import PerturbConfig, PerturbTarget, ResampleMode
from .schedule import TriangularSchedule, make_linear_schedule

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "DUALGUIDE_OUT"

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "output_dir": "runs/default",
    "schedule": {"T": 1000, "beta_start": 1e-4, "beta_end": 0.02},
    "gmm": {
        "content_vocab": 4,
        "style_vocab": 4,
        "modes_per_content": 4,
        "seed": 11,
        "sigma": 0.05,
    },
    "embedding": {"d_c": 8, "d_s": 8, "seed": 7},
    "condition": {"content_id": 0, "style_id": 0},
    "denoiser": {
        "kind": "analytic",
        "checkpoint": None,
        "train": {
            "epochs": 100,
            "batch_size": 128,
            "lr": 1e-3,
            "dataset_size": 4096,
            "cond_dropout_prob": 0.2,
            "seed": 0,
            "hidden": [128, 128, 128],
            "disagreement_threshold": 0.5,
        },
    },
    "guidance": {
        "strategy": "dog",
        "gs": 20.0,
        "tau": "auto",
        "apg_parallel_weight": 0.1,
        "schedule_on": True,
        "project": True,
        "u_T": 700,
        "perturb": {
            "lambda_s": 1000.0,
            "lambda_t": 1000.0,
            "p": 0.75,
            "target": "both",
            "resample_mode": "per_trajectory",
            "additive": False,
        },
    },
    "sampling": {"stride": 1, "record_every": 1},
    "eval": {
        "n_projections": 128,
        "projection_seed": 123,
        "target_samples": 512,
        "target_seed": 999,
        "blowup_bound": None,
    },
    "seeds": {"base": 0, "count": 16},
    "compare": {"strategies": ["none", "cfg", "apg", "dog"], "gs_list": [2, 10, 20, 30]},
    "ablate": {"gs": 30.0, "peaks": [200, 500, 700], "seeds": 64},
}


def _merge(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigurationError(f"expected a mapping at {path or '<root>'}")
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigurationError(f"unknown configuration key: {here}")
        if isinstance(defaults[key], dict) and defaults[key]:
            merged[key] = _merge(defaults[key], value, here)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigurationError(message)


def validate(cfg: dict) -> dict:
    """Type/range checks over the merged config; returns it unchanged."""
    _require(cfg["schema_version"] == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}, got {cfg['schema_version']}")
    sc = cfg["schedule"]
    _require(isinstance(sc["T"], int) and sc["T"] >= 2, "schedule.T must be an integer >= 2")
    _require(0 < sc["beta_start"] <= sc["beta_end"] < 1,
             "schedule.beta_start/beta_end must satisfy 0 < start <= end < 1")
    gm = cfg["gmm"]
    for key in ("content_vocab", "style_vocab", "modes_per_content"):
        _require(isinstance(gm[key], int) and gm[key] >= 1, f"gmm.{key} must be an integer >= 1")
    _require(gm["sigma"] >= 0, "gmm.sigma must be >= 0")
    em = cfg["embedding"]
    _require(em["d_c"] >= 1 and em["d_s"] >= 1, "embedding dimensions must be >= 1")
    co = cfg["condition"]
    _require(0 <= co["content_id"] < gm["content_vocab"],
             "condition.content_id outside gmm.content_vocab")
    _require(0 <= co["style_id"] < gm["style_vocab"],
             "condition.style_id outside gmm.style_vocab")
    dn = cfg["denoiser"]
    _require(dn["kind"] in ("analytic", "trained"),
             "denoiser.kind must be 'analytic' or 'trained'")
    tr = dn["train"]
    _require(tr["epochs"] >= 1, "denoiser.train.epochs must be >= 1")
    _require(tr["dataset_size"] >= 1, "denoiser.train.dataset_size must be >= 1")
    _require(0 <= tr["cond_dropout_prob"] < 1,
             "denoiser.train.cond_dropout_prob must be in [0, 1)")
    gd = cfg["guidance"]
    _require(gd["strategy"] in ("none", "cfg", "apg", "dog"),
             "guidance.strategy must be one of none, cfg, apg, dog")
    _require(gd["gs"] >= 0, "guidance.gs must be >= 0")
    _require(gd["tau"] == "auto" or (isinstance(gd["tau"], (int, float)) and gd["tau"] > 0),
             "guidance.tau must be positive or 'auto'")
    _require(0 < gd["u_T"] < sc["T"], "guidance.u_T must lie strictly inside (0, schedule.T)")
    pt = gd["perturb"]
    _require(0 < pt["p"] <= 1, "guidance.perturb.p must be in (0, 1]")
    _require(pt["lambda_s"] >= 0 and pt["lambda_t"] >= 0,
             "guidance.perturb lambdas must be >= 0")
    _require(pt["target"] in ("style", "content", "both", "unconditional"),
             "guidance.perturb.target must be style, content, both or unconditional")
    _require(pt["resample_mode"] in ("per_trajectory", "per_step"),
             "guidance.perturb.resample_mode must be per_trajectory or per_step")
    sa = cfg["sampling"]
    _require(isinstance(sa["stride"], int) and sa["stride"] >= 1,
             "sampling.stride must be an integer >= 1")
    _require(isinstance(sa["record_every"], int) and sa["record_every"] >= 0,
             "sampling.record_every must be an integer >= 0")
    se = cfg["seeds"]
    _require(isinstance(se["count"], int) and se["count"] >= 1,
             "seeds.count must be an integer >= 1")
    cp = cfg["compare"]
    _require(len(cp["strategies"]) >= 1 and len(cp["gs_list"]) >= 1,
             "compare.strategies and compare.gs_list must be nonempty")
    for s in cp["strategies"]:
        _require(s in ("none", "cfg", "apg", "dog"), f"unknown compare strategy {s!r}")
    return cfg


def load_config(path, overrides: dict | None = None) -> dict:
    """Read a JSON config file, merge defaults and overrides, validate."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    if OUTPUT_DIR_ENV in os.environ and (not overrides or "output_dir" not in overrides):
        cfg["output_dir"] = os.environ[OUTPUT_DIR_ENV]
    return validate(cfg)


def config_digest(cfg: dict) -> str:
    """sha256 of the canonical config; output_dir excluded so relocation
    does not change result identity."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --- builders -------------------------------------------------------------


def build_schedule(cfg: dict):
    sc = cfg["schedule"]
    return make_linear_schedule(sc["T"], sc["beta_start"], sc["beta_end"])


def build_gmm(cfg: dict):
    gm = cfg["gmm"]
    return build_toy_gmm(
        gm["content_vocab"], gm["style_vocab"], gm["modes_per_content"], gm["seed"],
        sigma=gm["sigma"],
    )


def build_condition(cfg: dict):
    gm, em, co = cfg["gmm"], cfg["embedding"], cfg["condition"]
    return embed_condition(
        co["content_id"], co["style_id"], em["d_c"], em["d_s"], em["seed"],
        content_vocab=gm["content_vocab"], style_vocab=gm["style_vocab"],
    )


def build_model(cfg: dict, schedule, gmm):
    dn = cfg["denoiser"]
    if dn["kind"] == "analytic":
        em = cfg["embedding"]
        return AnalyticDenoiser(gmm, schedule, em["d_c"], em["d_s"], em["seed"])
    if not dn["checkpoint"]:
        raise ConfigurationError("denoiser.checkpoint is required when denoiser.kind='trained'")
    if not Path(dn["checkpoint"]).exists():
        raise ConfigurationError(f"denoiser.checkpoint not found: {dn['checkpoint']}")
    return MLPDenoiser.load(dn["checkpoint"])


def build_guidance(cfg: dict, **replacements) -> GuidanceConfig:
    """GuidanceConfig from the config dict; keyword args override fields."""
    gd = dict(cfg["guidance"])
    gd.update({k: v for k, v in replacements.items() if not k.startswith("perturb_")})
    pt = dict(gd.pop("perturb"))
    for k, v in replacements.items():
        if k.startswith("perturb_"):
            pt[k[len("perturb_"):]] = v
    perturb = PerturbConfig(
        lambda_s=float(pt["lambda_s"]),
        lambda_t=float(pt["lambda_t"]),
        p=float(pt["p"]),
        target=PerturbTarget(pt["target"]),
        resample_mode=ResampleMode(pt["resample_mode"]),
        additive=bool(pt["additive"]),
    )
    tri = TriangularSchedule(T=cfg["schedule"]["T"], u_T=int(gd["u_T"]), gs=float(gd["gs"]))
    return GuidanceConfig(
        strategy=Strategy(gd["strategy"]),
        gs=float(gd["gs"]),
        tau=gd["tau"] if gd["tau"] == "auto" else float(gd["tau"]),
        apg_parallel_weight=float(gd["apg_parallel_weight"]),
        schedule_on=bool(gd["schedule_on"]),
        project=bool(gd["project"]),
        perturb=perturb,
        triangular=tri,
    )


def build_training_dataset(cfg: dict, gmm):
    """(x0, ConditionPair) records covering every (content, style) slice."""
    gm, em, tr = cfg["gmm"], cfg["embedding"], cfg["denoiser"]["train"]
    n_slices = gm["content_vocab"] * gm["style_vocab"]
    per_slice = max(1, tr["dataset_size"] // n_slices)
    dataset = []
    for c in range(gm["content_vocab"]):
        for s in range(gm["style_vocab"]):
            cond = embed_condition(
                c, s, em["d_c"], em["d_s"], em["seed"],
                content_vocab=gm["content_vocab"], style_vocab=gm["style_vocab"],
            )
            xs = sample_data(gmm, c, s, per_slice, seed=tr["seed"] * 100003 + c * 97 + s)
            dataset.extend((x, cond) for x in xs)
    return dataset
