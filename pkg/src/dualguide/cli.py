"""Command-line surface: train, sample, compare, ablate.

Every output file embeds the config digest; files are written atomically
(temp then rename). Exit codes: 0 success, 2 configuration error, 3
numerical abort.
"""

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import metrics
from .conditions import sample_data
from .denoiser import AnalyticDenoiser, epsilon_disagreement, train_toy_denoiser
from .errors import ConfigurationError, NumericalAbort
from .guidance import Strategy
from .perturb import PerturbTarget
from .sampler import sample


def _write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _csv_text(digest: str, header: list[str], rows: list[list]) -> str:
    lines = [f"# config_digest={digest}", ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _save_svg(path: Path, digest: str, draw) -> None:
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = digest
    fig = draw(plt)
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    _write_atomic(path, buf.getvalue())


def _outdir(cfg: dict) -> Path:
    return Path(cfg["output_dir"])


def _seed_list(cfg: dict, count: int | None = None) -> list[int]:
    se = cfg["seeds"]
    n = count if count is not None else se["count"]
    return [se["base"] + i for i in range(n)]


def _target_samples(cfg: dict, gmm) -> np.ndarray:
    ev, co = cfg["eval"], cfg["condition"]
    return sample_data(gmm, co["content_id"], co["style_id"], ev["target_samples"],
                       seed=ev["target_seed"])


def _blowup_bound(cfg: dict, gmm) -> float:
    bound = cfg["eval"]["blowup_bound"]
    return float(bound) if bound is not None else metrics.default_blowup_bound(gmm)


def _metric_rows(reports, label=None):
    rows = []
    for r in reports:
        row = [r.strategy, r.gs, r.fidelity_w2, r.diversity, r.blowup_rate, r.n_samples]
        if label is not None:
            row.insert(0, label)
        rows.append(row)
    return rows


def cmd_train(cfg: dict) -> int:
    dn = cfg["denoiser"]["train"]
    schedule = cfgmod.build_schedule(cfg)
    gmm = cfgmod.build_gmm(cfg)
    dataset = cfgmod.build_training_dataset(cfg, gmm)
    model, losses = train_toy_denoiser(
        dataset,
        schedule,
        epochs=dn["epochs"],
        cond_dropout_prob=dn["cond_dropout_prob"],
        seed=dn["seed"],
        hidden=tuple(dn["hidden"]),
        lr=dn["lr"],
        batch_size=dn["batch_size"],
    )
    digest = cfgmod.config_digest(cfg)
    out = _outdir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "denoiser.ckpt"
    tmp = ckpt.with_name(ckpt.name + ".tmp")
    model.save(tmp)
    os.replace(tmp, ckpt)
    rows = [[i + 1, loss] for i, loss in enumerate(losses)]
    _write_atomic(out / "train_loss.csv", _csv_text(digest, ["epoch", "mse"], rows))
    em = cfg["embedding"]
    reference = AnalyticDenoiser(gmm, schedule, em["d_c"], em["d_s"], em["seed"])
    disagreement = epsilon_disagreement(
        model, reference, gmm, schedule, [cfgmod.build_condition(cfg)], seed=dn["seed"]
    )
    print(f"checkpoint written to {ckpt} (final mse {losses[-1]:.4g})")
    print(f"eps disagreement vs analytic reference: {disagreement:.4g}"
          f" (threshold {dn['disagreement_threshold']})")
    return 0


def cmd_sample(cfg: dict) -> int:
    schedule = cfgmod.build_schedule(cfg)
    gmm = cfgmod.build_gmm(cfg)
    model = cfgmod.build_model(cfg, schedule, gmm)
    cond = cfgmod.build_condition(cfg)
    gcfg = cfgmod.build_guidance(cfg)
    if gcfg.strategy in (Strategy.CFG, Strategy.APG) and not getattr(model, "supports_null", False):
        raise ConfigurationError(
            f"strategy {gcfg.strategy.value} needs a model with an unconditional branch"
        )
    digest = cfgmod.config_digest(cfg)
    seeds = _seed_list(cfg)
    out = _outdir(cfg)
    sa = cfg["sampling"]
    tag = f"{gcfg.strategy.value}_gs{_fmt(gcfg.gs)}"
    finals_rows = []
    for seed in seeds:
        traj = sample(model, cond, gcfg, schedule, seed,
                      stride=sa["stride"], record_every=sa["record_every"],
                      config_digest=digest)
        lines = [
            f"# seed={seed}",
            f"# config_digest={digest}",
            f"# degenerate_steps={traj.degenerate_step_count}",
            "# columns: t x... g",
        ]
        for step in traj.steps:
            coords = " ".join(_fmt(float(v)) for v in step.x)
            lines.append(f"{step.t} {coords} {_fmt(step.g)}")
        _write_atomic(out / f"traj_{tag}_seed{seed}.txt", "\n".join(lines) + "\n")
        finals_rows.append([seed] + [float(v) for v in traj.final])
    dim = len(finals_rows[0]) - 1
    header = ["seed"] + [f"x{i}" for i in range(dim)]
    _write_atomic(out / f"samples_{tag}.csv", _csv_text(digest, header, finals_rows))
    print(f"wrote {len(seeds)} trajectories and samples_{tag}.csv to {out}")
    return 0


def _compare_reports(cfg: dict, strategies, gs_list):
    schedule = cfgmod.build_schedule(cfg)
    gmm = cfgmod.build_gmm(cfg)
    model = cfgmod.build_model(cfg, schedule, gmm)
    cond = cfgmod.build_condition(cfg)
    target = _target_samples(cfg, gmm)
    bound = _blowup_bound(cfg, gmm)
    seeds = _seed_list(cfg)
    ev, sa = cfg["eval"], cfg["sampling"]
    all_reports = []
    for strat in strategies:
        gcfg = cfgmod.build_guidance(cfg, strategy=strat)
        reports = metrics.stability_curve(
            model, cond, gcfg, gs_list, schedule, seeds, target, bound,
            stride=sa["stride"], n_projections=ev["n_projections"],
            projection_seed=ev["projection_seed"],
        )
        all_reports.extend(reports)
    return all_reports


def cmd_compare(cfg: dict) -> int:
    strategies = cfg["compare"]["strategies"]
    gs_list = cfg["compare"]["gs_list"]
    reports = _compare_reports(cfg, strategies, gs_list)
    digest = cfgmod.config_digest(cfg)
    out = _outdir(cfg)
    header = ["strategy", "gs", "fidelity_w2", "diversity", "blowup_rate", "n_samples"]
    _write_atomic(out / "compare.csv", _csv_text(digest, header, _metric_rows(reports)))

    def draw(plt):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        for strat in strategies:
            rs = [r for r in reports if r.strategy == strat]
            ax1.plot([r.gs for r in rs], [r.fidelity_w2 for r in rs], marker="o", label=strat)
            ax2.plot([r.gs for r in rs], [r.blowup_rate for r in rs], marker="o", label=strat)
        ax1.set_xlabel("gs"); ax1.set_ylabel("fidelity W2"); ax1.set_yscale("log")
        ax2.set_xlabel("gs"); ax2.set_ylabel("blowup rate")
        ax1.legend(); ax2.legend()
        fig.tight_layout()
        return fig

    _save_svg(out / "compare.svg", digest, draw)
    print(f"wrote compare.csv and compare.svg to {out}")
    return 0


_ABLATION_AXES = ("projection", "schedule", "target", "peak")


def _ablation_arms(cfg: dict):
    gs = float(cfg["ablate"]["gs"])
    axis = cfg["_ablate_axis"]
    if axis == "projection":
        return [("with_projection", {"gs": gs}), ("raw_negative", {"gs": gs, "project": False})]
    if axis == "schedule":
        return [("triangular", {"gs": gs}), ("constant", {"gs": gs, "schedule_on": False})]
    if axis == "target":
        return [(t.value, {"gs": gs, "perturb_target": t.value}) for t in PerturbTarget]
    if axis == "peak":
        return [(f"u_T={u}", {"gs": gs, "u_T": u}) for u in cfg["ablate"]["peaks"]]
    raise ConfigurationError(f"unknown ablation axis {axis!r}; choose from {_ABLATION_AXES}")


def cmd_ablate(cfg: dict) -> int:
    axis = cfg["_ablate_axis"]
    if axis not in _ABLATION_AXES:
        raise ConfigurationError(f"unknown ablation axis {axis!r}; choose from {_ABLATION_AXES}")
    schedule = cfgmod.build_schedule(cfg)
    gmm = cfgmod.build_gmm(cfg)
    model = cfgmod.build_model(cfg, schedule, gmm)
    cond = cfgmod.build_condition(cfg)
    target = _target_samples(cfg, gmm)
    bound = _blowup_bound(cfg, gmm)
    seeds = _seed_list(cfg, count=cfg["ablate"]["seeds"])
    ev, sa = cfg["eval"], cfg["sampling"]
    digest = cfgmod.config_digest({k: v for k, v in cfg.items() if k != "_ablate_axis"})
    rows = []
    arm_reports = []
    for label, overrides in _ablation_arms(cfg):
        gcfg = cfgmod.build_guidance(cfg, strategy="dog", **overrides)
        reports = metrics.stability_curve(
            model, cond, gcfg, [gcfg.gs], schedule, seeds, target, bound,
            stride=sa["stride"], n_projections=ev["n_projections"],
            projection_seed=ev["projection_seed"],
        )
        arm_reports.append((label, reports[0]))
        rows.extend(_metric_rows(reports, label=label))
    out = _outdir(cfg)
    header = ["arm", "strategy", "gs", "fidelity_w2", "diversity", "blowup_rate", "n_samples"]
    _write_atomic(out / f"ablate_{axis}.csv", _csv_text(digest, header, rows))

    def draw(plt):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        labels = [label for label, _ in arm_reports]
        ax1.bar(labels, [r.fidelity_w2 for _, r in arm_reports])
        ax2.bar(labels, [r.blowup_rate for _, r in arm_reports])
        ax1.set_ylabel("fidelity W2"); ax2.set_ylabel("blowup rate")
        for ax in (ax1, ax2):
            ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        return fig

    _save_svg(out / f"ablate_{axis}.svg", digest, draw)
    print(f"wrote ablate_{axis}.csv and ablate_{axis}.svg to {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualguide",
                                     description="Guided diffusion sampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to the JSON run configuration")
    common.add_argument("--out", help="output directory (overrides config and env)")

    sub.add_parser("train", parents=[common], help="train the toy denoiser")

    p = sub.add_parser("sample", parents=[common], help="run guided sampling")
    p.add_argument("--strategy", choices=["none", "cfg", "apg", "dog"])
    p.add_argument("--gs", type=float)
    p.add_argument("--seeds", type=int, metavar="N", help="number of seeds")

    p = sub.add_parser("compare", parents=[common], help="stability curves across gs")
    p.add_argument("--gs-list", help="comma-separated gs values")
    p.add_argument("--strategies", help="comma-separated strategies")

    p = sub.add_parser("ablate", parents=[common], help="ablation sweeps")
    p.add_argument("--axis", required=True, choices=_ABLATION_AXES)
    return parser


def _overrides_from_args(args) -> dict:
    ov: dict = {}
    if args.out:
        ov["output_dir"] = args.out
    if args.command == "sample":
        if args.strategy:
            ov.setdefault("guidance", {})["strategy"] = args.strategy
        if args.gs is not None:
            ov.setdefault("guidance", {})["gs"] = args.gs
        if args.seeds is not None:
            ov["seeds"] = {"count": args.seeds}
    elif args.command == "compare":
        if args.gs_list:
            ov.setdefault("compare", {})["gs_list"] = [float(v) for v in args.gs_list.split(",")]
        if args.strategies:
            ov.setdefault("compare", {})["strategies"] = args.strategies.split(",")
    return ov


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, _overrides_from_args(args))
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        cfg["_ablate_axis"] = args.axis
        return cmd_ablate(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
