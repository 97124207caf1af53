"""Command-line pipelines: train, translate, perturb, evaluate, uncertainty-corr and synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import data as D
from . import plots
from .errors import DataError, DomainError, NumericalError
from .metrics import robustness_curves
from .perturb import FAMILIES, LEVELS, level_schedule, spec_for
from .train import RunConfig, fit, load_generators, load_state
from .uncertainty import DEFAULT_MC_PASSES, generator_outputs, predict, uncertainty_residual_stats

log = logging.getLogger("ugac")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers --------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class Manifest:
    """Run record written atomically when the command finishes."""

    def __init__(self, command: str, argv: Sequence[str], seed: int | None, config: dict | None = None):
        self.record = {"command": command, "argv": list(argv), "seed": seed, "config": config or {},
                       "version": __version__, "started": _stamp(), "artifacts": []}

    def add(self, *paths: Path) -> None:
        self.record["artifacts"].extend(str(p) for p in paths)

    def write(self, path: Path, **extra) -> None:
        missing = [p for p in self.record["artifacts"] if not Path(p).exists()]
        if missing:
            raise RuntimeError(f"manifest lists missing files: {missing[:3]}")
        self.record.update(extra)
        self.record["finished"] = _stamp()
        _write_json(path, self.record)


def _load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return RunConfig.from_dict(json.loads(p.read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid config {p}: {exc}") from exc


def _image_folder(root: Path, direction: str, side: str = "input") -> Path:
    """``root`` itself, or its domainA/domainB folder when it is a dataset root."""
    sub = ("domainA" if direction == "a2b" else "domainB") if side == "input" else \
          ("domainB" if direction == "a2b" else "domainA")
    return root / sub if (root / sub).is_dir() else root


# -- commands -------------------------------------------------------------

def cmd_train(args, argv) -> int:
    cfg = _load_run_config(args.config)
    tc = cfg.train
    if args.epochs is not None:
        tc.epochs = args.epochs
    if args.seed is not None:
        tc.seed = args.seed
    cfg = RunConfig.from_dict(cfg.to_dict())  # re-validate after overrides
    if args.synth is not None:
        dataset = D.synth_shapes_dataset(args.synth, args.size, seed=cfg.train.seed)
    else:
        dataset = D.load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("train", argv, cfg.train.seed, cfg.to_dict())
    resume = load_state(args.resume) if args.resume else None
    if resume is not None:
        resume.config.train.epochs = cfg.train.epochs
    _write_json(out / "config.json", cfg.to_dict())
    state = fit(dataset, cfg if resume is None else None, out_dir=out, resume=resume,
                on_epoch=lambda r: log.info("epoch %d loss_g %.4f loss_d %.4f", r.epoch, r.loss_g, r.loss_d))
    man.add(out / "config.json", out / "metrics.csv", out / "last.ckpt")
    man.add(*sorted(out.glob("epoch_*.ckpt")))
    man.write(out / "manifest.json", epochs_done=state.epoch, steps_done=state.step)
    return EXIT_OK


def cmd_translate(args, argv) -> int:
    g_ab, g_ba, cfg = load_generators(args.ckpt)
    gen = g_ab if args.direction == "a2b" else g_ba
    names, x = D.load_images(_image_folder(Path(args.inp), args.direction))
    out = Path(args.out)
    preview = out / "preview"
    preview.mkdir(parents=True, exist_ok=True)
    man = Manifest("translate", argv, args.seed, cfg.to_dict())
    if args.uncertainty:
        pred = predict(gen, x, args.mc, np.random.default_rng(args.seed))
        maps = {"mean": pred.mean, "alpha": pred.alpha, "beta": pred.beta, "sigma": pred.maps.sigma}
        if not np.isfinite(maps["sigma"]).all():
            raise NumericalError("non-finite sigma map (beta too close to its floor)")
    else:
        maps = {"mean": generator_outputs(gen, x)[0]}
    for i, name in enumerate(names):
        for key, stack in maps.items():
            stem = name if key == "mean" else f"{name}_{key}"
            D.write_rt(out / f"{stem}.rt", stack[i])
            D.write_png(preview / f"{stem}.png", stack[i], normalize=key != "mean")
            man.add(out / f"{stem}.rt", preview / f"{stem}.png")
    man.write(out / "manifest.json", direction=args.direction, n_images=len(names),
              mc_passes=args.mc if args.uncertainty else 0,
              sigma_definition="sqrt(aleatoric + epistemic variance)")
    return EXIT_OK


def cmd_perturb(args, argv) -> int:
    spec = spec_for(args.family, args.level)
    names, x = D.load_images(Path(args.inp))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("perturb", argv, args.seed)
    streams = np.random.SeedSequence(args.seed).spawn(len(names))
    for name, img, ss in zip(names, x, streams):
        noisy = spec.apply(img, np.random.default_rng(ss))
        D.write_rt(out / f"{name}.rt", noisy)
        man.add(out / f"{name}.rt")
    man.write(out / "manifest.json", perturbation=asdict(spec))
    return EXIT_OK


def cmd_evaluate(args, argv) -> int:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    bad = [f for f in families if f not in FAMILIES]
    if bad or not families:
        raise UsageError(f"unknown families {bad}; choose from {FAMILIES}")
    g_ab, g_ba, cfg = load_generators(args.ckpt)
    gen = g_ab if args.direction == "a2b" else g_ba
    _, x = D.load_images(_image_folder(Path(args.data), args.direction))
    report_path = Path(args.out)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    man = Manifest("evaluate", argv, args.seed, cfg.to_dict())

    def model(batch):
        return generator_outputs(gen, batch)[0]

    rng = np.random.default_rng(args.seed)
    curves = []
    for fam in families:
        sched = level_schedule(fam)
        c_mse, c_ssim = robustness_curves(model, x, sched, rng)
        curves.append({"family": fam, "level_names": [s.level for s in sched], "levels": c_mse.levels,
                       "mse": c_mse.scores, "ssim": c_ssim.scores, "amse": c_mse.area, "assim": c_ssim.area})
    report = {"schema_version": 1, "checkpoint": str(args.ckpt), "direction": args.direction,
              "n_images": int(len(x)), "seed": args.seed, "curves": curves, "config": cfg.to_dict()}
    _write_json(report_path, report)
    csv_path = report_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "level", "eta", "mse", "ssim"])
        for c in curves:
            for name, eta, m, s in zip(c["level_names"], c["levels"], c["mse"], c["ssim"]):
                w.writerow([c["family"], name, repr(eta), repr(m), repr(s)])
    plot_paths = []
    for metric in ("mse", "ssim"):
        p = report_path.with_name(f"{report_path.stem}_{metric}.png")
        series = {c["family"]: ([0, 1, 2, 3], c[metric]) for c in curves}
        plots.line_chart(p, series, title=f"{metric.upper()} vs clean-input output",
                         xlabel="noise level (NL0-NL3)", ylabel=metric)
        plot_paths.append(p)
    man.add(report_path, csv_path, *plot_paths)
    man.write(report_path.with_name("manifest.json"))
    return EXIT_OK


def cmd_uncertainty_corr(args, argv) -> int:
    g_ab, g_ba, cfg = load_generators(args.ckpt)
    gen = g_ab if args.direction == "a2b" else g_ba
    root = Path(args.paired_eval)
    src = root / ("domainA" if args.direction == "a2b" else "domainB")
    dst = root / ("domainB" if args.direction == "a2b" else "domainA")
    names_x, x = D.load_images(src)
    names_y, y = D.load_images(dst)
    if names_x != names_y:
        raise DataError("paired evaluation folders must hold identically named images")
    pred = predict(gen, x, args.mc, np.random.default_rng(args.seed))
    st = uncertainty_residual_stats(pred.mean, y, pred.maps.total)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("uncertainty-corr", argv, args.seed, cfg.to_dict())
    with open(out / "scatter.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "mean_abs_residual", "mean_sigma"])
        for name, r, s in zip(names_x, st.mean_residual, st.mean_sigma):
            w.writerow([name, repr(float(r)), repr(float(s))])
    _write_json(out / "stats.json", {"n_images": len(names_x), "pearson": st.pearson, "spearman": st.spearman,
                                     "uncertainty_score": "per-image mean of sigma = sqrt(total variance)",
                                     "direction": args.direction, "mc_passes": args.mc})
    plots.scatter_chart(out / "scatter.png", st.mean_residual, st.mean_sigma,
                        title=f"residual vs uncertainty (r = {st.pearson:.3f})",
                        xlabel="mean |residual|", ylabel="mean sigma")
    man.add(out / "scatter.csv", out / "stats.json", out / "scatter.png")
    man.write(out / "manifest.json")
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    out = Path(args.out)
    if args.paired:
        a, b = D.synth_paired(args.n, args.size, args.seed)
        ds = D.UnpairedDataset(a, b, [f"img{i:05d}" for i in range(args.n)], [f"img{i:05d}" for i in range(args.n)])
    else:
        ds = D.synth_shapes_dataset(args.n, args.size, args.seed)
    D.save_dataset(out, ds, args.format)
    man = Manifest("synth", argv, args.seed)
    man.add(*sorted((out / "domainA").iterdir()), *sorted((out / "domainB").iterdir()))
    man.write(out / "manifest.json", paired=args.paired)
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ugac", description="Uncertainty-aware unpaired image translation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train both generators and discriminators")
    t.add_argument("--config", help="JSON run config with train/generator/discriminator sections")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset root holding domainA/ and domainB/")
    src.add_argument("--synth", type=int, metavar="N", help="train on N synthetic images per domain")
    t.add_argument("--size", type=int, default=64, help="synthetic image size (default 64)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="translate a folder of images")
    tr.add_argument("--ckpt", required=True)
    tr.add_argument("--in", dest="inp", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    tr.add_argument("--uncertainty", action="store_true", help="also write alpha, beta and sigma maps")
    tr.add_argument("--mc", type=int, default=0, metavar="T",
                    help=f"MC-dropout passes for epistemic variance (0 = off; typical {DEFAULT_MC_PASSES})")
    tr.add_argument("--seed", type=int, default=0)
    tr.set_defaults(func=cmd_translate)

    pe = sub.add_parser("perturb", help="corrupt a folder of images at one noise level")
    pe.add_argument("--in", dest="inp", required=True)
    pe.add_argument("--family", choices=FAMILIES, required=True)
    pe.add_argument("--level", choices=LEVELS, required=True)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_perturb)

    ev = sub.add_parser("evaluate", help="robustness curves (AMSE / ASSIM) under input noise")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True, help="image folder, or dataset root")
    ev.add_argument("--families", default=",".join(FAMILIES))
    ev.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", required=True, help="report JSON path")
    ev.set_defaults(func=cmd_evaluate)

    uc = sub.add_parser("uncertainty-corr", help="correlate per-image uncertainty with residuals")
    uc.add_argument("--ckpt", required=True)
    uc.add_argument("--paired-eval", required=True, help="root with aligned domainA/ and domainB/")
    uc.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    uc.add_argument("--mc", type=int, default=0, metavar="T")
    uc.add_argument("--seed", type=int, default=0)
    uc.add_argument("--out", required=True)
    uc.set_defaults(func=cmd_uncertainty_corr)

    sy = sub.add_parser("synth", help="write the synthetic shapes dataset")
    sy.add_argument("--n", type=int, required=True)
    sy.add_argument("--size", type=int, default=64)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--paired", action="store_true", help="domain B is the outline of the same A image")
    sy.add_argument("--format", choices=("rt", "png"), default="rt")
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ugac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"ugac: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DomainError, FloatingPointError) as exc:
        print(f"ugac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"ugac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
