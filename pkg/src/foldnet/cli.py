"""Command line interface.

Exit codes: 0 success, 2 validation error (bad config, bad input files, invalid
squash chain, missing artifacts), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, config_from_dict, resolve_config
from .data import ParseError
from .network import ModelFormatError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

TOYS = ("egg_fold", "egg_shear", "squash_chain")


def _common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config; keys not given fall back to the profile")
    p.add_argument("--profile", choices=("paper", "desk"), help="base settings (default: paper)")
    p.add_argument("--out", type=Path, help="run directory (default: out_dir from the config)")
    p.add_argument("--eval-split", type=float, dest="eval_split", help="hold out this fraction for analysis")
    if seed:
        p.add_argument("--seed", type=int, action="append", help="restrict to this seed (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldnet", description="Folding analysis of ReLU classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write the dataset of one seed as CSV")
    _common(p)
    p.add_argument("--file", type=Path, help="output CSV (default: <out>/data_seed_<s>.csv)")

    for name, text in [("train", "train networks"), ("analyze", "PCA, dips, angles, tuning"),
                       ("ablate", "silence large/small-dip neurons"), ("run", "all stages, report and plots")]:
        _common(sub.add_parser(name, help=text))

    _common(sub.add_parser("report", help="aggregate a run directory into report.json"), seed=False)
    p = sub.add_parser("plot", help="render SVG figures of a run directory")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("toy", help="constructive toy solutions")
    p.add_argument("kind", choices=TOYS)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="toy parameter, e.g. N=3")
    p.add_argument("--out", type=Path, help="directory for model, recall table and figure")
    return parser


def _config(args) -> tuple[ExperimentConfig, Path]:
    existing = args.out / "config.json" if args.out else None
    if args.config is None and existing is not None and existing.is_file() and args.profile is None:
        cfg = config_from_dict(json.loads(existing.read_text()))
    else:
        cfg = resolve_config(args.config, args.profile)
    if args.eval_split is not None:
        cfg.dataset.eval_split = args.eval_split
    out = args.out or Path(cfg.out_dir)
    cfg.out_dir = str(out)
    cfg.validate()
    return cfg, out


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    return list(dict.fromkeys(args.seed)) if getattr(args, "seed", None) else list(cfg.seeds)


def _write_config(cfg: ExperimentConfig, out: Path, seeds: list[int]) -> None:
    from .experiment import write_json

    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    old = json.loads(path.read_text()).get("seeds", []) if path.is_file() else []
    cfg.seeds = sorted(set(old) | set(seeds))
    write_json(path, cfg.to_dict())


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _dispatch(args) -> int:
    from . import experiment as ex

    if args.command == "toy":
        from .geometry import ChainViolation

        params = dict(_parse_param(p) for p in args.param)
        try:
            art = ex.run_toy(args.kind, params, args.out)
        except ChainViolation as exc:
            v = exc.validation
            print(json.dumps({"ok": False, "step": v.step, "reason": v.reason}))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print("variant,class,recall,threshold")
        for r in art.recalls:
            print(f"{r['variant']},{r['class']},{r['recall']:.4f},{r['threshold']:.6g}")
        return EXIT_OK

    if args.command == "plot":
        from .plots import render_plots

        for path in render_plots(args.out):
            print(path)
        return EXIT_OK

    cfg, out = _config(args)
    if args.command == "report":
        if not (out / "config.json").is_file():
            ex.write_json(out / "config.json", cfg.to_dict())
        rep = ex.write_report(cfg, out)
        print(json.dumps(rep["aggregate"], indent=2, sort_keys=True))
        return EXIT_OK

    seeds = _seeds(args, cfg)
    if args.command == "gen-data":
        for s in seeds:
            training, _ = ex.prepare_data(cfg, s)
            path = args.file or out / f"data_seed_{s}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            training.save_csv(path)
            print(path)
        return EXIT_OK

    if args.command == "run":
        cfg.seeds = seeds
        rep = ex.run_experiment(cfg, out)
        print(json.dumps(rep["aggregate"], indent=2, sort_keys=True))
        return EXIT_OK if not rep["aggregate"]["failed"] else EXIT_RUNTIME

    _write_config(cfg, out, seeds)
    stage = {"train": ex.train_stage, "analyze": ex.analyze_stage, "ablate": ex.ablate_stage}[args.command]
    for s in seeds:
        result = stage(cfg, s, out)
        if args.command == "analyze":
            print(json.dumps(result, sort_keys=True))
        elif args.command == "ablate":
            for r in result:
                print(f"seed {s} layer {r['layer']}: intact {r['f1_intact']:.4f} "
                      f"large {r['f1_large_silenced']:.4f} small {r['f1_small_silenced']:.4f}")
        else:
            print(ex.seed_dir(out, s) / "model.json")
        if args.command in ("train", "ablate"):
            ex.write_json(ex.seed_dir(out, s) / "status.json", {"seed": s, "status": "ok"})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ParseError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
