"""Train, analyse and ablate poker networks for a profile, then print the aggregate.

    python3 scripts/run_poker.py --profile desk --out runs/poker-desk
    python3 scripts/run_poker.py --profile paper --out runs/poker --seed 0 --seed 1
"""

from __future__ import annotations

import argparse
import json
import logging

from foldnet.config import PROFILES, load_config
from foldnet.experiment import run_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--config", help="JSON config layered over the profile")
    p.add_argument("--out", help="run directory (default: out_dir of the config)")
    p.add_argument("--seed", type=int, action="append", help="restrict to these seeds")
    p.add_argument("--no-plots", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, args.profile) if args.config else PROFILES[args.profile]()
    if args.seed:
        cfg.seeds = list(dict.fromkeys(args.seed))
    if args.out:
        cfg.out_dir = args.out
    report = run_experiment(cfg, cfg.out_dir, plots=not args.no_plots)
    print(json.dumps(report["aggregate"], indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
