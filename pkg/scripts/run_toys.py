"""Build every constructive toy solution and print its recall table.

    python3 scripts/run_toys.py --out runs/toys
    python3 scripts/run_toys.py --out runs/toys --quick   # shear search with 20 restarts
"""

from __future__ import annotations

import argparse
from pathlib import Path

from foldnet.experiment import run_toy
from foldnet.geometry import ChainViolation

TOYS = [
    ("egg_fold", {"N": 2}),
    ("egg_fold", {"N": 3}),
    ("egg_fold", {"N": 5}),
    ("egg_fold", {"N": 2, "offset": 1.1}),
    ("egg_shear", {}),
    ("squash_chain", {"shape": "half"}),
    ("squash_chain", {"shape": "full"}),
]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/toys"))
    p.add_argument("--quick", action="store_true", help="fewer shear restarts")
    args = p.parse_args()

    for kind, params in TOYS:
        params = dict(params)
        if kind == "egg_shear" and args.quick:
            params["restarts"] = 20
        tag = "_".join([kind] + [f"{k}{v}" for k, v in params.items()])
        try:
            art = run_toy(kind, params, args.out / tag)
        except ChainViolation as exc:
            print(f"{tag}: rejected ({exc})")
            continue
        for r in art.recalls:
            print(f"{tag}: {r['variant']} class {r['class']} recall {r['recall']:.4f}")


if __name__ == "__main__":
    main()
