"""End-to-end runs: poker pipeline stages per seed, aggregate report, toy constructions.

Run directory layout::

    <out>/config.json
    <out>/seed_<s>/model.json, train.json, pca.csv, dips.csv, angles.csv,
                   tuning.csv, analysis.json, ablation.csv, status.json
    <out>/report.json
    <out>/plots/*.svg
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, config_from_dict
from .data import EggSpec, LabeledDataset, generate_egg, generate_poker, load_uci_poker
from .network import Network, atomic_write_text, forward, init_network, load_network, save_network, train
from .observables import (
    DipReport,
    ablation_experiment,
    angle_report,
    class_subsample,
    dip_report,
    layer_pcas,
    score_network,
    tuning_histograms,
)
from .pca import dimensionality

log = logging.getLogger(__name__)

REPORT_VERSION = "1.0"


# --- small io helpers ------------------------------------------------------


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path: str | Path) -> list[dict[str, str]]:
    """Rows of a CSV artifact; a missing or empty file is an error naming the file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty artifact: {path}")
    return rows


def write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def seed_dir(out: str | Path, seed: int) -> Path:
    return Path(out) / f"seed_{seed}"


# --- data ------------------------------------------------------------------


def prepare_data(cfg: ExperimentConfig, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """(training set, analysis set) for one seed, deterministic in (config, seed).

    Standardisation statistics come from the training part only.
    """
    d = cfg.dataset
    data_seed = seed + d.seed_offset
    if d.kind == "poker":
        ds = generate_poker(d.n_samples, seed=data_seed, mode=d.mode)
    elif d.kind == "uci":
        ds = load_uci_poker(d.path).dataset
    else:
        ds = generate_egg(EggSpec(dim=d.egg_dim, n_per_class=d.n_samples // 2, seed=data_seed))
    if ds.dim != cfg.widths[0]:
        raise ConfigError(f"widths[0]={cfg.widths[0]} does not match data dimension {ds.dim}")
    if d.eval_split is not None:
        training, evaluation = ds.split(d.eval_split, data_seed)
    else:
        training = evaluation = ds
    if d.standardize:
        training = training.standardized()
        mean = np.asarray(training.provenance["standardization"]["mean"])
        std = np.asarray(training.provenance["standardization"]["std"])
        evaluation = training if d.eval_split is None else evaluation.standardized(mean, std)
    return training, evaluation


# --- stages ----------------------------------------------------------------


def train_stage(cfg: ExperimentConfig, seed: int, out: str | Path) -> Network:
    sd = seed_dir(out, seed)
    sd.mkdir(parents=True, exist_ok=True)
    training, _ = prepare_data(cfg, seed)
    net = init_network(cfg.widths, seed)
    net, rep = train(net, training, cfg.train.schedule(seed))
    net.meta["standardization"] = training.provenance.get("standardization")
    save_network(net, sd / "model.json")
    write_json(sd / "train.json", rep.to_dict())
    return net


def _dip_rows(report: DipReport):
    for l in report.layers:
        for i, row in enumerate(report.dips[l]):
            yield [l, i, "trained", "", *row, float(row.max()), int(row.max() > report.surrogate_max[l])]
        for j, sur in enumerate(report.surrogate_dips[l]):
            for i, row in enumerate(sur):
                yield [l, i, "surrogate", j, *row, float(row.max()), ""]


def load_dip_report(path: str | Path, surrogate_seeds: Sequence[int] | None = None) -> DipReport:
    """Rebuild a :class:`DipReport` from ``dips.csv``."""
    rows = read_csv(path)
    classes = [int(k[len("dip_c"):]) for k in rows[0] if k.startswith("dip_c")]
    layers = sorted({int(r["layer"]) for r in rows})
    dips, sdips, smax = {}, {}, {}
    for l in layers:
        tr = [r for r in rows if int(r["layer"]) == l and r["source"] == "trained"]
        sr = [r for r in rows if int(r["layer"]) == l and r["source"] == "surrogate"]
        dips[l] = np.array([[float(r[f"dip_c{c}"]) for c in classes] for r in tr])
        n_sur = len({r["surrogate"] for r in sr})
        s = np.array([[float(r[f"dip_c{c}"]) for c in classes] for r in sr])
        sdips[l] = s.reshape(n_sur, len(tr), len(classes)) if n_sur else np.zeros((0,) + dips[l].shape)
        smax[l] = float(s.max()) if n_sur else math.inf
    return DipReport(classes, layers, dips, sdips, smax)


def analyze_stage(cfg: ExperimentConfig, seed: int, out: str | Path, net: Network | None = None) -> dict:
    """PCA, dips (trained and surrogate), angles and tuning histograms for one seed."""
    a = cfg.analysis
    sd = seed_dir(out, seed)
    net = load_network(sd / "model.json") if net is None else net
    _, ds = prepare_data(cfg, seed)

    pcas = layer_pcas(net, ds.inputs, chunk=a.chunk, eps_rel=a.eps_rel)
    pca_rows = []
    for (stage, l), s in sorted(pcas.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        tr = s.trace
        for i, lam in enumerate(s.eigenvalues):
            pca_rows.append([stage, l, i, float(lam), float(lam / tr) if tr > 0 else 0.0])
    write_csv(sd / "pca.csv", ["stage", "layer", "index", "eigenvalue", "relative"], pca_rows)
    dims = {f"{stage}_{l}": dimensionality(s, a.eps_rel) for (stage, l), s in pcas.items()}

    dr = dip_report(net, ds, a.classes, a.surrogate_seeds, max_per_class=a.max_per_class, sample_seed=seed)
    header = ["layer", "neuron", "source", "surrogate"] + [f"dip_c{c}" for c in a.classes] + ["max_dip", "large"]
    write_csv(sd / "dips.csv", header, _dip_rows(dr))

    angle_rows, angle_summary = [], {}
    for l in range(net.n_hidden):
        source = pcas[("input", -1)] if l == 0 else pcas[("post", l - 1)]
        ar = angle_report(net, l, source, a.eps_rel, a.angle_space)
        angle_rows += [[l, i, float(t), ar.subspace_dim, ar.space] for i, t in enumerate(ar.theta)]
        angle_summary[str(l)] = {"min": float(ar.theta.min()), "median": float(np.median(ar.theta)), "subspace_dim": ar.subspace_dim}
    write_csv(sd / "angles.csv", ["layer", "neuron", "theta", "subspace_dim", "space"], angle_rows)

    rows = class_subsample(ds.labels, a.classes, a.max_per_class, seed)
    order = np.concatenate([rows[c] for c in a.classes])
    tc = tuning_histograms(forward(net, ds.inputs[order]), ds.labels[order], a.classes, a.bins)
    tuning_rows = []
    for l in sorted(tc.counts):
        for i in range(tc.counts[l].shape[0]):
            e = tc.edges[l][i]
            for ci, c in enumerate(tc.classes):
                for b, n in enumerate(tc.counts[l][i, ci]):
                    tuning_rows.append([l, i, c, b, float(e[b]), float(e[b + 1]), int(n)])
    write_csv(sd / "tuning.csv", ["layer", "neuron", "class", "bin", "lo", "hi", "count"], tuning_rows)

    dip_summary = {}
    for l in dr.layers:
        trained = dr.max_dip(l)
        sur = dr.surrogate_dips[l].max(axis=2)  # (surrogates, neurons)
        dip_summary[str(l)] = {
            "median_trained": float(np.median(trained)),
            "median_surrogate": float(np.median(sur)) if sur.size else math.nan,
            "surrogate_max": dr.surrogate_max[l],
            "n_large": int(dr.large(l).sum()),
        }
    summary = {
        "seed": seed,
        "f1": score_network(net, ds, None, a.excluded),
        "n_analysed": len(ds),
        "dimensionality": dims,
        "dips": dip_summary,
        "angles": angle_summary,
    }
    write_json(sd / "analysis.json", summary)
    return summary


def ablate_stage(cfg: ExperimentConfig, seed: int, out: str | Path, net: Network | None = None) -> list[dict]:
    a = cfg.analysis
    sd = seed_dir(out, seed)
    net = load_network(sd / "model.json") if net is None else net
    _, ds = prepare_data(cfg, seed)
    report = load_dip_report(sd / "dips.csv")
    results = ablation_experiment(net, ds, report, a.k, excluded=a.excluded)
    write_csv(
        sd / "ablation.csv",
        ["layer", "k", "f1_intact", "f1_large_silenced", "f1_small_silenced", "large_neurons", "small_neurons"],
        [[r.layer, r.k, r.f1_intact, r.f1_large_silenced, r.f1_small_silenced,
          " ".join(map(str, r.large_neurons)), " ".join(map(str, r.small_neurons))] for r in results],
    )
    return [{k: v for k, v in vars(r).items()} for r in results]


SEED_ARTIFACTS = ("model.json", "train.json", "pca.csv", "dips.csv", "angles.csv", "tuning.csv", "analysis.json", "ablation.csv")


def run_seed(cfg: ExperimentConfig, seed: int, out: str | Path) -> dict:
    """All stages for one seed. Failures are caught and recorded in ``status.json``."""
    sd = seed_dir(out, seed)
    sd.mkdir(parents=True, exist_ok=True)
    stage = "train"
    try:
        net = train_stage(cfg, seed, out)
        stage = "analyze"
        analyze_stage(cfg, seed, out, net)
        stage = "ablate"
        ablate_stage(cfg, seed, out, net)
        status = {"seed": seed, "status": "ok"}
    except Exception as exc:  # noqa: BLE001 - recorded, run continues with other seeds
        log.error("seed %d failed in %s: %s", seed, stage, exc)
        status = {"seed": seed, "status": "failed", "stage": stage, "error": f"{type(exc).__name__}: {exc}",
                  "traceback": traceback.format_exc().splitlines()[-3:]}
    write_json(sd / "status.json", status)
    return status


def write_report(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Aggregate per-seed artifacts into ``report.json`` with artifact checksums."""
    out = Path(out)
    seeds, artifacts = [], {}
    for s in cfg.seeds:
        sd = seed_dir(out, s)
        status_path = sd / "status.json"
        status = json.loads(status_path.read_text()) if status_path.is_file() else {"seed": s, "status": "missing"}
        entry = dict(status)
        if (sd / "analysis.json").is_file():
            entry["analysis"] = json.loads((sd / "analysis.json").read_text())
        if (sd / "ablation.csv").is_file():
            entry["ablation"] = [
                {k: (float(v) if k.startswith("f1") else int(v) if k in ("layer", "k") else v) for k, v in r.items()}
                for r in read_csv(sd / "ablation.csv")
            ]
        if (sd / "analysis.json").is_file() and status.get("status") == "missing":
            entry["status"] = "ok"
        seeds.append(entry)
        for name in SEED_ARTIFACTS:
            if (sd / name).is_file():
                artifacts[f"seed_{s}/{name}"] = sha256(sd / name)
    report = {
        "version": REPORT_VERSION,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "aggregate": aggregate(seeds, out),
        "artifacts": artifacts,
    }
    write_json(out / "report.json", report)
    return report


def aggregate(seeds: list[dict], out: Path) -> dict:
    ok = [s for s in seeds if "analysis" in s]
    agg: dict = {"n_seeds": len(seeds), "n_ok": len(ok), "failed": [s["seed"] for s in seeds if s.get("status") == "failed"]}
    if not ok:
        return agg
    f1 = [s["analysis"]["f1"] for s in ok]
    agg["f1_mean"] = float(np.mean(f1))
    agg["f1_std"] = float(np.std(f1))
    layers = sorted(ok[0]["analysis"]["dips"], key=int)
    agg["dip_shift_seeds"] = {
        l: sum(s["analysis"]["dips"][l]["median_trained"] > s["analysis"]["dips"][l]["median_surrogate"] for s in ok)
        for l in layers
    }
    # surrogate maximum pooled across seeds, and large-dip counts against it
    pooled = {l: max(s["analysis"]["dips"][l]["surrogate_max"] for s in ok) for l in layers}
    agg["surrogate_max_pooled"] = pooled
    counts = {}
    for s in ok:
        path = seed_dir(out, s["seed"]) / "dips.csv"
        if path.is_file():
            rep = load_dip_report(path)
            counts[str(s["seed"])] = {str(l): int(rep.large(l, pooled[str(l)]).sum()) for l in rep.layers}
    agg["n_large_pooled"] = counts
    agg["min_angle"] = {l: min(s["analysis"]["angles"][l]["min"] for s in ok) for l in sorted(ok[0]["analysis"]["angles"], key=int)}
    abl = [s["ablation"] for s in ok if "ablation" in s]
    if abl:
        per_layer = {}
        for rows in abl:
            for r in rows:
                per_layer.setdefault(str(r["layer"]), []).append(r)
        agg["ablation"] = {
            l: {
                "f1_intact_mean": float(np.mean([r["f1_intact"] for r in rs])),
                "f1_large_mean": float(np.mean([r["f1_large_silenced"] for r in rs])),
                "f1_small_mean": float(np.mean([r["f1_small_silenced"] for r in rs])),
                "large_below_small_seeds": int(sum(r["f1_large_silenced"] < r["f1_small_silenced"] for r in rs)),
            }
            for l, rs in per_layer.items()
        }
    return agg


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, plots: bool = True) -> dict:
    cfg.validate()
    out = Path(out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_dict())
    for s in cfg.seeds:
        log.info("seed %d", s)
        run_seed(cfg, s, out)
    report = write_report(cfg, out)
    if plots and report["aggregate"]["n_ok"]:
        from .plots import render_plots

        render_plots(out)
    return report


def load_run_config(out: str | Path) -> ExperimentConfig:
    path = Path(out) / "config.json"
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact: {path}")
    return config_from_dict(json.loads(path.read_text()))


# --- toys ------------------------------------------------------------------


@dataclass
class ToyArtifacts:
    kind: str
    recalls: list[dict]
    files: dict[str, str] = field(default_factory=dict)


def _recall_rows(variant: str, sep) -> list[dict]:
    return [{"variant": variant, "class": c, "recall": r, "threshold": sep.threshold} for c, r in sorted(sep.recall.items())]


def run_toy(kind: str, params: dict | None = None, out: str | Path | None = None) -> ToyArtifacts:
    """Build a constructive solution, evaluate it and write a recall table plus a figure.

    An invalid squash chain raises :class:`~foldnet.geometry.ChainViolation` before any
    network is written.
    """
    from . import geometry as geo

    params = dict(params or {})
    out = Path(out) if out is not None else None

    def take(name, default):
        return params.pop(name, default)

    figure_data = {}
    if kind == "egg_fold":
        N = int(take("N", 2))
        egg = EggSpec(dim=N, r_in=take("r_in", 1.0), r_mid=take("r_mid", 1.2), r_out=take("r_out", 2.0),
                      n_per_class=int(take("n_per_class", 5000)), seed=int(take("seed", 0)))
        offset = float(take("offset", 0.0))
        _no_extra(params)
        net = geo.build_fold_solution(N, egg, offset)
        ds = generate_egg(egg)
        sep = geo.evaluate_separability(net, ds, readout=0, threshold=0.0, orientation=1)
        recalls = _recall_rows(f"fold N={N}", sep)
        nets = {"model.json": net}
        figure_data = {"dataset": ds, "planes": net.layers[0], "egg": egg} if N == 2 else {}
    elif kind == "egg_shear":
        depth = int(take("depth", 7))
        control = int(take("control_depth", 1))
        restarts = int(take("restarts", 300))
        first = int(take("seed", 0))
        _no_extra(params)
        res = geo.build_shear_network(depth, restarts=restarts, first_seed=first)
        recalls = _recall_rows(f"shear depth={depth}", res.separability)
        nets = {"model.json": res.net}
        if control:
            ctrl = geo.build_shear_network(control, restarts=restarts, first_seed=first)
            recalls += _recall_rows(f"shear depth={control}", ctrl.separability)
            nets["control.json"] = ctrl.net
        ds = generate_egg(EggSpec(dim=2))
        figure_data = {"dataset": ds, "net": res.net}
    elif kind == "squash_chain":
        shape = take("shape", "half")
        n_edges = int(take("n_edges", 6 if shape == "half" else 12))
        n = int(take("n", 10_000))
        seed = int(take("seed", 0))
        _no_extra(params)
        if shape == "half":
            chain, verts = geo.arc_chain(n_edges)
        elif shape == "full":
            chain, verts = geo.arc_chain(n_edges, start=math.pi, stop=-math.pi)
        else:
            raise ValueError(f"unknown chain shape {shape!r}")
        verdict = geo.validate_squash_chain(chain)
        if not verdict:
            raise geo.ChainViolation(verdict)
        ds = geo.half_disc_dataset(n, seed=seed)
        net = geo.build_squash_chain_network(chain, data_bound=2.0)
        sep = geo.evaluate_separability(net, ds)
        recalls = _recall_rows(f"squash chain {shape} ({n_edges} edges)", sep)
        nets = {"model.json": net}
        figure_data = {"dataset": ds, "chain": chain, "vertices": verts, "net": net}
    else:
        raise ValueError(f"unknown toy {kind!r}")

    art = ToyArtifacts(kind, recalls)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for name, net in nets.items():
            save_network(net, out / name)
            art.files[name] = str(out / name)
        write_csv(out / "recalls.csv", ["variant", "class", "recall", "threshold"],
                  [[r["variant"], r["class"], r["recall"], r["threshold"]] for r in recalls])
        art.files["recalls.csv"] = str(out / "recalls.csv")
        if figure_data:
            from .plots import toy_figure, save_svg

            save_svg(toy_figure(kind, **figure_data), out / f"{kind}.svg")
            art.files[f"{kind}.svg"] = str(out / f"{kind}.svg")
    return art


def _no_extra(params: dict) -> None:
    if params:
        raise ValueError(f"unknown toy parameters {sorted(params)}")
