"""Deterministic SVG figures for run directories and toy constructions."""

from __future__ import annotations

import io
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import read_csv, seed_dir  # noqa: E402
from .network import forward  # noqa: E402

plt.rcParams["svg.hashsalt"] = "foldnet"
plt.rcParams["svg.fonttype"] = "path"

CLASS_COLORS = ("#1f77b4", "#d62728")


def save_svg(fig, path: str | Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def _by_layer(rows, key="layer"):
    out = defaultdict(list)
    for r in rows:
        out[int(r[key])].append(r)
    return dict(sorted(out.items()))


def pca_figure(rows):
    """Relative eigenvalue spectra; one bar series per (pre/post, hidden layer)."""
    series = {}
    for r in rows:
        if r["stage"] in ("pre", "post"):
            series.setdefault((int(r["layer"]), r["stage"]), []).append(float(r["relative"]))
    if not series:
        raise ValueError("pca table has no hidden-layer rows")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / len(series)
    for j, ((l, stage), vals) in enumerate(sorted(series.items(), key=lambda kv: (kv[0][0], kv[0][1] != "pre"))):
        vals = np.clip(np.asarray(vals), 1e-18, None)
        ax.bar(np.arange(len(vals)) + j * width, np.log10(vals), width, label=f"layer {l + 1} {stage}")
    ax.axhline(-6, color="k", lw=0.8, ls="--")
    ax.set_xlabel("principal component")
    ax.set_ylabel("log10 relative variance")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def dip_figure(rows):
    layers = _by_layer(rows)
    fig, axes = plt.subplots(1, len(layers), figsize=(3.5 * len(layers), 3), squeeze=False)
    for ax, (l, rs) in zip(axes[0], layers.items()):
        trained = [float(r["max_dip"]) for r in rs if r["source"] == "trained"]
        sur = [float(r["max_dip"]) for r in rs if r["source"] == "surrogate"]
        bins = np.linspace(0, max(trained + sur) * 1.05 or 1.0, 30)
        ax.hist(sur, bins, color="0.6", alpha=0.7, label="surrogate")
        ax.hist(trained, bins, histtype="step", color="k", label="trained")
        ax.set_title(f"layer {l + 1}")
        ax.set_xlabel("max dip over classes")
        ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def angle_figure(rows):
    layers = _by_layer(rows)
    fig, axes = plt.subplots(1, len(layers), figsize=(3.5 * len(layers), 3), squeeze=False)
    for ax, (l, rs) in zip(axes[0], layers.items()):
        ax.hist([float(r["theta"]) for r in rs], np.linspace(0, np.pi / 2, 31), color="0.3")
        ax.set_title(f"layer {l + 1}")
        ax.set_xlabel("angle to data subspace (rad)")
    fig.tight_layout()
    return fig


def tuning_figure(tuning_rows, dip_rows, per_group: int = 3):
    """Class-conditional preactivation histograms of the largest- and smallest-dip neurons."""
    dips = defaultdict(dict)
    for r in dip_rows:
        if r["source"] == "trained":
            dips[int(r["layer"])][int(r["neuron"])] = float(r["max_dip"])
    curves = defaultdict(lambda: defaultdict(list))
    for r in tuning_rows:
        curves[(int(r["layer"]), int(r["neuron"]))][int(r["class"])].append((float(r["lo"]), float(r["hi"]), int(r["count"])))
    layers = sorted(dips)
    fig, axes = plt.subplots(len(layers), 2 * per_group, figsize=(2.2 * 2 * per_group, 2 * len(layers)), squeeze=False)
    for row, l in enumerate(layers):
        order = sorted(dips[l], key=lambda i: (-dips[l][i], i))
        picks = order[:per_group] + order[::-1][:per_group]
        for ax, i in zip(axes[row], picks):
            for c, bins in sorted(curves[(l, i)].items()):
                lo = np.array([b[0] for b in bins])
                hi = np.array([b[1] for b in bins])
                cnt = np.array([b[2] for b in bins], dtype=float)
                dens = cnt / max(cnt.sum(), 1) / np.where(hi > lo, hi - lo, 1)
                ax.step(np.r_[lo, hi[-1]], np.r_[dens, dens[-1]], where="post", lw=0.8, label=str(c))
            ax.axvline(0, color="k", lw=0.5)
            ax.set_title(f"L{l + 1} n{i} dip {dips[l][i]:.3f}", fontsize=7)
            ax.tick_params(labelsize=6)
    axes[0][0].legend(fontsize=5, title="class", title_fontsize=5)
    fig.tight_layout()
    return fig


def ablation_figure(rows):
    fig, ax = plt.subplots(figsize=(4.5, 3))
    layers = [int(r["layer"]) for r in rows]
    x = np.arange(len(rows))
    for j, (key, label, color) in enumerate([("f1_intact", "intact", "0.2"), ("f1_large_silenced", "large-dip silenced", "#d62728"), ("f1_small_silenced", "small-dip silenced", "#1f77b4")]):
        ax.bar(x + (j - 1) * 0.27, [float(r[key]) for r in rows], 0.27, color=color, label=label)
    ax.set_xticks(x, [f"layer {l + 1}" for l in layers])
    ax.set_ylabel("macro F1")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _thin(ds, n=2000, seed=0):
    idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:n])
    return ds.inputs[idx], ds.labels[idx]


def _draw_line(ax, w, b, lim=2.2, **kw):
    """Line w.x + b = 0 within the square [-lim, lim]^2."""
    w = np.asarray(w, dtype=float)
    if abs(w[1]) > abs(w[0]):
        xs = np.array([-lim, lim])
        ax.plot(xs, -(b + w[0] * xs) / w[1], **kw)
    else:
        ys = np.array([-lim, lim])
        ax.plot(-(b + w[1] * ys) / w[0], ys, **kw)


def toy_figure(kind, dataset, **extra):
    X, y = _thin(dataset)
    if kind == "egg_fold":
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.4))
        ax = axes[0]
        for c in (0, 1):
            ax.scatter(*X[y == c].T, s=2, color=CLASS_COLORS[c])
        lay = extra["planes"]
        for w, b in zip(lay.weights, lay.biases):
            _draw_line(ax, w, b, color="k", lw=0.8)
        ax.set_xlim(-2.2, 2.2)
        ax.set_ylim(-2.2, 2.2)
        ax.set_aspect("equal")
        ax.set_title("input and hidden hyperplanes", fontsize=8)
        h = np.maximum(X @ lay.weights.T + lay.biases, 0).sum(axis=1)
        axes[1].hist([h[y == 0], h[y == 1]], 40, color=CLASS_COLORS, stacked=True)
        axes[1].set_xlabel("sum of hidden activations")
    elif kind == "egg_shear":
        net = extra["net"]
        tr = forward(net, X)
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.4))
        for c in (0, 1):
            axes[0].scatter(*X[y == c].T, s=2, color=CLASS_COLORS[c])
            axes[1].scatter(*tr.post[-1][y == c].T, s=2, color=CLASS_COLORS[c])
        axes[0].set_aspect("equal")
        axes[0].set_title("input", fontsize=8)
        axes[1].set_title(f"after {net.n_hidden} tied layers", fontsize=8)
    elif kind == "squash_chain":
        net, verts = extra["net"], extra["vertices"]
        Z = forward(net, X).logits
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.4))
        for c in (0, 1):
            axes[0].scatter(*X[y == c].T, s=2, color=CLASS_COLORS[c])
            axes[1].scatter(*Z[y == c].T, s=2, color=CLASS_COLORS[c])
        axes[0].plot(*verts.T, color="k", lw=1)
        for u, c in zip(extra["chain"].normals, extra["chain"].offsets):
            _draw_line(axes[0], u, -c, color="0.5", lw=0.6, ls="--")
        axes[0].set_xlim(-2.2, 2.2)
        axes[0].set_ylim(-0.2, 2.2)
        axes[0].set_aspect("equal")
        axes[1].set_aspect("equal")
        axes[0].set_title("input, arc and squash planes", fontsize=8)
        axes[1].set_title("after the chain", fontsize=8)
    else:
        raise ValueError(f"unknown toy {kind!r}")
    fig.tight_layout()
    return fig


def render_plots(run_dir: str | Path) -> list[Path]:
    """Render every per-seed figure of a run directory into ``<run>/plots``."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.is_file():
        raise FileNotFoundError(f"missing artifact: {cfg_path}")
    seeds = json.loads(cfg_path.read_text())["seeds"]
    out = run_dir / "plots"
    out.mkdir(exist_ok=True)
    written = []
    for s in seeds:
        sd = seed_dir(run_dir, s)
        if not sd.is_dir():
            continue
        status = sd / "status.json"
        if status.is_file() and json.loads(status.read_text()).get("status") == "failed":
            continue
        dips = read_csv(sd / "dips.csv")
        figures = {
            "pca": pca_figure(read_csv(sd / "pca.csv")),
            "dips": dip_figure(dips),
            "angles": angle_figure(read_csv(sd / "angles.csv")),
            "tuning": tuning_figure(read_csv(sd / "tuning.csv"), dips),
            "ablation": ablation_figure(read_csv(sd / "ablation.csv")),
        }
        for name, fig in figures.items():
            path = out / f"seed_{s}_{name}.svg"
            save_svg(fig, path)
            written.append(path)
    if not written:
        raise ValueError(f"no successful seeds to plot in {run_dir}")
    return written
