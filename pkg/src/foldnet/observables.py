"""Measurements on trained networks: tuning curves, dip reports, hyperplane angles, ablations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dip import _dip_sorted
from .network import Network, SilenceMask, forward, predict, redraw_layer
from .pca import DEFAULT_EPS_REL, PcaSummary, StreamingCovariance, summarize_covariance

DEFAULT_BINS = 61
DEFAULT_EXCLUDED = (5, 8, 9)
MAX_DIP_SAMPLES = 50_000


# --- scoring ---------------------------------------------------------------


def macro_f1(predictions, labels, excluded_classes: Iterable[int] = (), n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over ``range(n_classes)`` minus ``excluded_classes``.

    A class that never occurs in either vector scores 0.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape:
        raise ValueError("predictions and labels must be aligned")
    if n_classes is None:
        n_classes = int(max(pred.max(initial=-1), lab.max(initial=-1))) + 1
    excluded = set(int(c) for c in excluded_classes)
    classes = [c for c in range(n_classes) if c not in excluded]
    if not classes:
        raise ValueError("all classes are excluded")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (lab, pred), 1)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    scores = []
    for c in classes:
        denom = 2 * tp[c] + fp[c] + fn[c]
        scores.append(2 * tp[c] / denom if denom else 0.0)
    return float(np.mean(scores))


def score_network(net: Network, dataset, mask: SilenceMask | None = None, excluded=DEFAULT_EXCLUDED) -> float:
    return macro_f1(predict(net, dataset.inputs, mask), dataset.labels, excluded, dataset.n_classes)


# --- tuning curves ---------------------------------------------------------


@dataclass
class TuningCurves:
    """Per-layer histograms: ``edges[l]`` is (neurons, bins+1), ``counts[l]`` is (neurons, classes, bins)."""

    classes: list[int]
    edges: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, np.ndarray] = field(default_factory=dict)
    samples: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)


def zero_aligned_edges(lo: float, hi: float, bins: int) -> np.ndarray:
    """``bins`` equal-width bins covering [lo, hi] and 0, with 0 on an edge."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi == lo:
        hi = lo + 1.0
    if bins == 1:
        return np.array([lo, hi])
    # a subnormal range would give zero-width bins
    w = max((hi - lo) / (bins - 1), np.finfo(np.float64).tiny)
    k0 = np.floor(lo / w)
    edges = (k0 + np.arange(bins + 1)) * w
    edges[int(-k0)] = 0.0
    edges[0] = min(edges[0], lo)
    edges[-1] = max(edges[-1], hi)
    return edges


def _class_rows(labels: np.ndarray, classes: Sequence[int]) -> dict[int, np.ndarray]:
    rows = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ValueError(f"class {c} has no samples")
        rows[int(c)] = idx
    return rows


def tuning_histograms(trace, labels, classes: Sequence[int], bins: int = DEFAULT_BINS, layers: Sequence[int] | None = None) -> TuningCurves:
    labels = np.asarray(labels)
    if len(labels) != len(trace.inputs):
        raise ValueError("trace and labels are not aligned")
    rows = _class_rows(labels, classes)
    if layers is None:
        layers = range(len(trace.pre) - 1)
    tc = TuningCurves([int(c) for c in classes])
    for l in layers:
        pre = trace.pre[l]
        width = pre.shape[1]
        lo, hi = pre.min(axis=0), pre.max(axis=0)
        edges = np.stack([zero_aligned_edges(lo[i], hi[i], bins) for i in range(width)])
        counts = np.zeros((width, len(classes), bins), dtype=np.int64)
        for ci, c in enumerate(tc.classes):
            vals = pre[rows[c]]
            for i in range(width):
                counts[i, ci] = np.histogram(vals[:, i], bins=edges[i])[0]
        tc.edges[l] = edges
        tc.counts[l] = counts
        tc.samples[l] = {c: pre[rows[c]] for c in tc.classes}
    return tc


# --- dip report ------------------------------------------------------------


def column_dips(values: np.ndarray) -> np.ndarray:
    """Dip of every column of a (samples, neurons) matrix."""
    s = np.sort(np.asarray(values, dtype=np.float64), axis=0)
    out = np.zeros(s.shape[1])
    for i in range(s.shape[1]):
        col = np.ascontiguousarray(s[:, i])
        if col[0] != col[-1]:
            out[i] = _dip_sorted(col)[0]
    return out


def class_subsample(labels: np.ndarray, classes: Sequence[int], max_per_class: int = MAX_DIP_SAMPLES, seed: int = 0) -> dict[int, np.ndarray]:
    """Sorted row indices per class, at most ``max_per_class`` each, drawn with a fixed seed."""
    rng = np.random.default_rng(seed)
    out = {}
    for c, idx in _class_rows(np.asarray(labels), classes).items():
        if idx.size > max_per_class:
            idx = np.sort(rng.choice(idx, size=max_per_class, replace=False))
        out[c] = idx
    return out


@dataclass
class DipReport:
    classes: list[int]
    layers: list[int]
    dips: dict[int, np.ndarray]  # layer -> (neurons, classes)
    surrogate_dips: dict[int, np.ndarray]  # layer -> (surrogates, neurons, classes)
    surrogate_max: dict[int, float]

    def max_dip(self, layer: int) -> np.ndarray:
        return self.dips[layer].max(axis=1)

    def large(self, layer: int, threshold: float | None = None) -> np.ndarray:
        """Boolean mask: max-over-classes dip strictly above the surrogate maximum."""
        thr = self.surrogate_max[layer] if threshold is None else threshold
        return self.max_dip(layer) > thr

    def classification(self, layer: int, threshold: float | None = None) -> list[str]:
        return ["large" if b else "small" for b in self.large(layer, threshold)]


def dip_report(
    net: Network,
    dataset,
    classes: Sequence[int],
    surrogate_seeds: Sequence[int] = (0,),
    layers: Sequence[int] | None = None,
    max_per_class: int = MAX_DIP_SAMPLES,
    sample_seed: int = 0,
) -> DipReport:
    """Per-neuron, per-class dips of hidden preactivations plus random-layer surrogates.

    The surrogate for layer ``l`` keeps layers ``< l`` as trained and redraws layer ``l``
    from the initialisation scheme, once per entry of ``surrogate_seeds``.
    """
    if layers is None:
        layers = list(range(net.n_hidden))
    for l in layers:
        if not 0 <= l < net.n_hidden:
            raise IndexError(f"layer {l} is not a hidden layer (network has {net.n_hidden})")
    if not classes:
        raise ValueError("need at least one class")
    rows = class_subsample(dataset.labels, classes, max_per_class, sample_seed)
    order = np.concatenate([rows[c] for c in classes])
    bounds = np.cumsum([0] + [rows[c].size for c in classes])
    trace = forward(net, dataset.inputs[order])
    dips, sdips, smax = {}, {}, {}
    for l in layers:
        pre = trace.pre[l]
        dips[l] = np.stack([column_dips(pre[bounds[j] : bounds[j + 1]]) for j in range(len(classes))], axis=1)
        inp = trace.layer_input(l)
        per_seed = []
        for s in surrogate_seeds:
            layer = redraw_layer(net, l, s).layers[l]
            spre = inp @ layer.weights.T + layer.biases
            per_seed.append(np.stack([column_dips(spre[bounds[j] : bounds[j + 1]]) for j in range(len(classes))], axis=1))
        sdips[l] = np.stack(per_seed) if per_seed else np.zeros((0,) + dips[l].shape)
        smax[l] = float(sdips[l].max()) if per_seed else float("inf")
    return DipReport([int(c) for c in classes], list(layers), dips, sdips, smax)


# --- angles ----------------------------------------------------------------


def subspace_angle(w, basis) -> float:
    """Angle in [0, pi/2] between vector ``w`` and the span of the orthonormal rows of ``basis``."""
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w)
    if not norm > 0:
        raise ValueError("angle to a zero vector is undefined")
    basis = np.asarray(basis, dtype=np.float64).reshape(-1, w.size)
    frac = np.linalg.norm(basis @ w) / norm
    return float(np.arccos(np.clip(frac, 0.0, 1.0)))


@dataclass
class AngleReport:
    layer: int
    theta: np.ndarray
    subspace_dim: int
    space: str


def _principal_basis(cov: np.ndarray, eps_rel: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    tr = float(np.sum(np.clip(vals, 0, None)))
    k = int(np.sum(vals > eps_rel * tr)) if tr > 0 else 0
    return vecs[:, :k].T


def angle_report(net: Network, layer: int, input_pca: PcaSummary, eps_rel: float = DEFAULT_EPS_REL, space: str = "preactivation") -> AngleReport:
    """Angle between each neuron's hyperplane normal and the data subspace.

    ``space="preactivation"`` works in the layer's own coordinates, where neuron ``i``'s
    hyperplane ``x~_i = 0`` has normal ``e_i`` and the data occupies the principal
    subspace of ``W C W^T`` (C = input covariance). ``space="input"`` compares weight rows
    with the principal subspace of the input itself.
    """
    w = net.layers[layer].weights
    if input_pca.covariance.shape[0] != w.shape[1]:
        raise ValueError("PCA summary does not match the layer's input width")
    if space == "input":
        basis = _principal_basis(input_pca.covariance, eps_rel)
        if basis.shape[0] == 0:
            raise ValueError("input representation has dimensionality 0")
        theta = np.array([subspace_angle(row, basis) for row in w])
    elif space == "preactivation":
        basis = _principal_basis(w @ input_pca.covariance @ w.T, eps_rel)
        if basis.shape[0] == 0:
            raise ValueError("preactivation representation has dimensionality 0")
        # angle of e_i to the span of the basis rows = arccos of the column norm
        theta = np.arccos(np.clip(np.linalg.norm(basis, axis=0), 0.0, 1.0))
    else:
        raise ValueError(f"unknown space {space!r}")
    return AngleReport(layer, theta, int(basis.shape[0]), space)


# --- ablation --------------------------------------------------------------


def select_by_dip(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k and bottom-k neuron indices by score; ties go to the lower index."""
    idx = np.arange(len(scores))
    top = np.lexsort((idx, -scores))[:k]
    bottom = np.lexsort((idx, scores))[:k]
    return np.sort(top), np.sort(bottom)


@dataclass
class AblationResult:
    layer: int
    k: int
    f1_intact: float
    f1_large_silenced: float
    f1_small_silenced: float
    large_neurons: list[int]
    small_neurons: list[int]


def ablation_experiment(net: Network, dataset, report: DipReport, k: int = 10, layers: Sequence[int] | None = None, excluded=DEFAULT_EXCLUDED) -> list[AblationResult]:
    """Silence the k largest- and k smallest-dip neurons of each layer and rescore."""
    layers = report.layers if layers is None else list(layers)
    intact = score_network(net, dataset, None, excluded)
    out = []
    for l in layers:
        scores = report.max_dip(l)
        if k < 0 or 2 * k > len(scores):
            raise ValueError(f"layer {l}: cannot pick disjoint top/bottom {k} from {len(scores)} neurons")
        top, bottom = select_by_dip(scores, k)
        f_large = score_network(net, dataset, SilenceMask.from_lists({l: top}), excluded) if k else intact
        f_small = score_network(net, dataset, SilenceMask.from_lists({l: bottom}), excluded) if k else intact
        out.append(AblationResult(l, k, intact, f_large, f_small, top.tolist(), bottom.tolist()))
    return out


# --- chunked statistics over large datasets --------------------------------


def layer_pcas(net: Network, inputs: np.ndarray, chunk: int = 50_000, eps_rel: float = DEFAULT_EPS_REL) -> dict:
    """Streaming PCA of the input and of every hidden layer's pre- and post-activations.

    Keys are ``("input", -1)``, ``("pre", l)`` and ``("post", l)``.
    """
    accs = {("input", -1): StreamingCovariance()}
    for l in range(net.n_hidden):
        accs[("pre", l)] = StreamingCovariance()
        accs[("post", l)] = StreamingCovariance()
    for start in range(0, len(inputs), chunk):
        tr = forward(net, inputs[start : start + chunk])
        accs[("input", -1)].update(tr.inputs)
        for l in range(net.n_hidden):
            accs[("pre", l)].update(tr.pre[l])
            accs[("post", l)].update(tr.post[l])
    return {key: summarize_covariance(acc, eps_rel) for key, acc in accs.items()}
