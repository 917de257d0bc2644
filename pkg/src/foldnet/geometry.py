"""Constructive networks for the egg problem and compressive squash chains.

* fold solutions: one hidden layer of N+1 ReLUs whose normals are the vertex
  directions of a regular N-simplex,
* shear solutions: width-2 networks whose hidden layers share one parameter cell,
  i.e. an unrolled 2-neuron recurrent network,
* squash chains: sequences of width-preserving ReLU layers that each project the
  data behind one line onto it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import EggSpec, LabeledDataset, generate_egg
from .network import Layer, Network, backward, forward


@dataclass(frozen=True)
class Hyperplane:
    normal: np.ndarray
    offset: float  # plane is <normal, x> + offset = 0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("hyperplane normal must be a unit vector")
        object.__setattr__(self, "normal", n)

    @classmethod
    def from_neuron(cls, w, b) -> "Hyperplane":
        w = np.asarray(w, dtype=np.float64)
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ValueError("zero weight vector defines no hyperplane")
        return cls(w / norm, float(b) / norm)

    def signed_distance(self, x) -> np.ndarray:
        return np.asarray(x) @ self.normal + self.offset


def neuron_hyperplanes(net: Network, layer: int) -> list[Hyperplane]:
    lay = net.layers[layer]
    return [Hyperplane.from_neuron(w, b) for w, b in zip(lay.weights, lay.biases)]


# --- separability ----------------------------------------------------------


@dataclass
class Separability:
    recall: dict[int, float]
    threshold: float
    orientation: int  # +1: class 1 predicted where score > threshold
    direction: np.ndarray | None = None

    @property
    def balanced(self) -> float:
        return float(np.mean(list(self.recall.values())))

    @property
    def worst(self) -> float:
        return float(min(self.recall.values()))


def _two_classes(labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    a, b = labels == 0, labels == 1
    if not np.all(a | b):
        raise ValueError("separability is defined for labels {0, 1}")
    if not a.any() or not b.any():
        raise ValueError("both classes need at least one sample")
    return a, b


def threshold_scores(scores, labels, threshold: float | None = None, orientation: int | None = None) -> Separability:
    """Recall per class of the rule ``class 1 iff orientation * score > orientation * threshold``.

    Without a threshold, the one maximising balanced recall is chosen over both
    orientations; candidate thresholds lie strictly between distinct score values.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    is0, is1 = _two_classes(labels)
    n0, n1 = is0.sum(), is1.sum()
    if threshold is not None:
        o = 1 if orientation is None else orientation
        pred1 = o * s > o * threshold
        return Separability({0: float(np.mean(~pred1[is0])), 1: float(np.mean(pred1[is1]))}, float(threshold), o)
    best = None
    for o in (1, -1) if orientation is None else (orientation,):
        v = o * s
        order = np.argsort(v, kind="stable")
        vs = v[order]
        c0 = np.cumsum(is0[order])
        c1 = np.cumsum(is1[order])
        # cut after position j (only where the value changes): class 0 below, class 1 above
        last = np.r_[np.flatnonzero(vs[1:] != vs[:-1]), len(vs) - 1]
        r0 = np.r_[0.0, c0[last] / n0]
        r1 = np.r_[1.0, (n1 - c1[last]) / n1]
        bal = (r0 + r1) / 2
        j = int(np.argmax(bal))
        if j == 0:
            thr = vs[0] - 1.0
        elif j == len(last):
            thr = vs[-1] + 1.0
        else:
            thr = (vs[last[j - 1]] + vs[last[j - 1] + 1]) / 2
        cand = (bal[j], o, o * thr, r0[j], r1[j])
        if best is None or cand[0] > best[0]:
            best = cand
    _, o, thr, r0, r1 = best
    return Separability({0: float(r0), 1: float(r1)}, float(thr), o)


def best_linear_readout(Z, labels, n_angles: int = 720) -> Separability:
    """Best-balanced-recall linear readout of a representation.

    2-d representations are scanned over ``n_angles`` directions; higher
    dimensions use the Fisher discriminant direction.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] == 1:
        res = threshold_scores(Z[:, 0], labels)
        res.direction = np.ones(1)
        return res
    if Z.shape[1] == 2:
        best = None
        for ang in np.arange(n_angles) * (math.pi / n_angles):
            d = np.array([math.cos(ang), math.sin(ang)])
            res = threshold_scores(Z @ d, labels)
            if best is None or res.balanced > best.balanced:
                best, best.direction = res, d
        return best
    is0, is1 = _two_classes(labels)
    m0, m1 = Z[is0].mean(axis=0), Z[is1].mean(axis=0)
    sw = np.cov(Z[is0].T) + np.cov(Z[is1].T) + 1e-9 * np.eye(Z.shape[1])
    d = np.linalg.lstsq(sw, m1 - m0, rcond=None)[0]
    d /= np.linalg.norm(d) or 1.0
    res = threshold_scores(Z @ d, labels)
    res.direction = d
    return res


def evaluate_separability(net: Network, dataset: LabeledDataset, readout=None, threshold: float | None = None, orientation: int | None = None) -> Separability:
    """Per-class recall of a linear readout of the network output.

    ``readout`` is an output index, a direction vector, or ``None`` (single output used
    as is, otherwise the best linear readout is searched).
    """
    out = forward(net, dataset.inputs).logits
    if readout is None:
        if out.shape[1] != 1:
            if threshold is not None:
                raise ValueError("a fixed threshold needs an explicit readout")
            return best_linear_readout(out, dataset.labels)
        readout = 0
    if np.isscalar(readout):
        scores = out[:, int(readout)]
        direction = np.eye(out.shape[1])[int(readout)]
    else:
        direction = np.asarray(readout, dtype=np.float64)
        scores = out @ direction
    res = threshold_scores(scores, dataset.labels, threshold, orientation)
    res.direction = direction
    return res


# --- fold solutions --------------------------------------------------------


def simplex_normals(N: int) -> np.ndarray:
    """Unit vectors to the N+1 vertices of a regular simplex centred at 0, shape (N+1, N).

    Pairwise inner products are -1/N.
    """
    if N < 1:
        raise ValueError("dimension must be >= 1")
    centred = np.eye(N + 1) - 1.0 / (N + 1)
    # orthonormal basis of the sum-zero hyperplane (first N right singular vectors)
    basis = np.linalg.svd(centred)[2][:N]
    v = centred @ basis.T
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # fix the orientation so the first normal points along +x_1 ... deterministic across LAPACKs
    q, r = np.linalg.qr(v[:N].T)
    q = q * np.sign(np.diag(r))
    return v @ q


def fold_threshold(normals: np.ndarray, offset: float, radius: float) -> float:
    """Exact max of ``sum_i relu(<n_i, x> - offset)`` over the ball ``|x| <= radius``.

    The sum equals ``max_S (<sum_{i in S} n_i, x> - |S| offset)`` over index subsets S.
    """
    k = len(normals)
    if k > 20:
        raise ValueError("exact threshold enumerates 2^k subsets; k too large")
    best = 0.0
    for size in range(1, k + 1):
        for S in itertools.combinations(range(k), size):
            v = normals[list(S)].sum(axis=0)
            best = max(best, radius * float(np.linalg.norm(v)) - size * offset)
    return best


def build_fold_solution(N: int, egg: EggSpec | None = None, offset: float = 0.0) -> Network:
    """One hidden layer of N+1 ReLUs on simplex normals and a summing readout.

    The output ``sum_i h_i - tau`` is <= 0 on the whole inner ball (tau is exact), so a
    readout threshold of 0 recalls the inner class perfectly. With
    ``offset > egg.r_in`` every inner point silences all hidden units (tau = 0).
    """
    egg = EggSpec(dim=N) if egg is None else egg
    egg.validate()
    if egg.dim != N:
        raise ValueError(f"egg dimension {egg.dim} != N={N}")
    if offset >= egg.r_mid:
        raise ValueError(f"offset {offset} leaves no room below r_mid={egg.r_mid}")
    normals = simplex_normals(N)
    tau = fold_threshold(normals, offset, egg.r_in)
    hidden = Layer(normals.copy(), np.full(N + 1, -float(offset)), "relu")
    readout = Layer(np.ones((1, N + 1)), np.array([-tau]), "identity")
    meta = {"construction": "fold", "N": N, "offset": offset, "tau": tau, "egg": vars(egg)}
    return Network([hidden, readout], N, meta)


def fold_recall(N: int, egg: EggSpec | None = None, offset: float = 0.0) -> Separability:
    egg = EggSpec(dim=N) if egg is None else egg
    net = build_fold_solution(N, egg, offset)
    return evaluate_separability(net, generate_egg(egg), readout=0, threshold=0.0, orientation=1)


# --- shear / recurrent -----------------------------------------------------


def iterate_recurrent(cell: tuple[np.ndarray, np.ndarray], x, k: int) -> np.ndarray:
    """Apply ``h <- relu(h W^T + b)`` k times to the rows of ``x``."""
    W, b = _check_cell(cell)
    h = np.asarray(x, dtype=np.float64)
    squeeze = h.ndim == 1
    h = np.atleast_2d(h)
    for _ in range(k):
        h = np.maximum(h @ W.T + b, 0.0)
    return h[0] if squeeze else h


def _check_cell(cell) -> tuple[np.ndarray, np.ndarray]:
    W = np.asarray(cell[0], dtype=np.float64)
    b = np.asarray(cell[1], dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"recurrent cell must be square, got {W.shape}")
    if b.shape != (W.shape[0],):
        raise ValueError("cell bias does not match the cell width")
    return W, b


def unroll_recurrent(cell, steps: int, readout: tuple[np.ndarray, np.ndarray] | None = None) -> Network:
    """Feed-forward network with ``steps`` copies of the cell and a final linear layer.

    Without a readout the final layer is the identity, so ``forward`` reproduces
    :func:`iterate_recurrent` exactly.
    """
    W, b = _check_cell(cell)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    d = W.shape[0]
    layers = [Layer(W.copy(), b.copy(), "relu") for _ in range(steps)]
    if readout is None:
        layers.append(Layer(np.eye(d), np.zeros(d), "identity"))
    else:
        layers.append(Layer(np.asarray(readout[0], dtype=np.float64).copy(), np.asarray(readout[1], dtype=np.float64).copy(), "identity"))
    return Network(layers, d, {"construction": "recurrent", "steps": steps})


def tied_cell(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """The shared (W, b) of a network whose hidden layers are parameter-identical."""
    hidden = net.layers[:-1]
    if not hidden:
        raise ValueError("network has no hidden layers")
    W, b = hidden[0].weights, hidden[0].biases
    for lay in hidden[1:]:
        if not (np.array_equal(lay.weights, W) and np.array_equal(lay.biases, b)):
            raise ValueError("hidden layers are not tied")
    return W, b


@dataclass
class ShearResult:
    net: Network
    separability: Separability
    passed: bool
    seed: int
    losses: list[float] = field(default_factory=list)

    @property
    def cell(self):
        return tied_cell(self.net)


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _shear_init(rng: np.random.Generator) -> np.ndarray:
    """Rotated shear about a point (a, a): no unit starts dead on the egg."""
    W = _rotation(rng.uniform(-math.pi, math.pi)) @ np.array([[1.0, rng.normal(0, 1.5)], [0.0, 1.0]])
    W *= rng.uniform(0.7, 1.3)
    c = np.full(2, rng.uniform(0.8, 1.6))
    return np.r_[W.ravel(), c - W @ c, rng.normal(0, 1, 4), np.zeros(2)]


def _unpack_tied(p: np.ndarray):
    return (p[:4].reshape(2, 2), p[4:6]), (p[6:10].reshape(2, 2), p[10:12])


def _fit_tied(X, y, depth: int, seed: int, maxiter: int) -> tuple[Network, float]:
    """Minimise cross-entropy over (cell, readout) with L-BFGS; the cell gradient is
    the sum of the per-layer gradients of the unrolled network."""
    from scipy.optimize import minimize

    def objective(p):
        cell, ro = _unpack_tied(p)
        loss, grads = backward(unroll_recurrent(cell, depth, ro), X, y)
        if not np.isfinite(loss):
            return 1e3, np.zeros_like(p)
        gW = sum(gw for gw, _ in grads[:-1])
        gb = sum(gb for _, gb in grads[:-1])
        return loss, np.r_[gW.ravel(), gb, grads[-1][0].ravel(), grads[-1][1]]

    p0 = _shear_init(np.random.default_rng(seed))
    with np.errstate(over="ignore", invalid="ignore"):
        res = minimize(objective, p0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
    cell, ro = _unpack_tied(res.x)
    return unroll_recurrent(cell, depth, ro), float(res.fun)


def _logit_margin(net: Network, dataset: LabeledDataset) -> np.ndarray:
    out = forward(net, dataset.inputs).logits
    return out[:, 1] - out[:, 0]


def build_shear_network(
    depth: int = 7,
    restarts: int = 300,
    train_egg: EggSpec | None = None,
    select_egg: EggSpec | None = None,
    eval_egg: EggSpec | None = None,
    maxiter: int = 3000,
    recall_floor: float = 0.90,
    first_seed: int = 0,
) -> ShearResult:
    """Search for a width-2 network of ``depth`` tied ReLU layers separating the 2-d egg.

    Every restart fits (cell, 2-logit readout) from a random shear initialisation. The
    restart with the best worst-class recall on ``select_egg`` wins (ties go to the
    lower seed); the reported recalls are measured on ``eval_egg`` (the default egg)
    with the logit difference as score and the balanced-recall threshold.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    train_egg = EggSpec(dim=2, n_per_class=1000, seed=1) if train_egg is None else train_egg
    select_egg = EggSpec(dim=2, n_per_class=5000, seed=2) if select_egg is None else select_egg
    eval_egg = EggSpec(dim=2) if eval_egg is None else eval_egg
    for e in (train_egg, select_egg, eval_egg):
        if e.dim != 2:
            raise ValueError("shear networks are width 2; eggs must be 2-d")
    train_set, select_set = generate_egg(train_egg), generate_egg(select_egg)
    best, best_score, losses = None, -1.0, []
    for seed in range(first_seed, first_seed + restarts):
        net, loss = _fit_tied(train_set.inputs, train_set.labels, depth, seed, maxiter)
        losses.append(loss)
        margin = _logit_margin(net, select_set)
        if not np.all(np.isfinite(margin)):
            continue
        score = threshold_scores(margin, select_set.labels).worst
        if score > best_score:
            best, best_score, best_seed = net, score, seed
    if best is None:
        raise RuntimeError("no restart produced a finite network")
    eval_set = generate_egg(eval_egg)
    sep = threshold_scores(_logit_margin(best, eval_set), eval_set.labels)
    sep.direction = np.array([-1.0, 1.0])
    best.meta.update({"construction": "shear", "depth": depth, "seed": best_seed, "select_worst_recall": best_score})
    return ShearResult(best, sep, sep.worst >= recall_floor, best_seed, losses)


# --- squash chains ---------------------------------------------------------


@dataclass
class SquashChain:
    normals: np.ndarray  # (k, d) unit rows
    offsets: np.ndarray  # (k,); squash plane is <u_i, x> = c_i, the side < c_i is squashed

    def __post_init__(self):
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
        self.offsets = np.asarray(self.offsets, dtype=np.float64).ravel()
        if len(self.normals) == 0:
            raise ValueError("chain must contain at least one squash")
        if len(self.offsets) != len(self.normals):
            raise ValueError("one offset per normal required")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"zero normal at step {int(np.argmin(norms))}")
        self.normals = self.normals / norms[:, None]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def turn_angles(self) -> np.ndarray:
        """Unsigned angle between consecutive normals, in [0, pi]."""
        u = self.normals
        cos = np.clip(np.sum(u[:-1] * u[1:], axis=1), -1.0, 1.0)
        return np.arccos(cos)

    def signed_turns(self) -> np.ndarray:
        """Counter-clockwise-positive turns for 2-d chains; unsigned turns otherwise."""
        if self.dim != 2:
            return self.turn_angles()
        u = self.normals
        cross = u[:-1, 0] * u[1:, 1] - u[:-1, 1] * u[1:, 0]
        dot = np.sum(u[:-1] * u[1:], axis=1)
        return np.arctan2(cross, dot)

    def to_json(self) -> list:
        return [{"normal": n.tolist(), "offset": float(c)} for n, c in zip(self.normals, self.offsets)]

    @classmethod
    def from_json(cls, obj: list) -> "SquashChain":
        return cls([o["normal"] for o in obj], [o["offset"] for o in obj])


@dataclass
class ChainValidation:
    ok: bool
    step: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


class ChainViolation(ValueError):
    def __init__(self, validation: ChainValidation):
        self.validation = validation
        super().__init__(f"squash chain violation at step {validation.step}: {validation.reason}")


def validate_squash_chain(chain: SquashChain) -> ChainValidation:
    """Every turn must be < pi/2 and the accumulated turn in either direction < pi.

    Step ``j`` (1-based) is the turn from normal ``j-1`` to normal ``j``. The accumulated
    turn is the largest |sum of signed turns| over any contiguous run of steps ending
    at ``j``; for chains in more than 2 dimensions unsigned turns are summed.
    """
    turns = chain.turn_angles()
    signed = chain.signed_turns()
    running, lo, hi = 0.0, 0.0, 0.0
    for j, (t, s) in enumerate(zip(turns, signed), start=1):
        if t >= math.pi / 2:
            return ChainValidation(False, j, f"per-step turn {math.degrees(t):.6g} deg >= 90 deg")
        running += s
        if max(running - lo, hi - running) >= math.pi:
            total = max(running - lo, hi - running)
            return ChainValidation(False, j, f"cumulative turn {math.degrees(total):.6g} deg >= 180 deg")
        lo, hi = min(lo, running), max(hi, running)
    return ChainValidation(True)


def build_squash_chain_network(chain: SquashChain, data_bound: float) -> Network:
    """Width-2 ReLU network applying each squash of a valid 2-d chain in order.

    Layer i computes ``(relu(<u_i, z> - c_i), <v_i, z> + B_i)`` with ``v_i`` the normal
    rotated by +90 deg and ``B_i`` large enough to keep the second unit positive for all
    ``|x| <= data_bound``; the next affine map undoes rotation and shift. The final
    identity layer returns the squashed points in input coordinates.
    """
    res = validate_squash_chain(chain)
    if not res:
        raise ChainViolation(res)
    if chain.dim != 2:
        raise ValueError("the chain builder is restricted to 2-d chains")
    # un-squash map of the previous layer: z = M h + t
    M, t = np.eye(2), np.zeros(2)
    bound = float(data_bound)
    layers = []
    for u, c in zip(chain.normals, chain.offsets):
        v = np.array([-u[1], u[0]])
        R = np.vstack([u, v])
        shift = bound + 1.0
        layers.append(Layer(R @ M, R @ t + np.array([-c, shift]), "relu"))
        M = np.column_stack([u, v])
        t = c * u - shift * v
        # projection onto {<u, z> >= c} grows norms by at most 2|c|
        bound += 2 * abs(c)
    layers.append(Layer(M.copy(), t.copy(), "identity"))
    return Network(layers, 2, {"construction": "squash_chain", "chain": chain.to_json(), "data_bound": data_bound})


def apply_squashes(chain: SquashChain, x) -> np.ndarray:
    """Reference composition of the half-plane projections, in input coordinates."""
    z = np.array(x, dtype=np.float64, copy=True)
    for u, c in zip(chain.normals, chain.offsets):
        z = z + np.maximum(c - z @ u, 0.0)[:, None] * u
    return z


def arc_chain(n_edges: int = 6, radius: float = 1.0, start: float = math.pi, stop: float = 0.0) -> tuple[SquashChain, np.ndarray]:
    """Tangential squash chain straightening an inscribed polygonal arc.

    The arc runs clockwise from angle ``start`` to ``stop`` through ``n_edges + 1``
    vertices. Squash i is the plane through vertex i whose normal is the direction of
    edge i, which collapses that edge onto the vertex. Returns the chain (one squash
    per edge except the last) and the vertices.
    """
    if n_edges < 2:
        raise ValueError("need at least two edges")
    ang = np.linspace(start, stop, n_edges + 1)
    verts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    d = np.diff(verts, axis=0)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    normals = d[:-1]
    offsets = np.sum(normals * verts[1:-1], axis=1)
    return SquashChain(normals, offsets), verts


def half_disc_dataset(n: int = 10_000, radius: float = 1.0, outer: float = 2.0, seed: int = 0) -> LabeledDataset:
    """Uniform points of the upper half-disc of radius ``outer``; class 0 inside ``radius``."""
    rng = np.random.default_rng(seed)
    r = outer * np.sqrt(rng.random(n))
    phi = math.pi * rng.random(n)
    x = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    labels = (r > radius).astype(np.int64)
    return LabeledDataset(x, labels, 2, {"generator": "half_disc", "n": n, "radius": radius, "outer": outer, "seed": seed})
