"""Poker-hand and N-dimensional egg datasets."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

POKER_CLASSES = (
    "nothing",
    "pair",
    "two pairs",
    "three of a kind",
    "straight",
    "flush",
    "full house",
    "four of a kind",
    "straight flush",
    "royal flush",
)
N_POKER_CLASSES = len(POKER_CLASSES)
N_HANDS = math.comb(52, 5)


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-d matrix")
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} input rows but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain non-finite values")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.n_classes, dict(self.provenance))

    def standardized(self, mean=None, std=None) -> "LabeledDataset":
        """Per-feature z-scoring; statistics are recorded in the provenance."""
        mean = self.inputs.mean(axis=0) if mean is None else np.asarray(mean, dtype=np.float64)
        std = self.inputs.std(axis=0) if std is None else np.asarray(std, dtype=np.float64)
        std = np.where(std > 0, std, 1.0)
        prov = dict(self.provenance)
        prov["standardization"] = {"mean": mean.tolist(), "std": std.tolist()}
        return LabeledDataset((self.inputs - mean) / std, self.labels, self.n_classes, prov)

    def split(self, fraction: float, seed: int) -> tuple["LabeledDataset", "LabeledDataset"]:
        if not 0 < fraction < 1:
            raise ValueError("split fraction must lie in (0, 1)")
        perm = np.random.default_rng(seed).permutation(len(self))
        k = int(round(len(self) * (1 - fraction)))
        return self.subset(np.sort(perm[:k])), self.subset(np.sort(perm[k:]))

    def save_csv(self, path: str | os.PathLike) -> None:
        """CSV with header ``x0..x{d-1},label`` plus a ``<path>.json`` provenance sidecar."""
        path = os.fspath(path)
        header = [f"x{i}" for i in range(self.dim)] + ["label"]
        tmp = path + ".tmp"
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row, lab in zip(self.inputs.tolist(), self.labels.tolist()):
                w.writerow([repr(v) for v in row] + [lab])
        os.replace(tmp, path)
        side = {"n_classes": self.n_classes, "n_rows": len(self), "dim": self.dim, "provenance": self.provenance}
        with open(path + ".json", "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)

    @classmethod
    def load_csv(cls, path: str | os.PathLike) -> "LabeledDataset":
        path = os.fspath(path)
        with open(path + ".json", encoding="utf-8") as fh:
            side = json.load(fh)
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(raw[:, :-1], raw[:, -1].astype(np.int64), side["n_classes"], side.get("provenance", {}))


# --- poker -----------------------------------------------------------------


def _validate_hand(hand: Sequence[tuple[int, int]]) -> None:
    if len(hand) != 5:
        raise ValueError(f"a hand has 5 cards, got {len(hand)}")
    for suit, rank in hand:
        if not (1 <= suit <= 4 and 1 <= rank <= 13):
            raise ValueError(f"invalid card (suit={suit}, rank={rank})")
    if len(set(map(tuple, hand))) != 5:
        raise ValueError(f"duplicate card in hand {list(hand)}")


def label_hand(hand: Sequence[tuple[int, int]]) -> int:
    """Class 0..9 of a hand given as five ``(suit, rank)`` pairs; ace is rank 1."""
    _validate_hand(hand)
    suits = [s for s, _ in hand]
    ranks = sorted(r for _, r in hand)
    counts = sorted(Counter(ranks).values(), reverse=True)
    flush = len(set(suits)) == 1
    royal = ranks == [1, 10, 11, 12, 13]
    straight = royal or (counts[0] == 1 and ranks[4] - ranks[0] == 4)
    if flush and royal:
        return 9
    if flush and straight:
        return 8
    if counts[0] == 4:
        return 7
    if counts[:2] == [3, 2]:
        return 6
    if flush:
        return 5
    if straight:
        return 4
    if counts[0] == 3:
        return 3
    if counts[:2] == [2, 2]:
        return 2
    if counts[0] == 2:
        return 1
    return 0


def label_hands(suits: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Vectorised :func:`label_hand` for arrays of shape (n, 5). No validity checks."""
    suits = np.asarray(suits)
    ranks = np.asarray(ranks)
    n = len(ranks)
    rank_hist = np.zeros((n, 14), dtype=np.int8)
    rows = np.arange(n)
    for k in range(5):
        rank_hist[rows, ranks[:, k]] += 1
    hist_sorted = -np.sort(-rank_hist, axis=1)
    top, second = hist_sorted[:, 0], hist_sorted[:, 1]
    flush = np.all(suits == suits[:, :1], axis=1)
    rs = np.sort(ranks, axis=1)
    distinct = top == 1
    royal = distinct & (rs[:, 0] == 1) & (rs[:, 1] == 10)
    straight = royal | (distinct & (rs[:, 4] - rs[:, 0] == 4))

    out = np.zeros(n, dtype=np.int64)
    out[top == 2] = 1
    out[(top == 2) & (second == 2)] = 2
    out[top == 3] = 3
    out[straight] = 4
    out[flush] = 5
    out[(top == 3) & (second == 2)] = 6
    out[top == 4] = 7
    out[flush & straight] = 8
    out[flush & royal] = 9
    return out


def _cards_to_inputs(cards: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    suits = cards // 13 + 1
    ranks = cards % 13 + 1
    x = np.empty((len(cards), 10), dtype=np.float64)
    x[:, 0::2] = suits
    x[:, 1::2] = ranks
    return x, suits, ranks


def all_hands() -> np.ndarray:
    """Every unordered 5-card hand as card indices 0..51, shape (2598960, 5)."""
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(52), 5)), dtype=np.int8, count=5 * N_HANDS
    )
    return flat.reshape(N_HANDS, 5)


def generate_poker(n: int | None = None, seed: int = 0, mode: str = "uniform_ordered", chunk: int = 200_000) -> LabeledDataset:
    """Poker hands encoded as (s1, r1, ..., s5, r5) with suits 1..4 and ranks 1..13.

    ``uniform_ordered`` draws ``n`` ordered hands without replacement inside a hand;
    ``exhaustive_combinations`` returns each of the C(52, 5) hands once in lexicographic order.
    """
    if mode == "exhaustive_combinations":
        cards = all_hands()
        x, suits, ranks = _cards_to_inputs(cards)
        return LabeledDataset(x, label_hands(suits, ranks), N_POKER_CLASSES, {"generator": "poker", "mode": mode})
    if mode != "uniform_ordered":
        raise ValueError(f"unknown poker mode {mode!r}")
    if n is None or n < 1:
        raise ValueError("uniform mode needs n >= 1")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        # argsort of iid uniforms = random permutation per row; the first 5 form an ordered hand
        cards = np.argpartition(rng.random((m, 52)), 5, axis=1)[:, :5]
        keys = rng.random((m, 5))
        cards = np.take_along_axis(cards, np.argsort(keys, axis=1), axis=1)
        x, suits, ranks = _cards_to_inputs(cards)
        xs.append(x)
        ys.append(label_hands(suits, ranks))
    prov = {"generator": "poker", "mode": mode, "n": n, "seed": seed}
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys), N_POKER_CLASSES, prov)


def hands_from_inputs(inputs: np.ndarray) -> list[list[tuple[int, int]]]:
    ints = np.asarray(inputs).astype(int)
    return [[(row[2 * k], row[2 * k + 1]) for k in range(5)] for row in ints.tolist()]


@dataclass
class UciLoadResult:
    dataset: LabeledDataset
    mismatches: int
    mismatch_lines: list[int]


def parse_uci_lines(lines: Iterable[str], source: str = "<lines>") -> UciLoadResult:
    rows, labels = [], []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 11:
            raise ParseError(lineno, f"expected 11 comma-separated fields, got {len(fields)}")
        try:
            vals = [int(f) for f in fields]
        except ValueError:
            raise ParseError(lineno, f"non-integer field in {line!r}") from None
        hand = [(vals[2 * k], vals[2 * k + 1]) for k in range(5)]
        try:
            _validate_hand(hand)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if not 0 <= vals[10] < N_POKER_CLASSES:
            raise ParseError(lineno, f"class {vals[10]} outside 0..9")
        rows.append(vals[:10])
        labels.append(vals[10])
    x = np.asarray(rows, dtype=np.float64).reshape(-1, 10)
    y = np.asarray(labels, dtype=np.int64)
    computed = label_hands(x[:, 0::2].astype(int), x[:, 1::2].astype(int)) if len(y) else y
    bad = np.flatnonzero(computed != y)
    ds = LabeledDataset(x, y, N_POKER_CLASSES, {"source": source, "format": "uci-poker"})
    return UciLoadResult(ds, int(bad.size), (bad + 1).tolist())


def load_uci_poker(path: str | os.PathLike) -> UciLoadResult:
    """Read a UCI poker-hand file (S1,C1,...,S5,C5,CLASS) and cross-check every label."""
    with open(path, encoding="utf-8") as fh:
        return parse_uci_lines(fh, os.fspath(path))


# --- egg -------------------------------------------------------------------


@dataclass
class EggSpec:
    dim: int = 2
    r_in: float = 1.0
    r_mid: float = 1.2
    r_out: float = 2.0
    n_per_class: int = 5000
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("egg dimension must be >= 1")
        if not 0 < self.r_in < self.r_mid < self.r_out:
            raise ValueError(f"need 0 < r_in < r_mid < r_out, got {self.r_in}, {self.r_mid}, {self.r_out}")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be positive")


def _unit_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    while np.any(norms == 0):  # measure-zero, but keep it total
        bad = norms[:, 0] == 0
        g[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / norms


def generate_egg(spec: EggSpec) -> LabeledDataset:
    """Class 0 uniform in the ball of radius r_in, class 1 uniform in the shell [r_mid, r_out]."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_per_class, spec.dim
    # relative margins keep norms inside the closed radii after rounding
    lo, hi = spec.r_mid * (1 + 1e-12), spec.r_out * (1 - 1e-12)
    inner = _unit_directions(rng, n, d) * (spec.r_in * (1 - 1e-12) * rng.random(n) ** (1.0 / d))[:, None]
    u = rng.random(n)
    radii = np.clip((lo**d + u * (hi**d - lo**d)) ** (1.0 / d), lo, hi)
    outer = _unit_directions(rng, n, d) * radii[:, None]
    prov = {"generator": "egg", **vars(spec)}
    return LabeledDataset(np.vstack([inner, outer]), np.repeat([0, 1], n), 2, prov)
