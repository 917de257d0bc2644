import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldnet.data import EggSpec, LabeledDataset, generate_egg
from foldnet.geometry import (
    ChainViolation,
    Hyperplane,
    SquashChain,
    apply_squashes,
    arc_chain,
    build_fold_solution,
    build_shear_network,
    build_squash_chain_network,
    evaluate_separability,
    fold_recall,
    fold_threshold,
    half_disc_dataset,
    iterate_recurrent,
    neuron_hyperplanes,
    simplex_normals,
    threshold_scores,
    tied_cell,
    unroll_recurrent,
    validate_squash_chain,
)
from foldnet.network import forward, init_network

# [DERIVED] outer recall of the triangle variant (offset (r_in + r_mid)/2 = 1.1) from exact
# polygon areas: 1 - area(triangle & annulus) / area(annulus), computed with shapely
TRIANGLE_OUTER_RECALL = 0.76539
# [DERIVED] 3-d fold (offset 0) outer recall by rejection sampling 1.6e6 shell points
FOLD3_OUTER_RECALL = 0.98692


# --- hyperplanes and separability ------------------------------------------


def test_hyperplane_from_neuron():
    h = Hyperplane.from_neuron([3.0, 4.0], 10.0)
    assert np.allclose(h.normal, [0.6, 0.8]) and h.offset == pytest.approx(2.0)
    assert h.signed_distance(np.array([[0.0, 0.0]]))[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Hyperplane.from_neuron([0, 0], 1)
    with pytest.raises(ValueError):
        Hyperplane(np.array([1.0, 1.0]), 0.0)


def test_perfectly_separated_scores():
    res = threshold_scores([0.1, 0.2, 0.3, 5, 6], [0, 0, 0, 1, 1])
    assert res.recall == {0: 1.0, 1: 1.0}
    assert 0.3 < res.threshold < 5
    res = threshold_scores([5, 6, 0.1], [0, 0, 1])
    assert res.recall == {0: 1.0, 1: 1.0} and res.orientation == -1


def test_ties_are_not_split():
    res = threshold_scores([1, 1, 1, 1], [0, 0, 1, 1])
    assert res.balanced == 0.5


def test_empty_class_is_an_error():
    with pytest.raises(ValueError):
        threshold_scores([1, 2], [0, 0])
    with pytest.raises(ValueError):
        threshold_scores([1, 2], [0, 2])


@settings(max_examples=150)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_threshold_is_optimal_against_brute_force(pairs):
    s = np.array([p for p, _ in pairs], dtype=float)
    y = np.array([c for _, c in pairs])
    if len(set(y)) < 2:
        return
    best = 0.0
    for t in np.r_[s - 0.5, s + 0.5]:
        for o in (1, -1):
            p1 = o * s > o * t
            best = max(best, (np.mean(~p1[y == 0]) + np.mean(p1[y == 1])) / 2)
    res = threshold_scores(s, y)
    assert res.balanced == pytest.approx(best, abs=1e-12)
    again = threshold_scores(s, y, threshold=res.threshold, orientation=res.orientation)
    assert again.recall == res.recall


def test_random_untrained_net_is_not_separating():
    ds = generate_egg(EggSpec())
    vals = [evaluate_separability(init_network([2, 3, 1], seed), ds).balanced for seed in range(10)]
    assert max(vals) <= 0.75


# --- fold ------------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 3, 5, 8])
def test_simplex_normals(N):
    V = simplex_normals(N)
    assert V.shape == (N + 1, N)
    G = V @ V.T
    off = G[~np.eye(N + 1, dtype=bool)]
    assert np.allclose(np.diag(G), 1, atol=1e-12)
    assert np.max(np.abs(off + 1 / N)) <= 1e-9
    assert np.allclose(V.sum(axis=0), 0, atol=1e-12)


@pytest.mark.parametrize("N", [2, 3, 5])
def test_fold_solution_shape(N):
    net = build_fold_solution(N)
    assert net.widths == [N, N + 1, 1]
    planes = neuron_hyperplanes(net, 0)
    assert len(planes) == N + 1


@settings(max_examples=60)
@given(st.integers(1, 5), st.floats(0.0, 0.9), st.integers(0, 1000))
def test_fold_threshold_is_a_tight_bound(N, offset, seed):
    V = simplex_normals(N)
    tau = fold_threshold(V, offset, 1.0)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2000, N))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = np.maximum(x @ V.T - offset, 0).sum(axis=1)
    assert np.all(vals <= tau + 1e-12)
    # attained: the maximising subset direction reaches tau
    best = 0.0
    for mask in range(1, 2 ** (N + 1)):
        v = V[[i for i in range(N + 1) if mask >> i & 1]].sum(axis=0)
        if np.linalg.norm(v) > 0:
            u = v / np.linalg.norm(v)
            best = max(best, np.maximum(V @ u - offset, 0).sum())
    assert best == pytest.approx(tau, abs=1e-12) or tau == 0.0


def test_fold_default_egg_recalls():
    res = fold_recall(2)
    assert res.recall[0] == 1.0
    assert res.recall[1] >= 0.95


@pytest.mark.parametrize("N", [2, 3, 5])
def test_fold_inner_scores_nonpositive(N):
    egg = EggSpec(dim=N, n_per_class=3000)
    net = build_fold_solution(N, egg)
    ds = generate_egg(egg)
    out = forward(net, ds.inputs).logits[:, 0]
    assert np.all(out[ds.labels == 0] <= 0)


def test_fold_3d_matches_monte_carlo_oracle():
    res = fold_recall(3, EggSpec(dim=3, n_per_class=20_000))
    assert res.recall[1] == pytest.approx(FOLD3_OUTER_RECALL, abs=3 * math.sqrt(0.013 * 0.987 / 20_000))


def test_triangle_variant_all_zero_inside_and_area_oracle():
    egg = EggSpec(n_per_class=20_000)
    net = build_fold_solution(2, egg, offset=(egg.r_in + egg.r_mid) / 2)
    ds = generate_egg(egg)
    tr = forward(net, ds.inputs)
    assert np.all(tr.post[0][ds.labels == 0] == 0)
    assert net.meta["tau"] == 0.0
    res = evaluate_separability(net, ds, readout=0, threshold=0.0, orientation=1)
    assert res.recall[0] == 1.0
    assert res.recall[1] == pytest.approx(TRIANGLE_OUTER_RECALL, abs=3 * math.sqrt(0.25 * 0.75 / 20_000))


def test_fold_errors():
    with pytest.raises(ValueError):
        build_fold_solution(2, EggSpec(dim=3))
    with pytest.raises(ValueError):
        build_fold_solution(2, EggSpec(), offset=1.5)
    with pytest.raises(ValueError):
        simplex_normals(0)


# --- recurrent -------------------------------------------------------------


def test_unroll_zero_steps_is_identity():
    cell = (np.array([[0.5, -1.0], [2.0, 0.3]]), np.array([0.1, -0.2]))
    x = np.random.default_rng(0).normal(size=(10, 2))
    assert np.array_equal(forward(unroll_recurrent(cell, 0), x).logits, x)
    assert np.array_equal(iterate_recurrent(cell, x, 0), x)


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(0, 9), st.integers(0, 10_000))
def test_unrolled_equals_iterated(width, steps, seed):
    rng = np.random.default_rng(seed)
    cell = (rng.normal(size=(width, width)), rng.normal(size=width))
    x = rng.normal(size=(100, width))
    net = unroll_recurrent(cell, steps)
    assert np.max(np.abs(forward(net, x).logits - iterate_recurrent(cell, x, steps))) <= 1e-12
    if steps:
        W, b = tied_cell(net)
        assert np.array_equal(W, cell[0]) and np.array_equal(b, cell[1])


def test_recurrent_errors():
    with pytest.raises(ValueError):
        unroll_recurrent((np.ones((2, 3)), np.ones(2)), 3)
    with pytest.raises(ValueError):
        iterate_recurrent((np.ones((2, 2)), np.ones(3)), np.ones(2), 1)
    net = init_network([2, 2, 2, 2], 0)
    with pytest.raises(ValueError):
        tied_cell(net)


def test_shear_winning_restart_is_tied_and_separates():
    # the restart that wins the full 300-restart search, replayed alone
    res = build_shear_network(7, restarts=1, first_seed=268)
    assert res.passed and res.seed == 268
    assert res.net.widths == [2] * 8 + [2]
    W, b = tied_cell(res.net)
    assert all(np.array_equal(l.weights, W) and np.array_equal(l.biases, b) for l in res.net.layers[:-1])
    assert min(res.separability.recall.values()) >= 0.90


def test_shear_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_shear_network(0, restarts=1)
    with pytest.raises(ValueError):
        build_shear_network(2, restarts=1, eval_egg=EggSpec(dim=3))


# --- squash chains ---------------------------------------------------------


def chain_from_turns(turns_deg, start=0.0):
    angles = np.radians(start + np.r_[0.0, np.cumsum(turns_deg)])
    return SquashChain(np.column_stack([np.cos(angles), np.sin(angles)]), np.zeros(len(angles)))


def test_validator_examples():
    assert validate_squash_chain(chain_from_turns([20] * 6))
    v = validate_squash_chain(chain_from_turns([100]))
    assert not v and v.step == 1 and "per-step" in v.reason
    v = validate_squash_chain(chain_from_turns([20] * 12))
    assert not v and "cumulative" in v.reason and v.step == 9


def test_validator_catches_window_turns():
    # net turn from the start is small, but the last three steps turn 210 deg together
    v = validate_squash_chain(chain_from_turns([-60, -60, 70, 70, 70]))
    assert not v and v.step == 5


def test_validator_random_suite():
    rng = np.random.default_rng(0)
    for _ in range(500):
        k = int(rng.integers(1, 12))
        turns = rng.uniform(-100, 100, k)
        partial = np.r_[0.0, np.cumsum(turns)]
        window = max(partial[j] - partial[:j].min() for j in range(1, k + 1))
        window = max(window, max(partial[:j].max() - partial[j] for j in range(1, k + 1)))
        expected = bool(np.all(np.abs(turns) < 90) and window < 180)
        assert bool(validate_squash_chain(chain_from_turns(turns, rng.uniform(0, 360)))) == expected


def test_chain_errors():
    with pytest.raises(ValueError):
        SquashChain(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        SquashChain(np.ones((2, 2)), np.zeros(3))
    with pytest.raises(ChainViolation):
        build_squash_chain_network(chain_from_turns([100]), 2.0)


def test_chain_json_round_trip():
    chain, _ = arc_chain(5)
    back = SquashChain.from_json(chain.to_json())
    assert np.array_equal(back.normals, chain.normals) and np.array_equal(back.offsets, chain.offsets)


def test_no_op_chain_is_identity():
    chain = chain_from_turns([20, 20, 20])
    chain.offsets[:] = -10.0  # every data point lies on the positive side
    net = build_squash_chain_network(chain, data_bound=3.0)
    x = np.random.default_rng(0).uniform(-2, 2, (5000, 2))
    assert np.max(np.abs(forward(net, x).logits - x)) <= 1e-9


@settings(max_examples=40)
@given(st.integers(2, 10), st.integers(0, 1000))
def test_network_matches_reference_projection(n_edges, seed):
    chain, _ = arc_chain(n_edges)
    net = build_squash_chain_network(chain, data_bound=2.0)
    x = np.random.default_rng(seed).uniform(-2, 2, (300, 2))
    x = x[np.linalg.norm(x, axis=1) <= 2.0]
    np.testing.assert_allclose(forward(net, x).logits, apply_squashes(chain, x), atol=1e-9)


def test_squash_layer_injective_on_positive_side():
    chain, _ = arc_chain(6)
    net = build_squash_chain_network(chain, 2.0)
    u, c = chain.normals[0], chain.offsets[0]
    x = np.random.default_rng(1).uniform(-2, 2, (4000, 2))
    pos = x[x @ u > c]
    h = forward(net, pos).post[0]
    assert len(np.unique(np.round(h, 12), axis=0)) == len(pos)
    # points behind the plane collapse onto it
    neg = x[x @ u < c]
    assert np.allclose(forward(net, neg).post[0][:, 0], 0)


def test_half_circle_chain_separates_half_disc():
    chain, _ = arc_chain(6)
    assert validate_squash_chain(chain)
    res = evaluate_separability(build_squash_chain_network(chain, 2.0), half_disc_dataset(10_000))
    assert min(res.recall.values()) >= 0.90


def test_full_circle_chain_rejected():
    chain, _ = arc_chain(12, start=math.pi, stop=-math.pi)
    assert not validate_squash_chain(chain)
