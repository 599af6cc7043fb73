from itertools import permutations

import numpy as np
import pytest

from homotrack.association import (
    FULL_REDRAW,
    PAIR_SWAP,
    associate,
    association_energy,
    brute_force_associate,
    cost_matrix,
    metropolis_associate,
)
from homotrack.observation import ObservationConfig


def tracking_problem(rng, n, spread=6.0, min_gap=5.0):
    """Cost matrix from targets in a box and unit-noise position observations,
    shuffled, with the optimum separated by at least ``min_gap``."""
    cfg = ObservationConfig()
    while True:
        x = np.zeros((n, 4))
        x[:, [0, 2]] = rng.uniform(-spread, spread, size=(n, 2))
        z = x[:, [0, 2]] + rng.standard_normal((n, 2))
        cost = cost_matrix(z[rng.permutation(n)], x, cfg)
        energies = sorted(cost[np.arange(n), list(p)].sum() for p in permutations(range(n)))
        if energies[1] - energies[0] >= min_gap:
            return cost


def test_energy_examples():
    assert association_energy(np.diag([0.0, 0.0, 0.0]) + 1 - np.eye(3), [0, 1, 2]) == 0.0
    assert association_energy([[7.5]], [0]) == 7.5
    c = [[1, 5], [5, 1]]
    assert association_energy(c, [0, 1]) == 2
    assert association_energy(c, [1, 0]) == 10


def test_energy_size_mismatch():
    with pytest.raises(ValueError):
        association_energy(np.ones((3, 3)), [0, 1])


def test_brute_force_examples():
    m, e = brute_force_associate([[1, 5], [5, 1]])
    assert list(m) == [0, 1] and e == 2
    m, e = brute_force_associate(1 - np.eye(4))
    assert list(m) == [0, 1, 2, 3] and e == 0
    m, _ = brute_force_associate(np.ones((4, 4)))
    assert list(m) == [0, 1, 2, 3]
    m, _ = brute_force_associate([[1, 0, 0], [0, 1, 1], [1, 1, 0]])
    # optima (1,0,2) and (2,0,... ) -> lexicographically smallest wins
    assert list(m) == [1, 0, 2]


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_associate(np.zeros((9, 9)))


@pytest.mark.parametrize("scheme", [FULL_REDRAW, PAIR_SWAP])
def test_single_target_needs_no_search(scheme, rng):
    assert list(metropolis_associate([[3.0]], scheme, steps=5, rng=rng)) == [0]


def test_rejects_bad_arguments(rng):
    with pytest.raises(ValueError):
        metropolis_associate(np.ones((2, 2)), FULL_REDRAW, steps=0, rng=rng)
    with pytest.raises(ValueError):
        metropolis_associate(np.ones((2, 2)), "greedy", steps=10, rng=rng)


def test_default_step_count_is_10000():
    assert metropolis_associate.__defaults__[1] == 10000


@pytest.mark.parametrize("scheme", [FULL_REDRAW, PAIR_SWAP])
def test_three_well_separated_targets(scheme):
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        cost = rng.uniform(50, 100, size=(3, 3))
        perm = rng.permutation(3)
        cost[np.arange(3), perm] = rng.uniform(0, 2, size=3)
        best, _ = brute_force_associate(cost)
        m = metropolis_associate(cost, scheme, steps=10000, rng=rng)
        hits += np.array_equal(m, best)
    assert hits >= 95


@pytest.mark.parametrize("scheme", [FULL_REDRAW, PAIR_SWAP])
def test_result_is_a_permutation_never_below_optimum(scheme):
    rng = np.random.default_rng(3)
    for _ in range(20):
        cost = rng.uniform(0, 10, size=(5, 5))
        m = metropolis_associate(cost, scheme, steps=200, rng=rng)
        assert sorted(m) == list(range(5))
        assert association_energy(cost, m) >= brute_force_associate(cost)[1]


def test_optimal_energy_invariant_under_relabeling():
    rng = np.random.default_rng(4)
    cost = rng.uniform(0, 10, size=(5, 5))
    perm = rng.permutation(5)
    assert brute_force_associate(cost[:, perm])[1] == pytest.approx(brute_force_associate(cost)[1])


def test_energy_non_negative_and_zero_only_on_zero_residuals():
    rng = np.random.default_rng(5)
    cost = tracking_problem(rng, 4)
    for p in permutations(range(4)):
        assert association_energy(cost, p) > 0
    z = np.array([[1.0, 2.0], [3.0, 4.0]])
    x = np.array([[1.0, 0, 2.0, 0], [3.0, 0, 4.0, 0]])
    assert association_energy(cost_matrix(z, x, ObservationConfig()), [0, 1]) == 0.0


def test_cost_matrix_rows_are_observations(bearing_obs):
    x = np.array([[10.0, 0, 0, 0], [0, 0, 10.0, 0]])
    z = np.array([[np.pi / 2, 10.0], [0.0, 10.0]])
    c = cost_matrix(z, x, bearing_obs)
    assert c[0, 1] == 0.0 and c[1, 0] == 0.0
    assert c[0, 0] > 1e3


def test_rectangular_association_leaves_births_unmatched(rng):
    cfg = ObservationConfig()
    tracks = np.array([[0.0, 0, 0, 0], [50.0, 0, 50, 0]])
    z = np.array([[50.3, 49.8], [-80.0, 10.0], [0.1, -0.2]])
    obs_for_track, unmatched = associate(cost_matrix(z, tracks, cfg), FULL_REDRAW, 1000, rng)
    assert list(obs_for_track) == [2, 0]
    assert list(unmatched) == [1]
    with pytest.raises(ValueError):
        associate(np.ones((1, 2)), FULL_REDRAW, 10, rng)
