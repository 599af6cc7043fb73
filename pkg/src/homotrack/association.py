"""Observation-to-target association by Metropolis search over permutations.

A map is stored as an integer array ``m`` with ``m[i]`` the target index
assigned to observation ``i``. Costs are a square matrix with
``cost[i, j]`` the residual energy of observation ``i`` against target ``j``.
"""

from itertools import permutations

import numpy as np

from homotrack.observation import ObservationConfig, measure, residual

FULL_REDRAW = "full_redraw"
PAIR_SWAP = "pair_swap"
SCHEMES = (FULL_REDRAW, PAIR_SWAP)

BRUTE_FORCE_LIMIT = 8


def cost_matrix(z, states, cfg: ObservationConfig) -> np.ndarray:
    """Residual energies ``sum_j (z_ij - h_j(x_m))^2 / (2 var_j)`` for every pair.

    Args:
        z: observations (M, 2).
        states: target states (L, 4).
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    h = measure(np.asarray(states, dtype=float).reshape(-1, 4), cfg.model)
    d = residual(z[:, None, :], h[None, :, :], cfg.model)
    return np.sum(d * d / (2.0 * cfg.variances), axis=-1)


def association_energy(cost, assoc) -> float:
    cost = np.asarray(cost, dtype=float)
    assoc = np.asarray(assoc, dtype=int)
    if cost.shape != (len(assoc), len(assoc)):
        raise ValueError(f"map of length {len(assoc)} does not fit cost matrix {cost.shape}")
    return float(cost[np.arange(len(assoc)), assoc].sum())


def brute_force_associate(cost) -> tuple[np.ndarray, float]:
    """Exact minimum-energy map; ties go to the lexicographically smallest map."""
    cost = np.asarray(cost, dtype=float)
    n = len(cost)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"refusing to enumerate {n}! maps (limit {BRUTE_FORCE_LIMIT})")
    best, best_e = None, np.inf
    rows = np.arange(n)
    # permutations() yields in lexicographic order, so strict < keeps the first tie
    for perm in permutations(range(n)):
        e = cost[rows, list(perm)].sum()
        if e < best_e:
            best, best_e = perm, e
    return np.array(best, dtype=int), float(best_e)


def metropolis_associate(
    cost,
    scheme: str = FULL_REDRAW,
    steps: int = 10000,
    rng: np.random.Generator | None = None,
    initial=None,
) -> np.ndarray:
    """Sample maps with density proportional to ``exp(-energy)``; return the last accepted one.

    ``full_redraw`` proposes a fresh uniformly random permutation every
    step; ``pair_swap`` exchanges the targets of two random observations.
    """
    cost = np.asarray(cost, dtype=float)
    n = len(cost)
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown proposal scheme {scheme!r}")
    if n <= 1:
        return np.arange(n)
    rng = rng if rng is not None else np.random.default_rng()

    current = np.arange(n) if initial is None else np.array(initial, dtype=int)
    e_cur = association_energy(cost, current)
    log_u = np.log(rng.random(steps))

    if scheme == FULL_REDRAW:
        proposals = np.argsort(rng.random((steps, n)), axis=1)
        energies = cost[np.arange(n), proposals].sum(axis=1)
        idx = -1
        for t in range(steps):
            if log_u[t] < e_cur - energies[t]:
                idx, e_cur = t, energies[t]
        return current if idx < 0 else proposals[idx].copy()

    pairs = rng.integers(0, n, size=(steps, 2))
    # second index is drawn from the n-1 others
    pairs[:, 1] = (pairs[:, 0] + 1 + rng.integers(0, n - 1, size=steps)) % n
    c = cost.tolist()
    m = current.tolist()
    for (i, j), lu in zip(pairs.tolist(), log_u.tolist()):
        mi, mj = m[i], m[j]
        delta = c[i][mj] + c[j][mi] - c[i][mi] - c[j][mj]
        if lu < -delta:
            m[i], m[j] = mj, mi
    return np.array(m, dtype=int)


def associate(
    cost,
    scheme: str = FULL_REDRAW,
    steps: int = 10000,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Match tracks to a possibly larger set of observations.

    ``cost`` is (M, L) with M >= L. The L observations with the smallest
    best-case cost are matched to the tracks by Metropolis search; the rest
    are returned as unmatched (candidate births).

    Returns:
        ``obs_for_track`` (L,) giving the observation index of each track,
        and the sorted indices of unmatched observations.
    """
    cost = np.asarray(cost, dtype=float)
    M, L = cost.shape
    if M < L:
        raise ValueError(f"{L} tracks cannot be matched to {M} observations")
    if L == 0:
        return np.zeros(0, dtype=int), np.arange(M)
    if M == L:
        chosen = np.arange(M)
    else:
        chosen = np.sort(np.argsort(cost.min(axis=1), kind="stable")[:L])
    sub = cost[chosen]
    assoc = metropolis_associate(sub, scheme=scheme, steps=steps, rng=rng)
    obs_for_track = np.empty(L, dtype=int)
    obs_for_track[assoc] = chosen
    unmatched = np.setdiff1d(np.arange(M), chosen)
    return obs_for_track, unmatched
