"""Synthetic ground-truth tracks and observation sets."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from homotrack.dynamics import MotionConfig, propagate, sample_process_noise
from homotrack.observation import (
    BEARING_RANGE,
    ObservationConfig,
    ObservationSet,
    bearing_range_to_xy,
    measure,
    observe,
    wrap_angle,
)

SPAWN_POSITION_BOUND = 100.0
SPAWN_VELOCITY_BOUND = 1.0


@dataclass(frozen=True)
class Schedule:
    """Number of live targets at each instant ``k = 0..K``."""

    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not self.counts:
            raise ValueError("schedule must cover at least one instant")
        if any(c < 0 for c in self.counts):
            raise ValueError("target counts must be non-negative")

    @property
    def K(self) -> int:
        return len(self.counts) - 1

    def __len__(self):
        return len(self.counts)


def default_schedule(K: int = 200) -> Schedule:
    """2, 2, 1, 2, 3 targets at k = 0..4 and 4 targets afterwards, up to ``K``."""
    head = [2, 2, 1, 2, 3]
    counts = head[: K + 1] + [4] * max(0, K + 1 - len(head))
    return Schedule(counts)


@dataclass
class GroundTruth:
    """True states per instant, keyed by persistent target id."""

    states: list = field(default_factory=list)  # k -> {id: (4,) array}
    births: dict = field(default_factory=dict)  # k -> [ids]
    deaths: dict = field(default_factory=dict)  # k -> [ids]

    @property
    def K(self) -> int:
        return len(self.states) - 1

    def track(self, target_id: int) -> tuple[list, np.ndarray]:
        """Instants and stacked states of one target."""
        ks = [k for k, s in enumerate(self.states) if target_id in s]
        return ks, np.array([self.states[k][target_id] for k in ks])


def spawn_target(rng: np.random.Generator) -> np.ndarray:
    """Newborn state: positions uniform in [-100, 100], velocities uniform in [-1, 1]."""
    x, y = rng.uniform(-SPAWN_POSITION_BOUND, SPAWN_POSITION_BOUND, size=2)
    vx, vy = rng.uniform(-SPAWN_VELOCITY_BOUND, SPAWN_VELOCITY_BOUND, size=2)
    return np.array([x, vx, y, vy])


def synthesize(
    schedule: Schedule,
    motion: MotionConfig,
    obs: ObservationConfig,
    rng: np.random.Generator,
) -> tuple[GroundTruth, list]:
    """Generate true tracks and one shuffled observation set per instant.

    When the count drops, the most recently born targets die. For the
    bearing-range model a newborn's recorded position is the one implied
    by its (perturbed) first observation.
    """
    truth = GroundTruth()
    sets = []
    live = {}
    next_id = 0
    for k, count in enumerate(schedule.counts):
        deaths = []
        while len(live) > count:
            victim = max(live)
            deaths.append(victim)
            del live[victim]
        for tid in sorted(live):
            live[tid] = propagate(live[tid], sample_process_noise(rng, motion), cfg=motion)

        births = []
        readings = {}
        while len(live) < count:
            state = spawn_target(rng)
            if obs.model == BEARING_RANGE:
                z = measure(state, obs.model) + rng.standard_normal(2) * obs.std
                z[0] = wrap_angle(z[0])
                z[1] = abs(z[1])
                state[[0, 2]] = bearing_range_to_xy(z[0], z[1])
                readings[next_id] = z
            births.append(next_id)
            live[next_id] = state
            next_id += 1

        ids = sorted(live)
        values = np.array(
            [readings[t] if t in readings else observe(live[t], obs, rng) for t in ids]
        ).reshape(len(ids), 2)
        perm = rng.permutation(len(ids))
        sets.append(
            ObservationSet(
                k=k,
                values=values[perm],
                model=obs.model,
                truth_ids=[ids[i] for i in perm],
            )
        )
        truth.states.append({t: live[t].copy() for t in ids})
        if births:
            truth.births[k] = births
        if deaths:
            truth.deaths[k] = deaths
    return truth, sets


def write_truth_csv(path, truth: GroundTruth) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "target_id", "x", "vx", "y", "vy"])
        for k, states in enumerate(truth.states):
            for tid, s in sorted(states.items()):
                w.writerow([k, tid, *(repr(float(v)) for v in s)])


def write_observations_csv(path, sets: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "slot", "a", "b", "target_id"])
        for zs in sets:
            for slot, (a, b) in enumerate(zs.values):
                tid = zs.truth_ids[slot] if zs.truth_ids else ""
                w.writerow([zs.k, slot, repr(float(a)), repr(float(b)), tid])


def read_observations_csv(path, model: str) -> list:
    """Load observation sets written by :func:`write_observations_csv`."""
    rows = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["k"]), []).append(row)
    sets = []
    for k in sorted(rows):
        rs = sorted(rows[k], key=lambda r: int(r["slot"]))
        values = np.array([[float(r["a"]), float(r["b"])] for r in rs]).reshape(len(rs), 2)
        ids = [int(r["target_id"]) for r in rs if r.get("target_id", "") != ""]
        sets.append(ObservationSet(k=k, values=values, model=model, truth_ids=ids))
    return sets
