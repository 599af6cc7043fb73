"""Multi-target particle filters: the generic bootstrap filter and the
variant with a drift-homotopy MCMC move after resampling.

A cloud stores, for each of N samples, the pair (previous, current) of
states for every live target so that resampling copies whole pairs.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from homotrack import rng as streams
from homotrack.association import FULL_REDRAW, SCHEMES, associate, cost_matrix, metropolis_associate
from homotrack.dynamics import MotionConfig, propagate, sample_process_noise
from homotrack.homotopy import HomotopySchedule, drift_means, refine_samples
from homotrack.observation import BEARING_RANGE, ObservationConfig, ObservationSet, log_likelihood, to_xy

# smallest positive double; a raw weight below it is numerically zero
_LOG_TINY = np.log(np.nextafter(0.0, 1.0))

FALLBACK_RANDOM = "random"
FALLBACK_UNIFORM = "uniform"
CLOUD_ASSOCIATION = "cloud"
SAMPLE_ASSOCIATION = "sample"


@dataclass(frozen=True)
class FilterConfig:
    n_samples: int = 100
    association_scheme: str = FULL_REDRAW
    association_steps: int = 10000
    association_mode: str = CLOUD_ASSOCIATION
    fallback: str = FALLBACK_RANDOM
    threads: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.association_scheme not in SCHEMES:
            raise ValueError(f"unknown association scheme {self.association_scheme!r}")
        if self.association_steps < 1:
            raise ValueError("association_steps must be at least 1")
        if self.association_mode not in (CLOUD_ASSOCIATION, SAMPLE_ASSOCIATION):
            raise ValueError(f"unknown association mode {self.association_mode!r}")
        if self.fallback not in (FALLBACK_RANDOM, FALLBACK_UNIFORM):
            raise ValueError(f"unknown degenerate-weight fallback {self.fallback!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class ParticleCloud:
    """Pairs of (previous, current) states for N samples and L targets.

    Attributes:
        prev, cur: arrays (N, L, 4).
        log_weights: (N,) normalized log-weights.
        target_ids: persistent id of each target column.
        newborn: (L,) True for targets created at instant ``k``; they have
            no meaningful previous state yet.
    """

    prev: np.ndarray
    cur: np.ndarray
    log_weights: np.ndarray
    target_ids: list = field(default_factory=list)
    newborn: np.ndarray = None
    k: int = -1

    def __post_init__(self):
        if self.newborn is None:
            self.newborn = np.zeros(len(self.target_ids), dtype=bool)

    @classmethod
    def empty(cls, n_samples: int) -> "ParticleCloud":
        z = np.zeros((n_samples, 0, 4))
        return cls(z, z.copy(), np.full(n_samples, -np.log(n_samples)), [])

    @property
    def N(self) -> int:
        return self.cur.shape[0]

    @property
    def n_targets(self) -> int:
        return len(self.target_ids)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))


@dataclass
class StepDiagnostics:
    k: int
    ess: float
    ess_fraction: float
    max_log_weight: float
    degenerate: bool
    association: dict  # track id -> observation slot
    estimates: dict  # track id -> (4,) mean state
    acceptance_rate: float = float("nan")


def effective_sample_size(log_g) -> tuple[float, bool]:
    """``N / (1 + C^2)`` from raw log weight products.

    ``C`` is the coefficient of variation of the raw products, which makes
    this equal to ``(sum g)^2 / sum g^2``; the max is subtracted first.
    Returns ``(ess, degenerate)`` where ``degenerate`` means every raw
    product underflows to zero in double precision (ess is then NaN).
    """
    log_g = np.asarray(log_g, dtype=float)
    top = np.max(log_g)
    if not top >= _LOG_TINY:
        return float("nan"), True
    w = np.exp(log_g - top)
    return float(w.sum() ** 2 / np.sum(w * w)), False


def predict(cloud: ParticleCloud, motion: MotionConfig, rng: np.random.Generator) -> ParticleCloud:
    """Propagate every target of every sample independently; keep the old states as ``prev``."""
    noise = sample_process_noise(rng, motion, size=cloud.cur.shape[:-1])
    return replace(
        cloud,
        prev=cloud.cur.copy(),
        cur=propagate(cloud.cur, noise, cfg=motion),
        newborn=np.zeros(cloud.n_targets, dtype=bool),
    )


def log_g_products(cur, z, cfg: ObservationConfig) -> np.ndarray:
    """Sum over targets of per-target log-likelihoods, per sample.

    ``cur`` (N, L, 4); ``z`` (L, 2) or per-sample (N, L, 2).
    """
    if cur.shape[1] == 0:
        return np.zeros(cur.shape[0])
    return log_likelihood(cur, z, cfg).sum(axis=1)


def update_weights(
    cloud: ParticleCloud,
    z,
    cfg: ObservationConfig,
    fallback: str = FALLBACK_RANDOM,
    rng: np.random.Generator | None = None,
    targets: slice = slice(None),
) -> tuple[np.ndarray, float, float, bool]:
    """Weight samples by the product of per-target likelihoods.

    ``z`` holds the observations already ordered like the cloud's targets
    (restricted to ``targets``). When every raw product underflows, the
    fallback assigns all weight to one random sample (``random``) or uses
    uniform weights (``uniform``).

    Returns:
        normalized log-weights, ess, max raw log-weight, degenerate flag.
    """
    log_g = log_g_products(cloud.cur[:, targets], z, cfg)
    ess, degenerate = effective_sample_size(log_g)
    top = float(np.max(log_g))
    N = cloud.N
    if degenerate:
        if fallback == FALLBACK_RANDOM:
            rng = rng if rng is not None else np.random.default_rng()
            log_w = np.full(N, -np.inf)
            log_w[rng.integers(N)] = 0.0
            ess = 1.0
        else:
            log_w = np.full(N, -np.log(N))
            ess = float(N)
    else:
        log_w = log_g - logsumexp(log_g)
    return log_w, ess, top, degenerate


def resample_indices(weights, rng: np.random.Generator) -> np.ndarray:
    """Multinomial ancestors: sample j is chosen when the cumulative weight brackets a uniform draw."""
    weights = np.asarray(weights, dtype=float)
    cum = np.cumsum(weights)
    cum /= cum[-1]
    theta = rng.random(len(weights))
    return np.minimum(np.searchsorted(cum, theta, side="right"), len(weights) - 1)


def resample_pairs(cloud: ParticleCloud, rng: np.random.Generator) -> ParticleCloud:
    """Copy whole (previous, current) pairs by multinomial resampling; weights become uniform."""
    idx = resample_indices(cloud.weights(), rng)
    return _take(cloud, idx)


def _take(cloud, idx):
    return replace(
        cloud,
        prev=cloud.prev[idx],
        cur=cloud.cur[idx],
        log_weights=np.full(cloud.N, -np.log(cloud.N)),
    )


def estimate(cloud: ParticleCloud) -> np.ndarray:
    """Weighted mean state of every target, shape (L, 4)."""
    w = cloud.weights()
    return np.einsum("n,nld->ld", w, cloud.cur)


def _birth_states(z, n_samples, obs_cfg, rng):
    """Initial samples for newborn targets: jittered observation, uniform velocity."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    jitter = rng.standard_normal((n_samples, len(z), 2)) * obs_cfg.std
    noisy = z[None] + jitter
    if obs_cfg.model == BEARING_RANGE:
        pos = to_xy(noisy, obs_cfg.model)
    else:
        pos = noisy
    vel = rng.uniform(-1.0, 1.0, size=(n_samples, len(z), 2))
    states = np.empty((n_samples, len(z), 4))
    states[..., [0, 2]] = pos
    states[..., [1, 3]] = vel
    return states


@dataclass
class _Core:
    cloud: ParticleCloud
    diag: StepDiagnostics
    z_tracks: np.ndarray  # observations per surviving track, (1 or N, Ls, 2), resampled
    n_surviving: int


def _generic_core(cloud, obs_set, motion, obs_cfg, fcfg, seed, births, deaths):
    k = obs_set.k
    if obs_set.model != obs_cfg.model:
        raise ValueError(f"observation set model {obs_set.model!r} does not match config {obs_cfg.model!r}")
    if deaths:
        keep = [i for i, t in enumerate(cloud.target_ids) if t not in set(deaths)]
        cloud = replace(
            cloud,
            prev=cloud.prev[:, keep],
            cur=cloud.cur[:, keep],
            target_ids=[cloud.target_ids[i] for i in keep],
            newborn=cloud.newborn[keep],
        )
    z_all = np.asarray(obs_set.values, dtype=float).reshape(-1, 2)
    Ls = cloud.n_targets

    # associate against the noise-free prediction of the cloud mean
    rng_assoc = streams.stream(seed, k, streams.ASSOCIATE)
    predicted_mean = propagate(cloud.cur.mean(axis=0), np.zeros((Ls, 2)), cfg=motion)
    cost = cost_matrix(z_all, predicted_mean, obs_cfg)
    obs_for_track, unmatched = associate(
        cost.reshape(len(z_all), Ls), fcfg.association_scheme, fcfg.association_steps, rng_assoc
    )
    if births is not None and len(births) != len(unmatched):
        raise ValueError(
            f"instant {k}: {len(unmatched)} unmatched observations but {len(births)} births"
        )
    if obs_set.truth_ids:
        # synthetic data: label newborn tracks with the id that produced the slot
        births = [obs_set.truth_ids[s] for s in unmatched]
    elif births is None:
        start = max(cloud.target_ids, default=-1) + 1
        births = list(range(start, start + len(unmatched)))

    cloud = predict(cloud, motion, streams.stream(seed, k, streams.PREDICT))

    if fcfg.association_mode == SAMPLE_ASSOCIATION and Ls > 1:
        z_surv = z_all[obs_for_track]
        slots = np.empty((cloud.N, Ls), dtype=int)
        for n in range(cloud.N):
            c = cost_matrix(z_surv, cloud.cur[n], obs_cfg)
            m = metropolis_associate(c, fcfg.association_scheme, fcfg.association_steps, rng_assoc)
            slots[n, m] = obs_for_track
        z_tracks = z_all[slots]
    else:
        z_tracks = z_all[obs_for_track][None]

    if len(unmatched):
        newborn = _birth_states(z_all[unmatched], cloud.N, obs_cfg, streams.stream(seed, k, streams.BIRTH))
        cloud = replace(
            cloud,
            prev=np.concatenate([cloud.prev, newborn], axis=1),
            cur=np.concatenate([cloud.cur, newborn], axis=1),
            target_ids=cloud.target_ids + list(births),
            newborn=np.concatenate([cloud.newborn, np.ones(len(births), dtype=bool)]),
        )

    log_w, ess, top, degenerate = update_weights(
        cloud, z_tracks, obs_cfg, fcfg.fallback,
        streams.stream(seed, k, streams.FALLBACK), targets=slice(0, Ls),
    )
    cloud = replace(cloud, log_weights=log_w, k=k)
    est = estimate(cloud)
    association = {t: int(s) for t, s in zip(cloud.target_ids, [*obs_for_track, *unmatched])}
    diag = StepDiagnostics(
        k=k,
        ess=ess,
        ess_fraction=ess / cloud.N,
        max_log_weight=top,
        degenerate=degenerate,
        association=association,
        estimates={t: est[i] for i, t in enumerate(cloud.target_ids)},
    )
    idx = resample_indices(cloud.weights(), streams.stream(seed, k, streams.RESAMPLE))
    cloud = _take(cloud, idx)
    if z_tracks.shape[0] > 1:
        z_tracks = z_tracks[idx]
    return _Core(cloud, diag, z_tracks, Ls)


def step_generic(
    cloud: ParticleCloud,
    obs_set: ObservationSet,
    motion: MotionConfig,
    obs_cfg: ObservationConfig,
    fcfg: FilterConfig,
    seed: int,
    births=None,
    deaths=(),
) -> tuple[ParticleCloud, StepDiagnostics]:
    """Associate, predict, weight and resample for one observation instant.

    Args:
        seed: run seed; per-stage streams are derived from it and ``obs_set.k``.
        births: ids of targets appearing at this instant. Newborn tracks take
            the ids recorded in ``obs_set.truth_ids`` for their slots when
            present, else these ids in slot order, else fresh ids.
        deaths: ids of targets to drop before prediction.
    """
    core = _generic_core(cloud, obs_set, motion, obs_cfg, fcfg, seed, births, deaths)
    return core.cloud, core.diag


def step_mcmc(
    cloud: ParticleCloud,
    obs_set: ObservationSet,
    motion: MotionConfig,
    obs_cfg: ObservationConfig,
    fcfg: FilterConfig,
    schedule: HomotopySchedule,
    seed: int,
    births=None,
    deaths=(),
) -> tuple[ParticleCloud, StepDiagnostics]:
    """:func:`step_generic` followed by a drift-homotopy move of every surviving target.

    After the move the samples are unweighted; the diagnostics report the
    ess of their raw likelihood products and their plain mean.
    """
    core = _generic_core(cloud, obs_set, motion, obs_cfg, fcfg, seed, births, deaths)
    Ls = core.n_surviving
    if not schedule.enabled or Ls == 0:
        return core.cloud, core.diag

    cloud = core.cloud
    prev = cloud.prev[:, :Ls]
    mu = drift_means(prev, motion.T)
    moved, rate = refine_samples(
        prev, core.z_tracks, mu, motion, obs_cfg, schedule,
        streams.stream(seed, obs_set.k, streams.MCMC), threads=fcfg.threads,
    )
    cur = cloud.cur.copy()
    cur[:, :Ls] = moved
    cloud = replace(cloud, cur=cur)

    log_g = log_g_products(moved, core.z_tracks, obs_cfg)
    ess, degenerate = effective_sample_size(log_g)
    if degenerate:
        ess = 1.0
    est = cur.mean(axis=0)
    diag = replace(
        core.diag,
        ess=ess,
        ess_fraction=ess / cloud.N,
        max_log_weight=float(np.max(log_g)),
        degenerate=degenerate,
        estimates={t: est[i] for i, t in enumerate(cloud.target_ids)},
        acceptance_rate=rate,
    )
    return cloud, diag


def run_filter(
    sets: list,
    motion: MotionConfig,
    obs_cfg: ObservationConfig,
    fcfg: FilterConfig,
    seed: int,
    schedule: HomotopySchedule | None = None,
    births: dict | None = None,
    deaths: dict | None = None,
) -> list:
    """Filter a sequence of observation sets; ``schedule=None`` runs the generic filter.

    ``births``/``deaths`` map instants to target ids (as in
    :class:`homotrack.scenario.GroundTruth`).
    """
    births = births or {}
    deaths = deaths or {}
    cloud = ParticleCloud.empty(fcfg.n_samples)
    out = []
    for obs_set in sets:
        b = births.get(obs_set.k, []) if births or deaths else None
        d = deaths.get(obs_set.k, [])
        if schedule is None:
            cloud, diag = step_generic(cloud, obs_set, motion, obs_cfg, fcfg, seed, b, d)
        else:
            cloud, diag = step_mcmc(cloud, obs_set, motion, obs_cfg, fcfg, schedule, seed, b, d)
        out.append(diag)
    return out


def write_diagnostics_csv(path, diagnostics: list, rmse: list | None = None) -> None:
    """Long format: one row per (instant, target)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "ess", "ess_fraction", "degenerate", "rmse", "target_id", "x", "vx", "y", "vy"])
        for i, d in enumerate(diagnostics):
            r = repr(float(rmse[i])) if rmse is not None else ""
            for tid, s in sorted(d.estimates.items()):
                w.writerow([d.k, repr(d.ess), repr(d.ess_fraction), int(d.degenerate), r, tid,
                            *(repr(float(v)) for v in s)])
