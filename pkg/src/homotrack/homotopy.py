"""Drift-homotopy MCMC move for particle samples.

For each sample the chain runs over the process-noise vector ``q`` of
shape (targets, 2). The proposed state of every target is a deterministic
function of its previous state, ``q`` and the homotopy level ``eps``:

    pos = prev_pos + prev_vel * T + (1 - eps) * mu * T^2/2 + q * T^2/2

At ``eps = 0`` every sample is drifted onto the cloud-mean prediction; at
``eps = 1`` the drift term vanishes and the chain targets
``g(Y, Z) p(Y | X_prev)`` exactly.

All routines are batched: leading axis = samples.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from homotrack.dynamics import MotionConfig, propagate
from homotrack.observation import BEARING_RANGE, ObservationConfig, wrap_angle


@dataclass(frozen=True)
class HomotopySchedule:
    """Homotopy levels and HMC settings.

    Attributes:
        levels: increasing values from 0 to 1; a single level ``(1.0,)``
            skips the homotopy altogether.
        sweeps: HMC accept/reject steps per level.
        step_size: leapfrog step in fictitious time.
        leapfrog_steps: leapfrog steps per proposal.
    """

    levels: tuple = tuple(l / 20 for l in range(21))
    sweeps: int = 10
    step_size: float = 0.1
    leapfrog_steps: int = 1

    def __post_init__(self):
        levels = tuple(float(e) for e in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels or levels[-1] != 1.0:
            raise ValueError("homotopy levels must end at 1")
        if len(levels) > 1 and levels[0] != 0.0:
            raise ValueError("homotopy levels must start at 0")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("homotopy levels must be strictly increasing")
        if self.sweeps < 0 or self.leapfrog_steps < 1:
            raise ValueError("sweeps must be >= 0 and leapfrog_steps >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")

    @classmethod
    def linear(cls, L: int = 20, **kwargs) -> "HomotopySchedule":
        """Evenly spaced levels ``l / L`` for ``l = 0..L``."""
        levels = (1.0,) if L == 0 else tuple(l / L for l in range(L + 1))
        return cls(levels=levels, **kwargs)

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def total_sweeps(self) -> int:
        return len(self.levels) * self.sweeps

    @property
    def enabled(self) -> bool:
        return self.sweeps > 0


@dataclass
class SampleContext:
    """Everything the potential needs besides ``q``.

    Shapes: ``prev`` (B, L, 4), ``z`` (B, L, 2) or broadcastable,
    ``mu`` (B, L, 2).
    """

    prev: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    eps: float
    motion: MotionConfig
    obs: ObservationConfig

    def at_level(self, eps: float) -> "SampleContext":
        return SampleContext(self.prev, self.z, self.mu, eps, self.motion, self.obs)

    def subset(self, rows: slice) -> "SampleContext":
        z = self.z if self.z.shape[0] == 1 else self.z[rows]
        return SampleContext(self.prev[rows], z, self.mu[rows], self.eps, self.motion, self.obs)


def drift_means(prev: np.ndarray, T: float) -> np.ndarray:
    """Per-sample drift means ``(mu_x, mu_y)`` from the previous-step cloud.

    ``prev`` is (N, L, 4). The result (N, L, 2) moves each sample's
    noise-free prediction onto the cloud-average prediction.
    """
    pos = prev[..., [0, 2]]
    vel = prev[..., [1, 3]]
    mean_pred = np.mean(pos + vel * T, axis=0, keepdims=True)
    return (mean_pred - pos) / (T * T / 2) - 2.0 * vel / T


def _base_position(ctx: SampleContext) -> np.ndarray:
    T = ctx.motion.T
    pos = ctx.prev[..., [0, 2]] + ctx.prev[..., [1, 3]] * T
    if ctx.eps != 1.0:
        pos = pos + (1.0 - ctx.eps) * ctx.mu * (T * T / 2)
    return pos


def potential(ctx: SampleContext, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Negative log target density over the noise variables and its gradient.

    Returns ``(V, dV/dq)`` with shapes (B,) and (B, L, 2).
    """
    half_t2 = ctx.motion.T ** 2 / 2
    var_v = np.array([ctx.motion.sigma_x2, ctx.motion.sigma_y2])
    var_o = ctx.obs.variances
    pos = _base_position(ctx) + half_t2 * q

    if ctx.obs.model == BEARING_RANGE:
        px, py = pos[..., 0], pos[..., 1]
        r2 = px * px + py * py
        if np.any(r2 == 0):
            raise ValueError("propagated position at the origin has no bearing")
        r = np.sqrt(r2)
        w_theta = wrap_angle(ctx.z[..., 0] - np.arctan2(py, px))
        w_r = ctx.z[..., 1] - r
        a = w_theta / var_o[0]
        b = w_r / var_o[1]
        dpos = np.stack([a * py / r2 - b * px / r, -a * px / r2 - b * py / r], axis=-1)
        obs_term = w_theta * w_theta / (2 * var_o[0]) + w_r * w_r / (2 * var_o[1])
        obs_term = obs_term.sum(axis=-1)
    else:
        res = ctx.z - pos
        dpos = -res / var_o
        obs_term = np.sum(res * res / (2 * var_o), axis=(-2, -1))

    value = obs_term + np.sum(q * q / (2 * var_v), axis=(-2, -1))
    grad = half_t2 * dpos + q / var_v
    return value, grad


def _leapfrog(q, p, grad, potential_fn, step_size, n_steps):
    p = p - 0.5 * step_size * grad
    for i in range(n_steps):
        q = q + step_size * p
        value, grad = potential_fn(q)
        if i < n_steps - 1:
            p = p - step_size * grad
    p = p - 0.5 * step_size * grad
    return q, p, value, grad


def leapfrog(q, p, potential_fn, step_size: float, n_steps: int = 1):
    """Velocity-Verlet integration of ``H(q, p) = V(q) + p.p/2``.

    ``potential_fn(q)`` must return ``(V, dV/dq)``.
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    _, grad = potential_fn(q)
    q, p, _, _ = _leapfrog(np.asarray(q, dtype=float), np.asarray(p, dtype=float), grad,
                           potential_fn, step_size, n_steps)
    return q, p


def _kinetic(p):
    return 0.5 * np.sum(p * p, axis=tuple(range(1, p.ndim)))


def _hmc_step(q, value, grad, potential_fn, momentum, log_u, step_size, n_steps):
    """One batched HMC accept/reject step with pre-drawn randomness."""
    q_new, p_new, v_new, g_new = _leapfrog(q, momentum, grad, potential_fn, step_size, n_steps)
    h_old = value + _kinetic(momentum)
    h_new = v_new + _kinetic(p_new)
    with np.errstate(invalid="ignore"):
        accept = log_u < h_old - h_new
    shape = (-1,) + (1,) * (q.ndim - 1)
    mask = accept.reshape(shape)
    return (
        np.where(mask, q_new, q),
        np.where(accept, v_new, value),
        np.where(mask, g_new, grad),
        accept,
    )


def hmc_sweep(q, ctx: SampleContext, schedule: HomotopySchedule, rng: np.random.Generator):
    """One HMC accept/reject step at the context's level for a batch of chains.

    Returns the new ``q`` and the boolean acceptance per chain.
    """
    q = np.asarray(q, dtype=float)
    momentum = rng.standard_normal(q.shape)
    log_u = np.log(rng.random(q.shape[0]))
    value, grad = potential(ctx, q)
    q, _, _, accepted = _hmc_step(
        q, value, grad, lambda x: potential(ctx, x), momentum, log_u,
        schedule.step_size, schedule.leapfrog_steps,
    )
    return q, accepted


def _run_chains(ctx, schedule, q, momenta, log_u):
    accepted = np.zeros(q.shape[0])
    s = 0
    for eps in schedule.levels:
        level = ctx.at_level(eps)
        fn = lambda x, c=level: potential(c, x)  # noqa: E731
        if schedule.sweeps:
            value, grad = fn(q)
        for _ in range(schedule.sweeps):
            q, value, grad, acc = _hmc_step(
                q, value, grad, fn, momenta[s], log_u[s],
                schedule.step_size, schedule.leapfrog_steps,
            )
            accepted += acc
            s += 1
    return q, accepted


def refine_samples(
    prev: np.ndarray,
    z: np.ndarray,
    mu: np.ndarray,
    motion: MotionConfig,
    obs: ObservationConfig,
    schedule: HomotopySchedule,
    rng: np.random.Generator,
    threads: int = 1,
) -> tuple[np.ndarray, float]:
    """Move a batch of samples through the drift homotopy.

    Args:
        prev: previous-step states (B, L, 4).
        z: associated observations (B, L, 2) or (1, L, 2).
        mu: frozen drift means (B, L, 2).
        threads: worker threads; results do not depend on this value.

    Returns:
        New current-step states (B, L, 4) and the mean acceptance rate.
    """
    prev = np.asarray(prev, dtype=float)
    B = prev.shape[0]
    z = np.asarray(z, dtype=float)
    if z.ndim == 2:
        z = z[None]
    # randomness is laid out by sample index up front so that chunking
    # across threads cannot change any draw
    q0 = rng.standard_normal((*prev.shape[:-1], 2)) * motion.noise_std
    S = schedule.total_sweeps
    momenta = rng.standard_normal((S, *q0.shape))
    log_u = np.log(rng.random((S, B)))

    ctx = SampleContext(prev, z, np.asarray(mu, dtype=float), schedule.levels[0], motion, obs)
    if threads <= 1 or B < 2:
        q, accepted = _run_chains(ctx, schedule, q0, momenta, log_u)
    else:
        bounds = np.linspace(0, B, min(threads, B) + 1).astype(int)
        chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(
                lambda sl: _run_chains(ctx.subset(sl), schedule, q0[sl], momenta[:, sl], log_u[:, sl]),
                chunks,
            ))
        q = np.concatenate([p[0] for p in parts])
        accepted = np.concatenate([p[1] for p in parts])

    new = propagate(prev, q, cfg=motion)
    rate = float(accepted.mean() / S) if S else 1.0
    return new, rate


def refine_sample(prev, z, mu, motion, obs, schedule, rng) -> np.ndarray:
    """Single-sample form of :func:`refine_samples`: (L, 4) in, (L, 4) out."""
    new, _ = refine_samples(np.asarray(prev)[None], np.asarray(z)[None], np.asarray(mu)[None],
                            motion, obs, schedule, rng)
    return new[0]
