"""Linear position and bearing-range observation models."""

from dataclasses import dataclass, field

import numpy as np

LINEAR = "linear"
BEARING_RANGE = "bearing_range"
MODELS = (LINEAR, BEARING_RANGE)


@dataclass(frozen=True)
class ObservationConfig:
    """Observation model tag and per-coordinate noise variances.

    For ``linear`` the variances are ``(sigma_obs_x^2, sigma_obs_y^2)``;
    for ``bearing_range`` they are ``(sigma_theta^2, sigma_r^2)``.
    """

    model: str = LINEAR
    var_a: float = 1.0
    var_b: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown observation model {self.model!r}")
        if not (self.var_a > 0 and self.var_b > 0):
            raise ValueError("observation variances must be positive")

    @property
    def variances(self) -> np.ndarray:
        return np.array([self.var_a, self.var_b])

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)


@dataclass
class ObservationSet:
    """All observations at one instant, in arbitrary (unassociated) order.

    ``values`` has shape (M, 2): ``(x, y)`` or ``(theta, r)`` per row.
    """

    k: int
    values: np.ndarray
    model: str = LINEAR
    # true target id per slot, known only for synthetic data
    truth_ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def measure(state, model: str) -> np.ndarray:
    """Noise-free observation function applied to states (..., 4) -> (..., 2)."""
    state = np.asarray(state, dtype=float)
    x, y = state[..., 0], state[..., 2]
    if model == LINEAR:
        return np.stack([x, y], axis=-1)
    if np.any((x == 0) & (y == 0)):
        raise ValueError("bearing is undefined for a target at the origin")
    return np.stack([np.arctan2(y, x), np.hypot(x, y)], axis=-1)


def residual(z, predicted, model: str) -> np.ndarray:
    """Observation minus prediction; bearing residuals are wrapped."""
    d = np.asarray(z, dtype=float) - predicted
    if model == BEARING_RANGE:
        d = d.copy()
        d[..., 0] = wrap_angle(d[..., 0])
    return d


def observe(state, cfg: ObservationConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw a noisy observation of one or more states."""
    clean = measure(state, cfg.model)
    z = clean + rng.standard_normal(clean.shape) * cfg.std
    if cfg.model == BEARING_RANGE:
        z[..., 0] = wrap_angle(z[..., 0])
    return z


def bearing_range_to_xy(theta, r) -> np.ndarray:
    """Convert bearing and range to planar ``(x, y)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("range must be non-negative")
    theta = np.asarray(theta, dtype=float)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def to_xy(z, model: str) -> np.ndarray:
    """Express observations (..., 2) as planar positions."""
    z = np.asarray(z, dtype=float)
    if model == LINEAR:
        return z.copy()
    return bearing_range_to_xy(z[..., 0], np.abs(z[..., 1]))


def log_likelihood(state, z, cfg: ObservationConfig, model: str | None = None) -> np.ndarray:
    """Unnormalized Gaussian log-likelihood ``-sum_j (z_j - h_j(s))^2 / (2 var_j)``.

    Broadcasts over leading axes of ``state`` (..., 4) and ``z`` (..., 2).
    ``model`` is the tag the observation was produced under, if known.
    """
    if model is not None and model != cfg.model:
        raise ValueError(f"observation model {model!r} does not match config {cfg.model!r}")
    d = residual(z, measure(state, cfg.model), cfg.model)
    return -np.sum(d * d / (2.0 * cfg.variances), axis=-1)
