"""Near-constant-velocity motion model.

States are ``(x, vx, y, vy)`` arrays; every function accepts a trailing
axis of length 4 and broadcasts over any leading axes.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class MotionConfig:
    """Sampling interval and process-noise variances."""

    T: float = 1.0
    sigma_x2: float = 1.0
    sigma_y2: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not (self.sigma_x2 > 0 and self.sigma_y2 > 0):
            raise ValueError("process-noise variances must be positive")

    @cached_property
    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return transition_matrices(self)

    @property
    def noise_std(self) -> np.ndarray:
        return np.sqrt([self.sigma_x2, self.sigma_y2])


def transition_matrices(cfg: MotionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return the state transition matrix ``A`` (4x4) and noise gain ``B`` (4x2)."""
    T = cfg.T
    A = np.array(
        [
            [1.0, T, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, T],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [T * T / 2, 0.0],
            [T, 0.0],
            [0.0, T * T / 2],
            [0.0, T],
        ]
    )
    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def propagate(state, noise, offset=None, cfg: MotionConfig = MotionConfig()) -> np.ndarray:
    """Advance states one interval: ``A @ s + c + B @ v``.

    Args:
        state: array (..., 4).
        noise: process noise (..., 2).
        offset: drift offset (..., 4); ``None`` means zero.
        cfg: motion configuration.
    """
    A, B = cfg.matrices
    out = np.asarray(state, dtype=float) @ A.T + np.asarray(noise, dtype=float) @ B.T
    if offset is not None:
        out = out + offset
    return out


def drift_offset(mu, eps: float, cfg: MotionConfig) -> np.ndarray:
    """Modified-drift offset ``(1 - eps) * (mu_x T^2/2, mu_x T, mu_y T^2/2, mu_y T)``.

    ``mu`` has shape (..., 2) holding ``(mu_x, mu_y)``.
    """
    _, B = cfg.matrices
    return (1.0 - eps) * (np.asarray(mu, dtype=float) @ B.T)


def sample_process_noise(rng: np.random.Generator, cfg: MotionConfig, size=()) -> np.ndarray:
    """Draw independent ``(v_x, v_y)`` pairs with variances ``sigma_x2, sigma_y2``."""
    if isinstance(size, int):
        size = (size,)
    return rng.standard_normal((*size, 2)) * cfg.noise_std
