"""Tracking error against ground truth."""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class RunSummary:
    rmse: list
    rmse_mean: float
    rmse_std: float
    ess_fraction: list
    ess_fraction_mean: float

    def to_dict(self, series: bool = False) -> dict:
        d = asdict(self)
        if not series:
            d.pop("rmse")
            d.pop("ess_fraction")
        return d


def rmse_per_target(truth: dict, estimates: dict) -> float:
    """Root mean over targets of the squared full-state (position and velocity) error.

    Both arguments map target id to a (4,) state and must share the same ids.
    """
    if set(truth) != set(estimates):
        raise ValueError(f"target ids differ: truth {sorted(truth)} vs estimates {sorted(estimates)}")
    if not truth:
        return 0.0
    ids = sorted(truth)
    d = np.array([np.asarray(truth[i], float) - np.asarray(estimates[i], float) for i in ids])
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def rmse_series(truth_states: list, diagnostics: list) -> list:
    return [rmse_per_target(truth_states[d.k], d.estimates) for d in diagnostics]


def summarize_run(diagnostics: list, truth_states: list) -> RunSummary:
    """Aggregate per-instant RMSE and ess fraction over a run (population std)."""
    rmse = rmse_series(truth_states, diagnostics)
    ess = [float(d.ess_fraction) for d in diagnostics]
    return RunSummary(
        rmse=rmse,
        rmse_mean=float(np.mean(rmse)),
        rmse_std=float(np.std(rmse)),
        ess_fraction=ess,
        ess_fraction_mean=float(np.mean(ess)),
    )
