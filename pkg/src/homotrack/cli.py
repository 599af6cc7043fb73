"""Experiment driver.

Synthesizes a scenario, runs the generic and/or MCMC particle filter on
it and writes plain CSV/JSON outputs:

    truth.csv               k, target_id, x, vx, y, vy
    observations.csv        k, slot, a, b, target_id
    diagnostics_<f>.csv     k, ess, ess_fraction, degenerate, rmse, target_id, x, vx, y, vy
    summary.json            run-level RMSE and ess statistics per filter
    manifest.json           resolved config, seed and file list

Exit codes: 0 ok, 1 runtime failure, 2 configuration error.
"""

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from homotrack import __version__
from homotrack import rng as streams
from homotrack.association import SCHEMES
from homotrack.dynamics import MotionConfig
from homotrack.filter import FilterConfig, run_filter, write_diagnostics_csv
from homotrack.homotopy import HomotopySchedule
from homotrack.metrics import summarize_run
from homotrack.observation import BEARING_RANGE, LINEAR, ObservationConfig
from homotrack.scenario import Schedule, default_schedule, synthesize, write_observations_csv, write_truth_csv

log = logging.getLogger("homotrack")

FILTERS = ("generic", "mcmc", "both")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    seed: int = 0
    steps: int = 200
    schedule: list | None = None  # target counts per instant; None = default schedule
    motion: dict = field(default_factory=lambda: {"T": 1.0, "sigma_x2": 1.0, "sigma_y2": 1.0})
    observation: dict = field(default_factory=lambda: {"model": LINEAR, "var_a": 1.0, "var_b": 1.0})
    filter: str = "both"
    n_generic: int = 120
    n_mcmc: int = 100
    homotopy: dict = field(default_factory=lambda: {"L": 20, "sweeps": 10, "step_size": 0.1, "leapfrog_steps": 1})
    association: dict = field(default_factory=lambda: {"scheme": "full_redraw", "steps": 10000, "mode": "cloud"})
    fallback: str = "random"
    threads: int = 1
    out: str = "out"


PRESETS = {
    "paper-linear": {},
    "paper-nonlinear": {
        "observation": {"model": BEARING_RANGE, "var_a": 1e-4, "var_b": 1.0},
        "n_generic": 220,
        "n_mcmc": 200,
    },
}


def _merge(cfg: ExperimentConfig, updates: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key, value in updates.items():
        if key not in known:
            raise ConfigError(key, "unknown field")
        current = getattr(cfg, key)
        if isinstance(current, dict) and isinstance(value, dict):
            unknown = set(value) - set(current)
            if unknown:
                raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown field")
            value = {**current, **value}
        setattr(cfg, key, value)
    return cfg


def _build(section: str, factory, values: dict):
    try:
        return factory(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from None


def resolve(cfg: ExperimentConfig):
    """Validate a config and build the model objects it describes."""
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    if not isinstance(cfg.steps, int) or cfg.steps < 0:
        raise ConfigError("steps", "must be a non-negative integer")
    if cfg.filter not in FILTERS:
        raise ConfigError("filter", f"must be one of {', '.join(FILTERS)}")
    for name in ("n_generic", "n_mcmc", "threads"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or v < 1:
            raise ConfigError(name, "must be a positive integer")
    if cfg.schedule is None:
        schedule = default_schedule(cfg.steps)
    else:
        counts = list(cfg.schedule)[: cfg.steps + 1]
        if not counts:
            raise ConfigError("schedule", "must be a non-empty list of target counts")
        counts += [counts[-1]] * (cfg.steps + 1 - len(counts))
        schedule = _build("schedule", Schedule, {"counts": counts})

    motion = _build("motion", MotionConfig, cfg.motion)
    obs = _build("observation", ObservationConfig, cfg.observation)
    h = dict(cfg.homotopy)
    L = h.pop("L", 20)
    if not isinstance(L, int) or L < 0:
        raise ConfigError("homotopy.L", "must be a non-negative integer")
    homotopy = _build("homotopy", lambda **kw: HomotopySchedule.linear(L, **kw), h)
    a = cfg.association
    if a.get("scheme") not in SCHEMES:
        raise ConfigError("association.scheme", f"must be one of {', '.join(SCHEMES)}")
    filters = {}
    for name in ("generic", "mcmc"):
        if cfg.filter in (name, "both"):
            filters[name] = _build(
                "association",
                FilterConfig,
                dict(
                    n_samples=getattr(cfg, f"n_{name}"),
                    association_scheme=a["scheme"],
                    association_steps=a["steps"],
                    association_mode=a["mode"],
                    fallback=cfg.fallback,
                    threads=cfg.threads,
                ),
            )
    return schedule, motion, obs, homotopy, filters


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment and write its outputs; return the exit status."""
    try:
        schedule, motion, obs, homotopy, filters = resolve(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    if not out.is_dir():
        print(f"config error: out: output directory {str(out)!r} does not exist", file=sys.stderr)
        return 2

    try:
        truth, sets = synthesize(schedule, motion, obs, streams.stream(cfg.seed, streams.SCENARIO))
        files = ["truth.csv", "observations.csv"]
        write_truth_csv(out / "truth.csv", truth)
        write_observations_csv(out / "observations.csv", sets)
        summary = {}
        for name, fcfg in filters.items():
            key = streams.GENERIC_FILTER if name == "generic" else streams.MCMC_FILTER
            log.info("running %s filter (N=%d, K=%d)", name, fcfg.n_samples, schedule.K)
            diags = run_filter(
                sets, motion, obs, fcfg, seed=(cfg.seed, key),
                schedule=homotopy if name == "mcmc" else None,
                births=truth.births, deaths=truth.deaths,
            )
            s = summarize_run(diags, truth.states)
            fname = f"diagnostics_{name}.csv"
            write_diagnostics_csv(out / fname, diags, s.rmse)
            files.append(fname)
            summary[name] = s.to_dict()
            log.info("%s: rmse %.3f +- %.3f, ess fraction %.3f", name, s.rmse_mean, s.rmse_std, s.ess_fraction_mean)
        _dump_json(out / "summary.json", summary)
        files += ["summary.json", "manifest.json"]
        _dump_json(out / "manifest.json", {
            "version": __version__,
            "seed": cfg.seed,
            "config": dataclasses.asdict(cfg) | {"out": None, "threads": None},
            "schedule": list(schedule.counts),
            "files": files,
        })
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homotrack", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="number of observation instants K")
    p.add_argument("--filter", choices=FILTERS)
    p.add_argument("--out", help="existing output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.preset:
        cfg = _merge(cfg, PRESETS[args.preset])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file {args.config!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        if "preset" in data:
            preset = data.pop("preset")
            if preset not in PRESETS:
                raise ConfigError("preset", f"unknown preset {preset!r}")
            cfg = _merge(cfg, PRESETS[preset])
        cfg = _merge(cfg, data)
    for name in ("seed", "steps", "filter", "out", "threads"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
