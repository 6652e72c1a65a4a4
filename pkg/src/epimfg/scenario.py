"""Scenario files: the single input format of the experiment runner.

A scenario is a JSON object with a schema version, model parameters, solver
settings, an experiment selector, and a per-experiment config block.  Unknown
fields are rejected everywhere so a misspelled rate name cannot silently fall
back to a default.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from epimfg.params import ModelParams

SCHEMA_VERSION = 1

EXPERIMENTS = ("fully-observed", "filter", "hjb", "threshold-sweep", "fpk",
               "mfe", "montecarlo", "validate")

_TOP_FIELDS = {"schema_version", "experiment", "params", "solver",
               "experiment_config", "output_dir", "seed"}
_SOLVER_FIELDS = {"n", "dt", "t_end", "tol", "damping"}

# allowed experiment_config keys per experiment
_CONFIG_FIELDS = {
    "fully-observed": {"beta_bar", "horizon", "dt_ode"},
    "filter": {"cases", "dt", "horizon"},
    "hjb": {"beta_ratios", "beta_bars", "save_policy_csv"},
    "threshold-sweep": {"beta_ratios", "limit_ratio", "probe"},
    "fpk": {"beta_bar", "policy", "horizon", "bump_center", "bump_width",
            "snapshot_times", "record_every"},
    "mfe": {"mode", "initial_betas", "max_iter", "averaging", "n_path",
            "policy_dt", "dt_ode"},
    "montecarlo": {"n_agents", "t_max", "dt_bin", "beta_bar", "policy",
                   "feedback", "event_log_agents"},
    "validate": {"mc_agents", "ensemble_agents", "fpk_horizon", "sweep_ratios",
                 "dominance_agents", "skip"},
}


@dataclass(frozen=True)
class SolverSettings:
    n: int = 128
    dt: float | None = None
    t_end: float = 2000.0
    tol: float = 1e-6
    damping: float = 0.5


@dataclass(frozen=True)
class Scenario:
    experiment: str
    params: ModelParams = field(default_factory=ModelParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    config: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {EXPERIMENTS}")
        bad = set(self.config) - _CONFIG_FIELDS[self.experiment]
        if bad:
            raise ValueError(f"unknown {self.experiment} config fields: {sorted(bad)}")


def load_scenario(path: str | Path | None, experiment: str | None = None,
                  out_dir: str | None = None, seed: int | None = None) -> Scenario:
    """Parse and validate a scenario file; CLI flags override its fields."""
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError("scenario must be a JSON object")
        unknown = set(data) - _TOP_FIELDS
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version!r} "
                             f"(expected {SCHEMA_VERSION})")

    chosen = experiment or data.get("experiment")
    if not chosen:
        raise ValueError("no experiment selected")
    if experiment and "experiment" in data and data["experiment"] != experiment:
        raise ValueError(f"scenario selects {data['experiment']!r} but the "
                         f"command line asked for {experiment!r}")

    solver_raw = data.get("solver", {})
    bad = set(solver_raw) - _SOLVER_FIELDS
    if bad:
        raise ValueError(f"unknown solver fields: {sorted(bad)}")

    return Scenario(
        experiment=chosen,
        params=ModelParams.from_dict(data.get("params", {})),
        solver=SolverSettings(**solver_raw),
        config=dict(data.get("experiment_config", {})),
        output_dir=Path(out_dir if out_dir is not None else data.get("output_dir", "out")),
        seed=int(seed if seed is not None else data.get("seed", 0)),
    )


def scenario_echo(sc: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": sc.experiment,
        "params": sc.params.to_dict(),
        "solver": {"n": sc.solver.n, "dt": sc.solver.dt, "t_end": sc.solver.t_end,
                   "tol": sc.solver.tol, "damping": sc.solver.damping},
        "experiment_config": sc.config,
        "seed": sc.seed,
    }
