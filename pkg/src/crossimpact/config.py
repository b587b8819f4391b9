"""Scenario configuration files and the runner behind the command line.

A scenario is one JSON document with the sections ``market``, ``kernel``,
``signal``, ``grid`` and ``run``. :func:`canonical_json` gives a byte-stable
form, so a configuration echoed into a report parses back to the same text.
"""
from __future__ import annotations

import copy
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ._exceptions import ConfigParse, CrossImpactError, InadmissibleKernel
from .admissibility import audit
from .discretization import Grid, MarketParams, assemble_D
from .kernels import PropagatorSpec
from .signals import SignalKind, SignalModel, simulate_ou_path
from .solver import (TrailingFactors, solve_deterministic, solve_stochastic_path,
                     solve_stochastic_resolvent)

METHODS = ("deterministic", "trailing", "resolvent")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["market", "kernel", "grid"],
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "market": {
            "type": "object",
            "required": ["Lambda", "X0"],
            "additionalProperties": False,
            "properties": {"Lambda": _matrix, "X0": _vector, "Sigma": _matrix,
                           "gamma": {"type": "number", "minimum": 0},
                           "varrho": {"type": "number", "minimum": 0}, "Pi": _matrix},
        },
        "kernel": {"type": "object", "required": ["kind"]},
        "signal": {"type": "object", "required": ["kind"]},
        "grid": {
            "type": "object",
            "required": ["n", "T"],
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 2},
                           "T": {"type": "number", "exclusiveMinimum": 0}},
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["solve", "audit", "sweep", "figure-preset"]},
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "method": {"enum": list(METHODS)},
                "force_inadmissible": {"type": "boolean"},
                "symmetrize": {"type": "boolean"},
                "out_dir": {"type": ["string", "null"]},
            },
        },
    },
}


@dataclass(frozen=True)
class RunOptions:
    mode: str = "solve"
    seeds: tuple = ()
    method: str = "deterministic"
    force_inadmissible: bool = False
    symmetrize: bool = True
    out_dir: str | None = None

    def to_dict(self):
        return {"mode": self.mode, "seeds": list(self.seeds), "method": self.method,
                "force_inadmissible": self.force_inadmissible,
                "symmetrize": self.symmetrize, "out_dir": self.out_dir}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    market: MarketParams
    kernel: PropagatorSpec
    signal: SignalModel
    grid: Grid
    run: RunOptions = field(default_factory=RunOptions)
    description: str = ""

    def to_dict(self):
        market = self.market.to_dict()
        del market["T"]
        return {"description": self.description, "market": market,
                "kernel": self.kernel.to_dict(), "signal": self.signal.to_dict(),
                "grid": {"n": self.grid.n, "T": self.grid.T}, "run": self.run.to_dict()}

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and canonical_json(self) == canonical_json(other)

    def replace(self, **changes):
        """Copy with some configuration values replaced by dotted path,
        e.g. ``replace(**{"grid.n": 50})``."""
        d = self.to_dict()
        for path, value in changes.items():
            set_path(d, path, value)
        return parse_config(d)


def canonical_json(config):
    d = config.to_dict() if isinstance(config, ScenarioConfig) else config
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def set_path(d, path, value):
    keys = path.split(".")
    node = d
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigParse(f"unknown configuration path {path!r}")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigParse(f"unknown configuration path {path!r}")
    node[keys[-1]] = value


def parse_config(data):
    """Validate a configuration mapping and build the model objects.

    Raises
    ------
    ConfigParse
        On schema violations and on inconsistent values (for example matrix
        sizes that disagree with ``X0``).
    """
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigParse(f"{loc}: {exc.message}") from None
    try:
        g = data["grid"]
        grid = Grid(g["n"], g["T"])
        market = MarketParams(T=grid.T, **data["market"])
        kernel = PropagatorSpec.from_dict(data["kernel"])
        signal_d = data.get("signal")
        signal = SignalModel.zero(market.N) if signal_d is None else SignalModel.from_dict(signal_d)
        run_d = dict(data.get("run", {}))
        run_d["seeds"] = tuple(run_d.get("seeds", ()))
        run = RunOptions(**run_d)
    except (CrossImpactError, KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(str(exc)) from None
    if kernel.N != market.N or signal.N != market.N:
        raise ConfigParse(f"kernel (N={kernel.N}) and signal (N={signal.N}) must match "
                          f"X0 (N={market.N})")
    if run.seeds and signal.kind is not SignalKind.OU:
        raise ConfigParse("seeds require an OU signal")
    if run.seeds and run.method == "deterministic":
        run = RunOptions(**{**run.to_dict(), "seeds": run.seeds, "method": "trailing"})
    return ScenarioConfig(market, kernel, signal, grid, run, data.get("description", ""))


def load_config(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)


def preset_names():
    root = resources.files("crossimpact") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    """Return ``(description, {scenario: ScenarioConfig})`` for a preset."""
    root = resources.files("crossimpact") / "presets"
    res = root / f"{name}.json"
    if not res.is_file():
        raise ConfigParse(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    data = json.loads(res.read_text())
    return data["description"], {k: parse_config(v) for k, v in data["scenarios"].items()}


# running -------------------------------------------------------------------

def _write_csv(path, report, N):
    cols = [report.strategy.grid.nodes[:, None], report.u, report.inventory, report.distortion,
            report.signal]
    header = ["t"] + [f"{p}_{i + 1}" for p in "uXDI" for i in range(N)]
    data = np.hstack(cols)
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=",".join(header),
                   comments="", newline="\n")


def _report_dict(config, report, adm, seed):
    from . import __version__

    return {
        "version": __version__,
        "config": config.to_dict(),
        "method": report.method,
        "seed": seed,
        "objective": report.objective.to_dict(),
        "foc_residual": report.foc_residual,
        "admissibility": adm.to_dict(),
        "timing": {"wall_time": report.wall_time},
    }


def _write_json(path, d):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(d, sort_keys=True, indent=2) + "\n")


def run_audit(config, n=None):
    grid = config.grid if n is None else Grid(n, config.grid.T)
    return audit(config.kernel, grid.n, grid.T)


def run_scenario(config, out_dir, dump_matrices=False, workers=None):
    """Solve a scenario and write ``trajectories.csv`` and ``report.json``.

    With seeds, each seeded OU path is solved on a worker thread and written
    to its own ``seed_<s>`` subdirectory, and ``summary.json`` collects the
    Monte Carlo mean objective and its standard error.

    Returns
    -------
    dict
        Summary of the run.

    Raises
    ------
    InadmissibleKernel
        If the kernel fails the audit and the run is not forced.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    market, spec, grid, run = config.market, config.kernel, config.grid, config.run
    adm = audit(spec, grid.n, grid.T)
    if not adm.passed and not run.force_inadmissible:
        raise InadmissibleKernel(f"kernel failed the audit: {adm.structural.reason} "
                                 f"({adm.grid.verdict.value})")
    system = assemble_D(market, spec, grid, symmetrize=run.symmetrize)
    if dump_matrices:
        np.save(out / "D.npy", system.D)
        np.save(out / "kernel_lower.npy", system.kernel_lower)
        np.save(out / "kernel_upper.npy", system.kernel_upper)
    kw = dict(system=system, check=False)
    if not run.seeds:
        if run.method == "deterministic":
            rep = solve_deterministic(market, spec, grid, model=config.signal, **kw)
        else:
            solve = solve_stochastic_path if run.method == "trailing" else solve_stochastic_resolvent
            rep = solve(market, spec, config.signal, None, grid, **kw)
        _write_csv(out / "trajectories.csv", rep, market.N)
        _write_json(out / "report.json", _report_dict(config, rep, adm, None))
        return {"objective": rep.objective.total, "foc_residual": rep.foc_residual,
                "passed": adm.passed}

    factors = TrailingFactors(system)
    # factorize up front so worker threads only read the cache
    for k in range(grid.n + 1):
        factors.solve(k, np.zeros((grid.n + 1 - k) * market.N))

    def one(seed):
        path = simulate_ou_path(config.signal, grid, seed)
        if run.method == "resolvent":
            rep = solve_stochastic_resolvent(market, spec, config.signal, path, grid, **kw)
        else:
            rep = solve_stochastic_path(market, spec, config.signal, path, grid,
                                        factors=factors, **kw)
        d = out / f"seed_{seed}"
        d.mkdir(exist_ok=True)
        _write_csv(d / "trajectories.csv", rep, market.N)
        _write_json(d / "report.json", _report_dict(config, rep, adm, seed))
        return rep.objective.total, rep.foc_residual

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, run.seeds))
    totals = np.array([r[0] for r in results])
    summary = {
        "seeds": list(run.seeds),
        "objective_mean": float(totals.mean()),
        "objective_stderr": float(totals.std(ddof=1) / np.sqrt(len(totals)))
        if len(totals) > 1 else None,
        "foc_residual": max(r[1] for r in results),
        "passed": adm.passed,
    }
    _write_json(out / "summary.json", summary)
    return summary


def default_out_dir():
    return os.environ.get("CROSSIMPACT_OUT_DIR", "crossimpact_out")


def run_sweep(config, param, values, out_dir, workers=None):
    """Run ``config`` once per value of the dotted configuration path ``param``."""
    configs = []
    for v in values:
        d = copy.deepcopy(config.to_dict())
        set_path(d, param, v)
        configs.append((v, parse_config(d)))
    out = Path(out_dir)

    def one(item):
        v, cfg = item
        t0 = time.perf_counter()
        tag = f"{param}={json.dumps(v, separators=(',', ':'))}".replace("/", "_")
        res = run_scenario(cfg, out / tag)
        return {"value": v, "dir": tag, "wall_time": time.perf_counter() - t0, **res}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, configs))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "sweep.json", {"param": param, "runs": rows})
    return rows
