"""Orchestration behind the command-line subcommands.

Each ``run_*`` function takes a validated :class:`~jumpwass.scenario.Scenario`,
writes its artifacts into ``scenario.outputs.dir`` and returns the in-memory
result. Every artifact embeds the scenario hash, the seed and the package
version, and contains no timestamps, so reruns are byte-identical.

Artifacts (``<name>`` is the scenario name):

==============================  ==================================================
``<name>_report.json``          :class:`~jumpwass.bounds.BoundReport` plus provenance
``<name>_report.csv``           one flat row, columns :data:`REPORT_COLUMNS`
``<name>_paths.csv``            per-node records of the first paths
``<name>_constants.json``       flow constants (also cached, see below)
``<name>_sweep_<param>.csv``    one row per swept value, columns :data:`SWEEP_COLUMNS`
``<name>_distances.json``       terminal-law and jump-measure distances
==============================  ==================================================

Flow constants are cached in ``$JUMPWASS_CACHE_DIR`` (default
``~/.cache/jumpwass``), keyed by the ``X*`` spec, grid, seed, budgets and
version.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bounds import BoundReport, evaluate_bounds, prop41_bound, theta_from_run
from .distances import SampleSet, dW3_dictionary_lower_bound, fm_discrete, w1_empirical
from .flow import ConstantSet, default_start_grid, estimate_constants
from .measures import GammaLevy, frullani_tv, pushforward, tilt_square, tv_distance
from .scenario import Scenario, parse_scenario, set_field
from .simulate import _node_steps, run_coupled, simulate_coupled

__all__ = ["run_verify", "run_constants", "run_sweep", "run_distances", "VerifyResult", "REPORT_COLUMNS",
           "SWEEP_COLUMNS", "cache_dir", "EXIT_OK", "EXIT_VIOLATION"]

EXIT_OK = 0
EXIT_VIOLATION = 1

REPORT_COLUMNS = ("scenario", "scenario_hash", "seed", "version", "n_paths", "aborted") + BoundReport.CSV_FIELDS
SWEEP_COLUMNS = ("parameter", "value") + BoundReport.CSV_FIELDS


def cache_dir() -> Path:
    return Path(os.environ.get("JUMPWASS_CACHE_DIR", Path.home() / ".cache" / "jumpwass"))


def dumps_json(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not JSON serializable: {type(o).__name__}")

    return json.dumps(obj, sort_keys=True, indent=2, default=default, allow_nan=True) + "\n"


def provenance(scenario: Scenario) -> dict:
    return {"scenario": scenario.name, "scenario_hash": scenario.hash, "seed": scenario.grid.seed,
            "version": __version__}


def _out_dir(scenario: Scenario) -> Path:
    out = Path(scenario.outputs.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def _constants_key(scenario: Scenario) -> str:
    b = scenario.budgets
    payload = {"xstar": scenario.xstar.to_json(), "grid": scenario.grid.to_json(), "paths": b.constant_paths,
               "start_points": b.start_points, "safety": b.safety, "version": __version__}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def run_constants(scenario: Scenario, use_cache: bool = True, write: bool = True):
    """Estimate (or load from cache) the flow constants of ``X*``.

    Returns ``(ConstantSet, cache_hit)``. The cached text is copied verbatim
    to ``<name>_constants.json``.
    """
    key = _constants_key(scenario)
    cached = cache_dir() / f"constants-{key}.json"
    hit = use_cache and cached.exists()
    if hit:
        text = cached.read_text()
    else:
        b = scenario.budgets
        consts = estimate_constants(scenario.xstar, scenario.grid,
                                    default_start_grid(scenario.xstar.x0, b.start_points),
                                    n_paths=b.constant_paths, safety=b.safety)
        meta = dict(consts.metadata, cache_key=key, version=__version__)
        text = dumps_json(dict(consts.to_json(), metadata=meta))
        if use_cache:
            cached.parent.mkdir(parents=True, exist_ok=True)
            tmp = cached.with_suffix(f".tmp{os.getpid()}")
            tmp.write_text(text)
            tmp.replace(cached)
    if write:
        (_out_dir(scenario) / f"{scenario.name}_constants.json").write_text(text)
    return ConstantSet.from_json(json.loads(text)), hit


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _prop41_aggregate(scenario: Scenario) -> Optional[float]:
    """``E int_0^T`` of the three-term jump bound along ``X``, on a path and node subsample."""
    sx, ss, grid = scenario.x, scenario.xstar, scenario.grid
    if not (sx.has_jumps or ss.has_jumps):
        return 0.0
    b = scenario.budgets
    n = min(grid.n_paths, b.fm_paths)
    block = next(simulate_coupled(sx, ss, grid, record="nodes", node_count=b.node_count,
                                  path_ids=np.arange(n), block_size=n))
    steps = _node_steps(grid.n_steps, b.node_count)
    ok = ~block.aborted
    total = np.zeros(int(ok.sum()))
    for q, step in enumerate(steps):
        t = float(step * grid.dt)
        nu = sx.measure_at(t, grid.epsilon, grid.n_nodes)
        nus = ss.measure_at(t, grid.epsilon, grid.n_nodes)
        xs = block.x_nodes[ok, q]
        total += np.array([prop41_bound(sx.g, ss.g, nu, nus, x=float(x), t=t) for x in xs])
    return float(total.mean() * grid.horizon / steps.size) if total.size else None


def _diagnostics(scenario: Scenario) -> dict:
    sx, ss, grid = scenario.x, scenario.xstar, scenario.grid
    out = {}
    nu = sx.measure_at(0.0, grid.epsilon, grid.n_nodes)
    nus = ss.measure_at(0.0, grid.epsilon, grid.n_nodes)
    out["tv_compensators_t0"] = tv_distance(nu, nus)
    if isinstance(sx.levy, GammaLevy) and isinstance(ss.levy, GammaLevy) and sx.has_jumps and ss.has_jumps:
        # untruncated total variation between the two gamma measures
        out["frullani_tv_t0"] = frullani_tv(float(sx.levy.shape_rate(0.0)), float(ss.levy.shape_rate(0.0)))
    return out


@dataclass
class VerifyResult:
    report: BoundReport
    exit_code: int
    artifacts: dict


def run_verify(scenario: Scenario, constants: Optional[ConstantSet] = None, write: bool = True) -> VerifyResult:
    """Simulate the coupled pair, estimate constants and gaps, evaluate every bound and its verdict."""
    grid, b = scenario.grid, scenario.budgets
    artifacts = {}
    if constants is None:
        constants, _ = run_constants(scenario, write=write)
    out = _out_dir(scenario) if write else None
    csv_path = out / f"{scenario.name}_paths.csv" if write and b.csv_paths > 0 else None
    run = run_coupled(scenario.x, scenario.xstar, grid, threads=b.threads, node_count=b.node_count,
                      fm_paths=b.fm_paths, csv_path=csv_path, csv_paths=b.csv_paths)
    if csv_path is not None:
        artifacts["paths_csv"] = str(csv_path)
    theta = theta_from_run(run)
    metadata = dict(provenance(scenario))
    metadata.update({
        "grid": grid.to_json(),
        "n_paths_used": int(run.x_terminal.size),
        "aborted": run.aborted,
        "fm_failures": run.fm_failures,
        "fm_paths_used": run.fm_paths_used,
        "node_count": b.node_count,
        "diagnostics": _diagnostics(scenario),
    })
    report = evaluate_bounds(run.x_terminal, run.xstar_terminal, theta, constants, K=b.K,
                             prop41_mean=_prop41_aggregate(scenario), metadata=metadata)
    code = EXIT_VIOLATION if report.violated else EXIT_OK
    if write:
        js = out / f"{scenario.name}_report.json"
        js.write_text(dumps_json(report.to_json()))
        cs = out / f"{scenario.name}_report.csv"
        with open(cs, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            row = dict(provenance(scenario), n_paths=grid.n_paths, aborted=run.aborted, **report.csv_row())
            w.writerow([format_cell(row[c]) for c in REPORT_COLUMNS])
        artifacts.update(report_json=str(js), report_csv=str(cs))
    return VerifyResult(report, code, artifacts)


def format_cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def run_sweep(scenario: Scenario, parameter: str, values: Sequence[float], write: bool = True) -> list:
    """Re-run :func:`run_verify` with ``parameter`` (dotted path, e.g. ``xstar.sigma.c``) set to each value.

    Returns one dict per value with columns :data:`SWEEP_COLUMNS`.
    """
    base = scenario.to_json()
    rows = []
    for v in values:
        sc = parse_scenario(set_field(base, parameter, float(v)))
        res = run_verify(sc, write=False)
        rows.append(dict(parameter=parameter, value=float(v), **res.report.csv_row()))
    if write:
        path = _out_dir(scenario) / f"{scenario.name}_sweep_{parameter.replace('.', '_')}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in rows:
                w.writerow([format_cell(r[c]) for c in SWEEP_COLUMNS])
    return rows


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def run_distances(scenario: Scenario, write: bool = True) -> dict:
    """Distances between the terminal laws and between the tilted jump measures at ``(0, x0)``."""
    grid = scenario.grid
    xs, xss = [], []
    for block in simulate_coupled(scenario.x, scenario.xstar, grid, threads=scenario.budgets.threads):
        ok = ~block.aborted
        xs.append(block.x_terminal[ok])
        xss.append(block.xstar_terminal[ok])
    a, b = np.concatenate(xs), np.concatenate(xss)
    x0 = scenario.x.x0
    tilted = []
    for spec in (scenario.x, scenario.xstar):
        m = spec.measure_at(0.0, grid.epsilon, grid.n_nodes)
        tilted.append(tilt_square(pushforward(m, spec.g.at(0.0, x0))) if m.size else m)
    out = dict(provenance(scenario))
    out.update({
        "n_paths_used": int(a.size),
        "w1_empirical": w1_empirical(SampleSet(a), SampleSet(b)),
        "dW3_dictionary_lower_bound": dW3_dictionary_lower_bound(a, b),
        "fm_tilted_jump_measures_t0": fm_discrete(tilted[0], tilted[1]),
        "mean_x": float(a.mean()),
        "mean_xstar": float(b.mean()),
    })
    out.update(_diagnostics(scenario))
    if write:
        (_out_dir(scenario) / f"{scenario.name}_distances.json").write_text(dumps_json(out))
    return {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in out.items()}
