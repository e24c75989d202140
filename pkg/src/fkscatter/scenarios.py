"""Scenario configs, dispatch, and result persistence for the CLI.

A scenario is a named bundle of library calls with a validated YAML
config.  All numerics stay in the library modules; this layer only
resolves parameters, runs the calls, and writes results.

Result files are deterministic: rerunning the same resolved config gives
a byte-identical ``result.yaml`` except for the single ``recorded:`` line,
which carries the timestamp and wall-clock seconds and is the only
volatile content.  Tables go to sibling CSV files with shortest
round-trip float formatting.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .amplitudes import (
    decoupling_check,
    estimate_radial_absorption,
    phase_threshold_check,
    sphere_average_absorption,
    summability_histogram,
    truncation_sweep,
)
from .errors import ConfigError
from .pde_oracle import mc_vs_pde
from .potentials import Potential, make_standard_potential
from .sde_engine import (
    DriftField,
    PathConfig,
    exit_time_laplace_check,
    sample_exit_batch,
    simulate_path,
)

SCENARIOS = (
    "amplitude_scan",
    "sphere_identity",
    "rho_sweep",
    "decoupling",
    "threshold",
    "pde_crosscheck",
    "engine_validation",
    "summability",
)

# closed-form center exit-time mean from a ball: r^2 / 3 without drift
# (engine_validation references)


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _get(d: dict, path: str, key: str, default=None, required=False):
    if key in d:
        return d[key]
    if required:
        _fail(f"{path}.{key}", "required field is missing")
    return default


def _as_int(value, path: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        _fail(path, f"expected an integer, got {value!r}")
    v = int(value)
    if minimum is not None and v < minimum:
        _fail(path, f"must be >= {minimum}, got {v}")
    return v


def _as_float(value, path: str, *, positive=False) -> float:
    if isinstance(value, bool) or not isinstance(
            value, (int, float, np.integer, np.floating)):
        _fail(path, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        _fail(path, f"must be finite, got {v!r}")
    if positive and v <= 0.0:
        _fail(path, f"must be positive, got {v!r}")
    return v


def _as_vec(value, path: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        _fail(path, f"expected a 3-component list, got {value!r}")
    return tuple(_as_float(c, f"{path}[{i}]") for i, c in enumerate(value))


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        _fail(path, f"expected true/false, got {value!r}")
    return value


@dataclass
class ScenarioConfig:
    """Resolved, validated scenario configuration.

    ``run`` holds the scenario parameters with defaults applied; the
    original YAML layout round-trips through ``to_dict``.
    """

    scenario: str
    potential_kind: str
    potential_params: list
    run: dict
    out_dir: str = "results"

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "potential": {"kind": self.potential_kind,
                          "params": list(self.potential_params)},
            "run": dict(self.run),
            "out_dir": self.out_dir,
        }

    def make_potential(self) -> Potential:
        return make_standard_potential(self.potential_kind,
                                       self.potential_params)

    def path_config(self, *, dt_key="dt", start=(0.0, 0.0, 0.0)) -> PathConfig:
        r = self.run
        return PathConfig(dt=r[dt_key], t_max=r["t_max"],
                          stop_radius=r["stop_radius"],
                          master_seed=r["master_seed"], start=start)


# defaults shared by every scenario's run section
_RUN_DEFAULTS = {
    "n": 1000,
    "dt": 1e-2,
    "t_max": 20.0,
    "stop_radius": 8.0,
    "master_seed": 0,
}


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a loaded YAML mapping into a ScenarioConfig.

    Error messages name the offending field with its full path so a bad
    config is correctable without reading source."""
    if not isinstance(raw, dict):
        _fail("<root>", "config must be a mapping")
    scenario = _get(raw, "<root>", "scenario", required=True)
    if scenario not in SCENARIOS:
        _fail("scenario",
              f"unknown scenario {scenario!r}; valid names: "
              f"{', '.join(SCENARIOS)}")
    pot = _get(raw, "<root>", "potential", required=True)
    if not isinstance(pot, dict):
        _fail("potential", "expected a mapping with kind and params")
    kind = _get(pot, "potential", "kind", required=True)
    params = _get(pot, "potential", "params", required=True)
    if not isinstance(params, list):
        _fail("potential.params", f"expected a list, got {params!r}")
    # constructing the potential validates kind and params
    try:
        make_standard_potential(kind, params)
    except ConfigError as exc:
        _fail("potential", str(exc))

    run_raw = _get(raw, "<root>", "run", default={})
    if not isinstance(run_raw, dict):
        _fail("run", "expected a mapping")
    run = dict(_RUN_DEFAULTS)
    run.update(run_raw)

    p = "run"
    run["n"] = _as_int(run["n"], f"{p}.n", minimum=1)
    run["dt"] = _as_float(run["dt"], f"{p}.dt", positive=True)
    if run["dt"] > 1e-2:
        _fail(f"{p}.dt", f"must be <= 0.01, got {run['dt']!r}")
    run["t_max"] = _as_float(run["t_max"], f"{p}.t_max", positive=True)
    run["stop_radius"] = _as_float(run["stop_radius"], f"{p}.stop_radius",
                                   positive=True)
    if run["t_max"] < 2.0 * run["stop_radius"]:
        _fail(f"{p}.t_max",
              f"must be >= 2 * stop_radius = {2.0 * run['stop_radius']!r}")
    run["master_seed"] = _as_int(run["master_seed"], f"{p}.master_seed",
                                 minimum=0)

    if "theta" in run:
        run["theta"] = list(_as_vec(run["theta"], f"{p}.theta"))
    if "coupling" in run:
        run["coupling"] = _as_float(run["coupling"], f"{p}.coupling",
                                    positive=True)

    extra = _SCENARIO_VALIDATORS[scenario]
    extra(run, p)

    out_dir = _get(raw, "<root>", "out_dir", default="results")
    if not isinstance(out_dir, str) or not out_dir:
        _fail("out_dir", f"expected a non-empty string, got {out_dir!r}")

    known = {"scenario", "potential", "run", "out_dir"}
    for key in raw:
        if key not in known:
            _fail(key, "unknown top-level field")

    return ScenarioConfig(scenario=scenario, potential_kind=kind,
                          potential_params=list(params), run=run,
                          out_dir=out_dir)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})")
    return parse_config(raw)


# -- scenario-specific validation ------------------------------------------

def _need_theta(run: dict, p: str):
    run.setdefault("theta", [1.0, 0.0, 0.0])
    run["theta"] = list(_as_vec(run["theta"], f"{p}.theta"))
    if abs(np.linalg.norm(run["theta"]) - 1.0) > 1e-9:
        _fail(f"{p}.theta", f"must be a unit vector, got {run['theta']!r}")


def _v_amplitude_scan(run: dict, p: str):
    run.setdefault("directions", 16)
    run["directions"] = _as_int(run["directions"], f"{p}.directions",
                                minimum=1)


def _v_sphere_identity(run: dict, p: str):
    run.setdefault("directions", 64)
    run["directions"] = _as_int(run["directions"], f"{p}.directions",
                                minimum=1)
    run.setdefault("bessel_n", run["n"] * run["directions"])
    run["bessel_n"] = _as_int(run["bessel_n"], f"{p}.bessel_n", minimum=2)
    run.setdefault("bessel_dt", run["dt"])
    run["bessel_dt"] = _as_float(run["bessel_dt"], f"{p}.bessel_dt",
                                 positive=True)
    if run["bessel_dt"] > 1e-2:
        _fail(f"{p}.bessel_dt", f"must be <= 0.01, got {run['bessel_dt']!r}")


def _v_rho_sweep(run: dict, p: str):
    _need_theta(run, p)
    run.setdefault("coupling", 1.0)
    rho = _get(run, p, "rho_list", required=True)
    if not isinstance(rho, list) or not rho:
        _fail(f"{p}.rho_list", f"expected a non-empty list, got {rho!r}")
    rho = [_as_float(r, f"{p}.rho_list[{i}]") for i, r in enumerate(rho)]
    if any(b <= a for a, b in zip(rho, rho[1:])):
        _fail(f"{p}.rho_list", f"must be strictly increasing, got {rho!r}")
    run["rho_list"] = rho


def _v_decoupling(run: dict, p: str):
    _need_theta(run, p)
    run.setdefault("inner_radius", 6.0)
    run.setdefault("outer_radius", 20.0)
    run["inner_radius"] = _as_float(run["inner_radius"],
                                    f"{p}.inner_radius", positive=True)
    run["outer_radius"] = _as_float(run["outer_radius"],
                                    f"{p}.outer_radius", positive=True)
    if run["inner_radius"] <= 2.0:
        _fail(f"{p}.inner_radius",
              f"must exceed 2, got {run['inner_radius']!r}")
    if run["outer_radius"] <= run["inner_radius"]:
        _fail(f"{p}.outer_radius",
              f"must exceed inner_radius = {run['inner_radius']!r}")


def _v_threshold(run: dict, p: str):
    _need_theta(run, p)
    run.setdefault("coupling", 1.0)
    run.setdefault("remainder_radius", 16.0)
    run.setdefault("truncation_radius", 32.0)
    run["remainder_radius"] = _as_float(run["remainder_radius"],
                                        f"{p}.remainder_radius",
                                        positive=True)
    run["truncation_radius"] = _as_float(run["truncation_radius"],
                                         f"{p}.truncation_radius",
                                         positive=True)
    if run["truncation_radius"] < run["remainder_radius"]:
        _fail(f"{p}.truncation_radius",
              f"must be >= remainder_radius = {run['remainder_radius']!r}")
    grid = _get(run, p, "lambda_grid", default=[-1.0, 1.0, 21])
    if not isinstance(grid, list) or len(grid) != 3:
        _fail(f"{p}.lambda_grid",
              f"expected [low, high, count], got {grid!r}")
    lo = _as_float(grid[0], f"{p}.lambda_grid[0]")
    hi = _as_float(grid[1], f"{p}.lambda_grid[1]")
    count = _as_int(grid[2], f"{p}.lambda_grid[2]", minimum=1)
    if hi < lo:
        _fail(f"{p}.lambda_grid", f"high {hi!r} below low {lo!r}")
    run["lambda_grid"] = [lo, hi, count]


def _v_pde_crosscheck(run: dict, p: str):
    run.setdefault("ball_radius", 2.0)
    run.setdefault("grid_h", 0.05)
    run.setdefault("point", [0.0, 0.0, 0.0])
    run.setdefault("drift_on", True)
    run.setdefault("forcing", {"kind": "ball_bump", "params": [1.0, 0, 1.0]})
    run["ball_radius"] = _as_float(run["ball_radius"], f"{p}.ball_radius",
                                   positive=True)
    run["grid_h"] = _as_float(run["grid_h"], f"{p}.grid_h", positive=True)
    run["point"] = list(_as_vec(run["point"], f"{p}.point"))
    if float(np.linalg.norm(run["point"])) >= run["ball_radius"]:
        _fail(f"{p}.point", "must lie strictly inside the ball")
    run["drift_on"] = _as_bool(run["drift_on"], f"{p}.drift_on")
    f = run["forcing"]
    if not isinstance(f, dict) or "kind" not in f or "params" not in f:
        _fail(f"{p}.forcing", "expected a mapping with kind and params")
    try:
        make_standard_potential(f["kind"], f["params"])
    except ConfigError as exc:
        _fail(f"{p}.forcing", str(exc))


def _v_engine_validation(run: dict, p: str):
    run.setdefault("ball_radius", 1.0)
    run.setdefault("beta", 0.5)
    run.setdefault("increment_steps", 200_000)
    run["ball_radius"] = _as_float(run["ball_radius"], f"{p}.ball_radius",
                                   positive=True)
    run["beta"] = _as_float(run["beta"], f"{p}.beta", positive=True)
    run["increment_steps"] = _as_int(run["increment_steps"],
                                     f"{p}.increment_steps", minimum=1000)


def _v_summability(run: dict, p: str):
    run.setdefault("drift", "constant")
    if run["drift"] not in ("constant", "bessel"):
        _fail(f"{p}.drift",
              f"must be 'constant' or 'bessel', got {run['drift']!r}")
    if run["drift"] == "constant":
        _need_theta(run, p)
    run.setdefault("bins", 40)
    run["bins"] = _as_int(run["bins"], f"{p}.bins", minimum=1)


_SCENARIO_VALIDATORS = {
    "amplitude_scan": _v_amplitude_scan,
    "sphere_identity": _v_sphere_identity,
    "rho_sweep": _v_rho_sweep,
    "decoupling": _v_decoupling,
    "threshold": _v_threshold,
    "pde_crosscheck": _v_pde_crosscheck,
    "engine_validation": _v_engine_validation,
    "summability": _v_summability,
}


# --------------------------------------------------------------------------
# execution

@dataclass
class ResultRecord:
    """Everything a scenario run produces, ready for serialization."""

    scenario: str
    config: dict
    outputs: dict
    tables: dict = field(default_factory=dict)   # name -> (header, rows)
    wall_clock_s: float = 0.0

    def payload_dict(self) -> dict:
        """Deterministic part of the result file."""
        return {
            "scenario": self.scenario,
            "library_version": __version__,
            "config": self.config,
            "outputs": self.outputs,
            "tables": sorted(self.tables),
        }


def _py(value):
    """Recursively convert numpy scalars/arrays for YAML emission."""
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, complex):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.ndarray):
        return [_py(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _py(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    return value


def _estimate_fields(est) -> dict:
    return {"mean": float(est.mean), "stderr": float(est.stderr),
            "n": int(est.n), "tail_bound": float(est.mean_tail_bound)}


def _complex_fields(est) -> dict:
    return {"mean": _py(complex(est.mean)),
            "stderr_re": float(est.stderr_re),
            "stderr_im": float(est.stderr_im),
            "modulus": float(est.modulus),
            "modulus_stderr": float(est.modulus_stderr),
            "n": int(est.n), "tail_bound": float(est.mean_tail_bound)}


def _run_amplitude_scan(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    rep = sphere_average_absorption(pot, r["directions"], r["n"],
                                    cfg.path_config(), workers=workers)
    rows = [(d, float(rep.directions[d, 0]), float(rep.directions[d, 1]),
             float(rep.directions[d, 2]), float(rep.dir_means[d]),
             float(rep.dir_stderrs[d]))
            for d in range(rep.n_dirs)]
    outputs = {
        "average": {"mean": rep.average, "stderr": rep.stderr,
                    "n": rep.n_dirs * rep.n_per_dir,
                    "tail_bound": rep.mean_tail_bound},
        "n_dirs": rep.n_dirs,
        "n_per_dir": rep.n_per_dir,
    }
    tables = {"directions": (
        ("index", "theta_x", "theta_y", "theta_z", "amplitude", "stderr"),
        rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


def _run_sphere_identity(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    sphere = sphere_average_absorption(pot, r["directions"], r["n"],
                                       cfg.path_config(), workers=workers)
    radial_cfg = cfg.path_config(dt_key="bessel_dt")
    radial = estimate_radial_absorption(pot, r["bessel_n"], radial_cfg,
                                        workers=workers)
    diff = sphere.average - radial.mean
    combined = math.hypot(sphere.stderr, radial.stderr)
    outputs = {
        "sphere_average": {"mean": sphere.average, "stderr": sphere.stderr,
                           "n": sphere.n_dirs * sphere.n_per_dir,
                           "tail_bound": sphere.mean_tail_bound},
        "radial": _estimate_fields(radial),
        "difference": diff,
        "combined_stderr": combined,
        "within_3_sigma": bool(abs(diff) <= 3.0 * combined),
    }
    rows = [(d, float(sphere.dir_means[d]), float(sphere.dir_stderrs[d]))
            for d in range(sphere.n_dirs)]
    tables = {"directions": (("index", "amplitude", "stderr"), rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


def _run_rho_sweep(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    rep = truncation_sweep(np.array(r["theta"]), pot, r["rho_list"], r["n"],
                           cfg.path_config(), coupling=r["coupling"],
                           workers=workers)
    rows = [(rho, est.mean, est.stderr, est.mean_tail_bound)
            for rho, est in zip(rep.radii, rep.estimates)]
    outputs = {
        "estimates": {repr(rho): _estimate_fields(est)
                      for rho, est in zip(rep.radii, rep.estimates)},
        "samplewise_nondecreasing": rep.samplewise_nondecreasing,
        "bands_disjoint": rep.bands_disjoint,
        "final_mean": rep.estimates[-1].mean,
    }
    tables = {"sweep": (("rho", "amplitude", "stderr", "tail_bound"), rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


def _run_decoupling(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    rep = decoupling_check(np.array(r["theta"]), pot, r["inner_radius"],
                           r["outer_radius"], r["n"], cfg.path_config(),
                           workers=workers)
    outputs = {
        "combined": _estimate_fields(rep.combined),
        "undivided": _estimate_fields(rep.undivided),
        "first_factor": _estimate_fields(rep.first_factor),
        "outer_factor": _estimate_fields(rep.outer_factor),
        "product_value": rep.product_value,
        "product_stderr": rep.product_stderr,
        "gap": rep.gap,
        "gap_stderr": rep.gap_stderr,
        "samplewise_dominates": rep.samplewise_dominates,
        "switch_fraction": rep.switch_fraction,
        "mean_switch_time": rep.mean_switch_time,
    }
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs)


def _run_threshold(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    lo, hi, count = r["lambda_grid"]
    lams = np.linspace(lo, hi, count)
    rep = phase_threshold_check(np.array(r["theta"]), pot,
                                r["remainder_radius"],
                                r["truncation_radius"], lams, r["n"],
                                cfg.path_config(), coupling=r["coupling"],
                                workers=workers)
    rows = [(float(rep.lambdas[k]), float(rep.moduli[k]),
             float(rep.moduli_stderr[k]),
             float(rep.estimates[k].mean.real),
             float(rep.estimates[k].mean.imag))
            for k in range(len(lams))]
    outputs = {
        "premise": _estimate_fields(rep.premise),
        "premise_met": rep.premise_met,
        "moduli_min": float(np.min(rep.moduli)),
        "all_above_floor": bool(rep.moduli_ok.all()),
        "implication_holds": rep.implication_holds,
    }
    tables = {"moduli": (
        ("lambda", "modulus", "stderr_modulus", "mean_re", "mean_im"), rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


def _run_pde_crosscheck(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    forcing = make_standard_potential(r["forcing"]["kind"],
                                      r["forcing"]["params"])
    rep = mc_vs_pde(pot, forcing, r["ball_radius"], np.array(r["point"]),
                    r["grid_h"], r["n"], cfg.path_config(),
                    drift_on=r["drift_on"], workers=workers)
    outputs = {
        "mc_mean": _py(rep.mc_mean),
        "mc_stderr": rep.mc_stderr,
        "mc_n": rep.mc_n,
        "mc_anomalies": rep.mc_anomalies,
        "pde_value": _py(rep.pde_value),
        "h_fine": rep.h_fine,
        "h_coarse": rep.h_coarse,
        "discretization_estimate": rep.discretization_estimate,
        "abs_difference": rep.abs_difference,
        "rel_difference": rep.rel_difference,
        "combined_uncertainty": rep.combined_uncertainty,
        "agrees": rep.agrees,
    }
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs)


def _run_engine_validation(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    r = cfg.run
    radius = r["ball_radius"]
    pc = cfg.path_config()
    zero = make_standard_potential("constant", [0.0])
    one = make_standard_potential("constant", [1.0])
    batch = sample_exit_batch(zero, one, radius, pc, np.arange(r["n"]),
                              drift_on=False, workers=workers)
    times = batch.exit_times
    mean_t = float(np.mean(times))
    se_t = float(np.std(times, ddof=1) / math.sqrt(len(times)))
    ref_t = radius * radius / 3.0
    lap = exit_time_laplace_check(radius, r["beta"], r["n"], pc,
                                  workers=workers)

    # increment law of the constant-drift kernel over one long path
    steps = r["increment_steps"]
    inc_cfg = PathConfig(dt=pc.dt, t_max=steps * pc.dt,
                         stop_radius=max(pc.stop_radius, 1.0),
                         master_seed=pc.master_seed)
    _, path = simulate_path(DriftField.constant([1.0, 0.0, 0.0]), inc_cfg, 0)
    incs = np.diff(path, axis=0)
    incs = incs - np.array([inc_cfg.dt, 0.0, 0.0])
    var = float(np.var(incs))
    checks = [
        ("exit_mean", mean_t, ref_t, se_t,
         bool(abs(mean_t - ref_t) <= max(3.0 * se_t, 0.01 * ref_t))),
        ("exit_laplace", lap.mean, lap.reference, lap.stderr,
         bool(abs(lap.mean - lap.reference)
              <= max(3.0 * lap.stderr, 0.01 * lap.reference))),
        ("increment_variance", var, inc_cfg.dt, 0.0,
         bool(abs(var - inc_cfg.dt) <= 0.01 * inc_cfg.dt)),
    ]
    outputs = {
        "exit_mean": {"value": mean_t, "reference": ref_t, "stderr": se_t,
                      "n": r["n"], "anomalies": batch.anomalies},
        "exit_laplace": {"value": lap.mean, "reference": lap.reference,
                         "stderr": lap.stderr, "beta": r["beta"],
                         "n": r["n"], "anomalies": lap.anomalies},
        "increment_variance": {"value": var, "reference": inc_cfg.dt,
                               "steps": steps},
        "all_passed": all(c[4] for c in checks),
    }
    rows = [(name, value, ref, se, passed)
            for name, value, ref, se, passed in checks]
    tables = {"checks": (("check", "value", "reference", "stderr", "passed"),
                         rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


def _run_summability(cfg: ScenarioConfig, workers: int) -> ResultRecord:
    pot = cfg.make_potential()
    r = cfg.run
    if r["drift"] == "constant":
        drift = DriftField.constant(np.array(r["theta"]))
    else:
        drift = DriftField.bessel()
    rep = summability_histogram(drift, pot, r["n"], cfg.path_config(),
                                bins=r["bins"], workers=workers)
    rows = [(float(rep.hist_edges[k]), float(rep.hist_edges[k + 1]),
             int(rep.hist_counts[k])) for k in range(len(rep.hist_counts))]
    outputs = {
        "drift": rep.drift_kind,
        "mean_integral": rep.mean_integral,
        "max_integral": rep.max_integral,
        "quantiles": {repr(q): v for q, v in rep.quantiles.items()},
        "escaped_fraction": rep.escaped_fraction,
        "mean_tail_bound": rep.mean_tail_bound,
    }
    tables = {"histogram": (("bin_low", "bin_high", "count"), rows)}
    return ResultRecord(cfg.scenario, cfg.to_dict(), outputs, tables)


_RUNNERS = {
    "amplitude_scan": _run_amplitude_scan,
    "sphere_identity": _run_sphere_identity,
    "rho_sweep": _run_rho_sweep,
    "decoupling": _run_decoupling,
    "threshold": _run_threshold,
    "pde_crosscheck": _run_pde_crosscheck,
    "engine_validation": _run_engine_validation,
    "summability": _run_summability,
}


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> ResultRecord:
    t0 = time.perf_counter()
    record = _RUNNERS[cfg.scenario](cfg, workers)
    record.wall_clock_s = time.perf_counter() - t0
    record.outputs = _py(record.outputs)
    return record


# --------------------------------------------------------------------------
# persistence

def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def write_result(record: ResultRecord, out_dir: str) -> str:
    """Write result.yaml plus one CSV per table; returns the yaml path.

    The ``recorded:`` line is the only content that changes between
    identical reruns; everything above it serializes deterministically
    (sorted keys, repr floats)."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "result.yaml")
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    volatile = f"{stamp} wall_clock_s={record.wall_clock_s:.3f}"
    with open(path, "w") as fh:
        yaml.safe_dump(record.payload_dict(), fh, sort_keys=True,
                       default_flow_style=False)
        fh.write(f"recorded: {volatile}\n")
    for name in sorted(record.tables):
        header, rows = record.tables[name]
        write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows)
    return path


def load_result(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"result file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})")
    if not isinstance(data, dict) or "scenario" not in data:
        raise ConfigError(f"{path} is not a scenario result file")
    return data


# plot kinds -> (scenario, table, columns)
PLOT_KINDS = {
    "modulus_vs_lambda": ("threshold", "moduli",
                          ("lambda", "modulus", "stderr_modulus")),
    "a_vs_rho": ("rho_sweep", "sweep", ("rho", "amplitude", "stderr")),
    "a_vs_direction": ("amplitude_scan", "directions",
                       ("index", "amplitude", "stderr")),
}


def emit_plot_data(result_path: str, kind: str, out_path: str = None) -> str:
    """Extract a plot-ready CSV from a result directory.

    The result file names its tables; the matching table CSV must sit next
    to it.  A kind/scenario mismatch is a validation error."""
    if kind not in PLOT_KINDS:
        raise ConfigError(
            f"unknown plot kind {kind!r}; valid kinds: "
            f"{', '.join(sorted(PLOT_KINDS))}")
    data = load_result(result_path)
    scenario, table, columns = PLOT_KINDS[kind]
    if data["scenario"] != scenario:
        raise ConfigError(
            f"plot kind {kind!r} needs a {scenario!r} result, got "
            f"{data['scenario']!r}")
    table_path = os.path.join(os.path.dirname(result_path) or ".",
                              f"{table}.csv")
    if not os.path.exists(table_path):
        raise ConfigError(f"table file missing: {table_path}")
    with open(table_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    try:
        pick = [header.index(c) for c in columns]
    except ValueError as exc:
        raise ConfigError(f"{table_path}: missing column ({exc})")
    if out_path is None:
        out_path = os.path.join(os.path.dirname(result_path) or ".",
                                f"{kind}.csv")
    with open(out_path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(row[i] for i in pick) + "\n")
    return out_path
