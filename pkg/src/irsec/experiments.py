"""Batch experiment runner: config ingestion, sweeps, and beampatterns.

Configs are JSON with explicit unit suffixes in key names (dBm, dB, deg,
meters, watts); all conversion to linear internal units happens here. Every
experiment writes one CSV (fixed row order, 9-significant-digit floats, so
reruns are byte-identical) plus a JSON manifest carrying the fully resolved
configuration, which is sufficient to reproduce the run without the
original spec file.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import os
from dataclasses import dataclass, replace

import numpy as np

from irsec import __version__
from irsec.baselines import SCHEME_IDS, run_scheme
from irsec.channel import node_angles_at_irs, upa_steering, upa_steering_grid
from irsec.optimizer import SchemeResult, alternate
from irsec.scenario import (
    ScenarioConfig,
    build_trial,
    db_to_linear,
    dbm_to_watts,
    draw_actual_angles,
    position_study_scenario,
)

EXPERIMENT_KINDS = (
    "convergence",
    "sweep_power",
    "sweep_delta",
    "sweep_elements",
    "sweep_eves",
    "sweep_position",
    "sweep_correlation",
    "beampattern",
)

DEFAULT_AXES = {
    "convergence": ("gamma_th_db", [-30.0, -28.0, -25.0, 0.0]),
    "sweep_power": ("p_c_max_dbm", [38.0, 40.0, 42.0, 44.0, 46.0]),
    "sweep_delta": ("delta_deg", [0.5, 1.0, 2.0, 4.0, 6.0]),
    "sweep_elements": ("irs_elements", ["2x2", "4x4", "6x6"]),
    "sweep_eves": ("eve_count", [1, 2, 3]),
    "sweep_position": ("irs_x_m", [0.0, 20.0, 40.0, 50.0, 60.0, 80.0, 100.0]),
    "sweep_correlation": ("rho_cbs_abs", [0.0, 0.3, 0.5, 0.7, 0.9]),
    "beampattern": ("seed_only", [0]),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    kind: str
    base: ScenarioConfig
    axis_param: str
    axis_values: list
    schemes: list[str]
    seeds: list[int]
    out_dir: str
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.axis_values:
            raise ConfigError("sweep axis must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        bad = [s for s in self.schemes if s not in SCHEME_IDS]
        if bad:
            raise ConfigError(f"unknown schemes {bad}")


@dataclass
class BeampatternGrid:
    theta_deg: np.ndarray
    phi_deg: np.ndarray
    gain_db: np.ndarray  # (len(theta), len(phi)), 0 dB at the SU direction


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "carrier_ghz": float,
    "cbs_antennas": int,
    "irs_elements": list,
    "cbs_position_m": list,
    "irs_position_m": list,
    "su_position_m": list,
    "pu_position_m": list,
    "eve_centers_m": list,
    "eve_count": int,
    "irs_rotation_z_deg": float,
    "path_count": int,
    "path_loss_exponent": float,
    "p_c_max_dbm": float,
    "gamma_th_db": float,
    "sigma_p2_w": float,
    "sigma_s2_w": float,
    "sigma2_w": float,
    "delta_deg": float,
    "hull_grid": list,
    "eval_grid_step_deg": float,
    "epsilon": float,
    "penalty_rho0": float,
    "penalty_rho_cap": float,
    "max_outer": int,
    "max_transmit_iterations": int,
    "max_reflect_outer": int,
    "max_reflect_solves": int,
    "sdp_tolerance": float,
    "rho_cbs_abs": float,
    "irs_correlation": bool,
    "rng_seed": int,
    "experiments": dict,
}


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def config_to_scenario(cfg: dict) -> ScenarioConfig:
    """Validate a boundary-unit config dict and build the internal scenario."""
    for key in cfg:
        _check(key in _CONFIG_KEYS, key, "unknown configuration key")
        _check(
            isinstance(cfg[key], (_CONFIG_KEYS[key], int))
            if _CONFIG_KEYS[key] is float
            else isinstance(cfg[key], _CONFIG_KEYS[key]),
            key,
            f"expected {_CONFIG_KEYS[key].__name__}",
        )
    kwargs = {}
    if "carrier_ghz" in cfg:
        kwargs["carrier_hz"] = float(cfg["carrier_ghz"]) * 1e9
    if "cbs_antennas" in cfg:
        kwargs["m"] = cfg["cbs_antennas"]
    if "irs_elements" in cfg:
        el = cfg["irs_elements"]
        _check(len(el) == 2 and all(int(v) >= 1 for v in el), "irs_elements", "need [n1, n2] >= 1")
        kwargs["n1"], kwargs["n2"] = int(el[0]), int(el[1])
    for key, name in (
        ("cbs_position_m", "cbs_position"),
        ("irs_position_m", "irs_position"),
        ("su_position_m", "su_position"),
        ("pu_position_m", "pu_position"),
    ):
        if key in cfg:
            _check(len(cfg[key]) == 3, key, "positions are 3D [x, y, z] meters")
            kwargs[name] = tuple(float(v) for v in cfg[key])
    if "eve_centers_m" in cfg:
        centers = cfg["eve_centers_m"]
        for i, c in enumerate(centers):
            _check(len(c) == 3, f"eve_centers_m[{i}]", "positions are 3D [x, y, z] meters")
        kwargs["eve_centers"] = tuple(tuple(float(v) for v in c) for c in centers)
    if "eve_count" in cfg:
        kwargs["k"] = cfg["eve_count"]
    if "irs_rotation_z_deg" in cfg:
        kwargs["irs_rotation_z"] = float(np.deg2rad(cfg["irs_rotation_z_deg"]))
    if "p_c_max_dbm" in cfg:
        kwargs["p_c_max_w"] = dbm_to_watts(float(cfg["p_c_max_dbm"]))
    if "gamma_th_db" in cfg:
        kwargs["gamma_th"] = db_to_linear(float(cfg["gamma_th_db"]))
    if "delta_deg" in cfg:
        _check(cfg["delta_deg"] >= 0, "delta_deg", "must be nonnegative")
        kwargs["delta"] = float(np.deg2rad(cfg["delta_deg"]))
    if "eval_grid_step_deg" in cfg:
        _check(cfg["eval_grid_step_deg"] > 0, "eval_grid_step_deg", "must be positive")
        kwargs["eval_grid_step"] = float(np.deg2rad(cfg["eval_grid_step_deg"]))
    if "hull_grid" in cfg:
        _check(len(cfg["hull_grid"]) == 2, "hull_grid", "need [rows, cols]")
        kwargs["hull_grid"] = tuple(int(v) for v in cfg["hull_grid"])
    if "rho_cbs_abs" in cfg:
        _check(0 <= cfg["rho_cbs_abs"] <= 1, "rho_cbs_abs", "must lie in [0, 1]")
        kwargs["rho_cbs"] = complex(cfg["rho_cbs_abs"])
    for key in (
        "path_count", "path_loss_exponent", "sigma_p2_w", "sigma_s2_w", "sigma2_w",
        "epsilon", "penalty_rho0", "penalty_rho_cap", "max_outer",
        "max_transmit_iterations", "max_reflect_outer", "max_reflect_solves",
        "sdp_tolerance", "irs_correlation", "rng_seed",
    ):
        if key in cfg:
            kwargs[key] = cfg[key]
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def scenario_to_config(sc: ScenarioConfig) -> dict:
    """Boundary-unit dict that round-trips through config_to_scenario."""
    return {
        "carrier_ghz": sc.carrier_hz / 1e9,
        "cbs_antennas": sc.m,
        "irs_elements": [sc.n1, sc.n2],
        "cbs_position_m": list(sc.cbs_position),
        "irs_position_m": list(sc.irs_position),
        "su_position_m": list(sc.su_position),
        "pu_position_m": list(sc.pu_position),
        "eve_centers_m": [list(c) for c in sc.eve_centers],
        "eve_count": sc.k,
        "irs_rotation_z_deg": float(np.rad2deg(sc.irs_rotation_z)),
        "path_count": sc.path_count,
        "path_loss_exponent": sc.path_loss_exponent,
        "p_c_max_dbm": float(10 * np.log10(sc.p_c_max_w) + 30),
        "gamma_th_db": float(10 * np.log10(sc.gamma_th)),
        "sigma_p2_w": sc.sigma_p2_w,
        "sigma_s2_w": sc.sigma_s2_w,
        "sigma2_w": sc.sigma2_w,
        "delta_deg": float(np.rad2deg(sc.delta)),
        "hull_grid": list(sc.hull_grid),
        "eval_grid_step_deg": float(np.rad2deg(sc.eval_grid_step)),
        "epsilon": sc.epsilon,
        "penalty_rho0": sc.penalty_rho0,
        "penalty_rho_cap": sc.penalty_rho_cap,
        "max_outer": sc.max_outer,
        "max_transmit_iterations": sc.max_transmit_iterations,
        "max_reflect_outer": sc.max_reflect_outer,
        "max_reflect_solves": sc.max_reflect_solves,
        "sdp_tolerance": sc.sdp_tolerance,
        "rho_cbs_abs": abs(sc.rho_cbs),
        "irs_correlation": sc.irs_correlation,
        "rng_seed": sc.rng_seed,
    }


def apply_axis(base: ScenarioConfig, axis_param: str, value) -> ScenarioConfig:
    if axis_param == "gamma_th_db":
        return replace(base, gamma_th=db_to_linear(float(value)))
    if axis_param == "p_c_max_dbm":
        return replace(base, p_c_max_w=dbm_to_watts(float(value)))
    if axis_param == "delta_deg":
        return replace(base, delta=float(np.deg2rad(float(value))))
    if axis_param == "irs_elements":
        n1, n2 = (int(v) for v in str(value).lower().split("x"))
        return replace(base, n1=n1, n2=n2)
    if axis_param == "cbs_antennas":
        return replace(base, m=int(value))
    if axis_param == "eve_count":
        return replace(base, k=int(value))
    if axis_param == "rho_cbs_abs":
        return replace(base, rho_cbs=complex(float(value)))
    if axis_param == "irs_x_m":
        planar = position_study_scenario(float(value), y_irs=float(base.irs_position[1]) or 10.0)
        return replace(
            planar,
            m=base.m, n1=base.n1, n2=base.n2, carrier_hz=base.carrier_hz,
            p_c_max_w=base.p_c_max_w, gamma_th=base.gamma_th,
            sigma_p2_w=base.sigma_p2_w, sigma_s2_w=base.sigma_s2_w, sigma2_w=base.sigma2_w,
            delta=base.delta, hull_grid=base.hull_grid, eval_grid_step=base.eval_grid_step,
            epsilon=base.epsilon,
        )
    if axis_param == "seed_only":
        return base
    raise ConfigError(f"unknown axis parameter {axis_param!r}")


# ---------------------------------------------------------------------------
# beampattern
# ---------------------------------------------------------------------------


def eve_region_peak_db(w: np.ndarray, q: np.ndarray, trial) -> float:
    """Peak reflected gain over every Eve evaluation lattice, in dB relative
    to the SU line-of-sight direction."""
    from irsec.uncertainty import eval_grid_axes

    sc = trial.scenario
    geom = sc.geometry
    z = trial.realization.h_ci @ w
    v = np.conj(q) * z
    su_ang, _ = node_angles_at_irs(
        np.array(sc.irs_position), np.array(sc.su_position), sc.irs_rotation_z
    )
    g_su = float(np.abs(upa_steering(geom, su_ang).conj() @ v) ** 2)
    peak = 0.0
    for region in trial.regions:
        thetas, phis = eval_grid_axes(region)
        tt, pp = np.meshgrid(thetas, phis, indexing="ij")
        a = upa_steering_grid(geom, tt.ravel(), pp.ravel())
        peak = max(peak, float((np.abs(a.conj() @ v) ** 2).max()))
    return float(10.0 * np.log10(max(peak, 1e-300) / g_su))


def beampattern(
    w: np.ndarray,
    q: np.ndarray,
    scenario: ScenarioConfig,
    h_ci: np.ndarray,
    step_deg: float = 1.0,
) -> BeampatternGrid:
    """Reflected gain |q^H diag(a^H) H w|^2 over the angle domain, normalized
    so the SU line-of-sight direction reads 0 dB."""
    geom = scenario.geometry
    z = h_ci @ w
    v = np.conj(q) * z
    su_ang, _ = node_angles_at_irs(
        np.array(scenario.irs_position), np.array(scenario.su_position), scenario.irs_rotation_z
    )
    g_su = float(np.abs(upa_steering(geom, su_ang).conj() @ v) ** 2)
    thetas = np.deg2rad(np.arange(0.0, 90.0 + step_deg / 2, step_deg))
    phis = np.deg2rad(np.arange(0.0, 180.0 + step_deg / 2, step_deg))
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    a = upa_steering_grid(geom, tt.ravel(), pp.ravel())
    gains = (np.abs(a.conj() @ v) ** 2).reshape(len(thetas), len(phis))
    gain_db = 10.0 * np.log10(np.maximum(gains, 1e-300) / g_su)
    return BeampatternGrid(np.rad2deg(thetas), np.rad2deg(phis), gain_db)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _run_case(task) -> list[dict]:
    kind, scenario, scheme, seed, axis_param, axis_value = task
    scenario = scenario.with_seed(seed)
    base_row = {
        "experiment": kind,
        "axis_param": axis_param,
        "axis_value": axis_value,
        "scheme": scheme,
        "seed": seed,
    }
    try:
        if kind == "beampattern":
            trial = build_trial(scenario)
            result = alternate(scenario, trial=trial)
            grid = beampattern(result.w, result.q, scenario, trial.realization.h_ci)
            rows = []
            for i, th in enumerate(grid.theta_deg):
                for j, ph in enumerate(grid.phi_deg):
                    rows.append(
                        dict(base_row, theta_deg=float(th), phi_deg=float(ph),
                             gain_db=float(grid.gain_db[i, j]), status="ok")
                    )
            return rows
        trial = build_trial(scenario)
        angles = draw_actual_angles(trial)
        result: SchemeResult = run_scheme(scheme, scenario, angles, trial=trial)
        if kind == "convergence":
            return [
                dict(base_row, iteration=i, asr=float(v), status="ok")
                for i, v in enumerate(result.asr_trace)
            ]
        return [
            dict(
                base_row,
                final_worst_case_asr=float(result.final_worst_case_asr),
                asr_at_actual=float(result.asr_at_actual),
                outer_iterations=result.outer_iterations,
                converged=result.converged,
                power_residual=result.feasibility.power_residual,
                interference_residual=result.feasibility.interference_residual,
                unit_modulus_residual=result.feasibility.unit_modulus_residual,
                status="ok",
            )
        ]
    except Exception as err:  # partial failure: record and continue
        return [dict(base_row, status=f"failed: {type(err).__name__}: {err}")]


_COLUMNS = {
    "convergence": ["experiment", "axis_param", "axis_value", "scheme", "seed",
                    "iteration", "asr", "status"],
    "beampattern": ["experiment", "axis_param", "axis_value", "scheme", "seed",
                    "theta_deg", "phi_deg", "gain_db", "status"],
    "sweep": ["experiment", "axis_param", "axis_value", "scheme", "seed",
              "final_worst_case_asr", "asr_at_actual", "outer_iterations", "converged",
              "power_residual", "interference_residual", "unit_modulus_residual", "status"],
}


def run_experiment(spec: ExperimentSpec) -> dict:
    """Execute every (axis value, scheme, seed) case and write CSV + manifest.

    Cases run in a worker pool when jobs > 1; the collector preserves the
    deterministic task order, so output files are byte-identical across
    reruns of the same spec.
    """
    os.makedirs(spec.out_dir, exist_ok=True)
    tasks = []
    for value in spec.axis_values:
        scenario = apply_axis(spec.base, spec.axis_param, value)
        for scheme in spec.schemes:
            for seed in spec.seeds:
                tasks.append((spec.kind, scenario, scheme, seed, spec.axis_param, value))
    if spec.jobs > 1:
        with multiprocessing.Pool(spec.jobs) as pool:
            results = pool.map(_run_case, tasks)
    else:
        results = [_run_case(t) for t in tasks]

    columns = _COLUMNS.get(spec.kind, _COLUMNS["sweep"])
    csv_path = os.path.join(spec.out_dir, f"{spec.kind}.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rows in results:
            for row in rows:
                writer.writerow([_fmt(row.get(col, "")) for col in columns])

    manifest = {
        "experiment": spec.kind,
        "axis_param": spec.axis_param,
        "axis_values": spec.axis_values,
        "schemes": spec.schemes,
        "seeds": spec.seeds,
        "resolved_config": scenario_to_config(spec.base),
        "artifact_version": __version__,
        "csv": os.path.basename(csv_path),
        "cases": len(tasks),
    }
    manifest_path = os.path.join(spec.out_dir, f"{spec.kind}_manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "manifest": manifest_path, "cases": len(tasks)}


def spec_from_config(
    cfg: dict,
    kind: str,
    seeds: list[int],
    out_dir: str,
    jobs: int = 1,
) -> ExperimentSpec:
    """Assemble an ExperimentSpec from a parsed config dict.

    Axis values and scheme lists may be overridden per kind under the
    config's "experiments" key; paper-style defaults apply otherwise.
    """
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base = config_to_scenario({k: v for k, v in cfg.items() if k != "experiments"})
    axis_param, axis_values = DEFAULT_AXES[kind]
    schemes = list(SCHEME_IDS) if kind not in ("convergence", "beampattern") else ["robust"]
    overrides = cfg.get("experiments", {}).get(kind, {})
    for key in overrides:
        _check(
            key in ("axis_param", "axis_values", "schemes"),
            f"experiments.{kind}.{key}",
            "unknown experiment override",
        )
    axis_param = overrides.get("axis_param", axis_param)
    axis_values = overrides.get("axis_values", axis_values)
    schemes = overrides.get("schemes", schemes)
    return ExperimentSpec(
        kind=kind,
        base=base,
        axis_param=axis_param,
        axis_values=list(axis_values),
        schemes=list(schemes),
        seeds=list(seeds),
        out_dir=out_dir,
        jobs=jobs,
    )
