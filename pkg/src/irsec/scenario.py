"""Scenario configuration and per-seed trial assembly.

All quantities are stored in linear units (watts, radians, ratios); dB and
dBm appear only at the configuration boundary. A trial bundles one seeded
channel realization with the per-Eve uncertainty regions and the named
random streams every scheme shares, so paired scheme comparisons see
identical channels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from irsec.channel import (
    AnglePair,
    ArrayGeometry,
    ChannelRealization,
    apply_spatial_correlation,
    effective_channel,
    geometry_to_params,
    half_wavelength_geometry,
    kronecker_correlation,
    sinc_correlation,
    synth_cbs_irs_channel,
    synth_irs_user_channel,
)
from irsec.uncertainty import UncertaintyRegion, build_region, eval_grid_axes


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def linear_to_db(x: float) -> float:
    return float(10.0 * np.log10(x))


def dbm_to_watts(dbm: float) -> float:
    return float(10.0 ** ((dbm - 30.0) / 10.0))


DEFAULT_EVE_CENTERS = (
    (-44.0, 25.5, 18.5),
    (16.0, 28.0, 18.5),
    (30.0, 30.0, 15.0),
    (-20.0, 20.0, 15.0),
    (50.0, 20.0, 30.0),
)


@dataclass(frozen=True)
class ScenarioConfig:
    """One fully-resolved simulation scenario.

    The interference cap at the primary user is derived, not stored:
    i_p_th = gamma_th * sigma_p2_w.
    """

    carrier_hz: float = 28e9
    m: int = 8
    n1: int = 4
    n2: int = 4
    cbs_position: tuple[float, float, float] = (-80.0, 29.0, 15.0)
    irs_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    su_position: tuple[float, float, float] = (0.0, 18.5, 18.5)
    pu_position: tuple[float, float, float] = (80.0, 29.0, 15.0)
    eve_centers: tuple[tuple[float, float, float], ...] = DEFAULT_EVE_CENTERS
    k: int = 2
    irs_rotation_z: float = 0.0
    path_count: int = 5
    path_loss_exponent: float = 2.0
    p_c_max_w: float = dbm_to_watts(46.0)
    gamma_th: float = 1.0
    sigma_p2_w: float = 0.3
    sigma_s2_w: float = 3e-8
    sigma2_w: float = 3e-8
    delta: float = float(np.deg2rad(1.0))
    hull_grid: tuple[int, int] = (5, 5)
    eval_grid_step: float = float(np.deg2rad(0.1))
    epsilon: float = 1e-3
    penalty_rho0: float = 10.0
    penalty_rho_cap: float = 1e10
    max_outer: int = 50
    max_transmit_iterations: int = 500
    max_reflect_outer: int = 12
    max_reflect_solves: int = 60
    sdp_tolerance: float = 1e-7
    rho_cbs: complex = 0.0
    irs_correlation: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.k > len(self.eve_centers):
            raise ValueError("k must select at least one configured Eve center")
        for name in ("p_c_max_w", "gamma_th", "sigma_p2_w", "sigma_s2_w", "sigma2_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def i_p_th(self) -> float:
        return self.gamma_th * self.sigma_p2_w

    @property
    def geometry(self) -> ArrayGeometry:
        return half_wavelength_geometry(self.m, self.n1, self.n2, self.carrier_hz)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, rng_seed=seed)


def reference_scenario(**overrides) -> ScenarioConfig:
    """Default desk-scale scenario: 28 GHz, 8-antenna CBS, 4x4 IRS, two Eves."""
    return ScenarioConfig(**overrides)


def position_study_scenario(x_irs: float, y_irs: float = 10.0, **overrides) -> ScenarioConfig:
    """Planar layout for the IRS placement study.

    PU, CBS, SU and two Eves sit on the y = 0 line; the IRS faces them from
    (x_irs, y_irs), so its facade normal points along -Y (rotation pi).
    """
    base = dict(
        cbs_position=(50.0, 0.0, 0.0),
        su_position=(100.0, 0.0, 0.0),
        pu_position=(0.0, 0.0, 0.0),
        eve_centers=((80.0, 0.0, 0.0), (90.0, 0.0, 0.0)),
        irs_position=(x_irs, y_irs, 0.0),
        irs_rotation_z=float(np.pi),
        k=2,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass
class Trial:
    """Everything one seeded run consumes: channels, regions, random streams."""

    scenario: ScenarioConfig
    realization: ChannelRealization
    regions: list[UncertaintyRegion]
    h_s: np.ndarray
    h_p: np.ndarray
    q_init_rng: np.random.Generator
    scheme_rng: np.random.Generator
    actual_rng: np.random.Generator


def build_trial(
    scenario: ScenarioConfig,
    region_centers: Sequence[AnglePair] | None = None,
    delta_override: float | None = None,
) -> Trial:
    """Synthesize the seeded realization and the Eve uncertainty regions.

    region_centers pins the regions at explicit angles (the gain bound still
    comes from the configured center distances); delta_override shrinks or
    grows the box without touching the rest of the scenario.
    """
    geom = scenario.geometry
    seq = np.random.SeedSequence(scenario.rng_seed)
    ch_offsets, ch_gains, q_init, scheme, actual = [
        np.random.default_rng(s) for s in seq.spawn(5)
    ]

    links = geometry_to_params(
        np.array(scenario.cbs_position),
        np.array(scenario.irs_position),
        np.array(scenario.su_position),
        np.array(scenario.pu_position),
        [np.array(c) for c in scenario.eve_centers[: scenario.k]],
        exponent=scenario.path_loss_exponent,
        path_count=scenario.path_count,
        rng_seed=ch_offsets,
        irs_rotation_z=scenario.irs_rotation_z,
    )
    realization = ChannelRealization(
        geom=geom,
        h_ci=synth_cbs_irs_channel(geom, links.cbs_irs, ch_gains),
        h_is=synth_irs_user_channel(geom, links.irs_su, ch_gains),
        h_ip=synth_irs_user_channel(geom, links.irs_pu, ch_gains),
        eve_nominal=[synth_irs_user_channel(geom, p, ch_gains) for p in links.irs_eves],
        eve_params=links.irs_eves,
    )
    if abs(scenario.rho_cbs) > 0 or scenario.irs_correlation:
        r_cbs = kronecker_correlation(scenario.rho_cbs, geom.m)
        r_irs = sinc_correlation(geom) if scenario.irs_correlation else np.eye(geom.n)
        realization = apply_spatial_correlation(realization, r_cbs, r_irs)

    delta = scenario.delta if delta_override is None else delta_override
    regions = []
    for idx, params in enumerate(links.irs_eves):
        center = params.los_angles if region_centers is None else region_centers[idx]
        regions.append(
            build_region(
                center,
                delta,
                grid_shape=scenario.hull_grid,
                eval_grid_step=scenario.eval_grid_step,
                xi=1.0 / np.sqrt(params.avg_path_loss),
            )
        )
    return Trial(
        scenario=scenario,
        realization=realization,
        regions=regions,
        h_s=effective_channel(realization.h_is, realization.h_ci),
        h_p=effective_channel(realization.h_ip, realization.h_ci),
        q_init_rng=q_init,
        scheme_rng=scheme,
        actual_rng=actual,
    )


def draw_actual_angles(trial: Trial) -> list[AnglePair]:
    """One actual angle per Eve, uniform over its evaluation lattice."""
    out = []
    for region in trial.regions:
        thetas, phis = eval_grid_axes(region)
        t = thetas[trial.actual_rng.integers(len(thetas))]
        p = phis[trial.actual_rng.integers(len(phis))]
        out.append(AnglePair(float(t), float(p)))
    return out


def random_phases(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))
