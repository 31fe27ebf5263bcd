"""Angle-of-departure uncertainty regions for the eavesdropper channels.

Each Eve's channel is only known to lie in a box of width delta around an
estimated center angle. The box is discretized two ways: a coarse sample
lattice whose rank-1 leakage matrices span a convex hull used inside the
optimizers, and a fine evaluation lattice on which worst-case rates are
reported. Worst-case channels are line-of-sight with the gain magnitude
pinned at its lower bound xi, so a channel at angle (theta, phi) is
sqrt(N) * xi * a(theta, phi), optionally colored by the IRS correlation
square root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from irsec.channel import (
    PHI_MAX,
    THETA_MAX,
    AnglePair,
    ArrayGeometry,
    upa_steering,
    upa_steering_grid,
)


@dataclass
class UncertaintyRegion:
    center: AnglePair
    delta: float
    lower: AnglePair
    upper: AnglePair
    gain_lower_bound: float
    sample_grid: list[AnglePair]
    eval_grid_step: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.gain_lower_bound <= 0:
            raise ValueError("gain lower bound must be positive")


@dataclass
class HullSampleSet:
    """Rank-1 leakage matrices at the sampled angles of one Eve, plus weights."""

    kind: str  # "transmit" or "reflect"
    matrices: np.ndarray  # (M_k, N, N) Hermitian PSD
    weights: np.ndarray   # simplex weights, one per sample

    def __post_init__(self):
        if self.kind not in ("transmit", "reflect"):
            raise ValueError("kind must be 'transmit' or 'reflect'")
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("matrices must be a stack of square matrices")
        if self.weights.shape != (self.matrices.shape[0],):
            raise ValueError("one weight per sample required")
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights < -1e-12):
            raise ValueError("weights must lie on the simplex")

    @property
    def count(self) -> int:
        return self.matrices.shape[0]

    def weighted_sum(self) -> np.ndarray:
        return np.tensordot(self.weights, self.matrices, axes=1)


def _axis_points(lo: float, hi: float, count: int) -> np.ndarray:
    if hi - lo <= 1e-12 or count <= 1:
        return np.array([(lo + hi) / 2])
    return np.linspace(lo, hi, count)


def build_region(
    center: AnglePair,
    delta: float,
    grid_shape: tuple[int, int] = (5, 5),
    eval_grid_step: float = np.deg2rad(0.1),
    xi: float = 1.0,
) -> UncertaintyRegion:
    """Region spanning center +- delta/2 on both angles, clamped to the domain.

    The sample lattice covers the box uniformly with grid_shape points
    (inclusive endpoints) and collapses to the center when delta is zero.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lower = AnglePair(
        float(np.clip(center.theta - delta / 2, 0.0, THETA_MAX)),
        float(np.clip(center.phi - delta / 2, 0.0, PHI_MAX)),
    )
    upper = AnglePair(
        float(np.clip(center.theta + delta / 2, 0.0, THETA_MAX)),
        float(np.clip(center.phi + delta / 2, 0.0, PHI_MAX)),
    )
    thetas = _axis_points(lower.theta, upper.theta, grid_shape[0])
    phis = _axis_points(lower.phi, upper.phi, grid_shape[1])
    grid = [AnglePair(float(t), float(p)) for t in thetas for p in phis]
    return UncertaintyRegion(center, delta, lower, upper, xi, grid, eval_grid_step)


def eve_channel(
    geom: ArrayGeometry,
    angles: AnglePair,
    xi: float,
    irs_corr_sqrt: np.ndarray | None = None,
) -> np.ndarray:
    """Worst-case LoS channel sqrt(N) xi a(theta, phi) at one angle pair."""
    h = np.sqrt(geom.n) * xi * upa_steering(geom, angles)
    return irs_corr_sqrt @ h if irs_corr_sqrt is not None else h


def eve_channel_grid(
    geom: ArrayGeometry,
    thetas: np.ndarray,
    phis: np.ndarray,
    xi: float,
    irs_corr_sqrt: np.ndarray | None = None,
) -> np.ndarray:
    """Stacked worst-case channels for a batch of angles, one per row."""
    h = np.sqrt(geom.n) * xi * upa_steering_grid(geom, thetas, phis)
    return h @ irs_corr_sqrt.T if irs_corr_sqrt is not None else h


def transmit_leakage_hull(
    region: UncertaintyRegion,
    q: np.ndarray,
    geom: ArrayGeometry,
    irs_corr_sqrt: np.ndarray | None = None,
) -> HullSampleSet:
    """Leakage matrices diag(h_i) q q^H diag(h_i^H) at each sampled angle.

    Used by the transmit subproblem, where the reflect phases q are fixed.
    Every matrix is PSD of rank at most one. Weights start uniform.
    """
    q = np.asarray(q, dtype=complex)
    if np.max(np.abs(np.abs(q) - 1.0)) > 1e-6:
        raise ValueError("q must be unit-modulus")
    if not region.sample_grid:
        raise ValueError("region has an empty sample grid")
    mats = np.empty((len(region.sample_grid), geom.n, geom.n), dtype=complex)
    for i, ang in enumerate(region.sample_grid):
        h = eve_channel(geom, ang, region.gain_lower_bound, irs_corr_sqrt)
        u = h * q
        mats[i] = np.outer(u, u.conj())
    count = len(region.sample_grid)
    return HullSampleSet("transmit", mats, np.full(count, 1.0 / count))


def reflect_leakage_hull(
    region: UncertaintyRegion,
    w: np.ndarray,
    h_ci: np.ndarray,
    geom: ArrayGeometry,
    irs_corr_sqrt: np.ndarray | None = None,
) -> HullSampleSet:
    """Leakage matrices diag(h_i^H) H w w^H H^H diag(h_i) at each sampled angle.

    Used by the reflect subproblem, where the transmit vector w is fixed.
    """
    w = np.asarray(w, dtype=complex)
    if np.linalg.norm(w) <= 0.0:
        raise ValueError("w must be nonzero")
    if not region.sample_grid:
        raise ValueError("region has an empty sample grid")
    z = np.asarray(h_ci, dtype=complex) @ w
    mats = np.empty((len(region.sample_grid), geom.n, geom.n), dtype=complex)
    for i, ang in enumerate(region.sample_grid):
        h = eve_channel(geom, ang, region.gain_lower_bound, irs_corr_sqrt)
        v = h.conj() * z
        mats[i] = np.outer(v, v.conj())
    count = len(region.sample_grid)
    return HullSampleSet("reflect", mats, np.full(count, 1.0 / count))


def _normalized(values: np.ndarray) -> np.ndarray:
    values = np.clip(values, 0.0, None)
    total = values.sum()
    if total <= 0.0:
        return np.full(values.shape, 1.0 / values.size)
    return values / total


def update_transmit_hull_weights(
    x: np.ndarray, h_ci: np.ndarray, samples: HullSampleSet
) -> np.ndarray:
    """Weights proportional to the per-sample leakage x^H H^H F_i H x.

    The proportional choice attains equality in the Cauchy-Schwarz bound,
    so the weighted leakage never falls below its uniform-weight value.
    All-zero leakage degenerates to uniform weights (any weights are
    optimal there).
    """
    y = np.asarray(h_ci, dtype=complex) @ np.asarray(x, dtype=complex)
    vals = np.real(np.einsum("i,kij,j->k", y.conj(), samples.matrices, y))
    return _normalized(vals)


def update_reflect_hull_weights(r_mat: np.ndarray, samples: HullSampleSet) -> np.ndarray:
    """Weights proportional to tr(G_i R); uniform fallback when all traces vanish."""
    vals = np.real(np.einsum("kij,ji->k", samples.matrices, np.asarray(r_mat, dtype=complex)))
    return _normalized(vals)


def eval_grid_axes(region: UncertaintyRegion, step: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive uniform lattice axes over the region bounds at the given step."""
    step = region.eval_grid_step if step is None else step
    if step <= 0:
        raise ValueError("step must be positive")

    def axis(lo, hi):
        span = hi - lo
        if span <= 1e-12:
            return np.array([(lo + hi) / 2])
        return np.linspace(lo, hi, int(round(span / step)) + 1)

    return axis(region.lower.theta, region.upper.theta), axis(region.lower.phi, region.upper.phi)


def worst_case_grid(region: UncertaintyRegion, step: float | None = None) -> list[AnglePair]:
    """Evaluation lattice as angle pairs (theta-major order)."""
    thetas, phis = eval_grid_axes(region, step)
    return [AnglePair(float(t), float(p)) for t in thetas for p in phis]
