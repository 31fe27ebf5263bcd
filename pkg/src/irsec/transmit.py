"""Heuristic robust transmit beamforming at the CBS for fixed reflect phases.

For fixed q the worst-case secrecy objective reduces to a generalized
Rayleigh quotient in the unit-norm direction x after splitting w = sqrt(P) x.
The solver alternates closed-form updates: the transmit power rides the
interference-temperature dichotomy (either the cap binds or the power budget
does), the slack zeta absorbs whatever headroom the cap leaves, the hull
weights move to the Cauchy-Schwarz maximizer of the weighted leakage, and
the direction refreshes from the eigen-solve. Iteration stops on a small
quotient change, a fixed point, or the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from irsec.channel import ChannelRealization
from irsec.linalg import generalized_rayleigh_max, hermitianize
from irsec.scenario import ScenarioConfig, Trial
from irsec.uncertainty import (
    HullSampleSet,
    UncertaintyRegion,
    transmit_leakage_hull,
    update_transmit_hull_weights,
)


@dataclass
class TransmitState:
    x: np.ndarray          # unit-norm direction
    power: float
    zeta: float
    gamma: float
    weights: list[np.ndarray]

    def __post_init__(self):
        if abs(np.linalg.norm(self.x) - 1.0) > 1e-9:
            raise ValueError("x must be unit norm")
        if not (-1e-9 <= self.zeta <= 1.0 + 1e-9):
            raise ValueError(f"zeta {self.zeta} outside [0, 1]")
        if self.power <= 0:
            raise ValueError("power must be positive")


@dataclass
class TransmitResult:
    w: np.ndarray
    state: TransmitState
    iterations: int
    converged: bool


def pu_coupling(x: np.ndarray, q: np.ndarray, h_p: np.ndarray) -> float:
    """Interference gain |q^H H_p x|^2 of a unit-norm direction."""
    return float(np.abs(q.conj() @ h_p @ x) ** 2)


def update_power(x: np.ndarray, q: np.ndarray, h_p: np.ndarray, p_max: float, i_th: float) -> float:
    """Largest admissible power: min(P_max, I_th / coupling).

    Couplings below 1e-18 count as zero interference (full power) to avoid
    division overflow.
    """
    g = pu_coupling(x, q, h_p)
    if g <= 1e-18:
        return float(p_max)
    return float(min(p_max, i_th / g))


def update_zeta(power: float, x: np.ndarray, q: np.ndarray, h_p: np.ndarray, i_th: float) -> float:
    """Slack 1 - P g / I_th left by the interference cap; in [0, 1] when the
    power came from update_power on the same (x, q)."""
    zeta = 1.0 - power * pu_coupling(x, q, h_p) / i_th
    if not (-1e-9 <= zeta <= 1.0 + 1e-9):
        raise ValueError(f"inconsistent power/direction pairing: zeta = {zeta}")
    return float(min(max(zeta, 0.0), 1.0))


def build_quotient_pair(
    power: float,
    zeta: float,
    hulls: list[HullSampleSet],
    h_ci: np.ndarray,
    h_s: np.ndarray,
    h_p: np.ndarray,
    q: np.ndarray,
    sigma_s2: float,
    sigma2: float,
    i_th: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Denominator/numerator matrices (A, B) of the direction quotient.

    A collects the weighted Eve leakage, the scaled PU coupling, and the
    slack-weighted noise floor; B is the SU response plus its noise.
    """
    m = h_ci.shape[1]
    if h_s.shape != h_ci.shape or h_p.shape != h_ci.shape:
        raise ValueError("effective channels must share the CBS-IRS shape")
    leak = np.zeros((m, m), dtype=complex)
    for hull in hulls:
        leak += h_ci.conj().T @ hull.weighted_sum() @ h_ci
    v_p = h_p.conj().T @ q
    v_s = h_s.conj().T @ q
    a = power * leak + (power * sigma2 / i_th) * np.outer(v_p, v_p.conj()) + zeta * sigma2 * np.eye(m)
    b = power * np.outer(v_s, v_s.conj()) + sigma_s2 * np.eye(m)
    return hermitianize(a), hermitianize(b)


def solve_transmit(
    q: np.ndarray,
    realization: ChannelRealization,
    regions: list[UncertaintyRegion],
    scenario: ScenarioConfig,
    h_s: np.ndarray | None = None,
    h_p: np.ndarray | None = None,
) -> TransmitResult:
    """Run the full heuristic for fixed reflect phases and return w.

    The returned vector satisfies ||w||^2 <= P_max and the interference cap
    (the power is re-derived from the final direction, which keeps the cap
    tight or the budget binding).
    """
    geom = realization.geom
    h_ci = realization.h_ci
    if h_s is None:
        h_s = realization.h_is.conj()[:, None] * h_ci
    if h_p is None:
        h_p = realization.h_ip.conj()[:, None] * h_ci
    p_max, i_th = scenario.p_c_max_w, scenario.i_p_th
    sigma_s2, sigma2 = scenario.sigma_s2_w, scenario.sigma2_w

    hulls = [
        transmit_leakage_hull(r, q, geom, realization.irs_corr_sqrt) for r in regions
    ]
    power, zeta = p_max, 0.0
    a, b = build_quotient_pair(power, zeta, hulls, h_ci, h_s, h_p, q, sigma_s2, sigma2, i_th)
    gamma, x = generalized_rayleigh_max(a, b)

    converged = False
    iterations = 0
    tiny_rel_changes = 0
    for iterations in range(1, scenario.max_transmit_iterations + 1):
        power = update_power(x, q, h_p, p_max, i_th)
        zeta = update_zeta(power, x, q, h_p, i_th)
        for hull in hulls:
            hull.weights = update_transmit_hull_weights(x, h_ci, hull)
        a, b = build_quotient_pair(power, zeta, hulls, h_ci, h_s, h_p, q, sigma_s2, sigma2, i_th)
        gamma_new, x_new = generalized_rayleigh_max(a, b)
        dg = abs(gamma_new - gamma)
        fixed_point = np.max(np.abs(x_new - x)) <= 1e-14
        tiny_rel_changes = tiny_rel_changes + 1 if dg <= 1e-9 * max(1.0, abs(gamma)) else 0
        gamma, x = gamma_new, x_new
        if dg <= scenario.epsilon or fixed_point or tiny_rel_changes >= 3:
            converged = True
            break

    # final consistency pass: re-derive the power from the final direction so
    # the returned w honors both the budget and the interference cap exactly
    power = update_power(x, q, h_p, p_max, i_th)
    zeta = update_zeta(power, x, q, h_p, i_th)
    state = TransmitState(
        x=x, power=power, zeta=zeta, gamma=gamma, weights=[h.weights for h in hulls]
    )
    return TransmitResult(w=np.sqrt(power) * x, state=state, iterations=iterations, converged=converged)


def solve_transmit_for_trial(q: np.ndarray, trial: Trial) -> TransmitResult:
    return solve_transmit(
        q, trial.realization, trial.regions, trial.scenario, h_s=trial.h_s, h_p=trial.h_p
    )
