"""Robust reflect beamforming at the IRS for a fixed transmit vector.

The fractional worst-case problem in the lifted phase matrix is flattened by
a Charnes-Cooper substitution R = r * Theta into a linear SDP over
(R, r, t), where the SU response is normalized and t upper-bounds the
weighted Eve leakage plus noise. The rank-1 requirement on R is enforced by
iteratively penalizing the trace/top-eigenvalue gap: the non-smooth top
eigenvalue is linearized at the current principal eigenvector, each penalty
solve cannot increase the penalized objective, and the penalty coefficient
doubles whenever the iterate stalls. An outer loop re-weights the leakage
hull toward its worst vertex mix until the normalized objective settles.

Two internal normalizations keep the SDP data and the objective trade-off
at unit scale regardless of the physical noise floor. First, the SU
constraint is normalized to its value at the identity-diagonal lifted
matrix instead of to one (exact: R, r, t scale jointly). Second, the
leakage bound t is measured in units of the leakage of a warm-start phase
vector, so the penalty term and the leakage term meet the solver at
commensurate magnitudes; this is a units choice, not an algorithm change,
and reported objective values are converted back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from irsec.channel import ChannelRealization
from irsec.linalg import EigenPair, hermitian_eig_max, rank1_extract
from irsec.scenario import ScenarioConfig, Trial
from irsec.sdp import LinearTerm, SDPProblem, SDPSolution
from irsec.sdp import solve as sdp_solve
from irsec.uncertainty import (
    HullSampleSet,
    UncertaintyRegion,
    reflect_leakage_hull,
    update_reflect_hull_weights,
)


class ReflectSolveError(RuntimeError):
    """Raised when a penalty-iteration SDP comes back unusable."""


@dataclass
class ReflectState:
    r_mat: np.ndarray
    r: float
    t: float
    weights: list[np.ndarray]
    penalty_rho: float
    principal: EigenPair

    def __post_init__(self):
        diag = np.real(np.diag(self.r_mat))
        if np.max(np.abs(diag - self.r)) > 1e-4 * max(1.0, abs(self.r)):
            raise ValueError("diagonal of R must equal r")


@dataclass
class PenaltyRecord:
    """One accepted SDP solve: the penalized objective before and after."""

    outer: int
    inner: int
    rho: float
    f_before: float
    f_after: float
    status: str


@dataclass
class ReflectResult:
    q: np.ndarray
    t_cc: float                      # normalized leakage objective at the solution
    state: ReflectState
    hulls: list[HullSampleSet] = field(default_factory=list)
    records: list[PenaltyRecord] = field(default_factory=list)
    outer_iterations: int = 0
    sdp_solves: int = 0
    converged: bool = True
    rejected_solves: int = 0
    rank1_gap_rel: float = 0.0
    extraction_residual: float = 0.0
    rate_from_t: float = float("nan")           # log2((sigma^2/sigma_S^2) t)
    rate_from_t_reciprocal: float = float("nan")  # log2(sigma^2/(sigma_S^2 t))


def rank1_gap(r_mat: np.ndarray) -> float:
    """tr(R) - lambda_max(R), nonnegative on the PSD cone and zero only on
    matrices of rank at most one."""
    pair = hermitian_eig_max(r_mat)
    vals_floor = np.linalg.eigvalsh(r_mat)[0]
    if vals_floor < -1e-8 * max(1.0, abs(pair.value)):
        raise ValueError(f"matrix is indefinite: min eigenvalue {vals_floor:.3e}")
    return float(np.real(np.trace(r_mat))) - pair.value


def assemble_penalized_problem(
    u_s: np.ndarray,
    u_p: np.ndarray,
    hulls: list[HullSampleSet],
    principal_vec: np.ndarray | None,
    penalty_rho: float,
    sigma_s2: float,
    sigma2: float,
    i_th: float,
    su_target: float,
    leak_unit: float = 1.0,
) -> SDPProblem:
    """Penalty-iteration SDP over (R, r, t) for fixed hull weights.

    Constraints: weighted leakage + r sigma^2 <= t (in units of leak_unit);
    SU response + r sigma_S^2 >= su_target; PU coupling <= r I_th; every
    diagonal entry of R equals r. Objective: t plus penalty_rho times the
    linearized rank-1 gap. With penalty_rho = 0 the objective is t alone
    (the relaxation used to find a feasible start).
    """
    n = u_s.shape[0]
    leak = np.zeros((n, n), dtype=complex)
    for hull in hulls:
        leak += hull.weighted_sum()
    su_mat = np.outer(u_s, u_s.conj())
    pu_mat = np.outer(u_p, u_p.conj())
    if penalty_rho > 0 and principal_vec is None:
        raise ValueError("penalized objective needs a linearization point")
    if penalty_rho > 0:
        c_obj = penalty_rho * (np.eye(n) - np.outer(principal_vec, principal_vec.conj()))
    else:
        c_obj = np.zeros((n, n), dtype=complex)
    eqs = []
    for k in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[k, k] = 1.0
        eqs.append(LinearTerm(e, b=-1.0, d=0.0))
    ineqs = [
        LinearTerm(leak / leak_unit, b=sigma2 / leak_unit, c=-1.0, d=0.0),
        LinearTerm(-su_mat, b=-sigma_s2, d=-su_target),
        LinearTerm(pu_mat, b=-i_th, d=0.0),
    ]
    return SDPProblem(n, LinearTerm(c_obj, c=1.0), eqs, ineqs)


def recover_theta(r_mat: np.ndarray, r: float) -> np.ndarray:
    """Lifted phase matrix Theta = R / r; rejects the degenerate r ~ 0 point."""
    if r <= 1e-12:
        raise ValueError(f"Charnes-Cooper scale r = {r:.3e} is degenerate")
    return r_mat / r


def _leakage_value(r_mat: np.ndarray, r: float, hulls, sigma2: float) -> float:
    total = 0.0
    for hull in hulls:
        total += float(np.real(np.trace(hull.weighted_sum() @ r_mat)))
    return total + r * sigma2


def _polish_interference(
    q: np.ndarray, u_p: np.ndarray, i_th: float, max_sweeps: int = 60
) -> np.ndarray:
    """Nudge unit-modulus phases back under the interference cap.

    Rank-1 extraction perturbs the coupling |q^H u_p|^2 at the extraction
    error scale, which can dwarf a cap sitting far below the channel scale.
    Alternating projection between the zero-coupling hyperplane and the
    unit-modulus manifold removes the residual while moving q by only the
    violation amplitude.
    """
    norm2 = float(np.linalg.norm(u_p) ** 2)
    if norm2 <= 0.0:
        return q
    best = q
    best_it = float(np.abs(q.conj() @ u_p) ** 2)
    for _ in range(max_sweeps):
        if best_it <= i_th:
            break
        coupling = q.conj() @ u_p
        q_c = q - u_p * np.conj(coupling) / norm2
        nz = np.abs(q_c) > 0
        q = np.where(nz, q_c / np.where(nz, np.abs(q_c), 1.0), 1.0 + 0.0j)
        it = float(np.abs(q.conj() @ u_p) ** 2)
        if it < best_it:
            best, best_it = q, it
    return best


def _cleaned(sol: SDPSolution, u_s, sigma_s2, su_target, hulls, sigma2):
    """Tighten the SU constraint exactly by joint rescaling and recompute t.

    Both operations preserve feasibility of the homogeneous constraints and
    never increase the objective, so optimality claims survive; they pin the
    identities the Charnes-Cooper argument relies on.
    """
    su_val = float(np.real(u_s.conj() @ sol.r_mat @ u_s)) + sol.r * sigma_s2
    beta = su_target / su_val if su_val > 0 else 1.0
    r_mat = sol.r_mat * beta
    r = sol.r * beta
    t = _leakage_value(r_mat, r, hulls, sigma2)
    return r_mat, float(r), float(t)


def solve_reflect(
    w: np.ndarray,
    realization: ChannelRealization,
    regions: list[UncertaintyRegion],
    scenario: ScenarioConfig,
    h_s: np.ndarray | None = None,
    h_p: np.ndarray | None = None,
    q_warm: np.ndarray | None = None,
) -> ReflectResult:
    """Run the full penalty/reweighting scheme and extract unit-modulus phases.

    q_warm (typically the phases from the previous alternating step) only
    calibrates the leakage unit; it never constrains the solution.
    """
    geom = realization.geom
    h_ci = realization.h_ci
    if h_s is None:
        h_s = realization.h_is.conj()[:, None] * h_ci
    if h_p is None:
        h_p = realization.h_ip.conj()[:, None] * h_ci
    u_s = h_s @ w
    u_p = h_p @ w
    sigma_s2, sigma2, i_th = scenario.sigma_s2_w, scenario.sigma2_w, scenario.i_p_th
    # canonical Charnes-Cooper target: the SU value of the identity-diagonal
    # lifted matrix, which keeps (R, r) near unit scale inside the solver
    su_target = float(np.linalg.norm(u_s) ** 2 + sigma_s2)

    hulls = [
        reflect_leakage_hull(region, w, h_ci, geom, realization.irs_corr_sqrt)
        for region in regions
    ]

    def leak_at_lifted(theta: np.ndarray) -> float:
        su_val = float(np.real(u_s.conj() @ theta @ u_s)) + sigma_s2
        scale = su_target / su_val
        return _leakage_value(scale * theta, scale, hulls, sigma2)

    if q_warm is not None:
        leak_unit = leak_at_lifted(np.outer(q_warm, q_warm.conj()))
    else:
        leak_unit = leak_at_lifted(np.eye(geom.n, dtype=complex))
    leak_unit = max(leak_unit, sigma2)

    def accept(sol: SDPSolution, context: str) -> None:
        if sol.status == "infeasible":
            raise ReflectSolveError(f"SDP infeasible at {context}: {sol.message}")

    solves = 0

    def run_sdp(principal_vec, rho, context) -> SDPSolution:
        nonlocal solves
        problem = assemble_penalized_problem(
            u_s, u_p, hulls, principal_vec, rho, sigma_s2, sigma2, i_th, su_target,
            leak_unit=leak_unit,
        )
        sol = sdp_solve(problem, tolerance=scenario.sdp_tolerance)
        solves += 1
        accept(sol, context)
        eq_res, ineq_res = problem.residuals(sol.r_mat, sol.r, sol.t)
        worst = max(eq_res.max(), ineq_res.max())
        if worst > 1e-4 * max(1.0, abs(sol.r)):
            raise ReflectSolveError(
                f"SDP solution unusable at {context}: residual {worst:.2e}, status {sol.status}"
            )
        return sol

    sol = run_sdp(None, 0.0, "feasible start")
    r_mat, r, t = _cleaned(sol, u_s, sigma_s2, su_target, hulls, sigma2)
    # re-calibrate the unit to the relaxation optimum so the penalty phase
    # trades rank-forcing against leakage at commensurate magnitudes
    leak_unit = max(t, sigma2)
    records: list[PenaltyRecord] = []
    rejected_solves = 0
    converged = True
    t_prev = t / leak_unit
    outer = 0
    for outer in range(1, scenario.max_reflect_outer + 1):
        rho = scenario.penalty_rho0
        inner = 0
        pass_solves = 0
        flagged = False
        # at least one solve per outer pass so the re-weighted leakage
        # actually enters the iterate before the settling test on t
        while pass_solves == 0 or rank1_gap(r_mat) > scenario.epsilon * np.real(np.trace(r_mat)):
            if solves >= scenario.max_reflect_solves:
                converged = False
                flagged = True
                break
            principal = hermitian_eig_max(r_mat)
            # evaluate the incumbent under the weights this solve will use
            f_before = (
                _leakage_value(r_mat, r, hulls, sigma2) / leak_unit + rho * rank1_gap(r_mat)
            )
            sol = run_sdp(principal.vector, rho, f"outer {outer} inner {inner}")
            pass_solves += 1
            new_mat, new_r, new_t = _cleaned(sol, u_s, sigma_s2, su_target, hulls, sigma2)
            f_after = new_t / leak_unit + rho * rank1_gap(new_mat)
            if f_after > f_before + 1e-7:
                # inexact solve regressed past the incumbent: keep the
                # incumbent and escalate the penalty instead
                rejected_solves += 1
                rho *= 2.0
                if rho > scenario.penalty_rho_cap:
                    converged = False
                    flagged = True
                    break
                continue
            records.append(
                PenaltyRecord(outer, inner, rho, float(f_before), float(f_after), sol.status)
            )
            drift = np.linalg.norm(new_mat - r_mat) / max(np.linalg.norm(r_mat), 1e-30)
            if drift <= 1e-4:
                rho *= 2.0
                if rho > scenario.penalty_rho_cap:
                    r_mat, r, t = new_mat, new_r, new_t
                    converged = False
                    flagged = True
                    break
            else:
                r_mat, r, t = new_mat, new_r, new_t
                inner += 1
                rho = scenario.penalty_rho0
        for hull in hulls:
            hull.weights = update_reflect_hull_weights(r_mat, hull)
        t_scaled = t / leak_unit
        if abs(t_scaled - t_prev) <= scenario.epsilon or flagged:
            t_prev = t_scaled
            break
        t_prev = t_scaled

    theta = recover_theta(r_mat, r)
    extraction = rank1_extract(theta, diag_tol=1e-2)
    q_final = _polish_interference(extraction.q, u_p, i_th)
    gap_rel = rank1_gap(r_mat) / max(np.real(np.trace(r_mat)), 1e-30)
    principal = hermitian_eig_max(r_mat)
    # report the leakage under the final weights so (t, weights) is coherent
    t_final = _leakage_value(r_mat, r, hulls, sigma2)
    state = ReflectState(
        r_mat=r_mat,
        r=r,
        t=t_final,
        weights=[h.weights for h in hulls],
        penalty_rho=scenario.penalty_rho0,
        principal=principal,
    )
    ratio = sigma2 / sigma_s2
    t_cc = t_final / su_target
    return ReflectResult(
        q=q_final,
        t_cc=float(t_cc),
        state=state,
        hulls=hulls,
        records=records,
        outer_iterations=outer,
        sdp_solves=solves,
        converged=converged,
        rejected_solves=rejected_solves,
        rank1_gap_rel=float(gap_rel),
        extraction_residual=float(extraction.residual),
        rate_from_t=float(np.log2(ratio * t_cc)) if t_cc > 0 else float("-inf"),
        rate_from_t_reciprocal=float(np.log2(ratio / t_cc)) if t_cc > 0 else float("inf"),
    )


def solve_reflect_for_trial(w: np.ndarray, trial: Trial) -> ReflectResult:
    return solve_reflect(
        w, trial.realization, trial.regions, trial.scenario, h_s=trial.h_s, h_p=trial.h_p
    )
