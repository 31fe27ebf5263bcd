"""Dense interior-point solver for small SDPs over (R, r, t).

Problems have one complex Hermitian PSD matrix variable R, one nonnegative
scalar r, one free scalar t, and real-linear constraints

    tr(A_i R) + b_i r + c_i t  {=, <=}  d_i.

The complex variable is embedded as a real symmetric matrix of doubled
dimension ([Re, -Im; Im, Re]); constraints map linearly, so one
real-arithmetic path-following core serves the whole package. The solver is
a primal-dual method with Nesterov-Todd scaling, an adaptive centering
parameter from an affine predictor, and dense factorizations. It targets
matrix dimensions up to roughly 80 after embedding, which covers the
reflect-beamforming subproblem at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from irsec.linalg import check_hermitian, embed_hermitian, unembed_hermitian


@dataclass
class LinearTerm:
    """One constraint row tr(A R) + b r + c t (sense) d."""

    a: np.ndarray
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def value(self, r_mat: np.ndarray, r: float, t: float) -> float:
        return float(np.real(np.trace(self.a @ r_mat))) + self.b * r + self.c * t


@dataclass
class SDPProblem:
    matrix_dim: int
    objective: LinearTerm
    equality_constraints: list[LinearTerm] = field(default_factory=list)
    inequality_constraints: list[LinearTerm] = field(default_factory=list)

    def __post_init__(self):
        n = self.matrix_dim
        for term in [self.objective, *self.equality_constraints, *self.inequality_constraints]:
            term.a = check_hermitian(np.asarray(term.a, dtype=complex), name="constraint matrix")
            if term.a.shape != (n, n):
                raise ValueError(f"constraint matrix shape {term.a.shape} != ({n}, {n})")

    @property
    def variable_count(self) -> int:
        """Real degrees of freedom: N^2 in the Hermitian block plus 2 scalars."""
        return self.matrix_dim**2 + 2

    def residuals(self, r_mat: np.ndarray, r: float, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(equality residuals |lhs - d|, inequality violations max(lhs - d, 0))."""
        eq = np.array([abs(c.value(r_mat, r, t) - c.d) for c in self.equality_constraints])
        ineq = np.array([max(c.value(r_mat, r, t) - c.d, 0.0) for c in self.inequality_constraints])
        return eq, ineq


@dataclass
class SDPSolution:
    r_mat: np.ndarray
    r: float
    t: float
    objective_value: float
    status: str  # optimal | max-iterations | infeasible
    iterations: int = 0
    gap: float = float("nan")
    message: str = ""


def dump_problem(problem: SDPProblem, path: str) -> None:
    """Write a problem instance as self-describing text for offline checks.

    Matrices are row-major, one complex entry per 're im' pair, reals in
    decimal. The format round-trips through load_problem.
    """
    lines = [f"matrix_dim {problem.matrix_dim}"]

    def emit(tag: str, term: LinearTerm):
        lines.append(f"{tag} b {float(term.b)!r} c {float(term.c)!r} d {float(term.d)!r}")
        for row in term.a:
            lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))

    emit("objective", problem.objective)
    lines.append(f"equalities {len(problem.equality_constraints)}")
    for term in problem.equality_constraints:
        emit("eq", term)
    lines.append(f"inequalities {len(problem.inequality_constraints)}")
    for term in problem.inequality_constraints:
        emit("ineq", term)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path: str) -> SDPProblem:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    pos = 0
    n = int(lines[pos].split()[1])
    pos += 1

    def parse_term() -> LinearTerm:
        nonlocal pos
        head = lines[pos].split()
        pos += 1
        b, c, d = float(head[2]), float(head[4]), float(head[6])
        rows = []
        for _ in range(n):
            vals = [float(v) for v in lines[pos].split()]
            pos += 1
            rows.append([complex(vals[2 * j], vals[2 * j + 1]) for j in range(n)])
        return LinearTerm(np.array(rows), b, c, d)

    objective = parse_term()
    n_eq = int(lines[pos].split()[1])
    pos += 1
    eqs = [parse_term() for _ in range(n_eq)]
    n_ineq = int(lines[pos].split()[1])
    pos += 1
    ineqs = [parse_term() for _ in range(n_ineq)]
    return SDPProblem(n, objective, eqs, ineqs)


# ---------------------------------------------------------------------------
# canonical real form
# ---------------------------------------------------------------------------


class _Canonical:
    """Standard conic form min <C,X> + cl.xl + cf.xf  s.t.  A(X) + Al xl + Af xf = d."""

    def __init__(self, problem: SDPProblem):
        n = problem.matrix_dim
        self.ns = 2 * n
        rows = list(problem.equality_constraints) + list(problem.inequality_constraints)
        n_ineq = len(problem.inequality_constraints)
        m = len(rows)
        # columns of xl: [r, slack_1..slack_n_ineq]
        self.nl = 1 + n_ineq
        self.a_stack = np.empty((m, self.ns, self.ns))
        self.a_lin = np.zeros((m, self.nl))
        self.a_free = np.zeros((m, 1))
        self.d = np.zeros(m)
        for i, term in enumerate(rows):
            self.a_stack[i] = embed_hermitian(term.a) / 2.0
            self.a_lin[i, 0] = term.b
            self.a_free[i, 0] = term.c
            self.d[i] = term.d
        for j in range(n_ineq):
            self.a_lin[len(problem.equality_constraints) + j, 1 + j] = 1.0
        self.c_sdp = embed_hermitian(problem.objective.a) / 2.0
        self.c_lin = np.zeros(self.nl)
        self.c_lin[0] = problem.objective.b
        self.c_free = np.array([problem.objective.c])
        # drop the free column when t is absent from every constraint
        self.has_t = bool(np.abs(self.a_free).max() > 0.0) if m else False
        self.t_unbounded = (not self.has_t) and problem.objective.c != 0.0
        if not self.has_t:
            self.a_free = np.zeros((m, 0))
            self.c_free = np.zeros(0)
        # scaling state
        self.row_scale = np.ones(m)
        self.col_scale_lin = np.ones(self.nl)
        self.col_scale_free = np.ones(self.a_free.shape[1])
        self.col_scale_sdp = 1.0
        self.obj_scale = 1.0

    def equilibrate(self):
        m = self.d.shape[0]
        if m == 0:
            return
        for _ in range(2):
            block = np.linalg.norm(self.a_stack.reshape(m, -1), axis=1)
            row = np.maximum.reduce(
                [
                    block,
                    np.abs(self.a_lin).max(axis=1) if self.nl else np.zeros(m),
                    np.abs(self.a_free).max(axis=1) if self.a_free.shape[1] else np.zeros(m),
                ]
            )
            row = np.where(row > 0, row, 1.0)
            self.a_stack /= row[:, None, None]
            self.a_lin /= row[:, None]
            if self.a_free.shape[1]:
                self.a_free /= row[:, None]
            self.d /= row
            self.row_scale *= row

            col_l = np.abs(self.a_lin).max(axis=0)
            col_l = np.where(col_l > 0, col_l, 1.0)
            self.a_lin /= col_l[None, :]
            self.c_lin = self.c_lin / col_l
            self.col_scale_lin /= col_l
            if self.a_free.shape[1]:
                col_f = np.abs(self.a_free).max(axis=0)
                col_f = np.where(col_f > 0, col_f, 1.0)
                self.a_free /= col_f[None, :]
                self.c_free = self.c_free / col_f
                self.col_scale_free /= col_f
            col_s = np.linalg.norm(self.a_stack.reshape(m, -1), axis=1).max()
            if col_s > 0:
                self.a_stack /= col_s
                self.c_sdp = self.c_sdp / col_s
                self.col_scale_sdp /= col_s
        obj = max(
            np.linalg.norm(self.c_sdp),
            np.abs(self.c_lin).max() if self.nl else 0.0,
            np.abs(self.c_free).max() if self.c_free.size else 0.0,
            1e-30,
        )
        self.c_sdp /= obj
        self.c_lin /= obj
        if self.c_free.size:
            self.c_free /= obj
        self.obj_scale = obj


def _max_step_psd(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with x + alpha dx >= 0 for PD x."""
    n = x.shape[0]
    try:
        chol = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(x)
        w = np.clip(w, 1e-14 * max(1.0, float(w[-1])), None)
        chol = np.linalg.cholesky((v * w) @ v.T + 1e-14 * np.eye(n))
    g = np.linalg.solve(chol, np.linalg.solve(chol, dx).T).T
    lmin = float(np.linalg.eigvalsh((g + g.T) / 2)[0])
    return np.inf if lmin >= 0 else -1.0 / lmin


def _is_pd(x: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(x)
        return True
    except np.linalg.LinAlgError:
        return False


def _max_step_lin(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve(problem: SDPProblem, tolerance: float = 1e-7, max_iterations: int = 200) -> SDPSolution:
    """Solve the problem to the requested duality-gap/feasibility tolerance.

    Deterministic for fixed inputs. Infeasible or unbounded instances yield
    status 'infeasible' with no fabricated solution matrices; hitting the
    iteration cap yields 'max-iterations' with the best iterate found.
    """
    can = _Canonical(problem)
    if can.t_unbounded:
        return SDPSolution(
            np.zeros((problem.matrix_dim,) * 2, dtype=complex), 0.0, 0.0, float("nan"),
            "infeasible", 0, message="free scalar t appears only in the objective",
        )
    can.equilibrate()

    ns, nl, m = can.ns, can.nl, can.d.shape[0]
    nf = can.a_free.shape[1]
    a2 = can.a_stack.reshape(m, -1)
    nu = ns + nl

    d_norm = float(np.abs(can.d).max()) if m else 0.0
    eta_p = max(10.0, np.sqrt(ns), d_norm)
    eta_d = max(10.0, np.sqrt(ns), float(np.linalg.norm(can.c_sdp)))
    x_s = eta_p * np.eye(ns)
    x_l = eta_p * np.ones(nl)
    s_s = eta_d * np.eye(ns)
    s_l = eta_d * np.ones(nl)
    y = np.zeros(m)
    x_f = np.zeros(nf)

    feastol = max(tolerance, 1e-9)
    best = None
    best_metric = np.inf
    status = "max-iterations"
    message = ""
    it = 0
    stalled = 0
    since_improvement = 0

    def avec(mat):
        return a2 @ mat.ravel()

    def aadj(vec):
        return np.tensordot(vec, can.a_stack, axes=1)

    mu0 = None
    for it in range(1, max_iterations + 1):
        r_p = can.d - avec(x_s) - can.a_lin @ x_l - (can.a_free @ x_f if nf else 0.0)
        r_d = can.c_sdp - s_s - aadj(y)
        r_dl = can.c_lin - can.a_lin.T @ y - s_l
        r_df = can.c_free - can.a_free.T @ y if nf else np.zeros(0)

        gap = float(np.sum(x_s * s_s) + x_l @ s_l)
        mu = gap / nu
        if mu0 is None:
            mu0 = mu
        pobj = float(np.sum(can.c_sdp * x_s) + can.c_lin @ x_l + (can.c_free @ x_f if nf else 0.0))
        dobj = float(can.d @ y)
        pinf = float(np.abs(r_p).max() / (1 + d_norm)) if m else 0.0
        # residual of each constraint in the caller's units
        orig_pres = float((np.abs(r_p) * can.row_scale).max()) if m else 0.0
        dinf = max(
            float(np.linalg.norm(r_d) / (1 + np.linalg.norm(can.c_sdp))),
            float(np.abs(r_dl).max() / (1 + np.abs(can.c_lin).max())) if nl else 0.0,
            float(np.abs(r_df).max()) if nf else 0.0,
        )
        relgap = max(abs(pobj - dobj), gap) / (1 + abs(pobj) + abs(dobj))
        metric = max(pinf, dinf, relgap)
        if metric < 0.9 * best_metric:
            since_improvement = 0
        else:
            since_improvement += 1
        if metric < best_metric:
            best_metric = metric
            best = (x_s.copy(), x_l.copy(), x_f.copy(), gap)
        if relgap <= tolerance and orig_pres <= 5e-7 and dinf <= max(tolerance, 1e-7):
            status = "optimal"
            break
        if since_improvement >= 20:
            message = "progress stalled; returning best iterate"
            break
        if mu < 1e-14 * max(mu0, 1.0) and pinf > 1e-3:
            status = "infeasible"
            message = f"complementarity vanished with primal residual {pinf:.2e}"
            break
        if np.trace(x_s) > 1e14 * eta_p * ns:
            status = "infeasible"
            message = "primal iterates diverged (problem likely unbounded or dual infeasible)"
            break

        # HKM scaling: Schur entries tr(A_i X A_j S^{-1}); the matrix is
        # nonsymmetric in general and solved by dense LU
        s_inv = np.linalg.inv(s_s)
        s_inv = (s_inv + s_inv.T) / 2
        d_l = x_l / s_l

        xas = np.matmul(x_s, np.matmul(can.a_stack, s_inv))
        m_schur = a2 @ xas.reshape(m, -1).T
        m_schur += (can.a_lin * d_l) @ can.a_lin.T
        if nf:
            k_mat = np.block([[m_schur, can.a_free], [can.a_free.T, np.zeros((nf, nf))]])
        else:
            k_mat = m_schur

        x_rd_s = x_s @ r_d @ s_inv

        def solve_kkt(k_fact, rhs):
            try:
                sol = np.linalg.solve(k_fact, rhs)
            except np.linalg.LinAlgError:
                reg = k_fact + 1e-12 * max(1.0, np.abs(np.diag(k_fact)).max()) * np.eye(k_fact.shape[0])
                sol = np.linalg.solve(reg, rhs)
            # two rounds of iterative refinement keep the equality residuals
            # from drifting once the Schur complement turns ill-conditioned
            for _ in range(2):
                resid = rhs - k_fact @ sol
                if not np.all(np.isfinite(resid)) or np.abs(resid).max() < 1e-14 * max(1.0, np.abs(rhs).max()):
                    break
                try:
                    sol = sol + np.linalg.solve(k_fact, resid)
                except np.linalg.LinAlgError:
                    break
            return sol

        def direction(sigma_mu, k_fact, corr_s=None, corr_l=None):
            rc_s = sigma_mu * s_inv - x_s - x_rd_s
            rc_l = sigma_mu / s_l - x_l - d_l * r_dl
            if corr_s is not None:
                rc_s = rc_s - corr_s
                rc_l = rc_l - corr_l
            rhs1 = r_p - avec(rc_s) - can.a_lin @ rc_l
            rhs = np.concatenate([rhs1, r_df]) if nf else rhs1
            sol = solve_kkt(k_fact, rhs)
            dy = sol[:m]
            dxf = sol[m:] if nf else np.zeros(0)
            ds_s = r_d - aadj(dy)
            ds_l = r_dl - can.a_lin.T @ dy
            dx_s = rc_s + x_s @ aadj(dy) @ s_inv
            dx_s = (dx_s + dx_s.T) / 2
            dx_l = rc_l + d_l * (can.a_lin.T @ dy)
            return dx_s, dx_l, dxf, dy, ds_s, ds_l

        # predictor: measure the achievable affine reduction
        dxa, dla, dfa, dya, dsa, dsla = direction(0.0, k_mat)
        ap = min(1.0, 0.98 * _max_step_psd(x_s, dxa), 0.98 * _max_step_lin(x_l, dla))
        ad = min(1.0, 0.98 * _max_step_psd(s_s, dsa), 0.98 * _max_step_lin(s_l, dsla))
        gap_aff = float(
            np.sum((x_s + ap * dxa) * (s_s + ad * dsa)) + (x_l + ap * dla) @ (s_l + ad * dsla)
        )
        sigma = min(0.9, max(1e-6, (max(gap_aff, 0.0) / gap) ** 3))

        # Mehrotra second-order correction
        corr_s = dxa @ dsa @ s_inv
        corr_l = dla * dsla / s_l
        dx_s, dx_l, dx_f, dy, ds_s, ds_l = direction(sigma * mu, k_mat, corr_s, corr_l)
        ap = min(1.0, 0.98 * _max_step_psd(x_s, dx_s), 0.98 * _max_step_lin(x_l, dx_l))
        ad = min(1.0, 0.98 * _max_step_psd(s_s, ds_s), 0.98 * _max_step_lin(s_l, ds_l))
        # backtrack against rounding at extreme conditioning: the stepped
        # matrices must stay strictly inside the cone
        for _ in range(40):
            xn = x_s + ap * dx_s
            xn = (xn + xn.T) / 2
            if _is_pd(xn) and np.all(x_l + ap * dx_l > 0):
                break
            ap *= 0.7
        else:
            ap = 0.0
            xn = x_s
        for _ in range(40):
            sn = s_s + ad * ds_s
            sn = (sn + sn.T) / 2
            if _is_pd(sn) and np.all(s_l + ad * ds_l > 0):
                break
            ad *= 0.7
        else:
            ad = 0.0
            sn = s_s
        if max(ap, ad) < 1e-10:
            stalled += 1
            if stalled >= 3:
                message = "step length collapsed; returning best iterate"
                break
        else:
            stalled = 0
        x_s = xn
        x_l = x_l + ap * dx_l
        x_f = x_f + ap * dx_f
        y = y + ad * dy
        s_s = sn
        s_l = s_l + ad * ds_l

    if status == "infeasible":
        return SDPSolution(
            np.zeros((problem.matrix_dim,) * 2, dtype=complex), 0.0, 0.0, float("nan"),
            status, it, message=message,
        )
    if status != "optimal" and best is not None:
        x_s, x_l, x_f, gap = best

    # map back to original units
    r_mat = unembed_hermitian(x_s) * can.col_scale_sdp
    r_val = float(x_l[0] * can.col_scale_lin[0])
    t_val = float(x_f[0] * can.col_scale_free[0]) if nf else 0.0
    obj = problem.objective.value(r_mat, r_val, t_val)

    eq_res, ineq_res = problem.residuals(r_mat, r_val, t_val)
    worst = max(eq_res.max() if eq_res.size else 0.0, ineq_res.max() if ineq_res.size else 0.0)
    if status == "optimal" and worst > 1e-6:
        status = "max-iterations"
        message = f"feasibility residual {worst:.2e} above 1e-6 in original units"
    return SDPSolution(r_mat, r_val, t_val, obj, status, it, gap=float(gap), message=message)
