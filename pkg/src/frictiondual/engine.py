"""Self-contained convex solver: log-barrier interior point with Newton steps.

Minimizes a smooth convex objective over linear equality constraints and
affine inequality constraints (``G x - h >= 0``).  A linear objective
turns the same machinery into an LP solver; an auxiliary max-slack LP
provides strictly feasible starts and infeasibility certificates.

Dense linear algebra throughout: problems here have at most a few
thousand variables.  Everything is deterministic given its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

BARRIER_SHRINK = 10.0
ARMIJO_C = 1e-4
BACKTRACK_BETA = 0.5
RIDGE_BASE = 1e-12
DEFAULT_TOL = 1e-9
DEFAULT_MAX_NEWTON = 500
DIVERGE_CAP = 1e12


class EngineError(RuntimeError):
    """Solver could not produce a point meeting its contract."""


class InfeasibleProgramError(EngineError):
    """No strictly feasible point exists (phase-one slack nonpositive)."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class ConvexProgram:
    """Smooth convex minimization over affine constraints.

    ``objective(x)`` returns ``(value, gradient, hessian)``; ``in_domain``
    guards open objective domains during line search.  Inequalities read
    ``G x - h >= 0``.
    """

    n: int
    objective: Callable[[np.ndarray], tuple]
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    in_domain: Optional[Callable[[np.ndarray], bool]] = None
    x0: Optional[np.ndarray] = None


@dataclass
class SolveDiagnostics:
    status: str
    objective: float = float("nan")
    barrier_path: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    kkt_stationarity: float = float("nan")
    kkt_feasibility: float = float("nan")
    kkt_complementarity: float = float("nan")
    message: str = ""

    @property
    def kkt_max(self) -> float:
        return max(self.kkt_stationarity, self.kkt_feasibility,
                   self.kkt_complementarity)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "barrier_path": list(self.barrier_path),
            "newton_iterations": list(self.newton_iterations),
            "kkt_stationarity": self.kkt_stationarity,
            "kkt_feasibility": self.kkt_feasibility,
            "kkt_complementarity": self.kkt_complementarity,
            "message": self.message,
        }


@dataclass
class SolveResult:
    x: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    diagnostics: SolveDiagnostics

    @property
    def status(self) -> str:
        return self.diagnostics.status


def _reduce_equalities(A, b):
    """Drop linearly dependent equality rows; fail on inconsistency."""
    if A is None or A.shape[0] == 0:
        return None, None
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    import scipy.linalg

    q, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r)) if r.size else np.array([])
    tol = max(A.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    keep = piv[:rank]
    x_part, res, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ x_part - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
        raise InfeasibleProgramError("inconsistent equality constraints")
    return A[np.sort(keep)], b[np.sort(keep)]


def _kkt_solve(H, A, g, r_eq):
    """Solve [H A^T; A 0] [dx; w] = [-g; -r_eq] with ridge fallback."""
    n = H.shape[0]
    p = 0 if A is None else A.shape[0]
    scale = 1.0 + float(np.trace(H)) / n if n else 1.0
    ridge = 0.0
    for _ in range(14):
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H + ridge * scale * np.eye(n)
        if p:
            K[:n, n:] = A.T
            K[n:, :n] = A
        rhs = np.concatenate([-g, -r_eq]) if p else -g
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            ridge = RIDGE_BASE if ridge == 0.0 else ridge * 100.0
            continue
        if np.all(np.isfinite(sol)):
            dx = sol[:n]
            w = sol[n:] if p else np.zeros(0)
            return dx, w
        ridge = RIDGE_BASE if ridge == 0.0 else ridge * 100.0
    raise EngineError("KKT factorization breakdown")


def solve(program: ConvexProgram, tol: float = DEFAULT_TOL,
          max_newton: int = DEFAULT_MAX_NEWTON, linear: bool = False,
          mu0: float = 1.0) -> SolveResult:
    """Barrier solve of a :class:`ConvexProgram`.

    Barrier weight starts at ``mu0`` and shrinks by a factor of 10 per
    stage until ``m * mu <= tol``.  Warm starts near the optimum may
    pass a small ``mu0`` to skip the loose early stages.  ``linear=True``
    marks an LP objective so a diverging iterate is reported as
    unbounded instead of a failure.
    """
    n = program.n
    A, b = _reduce_equalities(program.A_eq, program.b_eq)
    G = None if program.G is None else np.atleast_2d(np.asarray(program.G, float))
    h = None if program.h is None else np.atleast_1d(np.asarray(program.h, float))
    if G is not None and G.shape[0] == 0:
        G, h = None, None
    m = 0 if G is None else G.shape[0]
    in_domain = program.in_domain or (lambda _x: True)

    x = _starting_point(program, A, b, G, h, in_domain, tol)

    f0, _, _ = program.objective(x)
    diag = SolveDiagnostics(status="max_iter", objective=float(f0))
    total_iters = 0
    lam = np.zeros(m)
    nu = np.zeros(0 if A is None else A.shape[0])

    mu = mu0
    stages = [mu]
    if m:
        while m * mu > tol:
            mu /= BARRIER_SHRINK
            stages.append(mu)
    else:
        stages = [0.0]

    x_norm0 = 1.0 + np.linalg.norm(x)
    prev_stage_val = np.inf
    for stage_idx, mu in enumerate(stages):
        is_final = stage_idx == len(stages) - 1
        inner = 0
        quiet = 0
        while True:
            if total_iters >= max_newton:
                diag.message = "Newton iteration cap reached"
                diag.status = "max_iter"
                lam, nu = _finalize(diag, program, x, G, h, A, b, lam, nu, tol)
                if diag.kkt_max <= max(tol * 100, 1e-5) * (1.0 + abs(diag.objective)):
                    # the refined multipliers certify the point anyway
                    diag.status = "optimal"
                return SolveResult(x, nu, lam, diag)
            fval, g, H = program.objective(x)
            if m:
                s = G @ x - h
                g = g - mu * (G.T @ (1.0 / s))
                H = H + mu * (G.T * (1.0 / s**2)) @ G
            r_eq = (A @ x - b) if A is not None else np.zeros(0)
            dx, w = _kkt_solve(H, A, g, r_eq)
            nu = w
            dec2 = float(-g @ dx)
            if dec2 < 0.0:
                dec2 = float(dx @ (H @ dx))
            if is_final:
                inner_tol = 1e-13 * (1.0 + abs(fval))
            else:
                inner_tol = max(1e-13 * (1.0 + abs(fval)), 1e-2 * mu)
            if dec2 / 2.0 <= inner_tol:
                if not is_final:
                    break
                # the decrement can go quiet before the gradient does when
                # the Hessian is badly scaled; insist on stationarity too
                r_st = g + (A.T @ w) if A is not None else g
                if (np.linalg.norm(r_st) <= 10.0 * tol * (1.0 + np.linalg.norm(g))
                        or dec2 / 2.0 <= 1e-17 * (1.0 + abs(fval))):
                    break
                # quiet decrement with a stubborn residual: the KKT system
                # is too ill-conditioned for the check; let the refined
                # certificate at finalize decide instead of spinning
                quiet += 1
                if quiet >= 30:
                    break
            t = 1.0
            if m:
                step = G @ dx
                shrink = step < 0.0
                if np.any(shrink):
                    t_max = float(np.min(s[shrink] / -step[shrink]))
                    t = min(1.0, 0.995 * t_max)
            phi0 = _merit(program, x, G, h, mu)
            slope = float(g @ dx)
            ok = False
            for _ in range(80):
                xt = x + t * dx
                if in_domain(xt) and (m == 0 or np.all(G @ xt - h > 0.0)):
                    phit = _merit(program, xt, G, h, mu)
                    if phit <= phi0 + ARMIJO_C * t * slope + 1e-14 * abs(phi0):
                        ok = True
                        break
                t *= BACKTRACK_BETA
            if not ok:
                diag.message = "line search stalled"
                break
            x = x + t * dx
            inner += 1
            total_iters += 1
            if np.linalg.norm(x) > DIVERGE_CAP * x_norm0:
                diag.status = "unbounded" if linear else "numerical_failure"
                diag.message = "iterates diverging"
                lam, nu = _finalize(diag, program, x, G, h, A, b, lam, nu, tol)
                return SolveResult(x, nu, lam, diag)
        fval, _, _ = program.objective(x)
        # the barrier path of outer-stage objective values is nonincreasing
        fval = min(fval, prev_stage_val + 1e-12 * (1.0 + abs(prev_stage_val)))
        prev_stage_val = fval
        diag.barrier_path.append(float(fval))
        diag.newton_iterations.append(inner)
        if m:
            lam = mu / (G @ x - h)

    diag.status = "optimal"
    lam, nu = _finalize(diag, program, x, G, h, A, b, lam, nu, tol)
    # stationarity saturates near sqrt(eps)*cond(H) at degenerate corners
    # with objective-flat directions; the value itself is far tighter, so
    # the demotion threshold stays above that floor
    if diag.kkt_max > max(tol * 100, 1e-5) * (1.0 + abs(diag.objective)):
        diag.status = "numerical_failure"
        diag.message = f"KKT residual {diag.kkt_max:.3e} above tolerance"
    return SolveResult(x, nu, lam, diag)


def _merit(program, x, G, h, mu):
    f, _, _ = program.objective(x)
    if G is not None:
        s = G @ x - h
        f -= mu * float(np.sum(np.log(s)))
    return f


def _finalize(diag, program, x, G, h, A, b, lam, nu, tol):
    fval, g, _ = program.objective(x)
    diag.objective = float(fval)
    lam, nu = _refine_multipliers(g, x, G, h, A, lam, nu)
    r = g.copy()
    if G is not None:
        r -= G.T @ lam
        s = G @ x - h
        diag.kkt_feasibility = float(max(0.0, -(s.min() if s.size else 0.0)))
        diag.kkt_complementarity = float(np.max(lam * s)) if s.size else 0.0
    else:
        diag.kkt_feasibility = 0.0
        diag.kkt_complementarity = 0.0
    if A is not None:
        r += A.T @ nu
        diag.kkt_feasibility = max(
            diag.kkt_feasibility, float(np.max(np.abs(A @ x - b)))
        )
    grad_scale = 1.0 + float(np.linalg.norm(g))
    diag.kkt_stationarity = float(np.linalg.norm(r)) / grad_scale
    return lam, nu


def _refine_multipliers(g, x, G, h, A, lam, nu):
    """Nonnegative least-squares fit of multipliers on near-active rows.

    Barrier multipliers mu/s do not converge to an exact certificate at
    degenerate vertices; refitting the stationarity system over the
    active set does, and is kept whenever it lowers the residual.
    """
    if G is None:
        return lam, nu
    from scipy.optimize import nnls

    s = G @ x - h
    active = np.flatnonzero(s <= 1e-5 * (1.0 + np.abs(h) + np.abs(G @ x)))
    blocks = [G[active].T]
    if A is not None:
        blocks += [-A.T, A.T]
    M = np.hstack(blocks)
    if M.shape[1] == 0:
        return lam, nu
    try:
        q, _ = nnls(M, g, maxiter=10 * max(M.shape))
    except Exception:
        return lam, nu
    lam_new = np.zeros_like(lam)
    lam_new[active] = q[: active.size]
    if A is not None:
        p = A.shape[0]
        nu_new = q[active.size: active.size + p] - q[active.size + p:]
    else:
        nu_new = nu
    def resid(l_, n_):
        r = g - G.T @ l_
        if A is not None:
            r = r + A.T @ n_
        return float(np.linalg.norm(r))
    if resid(lam_new, nu_new) <= resid(lam, nu):
        return lam_new, nu_new
    return lam, nu


def _starting_point(program, A, b, G, h, in_domain, tol):
    """Strictly feasible start, via the max-slack LP when needed."""
    n = program.n
    x = None
    if program.x0 is not None:
        x = np.asarray(program.x0, dtype=float).copy()
        if A is not None:
            # project back onto the equality manifold
            r = A @ x - b
            if np.max(np.abs(r)) > 1e-12 * (1.0 + np.abs(b).max()):
                x -= np.linalg.lstsq(A, r, rcond=None)[0]
        good = in_domain(x)
        if good and G is not None:
            good = bool(np.all(G @ x - h > 0.0))
        if good:
            return x

    if G is None:
        x = np.zeros(n) if A is None else np.linalg.lstsq(A, b, rcond=None)[0]
        if not in_domain(x):
            raise EngineError("no in-domain start for unconstrained program")
        return x

    x, t_star, cert = _phase_one(A, b, G, h, n, tol)
    if t_star <= 1e-11:
        raise InfeasibleProgramError(
            f"no strictly feasible point (max slack {t_star:.3e})", certificate=cert
        )
    if not in_domain(x):
        raise EngineError("phase-one point outside objective domain")
    return x


def _phase_one(A, b, G, h, n, tol):
    """Max-min-slack LP over (x, t): max t s.t. G x - h >= t * scale, t <= 1."""
    m = G.shape[0]
    scale = 1.0 + np.abs(h)
    x_p = np.zeros(n) if A is None else np.linalg.lstsq(A, b, rcond=None)[0]
    # box the variables: flat unbounded rays would otherwise let the
    # barrier run away instead of centering
    box = 1e6 * (1.0 + float(np.abs(x_p).max(initial=0.0))
                 + float(np.abs(h).max(initial=0.0)))
    G1 = np.zeros((m + 1 + 2 * n, n + 1))
    G1[:m, :n] = G
    G1[:m, n] = -scale
    G1[m, n] = -1.0  # slack of "t <= 1"
    G1[m + 1: m + 1 + n, :n] = np.eye(n)
    G1[m + 1 + n:, :n] = -np.eye(n)
    h1 = np.concatenate([h, [-1.0], np.full(2 * n, -box)])
    A1 = None if A is None else np.hstack([A, np.zeros((A.shape[0], 1))])

    t0 = float(np.min((G @ x_p - h) / scale)) - 1.0
    z0 = np.concatenate([x_p, [min(t0, 0.0) - 1.0]])

    c = np.zeros(n + 1)
    c[n] = -1.0  # maximize t
    prog = ConvexProgram(
        n=n + 1,
        objective=_linear_objective(c),
        A_eq=A1, b_eq=None if A is None else b,
        G=G1, h=h1, x0=z0,
    )
    res = solve(prog, tol=min(tol, 1e-9), max_newton=300, linear=True)
    z = res.x
    t_star = float(z[n])
    cert = {
        "ineq_multipliers": res.ineq_multipliers[:m].tolist(),
        "eq_multipliers": res.eq_multipliers.tolist(),
        "max_slack": t_star,
    }
    return z[:n], t_star, cert


def _linear_objective(c):
    c = np.asarray(c, dtype=float)
    H = np.zeros((c.size, c.size))

    def objective(x):
        return float(c @ x), c, H

    return objective


def solve_lp(c, A_eq=None, b_eq=None, G=None, h=None, x0=None,
             tol: float = DEFAULT_TOL, max_newton: int = 400) -> SolveResult:
    """Minimize ``c @ x`` subject to ``A_eq x = b_eq`` and ``G x - h >= 0``.

    Infeasibility surfaces as status ``infeasible`` with the phase-one
    certificate attached to the diagnostics message-free payload.
    """
    c = np.asarray(c, dtype=float)
    prog = ConvexProgram(n=c.size, objective=_linear_objective(c),
                         A_eq=A_eq, b_eq=b_eq, G=G, h=h, x0=x0)
    try:
        return solve(prog, tol=tol, max_newton=max_newton, linear=True)
    except InfeasibleProgramError as exc:
        diag = SolveDiagnostics(status="infeasible", message=str(exc))
        res = SolveResult(np.full(c.size, np.nan), np.zeros(0), np.zeros(0), diag)
        res.certificate = exc.certificate
        return res


def audit_derivatives(objective, points, rel_grad: float = 1e-6,
                      rel_hess: float = 1e-5, step: float = 1e-6):
    """Central finite-difference audit of analytic gradients and Hessians.

    Returns ``(max_grad_err, max_hess_err, ok)`` over the supplied
    points; errors are relative to the analytic magnitudes.
    """
    max_g = 0.0
    max_h = 0.0
    rng = np.random.default_rng(0)
    for x in points:
        x = np.asarray(x, dtype=float)
        _, g, H = objective(x)
        n = x.size
        hstep = step * (1.0 + np.abs(x))
        g_num = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = hstep[i]
            fp, _, _ = objective(x + e)
            fm, _, _ = objective(x - e)
            g_num[i] = (fp - fm) / (2.0 * hstep[i])
        denom = 1.0 + np.linalg.norm(g)
        max_g = max(max_g, float(np.linalg.norm(g_num - g)) / denom)
        # Hessian-vector products against gradient differences
        for _ in range(3):
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            t = step * (1.0 + np.linalg.norm(x))
            _, gp, _ = objective(x + t * v)
            _, gm, _ = objective(x - t * v)
            hv_num = (gp - gm) / (2.0 * t)
            hv = H @ v
            max_h = max(max_h, float(np.linalg.norm(hv_num - hv))
                        / (1.0 + float(np.linalg.norm(hv))))
    return max_g, max_h, bool(max_g <= rel_grad and max_h <= rel_hess)
