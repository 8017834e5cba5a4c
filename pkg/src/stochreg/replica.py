"""Replica-symmetric min-max solver and the MMSE / measurement-MMSE predictions.

The limiting normalized mutual information of the AR(1) stochastic
regression model is the extremal value of a low-dimensional potential

    i_RS(r1, r2) = (c/2pi) int_0^pi log(sum_i l_i delta_i(theta) r2_i / s2 + 1)
                   - (1/2) sum_i l_i r1_i r2_i
                   + sum_i l_i I(beta; sqrt(r1_i) beta + Z),

whose critical points satisfy the coupled per-atom equations

    r2_i = mmse(beta | sqrt(r1_i) beta + Z),
    r1_i = (c/pi) int_0^pi delta_i(theta) / (sum_j l_j r2_j delta_j + s2).

The solver enumerates critical points by damped alternation from a small
canonical set of initializations, selects the potential-minimizing one as
the global solution, and derives the block-MMSE and measurement-MMSE
predictions from it.  First-order phase transitions show up as two
coexisting branches whose potentials cross; the crossing is located by
bisection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .priors import GH_NODES, scalar_mmse, scalar_mutual_info
from .spectra import SpectrumSpec, _delta_table, r1_map, spectral_integral

__all__ = [
    "ReplicaProblem",
    "SolverOptions",
    "ReplicaSolution",
    "ReplicaSolveResult",
    "PredictionReport",
    "rs_potential",
    "fixed_point_solve",
    "verify_solution",
    "solve_replica",
    "solve_replica_continuous",
    "continuous_convergence_study",
    "predicted_ymmse",
    "ymmse_from_block_mmse",
    "mutual_info_limit",
    "prediction_report",
    "locate_transition",
    "find_transitions",
]


@dataclass(frozen=True)
class ReplicaProblem:
    """One asymptotic problem: spectrum, prior, sampling ratio c, noise s2."""

    spectrum: SpectrumSpec
    prior: object
    c: float
    sigma2: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("sampling ratio c must be > 0")
        if self.sigma2 <= 0:
            raise ValueError("noise variance sigma2 must be > 0")

    def discrete(self):
        if self.spectrum.kind != "discrete":
            raise ValueError("problem has a continuous spectrum; discretize first")
        return self


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5          # weight of the fresh mmse value in the r2 update
    tol: float = 1e-10            # residual tolerance on the fixed-point equations
    max_iter: int = 10_000
    quad_nodes: int = 2048        # Gauss-Legendre order for theta integrals
    channel_nodes: int = GH_NODES # Gauss-Hermite order for channel integrals
    extra_starts: int = 0         # randomized multistarts on top of the canonical two
    start_seed: int = 0
    informative_eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")


@dataclass
class ReplicaSolution:
    """A critical point of the potential plus convergence bookkeeping."""

    r1: np.ndarray
    r2: np.ndarray
    i_rs: float
    converged_from: str
    iterations: int
    residual: float
    converged: bool
    residual_history: np.ndarray = None


@dataclass
class ReplicaSolveResult:
    global_solution: ReplicaSolution
    critical_points: list
    transition_candidate: bool
    degenerate: bool
    failed_starts: list = field(default_factory=list)


@dataclass
class PredictionReport:
    mmse_per_block: np.ndarray
    mmse_total: float
    ymmse: float
    mutual_info: float


def rs_potential(r1, r2, problem, quad_nodes=None, channel_nodes=None):
    """Evaluate the replica-symmetric potential at (r1, r2)."""
    problem = problem.discrete()
    opts_q = quad_nodes or 2048
    opts_h = channel_nodes or GH_NODES
    spec = problem.spectrum
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if r1.shape != spec.lambdas.shape or r2.shape != spec.lambdas.shape:
        raise ValueError("r1/r2 dimension does not match the spectrum atom count")
    theta, w, delta = _delta_table(spec.lambdas, opts_q)
    mix = spec.weights @ (r2[:, None] * delta)
    log_term = 0.5 * problem.c * float(np.dot(w, np.log1p(mix / problem.sigma2)))
    cross = 0.5 * float(np.dot(spec.weights, r1 * r2))
    info = float(np.dot(spec.weights,
                        [scalar_mutual_info(problem.prior, x, opts_h) for x in r1]))
    return log_term - cross + info


def fixed_point_solve(problem, init_r2, opts=SolverOptions()):
    """Damped alternation on the critical-point equations from one start.

    r1 is refreshed exactly from the spectral map at every step, so the
    residual reported is the mismatch of the scalar-channel line only; on
    success both lines hold within opts.tol.  After first touching the
    tolerance the iteration keeps polishing (down to ~tol*1e-3) so that
    independent runs landing on the same branch agree to well below the
    deduplication threshold.
    """
    problem = problem.discrete()
    spec = problem.spectrum
    rho = problem.prior.rho
    r2 = np.asarray(init_r2, dtype=float).copy()
    if r2.shape != spec.lambdas.shape:
        raise ValueError("init_r2 dimension does not match the spectrum")
    r2 = np.clip(r2, 0.0, rho)
    gamma = opts.damping
    polish_target = opts.tol * 1e-3
    history = []
    hit = False
    r1 = r1_map(r2, spec, problem.c, problem.sigma2, opts.quad_nodes)
    for it in range(1, opts.max_iter + 1):
        m = np.array([scalar_mmse(problem.prior, x, opts.channel_nodes) for x in r1])
        res = float(np.max(np.abs(m - r2)))
        history.append(res)
        stalled = hit and res <= opts.tol and res >= history[-2]
        if res <= polish_target or stalled:
            if res <= polish_target:
                r2 = m
            break
        if res <= opts.tol:
            hit = True
        r2 = (1.0 - gamma) * r2 + gamma * m
        r1 = r1_map(r2, spec, problem.c, problem.sigma2, opts.quad_nodes)
    final_res = history[-1]
    converged = final_res <= opts.tol
    r1 = r1_map(r2, spec, problem.c, problem.sigma2, opts.quad_nodes)
    i_rs = rs_potential(r1, r2, problem, opts.quad_nodes, opts.channel_nodes)
    return ReplicaSolution(
        r1=r1, r2=r2, i_rs=i_rs, converged_from="", iterations=len(history),
        residual=final_res, converged=converged,
        residual_history=np.asarray(history),
    )


def verify_solution(solution, problem, tol=1e-9, opts=SolverOptions()):
    """Recompute both fixed-point residuals from scratch."""
    problem = problem.discrete()
    r1_exp = r1_map(solution.r2, problem.spectrum, problem.c, problem.sigma2,
                    opts.quad_nodes)
    m_exp = np.array([scalar_mmse(problem.prior, x, opts.channel_nodes)
                      for x in solution.r1])
    res_r1 = float(np.max(np.abs(solution.r1 - r1_exp)))
    res_r2 = float(np.max(np.abs(solution.r2 - m_exp)))
    return max(res_r1, res_r2) <= tol, res_r1, res_r2


def _dedup_key_distance(a, b):
    """L-inf distance on (r1, r2) jointly, r1 measured relative to its scale."""
    scale = max(1.0, float(np.max(np.abs(a.r1))), float(np.max(np.abs(b.r1))))
    return max(float(np.max(np.abs(a.r2 - b.r2))),
               float(np.max(np.abs(a.r1 - b.r1))) / scale)


def solve_replica(problem, opts=SolverOptions()):
    """Enumerate critical points from the canonical starts; pick the global one.

    Starts are the uninformative point r2 = rho * 1 and the informative point
    r2 = eps * 1, plus opts.extra_starts seeded uniform draws in [0, rho]^k.
    Converged points closer than 10*tol (L-inf, joint) are merged.  The
    returned global solution minimizes i_RS; when distinct branches coexist
    the result is flagged as a first-order transition candidate.
    """
    problem = problem.discrete()
    k = problem.spectrum.n_atoms
    rho = problem.prior.rho
    starts = [("uninformative", np.full(k, rho)),
              ("informative", np.full(k, opts.informative_eps))]
    if opts.extra_starts > 0:
        rng = np.random.default_rng(opts.start_seed)
        for j in range(opts.extra_starts):
            starts.append((f"random-{j}", rng.uniform(0.0, rho, size=k)))

    solutions = []
    failures = []
    for label, init in starts:
        sol = fixed_point_solve(problem, init, opts)
        sol.converged_from = label
        (solutions if sol.converged else failures).append(sol)
    if not solutions:
        detail = "; ".join(f"{s.converged_from}: residual={s.residual:.3e} "
                           f"after {s.iterations} iters" for s in failures)
        raise RuntimeError(f"no initialization converged ({detail})")

    merged = []
    for sol in solutions:
        for kept in merged:
            if _dedup_key_distance(sol, kept) < 10.0 * opts.tol:
                break
        else:
            merged.append(sol)
    merged.sort(key=lambda s: s.i_rs)
    global_sol = merged[0]

    degenerate = any(
        abs(s.i_rs - global_sol.i_rs) < 1e-9
        and float(np.max(np.abs(s.r2 - global_sol.r2))) > 10.0 * opts.tol
        for s in merged[1:]
    )
    if degenerate:
        warnings.warn("degenerate critical points: distinct r2 with equal i_RS",
                      RuntimeWarning, stacklevel=2)
    transition = any(
        float(np.max(np.abs(s.r2 - global_sol.r2))) > 10.0 * opts.tol
        for s in merged[1:]
    )
    return ReplicaSolveResult(
        global_solution=global_sol,
        critical_points=merged,
        transition_candidate=transition,
        degenerate=degenerate,
        failed_starts=failures,
    )


def solve_replica_continuous(problem, k_bins, opts=SolverOptions()):
    """Discretize a continuous spectrum to k_bins atoms, then solve.

    Returns (result, discretized_problem); the discretized per-block values
    approximate the continuous solution with O(1/k_bins) error.
    """
    if problem.spectrum.kind != "continuous":
        raise ValueError("solve_replica_continuous expects a continuous spectrum")
    if k_bins < 1:
        raise ValueError("k_bins must be >= 1")
    discrete = replace(problem, spectrum=problem.spectrum.discretize(k_bins))
    return solve_replica(discrete, opts), discrete


def continuous_convergence_study(problem, k_list, opts=SolverOptions()):
    """mmse_total of the discretized solves for each k in k_list."""
    out = []
    for k in k_list:
        result, discrete = solve_replica_continuous(problem, k, opts)
        report = prediction_report(result.global_solution, discrete)
        out.append((int(k), report.mmse_total))
    return out


def _mixture_fraction(r2_like, spectrum, sigma2, nodes):
    theta, w, delta = _delta_table(spectrum.lambdas, nodes)
    mix = spectrum.weights @ (np.asarray(r2_like, dtype=float)[:, None] * delta)
    return sigma2 * float(np.dot(w, mix / (mix + sigma2)))


def predicted_ymmse(solution, problem, quad_nodes=2048):
    """Limiting measurement MMSE at a critical point:

    (s2/pi) int_0^pi [sum l_i delta_i r2_i] / [sum l_i delta_i r2_i + s2].
    Always in [0, s2).
    """
    problem = problem.discrete()
    r2 = solution.r2 if isinstance(solution, ReplicaSolution) else solution
    return _mixture_fraction(r2, problem.spectrum, problem.sigma2, quad_nodes)


def ymmse_from_block_mmse(mmse_per_block, spectrum, sigma2, quad_nodes=2048):
    """Map per-block MMSEs (e.g. empirical, at finite p) to a measurement MMSE.

    Same integral as predicted_ymmse with the block MMSE vector in place of
    the fixed-point r2.
    """
    mmse_per_block = np.asarray(mmse_per_block, dtype=float)
    if np.any(mmse_per_block < 0):
        raise ValueError("block MMSE entries must be >= 0")
    return _mixture_fraction(mmse_per_block, spectrum, sigma2, quad_nodes)


def mutual_info_limit(problem, opts=SolverOptions()):
    """Limiting normalized mutual information: i_RS at the global solution."""
    return solve_replica(problem.discrete(), opts).global_solution.i_rs


def prediction_report(solution, problem):
    """Bundle the conjectured block MMSEs, total MMSE, YMMSE and i_RS."""
    problem = problem.discrete()
    weights = problem.spectrum.weights
    mmse_total = float(np.dot(weights, solution.r2))
    return PredictionReport(
        mmse_per_block=solution.r2.copy(),
        mmse_total=mmse_total,
        ymmse=predicted_ymmse(solution, problem),
        mutual_info=solution.i_rs,
    )


# ---------------------------------------------------------------------------
# Phase-transition location


def _branch_state(problem, opts):
    """Solve from both canonical starts; classify coexistence and ordering."""
    sub = replace(opts, extra_starts=0)
    k = problem.spectrum.n_atoms
    rho = problem.prior.rho
    up = fixed_point_solve(problem, np.full(k, rho), sub)
    lo = fixed_point_solve(problem, np.full(k, sub.informative_eps), sub)
    weights = problem.spectrum.weights
    m_up = float(np.dot(weights, up.r2))
    m_lo = float(np.dot(weights, lo.r2))
    coexist = abs(m_up - m_lo) > 100.0 * opts.tol
    return up, lo, m_up, m_lo, coexist


def locate_transition(problem_at, lo, hi, opts=SolverOptions(), xtol=1e-4):
    """Bisect the first-order transition of a one-parameter problem family.

    ``problem_at`` maps a parameter value to a ReplicaProblem.  Inside the
    coexistence region the sign of i_RS(uninformative branch) minus
    i_RS(informative branch) decides the side; where the branches have
    merged the side is classified by which bracket endpoint the merged
    MMSE resembles.  A steep but continuous MMSE decline shows no
    coexistence anywhere, in which case this raises instead of returning a
    spurious location.  Returns the crossing parameter to within xtol.
    """
    seen_coexistence = False

    def state(x):
        nonlocal seen_coexistence
        up, low, m_up, m_lo, coexist = _branch_state(problem_at(x), opts)
        seen_coexistence |= coexist
        return up, low, m_up, m_lo, coexist

    def side(st, m_ref_lo, m_ref_hi):
        up, low, m_up, m_lo, coexist = st
        if coexist:
            return -1.0 if up.i_rs < low.i_rs else 1.0
        return -1.0 if abs(m_up - m_ref_lo) < abs(m_up - m_ref_hi) else 1.0

    st_lo, st_hi = state(lo), state(hi)
    m_at_lo, m_at_hi = st_lo[2], st_hi[3]
    s_lo = side(st_lo, m_at_lo, m_at_hi)
    s_hi = side(st_hi, m_at_lo, m_at_hi)
    if s_lo == s_hi:
        raise ValueError("no branch crossing inside the bracket")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if side(state(mid), m_at_lo, m_at_hi) == s_lo:
            lo = mid
        else:
            hi = mid
    if not seen_coexistence:
        raise ValueError("MMSE drops steeply but no two branches coexist; "
                         "not a first-order transition")
    return float(0.5 * (lo + hi))


def find_transitions(problem_at, grid, opts=SolverOptions(), xtol=1e-4,
                     jump_fraction=0.1):
    """Scan a parameter grid for jumps of the global MMSE; bisect each one.

    A jump is an adjacent grid pair whose global mmse_total differs by more
    than jump_fraction * rho.  Returns the refined transition locations.
    """
    grid = np.asarray(grid, dtype=float)
    totals = []
    for x in grid:
        problem = problem_at(x)
        res = solve_replica(problem, opts)
        totals.append(float(np.dot(problem.spectrum.weights,
                                   res.global_solution.r2)))
    rho = problem_at(grid[0]).prior.rho
    out = []
    for i in range(len(grid) - 1):
        if abs(totals[i + 1] - totals[i]) > jump_fraction * rho:
            try:
                out.append(locate_transition(problem_at, grid[i], grid[i + 1],
                                             opts, xtol))
            except ValueError:
                pass  # steep but continuous; not a branch crossing
    return out, np.asarray(totals)
