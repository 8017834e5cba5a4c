import numpy as np
import pytest

from stochreg import (PriorSpec, ReplicaProblem, SolverOptions, SpectrumSpec,
                      continuous_convergence_study, find_transitions,
                      fixed_point_solve, locate_transition, mutual_info_limit,
                      predicted_ymmse, prediction_report, rs_potential,
                      scalar_mutual_info, solve_replica,
                      solve_replica_continuous, spectral_integral,
                      verify_solution, ymmse_from_block_mmse)
from stochreg.selftest import case1_quadratic_root, closed_form_r1
from stochreg.spectra import generating_function


def problem(spectrum_text, prior, c, sigma2):
    return ReplicaProblem(SpectrumSpec.parse(spectrum_text), prior, c, sigma2)


class TestPotential:
    def test_zero_at_origin(self, rademacher):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 1.0, 0.5)
        assert rs_potential(np.zeros(2), np.zeros(2), p) == pytest.approx(0.0,
                                                                          abs=1e-14)

    def test_iid_gaussian_shape(self, gaussian):
        # single atom at 0: (c/2) log(E/s2 + 1) - E r1 / 2 + log(1 + rho r1)/2
        p = problem("0:1", gaussian, 1.7, 0.4)
        for e, r1 in ((0.2, 0.9), (1.0, 3.0)):
            want = (0.5 * 1.7 * np.log1p(e / 0.4) - 0.5 * e * r1
                    + 0.5 * np.log1p(r1))
            got = rs_potential(np.array([r1]), np.array([e]), p)
            assert got == pytest.approx(want, rel=1e-12)

    def test_assembled_from_parts(self, rademacher):
        # single atom 0.9: potential pieces recomputed independently
        p = problem("0.9:1", rademacher, 0.3, 0.1)
        r1, r2 = np.array([1.0]), np.array([0.5])
        log_part = 0.5 * 0.3 * spectral_integral(
            lambda t: np.log1p(generating_function(t, 0.9) * 0.5 / 0.1))
        want = log_part - 0.5 * 1.0 * 0.5 + scalar_mutual_info(rademacher, 1.0)
        assert rs_potential(r1, r2, p) == pytest.approx(want, rel=1e-12)

    def test_concave_in_r2_midpoint(self, rademacher):
        p = problem("0.7:0.4,0.2:0.6", rademacher, 1.1, 0.3)
        rng = np.random.default_rng(11)
        r1 = rng.uniform(0.5, 3.0, 2)
        for _ in range(8):
            a, b = rng.uniform(0.0, 1.0, (2, 2))
            mid = 0.5 * (a + b)
            assert rs_potential(r1, mid, p) >= (
                0.5 * rs_potential(r1, a, p) + 0.5 * rs_potential(r1, b, p)
                - 1e-10)

    def test_dimension_mismatch(self, rademacher):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 1.0, 0.5)
        with pytest.raises(ValueError):
            rs_potential(np.zeros(3), np.zeros(2), p)


class TestFixedPoint:
    def test_gaussian_iid_quadratic_oracle(self, gaussian, tight_opts):
        for c in (0.3, 1.0, 2.0):
            for s2 in (0.1, 1.0):
                sol = fixed_point_solve(problem("0:1", gaussian, c, s2),
                                        np.array([1.0]), tight_opts)
                assert sol.converged
                assert sol.r2[0] == pytest.approx(
                    case1_quadratic_root(1.0, c, s2), abs=1e-10)

    def test_huge_sampling_ratio_recovers(self, rademacher, tight_opts):
        sol = fixed_point_solve(problem("0:1", rademacher, 100.0, 0.1),
                                np.zeros(1), tight_opts)
        assert sol.converged
        assert sol.r2[0] < 1e-6

    def test_r1_matches_closed_form_at_fixed_point(self, rademacher, tight_opts):
        for lam in (0.0, 0.6, 0.9):
            sol = fixed_point_solve(problem(f"{lam}:1", rademacher, 0.8, 0.3),
                                    np.array([1.0]), tight_opts)
            assert sol.r1[0] == pytest.approx(
                closed_form_r1(sol.r2[0], lam, 0.8, 0.3), rel=1e-9)

    def test_nonconvergence_reports_trace(self, rademacher):
        opts = SolverOptions(max_iter=3, tol=1e-14)
        sol = fixed_point_solve(problem("0.5:1", rademacher, 1.0, 0.5),
                                np.array([1.0]), opts)
        assert not sol.converged
        assert sol.residual > 0
        assert len(sol.residual_history) == 3

    def test_verify_recomputes_residuals(self, rademacher, tight_opts):
        p = problem("0.8:0.5,0.3:0.5", rademacher, 1.3, 0.2)
        sol = fixed_point_solve(p, np.ones(2), tight_opts)
        ok, res1, res2 = verify_solution(sol, p, tol=1e-9)
        assert ok and max(res1, res2) <= 1e-9


class TestSolveReplica:
    def test_gaussian_single_critical_point(self, gaussian, tight_opts):
        res = solve_replica(problem("0:1", gaussian, 2.0, 0.1), tight_opts)
        assert len(res.critical_points) == 1
        assert not res.transition_candidate
        assert res.global_solution.r2[0] == pytest.approx(
            case1_quadratic_root(1.0, 2.0, 0.1), abs=1e-10)

    def test_no_data_limit(self, rademacher, tight_opts):
        res = solve_replica(problem("0.5:1", rademacher, 1e-7, 0.5), tight_opts)
        sol = res.global_solution
        assert sol.r2[0] == pytest.approx(1.0, abs=1e-5)
        assert sol.r1[0] < 1e-5
        assert sol.i_rs == pytest.approx(0.0, abs=1e-5)

    def test_every_solution_satisfies_equations(self, rademacher, tight_opts):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 0.62, 0.1)
        res = solve_replica(p, tight_opts)
        assert res.transition_candidate  # coexistence region
        for sol in res.critical_points:
            ok, r1_res, r2_res = verify_solution(sol, p, tol=1e-9)
            assert ok, (r1_res, r2_res)

    def test_multistart_finds_same_global(self, rademacher):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 0.62, 0.1)
        base = solve_replica(p, SolverOptions(tol=1e-12))
        multi = solve_replica(p, SolverOptions(tol=1e-12, extra_starts=8,
                                               start_seed=5))
        assert multi.global_solution.r2 == pytest.approx(
            base.global_solution.r2, abs=1e-9)

    def test_mmse_monotone_in_c_and_sigma2(self, gaussian, tight_opts):
        totals_c = []
        for c in (0.3, 0.8, 1.5, 2.5):
            res = solve_replica(problem("0.6:1", gaussian, c, 0.3), tight_opts)
            totals_c.append(res.global_solution.r2[0])
        assert all(a >= b for a, b in zip(totals_c, totals_c[1:]))
        totals_s = []
        for s2 in (0.1, 0.4, 1.0, 3.0):
            res = solve_replica(problem("0.6:1", gaussian, 1.0, s2), tight_opts)
            totals_s.append(res.global_solution.r2[0])
        assert all(a <= b for a, b in zip(totals_s, totals_s[1:]))


class TestPredictions:
    def test_ymmse_zero_when_r2_zero(self, rademacher):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 1.0, 0.5)
        assert predicted_ymmse(np.zeros(2), p) == 0.0
        assert ymmse_from_block_mmse(np.zeros(2), p.spectrum, 0.5) == 0.0

    def test_ymmse_iid_closed_form(self, gaussian):
        p = problem("0:1", gaussian, 1.0, 0.3)
        for e in (0.05, 0.4, 1.0):
            assert predicted_ymmse(np.array([e]), p) == pytest.approx(
                0.3 * e / (e + 0.3), rel=1e-12)

    def test_ymmse_below_noise_floor(self, rademacher, tight_opts):
        p = problem("0.9:0.5,0.1:0.5", rademacher, 0.5, 0.1)
        res = solve_replica(p, tight_opts)
        rep = prediction_report(res.global_solution, p)
        assert 0 <= rep.ymmse < 0.1
        assert 0 <= rep.mmse_total <= 1.0

    def test_i_mmse_consistency_finite_difference(self, rademacher, gaussian):
        # (2/c) d i_RS / d sigma^-2 == predicted_ymmse, re-solving at each
        # perturbed noise level.
        opts = SolverOptions(tol=1e-12)
        cases = [("0.9:0.5,0.1:0.5", rademacher, 1.0, 0.25),
                 ("0.6:1", gaussian, 0.7, 0.8)]
        for spectrum_text, prior, c, s2 in cases:
            base = solve_replica(problem(spectrum_text, prior, c, s2), opts)
            ym = predicted_ymmse(base.global_solution,
                                 problem(spectrum_text, prior, c, s2))
            u = 1.0 / s2
            h = 1e-4 * u
            vals = []
            for uu in (u + h, u - h):
                r = solve_replica(problem(spectrum_text, prior, c, 1.0 / uu),
                                  opts)
                vals.append(r.global_solution.i_rs)
            fd = (vals[0] - vals[1]) / (2 * h)
            assert fd == pytest.approx(0.5 * c * ym, rel=1e-4)

    def test_mutual_info_grid_search_oracle(self, gaussian):
        # iid design, gaussian prior: 1-d potential over E with r1 = c/(E+s2)
        c, s2 = 1.3, 0.4
        grid = np.arange(0.0, 1.0 + 1e-9, 1e-4)
        pots = (0.5 * c * np.log1p(grid / s2)
                - 0.5 * grid * c / (grid + s2)
                + 0.5 * np.log1p(c / (grid + s2)))
        got = mutual_info_limit(problem("0:1", gaussian, c, s2),
                                SolverOptions(tol=1e-12))
        assert got == pytest.approx(pots.min(), abs=1e-6)

    def test_mutual_info_degrades_with_noise(self, rademacher, tight_opts):
        vals = [mutual_info_limit(problem("0.5:1", rademacher, 1.0, s2),
                                  tight_opts)
                for s2 in (0.2, 1.0, 5.0, 25.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.05


class TestContinuous:
    def test_point_mass_single_bin_matches_discrete(self, rademacher, tight_opts):
        pm = SpectrumSpec.from_quantile(lambda u: 0.55, 0.55, 0.55)
        p_cont = ReplicaProblem(pm, rademacher, 0.9, 0.3)
        res_c, disc = solve_replica_continuous(p_cont, 1, tight_opts)
        res_d = solve_replica(problem("0.55:1", rademacher, 0.9, 0.3), tight_opts)
        assert res_c.global_solution.r2 == pytest.approx(
            res_d.global_solution.r2, abs=1e-11)

    def test_two_point_mass_approaches_discrete(self, gaussian, tight_opts):
        q = lambda u: 0.1 if u < 0.5 else 0.9
        cont = SpectrumSpec.from_quantile(q, 0.1, 0.9)
        exact = solve_replica(problem("0.9:0.5,0.1:0.5", gaussian, 1.0, 0.2),
                              tight_opts)
        exact_total = float(np.dot(exact.global_solution.r2, [0.5, 0.5]))
        errs = []
        for k in (16, 32):
            res, disc = solve_replica_continuous(
                ReplicaProblem(cont, gaussian, 1.0, 0.2), k, tight_opts)
            total = prediction_report(res.global_solution, disc).mmse_total
            errs.append(abs(total - exact_total))
        assert errs[1] < 0.7 * errs[0]
        assert errs[1] < 0.01

    def test_uniform_self_convergence(self, gaussian, tight_opts):
        cont = SpectrumSpec.uniform(0.1, 0.9)
        p = ReplicaProblem(cont, gaussian, 1.0, 0.1)
        study = continuous_convergence_study(p, (4, 8, 16, 32), tight_opts)
        totals = [t for _, t in study]
        diffs = np.abs(np.diff(totals))
        assert np.all(diffs[:-1] / diffs[1:] >= 1.5)

    def test_rejects_discrete_input(self, rademacher):
        with pytest.raises(ValueError):
            solve_replica_continuous(problem("0.5:1", rademacher, 1.0, 0.3), 4)


class TestTransitions:
    def test_bisection_locates_branch_crossing(self, rademacher):
        opts = SolverOptions()
        spectrum = SpectrumSpec.parse("0.9:0.5,0.1:0.5")

        def family(c):
            return ReplicaProblem(spectrum, rademacher, c, 0.1)

        c_star = locate_transition(family, 0.5, 0.7, opts)
        assert 0.55 < c_star < 0.65
        lo = solve_replica(family(c_star - 0.01), opts).global_solution
        hi = solve_replica(family(c_star + 0.01), opts).global_solution
        assert lo.r2.mean() > 10 * hi.r2.mean()

    def test_find_transitions_counts_one(self, rademacher):
        spectrum = SpectrumSpec.parse("0.9:0.5,0.1:0.5")

        def family(c):
            return ReplicaProblem(spectrum, rademacher, c, 0.1)

        found, totals = find_transitions(family, np.linspace(0.5, 1.2, 8))
        assert len(found) == 1
