import numpy as np
import pytest

from stochreg import (SpectrumSpec, generating_function, kms_eigenvalue_cdf,
                      kms_matrix, r1_map, spectral_integral)
from stochreg.selftest import closed_form_r1


def ks_distance(eigenvalues, lam):
    ev = np.sort(eigenvalues)
    g = kms_eigenvalue_cdf(ev, lam)
    i = np.arange(1, len(ev) + 1)
    return max(np.max(np.abs(i / len(ev) - g)),
               np.max(np.abs((i - 1) / len(ev) - g)))


class TestGeneratingFunction:
    def test_lambda_zero_is_one(self):
        assert generating_function(1.3, 0.0) == pytest.approx(1.0, abs=0)

    def test_peak_at_zero(self):
        assert generating_function(0.0, 0.5) == pytest.approx(4.0, rel=1e-15)

    def test_trough_at_pi(self):
        assert generating_function(np.pi, 0.5) == pytest.approx(4.0 / 9.0, rel=1e-12)

    def test_range_bounds(self):
        theta = np.linspace(0, np.pi, 301)
        for lam in (0.2, 0.7, 0.95):
            vals = generating_function(theta, lam)
            assert np.all(vals >= 1 / (1 + lam) ** 2 - 1e-12)
            assert np.all(vals <= 1 / (1 - lam) ** 2 + 1e-12)

    def test_rejects_unit_coefficient(self):
        with pytest.raises(ValueError):
            generating_function(0.1, 1.0)


class TestKmsMatrix:
    def test_identity_at_lambda_zero(self):
        assert np.array_equal(kms_matrix(0.0, 3), np.eye(3))

    def test_two_by_two_entries(self):
        m = kms_matrix(0.5, 2)
        assert m == pytest.approx(np.array([[4 / 3, 2 / 3], [2 / 3, 4 / 3]]))

    def test_symmetric_toeplitz_constant_diagonal(self):
        m = kms_matrix(0.7, 16)
        assert np.array_equal(m, m.T)
        assert np.allclose(np.diag(m), 1 / (1 - 0.49))
        for off in range(1, 16):
            band = np.diagonal(m, off)
            assert np.all(band == band[0])

    def test_positive_definite(self):
        ev = np.linalg.eigvalsh(kms_matrix(0.9, 64))
        assert ev.min() > 0

    def test_spectral_law_at_moderate_size(self):
        # empirical eigenvalue CDF approaches the theta-uniform pushforward
        ev = np.linalg.eigvalsh(kms_matrix(0.9, 128))
        assert ks_distance(ev, 0.9) <= 0.05

    def test_eigenvalues_within_generating_function_range(self):
        for lam in (0.0, 0.3, 0.5, 0.9):
            for n in (64, 256):
                ev = np.linalg.eigvalsh(kms_matrix(lam, n))
                assert ev.min() >= 1 / (1 + lam) ** 2 - 1e-9
                assert ev.max() <= 1 / (1 - lam) ** 2 + 1e-9

    def test_spectral_cdf_converges_with_dimension(self):
        for lam in (0.3, 0.9):
            d64 = ks_distance(np.linalg.eigvalsh(kms_matrix(lam, 64)), lam)
            d256 = ks_distance(np.linalg.eigvalsh(kms_matrix(lam, 256)), lam)
            assert d256 < d64

    def test_eigenvalues_interlace_generating_function_grid(self):
        # i-th largest eigenvalue equals delta(theta_i) with theta_i inside
        # ((i-1)pi/(N+1), i pi/(N+1)); delta decreases in theta
        for lam in (0.3, 0.5, 0.9):
            for n in (64, 256):
                ev = np.sort(np.linalg.eigvalsh(kms_matrix(lam, n)))[::-1]
                i = np.arange(1, n + 1)
                hi = generating_function((i - 1) * np.pi / (n + 1), lam)
                lo = generating_function(i * np.pi / (n + 1), lam)
                assert np.all(ev <= hi + 1e-9)
                assert np.all(ev >= lo - 1e-9)

    def test_dense_dimension_cap(self):
        with pytest.raises(ValueError):
            kms_matrix(0.5, 5000)


class TestSpectralIntegral:
    def test_constant_integrand(self):
        assert spectral_integral(lambda t: np.ones_like(t)) == pytest.approx(1.0)

    def test_matches_kms_trace_limit(self):
        # (1/pi) int delta(theta, 0.5) = 1/(1 - 0.25); also the N->inf
        # normalized trace of the KMS matrix.
        val = spectral_integral(lambda t: generating_function(t, 0.5))
        assert val == pytest.approx(1 / 0.75, rel=1e-12)
        trace = np.trace(kms_matrix(0.5, 2048)) / 2048
        assert trace == pytest.approx(1 / 0.75, rel=1e-12)

    def test_node_refinement_agreement(self):
        f = lambda t: np.log1p(generating_function(t, 0.9))
        a = spectral_integral(f, nodes=2048)
        b = spectral_integral(f, nodes=8192)
        assert a == pytest.approx(b, abs=1e-10)

    def test_linearity_and_positivity(self):
        rng = np.random.default_rng(3)
        f = lambda t: np.cos(t) ** 2
        g = lambda t: np.exp(-t)
        a, b = rng.uniform(0.1, 2.0, 2)
        lhs = spectral_integral(lambda t: a * f(t) + b * g(t))
        rhs = a * spectral_integral(f) + b * spectral_integral(g)
        assert lhs == pytest.approx(rhs, rel=1e-13)
        assert spectral_integral(g) > 0


class TestR1Map:
    def test_iid_atom_reduces_to_scalar_formula(self):
        spectrum = SpectrumSpec.single_atom(0.0)
        for e in (0.0, 0.5, 1.0):
            got = r1_map(np.array([e]), spectrum, c=1.7, sigma2=0.3)[0]
            assert got == pytest.approx(1.7 / (e + 0.3), rel=1e-12)

    def test_single_atom_closed_form_grid(self):
        worst = 0.0
        for lam in (0.0, 0.5, 0.9):
            spectrum = SpectrumSpec.single_atom(lam)
            for q in (0.0, 0.1, 1.0):
                for s2 in (0.1, 1.0):
                    for c in (0.3, 2.0):
                        got = r1_map(np.array([q]), spectrum, c, s2)[0]
                        worst = max(worst, abs(got - closed_form_r1(q, lam, c, s2)))
        assert worst <= 1e-8

    def test_zero_r2_gives_analytic_integral(self):
        spectrum = SpectrumSpec.parse("0.9:0.5,0.1:0.5")
        got = r1_map(np.zeros(2), spectrum, c=1.2, sigma2=0.4)
        want = [1.2 / (0.4 * (1 - 0.81)), 1.2 / (0.4 * (1 - 0.01))]
        assert got == pytest.approx(want, rel=1e-10)

    def test_componentwise_monotone_in_r2(self):
        spectrum = SpectrumSpec.parse("0.8:0.3,0.4:0.7")
        base = r1_map(np.array([0.2, 0.2]), spectrum, 1.0, 0.5)
        for i in range(2):
            bumped = np.array([0.2, 0.2])
            bumped[i] += 0.3
            assert np.all(r1_map(bumped, spectrum, 1.0, 0.5) < base)

    def test_upper_bound(self):
        spectrum = SpectrumSpec.parse("0.9:0.5,0.1:0.5")
        got = r1_map(np.zeros(2), spectrum, c=2.0, sigma2=0.1)
        assert np.all(got > 0)
        assert np.all(got <= 2.0 / ((1 - 0.9) ** 2 * 0.1) + 1e-9)

    def test_rejects_negative_r2(self):
        with pytest.raises(ValueError):
            r1_map(np.array([-0.1]), SpectrumSpec.single_atom(0.5), 1.0, 1.0)


class TestSpectrumSpec:
    def test_weights_normalized(self):
        s = SpectrumSpec.discrete([(0.9, 2.0), (0.1, 2.0)])
        assert s.weights == pytest.approx([0.5, 0.5])
        assert s.raw_weight_sum == pytest.approx(4.0)

    def test_parse_discrete(self):
        s = SpectrumSpec.parse("0.9:0.5, 0.1:0.5")
        assert s.kind == "discrete"
        assert s.lambdas == pytest.approx([0.9, 0.1])

    def test_parse_bare_atom(self):
        s = SpectrumSpec.parse("0.7")
        assert s.n_atoms == 1
        assert s.weights[0] == 1.0

    def test_parse_uniform(self):
        s = SpectrumSpec.parse("uniform(0.1,0.9)")
        assert s.kind == "continuous"
        assert s.support == (0.1, 0.9)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            SpectrumSpec.parse("0.9:0.5,??")
        with pytest.raises(ValueError):
            SpectrumSpec.parse("1.2:1")

    def test_uniform_discretization_left_endpoints(self):
        s = SpectrumSpec.parse("uniform(0.1,0.9)").discretize(4)
        assert s.lambdas == pytest.approx([0.1, 0.3, 0.5, 0.7])
        assert s.weights == pytest.approx([0.25] * 4)

    def test_point_mass_collapses(self):
        pm = SpectrumSpec.from_quantile(lambda u: 0.55, 0.55, 0.55)
        d = pm.discretize(1)
        assert d.n_atoms == 1
        assert d.lambdas[0] == pytest.approx(0.55)

    def test_two_point_mass_bins(self):
        q = lambda u: 0.1 if u < 0.5 else 0.9
        s = SpectrumSpec.from_quantile(q, 0.1, 0.9).discretize(16)
        # only two cells carry mass: the leftmost (atom exactly 0.1) and the
        # rightmost (atom at its left edge 0.85)
        assert s.n_atoms == 2
        assert s.lambdas == pytest.approx([0.1, 0.85])
        assert s.weights == pytest.approx([0.5, 0.5])
