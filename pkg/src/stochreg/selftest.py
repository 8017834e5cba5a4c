"""Built-in oracle suite: closed forms and identities checked at runtime.

Each check returns (name, passed, detail).  The CLI `selftest` subcommand
prints one line per check; the test suite reuses the same functions.
"""

from __future__ import annotations

import numpy as np

from .priors import PriorSpec, scalar_mmse, scalar_mutual_info
from .replica import ReplicaProblem, SolverOptions, fixed_point_solve
from .spectra import SpectrumSpec, kms_eigenvalue_cdf, kms_matrix, r1_map

__all__ = [
    "closed_form_r1",
    "case1_quadratic_root",
    "run_selftest",
]


def closed_form_r1(r2, lam, c, sigma2):
    """Single-atom spectral map in closed form:
    c / sqrt((r2 + (1-lam)^2 s2)(r2 + (1+lam)^2 s2))."""
    return c / np.sqrt((r2 + (1 - lam) ** 2 * sigma2)
                       * (r2 + (1 + lam) ** 2 * sigma2))


def case1_quadratic_root(rho, c, sigma2):
    """Gaussian-prior, iid-design fixed point: positive root of
    r2^2 + (s2 + rho c - rho) r2 - rho s2 = 0."""
    b = sigma2 + rho * c - rho
    return 0.5 * (-b + np.sqrt(b * b + 4.0 * rho * sigma2))


def _check_closed_form_map():
    worst = 0.0
    for lam in (0.0, 0.5, 0.9):
        spectrum = SpectrumSpec.single_atom(lam)
        for q in (0.0, 0.1, 1.0):
            for s2 in (0.1, 1.0):
                for c in (0.3, 2.0):
                    got = r1_map(np.array([q]), spectrum, c, s2)[0]
                    want = closed_form_r1(q, lam, c, s2)
                    worst = max(worst, abs(got - want))
    return worst <= 1e-8, f"max |quadrature - closed form| = {worst:.3e}"


def _check_case1_root():
    worst = 0.0
    opts = SolverOptions(tol=1e-12)
    for c in (0.3, 1.0, 2.0):
        for s2 in (0.1, 1.0):
            problem = ReplicaProblem(SpectrumSpec.single_atom(0.0),
                                     PriorSpec.gaussian(1.0), c, s2)
            sol = fixed_point_solve(problem, np.array([1.0]), opts)
            worst = max(worst, abs(sol.r2[0] - case1_quadratic_root(1.0, c, s2)))
    return worst <= 1e-10, f"max |fixed point - quadratic root| = {worst:.3e}"


def _check_identical_atoms():
    opts = SolverOptions(tol=1e-12)
    prior = PriorSpec.rademacher()
    single = ReplicaProblem(SpectrumSpec.single_atom(0.6), prior, 1.2, 0.3)
    multi = ReplicaProblem(
        SpectrumSpec.discrete([(0.6, 0.5), (0.6, 0.3), (0.6, 0.2)]),
        prior, 1.2, 0.3)
    s_one = fixed_point_solve(single, np.array([1.0]), opts)
    s_multi = fixed_point_solve(multi, np.ones(3), opts)
    gap = float(np.max(np.abs(s_multi.r2 - s_one.r2[0])))
    return gap <= 1e-9, f"max |k-atom r2 - single-atom r2| = {gap:.3e}"


def _check_scalar_channel():
    prior_g = PriorSpec.gaussian(1.5)
    worst_g = max(abs(scalar_mmse(prior_g, r) - 1.5 / (1 + 1.5 * r))
                  for r in (0.0, 0.7, 3.0))
    worst_g = max(worst_g,
                  max(abs(scalar_mutual_info(prior_g, r) - 0.5 * np.log1p(1.5 * r))
                      for r in (0.0, 0.7, 3.0)))
    prior_r = PriorSpec.rademacher()
    worst_d = 0.0
    for r in np.linspace(0.1, 5.0, 8):
        h = 1e-4
        fd = (scalar_mutual_info(prior_r, r + h)
              - scalar_mutual_info(prior_r, r - h)) / (2 * h)
        worst_d = max(worst_d, abs(fd - 0.5 * scalar_mmse(prior_r, r)))
    ok = worst_g <= 1e-12 and worst_d <= 1e-6
    return ok, (f"gaussian closed-form err = {worst_g:.2e}, "
                f"I-MMSE identity err = {worst_d:.2e}")


def _check_kms_law():
    worst = 0.0
    for lam in (0.3, 0.9):
        ev = np.sort(np.linalg.eigvalsh(kms_matrix(lam, 256)))
        g = kms_eigenvalue_cdf(ev, lam)
        i = np.arange(1, len(ev) + 1)
        ks = max(np.max(np.abs(i / len(ev) - g)),
                 np.max(np.abs((i - 1) / len(ev) - g)))
        worst = max(worst, ks)
    return worst <= 0.05, f"max Kolmogorov distance at N=256: {worst:.4f}"


def _check_instance_determinism():
    from .synth import InstanceSpec, sample_instance

    spec = InstanceSpec(N=16, p=8, spectrum=SpectrumSpec.parse("0.5:1"),
                        prior=PriorSpec.rademacher(), sigma2=0.1, seed=7)
    a = sample_instance(spec)
    b = sample_instance(spec)
    same = (a.Phi.tobytes() == b.Phi.tobytes()
            and a.beta0.tobytes() == b.beta0.tobytes()
            and a.Y.tobytes() == b.Y.tobytes())
    return same, "identical seed reproduces identical bytes" if same else "MISMATCH"


CHECKS = [
    ("single-atom spectral map vs closed form", _check_closed_form_map),
    ("iid gaussian fixed point vs quadratic root", _check_case1_root),
    ("identical atoms reduce to single atom", _check_identical_atoms),
    ("scalar channel closed forms and I-MMSE identity", _check_scalar_channel),
    ("KMS eigenvalue law (Kolmogorov distance)", _check_kms_law),
    ("instance generation determinism", _check_instance_determinism),
]


def run_selftest(out=print):
    """Run every oracle check; returns True when all pass."""
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok &= ok
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
