"""Kac-Murdock-Szego covariance matrices and the spectral integrals built on them.

A stationary AR(1) coordinate with coefficient ``lam`` has an N-point
covariance matrix with entries ``lam**|i-j| / (1 - lam**2)`` (a KMS matrix).
Its large-N eigenvalue distribution is the pushforward of Uniform[0, pi]
under the generating function ``delta(theta, lam)``, which is why every
asymptotic formula in this package reduces to one-dimensional integrals
over theta.  This module owns those integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import brentq
from scipy.special import roots_legendre

__all__ = [
    "SpectrumSpec",
    "generating_function",
    "kms_matrix",
    "kms_eigenvalue_cdf",
    "spectral_integral",
    "r1_map",
]

# Dense KMS matrices are for tests and finite-size studies only; asymptotic
# formulas never materialize them.
MAX_DENSE_DIM = 4096

# Atom weights below this are dropped when discretizing a continuous profile.
_WEIGHT_EPS = 1e-12


def _check_lambda(lam):
    lam = float(lam)
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"AR(1) coefficient must lie in [0, 1), got {lam}")
    return lam


def _parse_args(text, name, count):
    inner = text[len(name) + 1:-1]
    parts = [s.strip() for s in inner.split(",")]
    if len(parts) != count:
        raise ValueError(f"{name}(...) takes {count} arguments, got {len(parts)}")
    try:
        return [float(s) for s in parts]
    except ValueError as exc:
        raise ValueError(f"bad argument in {text!r}: {exc}") from None


def generating_function(theta, lam):
    """Generating function delta(theta, lam) = 1 / (1 - 2*lam*cos(theta) + lam**2).

    Parameters
    ----------
    theta : float or ndarray
        Angle(s) in [0, pi].
    lam : float
        AR(1) coefficient in [0, 1).

    Returns
    -------
    float or ndarray
        delta evaluated at theta; always within
        [1/(1+lam)**2, 1/(1-lam)**2].
    """
    lam = _check_lambda(lam)
    return 1.0 / (1.0 - 2.0 * lam * np.cos(theta) + lam * lam)


def kms_matrix(lam, n):
    """Dense KMS covariance matrix with entries lam**|i-j| / (1 - lam**2).

    Only intended for moderate dimensions (n <= 4096); the replica formulas
    work with the limiting spectral law instead.
    """
    lam = _check_lambda(lam)
    n = int(n)
    if n < 1:
        raise ValueError("matrix dimension must be >= 1")
    if n > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialize a {n}x{n} KMS matrix (max {MAX_DENSE_DIM})")
    first_row = lam ** np.arange(n) / (1.0 - lam * lam)
    return toeplitz(first_row)


def kms_eigenvalue_cdf(x, lam):
    """CDF of the limiting KMS eigenvalue law (theta-uniform pushforward of delta).

    delta(., lam) decreases from 1/(1-lam)**2 at theta=0 to 1/(1+lam)**2 at
    theta=pi, so the CDF at x is the normalized measure of {theta : delta <= x}.
    """
    lam = _check_lambda(lam)
    x = np.asarray(x, dtype=float)
    if lam == 0.0:
        return np.where(x >= 1.0, 1.0, 0.0)
    with np.errstate(divide="ignore"):
        cos_theta = (1.0 + lam * lam - 1.0 / np.maximum(x, 1e-300)) / (2.0 * lam)
    return 1.0 - np.arccos(np.clip(cos_theta, -1.0, 1.0)) / np.pi


@lru_cache(maxsize=16)
def _gauss_legendre_0_pi(nodes):
    """Nodes/weights such that sum(w * f(theta)) = (1/pi) * int_0^pi f."""
    x, w = roots_legendre(int(nodes))
    theta = 0.5 * np.pi * (x + 1.0)
    return theta, 0.5 * w


def spectral_integral(integrand, nodes=2048):
    """(1/pi) * int_0^pi integrand(theta) dtheta by fixed-order Gauss-Legendre.

    Deterministic for a fixed node count.  2048 nodes resolve the integrands
    used here (smooth, but sharply peaked near theta=0 when an atom sits
    close to 1) far beyond the tolerances of any consumer.
    """
    if nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    theta, w = _gauss_legendre_0_pi(nodes)
    return float(np.dot(w, integrand(theta)))


def _delta_table(lams, nodes):
    """delta_i(theta_q) on the quadrature grid, shape (k, nodes)."""
    theta, w = _gauss_legendre_0_pi(nodes)
    lams = np.asarray(lams, dtype=float)[:, None]
    return theta, w, 1.0 / (1.0 - 2.0 * lams * np.cos(theta)[None, :] + lams * lams)


def r1_map(r2, spectrum, c, sigma2, nodes=2048):
    """Spectral half of the fixed-point equations.

    Maps a per-atom vector of posterior variances ``r2`` to the effective
    scalar-channel SNRs

        r1_i = (c/pi) * int_0^pi delta_i(theta)
               / (sum_j l_j r2_j delta_j(theta) + sigma2) dtheta.

    Parameters
    ----------
    r2 : array_like, shape (k,)
        Nonnegative, one entry per spectrum atom.
    spectrum : SpectrumSpec
        Discrete spectrum (continuous profiles must be discretized first).
    c : float
        Sampling ratio N/p, > 0.
    sigma2 : float
        Observation noise variance, > 0.

    Returns
    -------
    ndarray, shape (k,)
        Strictly positive; bounded by c / ((1-b)**2 sigma2) where b is the
        largest atom.
    """
    if spectrum.kind != "discrete":
        raise ValueError("r1_map needs a discrete spectrum; call discretize() first")
    r2 = np.asarray(r2, dtype=float)
    lams = spectrum.lambdas
    if r2.shape != lams.shape:
        raise ValueError(f"r2 has shape {r2.shape}, expected {lams.shape}")
    if np.any(r2 < 0):
        raise ValueError("r2 entries must be nonnegative")
    theta, w, delta = _delta_table(lams, nodes)
    denom = spectrum.weights @ (r2[:, None] * delta) + sigma2
    return c * (delta / denom) @ w


@dataclass(frozen=True)
class SpectrumSpec:
    """Eigenvalue profile of the AR(1) coefficient matrix.

    Either a discrete profile (atoms ``lambdas`` with limiting proportions
    ``weights``) or a continuous profile on [a, b] represented by its
    quantile function.  Weights are normalized to sum to one at
    construction; the pre-normalization sum is kept in ``raw_weight_sum``.
    """

    kind: str
    lambdas: np.ndarray = None
    weights: np.ndarray = None
    quantile: object = None
    support: tuple = None
    label: str = ""
    raw_weight_sum: float = 1.0

    # -- constructors -------------------------------------------------

    @classmethod
    def discrete(cls, pairs, label=""):
        """Discrete spectrum from (lambda, weight) pairs; weights normalized."""
        pairs = list(pairs)
        if not pairs:
            raise ValueError("discrete spectrum needs at least one atom")
        lams = np.array([_check_lambda(l) for l, _ in pairs], dtype=float)
        wts = np.array([float(w) for _, w in pairs], dtype=float)
        if np.any(wts <= 0):
            raise ValueError("atom weights must be positive")
        total = float(wts.sum())
        wts = wts / total
        lams.flags.writeable = False
        wts.flags.writeable = False
        if not label:
            label = ",".join(f"{l:g}:{w:g}" for l, w in zip(lams, wts))
        return cls(kind="discrete", lambdas=lams, weights=wts, label=label,
                   raw_weight_sum=total)

    @classmethod
    def single_atom(cls, lam):
        return cls.discrete([(lam, 1.0)])

    @classmethod
    def from_quantile(cls, quantile, a, b, label="continuous"):
        """Continuous spectrum on [a, b] from a monotone quantile function."""
        a = _check_lambda(a)
        b = _check_lambda(b)
        if b < a:
            raise ValueError("support must satisfy a <= b")
        return cls(kind="continuous", quantile=quantile, support=(a, b), label=label)

    @classmethod
    def uniform(cls, a, b):
        a_, b_ = _check_lambda(a), _check_lambda(b)
        return cls.from_quantile(lambda u: a_ + (b_ - a_) * u, a_, b_,
                                 label=f"uniform({a_:g},{b_:g})")

    @classmethod
    def beta_density(cls, alpha, beta, a, b):
        """Beta(alpha, beta) density rescaled from [0, 1] to [a, b]."""
        from scipy.stats import beta as beta_dist

        a_, b_ = _check_lambda(a), _check_lambda(b)
        frozen = beta_dist(float(alpha), float(beta))
        return cls.from_quantile(lambda u: a_ + (b_ - a_) * frozen.ppf(u), a_, b_,
                                 label=f"beta({alpha:g},{beta:g},{a_:g},{b_:g})")

    # -- parsing (CLI text format) ------------------------------------

    @classmethod
    def parse(cls, text):
        """Parse the CLI spectrum format.

        Discrete profiles are comma-separated ``lambda:weight`` pairs, e.g.
        ``"0.9:0.5,0.1:0.5"`` (a bare ``"0.9"`` means a single atom).
        Continuous profiles are ``uniform(a,b)`` or ``beta(alpha,beta,a,b)``.
        """
        text = text.strip()
        if not text:
            raise ValueError("empty spectrum specification")
        low = text.lower()
        if low.startswith("uniform(") and low.endswith(")"):
            args = _parse_args(low, "uniform", 2)
            return cls.uniform(*args)
        if low.startswith("beta(") and low.endswith(")"):
            args = _parse_args(low, "beta", 4)
            return cls.beta_density(*args)
        pairs = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            if ":" in item:
                lam_s, w_s = item.split(":", 1)
            else:
                lam_s, w_s = item, "1"
            try:
                pairs.append((float(lam_s), float(w_s)))
            except ValueError as exc:
                raise ValueError(f"bad spectrum atom {item!r}: {exc}") from None
        return cls.discrete(pairs)

    # -- operations ----------------------------------------------------

    @property
    def n_atoms(self):
        if self.kind != "discrete":
            raise ValueError("continuous spectrum has no atoms")
        return len(self.lambdas)

    def measure_below(self, x):
        """Mass of [a, x) under a continuous profile, via quantile inversion."""
        if self.kind != "continuous":
            raise ValueError("measure_below is for continuous spectra")
        a, b = self.support
        if x <= a:
            return 0.0
        if x > b:
            return 1.0
        if self.quantile(0.0) >= x:
            return 0.0
        if self.quantile(1.0) < x:
            return 1.0
        # quantile is nondecreasing: find sup{u : quantile(u) < x}
        return brentq(lambda u: self.quantile(u) - x + 1e-300, 0.0, 1.0,
                      xtol=1e-14)

    def discretize(self, k_bins):
        """Reduce a continuous profile to k atoms.

        The support [a, b] is split into k equal cells; cell i contributes
        an atom at its left endpoint with weight equal to the cell's mass
        (rightmost cell closed at b).  The induced profile is within
        Wasserstein distance O(1/k) of the original.  Point masses located
        exactly at a cell's left endpoint are reproduced exactly.
        """
        if self.kind == "discrete":
            return self
        k_bins = int(k_bins)
        if k_bins < 1:
            raise ValueError("k_bins must be >= 1")
        a, b = self.support
        if b == a:
            return SpectrumSpec.discrete([(a, 1.0)], label=f"{self.label}|k=1")
        edges = a + (b - a) * np.arange(k_bins + 1) / k_bins
        masses = np.diff([self.measure_below(e) for e in edges])
        masses[-1] = 1.0 - sum(masses[:-1])  # close the last cell at b
        pairs = [(edges[i], m) for i, m in enumerate(masses) if m > _WEIGHT_EPS]
        return SpectrumSpec.discrete(pairs, label=f"{self.label}|k={k_bins}")

    def id_string(self):
        return self.label
