"""Finite-size instances of the AR(1) stochastic regression model.

An instance is one realization of Y = Phi beta0 / sqrt(p) + Z where column j
of Phi is a stationary AR(1) path with coefficient lambda_j.  Columns are
laid out in contiguous blocks, one block per spectrum atom, with block sizes
round(l_i * p) (last block absorbs the rounding remainder).

Randomness is counter-based (Philox) with documented stream splitting: the
seed's stream 0 draws the signal, stream 1 the noise, and stream 2 + j the
j-th design column, so instances are reproducible bit-for-bit regardless of
generation order or parallelism.  Each column starts from its exact
stationary law, so no burn-in is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import lfilter

from .priors import PriorSpec
from .spectra import SpectrumSpec

__all__ = [
    "InstanceSpec",
    "ProblemInstance",
    "block_sizes",
    "sample_instance",
    "exact_gaussian_posterior",
    "empirical_block_mmse",
    "empirical_ymmse",
    "save_instance",
    "load_instance",
    "export_y_csv",
]

_MAGIC = b"SRINST1\n"


@dataclass(frozen=True)
class InstanceSpec:
    N: int
    p: int
    spectrum: SpectrumSpec
    prior: PriorSpec
    sigma2: float
    seed: int

    def __post_init__(self):
        if self.N < 1 or self.p < 1:
            raise ValueError("N and p must be >= 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.spectrum.kind != "discrete":
            raise ValueError("instances need a discrete spectrum; discretize first")


@dataclass
class ProblemInstance:
    """One sampled realization; arrays are frozen after construction."""

    N: int
    p: int
    sigma2: float
    seed: int
    spectrum: SpectrumSpec
    prior: PriorSpec
    column_lambdas: np.ndarray
    sizes: np.ndarray
    Phi: np.ndarray
    beta0: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    rotated: bool = False

    def __post_init__(self):
        for arr in (self.column_lambdas, self.sizes, self.Phi, self.beta0,
                    self.Z, self.Y):
            arr.flags.writeable = False

    @property
    def block_slices(self):
        edges = np.concatenate(([0], np.cumsum(self.sizes)))
        return [slice(int(edges[i]), int(edges[i + 1]))
                for i in range(len(self.sizes))]

    @property
    def c(self):
        return self.N / self.p


def block_sizes(spectrum, p):
    """round(l_i * p) per atom, last block absorbing the remainder."""
    weights = spectrum.weights
    sizes = np.round(weights[:-1] * p).astype(int)
    sizes = np.concatenate((sizes, [p - int(sizes.sum())]))
    if np.any(sizes < 1):
        raise ValueError(f"p={p} too small for the requested block weights")
    return sizes


def _ar1_column(gen, lam, n):
    """Exact stationary AR(1) path: x1 ~ N(0, 1/(1-lam^2)), then the recursion."""
    draws = gen.standard_normal(n)
    x1 = draws[0] / np.sqrt(1.0 - lam * lam)
    if n == 1:
        return np.array([x1])
    rest, _ = lfilter([1.0], [1.0, -lam], draws[1:], zi=np.array([lam * x1]))
    return np.concatenate(([x1], rest))


def sample_instance(spec):
    """Draw one ProblemInstance; deterministic given spec.seed."""
    root = np.random.SeedSequence(spec.seed)
    streams = root.spawn(2 + spec.p)
    gen_signal = np.random.Generator(np.random.Philox(streams[0]))
    gen_noise = np.random.Generator(np.random.Philox(streams[1]))

    sizes = block_sizes(spec.spectrum, spec.p)
    column_lambdas = np.repeat(spec.spectrum.lambdas, sizes)

    Phi = np.empty((spec.N, spec.p))
    for j in range(spec.p):
        gen_col = np.random.Generator(np.random.Philox(streams[2 + j]))
        Phi[:, j] = _ar1_column(gen_col, column_lambdas[j], spec.N)

    prior = spec.prior
    if prior.kind == "gaussian":
        beta0 = gen_signal.standard_normal(spec.p) * np.sqrt(prior.rho)
    else:
        idx = gen_signal.choice(len(prior.atoms), size=spec.p, p=prior.probs)
        beta0 = prior.atoms[idx]
    Z = gen_noise.standard_normal(spec.N) * np.sqrt(spec.sigma2)
    Y = Phi @ beta0 / np.sqrt(spec.p) + Z
    return ProblemInstance(
        N=spec.N, p=spec.p, sigma2=spec.sigma2, seed=spec.seed,
        spectrum=spec.spectrum, prior=prior, column_lambdas=column_lambdas,
        sizes=sizes, Phi=Phi, beta0=beta0, Z=Z, Y=Y,
    )


def exact_gaussian_posterior(instance, prior=None):
    """Exact posterior (mean, covariance) for a Gaussian prior (ridge form).

    mean = (Phi'Phi/(p s2) + I/rho)^-1 Phi'Y / (sqrt(p) s2); the covariance
    is the inverted regularized normal matrix.  This is the finite-p Bayes
    oracle for the MMSE.
    """
    prior = prior or instance.prior
    if prior.kind != "gaussian":
        raise ValueError("exact posterior is only available for the gaussian prior")
    p, s2 = instance.p, instance.sigma2
    normal = instance.Phi.T @ instance.Phi / (p * s2) + np.eye(p) / prior.rho
    factor = cho_factor(normal, lower=True)
    mean = cho_solve(factor, instance.Phi.T @ instance.Y) / (np.sqrt(p) * s2)
    cov = cho_solve(factor, np.eye(p))
    return mean, cov


def empirical_block_mmse(estimates, instance):
    """Per-block mean squared error ||beta0_block - est_block||^2 / |block|."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.shape != (instance.p,):
        raise ValueError("estimate length must equal p")
    err = instance.beta0 - estimates
    return np.array([float(np.mean(err[s] ** 2)) for s in instance.block_slices])


def empirical_ymmse(estimates, instance):
    """Measurement-side squared error ||Phi (beta0 - est)||^2 / (N p)."""
    estimates = np.asarray(estimates, dtype=float)
    resid = instance.Phi @ (instance.beta0 - estimates)
    return float(np.sum(resid**2) / (instance.N * instance.p))


# ---------------------------------------------------------------------------
# Serialization: magic + JSON header + little-endian float64 arrays.


def _header(instance):
    return {
        "N": instance.N,
        "p": instance.p,
        "sigma2": instance.sigma2,
        "seed": instance.seed,
        "spectrum": instance.spectrum.id_string(),
        "prior": instance.prior.id_string(),
        "rotated": instance.rotated,
        "arrays": ["Phi", "beta0", "Z", "Y", "column_lambdas", "sizes"],
    }


def save_instance(instance, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        head = json.dumps(_header(instance)).encode()
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        for name in ("Phi", "beta0", "Z", "Y", "column_lambdas", "sizes"):
            arr = np.ascontiguousarray(getattr(instance, name), dtype="<f8")
            fh.write(arr.tobytes())


def load_instance(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not an instance container")
        head_len = int.from_bytes(fh.read(8), "little")
        head = json.loads(fh.read(head_len).decode())
        N, p = head["N"], head["p"]
        shapes = {"Phi": (N, p), "beta0": (p,), "Z": (N,), "Y": (N,),
                  "column_lambdas": (p,), "sizes": None}
        data = {}
        for name in ("Phi", "beta0", "Z", "Y", "column_lambdas"):
            count = int(np.prod(shapes[name]))
            data[name] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(
                shapes[name]).copy()
        rest = np.frombuffer(fh.read(), dtype="<f8")
        sizes = rest.astype(int)
    spectrum = SpectrumSpec.parse(head["spectrum"])
    prior = PriorSpec.parse(head["prior"])
    return ProblemInstance(
        N=N, p=p, sigma2=head["sigma2"], seed=head["seed"],
        spectrum=spectrum, prior=prior,
        column_lambdas=data["column_lambdas"], sizes=sizes,
        Phi=data["Phi"], beta0=data["beta0"], Z=data["Z"], Y=data["Y"],
        rotated=head.get("rotated", False),
    )


def export_y_csv(instance, path):
    """Observations as a one-column CSV for external tools."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("y\n")
        for v in instance.Y:
            fh.write(f"{float(v)!r}\n")
