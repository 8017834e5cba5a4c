"""Vector approximate message passing for the linear model Y = A beta + noise.

Two-stage iteration: a separable posterior-mean denoiser of the signal prior
and an LMMSE stage solved in the SVD basis of A = Phi/sqrt(p), exchanging
extrinsic (Onsager-corrected) messages.  The estimator is exact-posterior
optimal for right-rotationally invariant designs; for the block-structured
AR(1) designs it carries no guarantee, which is precisely what the
simulation harness probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .priors import posterior_mean_denoiser
from .synth import ProblemInstance, empirical_block_mmse

__all__ = [
    "VampConfig",
    "VampTrace",
    "design_svd",
    "vamp_run",
    "rotate_gaussian_instance",
    "stability_report",
    "StabilityReport",
]


@dataclass(frozen=True)
class VampConfig:
    max_iter: int = 200
    damping: float = 0.85         # weight of the fresh message
    min_precision: float = 1e-8   # clamp for extrinsic precisions
    stop_tol: float = 1e-8        # relative change of the estimate
    init_precision: float = 1e-6  # uninformative starting precision
    informative_start: bool = False
    informative_noise: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if min(self.max_iter, self.min_precision, self.stop_tol,
               self.init_precision) <= 0:
            raise ValueError("VampConfig fields must be positive")


@dataclass
class VampTrace:
    mse: np.ndarray               # per-iteration MSE of the denoised estimate
    block_mse: np.ndarray         # (iters, k)
    denoiser_var: np.ndarray      # mean posterior variance, denoiser stage
    lmmse_var: np.ndarray         # mean posterior variance, LMMSE stage
    gamma1: np.ndarray
    gamma2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    clamped: np.ndarray           # cumulative precision-clamp count per iteration
    estimate: np.ndarray
    termination: str

    @property
    def iterations(self):
        return len(self.mse)

    @property
    def final_mse(self):
        return float(self.mse[-1])

    def csv_rows(self):
        """Rows for the trace CSV schema {iter, mse, mse_block_i..., gamma1,
        gamma2, eta1, eta2, clamped}."""
        k = self.block_mse.shape[1]
        header = (["iter", "mse"] + [f"mse_block_{i+1}" for i in range(k)]
                  + ["gamma1", "gamma2", "eta1", "eta2", "clamped"])
        rows = []
        for t in range(self.iterations):
            rows.append([t + 1, self.mse[t], *self.block_mse[t],
                         self.gamma1[t], self.gamma2[t], self.eta1[t],
                         self.eta2[t], int(self.clamped[t])])
        return header, rows


def design_svd(instance):
    """Economy SVD of Phi/sqrt(p), computed once per instance and reused."""
    return np.linalg.svd(instance.Phi / np.sqrt(instance.p), full_matrices=False)


def vamp_run(instance, prior, config=VampConfig(), svd=None):
    """Run VAMP on one instance; deterministic given inputs and config.

    The denoiser stage treats its message r1 as beta + noise of precision
    gamma1 and applies the scalar posterior mean; the LMMSE stage solves the
    Gaussian-likelihood ridge system diagonally in the singular basis.
    Extrinsic precisions are clamped at config.min_precision (events are
    counted in the trace).  Stops when the denoised estimate moves less than
    config.stop_tol in relative L2 or after max_iter sweeps.
    """
    if svd is None:
        svd = design_svd(instance)
    U, s, Vt = svd
    p = instance.p
    gamw = 1.0 / instance.sigma2
    uty = U.T @ instance.Y
    n_modes = len(s)

    if config.informative_start:
        rng = np.random.default_rng(config.seed)
        r1 = instance.beta0 + config.informative_noise * rng.standard_normal(p)
        gamma1 = 1.0 / config.informative_noise**2
    else:
        r1 = np.zeros(p)
        gamma1 = config.init_precision

    rec = {name: [] for name in ("mse", "block", "dvar", "lvar",
                                 "g1", "g2", "e1", "e2", "cl")}
    xhat_prev = None
    estimate = None
    termination = "max_iter"
    clamped = 0
    for _ in range(config.max_iter):
        # Denoising stage: channel r1 = beta + N(0, 1/gamma1).
        sq = np.sqrt(gamma1)
        xhat1, var1 = posterior_mean_denoiser(prior, sq * r1, gamma1)
        vbar1 = float(np.mean(var1))
        alpha1 = np.clip(gamma1 * vbar1, 1e-12, 1.0 - 1e-12)
        eta1 = gamma1 / alpha1
        gamma2 = eta1 - gamma1
        if gamma2 < config.min_precision:
            gamma2 = config.min_precision
            clamped += 1
        r2 = (eta1 * xhat1 - gamma1 * r1) / gamma2

        # LMMSE stage in the singular basis; null-space modes pass through.
        d = gamw * s**2 + gamma2
        w = Vt @ r2
        xhat2 = r2 + Vt.T @ ((gamw * s * uty + gamma2 * w) / d - w)
        alpha2 = float((np.sum(gamma2 / d) + (p - n_modes)) / p)
        alpha2 = np.clip(alpha2, 1e-12, 1.0 - 1e-12)
        eta2 = gamma2 / alpha2
        gamma1_new = eta2 - gamma2
        if gamma1_new < config.min_precision:
            gamma1_new = config.min_precision
            clamped += 1
        r1_new = (eta2 * xhat2 - gamma2 * r2) / gamma1_new

        gamma1 = config.damping * gamma1_new + (1 - config.damping) * gamma1
        r1 = config.damping * r1_new + (1 - config.damping) * r1

        rec["mse"].append(float(np.mean((xhat1 - instance.beta0) ** 2)))
        rec["block"].append(empirical_block_mmse(xhat1, instance))
        rec["dvar"].append(vbar1)
        rec["lvar"].append(alpha2 / gamma2)
        rec["g1"].append(gamma1)
        rec["g2"].append(gamma2)
        rec["e1"].append(eta1)
        rec["e2"].append(eta2)
        rec["cl"].append(clamped)

        estimate = xhat1
        if xhat_prev is not None:
            denom = max(float(np.linalg.norm(xhat_prev)), 1e-300)
            if float(np.linalg.norm(xhat1 - xhat_prev)) / denom < config.stop_tol:
                termination = "converged"
                break
        xhat_prev = xhat1

    return VampTrace(
        mse=np.asarray(rec["mse"]),
        block_mse=np.asarray(rec["block"]),
        denoiser_var=np.asarray(rec["dvar"]),
        lmmse_var=np.asarray(rec["lvar"]),
        gamma1=np.asarray(rec["g1"]),
        gamma2=np.asarray(rec["g2"]),
        eta1=np.asarray(rec["e1"]),
        eta2=np.asarray(rec["e2"]),
        clamped=np.asarray(rec["cl"]),
        estimate=estimate,
        termination=termination,
    )


def rotate_gaussian_instance(instance, seed=0, rotation=None):
    """Right-rotate the design by a Haar orthogonal matrix (Gaussian prior only).

    Phi -> Phi Q and beta0 -> Q' beta0 leave Y and Z untouched and the model
    identity intact, while Q' beta0 keeps the Gaussian prior law.  The
    rotated design is right-rotationally invariant, which makes VAMP's
    state-evolution guarantee applicable.  Pass an explicit ``rotation``
    (e.g. the identity) to bypass the Haar draw.
    """
    if instance.prior.kind != "gaussian":
        raise ValueError("the rotation trick requires a gaussian prior")
    p = instance.p
    if rotation is None:
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((p, p)))
        rotation = q * np.sign(np.diag(r))
    else:
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (p, p):
            raise ValueError("rotation must be p x p")
    return ProblemInstance(
        N=instance.N, p=instance.p, sigma2=instance.sigma2, seed=instance.seed,
        spectrum=instance.spectrum, prior=instance.prior,
        column_lambdas=instance.column_lambdas.copy(), sizes=instance.sizes.copy(),
        Phi=instance.Phi @ rotation, beta0=rotation.T @ instance.beta0,
        Z=instance.Z.copy(), Y=instance.Y.copy(), rotated=True,
    )


@dataclass
class StabilityReport:
    n_runs: int
    mse_mean: float
    mse_min: float
    mse_max: float
    mse_std: float
    frac_within_10pct: float
    oscillating: list
    oscillation_fraction: float


def _oscillates(trace, window=20):
    """MSE non-monotone over the trailing window."""
    tail = trace.mse[-window:]
    if len(tail) < 3:
        return False
    diffs = np.diff(tail)
    return bool(np.any(diffs > 0) and np.any(diffs < 0))


def stability_report(traces, prediction):
    """Spread and oscillation summary of repeated runs against a prediction."""
    if len(traces) < 2:
        raise ValueError("stability report needs at least 2 traces")
    finals = np.array([t.final_mse for t in traces])
    target = prediction.mmse_total
    within = (np.abs(finals - target) <= 0.1 * target) if target > 0 else (finals <= 1e-12)
    osc = [_oscillates(t) for t in traces]
    return StabilityReport(
        n_runs=len(traces),
        mse_mean=float(finals.mean()),
        mse_min=float(finals.min()),
        mse_max=float(finals.max()),
        mse_std=float(finals.std(ddof=1)),
        frac_within_10pct=float(np.mean(within)),
        oscillating=osc,
        oscillation_fraction=float(np.mean(osc)),
    )
