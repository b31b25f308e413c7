"""COM-Poisson and Gamma-Count generators, and the moment mapping.

Both families produce genuinely underdispersed counts and serve as data
generators for benchmarking the extended (negative-dispersion) model.  The
moment mapping translates generator parameters (lambda0, lambda1, nu) into
the implied (beta0, beta1, phi, p) by simulating means and variances over a
covariate grid and fitting the two nonlinear moment models
E(Y) = exp(beta0 + beta1 x1) and Var(Y) = E(Y) + phi E(Y)**p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import InvalidParameterError, NonConvergenceError
from .numcore import RngStream, rng_substream, solve_linear

_SERIES_TOL = 1e-12
_CDF_TAIL = 1e-12


@dataclass(frozen=True)
class ComPoissonParams:
    """COM-Poisson CP(lambda, nu): pmf proportional to lambda**y / (y!)**nu."""

    lam: float
    nu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise InvalidParameterError(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True)
class GammaCountParams:
    """Gamma-Count GC(lambda, nu): counts of gamma(nu, nu*lambda) arrivals."""

    lam: float
    nu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise InvalidParameterError(f"nu must be positive, got {self.nu}")


def _compoisson_log_weights(lam: np.ndarray, nu: float) -> np.ndarray:
    """Unnormalized log pmf table, rows y = 0..Y*, one column per lambda.

    Y* is grown until the next term is below 1e-12 of every column's
    partial sum (checked past the mode, where terms are decreasing).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    log_lam = np.log(lam)
    mode = np.max(lam) ** (1.0 / nu)
    y_max = int(mode + 30.0 * np.sqrt(mode / nu + 1.0) + 50.0)
    while True:
        y = np.arange(y_max + 1)
        logw = y[:, None] * log_lam[None, :] - nu * gammaln(y + 1)[:, None]
        top = np.max(logw, axis=0)
        total = top + np.log(np.sum(np.exp(logw - top), axis=0))
        if np.all(logw[-1] < total + np.log(_SERIES_TOL)):
            return logw - total
        y_max *= 2


def compoisson_pmf(params: ComPoissonParams, y) -> np.ndarray | float:
    """Exact pmf, normalized by the truncated series."""
    logw = _compoisson_log_weights(np.array([params.lam]), params.nu)[:, 0]
    y = np.asarray(y)
    out = np.where(y <= len(logw) - 1, np.exp(logw[np.minimum(y, len(logw) - 1)]), 0.0)
    return out if out.ndim else float(out)


def _invert_cdf(cdf: np.ndarray, inv: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup: cdf is (Y*+1) x n_unique, inv maps draws to columns."""
    counts = np.sum(cdf[:, inv] < u[None, :], axis=0)
    return np.minimum(counts, cdf.shape[0] - 1)


def compoisson_sample_lam(lam, nu: float, gen) -> np.ndarray:
    """One CP(lam_i, nu) draw per entry of ``lam`` by CDF inversion."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    uniq, inv = np.unique(lam, return_inverse=True)
    logw = _compoisson_log_weights(uniq, nu)
    cdf = np.cumsum(np.exp(logw), axis=0)
    return _invert_cdf(cdf, inv, gen.random(lam.shape[0]))


def compoisson_sample(params: ComPoissonParams, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. COM-Poisson counts."""
    gen = rng.generator()
    return compoisson_sample_lam(np.full(int(n), params.lam), params.nu, gen)


def gammacount_pmf(params: GammaCountParams, y) -> np.ndarray | float:
    """P(Y = y) = G(y nu, nu lambda) - G((y+1) nu, nu lambda), with the
    regularized lower incomplete gamma G and the G(0, .) = 1 convention."""
    y = np.asarray(y, dtype=float)
    t = params.nu * params.lam
    out = gammainc(np.maximum(y * params.nu, 0.0), t) - gammainc((y + 1) * params.nu, t)
    # gammainc(0, t) = 1 covers y = 0 automatically
    return out if out.ndim else float(out)


def gammacount_sample_lam(lam, nu: float, gen) -> np.ndarray:
    """One GC(lam_i, nu) draw per entry of ``lam`` by CDF inversion.

    The CDF telescopes: P(Y <= y) = 1 - G((y+1) nu, nu lambda).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    uniq, inv = np.unique(lam, return_inverse=True)
    t = nu * uniq
    y_max = int(np.max(uniq) + 30.0 * np.sqrt(np.max(uniq) / nu + 1.0) + 30.0)
    while np.any(gammainc((y_max + 1) * nu, t) >= _CDF_TAIL):
        y_max *= 2
    y = np.arange(y_max + 1)
    cdf = 1.0 - gammainc((y[:, None] + 1) * nu, t[None, :])
    return _invert_cdf(cdf, inv, gen.random(lam.shape[0]))


def gammacount_sample(params: GammaCountParams, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. Gamma-Count counts."""
    gen = rng.generator()
    return gammacount_sample_lam(np.full(int(n), params.lam), params.nu, gen)


@dataclass(frozen=True)
class MomentMapDesign:
    """Simulation design for the mapping: covariate grid and replicate count."""

    grid_length: int = 1000
    replicates: int = 1000

    def __post_init__(self):
        if self.grid_length < 3 or self.replicates < 2:
            raise InvalidParameterError("need grid_length >= 3 and replicates >= 2")


@dataclass(frozen=True)
class MomentMap:
    """Implied moment parameters of a generator, with NLS fit diagnostics."""

    beta0: float
    beta1: float
    phi: float
    p: float
    mean_resid_norm: float
    var_resid_norm: float


def _gauss_newton(model_fn, jac_fn, target, x0, max_iter=100, tol=1e-10):
    """Minimize ||target - model(x)||^2 by Gauss-Newton with step halving."""
    x = np.asarray(x0, dtype=float)
    resid = target - model_fn(x)
    sse = float(resid @ resid)
    for _ in range(max_iter):
        jac = jac_fn(x)
        delta = solve_linear(jac.T @ jac, jac.T @ resid)
        step = 1.0
        for _ in range(31):
            x_new = x + step * delta
            resid_new = target - model_fn(x_new)
            sse_new = float(resid_new @ resid_new)
            if np.isfinite(sse_new) and sse_new <= sse:
                break
            step /= 2.0
        else:
            raise NonConvergenceError("Gauss-Newton step halving failed")
        moved = float(np.max(np.abs(x_new - x)))
        x, resid, sse = x_new, resid_new, sse_new
        if moved < tol * max(1.0, float(np.max(np.abs(x)))):
            return x, float(np.sqrt(sse))
    raise NonConvergenceError(f"Gauss-Newton did not converge in {max_iter} iterations")


_FAMILIES = {
    "com-poisson": compoisson_sample_lam,
    "gamma-count": gammacount_sample_lam,
}


def moment_map(
    family: str,
    lambda0: float,
    lambda1: float,
    nu: float,
    design: MomentMapDesign | None = None,
    rng: RngStream | None = None,
) -> MomentMap:
    """Map generator parameters to the implied (beta0, beta1, phi, p).

    Simulates ``design.replicates`` counts at each point of an equally
    spaced x1 grid on [-1, 1] with lambda_i = exp(lambda0 + lambda1 x1),
    records the empirical mean and variance per point, and fits
    E(Y) = exp(beta0 + beta1 x1) followed by Var(Y) - E(Y) = phi E(Y)**p
    on the fitted means, both by Gauss-Newton least squares.
    """
    if family not in _FAMILIES:
        raise InvalidParameterError(
            f"family must be one of {sorted(_FAMILIES)}, got {family!r}"
        )
    design = design or MomentMapDesign()
    rng = rng or RngStream(0)
    sampler = _FAMILIES[family]

    x1 = np.linspace(-1.0, 1.0, design.grid_length)
    lam = np.exp(lambda0 + lambda1 * x1)
    means = np.empty(design.grid_length)
    variances = np.empty(design.grid_length)
    for i in range(design.grid_length):
        gen = rng_substream(rng, i).generator()
        draws = sampler(np.full(design.replicates, lam[i]), nu, gen)
        means[i] = np.mean(draws)
        variances[i] = np.var(draws, ddof=1)

    design_mat = np.column_stack([np.ones_like(x1), x1])

    def mean_model(b):
        return np.exp(design_mat @ b)

    def mean_jac(b):
        return mean_model(b)[:, None] * design_mat

    b0 = np.linalg.lstsq(design_mat, np.log(np.maximum(means, 1e-12)), rcond=None)[0]
    beta, mean_resid = _gauss_newton(mean_model, mean_jac, means, b0)

    fitted = mean_model(beta)
    log_fitted = np.log(fitted)
    excess = variances - fitted

    def var_model(x):
        phi, p = x
        return phi * fitted**p

    def var_jac(x):
        phi, p = x
        m_p = fitted**p
        return np.column_stack([m_p, phi * m_p * log_fitted])

    (phi, p), var_resid = _gauss_newton(var_model, var_jac, excess, np.array([-0.5, 1.1]))

    return MomentMap(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        phi=float(phi),
        p=float(p),
        mean_resid_norm=mean_resid,
        var_resid_norm=var_resid,
    )
