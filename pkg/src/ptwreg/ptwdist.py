"""The Poisson-Tweedie distribution: Y | Z ~ Poisson(Z), Z ~ Tw_p(mu, phi).

Sampling, pmf evaluation (exact where a closed form or lattice sum exists,
Gauss-Laguerre or Monte Carlo otherwise), the zero probability through the
mixing Laplace transform, the dispersion / zero-inflation / heavy-tail
indices, and the Monte Carlo log-likelihood with a delta-method standard
error.  The moment convention is E(Y) = mu, Var(Y) = C = mu + phi * mu**p;
phi may be negative at the moment level (underdispersion) but no pmf exists
there and probability operations refuse.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson as _poisson_dist

from .errors import (
    InvalidParameterError,
    NoDistributionError,
    NonpositivePmfError,
    UnreliableEstimateError,
    VarianceNonpositiveError,
)
from .numcore import RngStream, gauss_laguerre
from .tweedie import TweedieParams, sample_tweedie_mu, tweedie_density, tweedie_laplace

# With phi * mu**p at or below this, the mixing distribution is numerically
# degenerate at mu and the pmf is Poisson to more digits than MC can resolve.
_POISSON_LIMIT = 1e-6


@dataclass(frozen=True)
class PtwParams:
    """Poisson-Tweedie parameters: mean mu, dispersion phi, power p.

    Probabilistic operations (sampling, pmf, indices built on probabilities)
    require phi > 0 and p >= 1.  Moment-level quantities only require the
    variance constraint mu + phi * mu**p > 0, i.e. phi > -mu**(1-p).
    """

    mu: float
    phi: float
    p: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidParameterError(f"mu must be positive, got {self.mu}")
        if not (np.isfinite(self.phi) and np.isfinite(self.p)):
            raise InvalidParameterError("phi and p must be finite")

    def variance(self) -> float:
        """Var(Y) = mu + phi * mu**p, checked positive."""
        c = self.mu + self.phi * self.mu**self.p
        if c <= 0:
            raise VarianceNonpositiveError(
                f"mu + phi*mu^p = {c:.6g} <= 0 at (mu={self.mu}, phi={self.phi}, p={self.p})"
            )
        return c


@dataclass(frozen=True)
class PmfEstimate:
    """A pmf value with its Monte Carlo standard error (0 for exact methods)."""

    value: float
    mc_stderr: float
    method: str  # monte-carlo | gauss-laguerre | exact-sum | closed-form


@dataclass(frozen=True)
class PmfConfig:
    """Evaluation budget: MC draw count, quadrature order, truncation, stream."""

    mc_draws: int = 100_000
    quad_nodes: int = 128
    lattice_tol: float = 1e-12
    rng: RngStream = field(default=RngStream(0))


def _check_probabilistic(params: PtwParams) -> None:
    if params.phi < 0:
        raise NoDistributionError(
            f"no probability mass function exists for phi = {params.phi} < 0"
        )
    if params.p < 1:
        raise InvalidParameterError(f"pmf evaluation requires p >= 1, got {params.p}")


def ptw_sample(params: PtwParams, n: int, rng: RngStream) -> np.ndarray:
    """n Poisson-Tweedie draws via Z ~ Tw_p(mu, phi), then Y | Z ~ Poisson(Z)."""
    _check_probabilistic(params)
    if params.phi == 0:
        raise InvalidParameterError("sampling requires phi > 0 (phi = 0 is Poisson)")
    gen = rng.generator()
    return sample_ptw_mu(np.full(int(n), params.mu), params.phi, params.p, gen)


def sample_ptw_mu(mu, phi: float, p: float, gen) -> np.ndarray:
    """One count per entry of ``mu``: vectorized Poisson-Tweedie sampling core."""
    z = sample_tweedie_mu(mu, phi, p, gen)
    return gen.poisson(z)


@lru_cache(maxsize=32)
def _mixing_draws(mu: float, phi: float, p: float, m: int, rng: RngStream) -> np.ndarray:
    """Common random numbers: M mixing draws shared across every y for a
    given parameter set, so pmf curves are smooth and consecutive-probability
    ratios are valid.

    Each parameter set draws from its own substream (indexed by a hash of
    the parameters), so estimates for different parameter sets are
    independent and their MC variances add — which is exactly what the
    aggregate log-likelihood standard error assumes.
    """
    digest = hashlib.blake2s(
        struct.pack("<ddd", mu, phi, p), digest_size=8
    ).digest()
    gen = rng.substream(int.from_bytes(digest, "little")).generator()
    z = sample_tweedie_mu(np.full(m, mu), phi, p, gen)
    z.setflags(write=False)
    return z


def _poisson_logpmf(y: int, z: np.ndarray) -> np.ndarray:
    """log Poisson(y; z) over a vector of intensities, z = 0 handled exactly."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = y * np.log(z) - z - gammaln(y + 1)
    if y == 0:
        logp = np.where(z == 0, 0.0, logp)
    else:
        logp = np.where(z == 0, -np.inf, logp)
    return logp


def _pmf_closed_poisson(mu: float, y: int) -> PmfEstimate:
    logp = y * np.log(mu) - mu - gammaln(y + 1)
    return PmfEstimate(float(np.exp(logp)), 0.0, "closed-form")


def _pmf_closed_nb(params: PtwParams, y: int) -> PmfEstimate:
    # Poisson-gamma mixture: size r = 1/phi, success probability 1/(1 + phi*mu)
    r = 1.0 / params.phi
    q = params.phi * params.mu  # odds of failure
    logp = (
        gammaln(y + r)
        - gammaln(r)
        - gammaln(y + 1)
        - r * np.log1p(q)
        + y * (np.log(q) - np.log1p(q))
    )
    return PmfEstimate(float(np.exp(logp)), 0.0, "closed-form")


def _pmf_lattice_p1(params: PtwParams, y: int, tol: float) -> PmfEstimate:
    """Exact lattice sum at p = 1, where Z = phi * N with N ~ Poisson(mu/phi):
    P(Y=y) = sum_k Poisson(y; phi*k) Poisson(k; mu/phi), truncated once the
    Poisson tail mass of N beyond the last term is below ``tol``."""
    lam = params.mu / params.phi
    k_max = int(_poisson_dist.ppf(1.0 - tol, lam)) + 10
    k = np.arange(k_max + 1)
    log_prior = k * np.log(lam) - lam - gammaln(k + 1)
    z = params.phi * k
    log_lik = _poisson_logpmf(y, z)
    value = float(np.sum(np.exp(log_prior + log_lik)))
    return PmfEstimate(min(value, 1.0), 0.0, "exact-sum")


@lru_cache(maxsize=8)
def _gl_rule(n: int):
    return gauss_laguerre(n)


def _pmf_quadrature_p3(params: PtwParams, y: int, n_nodes: int) -> PmfEstimate | None:
    """Gauss-Laguerre evaluation of the p = 3 mixture integral
    f(y) = int_0^inf Poisson(y; z) IG(z; mu, 1/phi) dz.

    Returns None when the rule cannot resolve the integrand (y beyond half
    the node range, mixing density narrower than the local node spacing, or
    a non-finite / out-of-range result), signalling the Monte Carlo fallback.
    """
    rule = _gl_rule(n_nodes)
    x, w = rule.nodes, rule.weights
    if y > 0.5 * x[-1]:
        return None
    sd = np.sqrt(params.phi * params.mu**3)
    idx = int(np.searchsorted(x, params.mu))
    if idx <= 0 or idx >= len(x):
        return None
    if sd < 2.0 * (x[idx] - x[idx - 1]):
        return None
    # Gauss-Laguerre absorbs e^{-z}: integrand/e^{-z} = z^y/y! * IG(z)
    with np.errstate(divide="ignore"):
        logg = y * np.log(x) - gammaln(y + 1) + np.log(tweedie_density(params_as_tweedie(params), x))
    value = float(np.sum(w * np.exp(logg)))
    if not np.isfinite(value) or value <= 0.0 or value > 1.0 + 1e-9:
        return None
    return PmfEstimate(min(value, 1.0), 0.0, "gauss-laguerre")


def params_as_tweedie(params: PtwParams) -> TweedieParams:
    """The mixing-distribution parameters of a Poisson-Tweedie law."""
    return TweedieParams(params.mu, params.phi, params.p)


def _pmf_monte_carlo(params: PtwParams, y: int, budget: PmfConfig) -> PmfEstimate:
    z = _mixing_draws(params.mu, params.phi, params.p, budget.mc_draws, budget.rng)
    probs = np.exp(_poisson_logpmf(y, z))
    value = float(np.mean(probs))
    stderr = float(np.std(probs, ddof=1) / np.sqrt(len(probs)))
    return PmfEstimate(min(value, 1.0), stderr, "monte-carlo")


def ptw_pmf(params: PtwParams, y: int, budget: PmfConfig | None = None) -> PmfEstimate:
    """P(Y = y) with method dispatch.

    p = 2 uses the negative-binomial closed form; p = 1 the exact lattice
    sum over the scaled-Poisson mixing distribution; p = 3 Gauss-Laguerre
    quadrature with a Monte Carlo fallback; every other power averages the
    Poisson pmf over mixing draws that are shared across y (common random
    numbers), reporting the Monte Carlo standard error.  phi * mu**p below
    1e-6 short-circuits to the exact Poisson pmf.
    """
    budget = budget or PmfConfig()
    _check_probabilistic(params)
    y = _check_count(y)
    if params.phi * params.mu**params.p <= _POISSON_LIMIT:
        return _pmf_closed_poisson(params.mu, y)
    if params.p == 2.0:
        return _pmf_closed_nb(params, y)
    if params.p == 1.0:
        return _pmf_lattice_p1(params, y, budget.lattice_tol)
    if params.p == 3.0:
        est = _pmf_quadrature_p3(params, y, budget.quad_nodes)
        if est is not None:
            return est
        warnings.warn(
            f"Gauss-Laguerre rule ({budget.quad_nodes} nodes) cannot resolve "
            f"(mu={params.mu}, phi={params.phi}, y={y}); falling back to Monte Carlo",
            stacklevel=2,
        )
    return _pmf_monte_carlo(params, y, budget)


def ptw_pmf_curve(params: PtwParams, ys, budget: PmfConfig | None = None) -> list[PmfEstimate]:
    """pmf estimates over a y grid, sharing one set of mixing draws."""
    return [ptw_pmf(params, int(y), budget) for y in ys]


def _check_count(y) -> int:
    if y != int(y) or int(y) < 0:
        raise InvalidParameterError(f"y must be a non-negative integer, got {y}")
    return int(y)


def ptw_pzero(params: PtwParams) -> float:
    """P(Y = 0) = E[exp(-Z)]: the mixing Laplace transform at s = 1."""
    _check_probabilistic(params)
    if params.phi == 0 or params.phi * params.mu**params.p <= _POISSON_LIMIT:
        return float(np.exp(-params.mu))
    return float(tweedie_laplace(params_as_tweedie(params), 1.0))


def dispersion_index(params: PtwParams) -> float:
    """DI = Var(Y)/E(Y) = 1 + phi * mu**(p-1); valid for negative phi too."""
    params.variance()
    return 1.0 + params.phi * params.mu ** (params.p - 1.0)


def zero_inflation_index(params: PtwParams) -> float:
    """ZI = 1 + log P(Y=0) / mu; zero for Poisson, positive under zero-inflation."""
    return 1.0 + np.log(ptw_pzero(params)) / params.mu


def heavy_tail_index(params: PtwParams, y: int, budget: PmfConfig | None = None) -> float:
    """HT(y) = P(Y = y+1)/P(Y = y): the consecutive-probability ratio.

    The denominator estimate must exceed 10x its Monte Carlo standard error;
    otherwise the ratio is numerically meaningless and an
    UnreliableEstimateError is raised.  The index is reported at finite y
    only — no limit is extrapolated.
    """
    y = _check_count(y)
    den = ptw_pmf(params, y, budget)
    if den.value <= 10.0 * den.mc_stderr or den.value == 0.0:
        raise UnreliableEstimateError(
            f"pmf({y}) = {den.value:.3e} (MC s.e. {den.mc_stderr:.3e}) is too noisy "
            "for a consecutive-probability ratio; raise the MC budget"
        )
    num = ptw_pmf(params, y + 1, budget)
    return num.value / den.value


@dataclass(frozen=True)
class LoglikResult:
    """Log-likelihood value with aggregate Monte Carlo standard error."""

    value: float
    mc_stderr: float
    method: str


def ptw_loglik(params_per_obs, y, budget: PmfConfig | None = None) -> LoglikResult:
    """sum_i log P(Y = y_i) for per-observation parameters.

    Evaluation is cached per unique (mu, phi, p, y) combination.  For Monte
    Carlo groups the standard error accounts for the draws being shared
    across counts within a parameter set: with f_hat(y) the MC pmf and n_y
    the multiplicity, the delta method gives
    Var(sum n_y log f_hat(y)) = Var_k(g_k)/M per parameter set, where
    g_k = sum_y (n_y / f_hat(y)) P(y; Z_k).

    Raises
    ------
    NonpositivePmfError
        If any Monte Carlo pmf estimate is exactly zero (raise the budget).
    """
    budget = budget or PmfConfig()
    y = np.asarray(y)
    params_per_obs = list(params_per_obs)
    if len(params_per_obs) != len(y):
        raise InvalidParameterError("params_per_obs and y must have equal length")

    groups: dict[tuple[float, float, float], dict[int, int]] = {}
    for params, yi in zip(params_per_obs, y):
        yi = _check_count(yi)
        key = (params.mu, params.phi, params.p)
        groups.setdefault(key, {})
        groups[key][yi] = groups[key].get(yi, 0) + 1

    total = 0.0
    var_total = 0.0
    methods = set()
    for (mu, phi, p), counts in groups.items():
        params = PtwParams(mu, phi, p)
        mc_counts = {}
        for yi, n_y in counts.items():
            est = ptw_pmf(params, yi, budget)
            if est.method == "monte-carlo":
                mc_counts[yi] = n_y
                continue
            if est.value <= 0.0:
                raise NonpositivePmfError(f"pmf({yi}) = 0 at (mu={mu}, phi={phi}, p={p})")
            total += n_y * np.log(est.value)
            methods.add(est.method)
        if not mc_counts:
            continue
        # Monte Carlo counts of this parameter set share one set of mixing
        # draws, so their log-pmf errors are correlated; propagate through
        # the per-draw aggregate g_k rather than summing per-y variances.
        methods.add("monte-carlo")
        z = _mixing_draws(mu, phi, p, budget.mc_draws, budget.rng)
        m = len(z)
        g = np.zeros(m)
        for yi, n_y in mc_counts.items():
            probs = np.exp(_poisson_logpmf(yi, z))
            f_hat = float(np.mean(probs))
            if f_hat <= 0.0:
                raise NonpositivePmfError(
                    f"Monte Carlo pmf({yi}) = 0 at (mu={mu}, phi={phi}, p={p}); "
                    f"raise mc_draws above {budget.mc_draws}"
                )
            total += n_y * np.log(f_hat)
            g += (n_y / f_hat) * probs
        var_total += float(np.var(g, ddof=1) / m)

    if not methods:
        methods.add("closed-form")
    method = methods.pop() if len(methods) == 1 else "mixed"
    return LoglikResult(float(total), float(np.sqrt(var_total)), method)
