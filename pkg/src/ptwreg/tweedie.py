"""The Tweedie exponential-dispersion family Tw_p(mu, phi).

Exact samplers for the power values with known representations
(p = 1 scaled Poisson, 1 < p < 2 compound Poisson-gamma, p = 2 gamma,
p = 3 inverse Gaussian), the closed-form densities at p in {2, 3}, and the
Laplace transform E[exp(-sZ)] through the Tweedie cumulant function.  The
mean/variance convention is E(Z) = mu, Var(Z) = phi * mu**p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy.special import gammaln

from .errors import DomainError, InvalidParameterError, UnsupportedPowerError
from .numcore import RngStream

# Below this relative tilt s*phi*mu**(p-1), the exact cumulant difference in
# the Laplace transform cancels catastrophically in float64; a second-order
# expansion is exact to more digits than the direct formula retains.
_SMALL_TILT = 1e-8


@dataclass(frozen=True)
class TweedieParams:
    """Parameters (mu, phi, p) of the mixing distribution Z ~ Tw_p(mu, phi).

    mu and phi must be positive; p >= 1 so that Z is non-negative and the
    Poisson mixture is well defined.
    """

    mu: float
    phi: float
    p: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidParameterError(f"mu must be positive, got {self.mu}")
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise InvalidParameterError(f"phi must be positive, got {self.phi}")
        if not (np.isfinite(self.p) and self.p >= 1):
            raise InvalidParameterError(f"p must satisfy p >= 1, got {self.p}")


def _require_supported_power(p: float) -> None:
    if not (p == 1.0 or 1.0 < p <= 2.0 or p == 3.0):
        raise UnsupportedPowerError(
            f"no exact sampler for power p = {p}; supported: 1, (1, 2], 3"
        )


def sample_tweedie_mu(mu, phi: float, p: float, gen: Generator) -> np.ndarray:
    """Draw one Tw_p(mu_i, phi) variate per entry of the mean vector ``mu``.

    Internal vectorized core shared by :func:`tweedie_sample` and the
    Poisson-Tweedie samplers; ``gen`` is consumed sequentially.
    """
    mu = np.asarray(mu, dtype=float)
    _require_supported_power(p)
    if p == 1.0:
        return phi * gen.poisson(mu / phi, size=mu.shape).astype(float)
    if p == 2.0:
        return gen.gamma(1.0 / phi, phi * mu, size=mu.shape)
    if p == 3.0:
        return gen.wald(mu, 1.0 / phi, size=mu.shape)
    # 1 < p < 2: Poisson sum of gammas
    lam = mu ** (2.0 - p) / (phi * (2.0 - p))
    shape = (2.0 - p) / (p - 1.0)
    scale = phi * (p - 1.0) * mu ** (p - 1.0)
    counts = gen.poisson(lam, size=mu.shape)
    out = np.zeros(mu.shape)
    pos = counts > 0
    if np.any(pos):
        out[pos] = gen.gamma(counts[pos] * shape, np.broadcast_to(scale, mu.shape)[pos])
    return out


def tweedie_sample(params: TweedieParams, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. draws from Tw_p(mu, phi).

    Dispatch: p = 1 -> phi * Poisson(mu/phi); 1 < p < 2 -> compound
    Poisson-gamma with rate mu**(2-p)/(phi(2-p)), gamma shape (2-p)/(p-1)
    and scale phi(p-1)mu**(p-1); p = 2 -> gamma(1/phi, phi*mu);
    p = 3 -> inverse Gaussian(mu, 1/phi).

    Raises
    ------
    UnsupportedPowerError
        For powers outside {1} | (1, 2] | {3}.
    """
    if int(n) < 0:
        raise InvalidParameterError("n must be non-negative")
    gen = rng.generator()
    return sample_tweedie_mu(np.full(int(n), params.mu), params.phi, params.p, gen)


def tweedie_density(params: TweedieParams, z) -> np.ndarray | float:
    """Closed-form mixing density at p = 2 (gamma) or p = 3 (inverse Gaussian).

    ``z`` may be a scalar or array of positive reals.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise InvalidParameterError("z must be positive")
    mu, phi, p = params.mu, params.phi, params.p
    if p == 2.0:
        shape = 1.0 / phi
        scale = phi * mu
        logf = (shape - 1.0) * np.log(z) - z / scale - gammaln(shape) - shape * np.log(scale)
        out = np.exp(logf)
    elif p == 3.0:
        lam = 1.0 / phi
        logf = 0.5 * (np.log(lam) - np.log(2.0 * np.pi) - 3.0 * np.log(z)) - lam * (
            z - mu
        ) ** 2 / (2.0 * mu**2 * z)
        out = np.exp(logf)
    else:
        raise UnsupportedPowerError(
            f"closed-form density exists only for p in {{2, 3}}, got p = {p}"
        )
    return out if out.ndim else float(out)


def tweedie_laplace(params: TweedieParams, s) -> np.ndarray | float:
    """Laplace transform E[exp(-s Z)] for Z ~ Tw_p(mu, phi), s >= 0.

    Uses the cumulant function k_p: with alpha = (p-2)/(p-1) and
    psi = -mu**(1-p)/(p-1), the transform is
    exp{(k_p(psi - s*phi) - k_p(psi)) / phi} where
    k_p(t) = ((alpha-1)/alpha) * (t/(alpha-1))**alpha for p not in {1, 2};
    the p = 1 and p = 2 limits use their exponential/log forms.  Small
    tilts switch to a second-order expansion for numerical stability.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise InvalidParameterError("s must be finite and non-negative")
    mu, phi, p = params.mu, params.phi, params.p

    tilt = s * phi * mu ** (p - 1.0)
    small = tilt < _SMALL_TILT
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p == 1.0:
            log_lt = (mu / phi) * np.expm1(-s * phi)
        elif p == 2.0:
            log_lt = -np.log1p(phi * mu * s) / phi
        else:
            alpha = (p - 2.0) / (p - 1.0)
            psi = -(mu ** (1.0 - p)) / (p - 1.0)
            arg = psi - s * phi
            base = arg / (alpha - 1.0)
            if np.any((base <= 0) & ~small):
                raise DomainError(
                    f"psi - s*phi = {arg} leaves the cumulant domain for p = {p}"
                )
            kp = lambda t: ((alpha - 1.0) / alpha) * (t / (alpha - 1.0)) ** alpha
            log_lt = (kp(arg) - kp(psi)) / phi
        if np.any(small):
            series = -s * mu + 0.5 * s**2 * phi * mu**p
            log_lt = np.where(small, series, log_lt)
    out = np.exp(log_lt)
    return out if out.ndim else float(out)
