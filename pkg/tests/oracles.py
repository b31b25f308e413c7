"""Independent reference implementations used as test oracles.

Nothing in here may import from ptwreg's estimation code paths — the point
is to have a second, separately written route to the same numbers.  Only
numpy/scipy primitives are used.
"""

import numpy as np
from scipy.special import gammaln
from scipy.stats import nbinom, poisson


def irls_poisson(X, y, offset=None, tol=1e-12, max_iter=100):
    """Poisson log-link GLM by textbook iteratively reweighted least squares.

    Returns (beta, cov) with cov the inverse Fisher information
    (X' diag(mu) X)^{-1}.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = X.shape
    if offset is None:
        offset = np.zeros(n)
    # start from the constant-rate model
    beta = np.zeros(q)
    beta[0] = np.log(max(y.mean(), 1e-8))
    for _ in range(max_iter):
        eta = X @ beta + offset
        mu = np.exp(eta)
        z = eta - offset + (y - mu) / mu  # working response
        WX = X * mu[:, None]
        beta_new = np.linalg.solve(X.T @ WX, WX.T @ z)
        if np.max(np.abs(beta_new - beta)) < tol:
            beta = beta_new
            break
        beta = beta_new
    mu = np.exp(X @ beta + offset)
    cov = np.linalg.inv(X.T @ (X * mu[:, None]))
    return beta, cov


def poisson_loglik(X, y, beta, offset=None):
    eta = np.asarray(X, float) @ beta
    if offset is not None:
        eta = eta + offset
    mu = np.exp(eta)
    return float(np.sum(y * np.log(mu) - mu - gammaln(np.asarray(y) + 1.0)))


def nb_pmf(mu, phi, y):
    """Negative binomial pmf in the (mu, phi) moment parametrization
    Var = mu + phi*mu^2, via scipy's (r, prob) form."""
    r = 1.0 / phi
    prob = r / (r + mu)
    return nbinom.pmf(y, r, prob)


def neyman_pmf(mu, phi, y, tol=1e-14):
    """p = 1 mixture pmf: Z = phi*N with N ~ Poisson(mu/phi), so
    P(Y=y) = sum_n Poisson(y; phi*n) * Poisson(n; mu/phi).  Straight
    summation until the Poisson weight tail is negligible."""
    rate = mu / phi
    n_hi = int(rate + 12 * np.sqrt(rate) + 30)
    n = np.arange(n_hi + 1)
    weights = poisson.pmf(n, rate)
    assert weights[-1] < tol, "mixing support truncated too early"
    z = phi * n
    terms = np.where(
        z > 0,
        np.exp(y * np.log(np.where(z > 0, z, 1.0)) - z - gammaln(y + 1.0)),
        1.0 if y == 0 else 0.0,
    )
    return float(np.sum(weights * terms))


def cpg_pmf(mu, phi, p, y, n_terms=400):
    """Exact Poisson-Tweedie pmf for 1 < p < 2 by the compound-Poisson-gamma
    series: conditioning on the number of gamma summands N ~ Poisson(lam),
    Y | N=n is negative binomial with shape n*a, so

        P(Y=y) = sum_{n>=1} e^{-lam} lam^n/n! * Gamma(y+na)/(Gamma(na) y!)
                 * s^y / (1+s)^{y+na}                      (+ e^{-lam} at y=0)

    with lam = mu^(2-p)/(phi(2-p)), a = (2-p)/(p-1), s = phi(p-1)mu^(p-1).
    """
    lam = mu ** (2.0 - p) / (phi * (2.0 - p))
    a = (2.0 - p) / (p - 1.0)
    s = phi * (p - 1.0) * mu ** (p - 1.0)
    n = np.arange(1, n_terms)
    log_terms = (
        -lam
        + n * np.log(lam)
        - gammaln(n + 1.0)
        + gammaln(y + n * a)
        - gammaln(n * a)
        - gammaln(y + 1.0)
        + y * np.log(s)
        - (y + n * a) * np.log1p(s)
    )
    total = float(np.exp(log_terms).sum())
    if y == 0:
        total += float(np.exp(-lam))
    return total


def cpg_loglik(mu_vec, phi, p, y_vec):
    """Exact log-likelihood companion to cpg_pmf (per-observation means)."""
    return float(
        sum(np.log(cpg_pmf(m, phi, p, int(yy))) for m, yy in zip(mu_vec, y_vec))
    )
