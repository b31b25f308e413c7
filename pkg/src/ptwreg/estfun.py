"""Estimating functions, sensitivity/variability matrices, and the sandwich.

The regression parameters beta enter through the quasi-score
psi_beta_j = sum_i mu_i x_ij C_i^{-1} (y_i - mu_i) and the dispersion
parameters lambda = (phi, p) through the Pearson estimating function
psi_lambda_j = sum_i W_{i lambda_j} [(y_i - mu_i)^2 - C_i], where the
weights W are derivatives of -C_i^{-1}.  Together with the sensitivity S
(expected derivative) and variability V (variance, empirical for the
lambda blocks), the asymptotic covariance is the inverse Godambe
information S^{-1} V S^{-T}.

Parameter ordering everywhere: (beta_1..beta_Q, phi, p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    InvalidParameterError,
    SingularMatrixError,
    VarianceNonpositiveError,
)

LINK_LOG = "log"


@dataclass(frozen=True)
class PtwModel:
    """Count-regression data: design X (n x Q), counts y, optional offset.

    The offset is additive on the linear predictor (log) scale.  Only the
    log link is supported.
    """

    X: np.ndarray
    y: np.ndarray
    offset: np.ndarray | None = None
    link: str = LINK_LOG

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.link != LINK_LOG:
            raise InvalidParameterError(f"only the log link is supported, got {self.link!r}")
        n, q = X.shape
        if y.shape != (n,):
            raise InvalidParameterError(f"y must have length {n}, got shape {y.shape}")
        if n < q:
            raise InvalidParameterError(f"need n >= Q, got n = {n}, Q = {q}")
        if not np.all(np.isfinite(X)):
            raise InvalidParameterError("design matrix must be finite")
        if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.round(y)):
            raise InvalidParameterError("y must be finite non-negative integers")
        if self.offset is not None:
            off = np.asarray(self.offset, dtype=float)
            if off.shape != (n,) or not np.all(np.isfinite(off)):
                raise InvalidParameterError(f"offset must be a finite vector of length {n}")
            object.__setattr__(self, "offset", off)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    def linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        eta = self.X @ beta
        if self.offset is not None:
            eta = eta + self.offset
        return eta


@dataclass(frozen=True)
class Theta:
    """Full parameter vector theta = (beta, lambda = (phi, p))."""

    beta: np.ndarray
    phi: float
    p: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", beta)
        if not np.all(np.isfinite(beta)):
            raise InvalidParameterError("beta must be finite")
        if not (np.isfinite(self.phi) and np.isfinite(self.p)):
            raise InvalidParameterError("phi and p must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.beta, [self.phi, self.p]])

    @staticmethod
    def from_array(values: np.ndarray) -> "Theta":
        values = np.asarray(values, dtype=float)
        return Theta(values[:-2], float(values[-2]), float(values[-1]))


@dataclass(frozen=True)
class EstFunState:
    """Per-observation quantities shared by scores, S, and V at one theta."""

    mu: np.ndarray
    C: np.ndarray
    resid: np.ndarray
    resid2: np.ndarray
    W_phi: np.ndarray
    W_p: np.ndarray
    W_beta: np.ndarray  # n x Q


def estfun_state(model: PtwModel, theta: Theta) -> EstFunState:
    """Evaluate mu, C, residuals, and the W weights at theta.

    W_phi = C^{-2} mu^p, W_p = C^{-2} phi mu^p log mu, and
    W_beta_k = C^{-2} (1 + phi p mu^{p-1}) mu x_k — the derivatives of
    -C^{-1} with respect to phi, p, and beta_k.
    """
    # Divergent trial iterates can overflow mu**p; the resulting non-finite
    # weights propagate to a failed step or a non-converged fit, which the
    # callers handle, so the arithmetic itself should stay quiet.
    with np.errstate(over="ignore", invalid="ignore"):
        mu = np.exp(model.linear_predictor(theta.beta))
        if not np.all(np.isfinite(mu)):
            raise InvalidParameterError("linear predictor overflow: mu is not finite")
        phi, p = theta.phi, theta.p
        mu_p = mu**p
        C = mu + phi * mu_p
        if np.any(C <= 0):
            raise VarianceNonpositiveError(
                f"min(mu + phi*mu^p) = {np.min(C):.6g} <= 0 at phi = {phi}, p = {p}"
            )
        inv_c2 = C**-2.0
        resid = model.y - mu
        resid2 = resid**2
        w_phi = inv_c2 * mu_p
        w_p = inv_c2 * phi * mu_p * np.log(mu)
        w_beta = (inv_c2 * (1.0 + phi * p * mu ** (p - 1.0)) * mu)[:, None] * model.X
    return EstFunState(
        mu=mu, C=C, resid=resid, resid2=resid2, W_phi=w_phi, W_p=w_p, W_beta=w_beta
    )


def quasi_score(model: PtwModel, theta: Theta, state: EstFunState | None = None) -> np.ndarray:
    """psi_beta: component j = sum_i mu_i x_ij C_i^{-1} (y_i - mu_i)."""
    st = state or estfun_state(model, theta)
    return model.X.T @ (st.mu * st.resid / st.C)


def pearson_score(model: PtwModel, theta: Theta, state: EstFunState | None = None) -> np.ndarray:
    """psi_lambda = (phi component, p component): squared-residual bracket
    (y - mu)^2 - C contracted against the W_phi and W_p weights."""
    st = state or estfun_state(model, theta)
    with np.errstate(over="ignore", invalid="ignore"):  # see estfun_state
        bracket = st.resid2 - st.C
        return np.array([np.sum(st.W_phi * bracket), np.sum(st.W_p * bracket)])


def _lambda_weights(state: EstFunState) -> np.ndarray:
    return np.column_stack([state.W_phi, state.W_p])


def sensitivity(model: PtwModel, theta: Theta, state: EstFunState | None = None) -> np.ndarray:
    """The (Q+2) x (Q+2) sensitivity matrix E(d psi / d theta).

    Block lower-triangular by the insensitivity property:

        [[S_beta,        0   ],
         [S_lambda_beta, S_lambda]]

    with S_beta_jk = -sum_i mu_i x_ij C_i^{-1} x_ik mu_i,
    S_lambda_jk = -sum_i W_{i lambda_j} C_i^2 W_{i lambda_k}, and
    S_lambda_beta_jk = -sum_i W_{i lambda_j} C_i^2 W_{i beta_k}.
    """
    st = state or estfun_state(model, theta)
    q = model.n_coef
    wl = _lambda_weights(st)
    s = np.zeros((q + 2, q + 2))
    with np.errstate(over="ignore", invalid="ignore"):  # see estfun_state
        s[:q, :q] = -(st.mu[:, None] * model.X).T @ ((st.mu / st.C)[:, None] * model.X)
        wl_c2 = wl * st.C[:, None] ** 2
        s[q:, q:] = -wl_c2.T @ wl
        s[q:, :q] = -wl_c2.T @ st.W_beta
    return s


def variability(model: PtwModel, theta: Theta, state: EstFunState | None = None) -> np.ndarray:
    """The (Q+2) x (Q+2) variability matrix Var(psi).

    The beta block is analytic (V_beta = -S_beta); the lambda and
    cross blocks are the empirical sums of per-observation
    estimating-function products evaluated at the supplied theta, with no
    degrees-of-freedom correction.  Symmetric by construction.
    """
    st = state or estfun_state(model, theta)
    q = model.n_coef
    v = np.zeros((q + 2, q + 2))
    with np.errstate(over="ignore", invalid="ignore"):  # see estfun_state
        psi_beta_i = (st.mu * st.resid / st.C)[:, None] * model.X
        psi_lambda_i = _lambda_weights(st) * (st.resid2 - st.C)[:, None]
        v[:q, :q] = (st.mu[:, None] * model.X).T @ ((st.mu / st.C)[:, None] * model.X)
        v[q:, q:] = psi_lambda_i.T @ psi_lambda_i
        cross = psi_lambda_i.T @ psi_beta_i
        v[q:, :q] = cross
        v[:q, q:] = cross.T
    return v


def godambe_covariance(S: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Inverse Godambe information S^{-1} V S^{-T}, symmetrized.

    Raises
    ------
    SingularMatrixError
        If the sensitivity matrix is numerically singular.
    """
    S = np.asarray(S, dtype=float)
    V = np.asarray(V, dtype=float)
    scale = np.max(np.abs(S))
    if scale == 0.0:
        raise SingularMatrixError("zero sensitivity matrix")
    lu, piv = lu_factor(S, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < 1e-12 * scale:
        raise SingularMatrixError("sensitivity matrix is numerically singular")
    sinv_v = lu_solve((lu, piv), V, check_finite=False)
    cov = lu_solve((lu, piv), sinv_v.T, check_finite=False).T
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov).copy()
    tiny = np.abs(diag) <= 1e-10 * max(np.trace(cov), 1e-300)
    diag[tiny & (diag < 0)] = 0.0
    if np.any(diag < 0):
        raise SingularMatrixError("sandwich produced a negative variance")
    np.fill_diagonal(cov, diag)
    return cov
