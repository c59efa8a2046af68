"""Replicated-day Gaussian log-likelihood and its gradient.

With ``N`` i.i.d. day-vectors ``y_i`` of length ``MT`` sharing the covariance
``Kt = K + sigma2 I``::

    l = -(N M T / 2) log(2 pi) - (N / 2) log|Kt| - 1/2 sum_i y_i' Kt^{-1} y_i

Two evaluation routes are provided and must agree:

``dense``
    one Cholesky factorization of the ``MT x MT`` matrix (with the jitter
    policy of :func:`windgp.kernels.cholesky_jitter`).
``kron``
    ``Kt = eta * K_S (x) K_T + sigma2 I`` diagonalises in the Kronecker
    product of the factor eigenbases, costing ``O(M^3 + T^3)`` instead of
    ``O(M^3 T^3)``. Warping acts inside each factor, so this holds for every
    model in the family.

Gradients are taken in unconstrained coordinates (see :mod:`windgp.params`).
The ``hybrid`` mode uses the exact identity::

    dl/du_j = 1/2 sum_i a_i' dKt_j a_i - (N / 2) tr(Kt^{-1} dKt_j),   a_i = Kt^{-1} y_i

with ``dKt_j`` a central finite difference of the covariance matrix itself.
``full_fd`` differences ``l`` directly and serves as a cross-check.
"""

import logging
import math

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefinite
from .kernels import JITTER_MAX, JITTER_START, build_covariance, cholesky_jitter, spatial_factor, temporal_factor
from .params import ModelConfig, ParameterVector, from_unconstrained

log = logging.getLogger(__name__)

FD_STEP = 1e-5
LOG_2PI = math.log(2.0 * math.pi)


def _training_arrays(panel):
    """``(grid, Y)`` from an ErrorPanel or an explicit ``(grid, Y)`` pair; ``Y`` is ``[N, M, T]``."""
    if isinstance(panel, tuple):
        grid, Y = panel
        return grid, np.asarray(Y, dtype=float)
    return panel.inputs, panel.training_days()


# ---------------------------------------------------------------------------
# dense route
# ---------------------------------------------------------------------------


def _dense_factor(theta: ParameterVector, grid):
    K = build_covariance(grid, theta.spec)
    K[np.diag_indices_from(K)] += theta.sigma2
    L, jitter = cholesky_jitter(K, "K + sigma2 I")
    return K, L, jitter


def loglik_dense(theta: ParameterVector, grid, Y) -> float:
    theta.validate()
    N, M, T = Y.shape
    _, L, _ = _dense_factor(theta, grid)
    B = Y.reshape(N, M * T).T
    Z = sla.solve_triangular(L, B, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * N * M * T * LOG_2PI - 0.5 * N * logdet - 0.5 * np.sum(Z * Z))


# ---------------------------------------------------------------------------
# Kronecker route
# ---------------------------------------------------------------------------


class KronState:
    """Eigen-decomposed covariance and rotated data for one parameter value."""

    def __init__(self, eta, ks, kt, sigma2, Y):
        self.eta = eta
        self.sigma2 = sigma2
        self.lam_s, self.u_s = np.linalg.eigh(ks)
        self.lam_t, self.u_t = np.linalg.eigh(kt)
        d = eta * np.outer(self.lam_s, self.lam_t) + sigma2
        jitter = 0.0
        while d.min() <= 0.0:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1.0 + 1e-9):
                raise NotPositiveDefinite("K + sigma2 I has non-positive eigenvalues")
            log.warning("non-positive eigenvalue in K + sigma2 I; adding jitter %.0e", jitter)
            d = eta * np.outer(self.lam_s, self.lam_t) + sigma2 + jitter
        self.jitter = jitter
        self.d = d
        self.y_hat = self.u_s.T @ Y @ self.u_t
        self.alpha_hat = self.y_hat / d
        N, M, T = Y.shape
        self.N = N
        self.loglik = float(
            -0.5 * N * M * T * LOG_2PI
            - 0.5 * N * np.sum(np.log(d))
            - 0.5 * np.sum(self.y_hat * self.alpha_hat)
        )

    def contract(self, P=None, Q=None) -> float:
        """``1/2 sum_i a_i'(P (x) Q)a_i - N/2 tr(Kt^{-1} (P (x) Q))``.

        ``None`` stands for the current factor (``K_S`` or ``K_T``), which is
        diagonal in the eigenbasis; pass ``"I"`` for the identity.
        """
        A = self.alpha_hat
        if isinstance(P, str):
            p_t, p_diag = None, np.ones_like(self.lam_s)
        elif P is None:
            p_t, p_diag = None, self.lam_s
        else:
            p_t = self.u_s.T @ P @ self.u_s
            p_diag = np.diag(p_t)
        if isinstance(Q, str):
            q_t, q_diag = None, np.ones_like(self.lam_t)
        elif Q is None:
            q_t, q_diag = None, self.lam_t
        else:
            q_t = self.u_t.T @ Q @ self.u_t
            q_diag = np.diag(q_t)
        left = A if p_t is None else p_t @ A
        if p_t is None:
            left = left * p_diag[:, None]
        right = left * q_diag[None, :] if q_t is None else left @ q_t
        quad = float(np.sum(A * right))
        trace = float(np.sum(np.outer(p_diag, q_diag) / self.d))
        return 0.5 * quad - 0.5 * self.N * trace


def _factors(theta: ParameterVector, grid):
    spec = theta.spec
    ks = spatial_factor(spec, grid.spatial_coords, check=False)
    kt = temporal_factor(spec, grid.temporal_coords, check=False)
    return ks, kt


def loglik_kron(theta: ParameterVector, grid, Y) -> float:
    theta.validate()
    ks, kt = _factors(theta, grid)
    return KronState(theta.spec.eta, ks, kt, theta.sigma2, Y).loglik


def log_likelihood(theta: ParameterVector, panel, path: str = "dense") -> float:
    """Log-likelihood of the training days of ``panel`` under ``theta``.

    ``panel`` is an :class:`~windgp.data_panel.ErrorPanel` or a ``(grid, Y)``
    tuple with ``Y`` of shape ``[N, M, T]``.
    """
    grid, Y = _training_arrays(panel)
    if Y.shape[0] == 0:
        raise ValueError("no training days")
    if path == "dense":
        return loglik_dense(theta, grid, Y)
    if path == "kron":
        return loglik_kron(theta, grid, Y)
    raise ValueError(f"unknown likelihood path {path!r}")


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def value_and_gradient_kron(u, config: ModelConfig, grid, Y, h: float = FD_STEP):
    """Log-likelihood and hybrid gradient in unconstrained coordinates via the Kronecker route."""
    u = np.asarray(u, dtype=float)
    theta = from_unconstrained(u, config)
    theta.validate()
    ks, kt = _factors(theta, grid)
    state = KronState(theta.spec.eta, ks, kt, theta.sigma2, Y)
    grad = np.empty_like(u)
    for j, kind in enumerate(config.param_kind()):
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        tp = from_unconstrained(up, config)
        tm = from_unconstrained(dn, config)
        if kind == "eta":
            grad[j] = (tp.spec.eta - tm.spec.eta) / (2 * h) * state.contract()
        elif kind == "noise":
            grad[j] = (tp.sigma2 - tm.sigma2) / (2 * h) * state.contract("I", "I")
        elif kind == "spatial":
            dks = (
                spatial_factor(tp.spec, grid.spatial_coords, check=False)
                - spatial_factor(tm.spec, grid.spatial_coords, check=False)
            ) / (2 * h)
            grad[j] = theta.spec.eta * state.contract(P=dks)
        else:
            dkt = (
                temporal_factor(tp.spec, grid.temporal_coords, check=False)
                - temporal_factor(tm.spec, grid.temporal_coords, check=False)
            ) / (2 * h)
            grad[j] = theta.spec.eta * state.contract(Q=dkt)
    return state.loglik, grad


def _dense_matrix(theta, grid):
    K = build_covariance(grid, theta.spec)
    K[np.diag_indices_from(K)] += theta.sigma2
    return K


def value_and_gradient_dense(u, config: ModelConfig, grid, Y, h: float = FD_STEP):
    """Same quantity as :func:`value_and_gradient_kron` using full ``MT x MT`` matrices."""
    u = np.asarray(u, dtype=float)
    theta = from_unconstrained(u, config)
    theta.validate()
    N, M, T = Y.shape
    Kt = _dense_matrix(theta, grid)
    L, jitter = cholesky_jitter(Kt, "K + sigma2 I")
    B = Y.reshape(N, M * T).T
    alpha = sla.cho_solve((L, True), B, check_finite=False)
    Kinv = sla.cho_solve((L, True), np.eye(M * T), check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    ll = float(-0.5 * N * M * T * LOG_2PI - 0.5 * N * logdet - 0.5 * np.sum(B * alpha))
    G = 0.5 * (alpha @ alpha.T - N * Kinv)
    grad = np.empty_like(u)
    for j in range(u.size):
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        dK = (
            _dense_matrix(from_unconstrained(up, config), grid)
            - _dense_matrix(from_unconstrained(dn, config), grid)
        ) / (2 * h)
        grad[j] = float(np.sum(G * dK))
    return ll, grad


def gradient(theta: ParameterVector, panel, config: ModelConfig, mode: str = "hybrid", path: str = "kron", h: float = FD_STEP):
    """Gradient of the log-likelihood with respect to the unconstrained parameters.

    Parameters
    ----------
    mode : {"hybrid", "full_fd"}
        ``hybrid`` differences the covariance matrix and contracts it
        exactly; ``full_fd`` differences the log-likelihood.
    path : {"kron", "dense"}
        Linear-algebra route used for the factorization.
    """
    from .params import to_unconstrained

    grid, Y = _training_arrays(panel)
    u = to_unconstrained(theta, config)
    if mode == "hybrid":
        fn = value_and_gradient_kron if path == "kron" else value_and_gradient_dense
        return fn(u, config, grid, Y, h)[1]
    if mode != "full_fd":
        raise ValueError(f"unknown gradient mode {mode!r}")
    loglik = loglik_kron if path == "kron" else loglik_dense
    grad = np.empty_like(u)
    for j in range(u.size):
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (
            loglik(from_unconstrained(up, config), grid, Y)
            - loglik(from_unconstrained(dn, config), grid, Y)
        ) / (2 * h)
    return grad
