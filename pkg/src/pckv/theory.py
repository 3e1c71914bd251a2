"""Closed-form error predictions and allocation analysis.

The estimators' leading-order behavior is captured by two per-mechanism
constants: ``g`` (value-channel noise) and ``h`` (key-channel noise).  With
``mu = ell^2 / (n f*^2)`` the approximations are

    MSE[f_hat] ~ ell^2 h / n
    MSE[m_hat] ~ mu (g + h m*^2)

valid when the padding length covers every record and the sampled-support
signal dominates the background.  The allocation scan evaluates the mean
objective along the fully-allocated budget curve, parameterized by
``theta = e^eps_key``; the mechanism chooser compares the two encodings'
leading constants for a given domain size and padding length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .budget import PerturbProbs, probs_ue, split_from_theta

__all__ = [
    "ErrorPrediction",
    "ScanResult",
    "predict_errors",
    "gh_from_probs",
    "grr_gh_closed_form",
    "ue_objective",
    "allocation_objective_scan",
    "choose_mechanism",
]


@dataclass(frozen=True)
class ErrorPrediction:
    """Leading-order error terms for one key.

    ``var_f`` is exact (under full padding coverage); ``e_m`` and
    ``var_m_bound`` are stated approximations, as are the simplified
    ``mse_*_approx`` forms.
    """

    var_f: float
    e_m: float
    var_m_bound: float
    mse_f_approx: float
    mse_m_approx: float
    delta: float
    gamma: float
    mu: float
    g: float
    h: float


def gh_from_probs(probs: PerturbProbs) -> tuple[float, float]:
    """Leading error constants from perturbation probabilities.

    g = b / (a^2 (2p - 1)^2),  h = (1 - b) b / (a - b)^2.
    """
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    if a <= b or p <= 0.5:
        raise ValueError("need a > b and p > 1/2")
    g = b / (a * a * (2 * p - 1) ** 2)
    h = (1 - b) * b / (a - b) ** 2
    return g, h


def predict_errors(
    probs: PerturbProbs, ell: int, n: int, f_star, m_star=0.0
) -> ErrorPrediction:
    """Predict estimation errors for a key with true frequency and mean.

    Scalars in, scalars out; numpy arrays broadcast through for per-key use.
    All outputs are approximations: the variance of the frequency estimate is
    exact under full padding coverage, the mean terms are leading-order.
    """
    a, b, p = float(probs.a), float(probs.b), float(probs.p)
    if ell < 1 or n < 1:
        raise ValueError("need ell >= 1 and n >= 1")
    f_star = np.asarray(f_star, dtype=np.float64)
    m_star = np.asarray(m_star, dtype=np.float64)
    if np.any(f_star <= 0) or np.any(f_star > 1):
        raise ValueError("true frequency must lie in (0, 1]")
    if np.any(np.abs(m_star) > 1):
        raise ValueError("true mean must lie in [-1, 1]")
    g, h = gh_from_probs(probs)
    delta = (a - b) * f_star / ell
    gamma = a * (2 * p - 1) * f_star / ell
    var_f = (ell * ell * b * (1 - b) / (n * (a - b) ** 2)
             + ell * f_star * (1 - a - b) / (n * (a - b)))
    e_m = m_star * (1 + (1 - b - delta) * b / (n * delta * delta))
    var_m_bound = ((b + delta) / (n * gamma * gamma)
                   + (b * (1 - b) - delta) / (n * delta * delta) * m_star * m_star)
    mu = ell * ell / (n * f_star * f_star)
    mse_f = ell * ell * h / n
    mse_m = mu * (g + h * m_star * m_star)

    def _py(x):
        return x.item() if np.ndim(x) == 0 else x

    return ErrorPrediction(
        var_f=_py(var_f),
        e_m=_py(e_m),
        var_m_bound=_py(var_m_bound),
        mse_f_approx=_py(mse_f + 0 * f_star),
        mse_m_approx=_py(mse_m),
        delta=_py(delta),
        gamma=_py(gamma),
        mu=_py(mu),
        g=g,
        h=h,
    )


def grr_gh_closed_form(
    eps_key: float, eps_value: float, d_prime: int
) -> tuple[float, float]:
    """Single-pair encoding constants written directly in budget terms.

    Algebraically identical to :func:`gh_from_probs` applied to
    ``probs_grr(eps_key, eps_value, d_prime)``.
    """
    if d_prime < 2:
        raise ValueError("d_prime must be >= 2")
    e1 = math.exp(eps_key)
    tanh_half = math.tanh(eps_value / 2.0)  # = 2/(1 + e^-eps_value) - 1
    if e1 <= 1 or tanh_half <= 0:
        raise ValueError("need eps_key > 0 and eps_value > 0")
    g = (math.exp(-eps_key) + (d_prime - 1) * math.exp(-2 * eps_key)) / tanh_half**2
    h = (e1 + d_prime - 2) / (e1 - 1) ** 2
    return g, h


def ue_objective(theta, eps_total: float):
    """Unary-encoding constants along the fully-allocated curve.

    g(theta) = 4 / ((theta + 1)(e^eps / theta - 1)^2),
    h(theta) = 4 theta / (theta - 1)^2.
    """
    theta = np.asarray(theta, dtype=np.float64)
    e_tot = math.exp(eps_total)
    g = 4.0 / ((theta + 1.0) * (e_tot / theta - 1.0) ** 2)
    h = 4.0 * theta / (theta - 1.0) ** 2
    return g, h


@dataclass(frozen=True)
class ScanResult:
    """Objective values along the budget curve plus the analytic optimum."""

    eps_total: float
    m_star_sq: float
    thetas: np.ndarray
    g: np.ndarray
    h: np.ndarray
    phi: np.ndarray
    theta_opt: float
    phi_opt: float
    theta_best: float
    phi_best: float


def allocation_objective_scan(
    eps_total: float, m_star_sq: float, grid_size: int = 10_000
) -> ScanResult:
    """Scan the mean objective Phi = g + h m*^2 along the budget curve.

    The grid is log-spaced over [(e^eps + 1)/2, e^eps), left endpoint
    included (it is the analytic optimum ``theta_opt`` whenever the objective
    is monotone).  ``theta_best`` is the grid argmin.
    """
    if eps_total <= 0:
        raise ValueError("eps_total must be positive")
    if m_star_sq < 0 or m_star_sq > 1:
        raise ValueError("m_star_sq must lie in [0, 1]")
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    e_tot = math.exp(eps_total)
    theta_opt = (e_tot + 1.0) / 2.0
    thetas = np.geomspace(theta_opt, e_tot, num=grid_size, endpoint=False)
    g, h = ue_objective(thetas, eps_total)
    phi = g + h * m_star_sq
    best = int(np.argmin(phi))
    g0, h0 = ue_objective(theta_opt, eps_total)
    return ScanResult(
        eps_total=eps_total,
        m_star_sq=m_star_sq,
        thetas=thetas,
        g=g,
        h=h,
        phi=phi,
        theta_opt=theta_opt,
        phi_opt=float(g0 + h0 * m_star_sq),
        theta_best=float(thetas[best]),
        phi_best=float(phi[best]),
    )


def choose_mechanism(d: int, ell: int, eps_total: float, objective: str) -> str:
    """Pick the encoding with the smaller leading error constant.

    objective 'frequency' compares key-channel constants; 'mean' compares the
    full mean objective.  Ties go to the single-pair encoding ('grr').
    """
    if d < 1 or ell < 1:
        raise ValueError("need d >= 1 and ell >= 1")
    if eps_total <= 0:
        raise ValueError("eps_total must be positive")
    e_tot = math.exp(eps_total)
    if objective == "frequency":
        ue_better = 2 * (d - 1) > ell * (4 * ell - 1) * (e_tot + 1)
    elif objective == "mean":
        ue_better = 2 * d > ell * (4 * ell * (e_tot + 1) / (e_tot + 3) - 1) * (e_tot + 1)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return "ue" if ue_better else "grr"
