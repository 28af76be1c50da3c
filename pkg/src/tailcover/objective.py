"""The decision metric and its tail approximation.

The exact empirical criterion averages ``L(X/Y - f(premium))`` over joint
(loss, covariate) data. Its large-threshold approximation replaces the loss
randomness with conditional tail functionals, so it only needs the
covariate distribution, the exceedance probability ``S(s|w)`` and the tail
index ``gamma(w)``:

    psi(pi, phi; S, gamma) = L(1 - f(pi)) * (1 - S * Phi0(phi, gamma))

with ``Phi0(x, gamma) = 1 - phi0(x) + Phi1(x, gamma)`` built from the limit
functions ``phi0``/``phi1`` of the chosen ``L``. ``Phi1`` is implemented in
the integral form carrying the ``x**(-1/gamma)`` prefactor, which is the
variant consistent with the exact conditional expectation; the
prefactor-free variant is kept behind a flag so the difference is
demonstrable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gammainc, gammaln

from .contract import PayoffFamily, compensation_ratio, hybrid_payouts
from .dists import CovariateSample, LossSample, TailLinkModel
from .errors import DataError, DomainError, InvalidConfigError


class LKind(str, Enum):
    IDENTITY = "identity"
    EXP_UTILITY = "exp_utility"


class FKind(str, Enum):
    LOGISTIC = "logistic"
    RATIONAL = "rational"


@dataclass(frozen=True)
class MetricConfig:
    """Metric ingredients: the utility-like ``L``, price aversion ``f``,
    premium loading ``tau`` and the premium limit ``pi_plus`` at which the
    limit functions of the identity metric are evaluated.

    ``kappa`` may exceed 1 (the calibrated default is 1.415), in which case
    ``f`` is merely bounded and non-decreasing rather than mapping into
    [0, 1]. ``pi_plus`` is unused for the exponential metric, whose limit
    functions do not involve ``f``.
    """

    l_kind: LKind = LKind.EXP_UTILITY
    mu: float = 1.5
    f_kind: FKind = FKind.RATIONAL
    kappa: float = 1.415
    beta: float = 1.65
    pi_plus: float = 0.0
    tau: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "l_kind", LKind(self.l_kind))
        object.__setattr__(self, "f_kind", FKind(self.f_kind))
        if self.l_kind is LKind.EXP_UTILITY and not self.mu > 0:
            raise InvalidConfigError("mu must be positive for the exponential metric")
        if self.kappa < 0 or self.beta <= 0:
            raise InvalidConfigError("kappa must be >= 0 and beta > 0")


def metric_L(config: MetricConfig, x):
    """``L(x)``: identity or ``-exp(-mu * x)``."""
    x = np.asarray(x, dtype=float)
    if config.l_kind is LKind.IDENTITY:
        out = x
    else:
        out = -np.exp(-config.mu * x)
    if np.ndim(out) == 0:
        return float(out)
    return out


def price_f(config: MetricConfig, pi):
    """Price-aversion value at premium ``pi >= 0``; non-decreasing in ``pi``."""
    pi_arr = np.asarray(pi, dtype=float)
    if np.any(pi_arr < 0):
        raise DomainError("premium must be >= 0")
    if config.f_kind is FKind.LOGISTIC:
        out = config.kappa / (1.0 + np.exp(-config.beta * pi_arr))
    else:
        p = pi_arr ** config.beta
        out = config.kappa * p / (1.0 + p)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _f_at_pi_plus(config: MetricConfig) -> float:
    f_plus = price_f(config, config.pi_plus)
    if f_plus >= 1.0:
        raise InvalidConfigError(
            f"identity metric needs f(pi_plus) < 1, got f({config.pi_plus}) = {f_plus}"
        )
    return f_plus


def phi0(config: MetricConfig, t):
    """Limit of ``L(t - f(pi)) / L(1 - f(pi))`` as ``pi -> pi_plus``."""
    t = np.asarray(t, dtype=float)
    if config.l_kind is LKind.EXP_UTILITY:
        out = np.exp(-config.mu * (t - 1.0))
    else:
        f_plus = _f_at_pi_plus(config)
        out = (t - f_plus) / (1.0 - f_plus)
    if np.ndim(out) == 0:
        return float(out)
    return out


def phi1(config: MetricConfig, t):
    """Limit of ``L'(t - f(pi)) / L(1 - f(pi))``; sign depends on ``L``."""
    t = np.asarray(t, dtype=float)
    if config.l_kind is LKind.EXP_UTILITY:
        out = -config.mu * np.exp(-config.mu * (t - 1.0))
    else:
        out = np.full_like(t, 1.0 / (1.0 - _f_at_pi_plus(config)))
    if np.ndim(out) == 0:
        return float(out)
    return out


def Phi1(config: MetricConfig, x, gamma, *, prefactor: bool = True, method: str = "closed"):
    """``Phi1(x, gamma)``, closed form or adaptive-quadrature oracle.

    With the prefactor, ``x**(-1/gamma) * int_0^x v**(1/gamma) phi1(v) dv``:
    ``x / ((1 + 1/gamma) (1 - f(pi_plus)))`` for the identity metric and an
    incomplete-gamma expression for the exponential one. The quadrature path
    (absolute tolerance 1e-10, interval split at v = 1) is an independent
    check of the closed forms.
    """
    x_arr = np.asarray(x, dtype=float)
    g_arr = np.asarray(gamma, dtype=float)
    if np.any(x_arr <= 0) or np.any(g_arr <= 0):
        raise DomainError("Phi1 requires x > 0 and gamma > 0")
    if method == "quadrature":
        out = _phi1_integral_quad(config, x_arr, g_arr, prefactor)
    elif method == "closed":
        if config.l_kind is LKind.IDENTITY:
            f_plus = _f_at_pi_plus(config)
            body = x_arr ** (1.0 + 1.0 / g_arr) / ((1.0 + 1.0 / g_arr) * (1.0 - f_plus))
            out = body * x_arr ** (-1.0 / g_arr) if prefactor else body
        else:
            mu = config.mu
            a = 1.0 + 1.0 / g_arr
            with np.errstate(divide="ignore"):
                log_reg = np.log(gammainc(a, mu * x_arr))
            log_mag = math.log(mu) + mu - a * math.log(mu) + gammaln(a) + log_reg
            if prefactor:
                log_mag = log_mag - np.log(x_arr) / g_arr
            out = -np.exp(log_mag)
    else:
        raise DomainError(f"unknown Phi1 method {method!r}")
    if np.ndim(out) == 0 and np.ndim(x) == 0 and np.ndim(gamma) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


def _phi1_integral_quad(config, x_arr, g_arr, prefactor):
    x_b, g_b = np.broadcast_arrays(np.atleast_1d(x_arr), np.atleast_1d(g_arr))
    out = np.empty(x_b.shape, dtype=float)
    flat_x, flat_g, flat_out = x_b.ravel(), g_b.ravel(), out.ravel()
    for i in range(flat_x.size):
        x_i, g_i = float(flat_x[i]), float(flat_g[i])

        def integrand(v, _g=g_i):
            return v ** (1.0 / _g) * phi1(config, v)

        pts = [1.0] if x_i > 1.0 else None
        val, _ = quad(integrand, 0.0, x_i, epsabs=1e-10, epsrel=1e-12, limit=200, points=pts)
        flat_out[i] = val * x_i ** (-1.0 / g_i) if prefactor else val
    if np.ndim(x_arr) == 0 and np.ndim(g_arr) == 0:
        return float(out.ravel()[0])
    return out.reshape(np.broadcast_shapes(np.shape(x_arr), np.shape(g_arr)))


def Phi0(config: MetricConfig, x, gamma, *, prefactor: bool = True, method: str = "closed"):
    """``1 - phi0(x) + Phi1(x, gamma)``."""
    return 1.0 - phi0(config, x) + Phi1(config, x, gamma, prefactor=prefactor, method=method)


def psi(config: MetricConfig, pi, phi_val, S_s, gamma, *, prefactor: bool = True):
    """Tail-approximation kernel ``L(1 - f(pi)) * (1 - S_s * Phi0(phi, gamma))``."""
    S_arr = np.asarray(S_s, dtype=float)
    if np.any((S_arr < 0) | (S_arr > 1)):
        raise DomainError("S_s must lie in [0, 1]")
    phi_arr = np.asarray(phi_val, dtype=float)
    if np.any(phi_arr < 1.0):
        raise DomainError("phi_val must be >= 1")
    lead = metric_L(config, 1.0 - price_f(config, pi))
    out = lead * (1.0 - S_arr * Phi0(config, phi_arr, gamma, prefactor=prefactor))
    if np.ndim(out) == 0:
        return float(out)
    return out


def objective_of_payouts(
    y: np.ndarray, x: np.ndarray, config: MetricConfig, pi_hat: Optional[float] = None
) -> float:
    """Mean of ``L(X/Y - f(pi))`` with the 0/0 = 1 convention.

    The premium defaults to ``(1 + tau) * mean(x)`` computed from the
    payouts themselves; pass ``pi_hat`` to pin it externally.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.size == 0:
        raise DataError("objective of an empty sample is undefined")
    if pi_hat is None:
        pi_hat = (1.0 + config.tau) * float(np.mean(x))
    ratios = compensation_ratio(x, y)
    return float(np.mean(metric_L(config, ratios - price_f(config, pi_hat))))


def empirical_objective(sample: LossSample, family: PayoffFamily, theta, config: MetricConfig) -> float:
    """Exact empirical criterion; the premium inside ``f`` comes from the
    same sample."""
    if len(sample) == 0:
        raise DataError("objective of an empty sample is undefined")
    payouts = hybrid_payouts(sample, family, theta)
    return objective_of_payouts(sample.y, payouts, config)


def approx_objective(
    fitted: TailLinkModel,
    cov: CovariateSample,
    family: PayoffFamily,
    theta,
    config: MetricConfig,
    pi_hat: float,
    *,
    form: str = "factored",
    prefactor: bool = True,
) -> float:
    """Two-step tail approximation of the criterion.

    Averages over the covariate-only sample using ``S(s|w)`` and
    ``gamma(w)`` from ``fitted``; the premium ``pi_hat`` must come from the
    joint sample. Depends on losses only through ``pi_hat``. The clamp
    inside ``family.phi`` uses ``family.model``, which may deliberately
    differ from ``fitted`` (oracle runs clamp with the true model).

    ``form`` selects one of two algebraically identical evaluations: the
    per-row ``psi`` average or the factored form with the price term pulled
    out of the sum.
    """
    if len(cov) == 0:
        raise DataError("approximation needs a nonempty covariate sample")
    cfg = replace(config, pi_plus=float(pi_hat))
    S = np.atleast_1d(fitted.survival(family.s, cov.w))
    g = np.atleast_1d(fitted.tail_index(cov.w))
    phi_vals = family.phi(theta, cov.w)
    if form == "psi_sum":
        return float(np.mean(psi(cfg, pi_hat, phi_vals, S, g, prefactor=prefactor)))
    if form == "factored":
        lead = metric_L(cfg, 1.0 - price_f(cfg, pi_hat))
        inner = 1.0 - S * Phi0(cfg, phi_vals, g, prefactor=prefactor)
        return float(lead * np.mean(inner))
    raise DomainError(f"unknown form {form!r}")


def empirical_curve(
    sample: LossSample,
    family: PayoffFamily,
    thetas,
    config: MetricConfig,
    premium_sample: Optional[LossSample] = None,
) -> np.ndarray:
    """Exact objective on a grid of theta values (rows of ``thetas``).

    ``premium_sample`` overrides the sample feeding the premium inside
    ``f`` (the learning-curve loop pins it to the full reference sample).
    """
    from .contract import empirical_premium

    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    out = np.empty(thetas.shape[0])
    for i, theta in enumerate(thetas):
        if premium_sample is None:
            out[i] = empirical_objective(sample, family, theta, config)
        else:
            pi_hat = empirical_premium(premium_sample, family, theta, config.tau)
            payouts = hybrid_payouts(sample, family, theta)
            out[i] = objective_of_payouts(sample.y, payouts, config, pi_hat)
    return out


def approx_curve(
    fitted: TailLinkModel,
    cov: CovariateSample,
    family: PayoffFamily,
    thetas,
    config: MetricConfig,
    premium_sample: LossSample,
    *,
    prefactor: bool = True,
) -> np.ndarray:
    """Approximate objective on a theta grid; per-theta premiums come from
    ``premium_sample`` (the joint sample)."""
    from .contract import empirical_premium

    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    out = np.empty(thetas.shape[0])
    for i, theta in enumerate(thetas):
        pi_hat = empirical_premium(premium_sample, family, theta, config.tau)
        out[i] = approx_objective(
            fitted, cov, family, theta, config, pi_hat, prefactor=prefactor
        )
    return out


def partial_cover_curve(y: np.ndarray, config: MetricConfig, s_grid) -> np.ndarray:
    """Diagnostic: the criterion for the plain partial cover ``X = min(Y, s)``.

    Evaluated on an ``s`` grid with the pure (unloaded) premium
    ``mean(min(y, s))`` inside ``f``; used to inspect where raising the
    cover stops paying off.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("diagnostic needs a nonempty sample")
    out = np.empty(len(s_grid))
    for i, s in enumerate(s_grid):
        x = np.minimum(y, float(s))
        pi = float(np.mean(x))
        ratios = compensation_ratio(x, y)
        out[i] = float(np.mean(metric_L(config, ratios - price_f(config, pi))))
    return out
