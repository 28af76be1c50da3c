"""Contract payoffs and premiums.

The hybrid cover pays the loss in full up to a threshold ``s`` and an
index-based amount ``s * phi_theta(w)`` beyond it. The payoff factor is
clamped from below at 1 (no under-compensation above ``s``) and from above
at an excess statistic of the backing loss model (no over-compensation, at
least on average). A trigger variant activates on the index value instead
of the loss, and a capped contract ``min(y, m)`` serves as the comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .dists import LossSample, TailLinkModel, _as_cov_matrix
from .errors import DataError, DomainError

def threshold_quantile(y, q: float) -> float:
    """Empirical quantile by the right-continuous inverted CDF.

    Returns the order statistic ``y_(floor(n*q)+1)``; the default cover
    threshold is ``threshold_quantile(y, 0.85)``.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("quantile of an empty sample is undefined")
    if not 0.0 < q < 1.0:
        raise DomainError("quantile level must lie in (0, 1)")
    ordered = np.sort(y)
    k = min(int(math.floor(y.size * q)), y.size - 1)
    return float(ordered[k])


class PayoffKind(str, Enum):
    EXP_LINK_1D = "exp_link_1d"  # variable part exp(theta * w)
    LINEAR_2D = "linear_2d"      # variable part theta1*w1 + theta2*w2


class UpperStat(str, Enum):
    MEAN_EXCESS = "mean_excess"
    MEDIAN_EXCESS = "median_excess"


class Branch(str, Enum):
    TRADITIONAL = "traditional"
    INDEX = "index"


@dataclass(frozen=True)
class ContractPayout:
    x: float
    branch: Branch


@dataclass(frozen=True)
class PayoffFamily:
    """Parametric payoff factors ``phi_theta(w) >= 1``.

    ``model`` backs the upper clamp statistic; construct the family with the
    true model for oracle simulations or with a fitted model when
    calibrating from data (the choice is deliberate and explicit).
    ``theta_domain`` is a box, one ``(lo, hi)`` pair per coordinate.
    """

    kind: PayoffKind
    upper_stat: UpperStat
    s: float
    model: TailLinkModel
    theta_domain: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        object.__setattr__(self, "upper_stat", UpperStat(self.upper_stat))
        object.__setattr__(self, "s", float(self.s))
        dom = tuple((float(lo), float(hi)) for lo, hi in self.theta_domain)
        object.__setattr__(self, "theta_domain", dom)
        if not self.s > 0:
            raise DomainError("threshold s must be positive")
        if len(dom) != self.dim:
            raise DomainError(f"theta_domain must have {self.dim} coordinate ranges")
        if any(hi < lo for lo, hi in dom):
            raise DomainError("theta_domain bounds must satisfy lo <= hi")

    @property
    def dim(self) -> int:
        return 1 if self.kind is PayoffKind.EXP_LINK_1D else 2

    def with_model(self, model: TailLinkModel) -> "PayoffFamily":
        return replace(self, model=model)

    def with_s(self, s: float) -> "PayoffFamily":
        return replace(self, s=s)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            raise DomainError(f"theta must have {self.dim} coordinates")
        for value, (lo, hi) in zip(theta, self.theta_domain):
            if not lo <= value <= hi:
                raise DomainError(f"theta={theta} outside the domain {self.theta_domain}")
        return theta

    def variable_part(self, theta, w) -> np.ndarray:
        theta = self.check_theta(theta)
        mat = _as_cov_matrix(w, self.model.covariate_dim)
        if self.kind is PayoffKind.EXP_LINK_1D:
            return np.exp(theta[0] * mat[:, 0])
        return mat @ theta

    def upper_bound(self, w) -> np.ndarray:
        """Clamp statistic evaluated at ``s``; raises for an undefined mean."""
        mat = _as_cov_matrix(w, self.model.covariate_dim)
        stat = "mean" if self.upper_stat is UpperStat.MEAN_EXCESS else "median"
        return np.atleast_1d(self.model.excess_stat(stat, self.s, mat))

    def phi(self, theta, w) -> np.ndarray:
        """Vectorized payoff factor ``max(min(upper, variable), s) / s``."""
        var = self.variable_part(theta, w)
        upper = self.upper_bound(w)
        return np.maximum(np.minimum(upper, var), self.s) / self.s


def payoff_phi(family: PayoffFamily, theta, w) -> float:
    """Scalar payoff factor at a single covariate vector; always >= 1."""
    return float(family.phi(theta, w)[0])


def hybrid_payout(y: float, w, family: PayoffFamily, theta) -> ContractPayout:
    """Hybrid contract: the loss itself up to ``s`` (inclusive), index beyond."""
    if y < 0:
        raise DomainError("loss must be >= 0")
    if y <= family.s:
        return ContractPayout(float(y), Branch.TRADITIONAL)
    return ContractPayout(family.s * payoff_phi(family, theta, w), Branch.INDEX)


def hybrid_payouts(sample: LossSample, family: PayoffFamily, theta) -> np.ndarray:
    """Vectorized hybrid payouts for every row of the sample."""
    phi = family.phi(theta, sample.w)
    return np.where(sample.y <= family.s, sample.y, family.s * phi)


def trigger_payout(y: float, w, family: PayoffFamily, theta, s_tilde: float) -> ContractPayout:
    """Index-triggered variant: the branch is decided by ``s*phi`` vs ``s_tilde``.

    Pays the loss in full when the index stays at or below ``s_tilde`` and
    the index amount otherwise, regardless of ``y``.
    """
    if not 0 < s_tilde <= family.s:
        raise DomainError("s_tilde must satisfy 0 < s_tilde <= s")
    index_amount = family.s * payoff_phi(family, theta, w)
    if index_amount <= s_tilde:
        return ContractPayout(float(y), Branch.TRADITIONAL)
    return ContractPayout(index_amount, Branch.INDEX)


def trigger_payouts(sample: LossSample, family: PayoffFamily, theta, s_tilde: float) -> np.ndarray:
    if not 0 < s_tilde <= family.s:
        raise DomainError("s_tilde must satisfy 0 < s_tilde <= s")
    index_amount = family.s * family.phi(theta, sample.w)
    return np.where(index_amount <= s_tilde, sample.y, index_amount)


@dataclass(frozen=True)
class TriggerMismatchReport:
    """Trigger/loss mismatch diagnostics for one ``(theta, s_tilde)``.

    ``overcompensation_mass`` is the mean of ``(s*phi - y)+`` over the
    'index fired although y <= s' event; overcompensation is reported, not
    prevented.
    """

    n_lower_mismatch: int   # y <= s but the index fired
    n_upper_mismatch: int   # y > s but the index did not fire
    p_mismatch: float
    overcompensation_mass: float


def trigger_mismatch_report(
    sample: LossSample, family: PayoffFamily, theta, s_tilde: float
) -> TriggerMismatchReport:
    if not 0 < s_tilde <= family.s:
        raise DomainError("s_tilde must satisfy 0 < s_tilde <= s")
    index_amount = family.s * family.phi(theta, sample.w)
    fired = index_amount > s_tilde
    lower = (sample.y <= family.s) & fired
    upper = (sample.y > family.s) & ~fired
    delta = np.where(lower, np.maximum(index_amount - sample.y, 0.0), 0.0)
    n = len(sample)
    return TriggerMismatchReport(
        n_lower_mismatch=int(np.sum(lower)),
        n_upper_mismatch=int(np.sum(upper)),
        p_mismatch=float((np.sum(lower) + np.sum(upper)) / n),
        overcompensation_mass=float(np.mean(delta)),
    )


def capped_payout(y: float, m: float) -> float:
    """Capped indemnity ``min(y, m)``; ``m = inf`` means uncapped."""
    if not m > 0:
        raise DomainError("cap m must be positive")
    return float(min(y, m))


def compensation_ratio(x, y):
    """Ratio ``x / y`` with the convention 0/0 = 1 (no claim, no payout)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((y == 0.0) & (x == 0.0), 1.0, x / y)
    if np.ndim(ratio) == 0:
        return float(ratio)
    return ratio


def empirical_premium(sample: LossSample, family: PayoffFamily, theta, tau: float) -> float:
    """Loaded premium ``(1 + tau) * mean(hybrid payouts)``."""
    if len(sample) == 0:
        raise DataError("premium of an empty sample is undefined")
    return (1.0 + tau) * float(np.mean(hybrid_payouts(sample, family, theta)))


def split_premium(
    sample: LossSample,
    family: PayoffFamily,
    theta,
    tau_trad: float,
    tau_index: float,
) -> float:
    """Premium with distinct loadings on the traditional and index parts."""
    if len(sample) == 0:
        raise DataError("premium of an empty sample is undefined")
    y = sample.y
    below = y <= family.s
    phi = family.phi(theta, sample.w)
    trad = float(np.mean(np.where(below, y, 0.0)))
    index = float(np.mean(np.where(below, 0.0, family.s * phi)))
    return (1.0 + tau_trad) * trad + (1.0 + tau_index) * index


def payout_trace_rows(sample: LossSample, family: PayoffFamily, theta):
    """Rows ``(y, w..., branch, x)`` for CSV export of a payout scatter."""
    phi = family.phi(theta, sample.w)
    rows = []
    for i in range(len(sample)):
        y = float(sample.y[i])
        if y <= family.s:
            branch, x = Branch.TRADITIONAL, y
        else:
            branch, x = Branch.INDEX, family.s * float(phi[i])
        rows.append((y, *sample.w[i].tolist(), branch.value, x))
    return rows
