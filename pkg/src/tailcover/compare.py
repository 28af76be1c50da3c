"""Equal-price comparison of the hybrid cover against a capped indemnity.

For each threshold ``s`` and index loading, the capped contract's limit
``m(s)`` is solved so both contracts cost the same, then the two expected
compensation ratios ``E[X/Y]`` are compared in-sample.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .calibrate import one_step_calibrate
from .contract import PayoffFamily, compensation_ratio, hybrid_payouts, split_premium
from .dists import LossSample
from .errors import DataError, DomainError, NoSolutionError
from .objective import MetricConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ComparisonRow:
    s: float
    tau_index: float
    premium_hybrid: float
    m_of_s: float
    ratio_hybrid: float
    ratio_capped: float
    saturated: bool = False


def capped_premium(sample: LossSample, m: float, tau_trad: float) -> float:
    """``(1 + tau_trad) * mean(min(y, m))``; non-decreasing, saturating at
    the full loaded mean."""
    if len(sample) == 0:
        raise DataError("premium of an empty sample is undefined")
    if not m > 0:
        raise DomainError("cap m must be positive")
    return (1.0 + tau_trad) * float(np.mean(np.minimum(sample.y, m)))


def solve_cap(
    sample: LossSample,
    target_premium: float,
    tau_trad: float,
    *,
    rel_tol: float = 1e-9,
    max_iter: int = 500,
) -> float:
    """Smallest cap whose premium matches ``target_premium``, by bisection.

    The empirical capped premium is continuous, piecewise linear and
    strictly increasing up to ``max(y)``, so the solution is unique;
    saturation is returned as exactly ``max(y)``.
    """
    if len(sample) == 0:
        raise DataError("cannot solve on an empty sample")
    if not target_premium > 0:
        raise DomainError("target premium must be positive")
    hi = float(np.max(sample.y))
    saturation = capped_premium(sample, hi, tau_trad)
    if target_premium > saturation * (1.0 + rel_tol):
        raise NoSolutionError(
            f"target premium {target_premium} exceeds the saturation level {saturation}"
        )
    if target_premium >= saturation:
        return hi
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value = capped_premium(sample, mid, tau_trad) if mid > 0 else 0.0
        if abs(value - target_premium) <= rel_tol * target_premium:
            return mid
        if value < target_premium:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def comparison_sweep(
    sample: LossSample,
    family: PayoffFamily,
    theta_hat: np.ndarray,
    s_grid: Sequence[float],
    tau_index_list: Sequence[float],
    tau_trad: float,
    *,
    config: Optional[MetricConfig] = None,
    recalibrate_per_s: bool = False,
) -> List[ComparisonRow]:
    """Equal-price rows over ``(s, tau_index)``.

    By default the single calibrated ``theta_hat`` is reused at every ``s``;
    with ``recalibrate_per_s`` the one-step calibration is redone per grid
    point (requires ``config``). Rows whose hybrid premium exceeds the
    capped contract's saturation level are emitted with ``m = max(y)`` and
    a saturation flag instead of being dropped.
    """
    if recalibrate_per_s and config is None:
        raise DomainError("recalibrate_per_s requires a metric config")
    y = sample.y
    max_y = float(np.max(y))
    rows: List[ComparisonRow] = []
    for s in s_grid:
        fam_s = family.with_s(float(s))
        if recalibrate_per_s:
            theta_s = one_step_calibrate(sample, fam_s, config).theta_hat
        else:
            theta_s = np.asarray(theta_hat, dtype=float)
        ratio_hybrid = float(
            np.mean(compensation_ratio(hybrid_payouts(sample, fam_s, theta_s), y))
        )
        for tau_index in tau_index_list:
            premium = split_premium(sample, fam_s, theta_s, tau_trad, tau_index)
            try:
                m_of_s = solve_cap(sample, premium, tau_trad)
                saturated = False
            except NoSolutionError:
                logger.warning(
                    "capped premium saturates below target at s=%s tau_index=%s", s, tau_index
                )
                m_of_s = max_y
                saturated = True
            ratio_capped = float(
                np.mean(compensation_ratio(np.minimum(y, m_of_s), y))
            )
            rows.append(
                ComparisonRow(
                    s=float(s),
                    tau_index=float(tau_index),
                    premium_hybrid=premium,
                    m_of_s=m_of_s,
                    ratio_hybrid=ratio_hybrid,
                    ratio_capped=ratio_capped,
                    saturated=saturated,
                )
            )
    return rows
