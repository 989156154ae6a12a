"""Closed-form identification regions for the missing-data parameters.

Within a treatment stratum x the four quantities that matter are
a = q_{x,0,11}, b = q_{x,1,11}, m0 = q_{x,0,0.} and m1 = q_{x,1,0.}.
The array helpers work elementwise on arrays of those quantities so the
samplers can use them on whole blocks of proposals.
"""
import logging

import numpy as np

from app.models import CELLS, OmegaInterval, ZMarginParam
from app.saturated import psi_bounds

logger = logging.getLogger(__name__)


def safe_ratio(num, den, zero_over_zero=0.0):
    """num / den with x/0 = sign(x) * inf and 0/0 = zero_over_zero"""
    num, den = np.broadcast_arrays(np.asarray(num, dtype=float), np.asarray(den, dtype=float))
    out = np.full(num.shape, float(zero_over_zero))
    nonzero = den != 0
    np.divide(num, den, out=out, where=nonzero)
    out = np.where(~nonzero & (num > 0), np.inf, out)
    out = np.where(~nonzero & (num < 0), -np.inf, out)
    return out


def posbias_floor_array(q11, q0dot):
    """Smallest omega with P(Y=1|R=0) >= P(Y=1|R=1); 0 for a fully missing cell"""
    return safe_ratio(q11, 1.0 - np.asarray(q0dot), 0.0)


def odds_ratio(p1, p0):
    """OR(Y, Z | X) from P(Y=1|x,1) and P(Y=1|x,0); nan at 0 or 1"""
    p1, p0 = np.asarray(p1, dtype=float), np.asarray(p0, dtype=float)
    interior = (p1 > 0) & (p1 < 1) & (p0 > 0) & (p0 < 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = (p1 * (1.0 - p0)) / (p0 * (1.0 - p1))
    return np.where(interior, ratio, np.nan)


def exact_iv_arrays(a, b, m0, m1):
    """Interval for omega_{x,1} under OR(Y,Z|X=x) = 1"""
    lo = np.maximum(0.0, safe_ratio(a - b, m1, 0.0))
    hi = np.minimum(1.0, safe_ratio(a - b + m0, m1, np.inf))
    return lo, hi


def dirac_omega0(a, b, m0, m1, omega1):
    """omega_{x,0} implied by omega_{x,1} when the odds ratio is exactly one"""
    return safe_ratio(b - a + m1 * omega1, m0, 0.0)


def exact_iv_posbias_arrays(a, b, m0, m1, floor1):
    """Interval for omega_{x,1} under the exact IV plus positive missing-data bias"""
    lo, hi = exact_iv_arrays(a, b, m0, m1)
    propagated = safe_ratio(safe_ratio(a * m0, 1.0 - m0, 0.0) + a - b, m1, 0.0)
    return np.maximum.reduce([lo, propagated, floor1]), hi


def _target_p1(p0, odds_ratio_target):
    """P(Y=1|x,1) whose odds against p0 equal the target odds ratio"""
    return odds_ratio_target * p0 / (1.0 - p0 + odds_ratio_target * p0)


def _target_p0(p1, odds_ratio_target):
    return p1 / (p1 + odds_ratio_target * (1.0 - p1))


def threshold_iv_arrays(a, b, m0, m1, t_l, t_h):
    """Per-cell omega bounds when t_l < OR(Y,Z|X=x) < t_h.

    Returns (lo0, hi0, lo1, hi1). Each end solves OR = t_l or t_h with the
    other cell's omega at the extreme that makes the bound widest.
    """
    lo1 = np.maximum(0.0, safe_ratio(_target_p1(a, t_l) - b, m1, 0.0))
    hi1 = np.minimum(1.0, safe_ratio(_target_p1(a + m0, t_h) - b, m1, np.inf))
    lo0 = np.maximum(0.0, safe_ratio(_target_p0(b, t_h) - a, m0, 0.0))
    hi0 = np.minimum(1.0, safe_ratio(_target_p0(b + m1, t_l) - a, m0, np.inf))
    return lo0, hi0, lo1, hi1


def _stratum(q, x):
    low, high = q[2 * x], q[2 * x + 1]
    return low.q11, high.q11, low.q0dot, high.q0dot


class DiracMap:
    """omega_{x,0} as a function of omega_{x,1} in stratum x"""

    def __init__(self, a, b, m0, m1):
        self.a, self.b, self.m0, self.m1 = a, b, m0, m1

    def __call__(self, omega1):
        value = dirac_omega0(self.a, self.b, self.m0, self.m1, omega1)
        return float(value) if np.ndim(value) == 0 else value


def _dirac_region(q, interval_fn):
    intervals = [None] * 4
    maps = []
    for x in (0, 1):
        a, b, m0, m1 = _stratum(q, x)
        dirac = DiracMap(a, b, m0, m1)
        maps.append(dirac)
        lo, hi = (float(v) for v in interval_fn(x, a, b, m0, m1))
        if not lo <= hi:
            intervals[2 * x] = intervals[2 * x + 1] = OmegaInterval.infeasible()
            continue
        image = sorted((dirac(lo), dirac(hi)))
        intervals[2 * x + 1] = OmegaInterval(lo, hi)
        intervals[2 * x] = OmegaInterval.clipped(*image)
    return tuple(intervals), tuple(maps)


def exact_iv_omega_intervals(q):
    """Per-cell omega intervals under the exact IV, plus the two Dirac maps.

    The interval of an (x,0) cell is the image of the (x,1) interval.
    """
    return _dirac_region(q, lambda x, a, b, m0, m1: exact_iv_arrays(a, b, m0, m1))


def posbias_omega_floor(q):
    """Minimum omega consistent with positive missing-data bias"""
    return float(posbias_floor_array(q.q11, q.q0dot))


def exact_iv_posbias_intervals(q):
    """Per-cell omega intervals under the exact IV plus positive bias"""
    def interval(x, a, b, m0, m1):
        return exact_iv_posbias_arrays(a, b, m0, m1, posbias_omega_floor(q[2 * x + 1]))

    intervals, maps = _dirac_region(q, interval)
    return intervals


def imperfect_iv_omega_bounds(q_pair, t_l, t_h):
    """Bounds on (omega_{x,0}, omega_{x,1}) for one stratum's (z=0, z=1) cells"""
    if not 0 < t_l < t_h:
        raise ValueError("Thresholds must satisfy 0 < t_l < t_h")
    low, high = q_pair
    lo0, hi0, lo1, hi1 = (float(v) for v in threshold_iv_arrays(
        low.q11, high.q11, low.q0dot, high.q0dot, t_l, t_h))
    return OmegaInterval.clipped(lo0, hi0), OmegaInterval.clipped(lo1, hi1)


def assumption_omega_intervals(q, spec):
    """Per-cell omega intervals implied by an assumption set"""
    if spec.kind == 'ExactIV':
        return exact_iv_omega_intervals(q)[0]
    if spec.kind == 'ExactIVPosBias':
        return exact_iv_posbias_intervals(q)
    if spec.kind == 'ThresholdIV':
        return (*imperfect_iv_omega_bounds(q[0:2], spec.t_l, spec.t_h),
                *imperfect_iv_omega_bounds(q[2:4], spec.t_l, spec.t_h))
    return tuple(OmegaInterval(0.0, 1.0) for _ in CELLS)


def assumption_psi_bounds(q, qz, spec):
    """Risk-difference bounds under an assumption set; None when infeasible.

    Exact for the exact-IV kinds, where each stratum's mean is linear in
    omega_{x,1}; outer bounds for ThresholdIV.
    """
    if spec.kind in ('ExactIV', 'ExactIVPosBias'):
        intervals = assumption_omega_intervals(q, spec)
        if not all(i.feasible for i in intervals):
            return None
        ranges = []
        for x in (0, 1):
            _, b, _, m1 = _stratum(q, x)
            omega1 = intervals[2 * x + 1]
            ranges.append((b + m1 * omega1.lo, b + m1 * omega1.hi))
        (lo0, hi0), (lo1, hi1) = ranges
        return lo1 - hi0, hi1 - lo0

    if spec.kind == 'ThresholdIV':
        intervals = assumption_omega_intervals(q, spec)
        if not all(i.feasible for i in intervals):
            return None
        p_lo = [cell.q11 + cell.q0dot * i.lo for cell, i in zip(q, intervals)]
        p_hi = [cell.q11 + cell.q0dot * i.hi for cell, i in zip(q, intervals)]
        w = qz.qz
        lower = (w * p_lo[3] + (1 - w) * p_lo[2]) - (w * p_hi[1] + (1 - w) * p_hi[0])
        upper = (w * p_hi[3] + (1 - w) * p_hi[2]) - (w * p_lo[1] + (1 - w) * p_lo[0])
        return lower, upper

    return psi_bounds(q, qz if isinstance(qz, ZMarginParam) else ZMarginParam(qz))
