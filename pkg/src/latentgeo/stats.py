"""Coefficient of variation, Student-t distribution and the paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateTestError, UndefinedCVError

_TINY = 1e-300


def coefficient_of_variation(samples):
    """Sample standard deviation (n - 1 divisor) over the mean."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise UndefinedCVError(f"need at least 2 samples for a CV, got {x.size}")
    mean = x.mean()
    if mean == 0:
        raise UndefinedCVError("CV is undefined for zero-mean samples")
    return float(x.std(ddof=1) / mean)


def _beta_continued_fraction(a, b, x, eps=1e-16, max_iter=500):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ContractError("incomplete beta needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"incomplete beta argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def t_sf(t, dof):
    """Upper tail P(T > t) of Student's t with `dof` degrees of freedom."""
    if dof <= 0:
        raise ContractError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    # for small |t| use the complementary argument to keep precision
    if t2 < dof:
        half = 0.5 * regularized_incomplete_beta(0.5, dof / 2.0, t2 / (dof + t2))
        tail = 0.5 - half
    else:
        tail = 0.5 * regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t, dof):
    return t_sf(-t, dof)


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: int
    p: float
    alternative: str
    mean_difference: float


def paired_t_test(a, b, alternative="greater"):
    """One-sided paired t-test on the differences ``a - b``.

    ``alternative="greater"`` tests whether the mean difference exceeds zero,
    so ``p = P(T > t)``; ``"less"`` gives ``P(T < t)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"paired samples need equal 1-D shapes, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ContractError("paired t-test needs at least two pairs")
    if alternative not in ("greater", "less"):
        raise ContractError(f"alternative must be 'greater' or 'less', not {alternative!r}")
    diff = a - b
    if not diff.any():
        raise DegenerateTestError("all paired differences are zero")
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        t = math.copysign(math.inf, mean)
    else:
        t = mean / (sd / math.sqrt(n))
    p = t_sf(t, n - 1) if alternative == "greater" else t_cdf(t, n - 1)
    return TTestResult(float(t), n - 1, float(min(max(p, 0.0), 1.0)), alternative, mean)
