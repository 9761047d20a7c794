"""Binomial decision errors, Wilson intervals and plug-in mutual information."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence


def _log_binom_pmf(k: int, n: int, p: float) -> float:
    return (
        math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        + k * math.log(p) + (n - k) * math.log1p(-p)
    )


def binomial_tail(r: int, p: float, k_min: int, k_max: int) -> float:
    """P(k_min <= Binomial(r, p) <= k_max) by direct summation of the pmf."""
    k_min, k_max = max(k_min, 0), min(k_max, r)
    if k_min > k_max:
        return 0.0
    if p <= 0.0:
        return 1.0 if k_min == 0 else 0.0
    if p >= 1.0:
        return 1.0 if k_max == r else 0.0
    logs = [_log_binom_pmf(k, r, p) for k in range(k_min, k_max + 1)]
    top = max(logs)
    return min(1.0, math.exp(top) * math.fsum(math.exp(x - top) for x in logs))


def threshold_count(r: int, t: float) -> int:
    """Smallest count k whose fraction k/r is >= t."""
    # same float comparison as the decoder, so both agree at the boundary
    k = math.ceil(r * t)
    while k > 0 and (k - 1) / r >= t:
        k -= 1
    while k <= r and k / r < t:
        k += 1
    return k


def binomial_error_bound(r: int, t: float, p_true: float) -> float:
    """Exact probability that the observed fraction lands on the wrong side of ``t``.

    Fractions below ``t`` decide for the low hypothesis, fractions at or
    above it for the high one. A true rate below ``t`` errs when the
    fraction reaches ``t``; a true rate at or above ``t`` errs when it
    falls below.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if not (0 < t < 1 and 0 < p_true < 1):
        raise ValueError("t and p_true must lie in (0, 1)")
    k_t = threshold_count(r, t)
    if p_true < t:
        return binomial_tail(r, p_true, k_t, r)
    return binomial_tail(r, p_true, 0, k_t - 1)


def hoeffding_bound(r: int, gap: float) -> float:
    """exp(-2 r gap^2): deviation bound of a mean of r bounded variables by ``gap``."""
    return math.exp(-2 * r * gap * gap)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n >= 1")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo, hi = centre - half, centre + half
    # exact endpoints at the boundaries; keeps the point estimate inside
    if k == 0:
        lo = 0.0
    if k == n:
        hi = 1.0
    return max(0.0, min(lo, phat)), min(1.0, max(hi, phat))


def entropy_bits(probs: Sequence[float]) -> float:
    return -sum(p * math.log2(p) for p in probs if p > 0)


def mutual_information_estimate(sent: Sequence[int], decoded: Sequence[int]) -> float:
    """Plug-in mutual information (bits) of the empirical 2x2 joint distribution."""
    if len(sent) != len(decoded):
        raise ValueError("sent and decoded differ in length")
    n = len(sent)
    if n < 1:
        raise ValueError("need at least one bit")
    counts = [[0, 0], [0, 0]]
    for a, b in zip(sent, decoded):
        counts[int(a)][int(b)] += 1
    row = [sum(counts[a]) / n for a in (0, 1)]
    col = [(counts[0][b] + counts[1][b]) / n for b in (0, 1)]
    mi = 0.0
    for a in (0, 1):
        for b in (0, 1):
            if counts[a][b]:
                pab = counts[a][b] / n
                mi += pab * math.log2(pab / (row[a] * col[b]))
    return max(0.0, mi)


def binary_channel_mi(prior_one: float, p_one_given_one: float, p_one_given_zero: float) -> float:
    """I(X;Y) in bits for a binary channel with P(X=1) = ``prior_one``."""
    q = prior_one
    py1 = q * p_one_given_one + (1 - q) * p_one_given_zero
    hy = entropy_bits([py1, 1 - py1])
    hyx = q * entropy_bits([p_one_given_one, 1 - p_one_given_one]) + (1 - q) * entropy_bits(
        [p_one_given_zero, 1 - p_one_given_zero]
    )
    return max(0.0, hy - hyx)


def binary_channel_capacity(p_one_given_one: float, p_one_given_zero: float) -> float:
    """Capacity (bits/use) of a binary-input binary-output channel, maximized over the input prior."""
    from scipy.optimize import minimize_scalar

    if abs(p_one_given_one - p_one_given_zero) < 1e-15:
        return 0.0
    res = minimize_scalar(
        lambda q: -binary_channel_mi(q, p_one_given_one, p_one_given_zero),
        bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10},
    )
    return max(0.0, -float(res.fun))


@dataclass
class ChannelReport:
    n_bits: int
    ber: float
    mutual_information: float
    fractions: list[float] = field(default_factory=list)
    ci_95: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.ber <= 1:
            raise ValueError("ber outside [0, 1]")
        if not 0 <= self.mutual_information <= 1 + 1e-12:
            raise ValueError("mutual information outside [0, 1]")


def channel_report(sent: Sequence[int], decoded: Sequence[int],
                   counts: Sequence[tuple[int, int]] = ()) -> ChannelReport:
    """Summarize a run: BER, plug-in MI, and per-bit different-port fractions with 95% intervals.

    ``counts`` holds (n_diff, n_same) per decoded bit, if available.
    """
    n = len(sent)
    if n != len(decoded) or n == 0:
        raise ValueError("need equal-length, non-empty bit lists")
    errors = sum(int(a) != int(b) for a, b in zip(sent, decoded))
    fractions = []
    cis = []
    for n_diff, n_same in counts:
        total = n_diff + n_same
        fractions.append(n_diff / total)
        cis.append(wilson_interval(n_diff, total))
    return ChannelReport(n, errors / n, mutual_information_estimate(sent, decoded), fractions, cis)
