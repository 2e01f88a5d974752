"""Paired t-tests, Pearson correlation and significance markers.

The Student-t distribution is evaluated through the regularized incomplete
beta function (Lentz continued fraction), so no SciPy dependency is needed at
runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import PromptScheme

_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for a Student-t variable with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return betainc(df / 2.0, 0.5, x)


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t >= 0 else tail


def t_pdf(t: float, df: float) -> float:
    log_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(log_c - (df + 1) / 2 * math.log1p(t * t / df))


@dataclass(frozen=True)
class PairedSample:
    labels: tuple[str, ...]
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        for name in ("labels", "a", "b"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.labels) == len(self.a) == len(self.b):
            raise ValueError("labels, a and b must have equal lengths")
        if len(self.a) < 2:
            raise ValueError("a paired sample needs at least two pairs")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate unit labels")

    @classmethod
    def align(cls, a: Mapping[str, float], b: Mapping[str, float]) -> "PairedSample":
        if set(a) != set(b):
            raise ValueError(f"unaligned units: {sorted(set(a) ^ set(b))[:10]}")
        labels = sorted(a)
        return cls(tuple(labels), tuple(a[k] for k in labels), tuple(b[k] for k in labels))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    mean_diff: float
    degenerate: bool = False


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _var(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def paired_t_test(sample: PairedSample) -> TTestResult:
    """Two-sided paired t-test of ``a`` against ``b``.

    When every difference is identical the statistic is undefined; the result
    is flagged ``degenerate`` with NaN ``t`` and ``p``.
    """
    d = [x - y for x, y in zip(sample.a, sample.b)]
    n = len(d)
    mean = _mean(d)
    var = _var(d)
    if var == 0.0 or max(d) == min(d):
        return TTestResult(math.nan, math.nan, n - 1, mean, degenerate=True)
    t = mean * math.sqrt(n) / math.sqrt(var)
    return TTestResult(t, t_sf_two_sided(t, n - 1), n - 1, mean)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Unpaired two-sided t-test with Welch-Satterthwaite degrees of freedom."""
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two values")
    va, vb = _var(a) / len(a), _var(b) / len(b)
    diff = _mean(a) - _mean(b)
    if va + vb == 0:
        return TTestResult(math.nan, math.nan, math.nan, diff, degenerate=True)
    t = diff / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return TTestResult(t, t_sf_two_sided(t, df), df, diff)


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int
    degenerate: bool = False


def pearson_p_value(r: float, n: int) -> float:
    """Two-sided p-value of a Pearson coefficient ``r`` computed from ``n`` pairs."""
    if n < 3:
        raise ValueError("need at least three pairs")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t_sf_two_sided(t, n - 2)


def pearson(x: Sequence[float], y: Sequence[float]) -> PearsonResult:
    if len(x) != len(y):
        raise ValueError("x and y must have equal lengths")
    n = len(x)
    if n < 3:
        raise ValueError("need at least three pairs")
    mx, my = _mean(x), _mean(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(v * v for v in dx)
    syy = math.fsum(v * v for v in dy)
    if sxx == 0 or syy == 0:
        return PearsonResult(math.nan, math.nan, n, degenerate=True)
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) > 1.0 - 1e-12:
        r = math.copysign(1.0, r)
    return PearsonResult(r, pearson_p_value(r, n), n)


# markers attached when a scheme beats the named baseline
MARKERS = {
    PromptScheme.STANDARD: "*",
    PromptScheme.AT_STANDARD: "†",
    PromptScheme.COT: "Δ",
}


def significance_markers(
    scores: Mapping[PromptScheme, Mapping[str, float]],
    alpha: float = 0.01,
    test: str = "paired",
) -> dict[PromptScheme, str]:
    """Marker string per scheme: one symbol per baseline it significantly beats.

    A marker needs a positive mean improvement and a t-test p-value below
    ``alpha``. ``test`` is ``"paired"`` (default) or ``"welch"`` (unpaired).
    Degenerate tests (constant differences) never mark.
    """
    if test not in ("paired", "welch"):
        raise ValueError("test must be 'paired' or 'welch'")
    scores = {PromptScheme.parse(k): v for k, v in scores.items()}
    units = None
    for scheme, per_unit in scores.items():
        if units is None:
            units = set(per_unit)
        elif set(per_unit) != units:
            raise ValueError(f"{scheme.label} is scored on a different set of units")
    out: dict[PromptScheme, str] = {}
    for scheme, per_unit in scores.items():
        marks = ""
        for baseline, symbol in MARKERS.items():
            if baseline is scheme or baseline not in scores:
                continue
            if len(per_unit) < 2:
                continue
            sample = PairedSample.align(per_unit, scores[baseline])
            res = paired_t_test(sample) if test == "paired" else welch_t_test(sample.a, sample.b)
            if not res.degenerate and res.mean_diff > 0 and res.p < alpha:
                marks += symbol
        out[scheme] = marks
    return out
