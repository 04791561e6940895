"""Energy-detection sensing probabilities and cluster sizing.

Conventions
-----------
An energy detector integrates ``u`` complex samples.  With unit noise
variance per real dimension the normalized test statistic is chi-square
with ``2u`` degrees of freedom under noise only, and noncentral
chi-square with noncentrality ``2*snr`` when the signal is present.
Hence

    P_d = Q_u(sqrt(2*snr), sqrt(threshold))
    P_f = Gamma(u, threshold/2) / Gamma(u)

``snr`` is always a linear power ratio here; dB conversion happens at the
configuration boundary (see :func:`db_to_linear`).

All probabilities are computed to an absolute tolerance of ``1e-9`` or
better (in practice around 1e-15).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

#: absolute tolerance promised for the series evaluations below
SERIES_TOLERANCE = 1e-9
# truncation target; far below SERIES_TOLERANCE so rounding dominates
_TAIL_EPS = 1e-17
_MAX_TERMS = 100_000


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def _check_order(order: int) -> None:
    if isinstance(order, bool) or int(order) != order or order < 1:
        raise ValueError(f"order must be a positive integer, got {order!r}")


def _poisson_pmf(k: int, mean: float) -> float:
    if mean == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-mean + k * math.log(mean) - math.lgamma(k + 1))


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def linear_to_db(snr_linear: float) -> float:
    return 10.0 * math.log10(snr_linear)


@dataclass(frozen=True)
class SensingParams:
    snr_linear: float
    energy_threshold: float
    num_samples: int

    def __post_init__(self) -> None:
        _check_finite(snr_linear=self.snr_linear, energy_threshold=self.energy_threshold)
        if self.snr_linear <= 0:
            raise ValueError("snr_linear must be > 0")
        if self.energy_threshold < 0:
            raise ValueError("energy_threshold must be >= 0")
        _check_order(self.num_samples)


@dataclass(frozen=True)
class PerformanceRequirement:
    """Global sensing targets for one cluster.

    ``per_node_false_alarm_bound`` is the per-node false-alarm value used
    to size the cluster; the two global fields are the OR-fused limits.
    """

    min_global_detection: float
    max_global_false_alarm: float
    per_node_false_alarm_bound: float

    def __post_init__(self) -> None:
        for name in ("min_global_detection", "max_global_false_alarm", "per_node_false_alarm_bound"):
            v = getattr(self, name)
            _check_finite(**{name: v})
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")


def regularized_upper_gamma(order: int, x: float) -> float:
    """Gamma(order, x) / Gamma(order) for integer ``order``.

    Uses the finite Poisson sum ``exp(-x) * sum_{k<order} x**k / k!``; every
    term is positive so there is no cancellation.
    """
    _check_order(order)
    _check_finite(x=x)
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 1.0
    total = 0.0
    for k in range(int(order)):
        total += _poisson_pmf(k, x)
    return min(1.0, total)


def _regularized_lower_gamma(order: int, x: float) -> float:
    # exp(-x) * sum_{k>=order} x**k / k!, positive terms, ratio test on x/(k+1)
    if x == 0.0:
        return 0.0
    k = int(order)
    term = _poisson_pmf(k, x)
    total = term
    for _ in range(_MAX_TERMS):
        k += 1
        term *= x / k
        total += term
        if k > x:
            ratio = x / (k + 1)
            if term * ratio / (1.0 - ratio) < _TAIL_EPS:
                break
    return min(1.0, total)


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q-function ``Q_order(a, b)``.

    Evaluated as the survival function of a noncentral chi-square with
    ``2*order`` degrees of freedom and noncentrality ``a**2`` at ``b**2``:
    a Poisson(a**2/2) mixture of regularized gamma tails.  The series is
    truncated with a term-ratio bound on the remaining Poisson mass.

    Beyond the distribution mean (large ``b``) the upper tails are summed
    directly; otherwise the complement ``1 - sum w_j P(order+j, b**2/2)``
    is used so the summed quantities stay small in both regimes.
    """
    _check_order(order)
    _check_finite(a=a, b=b)
    if a < 0 or b < 0:
        raise ValueError("a and b must be >= 0")
    if b == 0.0:
        return 1.0
    lam = 0.5 * a * a
    y = 0.5 * b * b
    m = int(order)
    upper = y > m + lam

    # gamma tail at the first order, then walk the order up by one per term
    if upper:
        g = regularized_upper_gamma(m, y)
    else:
        g = _regularized_lower_gamma(m, y)
    acc = 0.0
    j = 0
    for _ in range(_MAX_TERMS):
        w = _poisson_pmf(j, lam)
        acc += w * g
        # remaining Poisson mass; only valid once the weights are decreasing
        if j + 1 > lam:
            ratio = lam / (j + 1)
            if w * ratio / (1.0 - ratio) < _TAIL_EPS:
                break
        step = _poisson_pmf(m + j, y)
        g = g + step if upper else max(0.0, g - step)
        j += 1
    else:  # pragma: no cover - only reachable for absurd noncentrality
        raise ArithmeticError("marcum_q series did not converge")

    q = acc if upper else 1.0 - acc
    return min(1.0, max(0.0, q))


def node_detection_prob(p: SensingParams) -> float:
    return marcum_q(p.num_samples, math.sqrt(2.0 * p.snr_linear), math.sqrt(p.energy_threshold))


def node_false_alarm_prob(energy_threshold: float, num_samples: int) -> float:
    _check_finite(energy_threshold=energy_threshold)
    if energy_threshold < 0:
        raise ValueError("energy_threshold must be >= 0")
    return regularized_upper_gamma(num_samples, energy_threshold / 2.0)


@dataclass(frozen=True)
class FusionInput:
    per_node_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.per_node_probs)
        object.__setattr__(self, "per_node_probs", probs)
        if not probs:
            raise ValueError("fusion needs at least one node")
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of [0, 1]: {p!r}")


def or_fusion(f: FusionInput | Iterable[float]) -> float:
    """Global probability that at least one node reports presence."""
    if not isinstance(f, FusionInput):
        f = FusionInput(tuple(f))
    return 1.0 - math.prod(1.0 - p for p in f.per_node_probs)


def meets_requirement(qd: float, qf: float, req: PerformanceRequirement) -> bool:
    return qd >= req.min_global_detection and qf <= req.max_global_false_alarm


def cluster_size_eq4(req: PerformanceRequirement) -> int:
    """Closed-form cluster size ``ceil(log(1 - Qf_max) / log(1 - Pf_max))``.

    The ratio is snapped to the nearest integer when it is within
    floating-point noise of one, so an exact ratio of 2 does not round up
    to 3.  Note the ceiling can exceed the largest size that still honours
    the false-alarm limit; :func:`max_size_by_search` gives that value.
    """
    num = math.log1p(-req.max_global_false_alarm)
    den = math.log1p(-req.per_node_false_alarm_bound)
    if num == 0.0 or den == 0.0:
        raise ValueError("degenerate logarithm in cluster sizing")
    ratio = num / den
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-12 * max(1.0, abs(ratio)):
        ratio = float(nearest)
    return max(1, math.ceil(ratio))


def within_false_alarm(per_node: float, size: int, qf_max: float) -> bool:
    """True when ``size`` identical nodes keep the fused false alarm <= qf_max.

    Compared as (1 - Pf)^S >= 1 - Qf_max: forming 1 - (1 - Pf) first can
    round a single node with Pf == Qf_max just above the limit.
    """
    return (1.0 - per_node) ** size >= 1.0 - qf_max


def max_size_by_search(req: PerformanceRequirement, limit: int = 1_000_000) -> int:
    """Largest S whose OR-fused false alarm stays within the limit (0 if none)."""
    pf = req.per_node_false_alarm_bound
    qf_max = req.max_global_false_alarm
    size = 0
    while size < limit:
        if not within_false_alarm(pf, size + 1, qf_max):
            return size
        size += 1
    raise ValueError(f"cluster size search exceeded {limit}")


def fused_false_alarm(per_node: float, size: int) -> float:
    """Global false alarm of ``size`` identical nodes (0 for an empty cluster)."""
    if size <= 0:
        return 0.0
    return or_fusion([per_node] * size)


def sizing_report(req: PerformanceRequirement, per_node_detection: Sequence[float] | None = None) -> dict:
    """Everything the ``size-cluster`` command prints, as plain data."""
    closed = cluster_size_eq4(req)
    search = max_size_by_search(req)
    pf = req.per_node_false_alarm_bound
    out = {
        "closed_form_size": closed,
        "closed_form_qf": fused_false_alarm(pf, closed),
        "search_size": search,
        "search_qf": fused_false_alarm(pf, search),
    }
    out["closed_form_satisfies_qf"] = within_false_alarm(pf, closed, req.max_global_false_alarm)
    out["search_satisfies_qf"] = within_false_alarm(pf, search, req.max_global_false_alarm)
    out["sizes_differ"] = closed != search
    if per_node_detection:
        qd = or_fusion(per_node_detection)
        out["qd"] = qd
        out["qd_satisfies"] = qd >= req.min_global_detection
        # the constraint pair is judged with the supplied detection list and
        # the searched (feasible) false-alarm size
        out["meets_requirement"] = meets_requirement(qd, out["search_qf"], req)
    return out
