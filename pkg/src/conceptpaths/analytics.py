"""Prevalence, rank-frequency, and novelty statistics over the corpus.

Prevalence of an item (concept or path) is ln(1 + frequency); the corpus
median splits items into low/high-prevalence regions. Rank-frequency curves
get an ordinary least-squares power-law fit in log-log space. Distribution
comparisons use the Mann-Whitney U test (midrank + tie-corrected normal
approximation, exact enumeration for small untied samples). Shares are kept
as exact rationals until rendered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .kgstore import ConceptPathRecord, InnovationAnnotation


class AnalyticsError(Exception):
    pass


@dataclass
class PrevalenceRecord:
    item_key: str
    kind: str  # "concept" | "path"
    frequency: int
    prevalence: float  # ln(1 + frequency)
    region: str = ""  # "low" | "high"


@dataclass(frozen=True)
class PowerLawFit:
    coefficient: float  # C in f(r) = C * r**a
    exponent: float  # a
    r_squared: float
    fit_range: tuple[int, int]


@dataclass(frozen=True)
class RankTestResult:
    u_statistic: float  # U of the first sample
    z_score: float
    p_value: float
    effect_size_r: float  # |z| / sqrt(n1 + n2)
    n1: int
    n2: int


@dataclass
class InnovationRates:
    rate_low: Optional[Fraction]
    rate_high: Optional[Fraction]
    share_of_innovative_in_low: Optional[Fraction]


def prevalence(frequency: int) -> float:
    """ln(1 + frequency); 0 maps to exactly 0."""
    if frequency < 0:
        raise AnalyticsError(f"negative frequency {frequency}")
    return math.log1p(frequency)


def prevalence_table(items: dict[str, int], kind: str) -> list[PrevalenceRecord]:
    """One record per distinct item with prevalence and low/high region assigned.

    Empty input yields an empty table (regions need a median, which needs at
    least one record).
    """
    records = [
        PrevalenceRecord(item_key=key, kind=kind, frequency=freq, prevalence=prevalence(freq))
        for key, freq in sorted(items.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    if records:
        median_split(records)
    return records


def median_split(records: list[PrevalenceRecord]) -> float:
    """Assign regions in place by the median-prevalence threshold; returns it.

    Threshold is the midpoint of the central two values for even n. A record
    is low iff its prevalence is strictly below the threshold, so an all-equal
    input lands entirely in the high region.
    """
    if not records:
        raise AnalyticsError("median_split requires at least one record")
    values = sorted(r.prevalence for r in records)
    n = len(values)
    if n % 2 == 1:
        threshold = values[n // 2]
    else:
        threshold = (values[n // 2 - 1] + values[n // 2]) / 2.0
    for r in records:
        r.region = "low" if r.prevalence < threshold else "high"
    return threshold


def rank_frequency(items: dict[str, int]) -> list[tuple[int, str, int]]:
    """(rank, item, frequency) with rank 1 = most frequent; ties break on key."""
    ordered = sorted(items.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(rank, key, freq) for rank, (key, freq) in enumerate(ordered, start=1)]


# ---------------------------------------------------------------------------
# Power-law fit
# ---------------------------------------------------------------------------


def fit_power_law(
    rank_frequency_pairs: Sequence[tuple[int, float]],
    fit_range: Optional[tuple[int, int]] = None,
) -> PowerLawFit:
    """Least-squares fit of f(r) = C * r**a on (ln r, ln f).

    Zero-frequency ranks are excluded before fitting. R-squared comes from
    the log-log residuals; a zero total sum of squares (flat data) counts as
    an exact fit by convention.
    """
    pairs = [(r, f) for r, f in rank_frequency_pairs if f > 0]
    if fit_range is not None:
        lo, hi = fit_range
        pairs = [(r, f) for r, f in pairs if lo <= r <= hi]
    else:
        if pairs:
            fit_range = (min(r for r, _ in pairs), max(r for r, _ in pairs))
        else:
            fit_range = (0, 0)
    if len(pairs) < 3:
        raise AnalyticsError(f"power-law fit needs at least 3 positive-frequency points, got {len(pairs)}")
    x = np.log(np.array([r for r, _ in pairs], dtype=float))
    y = np.log(np.array([f for _, f in pairs], dtype=float))
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise AnalyticsError("degenerate fit: all ranks equal")
    slope = float(np.sum((x - x.mean()) * (y - y.mean()))) / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    residuals = y - (intercept + slope * x)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(
        coefficient=math.exp(intercept), exponent=slope, r_squared=r_squared, fit_range=fit_range
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------


def _midranks(pooled: Sequence[float]) -> list[float]:
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        midrank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = midrank
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def _u_count(m: int, n: int, u: int) -> int:
    # Number of rank arrangements of m-vs-n samples with U statistic u.
    if u < 0:
        return 0
    if m == 0 or n == 0:
        return 1 if u == 0 else 0
    return _u_count(m - 1, n, u - n) + _u_count(m, n - 1, u)


def _exact_two_sided_p(n1: int, n2: int, u1: float) -> float:
    u_min = int(round(min(u1, n1 * n2 - u1)))
    total = math.comb(n1 + n2, n1)
    cum = sum(_u_count(n1, n2, u) for u in range(u_min + 1))
    return min(1.0, 2.0 * cum / total)


def mann_whitney(sample_a: Sequence[float], sample_b: Sequence[float]) -> RankTestResult:
    """Two-sided Mann-Whitney U test.

    U is the first sample's statistic from midranks; the normal approximation
    carries the tie correction in its variance and no continuity correction.
    For samples of size <= 20 with no ties the p-value is exact (enumeration
    of the U distribution). Effect size r = |z| / sqrt(n1 + n2).
    """
    n1, n2 = len(sample_a), len(sample_b)
    if n1 == 0 or n2 == 0:
        raise AnalyticsError("mann_whitney requires non-empty samples")
    pooled = list(sample_a) + list(sample_b)
    ranks = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0

    n = n1 + n2
    tie_counts: dict[float, int] = {}
    for v in pooled:
        tie_counts[v] = tie_counts.get(v, 0) + 1
    tie_term = sum(t**3 - t for t in tie_counts.values())
    variance = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    mean_u = n1 * n2 / 2.0
    if variance > 0:
        z = (u1 - mean_u) / math.sqrt(variance)
    else:
        z = 0.0

    has_ties = any(t > 1 for t in tie_counts.values())
    if n1 <= 20 and n2 <= 20 and not has_ties:
        p = _exact_two_sided_p(n1, n2, u1)
    else:
        p = math.erfc(abs(z) / math.sqrt(2.0))
    return RankTestResult(
        u_statistic=u1,
        z_score=z,
        p_value=p,
        effect_size_r=abs(z) / math.sqrt(n),
        n1=n1,
        n2=n2,
    )


def brute_force_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Pairwise-comparison U (ties count one half); oracle for the midrank path."""
    u = 0.0
    for a in sample_a:
        for b in sample_b:
            if a > b:
                u += 1.0
            elif a == b:
                u += 0.5
    return u


# ---------------------------------------------------------------------------
# Region shares and innovation rates
# ---------------------------------------------------------------------------


def region_share(records: Iterable[PrevalenceRecord], predicate_keys: set[str]) -> Optional[Fraction]:
    """Share of the predicate item set that sits in the low region; None if empty."""
    total = 0
    low = 0
    for r in records:
        if r.item_key in predicate_keys:
            total += 1
            if r.region == "low":
                low += 1
    if total == 0:
        return None
    return Fraction(low, total)


def split_samples(
    records: Iterable[PrevalenceRecord],
    predicate_keys: set[str],
    per_occurrence: bool = False,
) -> tuple[list[float], list[float]]:
    """Prevalence samples for predicate vs non-predicate items.

    Per-distinct-item by default; ``per_occurrence`` repeats each item's
    prevalence by its frequency.
    """
    inside: list[float] = []
    outside: list[float] = []
    for r in records:
        reps = r.frequency if per_occurrence else 1
        (inside if r.item_key in predicate_keys else outside).extend([r.prevalence] * reps)
    return inside, outside


def innovative_path_instances(
    path_records: Iterable[ConceptPathRecord], annotations: Iterable[InnovationAnnotation]
) -> set[int]:
    """Indexes of path instances that are innovative.

    A path instance is innovative iff, within its own work, at least one of
    its nodes carries an innovation annotation. Cross-work annotations never
    mark a path.
    """
    annotated: set[tuple[str, str]] = {(a.work_id, a.concept_id) for a in annotations}
    marked: set[int] = set()
    for i, p in enumerate(path_records):
        if any((p.work_id, node) in annotated for node in p.nodes):
            marked.add(i)
    return marked


def innovation_rate(
    path_records: list[ConceptPathRecord],
    annotations: Iterable[InnovationAnnotation],
    prevalence_records: Iterable[PrevalenceRecord],
) -> InnovationRates:
    """Innovation rate per prevalence region over path instances.

    rate_X = innovative instances in region X / instances in region X; a
    region with no instances has no rate (absent, not zero). Also reports the
    share of all innovative instances that fall in the low region.
    """
    region_of_key = {r.item_key: r.region for r in prevalence_records}
    innovative = innovative_path_instances(path_records, annotations)
    counts = {"low": 0, "high": 0}
    innov = {"low": 0, "high": 0}
    for i, p in enumerate(path_records):
        region = region_of_key.get(p.key)
        if region is None:
            continue
        counts[region] += 1
        if i in innovative:
            innov[region] += 1

    def rate(region: str) -> Optional[Fraction]:
        if counts[region] == 0:
            return None
        return Fraction(innov[region], counts[region])

    total_innov = innov["low"] + innov["high"]
    share = Fraction(innov["low"], total_innov) if total_innov else None
    return InnovationRates(rate_low=rate("low"), rate_high=rate("high"), share_of_innovative_in_low=share)


# ---------------------------------------------------------------------------
# Kernel density estimation
# ---------------------------------------------------------------------------


def kde_series(values: Sequence[float], grid: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE sampled on a grid, Silverman bandwidth.

    h = 0.9 * min(sigma, IQR/1.34) * n**(-1/5), falling back to the positive
    candidate when the IQR degenerates. Zero-variance input is an error
    (a histogram is the right tool there).
    """
    v = np.asarray(values, dtype=float)
    x = np.asarray(grid, dtype=float)
    n = v.size
    if n < 2:
        raise AnalyticsError("kde_series needs at least 2 values")
    sigma = float(np.std(v, ddof=1))
    if sigma == 0.0:
        raise AnalyticsError("zero variance: use a histogram instead of a KDE")
    q75, q25 = np.percentile(v, [75, 25])
    iqr_scale = (q75 - q25) / 1.34
    scale = min(sigma, iqr_scale) if iqr_scale > 0 else sigma
    h = 0.9 * scale * n ** (-0.2)
    diffs = (x[:, None] - v[None, :]) / h
    density = np.exp(-0.5 * diffs**2).sum(axis=1) / (n * h * math.sqrt(2.0 * math.pi))
    return x, density


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------


def write_rank_frequency_csv(path: str, ranked: Iterable[tuple[int, str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "concept_id", "frequency"])
        writer.writerows(ranked)


def write_prevalence_csv(path: str, records: Iterable[PrevalenceRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_key", "kind", "frequency", "prevalence", "region"])
        for r in records:
            writer.writerow([r.item_key, r.kind, r.frequency, repr(r.prevalence), r.region])


def write_kde_csv(path: str, x: np.ndarray, density: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "density"])
        for xi, di in zip(x, density):
            writer.writerow([repr(float(xi)), repr(float(di))])


def render_share(share: Optional[Fraction], digits: int = 4) -> Optional[float]:
    """Render an exact share to a float with the given significant digits."""
    if share is None:
        return None
    return float(f"{float(share):.{digits}g}")
