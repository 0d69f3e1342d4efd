"""
Aalen-Johansen cumulative incidence for the two competing outcomes (death,
discharge), overall survival, pointwise intervals and median length of stay.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import InputValidationError
from models import AnalysisRecord, EventCause

logger = logging.getLogger(__name__)

CAUSES = (EventCause.DEATH, EventCause.DISCHARGE)
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class SubjectSample:
    """Per-subject observed times, causes and weights in canonical order"""
    times: np.ndarray
    events: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_arrays(cls, times, events, weights=None) -> "SubjectSample":
        times = np.asarray(times, dtype=float)
        events = np.asarray(events, dtype=np.int64)
        weights = np.ones_like(times) if weights is None else np.asarray(weights, dtype=float)
        if not (len(times) == len(events) == len(weights)):
            raise InputValidationError("times, events and weights differ in length")
        if np.any(times < 0) or np.any(weights <= 0):
            raise InputValidationError("times must be non-negative and weights positive")
        if np.any((events < 0) | (events > 2)):
            raise InputValidationError("event codes must be 0, 1 or 2")
        # Canonical order makes every sum independent of record order
        order = np.lexsort((weights, events, times))
        return cls(times=times[order], events=events[order], weights=weights[order])

    @classmethod
    def from_records(cls, records: Iterable[AnalysisRecord]) -> "SubjectSample":
        records = list(records)
        return cls.from_arrays(
            [record.time_days for record in records],
            [int(record.event) for record in records],
            [record.weight for record in records],
        )

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class EventTable:
    """
    Risk-set bookkeeping at the distinct event times.

    censored[j] counts censorings in [t_j, t_{j+1}); censorings after the last
    event time are in the last entry, censorings before the first event time
    are only reflected in at_risk. Subjects censored at an event time stay at
    risk through that time.
    """
    times: np.ndarray
    d_death: np.ndarray
    d_discharge: np.ndarray
    censored: np.ndarray
    at_risk: np.ndarray
    n_total: float
    sample: Optional[SubjectSample] = None

    def events(self, cause: EventCause) -> np.ndarray:
        if cause == EventCause.DEATH:
            return self.d_death
        if cause == EventCause.DISCHARGE:
            return self.d_discharge
        raise InputValidationError(f"not an event cause: {cause!r}")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SurvivalCurve:
    """Overall event-free probability, right-continuous step function"""
    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        index = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if index < 0 else float(self.values[index])


@dataclass(frozen=True)
class CifCurve:
    """Cumulative incidence of one cause with pointwise variance and 95% interval"""
    cause: EventCause
    times: np.ndarray
    values: np.ndarray
    variance: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    event_counts: np.ndarray                 # Events of this cause at each grid time
    source: Optional[SubjectSample] = None   # Subjects behind the curve, for resampling

    def _index(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def value_at(self, t: float) -> float:
        index = self._index(t)
        return 0.0 if index < 0 else float(self.values[index])

    def interval_at(self, t: float) -> Tuple[float, float]:
        index = self._index(t)
        if index < 0:
            return 0.0, 0.0
        return float(self.ci_lower[index]), float(self.ci_upper[index])

    @property
    def total(self) -> float:
        return float(self.values[-1]) if len(self.values) else 0.0


@dataclass(frozen=True)
class MedianLosEstimate:
    """Median length of stay before one outcome"""
    cause: EventCause
    median_days: float
    ci_lower: float
    ci_upper: float


def _as_sample(data: Union[SubjectSample, Sequence[AnalysisRecord]]) -> SubjectSample:
    if isinstance(data, SubjectSample):
        return data
    return SubjectSample.from_records(data)


def _aggregate(unique_count: int, inverse: np.ndarray, events: np.ndarray, weights: np.ndarray):
    """Weighted death, discharge and censoring totals per distinct time"""
    death = np.bincount(inverse, weights=weights * (events == EventCause.DEATH), minlength=unique_count)
    discharge = np.bincount(inverse, weights=weights * (events == EventCause.DISCHARGE), minlength=unique_count)
    censored = np.bincount(inverse, weights=weights * (events == EventCause.CENSORED), minlength=unique_count)
    return death, discharge, censored


def _table_from_totals(unique_times, death, discharge, censored, sample=None) -> EventTable:
    totals = death + discharge + censored
    at_risk_all = np.cumsum(totals[::-1])[::-1]
    is_event = (death + discharge) > 0
    event_times = unique_times[is_event]

    # Censorings belong to the most recent event time at or before them
    owner = np.searchsorted(event_times, unique_times, side="right") - 1
    keep = owner >= 0
    censored_after = np.bincount(owner[keep], weights=censored[keep], minlength=len(event_times))

    return EventTable(
        times=event_times,
        d_death=death[is_event],
        d_discharge=discharge[is_event],
        censored=censored_after,
        at_risk=at_risk_all[is_event],
        n_total=float(totals.sum()),
        sample=sample,
    )


def build_event_table(records: Union[SubjectSample, Sequence[AnalysisRecord]]) -> EventTable:
    """
    Tabulate events and risk sets at the distinct event times.

    Args:
        records: Analysis records (or an already built sample)

    Returns:
        EventTable keeping a reference to its subjects for resampling
    """
    sample = _as_sample(records)
    if len(sample) == 0:
        raise InputValidationError("cannot build an event table from no records")
    unique_times, inverse = np.unique(sample.times, return_inverse=True)
    death, discharge, censored = _aggregate(len(unique_times), inverse, sample.events, sample.weights)
    return _table_from_totals(unique_times, death, discharge, censored, sample)


def _survival_and_increments(table: EventTable) -> Tuple[np.ndarray, np.ndarray]:
    """Product-limit survival and S(t_{j-1}) at every grid time"""
    removal = (table.d_death + table.d_discharge) / table.at_risk
    survival = np.cumprod(1.0 - removal)
    survival_before = np.concatenate(([1.0], survival[:-1]))
    return survival, survival_before


def _cif_variance(table: EventTable, cause: EventCause, cif: np.ndarray, survival_before: np.ndarray) -> np.ndarray:
    """Aalen-type plug-in variance of the cumulative incidence at every grid time"""
    n = table.at_risk
    d = table.d_death + table.d_discharge
    d_k = table.events(cause)

    with np.errstate(divide="ignore", invalid="ignore"):
        usable = n > 1
        a = np.where(usable & (n > d), d / ((n - 1) * (n - d)), 0.0)
        b = np.where(usable, survival_before ** 2 * d_k * (n - d_k) / (n ** 2 * (n - 1)), 0.0)
        c = np.where(usable, survival_before * d_k / (n * (n - 1)), 0.0)

    # Expand sum_{j<=m} (C_m - C_j)^2 a_j - 2 (C_m - C_j) c_j + b_j into running sums
    a_sum, ac_sum, acc_sum = np.cumsum(a), np.cumsum(a * cif), np.cumsum(a * cif ** 2)
    c_sum, cc_sum = np.cumsum(c), np.cumsum(c * cif)
    variance = (cif ** 2 * a_sum - 2 * cif * ac_sum + acc_sum
                + np.cumsum(b)
                - 2 * (cif * c_sum - cc_sum))
    return np.maximum(variance, 0.0)


def cloglog_interval(values: np.ndarray, variance: np.ndarray, z: float = Z_95) -> Tuple[np.ndarray, np.ndarray]:
    """Pointwise interval on the log(-log) scale, mapped back into [0, 1]"""
    values = np.asarray(values, dtype=float)
    lower, upper = values.copy(), values.copy()
    inside = (values > 0) & (values < 1) & (variance > 0)
    if np.any(inside):
        v = values[inside]
        spread = z * np.sqrt(variance[inside]) / (v * np.abs(np.log(v)))
        lower[inside] = v ** np.exp(spread)
        upper[inside] = v ** np.exp(-spread)
    return np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)


def aalen_johansen(table: EventTable, z: float = Z_95) -> Tuple[Dict[EventCause, CifCurve], SurvivalCurve]:
    """
    Cumulative incidence of death and discharge with overall survival.

    Returns:
        ({cause: CifCurve}, SurvivalCurve) on the table's event-time grid
    """
    survival, survival_before = _survival_and_increments(table)
    curves = {}
    for cause in CAUSES:
        d_k = table.events(cause)
        values = np.cumsum(survival_before * d_k / table.at_risk) if len(table) else np.zeros(0)
        variance = _cif_variance(table, cause, values, survival_before) if len(table) else np.zeros(0)
        lower, upper = cloglog_interval(values, variance, z)
        curves[cause] = CifCurve(
            cause=cause,
            times=table.times,
            values=values,
            variance=variance,
            ci_lower=np.minimum(lower, values),
            ci_upper=np.maximum(upper, values),
            event_counts=d_k,
            source=table.sample,
        )
    return curves, SurvivalCurve(times=table.times, values=survival)


def hfr_at_horizon(cif: CifCurve, horizon: float = 90) -> Tuple[float, Tuple[float, float]]:
    """Hospitalised fatality risk: the death CIF and its interval at the horizon"""
    if horizon < 0:
        raise InputValidationError(f"negative horizon: {horizon}")
    return cif.value_at(horizon), cif.interval_at(horizon)


def _median_from_values(times: np.ndarray, values: np.ndarray, counts: np.ndarray) -> float:
    """
    Median of the cause-conditional distribution C(t) / C(t_max).

    When the half-mass level is hit exactly at a jump, the result is the
    jump-weighted average of that time and the next jump time.
    """
    jumps = np.flatnonzero(counts > 0)
    if len(jumps) == 0 or values[-1] <= 0:
        raise InputValidationError("no events of cause")
    total = values[-1]
    target = total / 2.0
    tolerance = 1e-12 * total

    position = int(np.searchsorted(values[jumps], target - tolerance, side="left"))
    position = min(position, len(jumps) - 1)
    j = jumps[position]
    if abs(values[j] - target) <= tolerance and position + 1 < len(jumps):
        nxt = jumps[position + 1]
        mass_here = values[j] - (values[j - 1] if j > 0 else 0.0)
        mass_next = values[nxt] - values[nxt - 1]
        return float((mass_here * times[j] + mass_next * times[nxt]) / (mass_here + mass_next))
    return float(times[j])


class _Resampler:
    """Bootstrap replicates of a sample as per-subject resampling counts"""

    def __init__(self, sample: SubjectSample, cause: EventCause):
        self.sample = sample
        self.cause = cause
        self.unique_times, self.inverse = np.unique(sample.times, return_inverse=True)

    def median(self, seed_sequence: np.random.SeedSequence) -> float:
        rng = np.random.default_rng(seed_sequence)
        n = len(self.sample)
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        weights = self.sample.weights * counts
        death, discharge, censored = _aggregate(len(self.unique_times), self.inverse, self.sample.events, weights)
        present = (death + discharge + censored) > 0
        table = _table_from_totals(self.unique_times[present], death[present], discharge[present], censored[present])
        if len(table) == 0:
            return np.nan
        _, survival_before = _survival_and_increments(table)
        d_k = table.events(self.cause)
        values = np.cumsum(survival_before * d_k / table.at_risk)
        if values[-1] <= 0:
            return np.nan
        return _median_from_values(table.times, values, d_k)


def bootstrap_medians(sample: SubjectSample, cause: EventCause, replicates: int, seed: int,
                      threads: int = 1) -> np.ndarray:
    """
    Median of each bootstrap replicate.

    Replicate b always uses child b of SeedSequence(seed), so serial and
    threaded runs agree exactly.
    """
    resampler = _Resampler(sample, cause)
    children = np.random.SeedSequence(seed).spawn(replicates)
    if threads <= 1 or replicates < 2:
        return np.array([resampler.median(child) for child in children], dtype=float)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(resampler.median, children)), dtype=float)


def weighted_median_los(cif: CifCurve,
                        replicates: int = 500,
                        seed: int = 0,
                        threads: int = 1,
                        confidence: float = 0.95) -> MedianLosEstimate:
    """
    Weighted median length of stay before the curve's cause.

    Args:
        cif: Curve from aalen_johansen
        replicates: Bootstrap resamples of subjects; 0 gives a degenerate interval
        seed: Bootstrap seed
        threads: Worker threads for the replicates
        confidence: Percentile interval level

    Returns:
        MedianLosEstimate with a bootstrap percentile interval
    """
    median = _median_from_values(cif.times, cif.values, cif.event_counts)
    if replicates <= 0 or cif.source is None:
        return MedianLosEstimate(cause=cif.cause, median_days=median, ci_lower=median, ci_upper=median)

    medians = bootstrap_medians(cif.source, cif.cause, replicates, seed, threads)
    if np.all(np.isnan(medians)):
        lower = upper = median
    else:
        tail = 50.0 * (1.0 - confidence)
        lower, upper = np.nanpercentile(medians, [tail, 100.0 - tail])
    return MedianLosEstimate(
        cause=cif.cause,
        median_days=median,
        ci_lower=float(min(lower, median)),
        ci_upper=float(max(upper, median)),
    )


def curve_rows(curves: Dict[EventCause, CifCurve]) -> List[Dict[str, float]]:
    """Rows of the curve export: cause,time_days,estimate,variance,ci_lower,ci_upper"""
    rows = []
    for cause in CAUSES:
        curve = curves[cause]
        for i in range(len(curve.times)):
            rows.append({
                "cause": cause.name.lower(),
                "time_days": float(curve.times[i]),
                "estimate": float(curve.values[i]),
                "variance": float(curve.variance[i]),
                "ci_lower": float(curve.ci_lower[i]),
                "ci_upper": float(curve.ci_upper[i]),
            })
    return rows
