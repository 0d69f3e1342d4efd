"""
Seeded synthetic cohorts with known Fine-Gray structure.

Cause 1 (death) follows the subdistribution
    F1(t | x) = 1 - [1 - p (1 - exp(-t))] ** exp(x'b)
so the true subdistribution log hazard ratios are exactly `beta_death`.
Given cause 2 (discharge) the time is exponential with rate exp(x'b_dis).

Streams are PCG64 generators seeded with SeedSequence(seed, spawn_key=(shard,))
over fixed-size shards of subjects; shards are concatenated in order, so the
cohort does not depend on how many workers generate it.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from cohort_model import AGE_BANDS, CCI_BAND_LABELS, VACCINATION_LABELS, write_cohort_csv
from exceptions import CohortIOError, InputValidationError
from models import AnalysisRecord, CohortSpec, EventCause, OutcomeKind, RawAdmission, VaccinationStatus

logger = logging.getLogger(__name__)

SHARD_SIZE = 10_000
ONSET_LAG_MAX = 10                       # Symptom onset 0-10 days before admission
OLDEST_AGE = 100

# Demographics used when the cohort spec does not draw a factor
DEFAULT_LEVELS = {
    "sex": "Female",
    "ethnicity": "White",
    "region": "London",
    "imd_quintile": "5",
    "age_band": "45-64",
    "cci_band": "0",
    "vaccination_status": VaccinationStatus.UNVACCINATED.value,
}

AGE_RANGES: Dict[str, Tuple[int, int]] = {}
_lower = 0
for _upper, _label in AGE_BANDS:
    AGE_RANGES[_label] = (_lower, _upper - 1)
    _lower = _upper
AGE_RANGES["85+"] = (_lower, OLDEST_AGE)
CCI_RANGES = {"0": (0, 0), "1-2": (1, 2), "3-4": (3, 4), "5+": (5, 8)}

TRUTH_COLUMNS = ["subject_id", "true_time", "true_cause", "censor_time"]


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth for one synthetic subject, times in days"""
    subject_id: str
    true_time: float
    true_cause: EventCause
    censor_time: float                   # min(follow-up to extraction, horizon)
    covariates: Dict[str, str]
    trust_id: str
    admission_date: date

    @property
    def observed_time(self) -> float:
        return min(self.true_time, self.censor_time)

    @property
    def observed_event(self) -> EventCause:
        return self.true_cause if self.true_time <= self.censor_time else EventCause.CENSORED


def cause1_probability(eta, p_mix: float) -> np.ndarray:
    """P(cause 1 | x) = 1 - (1 - p) ** exp(x'b)"""
    return -np.expm1(np.exp(eta) * math.log1p(-p_mix))


def true_cif(t, eta: float, p_mix: float, day_scale: float = 1.0) -> np.ndarray:
    """Closed-form cause-1 cumulative incidence at times t (days)"""
    u = np.asarray(t, dtype=float) / day_scale
    return -np.expm1(np.exp(eta) * np.log1p(-p_mix * -np.expm1(-u)))


def true_cif_inverse(level: float, eta: float, p_mix: float, day_scale: float = 1.0) -> float:
    """Time (days) at which the cause-1 cumulative incidence reaches `level`"""
    if not 0 <= level < cause1_probability(eta, p_mix):
        raise InputValidationError(f"cumulative incidence never reaches {level}")
    a = -math.expm1(math.log1p(-level) / math.exp(eta))
    return -math.log1p(-a / p_mix) * day_scale


def _event_times(u: np.ndarray, v: np.ndarray, eta_death: np.ndarray, eta_discharge: np.ndarray,
                 spec: CohortSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse-transform times and causes from two uniforms per subject"""
    p1 = cause1_probability(eta_death, spec.p_mix)
    is_death = u < p1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = -np.expm1(np.log1p(-v * p1) / np.exp(eta_death))
        death_time = -np.log1p(-a / spec.p_mix)
        discharge_time = -np.log1p(-v) / np.exp(eta_discharge)
    times = np.where(is_death, death_time, discharge_time) * spec.day_scale
    causes = np.where(is_death, int(EventCause.DEATH), int(EventCause.DISCHARGE))
    return times, causes


def sample_competing_events(rng: np.random.Generator, x: np.ndarray,
                            spec: CohortSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Event times (days) and causes for the rows of design matrix x"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = rng.random(x.shape[0])
    v = rng.random(x.shape[0])
    return _event_times(u, v, x @ np.asarray(spec.beta_death, dtype=float),
                        x @ np.asarray(spec.beta_discharge, dtype=float), spec)


def sample_competing_event(rng: np.random.Generator, x: Sequence[float], spec: CohortSpec) -> Tuple[float, EventCause]:
    times, causes = sample_competing_events(rng, np.asarray(x, dtype=float).reshape(1, -1), spec)
    return float(times[0]), EventCause(int(causes[0]))


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(shard,))))


@dataclass
class _Shard:
    """Pre-rendered draws for one shard of subjects"""
    start: int
    levels: Dict[str, np.ndarray]
    x: np.ndarray
    times: np.ndarray
    causes: np.ndarray
    admission_offset: np.ndarray
    onset_lag: np.ndarray
    age_u: np.ndarray
    cci_u: np.ndarray
    dose_u: np.ndarray


def _draw_shard(spec: CohortSpec, shard: int) -> _Shard:
    start = shard * SHARD_SIZE
    size = min(SHARD_SIZE, spec.n - start)
    rng = shard_rng(spec.seed, shard)

    levels, columns = {}, []
    for factor in spec.factors:
        index = rng.choice(len(factor.levels), size=size, p=factor.probabilities)
        levels[factor.name] = index
        for j in range(1, len(factor.levels)):
            columns.append((index == j).astype(float))
    x = np.column_stack(columns) if columns else np.zeros((size, 0))

    times, causes = sample_competing_events(rng, x, spec)
    if spec.load_peaks:
        peaks = np.asarray(spec.load_peaks, dtype=float)[rng.integers(0, len(spec.load_peaks), size)]
        offsets = np.rint(rng.normal(peaks, spec.peak_width_days))
        admission_offset = np.clip(offsets, 0, spec.admission_window_days - 1).astype(np.int64)
    else:
        admission_offset = rng.integers(0, spec.admission_window_days, size)

    return _Shard(
        start=start,
        levels=levels,
        x=x,
        times=times,
        causes=causes,
        admission_offset=admission_offset,
        onset_lag=rng.integers(0, ONSET_LAG_MAX + 1, size),
        age_u=rng.random(size),
        cci_u=rng.random(size),
        dose_u=rng.random((size, 2)),
    )


def _pick(u: float, low: int, high: int) -> int:
    """Integer in [low, high] from a uniform draw"""
    return low + min(int(u * (high - low + 1)), high - low)


def _dose_dates(status: str, admission: date, u: np.ndarray) -> Tuple[Optional[date], Optional[date]]:
    if status == VaccinationStatus.FIRST_DOSE_UNDER_21D.value:
        return admission - timedelta(days=_pick(u[0], 0, 20)), None
    if status == VaccinationStatus.FIRST_DOSE_21D_PLUS.value:
        return admission - timedelta(days=_pick(u[0], 21, 70)), None
    if status == VaccinationStatus.SECOND_DOSE_14D_PLUS.value:
        dose2 = admission - timedelta(days=_pick(u[0], 14, 70))
        return dose2 - timedelta(days=_pick(u[1], 21, 84)), dose2
    return None, None


def _check_levels(spec: CohortSpec):
    allowed = {"age_band": list(AGE_RANGES), "cci_band": CCI_BAND_LABELS, "vaccination_status": VACCINATION_LABELS}
    for factor in spec.factors:
        unknown = set(factor.levels) - set(allowed.get(factor.name, factor.levels))
        if unknown:
            raise InputValidationError(f"unknown levels of {factor.name}: {sorted(unknown)}")


def extraction_date(spec: CohortSpec) -> date:
    """
    Data extraction date of a rendered cohort.

    The last admission day keeps horizon - ceil(censor_max) days of
    follow-up, so censor_max = 0 leaves only the horizon to censor.
    """
    last_admission = spec.admission_start + timedelta(days=spec.admission_window_days - 1)
    return last_admission + timedelta(days=spec.horizon_days - math.ceil(spec.censor_max))


def generate_cohort(spec: CohortSpec, threads: int = 1) -> Tuple[List[RawAdmission], List[TruthRecord]]:
    """
    Draw a synthetic cohort and render it onto the calendar.

    Admission dates are drawn inside the window independently of everything
    else; specimen date equals admission. Follow-up ends at the extraction
    date, so a subject's censoring time is min(extraction - admission,
    horizon). Deaths and discharges on or before extraction happen on
    admission + ceil(T); later ones leave the subject still in hospital.

    Returns:
        (admissions in subject order, truth ledger in the same order)
    """
    _check_levels(spec)
    shard_count = -(-spec.n // SHARD_SIZE)
    if threads > 1 and shard_count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            shards = list(pool.map(lambda s: _draw_shard(spec, s), range(shard_count)))
    else:
        shards = [_draw_shard(spec, s) for s in range(shard_count)]

    width = max(7, len(str(spec.n)))
    horizon = float(spec.horizon_days)
    extraction = extraction_date(spec)

    admissions, truths = [], []
    for shard in shards:
        for i in range(len(shard.times)):
            index = shard.start + i
            covariates = dict(DEFAULT_LEVELS)
            for factor in spec.factors:
                covariates[factor.name] = factor.levels[shard.levels[factor.name][i]]
            subject_id = f"S{index:0{width}d}"
            trust_id = f"T{index % spec.trust_count:03d}"
            t, cause = float(shard.times[i]), EventCause(int(shard.causes[i]))

            admission = spec.admission_start + timedelta(days=int(shard.admission_offset[i]))
            follow_up = (extraction - admission).days
            if math.ceil(t) > follow_up:
                outcome_kind, outcome_date = OutcomeKind.STILL_IN_HOSPITAL, None
            else:
                outcome_kind = OutcomeKind.DIED_IN_HOSPITAL if cause == EventCause.DEATH else OutcomeKind.DISCHARGED
                outcome_date = admission + timedelta(days=math.ceil(t))

            dose1, dose2 = _dose_dates(covariates["vaccination_status"], admission, shard.dose_u[i])
            age_low, age_high = AGE_RANGES[covariates["age_band"]]
            cci_low, cci_high = CCI_RANGES[covariates["cci_band"]]
            admissions.append(RawAdmission(
                subject_id=subject_id,
                admission_date=admission,
                specimen_date=admission,
                onset_date=admission - timedelta(days=int(shard.onset_lag[i])),
                outcome_kind=outcome_kind,
                outcome_date=outcome_date,
                dose1_date=dose1,
                dose2_date=dose2,
                age_years=_pick(shard.age_u[i], age_low, age_high),
                sex=covariates["sex"],
                ethnicity=covariates["ethnicity"],
                region=covariates["region"],
                imd_quintile=covariates["imd_quintile"],
                cci_score=_pick(shard.cci_u[i], cci_low, cci_high),
                trust_id=trust_id,
            ))
            truths.append(TruthRecord(
                subject_id=subject_id,
                true_time=t,
                true_cause=cause,
                censor_time=min(float(follow_up), horizon),
                covariates={factor.name: covariates[factor.name] for factor in spec.factors},
                trust_id=trust_id,
                admission_date=admission,
            ))

    logger.info("Generated %d synthetic admissions (seed %d, %d shards)", spec.n, spec.seed, shard_count)
    return admissions, truths


def truth_to_records(truths: Sequence[TruthRecord]) -> List[AnalysisRecord]:
    """Analysis records on the continuous, pre-rendered time scale"""
    return [
        AnalysisRecord(subject_id=truth.subject_id, time_days=truth.observed_time,
                       event=truth.observed_event, covariates=dict(truth.covariates))
        for truth in truths
    ]


def truth_frame(truths: Sequence[TruthRecord]) -> pd.DataFrame:
    factors = list(truths[0].covariates) if truths else []
    return pd.DataFrame({
        "subject_id": [truth.subject_id for truth in truths],
        "true_time": [truth.true_time for truth in truths],
        "true_cause": [int(truth.true_cause) for truth in truths],
        "censor_time": [truth.censor_time for truth in truths],
        **{name: [truth.covariates[name] for truth in truths] for name in factors},
    }, columns=TRUTH_COLUMNS + factors)


def write_truth_csv(truths: Sequence[TruthRecord], path: str):
    truth_frame(truths).to_csv(path, index=False, float_format="%.10g")


def write_synthetic_cohort(spec: CohortSpec, cohort_path: str, truth_path: str,
                           threads: int = 1) -> Tuple[List[RawAdmission], List[TruthRecord]]:
    admissions, truths = generate_cohort(spec, threads)
    try:
        write_cohort_csv(admissions, cohort_path)
        write_truth_csv(truths, truth_path)
    except OSError as e:
        raise CohortIOError(f"cannot write synthetic cohort: {e}")
    return admissions, truths


def load_spec(path: str) -> CohortSpec:
    """Read and validate a JSON cohort spec"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        raise CohortIOError(f"cannot read spec {path}: {e}")
    except json.JSONDecodeError as e:
        raise InputValidationError(f"spec {path} is not valid JSON: {e}")
    try:
        return CohortSpec.model_validate(payload)
    except ValidationError as e:
        raise InputValidationError(f"invalid cohort spec: {e}")
