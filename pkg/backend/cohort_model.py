import logging
import os
from datetime import date, timedelta
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import CohortIOError, InputValidationError
from models import (
    REASON_INCONSISTENT_DATES,
    REASON_MISSING_DEMOGRAPHIC,
    REASON_MISSING_FIELD,
    REASON_UNPARSEABLE,
    AnalysisRecord,
    EventCause,
    OutcomeKind,
    RawAdmission,
    VaccinationStatus,
    date_inconsistency,
)
from monitoring.cohort_monitor import RejectionReport

logger = logging.getLogger(__name__)

COHORT_COLUMNS = [
    "subject_id", "admission_date", "specimen_date", "onset_date", "outcome_kind", "outcome_date",
    "post_discharge_death_date", "dose1_date", "dose2_date", "age_years", "sex", "ethnicity",
    "region", "imd_quintile", "cci_score", "trust_id",
]
DATE_COLUMNS = [
    "admission_date", "specimen_date", "onset_date", "outcome_date",
    "post_discharge_death_date", "dose1_date", "dose2_date",
]
REQUIRED_COLUMNS = ["subject_id", "admission_date", "outcome_kind", "trust_id"]
DEMOGRAPHIC_COLUMNS = ["age_years", "sex", "ethnicity", "region", "imd_quintile", "cci_score"]
ANALYSIS_COLUMNS = ["subject_id", "time_days", "event", "weight"]

REASON_INVALID_VALUE = "invalid value"
REASON_AFTER_EXTRACTION = "admission after extraction"
WARNING_SPECIMEN_FALLBACK = "specimen date missing; admission date used as origin"

AGE_BANDS: List[Tuple[int, str]] = [(15, "0-14"), (25, "15-24"), (45, "25-44"), (65, "45-64"),
                                    (75, "65-74"), (85, "75-84")]
AGE_BAND_LABELS = [label for _, label in AGE_BANDS] + ["85+"]
CCI_BAND_LABELS = ["0", "1-2", "3-4", "5+"]

# Upper bounds (percent of the busiest week) of the hospital-load bands
LOAD_BANDS: List[Tuple[int, str]] = [(20, "0-20"), (40, "20-40"), (60, "40-60"),
                                     (80, "60-80"), (90, "80-90"), (100, "90-100")]
LOAD_BAND_LABELS = [label for _, label in LOAD_BANDS]
LOAD_HALF_WIDTH = 3                      # 3 days before, same day, 3 after

VACCINATION_LABELS = [status.value for status in VaccinationStatus]

FIRST_DOSE_DAYS = 21
SECOND_DOSE_DAYS = 14


def derive_vaccination_status(dose1: Optional[date], dose2: Optional[date], admission: date) -> VaccinationStatus:
    """
    Vaccination category at admission, evaluated most-protected first.

    A dose given on the admission day counts as received. Doses after
    admission have not been received yet.
    """
    if dose2 is not None and (dose1 is None or dose2 < dose1):
        raise InputValidationError("second dose precedes first dose")

    if dose2 is not None and (admission - dose2).days >= SECOND_DOSE_DAYS:
        return VaccinationStatus.SECOND_DOSE_14D_PLUS
    if dose1 is not None:
        offset = (admission - dose1).days
        if offset >= FIRST_DOSE_DAYS:
            return VaccinationStatus.FIRST_DOSE_21D_PLUS
        if offset >= 0:
            return VaccinationStatus.FIRST_DOSE_UNDER_21D
    return VaccinationStatus.UNVACCINATED


class TrustLoadIndex:
    """Daily COVID-19 admission counts per trust, used for the hospital-load proxy"""

    def __init__(self, series: Dict[str, Tuple[date, np.ndarray]]):
        # trust_id -> (first day, daily counts from the first to the last admission day)
        self.series = series
        self._cumulative = {trust: np.concatenate(([0], np.cumsum(counts)))
                            for trust, (_, counts) in series.items()}
        self._busiest = {trust: self._busiest_window(trust) for trust in series}

    @classmethod
    def from_dates(cls, dates_by_trust: Dict[str, Iterable[date]]) -> "TrustLoadIndex":
        series = {}
        for trust, dates in dates_by_trust.items():
            dates = list(dates)
            if not dates:
                continue
            first = min(dates)
            offsets = np.array([(day - first).days for day in dates], dtype=np.int64)
            series[trust] = (first, np.bincount(offsets).astype(np.int64))
        return cls(series)

    @classmethod
    def from_admissions(cls, admissions: Iterable[RawAdmission]) -> "TrustLoadIndex":
        dates_by_trust: Dict[str, List[date]] = {}
        for admission in admissions:
            dates_by_trust.setdefault(admission.trust_id, []).append(admission.admission_date)
        return cls.from_dates(dates_by_trust)

    def __contains__(self, trust_id: str) -> bool:
        return trust_id in self.series

    def _window_sum_at(self, trust_id: str, offset: int) -> int:
        # Windows at the series edges use the available days only
        cumulative = self._cumulative[trust_id]
        length = len(cumulative) - 1
        lo = min(max(offset - LOAD_HALF_WIDTH, 0), length)
        hi = min(max(offset + LOAD_HALF_WIDTH + 1, 0), length)
        return int(cumulative[hi] - cumulative[lo])

    def _busiest_window(self, trust_id: str) -> int:
        cumulative = self._cumulative[trust_id]
        length = len(cumulative) - 1
        centres = np.arange(length)
        lo = np.clip(centres - LOAD_HALF_WIDTH, 0, length)
        hi = np.clip(centres + LOAD_HALF_WIDTH + 1, 0, length)
        return int((cumulative[hi] - cumulative[lo]).max())

    def window_sum(self, trust_id: str, day: date) -> int:
        """Admissions at the trust in the 7 days centred on `day`"""
        if trust_id not in self.series:
            raise InputValidationError(f"unknown trust_id {trust_id!r}")
        first, _ = self.series[trust_id]
        return self._window_sum_at(trust_id, (day - first).days)

    def busiest_window(self, trust_id: str) -> int:
        if trust_id not in self.series:
            raise InputValidationError(f"unknown trust_id {trust_id!r}")
        return self._busiest[trust_id]


def load_band(window_sum: int, busiest: int) -> str:
    """Band of window_sum / busiest; [0, 20] then half-open (lo, hi] bands"""
    for upper, label in LOAD_BANDS:
        if window_sum * 100 <= upper * busiest:
            return label
    return LOAD_BANDS[-1][1]


def compute_hospital_load(index: TrustLoadIndex, trust_id: str, admission: date) -> Tuple[float, str]:
    """
    Hospital-load proxy for one admission.

    Returns:
        (admissions in the 7-day window around admission / busiest 7-day window, band label)
    """
    busiest = index.busiest_window(trust_id)
    window = index.window_sum(trust_id, admission)
    if window <= 0:
        raise InputValidationError(f"trust {trust_id!r} has no admissions around {admission.isoformat()}")
    return window / busiest, load_band(window, busiest)


def band_age(age_years: int) -> str:
    if age_years < 0:
        raise InputValidationError(f"negative age: {age_years}")
    for upper, label in AGE_BANDS:
        if age_years < upper:
            return label
    return "85+"


def band_cci(cci_score: int) -> str:
    if cci_score < 0:
        raise InputValidationError(f"negative Charlson comorbidity index: {cci_score}")
    if cci_score == 0:
        return "0"
    if cci_score <= 2:
        return "1-2"
    if cci_score <= 4:
        return "3-4"
    return "5+"


def month_label(day: date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


def band_covariates(raw: RawAdmission) -> Dict[str, str]:
    """Banded demographic covariates and month of admission"""
    return {
        "age_band": band_age(raw.age_years),
        "sex": raw.sex,
        "ethnicity": raw.ethnicity,
        "region": raw.region,
        "imd_quintile": raw.imd_quintile,
        "cci_band": band_cci(raw.cci_score),
        "admission_month": month_label(raw.admission_date),
    }


def reclassify_palliative(raw: RawAdmission, window_days: int = 14) -> RawAdmission:
    """Deaths within `window_days` of discharge (inclusive) become in-hospital deaths"""
    if raw.outcome_kind != OutcomeKind.DISCHARGED or raw.post_discharge_death_date is None:
        return raw
    discharge = raw.outcome_date
    death = raw.post_discharge_death_date
    if death < discharge:
        raise InputValidationError(f"{raw.subject_id}: death date precedes discharge date")
    if (death - discharge).days <= window_days:
        return raw.model_copy(update={"outcome_kind": OutcomeKind.DIED_IN_HOSPITAL, "outcome_date": death})
    return raw


def apply_censoring(raw: RawAdmission,
                    extraction: date,
                    horizon_days: int = 90,
                    covariates: Optional[Dict[str, str]] = None) -> AnalysisRecord:
    """
    Turn an admission into (time, cause) with right-censoring at the horizon.

    The horizon runs from the first positive specimen date. Patients still in
    hospital are censored at the earlier of extraction and horizon.
    """
    if extraction < raw.admission_date:
        raise InputValidationError(f"{raw.subject_id}: extraction date precedes admission")

    horizon = raw.follow_up_origin + timedelta(days=horizon_days)
    if raw.outcome_kind == OutcomeKind.STILL_IN_HOSPITAL or raw.outcome_date is None:
        end, event = min(extraction, horizon), EventCause.CENSORED
    elif raw.outcome_date <= horizon:
        end = raw.outcome_date
        event = EventCause.DEATH if raw.outcome_kind == OutcomeKind.DIED_IN_HOSPITAL else EventCause.DISCHARGE
    else:
        end, event = horizon, EventCause.CENSORED

    if covariates is None:
        covariates = band_covariates(raw)
        covariates["vaccination_status"] = derive_vaccination_status(
            raw.dose1_date, raw.dose2_date, raw.admission_date).value

    return AnalysisRecord(
        subject_id=raw.subject_id,
        time_days=float(max((end - raw.admission_date).days, 0)),
        event=event,
        covariates=covariates,
    )


def _parse_date(value: str) -> Optional[date]:
    return date.fromisoformat(value) if value else None


def parse_admission_row(row: Dict[str, str]) -> Tuple[Optional[RawAdmission], Optional[str], List[str]]:
    """
    Parse one CSV row.

    Returns:
        (admission or None, rejection reason or None, warnings)
    """
    row = {key: (row.get(key) or "").strip() for key in COHORT_COLUMNS}
    if any(not row[key] for key in REQUIRED_COLUMNS):
        return None, REASON_MISSING_FIELD, []
    if any(not row[key] for key in DEMOGRAPHIC_COLUMNS):
        return None, REASON_MISSING_DEMOGRAPHIC, []

    try:
        dates = {key: _parse_date(row[key]) for key in DATE_COLUMNS}
        outcome_kind = OutcomeKind(row["outcome_kind"])
        age_years = int(row["age_years"])
        cci_score = int(row["cci_score"])
    except ValueError:
        return None, REASON_UNPARSEABLE, []

    if age_years < 0 or cci_score < 0:
        return None, REASON_INVALID_VALUE, []

    reason = date_inconsistency(dates["admission_date"], dates["specimen_date"], dates["outcome_date"],
                                dates["post_discharge_death_date"], dates["dose1_date"], dates["dose2_date"])
    if reason:
        return None, reason, []
    if outcome_kind != OutcomeKind.STILL_IN_HOSPITAL and dates["outcome_date"] is None:
        return None, REASON_INCONSISTENT_DATES, []

    warnings = [] if dates["specimen_date"] is not None else [WARNING_SPECIMEN_FALLBACK]
    admission = RawAdmission(
        subject_id=row["subject_id"],
        outcome_kind=outcome_kind,
        age_years=age_years,
        cci_score=cci_score,
        sex=row["sex"],
        ethnicity=row["ethnicity"],
        region=row["region"],
        imd_quintile=row["imd_quintile"],
        trust_id=row["trust_id"],
        **dates,
    )
    return admission, None, warnings


def _read_csv(source, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CohortIOError(f"cannot read {source}: {e}")
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise InputValidationError(f"input is missing columns: {missing}")
    return frame


def ingest_cohort(source: Union[str, os.PathLike, "object"]) -> Tuple[List[RawAdmission], RejectionReport]:
    """
    Read a cohort CSV into validated admissions.

    Per-row problems are counted in the report and never abort the batch.
    """
    frame = _read_csv(source, COHORT_COLUMNS)
    report = RejectionReport()
    admissions = []
    for row in frame.to_dict("records"):
        report.rows_read += 1
        admission, reason, warnings = parse_admission_row(row)
        if reason:
            report.reject(reason)
            continue
        for warning in warnings:
            report.warn(warning)
        admissions.append(admission)

    if report.rows_rejected:
        logger.warning("Rejected %d of %d rows", report.rows_rejected, report.rows_read)
    return admissions, report


def write_cohort_csv(admissions: Iterable[RawAdmission], path: str):
    """Write admissions in the cohort CSV schema (empty field = absent)"""
    rows = []
    for admission in admissions:
        row = admission.model_dump()
        for key in DATE_COLUMNS:
            row[key] = row[key].isoformat() if row[key] is not None else ""
        row["outcome_kind"] = admission.outcome_kind.value
        rows.append(row)
    pd.DataFrame(rows, columns=COHORT_COLUMNS).to_csv(path, index=False)


class CohortProcessor:
    """Derives covariates and applies the censoring rules to ingested admissions"""

    def __init__(self, horizon_days: int = 90, palliative_window_days: int = 14,
                 extraction_date: Optional[date] = None):
        self.horizon_days = horizon_days
        self.palliative_window_days = palliative_window_days
        self.extraction_date = extraction_date

    @staticmethod
    def latest_date(admissions: Iterable[RawAdmission]) -> date:
        """Default extraction date: the latest date seen anywhere in the cohort"""
        latest = None
        for admission in admissions:
            for day in (admission.admission_date, admission.outcome_date, admission.post_discharge_death_date):
                if day is not None and (latest is None or day > latest):
                    latest = day
        if latest is None:
            raise InputValidationError("empty cohort")
        return latest

    def derive_covariates(self, raw: RawAdmission, load_index: TrustLoadIndex) -> Dict[str, str]:
        """All analysis covariates for one admission"""
        covariates = band_covariates(raw)
        covariates["vaccination_status"] = derive_vaccination_status(
            raw.dose1_date, raw.dose2_date, raw.admission_date).value
        _, covariates["hospital_load"] = compute_hospital_load(load_index, raw.trust_id, raw.admission_date)
        covariates["onset_month"] = month_label(raw.onset_date) if raw.onset_date is not None else "Unknown"
        return covariates

    def preprocess(self, admissions: List[RawAdmission],
                   report: Optional[RejectionReport] = None,
                   load_index: Optional[TrustLoadIndex] = None) -> List[AnalysisRecord]:
        """
        Reclassify palliative discharges, derive covariates and censor.

        Args:
            admissions: Ingested admissions
            report: Report to record per-record failures in
            load_index: Trust load index; built from `admissions` when omitted

        Returns:
            Analysis records in input order
        """
        report = report if report is not None else RejectionReport()
        if not admissions:
            return []
        extraction = self.extraction_date or self.latest_date(admissions)
        load_index = load_index or TrustLoadIndex.from_admissions(admissions)

        records = []
        for raw in admissions:
            if extraction < raw.admission_date:
                report.reject(REASON_AFTER_EXTRACTION)
                continue
            try:
                reclassified = reclassify_palliative(raw, self.palliative_window_days)
                covariates = self.derive_covariates(reclassified, load_index)
            except InputValidationError as e:
                logger.debug("Dropping %s: %s", raw.subject_id, e)
                report.reject(REASON_INCONSISTENT_DATES)
                continue
            records.append(apply_censoring(reclassified, extraction, self.horizon_days, covariates))
        return records


def records_to_frame(records: List[AnalysisRecord]) -> pd.DataFrame:
    factors = list(records[0].covariates) if records else []
    return pd.DataFrame({
        "subject_id": [record.subject_id for record in records],
        "time_days": [record.time_days for record in records],
        "event": [int(record.event) for record in records],
        "weight": [record.weight for record in records],
        **{name: [record.covariates[name] for record in records] for name in factors},
    }, columns=ANALYSIS_COLUMNS + factors)


def write_analysis_csv(records: List[AnalysisRecord], path: str):
    records_to_frame(records).to_csv(path, index=False)


def read_analysis_csv(source) -> List[AnalysisRecord]:
    """Load a preprocessed analysis table back into records"""
    frame = _read_csv(source, ANALYSIS_COLUMNS)
    factors = [column for column in frame.columns if column not in ANALYSIS_COLUMNS]
    try:
        return [
            AnalysisRecord(
                subject_id=row["subject_id"],
                time_days=float(row["time_days"]),
                event=EventCause(int(row["event"])),
                weight=float(row["weight"]),
                covariates={name: row[name] for name in factors},
            )
            for row in frame.to_dict("records")
        ]
    except ValueError as e:
        raise InputValidationError(f"malformed analysis table: {e}")
