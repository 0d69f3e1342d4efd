"""
Epidemic-phase-bias sensitivity analysis.

Symptom onset of patients who went on to die is moved back by c days, the
month-of-onset factor is recomputed and the regression is refitted per c.
The admission-based event clock is never touched.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, field_validator

from cohort_model import CohortProcessor, TrustLoadIndex, reclassify_palliative
from config import config as default_config
from exceptions import CrivetError, InputValidationError
from fine_gray import FgModel, HazardRatioTable, fit_fine_gray, hazard_ratios
from models import AnalysisRecord, CovariateSchema, EventCause, FactorSpec, OutcomeKind, RawAdmission

logger = logging.getLogger(__name__)

ONSET_FACTOR = "onset_month"
SENSITIVITY_COLUMNS = ["shift_days", "characteristic", "level", "hazard_ratio", "ci_lower", "ci_upper"]


class ShiftSpec(BaseModel):
    """Onset shifts to try, in days, and the factor they move"""
    shifts: List[int] = list(default_config.SHIFT_DAYS)
    onset_factor: str = ONSET_FACTOR

    @field_validator("shifts")
    @classmethod
    def check_shifts(cls, shifts: List[int]) -> List[int]:
        if len(set(shifts)) != len(shifts):
            raise ValueError("shifts must be distinct")
        if any(c < 0 for c in shifts):
            raise ValueError("shifts must be non-negative")
        if 0 not in shifts:
            raise ValueError("shifts must include 0")
        return sorted(shifts)


@dataclass(frozen=True)
class ShiftResult:
    shift_days: int
    model: FgModel
    table: HazardRatioTable
    subjects: int
    onset_deaths: Dict[str, int] = field(default_factory=dict)   # Deaths per onset month after the shift


@dataclass(frozen=True)
class SensitivityResult:
    """Per-shift fits in ascending shift order"""
    results: List[ShiftResult]
    excluded_without_onset: int

    def table(self, shift_days: int) -> HazardRatioTable:
        for result in self.results:
            if result.shift_days == shift_days:
                return result.table
        raise KeyError(shift_days)

    def to_frame(self, onset_factor: str = ONSET_FACTOR) -> pd.DataFrame:
        """One row per shift and hazard-ratio level; onset-month rows carry their death count"""
        rows = []
        for result in self.results:
            for row in result.table.rows:
                deaths = result.onset_deaths.get(row.level, 0) if row.characteristic == onset_factor else None
                rows.append({
                    "shift_days": result.shift_days,
                    "characteristic": row.characteristic,
                    "level": row.level,
                    "hazard_ratio": row.hazard_ratio,
                    "ci_lower": row.ci_lower,
                    "ci_upper": row.ci_upper,
                    "formatted": row.formatted,
                    "onset_deaths": deaths,
                })
        return pd.DataFrame(rows, columns=SENSITIVITY_COLUMNS + ["formatted", "onset_deaths"])


def is_final_death(raw: RawAdmission, palliative_window_days: int = 14) -> bool:
    """True when the admission ends in death once palliative discharges are reclassified"""
    try:
        return reclassify_palliative(raw, palliative_window_days).outcome_kind == OutcomeKind.DIED_IN_HOSPITAL
    except InputValidationError:
        return False


def apply_phase_shift(admissions: Sequence[RawAdmission], shift_days: int,
                      palliative_window_days: int = 14) -> List[RawAdmission]:
    """
    Move the onset date of every eventual death back by `shift_days`.

    Records without an onset date and all non-deaths are returned unchanged.
    """
    if shift_days < 0:
        raise InputValidationError("shift must be non-negative")
    if shift_days == 0:
        return list(admissions)
    delta = timedelta(days=shift_days)
    return [
        raw.model_copy(update={"onset_date": raw.onset_date - delta})
        if raw.onset_date is not None and is_final_death(raw, palliative_window_days) else raw
        for raw in admissions
    ]


def select_onset_subset(admissions: Sequence[RawAdmission]) -> Tuple[List[RawAdmission], int]:
    """Admissions with an onset date, and how many were left out"""
    subset = [raw for raw in admissions if raw.onset_date is not None]
    excluded = len(admissions) - len(subset)
    if not subset:
        raise InputValidationError(f"no admissions have an onset date ({excluded} excluded)")
    if excluded:
        logger.warning("Excluded %d admissions without onset date from the sensitivity analysis", excluded)
    return subset, excluded


def _shift_schema(schema: CovariateSchema, records: List[AnalysisRecord], onset_factor: str) -> CovariateSchema:
    """Rebuild the onset factor's levels from the shifted records"""
    levels = sorted({record.covariates[onset_factor] for record in records})
    factors = []
    for factor in schema.factors:
        if factor.name == onset_factor:
            reference = factor.reference if factor.reference in levels else levels[0]
            factor = FactorSpec(name=onset_factor, levels=levels, reference=reference)
        factors.append(factor)
    return CovariateSchema(factors=factors, stratum_factors=schema.stratum_factors)


def run_sensitivity(admissions: Sequence[RawAdmission],
                    schema: CovariateSchema,
                    strata: Optional[Sequence[str]] = None,
                    spec: Optional[ShiftSpec] = None,
                    processor: Optional[CohortProcessor] = None,
                    settings=None,
                    threads: int = 1) -> SensitivityResult:
    """
    Refit the regression once per onset shift.

    Args:
        admissions: Ingested admissions (onset dates needed)
        schema: Regression schema containing the onset-month factor
        strata: Stratum factor names overriding schema.stratum_factors
        spec: Shifts to run
        processor: Preprocessor used to derive records from shifted admissions
        settings: Fit settings
        threads: Worker threads across shifts

    Returns:
        SensitivityResult with one fit per shift, ascending
    """
    spec = spec or ShiftSpec()
    settings = settings or default_config
    processor = processor or CohortProcessor(settings.HORIZON_DAYS, settings.PALLIATIVE_WINDOW_DAYS)
    if spec.onset_factor not in [factor.name for factor in schema.factors]:
        raise InputValidationError(f"schema has no {spec.onset_factor!r} factor")

    subset, excluded = select_onset_subset(list(admissions))
    # Load and extraction are properties of the whole cohort, not of the subset
    load_index = TrustLoadIndex.from_admissions(admissions)
    if processor.extraction_date is None:
        processor = CohortProcessor(processor.horizon_days, processor.palliative_window_days,
                                    CohortProcessor.latest_date(admissions))

    def fit_shift(shift_days: int) -> ShiftResult:
        try:
            shifted = apply_phase_shift(subset, shift_days, processor.palliative_window_days)
            records = processor.preprocess(shifted, load_index=load_index)
            shift_schema = _shift_schema(schema, records, spec.onset_factor)
            model = fit_fine_gray(records, shift_schema, strata, settings)
        except CrivetError as e:
            raise e.annotate(f"shift c={shift_days}")
        deaths = onset_month_counts(records, spec.onset_factor, EventCause.DEATH)
        logger.info("Shift c=%d fitted on %d records", shift_days, len(records))
        logger.debug("Shift c=%d deaths by onset month: %s", shift_days, deaths)
        return ShiftResult(shift_days, model, hazard_ratios(model, settings.CONFIDENCE_Z), len(records), deaths)

    if threads > 1 and len(spec.shifts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit_shift, spec.shifts))
    else:
        results = [fit_shift(c) for c in spec.shifts]
    return SensitivityResult(results=results, excluded_without_onset=excluded)


def onset_month_counts(records: Sequence[AnalysisRecord], onset_factor: str = ONSET_FACTOR,
                       event=None) -> Dict[str, int]:
    """Records per onset month, optionally for one event cause"""
    counts: Dict[str, int] = {}
    for record in records:
        if event is None or record.event == event:
            level = record.covariates[onset_factor]
            counts[level] = counts.get(level, 0) + 1
    return counts
