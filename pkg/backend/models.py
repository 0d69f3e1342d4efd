from datetime import date, timedelta
from enum import Enum, IntEnum
from typing import Dict, List, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Community-acquired definition: first positive specimen within -14 to +1 days of admission
SPECIMEN_WINDOW_BEFORE = timedelta(days=14)
SPECIMEN_WINDOW_AFTER = timedelta(days=1)

# Rejection reasons shared by ingestion and validation
REASON_MISSING_FIELD = "missing required field"
REASON_UNPARSEABLE = "unparseable field"
REASON_MISSING_DEMOGRAPHIC = "missing demographic"
REASON_INCONSISTENT_DATES = "inconsistent dates"
REASON_SPECIMEN_WINDOW = "specimen outside community-onset window"


class OutcomeKind(str, Enum):
    """Hospital outcome as recorded at data extraction"""
    DIED_IN_HOSPITAL = "DiedInHospital"
    DISCHARGED = "Discharged"
    STILL_IN_HOSPITAL = "StillInHospital"


class EventCause(IntEnum):
    """Analysis event code; 0 is right-censoring"""
    CENSORED = 0
    DEATH = 1
    DISCHARGE = 2


class VaccinationStatus(str, Enum):
    """Vaccination category at admission, least to most protected"""
    UNVACCINATED = "Unvaccinated"
    FIRST_DOSE_UNDER_21D = "FirstDoseUnder21d"
    FIRST_DOSE_21D_PLUS = "FirstDose21dPlus"
    SECOND_DOSE_14D_PLUS = "SecondDose14dPlus"


def date_inconsistency(admission_date: date,
                       specimen_date: Optional[date],
                       outcome_date: Optional[date],
                       post_discharge_death_date: Optional[date],
                       dose1_date: Optional[date],
                       dose2_date: Optional[date]) -> Optional[str]:
    """Return the rejection reason for a set of dates, or None when consistent"""
    if outcome_date is not None and outcome_date < admission_date:
        return REASON_INCONSISTENT_DATES
    if post_discharge_death_date is not None and post_discharge_death_date < admission_date:
        return REASON_INCONSISTENT_DATES
    if dose2_date is not None and (dose1_date is None or dose2_date < dose1_date):
        return REASON_INCONSISTENT_DATES
    if specimen_date is not None:
        if not (admission_date - SPECIMEN_WINDOW_BEFORE <= specimen_date <= admission_date + SPECIMEN_WINDOW_AFTER):
            return REASON_SPECIMEN_WINDOW
    return None


class RawAdmission(BaseModel):
    """One linked hospital admission before any derivation"""
    model_config = ConfigDict(frozen=True)

    subject_id: str
    admission_date: date
    specimen_date: Optional[date] = None   # Missing falls back to admission_date as the 90-day origin
    onset_date: Optional[date] = None
    outcome_kind: OutcomeKind
    outcome_date: Optional[date] = None
    post_discharge_death_date: Optional[date] = None
    dose1_date: Optional[date] = None
    dose2_date: Optional[date] = None
    age_years: int = Field(ge=0)
    sex: str
    ethnicity: str
    region: str
    imd_quintile: str
    cci_score: int = Field(ge=0)
    trust_id: str

    @model_validator(mode="after")
    def check_dates(self) -> "RawAdmission":
        reason = date_inconsistency(self.admission_date, self.specimen_date, self.outcome_date,
                                    self.post_discharge_death_date, self.dose1_date, self.dose2_date)
        if reason:
            raise ValueError(reason)
        if self.outcome_kind != OutcomeKind.STILL_IN_HOSPITAL and self.outcome_date is None:
            raise ValueError(REASON_INCONSISTENT_DATES)
        return self

    @property
    def follow_up_origin(self) -> date:
        """Start of the 90-day window (first positive specimen)"""
        return self.specimen_date if self.specimen_date is not None else self.admission_date


class AnalysisRecord(BaseModel):
    """Estimator-ready record: time, cause, covariate levels and stratum"""
    model_config = ConfigDict(frozen=True)

    subject_id: str = ""
    time_days: float = Field(ge=0)
    event: EventCause
    covariates: Dict[str, str] = {}
    stratum: str = ""
    weight: float = Field(default=1.0, gt=0)


class FactorSpec(BaseModel):
    """One categorical covariate with its ordered levels and reference level"""
    model_config = ConfigDict(frozen=True)

    name: str
    levels: List[str]
    reference: str

    @model_validator(mode="after")
    def check_reference(self) -> "FactorSpec":
        if not self.levels:
            raise ValueError(f"factor {self.name} has no levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"factor {self.name} has duplicate levels")
        if self.reference not in self.levels:
            raise ValueError(f"reference level {self.reference!r} is not a level of {self.name}")
        return self

    @property
    def non_reference_levels(self) -> List[str]:
        return [level for level in self.levels if level != self.reference]


class CovariateSchema(BaseModel):
    """Factors used by an analysis; stratum factors get their own baseline"""
    model_config = ConfigDict(frozen=True)

    factors: List[FactorSpec] = []
    stratum_factors: List[str] = []

    @model_validator(mode="after")
    def check_strata(self) -> "CovariateSchema":
        names = [factor.name for factor in self.factors]
        if len(set(names)) != len(names):
            raise ValueError("duplicate factor names")
        unknown = [name for name in self.stratum_factors if name not in names]
        if unknown:
            raise ValueError(f"stratum factors not in schema: {unknown}")
        return self

    @property
    def main_effects(self) -> List[FactorSpec]:
        """Factors entering the linear predictor"""
        return [factor for factor in self.factors if factor.name not in self.stratum_factors]

    def factor(self, name: str) -> FactorSpec:
        for factor in self.factors:
            if factor.name == name:
                return factor
        raise KeyError(name)

    def stratum_label(self, covariates: Dict[str, str]) -> str:
        """Composite stratum label, e.g. '45-64|London|Unvaccinated'"""
        return "|".join(covariates[name] for name in self.stratum_factors)


class SynthFactor(BaseModel):
    """Synthetic covariate: levels (first is the reference) and their probabilities"""
    name: Literal["sex", "ethnicity", "region", "imd_quintile", "age_band", "cci_band", "vaccination_status"]
    levels: List[str]
    probabilities: List[float]

    @model_validator(mode="after")
    def check_probabilities(self) -> "SynthFactor":
        if len(self.levels) < 2 or len(self.levels) != len(self.probabilities):
            raise ValueError(f"factor {self.name} needs >= 2 levels with one probability each")
        if any(p < 0 for p in self.probabilities) or abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError(f"probabilities of {self.name} must be non-negative and sum to 1")
        return self


class CohortSpec(BaseModel):
    """Parameters of a seeded synthetic cohort with known subdistribution hazards"""
    n: int = Field(ge=1)
    beta_death: List[float] = []
    p_mix: float = Field(gt=0, lt=1)
    beta_discharge: List[float] = []
    censor_max: float = Field(default=0.0, ge=0)    # Follow-up days extraction cuts from the last admission
    day_scale: float = Field(default=10.0, gt=0)    # Days per model time unit
    factors: List[SynthFactor] = []
    trust_count: int = Field(default=5, ge=1)
    admission_start: date = date(2020, 3, 1)
    admission_window_days: int = Field(default=365, ge=1)
    load_peaks: List[int] = []                       # Day offsets of admission peaks
    peak_width_days: float = Field(default=14.0, gt=0)
    horizon_days: int = Field(default=90, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)

    @model_validator(mode="after")
    def check_dimensions(self) -> "CohortSpec":
        width = sum(len(factor.levels) - 1 for factor in self.factors)
        if len(self.beta_death) != width or len(self.beta_discharge) != width:
            raise ValueError(f"beta_death and beta_discharge need {width} coefficients")
        if self.censor_max > self.horizon_days:
            raise ValueError("censor_max cannot exceed the horizon")
        if any(not 0 <= peak < self.admission_window_days for peak in self.load_peaks):
            raise ValueError("load peaks must lie inside the admission window")
        return self

    @property
    def design_columns(self) -> List[str]:
        return [f"{factor.name}={level}" for factor in self.factors for level in factor.levels[1:]]


class RunConfig(BaseModel):
    """One pipeline run, loaded from JSON and overridden by CLI flags"""
    input: List[str] = []
    out: str = "output"
    horizon_days: int = Field(default=90, ge=1)
    group_by: List[str] = ["admission_month"]
    preset: Literal["month", "vaccination", "null"] = "month"
    strata: Optional[List[str]] = None
    main_effects: Optional[List[str]] = None
    references: Dict[str, str] = {}
    bootstrap: int = Field(default=500, ge=0)
    shifts: List[int] = [0, 1, 2, 3, 4]
    seed: int = Field(default=20200315, ge=0, lt=2 ** 64)
    extraction_date: Optional[date] = None
    agreement: bool = False

    @field_validator("shifts")
    @classmethod
    def check_shifts(cls, shifts: List[int]) -> List[int]:
        if len(set(shifts)) != len(shifts) or any(c < 0 for c in shifts) or 0 not in shifts:
            raise ValueError("shifts must be distinct non-negative days including 0")
        return sorted(shifts)

    @model_validator(mode="after")
    def check_disjoint(self) -> "RunConfig":
        if self.strata is not None and self.main_effects is not None:
            overlap = set(self.strata) & set(self.main_effects)
            if overlap:
                raise ValueError(f"factors both stratified and adjusted for: {sorted(overlap)}")
        return self
