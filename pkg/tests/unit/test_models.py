"""
Unit tests for Pydantic Models
"""
import pytest
from datetime import date
from pydantic import ValidationError

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'backend'))

from models import (
    AnalysisRecord,
    CohortSpec,
    CovariateSchema,
    EventCause,
    FactorSpec,
    OutcomeKind,
    RunConfig,
    SynthFactor,
)


class TestRawAdmission:
    """Test cases for RawAdmission model"""

    def test_valid_admission(self, make_raw):
        """Test a consistent admission validates"""
        raw = make_raw()
        assert raw.outcome_kind == OutcomeKind.DISCHARGED
        assert raw.follow_up_origin == date(2020, 4, 1)

    def test_specimen_window_bounds(self, make_raw):
        """Test specimen dates -14 and +1 days are accepted, -15 and +2 rejected"""
        make_raw(specimen_date=date(2020, 3, 18))
        make_raw(specimen_date=date(2020, 4, 2))
        with pytest.raises(ValidationError):
            make_raw(specimen_date=date(2020, 3, 17))
        with pytest.raises(ValidationError):
            make_raw(specimen_date=date(2020, 4, 3))

    def test_outcome_before_admission(self, make_raw):
        """Test outcome dates before admission are rejected"""
        with pytest.raises(ValidationError):
            make_raw(outcome_date=date(2020, 3, 31))

    def test_second_dose_before_first(self, make_raw):
        """Test dose ordering is enforced"""
        with pytest.raises(ValidationError):
            make_raw(dose1_date=date(2021, 2, 1), dose2_date=date(2021, 1, 1))

    def test_outcome_date_required_for_discharge(self, make_raw):
        """Test a discharge needs its date"""
        with pytest.raises(ValidationError):
            make_raw(outcome_date=None)

    def test_still_in_hospital_without_date(self, make_raw):
        """Test patients still in hospital have no outcome date"""
        raw = make_raw(outcome_kind=OutcomeKind.STILL_IN_HOSPITAL, outcome_date=None)
        assert raw.outcome_date is None

    def test_missing_specimen_falls_back_to_admission(self, make_raw):
        """Test the follow-up origin without a specimen date"""
        raw = make_raw(specimen_date=None)
        assert raw.follow_up_origin == raw.admission_date


class TestAnalysisRecord:
    """Test cases for AnalysisRecord model"""

    def test_defaults(self):
        """Test default weight and stratum"""
        record = AnalysisRecord(time_days=3.0, event=EventCause.DEATH)
        assert record.weight == 1.0
        assert record.stratum == ""

    def test_negative_time_rejected(self):
        """Test negative times are rejected"""
        with pytest.raises(ValidationError):
            AnalysisRecord(time_days=-1.0, event=EventCause.DEATH)

    def test_non_positive_weight_rejected(self):
        """Test non-positive weights are rejected"""
        with pytest.raises(ValidationError):
            AnalysisRecord(time_days=1.0, event=EventCause.DEATH, weight=0.0)


class TestCovariateSchema:
    """Test cases for FactorSpec and CovariateSchema"""

    def test_reference_must_be_a_level(self):
        """Test the reference must be one of the levels"""
        with pytest.raises(ValidationError):
            FactorSpec(name="sex", levels=["Female", "Male"], reference="Other")

    def test_duplicate_levels_rejected(self):
        """Test duplicate levels are rejected"""
        with pytest.raises(ValidationError):
            FactorSpec(name="sex", levels=["Female", "Female"], reference="Female")

    def test_main_effects_exclude_strata(self):
        """Test stratum factors are not main effects"""
        schema = CovariateSchema(
            factors=[
                FactorSpec(name="region", levels=["London", "North"], reference="London"),
                FactorSpec(name="sex", levels=["Female", "Male"], reference="Female"),
            ],
            stratum_factors=["region"],
        )
        assert [factor.name for factor in schema.main_effects] == ["sex"]
        assert schema.factor("sex").non_reference_levels == ["Male"]
        assert schema.stratum_label({"region": "North", "sex": "Male"}) == "North"

    def test_unknown_stratum_factor(self):
        """Test stratum factors must be schema factors"""
        with pytest.raises(ValidationError):
            CovariateSchema(factors=[], stratum_factors=["region"])


class TestCohortSpec:
    """Test cases for CohortSpec validation"""

    def test_beta_length_must_match_levels(self):
        """Test coefficient vectors cover every non-reference level"""
        factor = SynthFactor(name="sex", levels=["Female", "Male"], probabilities=[0.5, 0.5])
        with pytest.raises(ValidationError):
            CohortSpec(n=10, p_mix=0.3, factors=[factor], beta_death=[0.1, 0.2], beta_discharge=[0.0])

    def test_p_mix_range(self):
        """Test p_mix lies strictly between 0 and 1"""
        with pytest.raises(ValidationError):
            CohortSpec(n=10, p_mix=1.0)
        with pytest.raises(ValidationError):
            CohortSpec(n=10, p_mix=0.0)

    def test_probabilities_sum_to_one(self):
        """Test probabilities must sum to 1"""
        with pytest.raises(ValidationError):
            SynthFactor(name="sex", levels=["Female", "Male"], probabilities=[0.5, 0.6])

    def test_n_must_be_positive(self):
        """Test n must be positive"""
        with pytest.raises(ValidationError):
            CohortSpec(n=0, p_mix=0.3)

    def test_design_columns(self, simple_spec):
        """Test design column names"""
        assert simple_spec.design_columns == ["sex=Male", "imd_quintile=1"]


class TestRunConfig:
    """Test cases for RunConfig"""

    def test_defaults(self):
        """Test run defaults"""
        run = RunConfig()
        assert run.horizon_days == 90
        assert run.shifts == [0, 1, 2, 3, 4]
        assert run.preset == "month"

    def test_shifts_sorted_and_checked(self):
        """Test shifts are sorted, distinct and include 0"""
        assert RunConfig(shifts=[3, 0, 1]).shifts == [0, 1, 3]
        with pytest.raises(ValidationError):
            RunConfig(shifts=[1, 2])
        with pytest.raises(ValidationError):
            RunConfig(shifts=[0, 1, 1])

    def test_strata_and_main_effects_disjoint(self):
        """Test a factor cannot be both stratum and main effect"""
        with pytest.raises(ValidationError):
            RunConfig(strata=["age_band"], main_effects=["age_band", "sex"])
