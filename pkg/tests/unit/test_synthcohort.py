"""
Unit tests for the synthetic cohort generator
"""
import json
import math
from datetime import timedelta
import pytest
import numpy as np
from scipy import stats

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'backend'))

from cohort_model import CohortProcessor, ingest_cohort
from exceptions import CohortIOError, InputValidationError
from fine_gray import fit_fine_gray
from models import CohortSpec, CovariateSchema, EventCause, FactorSpec, OutcomeKind, SynthFactor
from synthcohort import (
    SHARD_SIZE,
    TRUTH_COLUMNS,
    cause1_probability,
    extraction_date,
    generate_cohort,
    load_spec,
    sample_competing_event,
    shard_rng,
    true_cif,
    true_cif_inverse,
    truth_frame,
    truth_to_records,
    write_synthetic_cohort,
)


def plain_spec(**overrides):
    fields = dict(n=20000, p_mix=0.3, seed=21)
    fields.update(overrides)
    return CohortSpec(**fields)


class TestClosedForms:
    """Test cases for the closed-form cumulative incidence"""

    def test_limit_is_cause_probability(self):
        """Test the CIF limit is the cause probability"""
        assert true_cif(1e9, 0.4, 0.3) == pytest.approx(cause1_probability(0.4, 0.3))
        assert true_cif(0.0, 0.4, 0.3) == 0.0

    @pytest.mark.parametrize("level", [0.05, 0.2, 0.35])
    def test_inverse(self, level):
        """Test the inverse CIF"""
        t = true_cif_inverse(level, 0.5, 0.4, day_scale=10.0)
        assert true_cif(t, 0.5, 0.4, day_scale=10.0) == pytest.approx(level, abs=1e-12)

    def test_inverse_beyond_limit(self):
        """Test levels above the limit are rejected"""
        with pytest.raises(InputValidationError):
            true_cif_inverse(0.5, 0.0, 0.3)

    def test_single_draw(self, simple_spec):
        """Test a single draw"""
        t, cause = sample_competing_event(shard_rng(3, 0), [1.0, 0.0], simple_spec)
        assert t > 0
        assert cause in (EventCause.DEATH, EventCause.DISCHARGE)


class TestGenerateCohort:
    """Test cases for generate_cohort"""

    def test_deterministic(self, simple_spec):
        """Test the same seed gives the same cohort"""
        first, first_truth = generate_cohort(simple_spec)
        second, second_truth = generate_cohort(simple_spec)
        assert first == second
        assert first_truth == second_truth

    def test_seed_changes_cohort(self, simple_spec):
        """Test a new seed gives a new cohort"""
        _, first = generate_cohort(simple_spec)
        _, second = generate_cohort(simple_spec.model_copy(update={"seed": 12}))
        assert [t.true_time for t in first] != [t.true_time for t in second]

    def test_threads_do_not_change_cohort(self):
        """Test thread count does not change the cohort"""
        spec = plain_spec(n=2 * SHARD_SIZE + 5, censor_max=50.0)
        serial = generate_cohort(spec, threads=1)
        threaded = generate_cohort(spec, threads=4)
        assert serial[1] == threaded[1]
        assert serial[0] == threaded[0]

    def test_single_subject(self):
        """Test a one-subject cohort"""
        admissions, truths = generate_cohort(plain_spec(n=1))
        assert len(admissions) == len(truths) == 1
        assert admissions[0].subject_id == truths[0].subject_id == "S0000000"

    def test_no_uniform_censoring(self, simple_spec):
        """Test only the horizon censors when extraction leaves full follow-up"""
        _, truths = generate_cohort(simple_spec)
        assert all(t.censor_time == 90.0 for t in truths)
        assert all(t.observed_event != EventCause.CENSORED for t in truths if t.true_time <= 90.0)

    def test_cause_fraction(self):
        """Test the death fraction matches p_mix"""
        _, truths = generate_cohort(plain_spec())
        deaths = np.mean([t.true_cause == EventCause.DEATH for t in truths])
        assert abs(deaths - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 20000)

    def test_empirical_cif_at_quantile(self):
        """Test the empirical death CIF at a known quantile"""
        spec = plain_spec()
        q = true_cif_inverse(0.2, 0.0, spec.p_mix, spec.day_scale)
        _, truths = generate_cohort(spec)
        empirical = np.mean([t.true_cause == EventCause.DEATH and t.true_time <= q for t in truths])
        assert abs(empirical - 0.2) < 4 * math.sqrt(0.2 * 0.8 / 20000)

    def test_unknown_band_level(self):
        """Test unknown band levels are rejected"""
        factor = SynthFactor(name="age_band", levels=["18-44", "120+"], probabilities=[0.5, 0.5])
        spec = CohortSpec(n=10, p_mix=0.3, factors=[factor], beta_death=[0.1], beta_discharge=[0.0])
        with pytest.raises(InputValidationError):
            generate_cohort(spec)

    def test_truth_records(self, simple_spec):
        """Test continuous-scale records take min(T, C) and the observed cause"""
        spec = simple_spec.model_copy(update={"censor_max": 90.0, "admission_window_days": 30})
        _, truths = generate_cohort(spec)
        records = truth_to_records(truths)
        assert [r.time_days for r in records] == [min(t.true_time, t.censor_time) for t in truths]
        assert any(r.event == EventCause.CENSORED for r in records)
        assert set(records[0].covariates) == {"sex", "imd_quintile"}


@pytest.mark.slow
class TestMarginals:
    """Event-time marginals of a large cohort without covariate effects"""

    @pytest.fixture(scope="class")
    def truths(self):
        _, truths = generate_cohort(plain_spec(n=50000, p_mix=0.4, seed=5))
        return truths

    @pytest.mark.parametrize("cause", [EventCause.DEATH, EventCause.DISCHARGE])
    def test_cause_times_exponential(self, truths, cause):
        """Test times given either cause are exponential with mean day_scale"""
        times = [t.true_time for t in truths if t.true_cause == cause]
        statistic = stats.kstest(times, stats.expon(scale=10.0).cdf).statistic
        assert statistic < 0.02

    def test_death_cif_shape(self, truths):
        """Test the empirical death CIF stays within 0.02 of the closed form"""
        death = np.sort([t.true_time for t in truths if t.true_cause == EventCause.DEATH])
        empirical = np.arange(1, len(death) + 1) / len(truths)
        assert np.max(np.abs(empirical - true_cif(death, 0.0, 0.4, 10.0))) < 0.02


class TestRenderedCohort:
    """Test cases for the calendar rendering and its round trip through ingestion"""

    @pytest.fixture
    def rendered(self, tmp_path):
        spec = CohortSpec(
            n=300,
            p_mix=0.35,
            censor_max=90.0,
            admission_window_days=60,
            factors=[
                SynthFactor(name="vaccination_status",
                            levels=["Unvaccinated", "FirstDoseUnder21d", "FirstDose21dPlus", "SecondDose14dPlus"],
                            probabilities=[0.4, 0.2, 0.2, 0.2]),
                SynthFactor(name="age_band", levels=["45-64", "85+"], probabilities=[0.5, 0.5]),
            ],
            beta_death=[0.1, 0.2, -0.5, 0.8],
            beta_discharge=[0.0, 0.0, 0.0, -0.2],
            seed=4,
        )
        cohort, truth = str(tmp_path / "cohort.csv"), str(tmp_path / "truth.csv")
        admissions, truths = write_synthetic_cohort(spec, cohort, truth)
        return spec, admissions, truths, cohort, truth

    def test_ingest_rejects_nothing(self, rendered):
        """Test the written cohort ingests back without rejections"""
        spec, admissions, _, cohort, _ = rendered
        ingested, report = ingest_cohort(cohort)
        assert report.rows_rejected == 0
        assert ingested == admissions

    def test_preprocessing_recovers_day_times(self, rendered):
        """Test preprocessing at the extraction date reproduces the truth ledger on the day scale"""
        spec, admissions, truths, _, _ = rendered
        records = CohortProcessor(spec.horizon_days, extraction_date=extraction_date(spec)).preprocess(admissions)
        assert len(records) == spec.n
        for record, truth in zip(records, truths):
            assert record.covariates["vaccination_status"] == truth.covariates["vaccination_status"]
            assert record.covariates["age_band"] == truth.covariates["age_band"]
            assert record.event == truth.observed_event
            if truth.observed_event == EventCause.CENSORED:
                assert record.time_days == truth.censor_time
            else:
                assert record.time_days == math.ceil(truth.true_time)

    def test_admissions_inside_window(self, rendered):
        """Test every admission, censored or not, lies inside the configured window"""
        spec, admissions, truths, _, _ = rendered
        first = spec.admission_start
        last = first + timedelta(days=spec.admission_window_days - 1)
        assert all(first <= raw.admission_date <= last for raw in admissions)
        censored = [t for t in truths if t.observed_event == EventCause.CENSORED]
        assert censored
        assert all(first <= t.admission_date <= last for t in censored)

    def test_censoring_follows_extraction(self, rendered):
        """Test censoring time is the follow-up to extraction, capped at the horizon"""
        spec, admissions, truths, _, _ = rendered
        extraction = extraction_date(spec)
        for raw, truth in zip(admissions, truths):
            follow_up = (extraction - raw.admission_date).days
            assert truth.censor_time == min(follow_up, spec.horizon_days)
            after_extraction = math.ceil(truth.true_time) > follow_up
            assert (raw.outcome_kind == OutcomeKind.STILL_IN_HOSPITAL) == after_extraction
            if raw.outcome_date is not None:
                assert raw.outcome_date <= extraction
            assert raw.specimen_date == raw.admission_date
            assert 0 <= (raw.admission_date - raw.onset_date).days <= 10

    def test_truth_file(self, rendered):
        """Test the truth CSV header lists the ledger columns then the drawn factors"""
        _, _, truths, _, truth = rendered
        with open(truth) as f:
            header = f.readline().strip().split(",")
        assert header == TRUTH_COLUMNS + ["vaccination_status", "age_band"]
        assert list(truth_frame(truths).columns) == header


class TestExtraction:
    """Test cases for the extraction date of rendered cohorts"""

    def test_no_censoring_keeps_full_follow_up(self, simple_spec):
        """Test censor_max = 0 gives every admission the whole horizon"""
        last = simple_spec.admission_start + timedelta(days=simple_spec.admission_window_days - 1)
        assert extraction_date(simple_spec) == last + timedelta(days=simple_spec.horizon_days)

    def test_all_censored_cohort(self):
        """Test a one-day window with extraction on that day censors everyone at day 0"""
        spec = plain_spec(n=50, censor_max=90.0, admission_window_days=1)
        admissions, truths = generate_cohort(spec)
        assert extraction_date(spec) == spec.admission_start
        assert all(raw.outcome_kind == OutcomeKind.STILL_IN_HOSPITAL for raw in admissions)
        records = CohortProcessor(spec.horizon_days).preprocess(admissions)
        assert all(r.event == EventCause.CENSORED and r.time_days == 0.0 for r in records)
        assert all(t.observed_event == EventCause.CENSORED for t in truths)

    def test_censor_max_beyond_horizon(self):
        """Test censor_max is bounded by the horizon"""
        with pytest.raises(ValueError):
            plain_spec(censor_max=120.0)


class TestLoadSpec:
    """Test cases for load_spec"""

    def test_valid(self, tmp_path, simple_spec):
        """Test a valid spec file loads"""
        path = tmp_path / "spec.json"
        path.write_text(simple_spec.model_dump_json())
        assert load_spec(str(path)) == simple_spec

    def test_missing_file(self, tmp_path):
        """Test a missing spec file is an IO error"""
        with pytest.raises(CohortIOError) as info:
            load_spec(str(tmp_path / "absent.json"))
        assert info.value.exit_code == 1

    def test_bad_json(self, tmp_path):
        """Test malformed JSON fails validation"""
        path = tmp_path / "spec.json"
        path.write_text("{not json")
        with pytest.raises(InputValidationError):
            load_spec(str(path))

    def test_invalid_values(self, tmp_path):
        """Test out-of-range values fail validation"""
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"n": 10, "p_mix": 1.5}))
        with pytest.raises(InputValidationError) as info:
            load_spec(str(path))
        assert info.value.exit_code == 2


@pytest.mark.slow
class TestRecovery:
    """Fitting the generated cohort recovers the generating coefficients"""

    def test_coefficients_within_three_standard_errors(self):
        """Test fitting recovers the generating coefficients within 3 SE"""
        spec = CohortSpec(
            n=20000,
            p_mix=0.4,
            beta_death=[0.5, -0.3],
            beta_discharge=[0.0, 0.2],
            censor_max=90.0,
            admission_window_days=30,
            factors=[
                SynthFactor(name="sex", levels=["Female", "Male"], probabilities=[0.5, 0.5]),
                SynthFactor(name="imd_quintile", levels=["5", "1"], probabilities=[0.6, 0.4]),
            ],
            seed=2024,
        )
        _, truths = generate_cohort(spec)
        records = truth_to_records(truths)
        censored = np.mean([r.event == EventCause.CENSORED for r in records])
        assert 0.15 < censored < 0.6

        schema = CovariateSchema(factors=[
            FactorSpec(name=f.name, levels=f.levels, reference=f.levels[0]) for f in spec.factors
        ])
        model = fit_fine_gray(records, schema)
        assert model.columns == spec.design_columns
        for estimate, se, truth in zip(model.beta, model.standard_errors, spec.beta_death):
            assert abs(estimate - truth) < 3 * se
