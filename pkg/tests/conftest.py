"""
Test configuration and shared fixtures
"""
import pytest
import os
from datetime import date
from typing import List

import numpy as np

# Import the backend modules
import sys
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'backend'))

from models import AnalysisRecord, CohortSpec, EventCause, OutcomeKind, RawAdmission, SynthFactor
from config import Config

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def test_config():
    """Create test configuration"""
    config = Config()
    config.BOOTSTRAP_REPLICATES = 50
    config.THREADS = 1
    return config


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def make_raw():
    """Factory for valid admissions with overridable fields"""
    def _make(**overrides) -> RawAdmission:
        fields = dict(
            subject_id="P001",
            admission_date=date(2020, 4, 1),
            specimen_date=date(2020, 4, 1),
            onset_date=date(2020, 3, 27),
            outcome_kind=OutcomeKind.DISCHARGED,
            outcome_date=date(2020, 4, 8),
            age_years=70,
            sex="Male",
            ethnicity="White",
            region="London",
            imd_quintile="3",
            cci_score=1,
            trust_id="T001",
        )
        fields.update(overrides)
        return RawAdmission(**fields)
    return _make


def records_from(times, events, weights=None, covariates=None) -> List[AnalysisRecord]:
    weights = weights if weights is not None else [1.0] * len(times)
    covariates = covariates if covariates is not None else [{}] * len(times)
    return [
        AnalysisRecord(subject_id=f"R{i:03d}", time_days=float(t), event=EventCause(int(e)),
                       weight=float(w), covariates=dict(c))
        for i, (t, e, w, c) in enumerate(zip(times, events, weights, covariates))
    ]


@pytest.fixture
def make_records():
    return records_from


@pytest.fixture
def hand_records():
    """Five subjects: deaths at 1 and 4, discharges at 2 and 3, one censored at 5"""
    return records_from([1, 2, 3, 4, 5], [1, 2, 2, 1, 0])


@pytest.fixture
def random_records():
    """Seeded competing-risks sample with ties, censoring and one binary covariate"""
    rng = np.random.default_rng(7)
    n = 60
    times = rng.integers(1, 30, n)
    events = rng.choice([0, 1, 2], size=n, p=[0.2, 0.3, 0.5])
    groups = rng.choice(["a", "b"], size=n)
    return records_from(times, events, covariates=[{"group": g} for g in groups])


@pytest.fixture
def simple_spec():
    """Two-factor synthetic cohort spec"""
    return CohortSpec(
        n=200,
        beta_death=[0.5, -0.3],
        p_mix=0.4,
        beta_discharge=[0.0, 0.2],
        censor_max=0.0,
        factors=[
            SynthFactor(name="sex", levels=["Female", "Male"], probabilities=[0.5, 0.5]),
            SynthFactor(name="imd_quintile", levels=["5", "1"], probabilities=[0.6, 0.4]),
        ],
        seed=11,
    )
