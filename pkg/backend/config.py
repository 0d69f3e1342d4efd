import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_threads() -> Optional[int]:
    value = os.getenv("CRIVET_THREADS", "").strip()
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        return None


@dataclass
class Config:
    """Configuration settings for the competing-risks pipeline"""
    # Follow-up
    HORIZON_DAYS: int = 90               # Right-censoring cut-off from first positive specimen
    PALLIATIVE_WINDOW_DAYS: int = 14     # Deaths this soon after discharge count as deaths

    # Nonparametric estimation
    BOOTSTRAP_REPLICATES: int = 500      # Resamples for median length-of-stay intervals
    BOOTSTRAP_SEED: int = 20200315
    CONFIDENCE_Z: float = 1.959963984540054

    # Fine-Gray fitting
    MAX_NEWTON_ITERATIONS: int = 50
    MAX_STEP_HALVINGS: int = 10
    SEPARATION_THRESHOLD: float = 15.0
    LOGLIK_TOLERANCE: float = 1e-9       # Relative log-likelihood change
    SCORE_TOLERANCE: float = 1e-6        # Max absolute score component
    MIN_STRATUM_CENSORINGS: int = 10     # Below this a stratum uses the pooled censoring KM

    # Sensitivity analysis
    SHIFT_DAYS: Tuple[int, ...] = (0, 1, 2, 3, 4)

    # Agreement export window (days after admission)
    AGREEMENT_DAYS: int = 60

    # Runtime
    THREADS: Optional[int] = field(default_factory=_env_threads)
    LOG_LEVEL: str = os.getenv("CRIVET_LOG_LEVEL", "INFO")

    def worker_count(self) -> int:
        """Number of worker threads; CRIVET_THREADS caps the machine default"""
        default = os.cpu_count() or 1
        if self.THREADS is None:
            return default
        return max(1, min(self.THREADS, default))


@dataclass(frozen=True)
class AnalysisPreset:
    """Stratification and main effects for one regression analysis"""
    name: str
    strata: List[str]
    main_effects: List[str]


# The two adjusted regressions, plus the zero-covariate fit used for agreement checks
PRESETS: Dict[str, AnalysisPreset] = {
    "month": AnalysisPreset(
        name="month",
        strata=["age_band", "region", "vaccination_status"],
        main_effects=["admission_month", "sex", "ethnicity", "imd_quintile", "hospital_load", "cci_band"],
    ),
    "vaccination": AnalysisPreset(
        name="vaccination",
        strata=["age_band", "region", "admission_month"],
        main_effects=["vaccination_status", "sex", "ethnicity", "imd_quintile", "hospital_load", "cci_band"],
    ),
    "null": AnalysisPreset(name="null", strata=[], main_effects=[]),
}

# Reference categories used when a run does not name its own
DEFAULT_REFERENCES: Dict[str, str] = {
    "admission_month": "2020-06",
    "onset_month": "2020-06",
    "sex": "Female",
    "ethnicity": "White",
    "imd_quintile": "5",
    "cci_band": "0",
    "hospital_load": "0-20",
    "vaccination_status": "Unvaccinated",
    "age_band": "45-64",
}

config = Config()
