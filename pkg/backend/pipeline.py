import itertools
import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cohort_model import (
    AGE_BAND_LABELS,
    CCI_BAND_LABELS,
    LOAD_BAND_LABELS,
    VACCINATION_LABELS,
    CohortProcessor,
    TrustLoadIndex,
    ingest_cohort,
    read_analysis_csv,
    write_analysis_csv,
)
from config import DEFAULT_REFERENCES, PRESETS, Config
from exceptions import CohortIOError, InputValidationError
from fine_gray import FgModel, assign_strata, fit_fine_gray, hazard_ratios, predict_cif
from models import AnalysisRecord, CohortSpec, CovariateSchema, EventCause, FactorSpec, RawAdmission, RunConfig
from monitoring.cohort_monitor import CohortOutcomeMonitor, RejectionReport
from nonparametric import CAUSES, aalen_johansen, build_event_table, curve_rows, hfr_at_horizon, weighted_median_los
from sensitivity import ONSET_FACTOR, SensitivityResult, ShiftSpec, run_sensitivity
from synthcohort import TruthRecord, extraction_date, load_spec, write_synthetic_cohort

logger = logging.getLogger(__name__)

DASH = "-"
SUMMARY_COLUMNS = ["group", "hfr", "hfr_lo", "hfr_hi", "median_los_death", "los_death_lo", "los_death_hi",
                   "median_los_discharge", "los_discharge_lo", "los_discharge_hi"]
HR_COLUMNS = ["characteristic", "level", "hazard_ratio", "ci_lower", "ci_upper", "reference_flag", "formatted"]
AGREEMENT_COLUMNS = ["stratum", "time_days", "aalen_johansen", "fine_gray", "abs_diff"]

# Output file names inside the run directory
ANALYSIS_FILE = "analysis.csv"
REJECTIONS_FILE = "rejections.csv"
OUTCOME_SUMMARY_FILE = "outcome_summary.csv"
WEEKLY_ADMISSIONS_FILE = "weekly_admissions.csv"
VACCINATION_TABLE_FILE = "vaccination_by_month_age.csv"
CIF_SUMMARY_FILE = "cif_summary.csv"
CIF_CURVES_FILE = "cif_curves.csv"
HR_FILE = "hazard_ratios.csv"
MODEL_FILE = "model.json"
AGREEMENT_FILE = "agreement.csv"
SENSITIVITY_FILE = "sensitivity.csv"
COHORT_FILE = "cohort.csv"
TRUTH_FILE = "truth.csv"

# Level orderings that are not alphabetical
ORDERED_LEVELS = {
    "age_band": AGE_BAND_LABELS,
    "cci_band": CCI_BAND_LABELS,
    "hospital_load": LOAD_BAND_LABELS,
    "vaccination_status": VACCINATION_LABELS,
}


def format_percent(value: float, lower: float, upper: float) -> str:
    """0.403, 0.394, 0.413 -> '40.3% (39.4 - 41.3%)'"""
    return f"{100 * value:.1f}% ({100 * lower:.1f} - {100 * upper:.1f}%)"


def format_days(value: float, lower: float, upper: float) -> str:
    return f"{value:.1f} ({lower:.1f} - {upper:.1f})"


def group_seed(seed: int, label: str) -> int:
    """Per-group bootstrap seed; independent of which other groups exist"""
    return (seed ^ zlib.crc32(label.encode("utf-8"))) % 2 ** 64


def order_levels(name: str, levels) -> List[str]:
    known = ORDERED_LEVELS.get(name)
    if known is None:
        return sorted(levels)
    return [level for level in known if level in levels] + sorted(set(levels) - set(known))


def build_schema(records: Sequence[AnalysisRecord], strata: Sequence[str], main_effects: Sequence[str],
                 references: Optional[Dict[str, str]] = None) -> CovariateSchema:
    """
    Schema with levels observed in the records.

    Reference levels come from `references`, then DEFAULT_REFERENCES, then the first level.
    """
    references = references or {}
    factors = []
    for name in list(strata) + list(main_effects):
        try:
            levels = order_levels(name, {record.covariates[name] for record in records})
        except KeyError:
            raise InputValidationError(f"records lack covariate {name!r}")
        if not levels:
            raise InputValidationError(f"no levels observed for {name!r}")
        if name in references:
            if references[name] not in levels:
                raise InputValidationError(f"reference {references[name]!r} is not a level of {name}")
            reference = references[name]
        else:
            default = DEFAULT_REFERENCES.get(name)
            reference = default if default in levels else levels[0]
        factors.append(FactorSpec(name=name, levels=levels, reference=reference))
    return CovariateSchema(factors=factors, stratum_factors=list(strata))


@dataclass(frozen=True)
class PreprocessResult:
    records: List[AnalysisRecord]
    report: RejectionReport
    outcome_summary: pd.DataFrame
    counts: Dict[str, int]
    weekly_admissions: pd.DataFrame = field(default_factory=pd.DataFrame)
    vaccination_table: pd.DataFrame = field(default_factory=pd.DataFrame)


@dataclass(frozen=True)
class GroupSummary:
    """One row of the grouped CIF table; None fields render as dashes"""
    group: str
    subjects: int
    hfr: Optional[Tuple[float, float, float]] = None
    los_death: Optional[Tuple[float, float, float]] = None
    los_discharge: Optional[Tuple[float, float, float]] = None

    def to_dict(self) -> Dict:
        row = {"group": self.group, "n": self.subjects}
        for prefix, names, value in (
            ("hfr", ("hfr", "hfr_lo", "hfr_hi"), self.hfr),
            ("los_death", ("median_los_death", "los_death_lo", "los_death_hi"), self.los_death),
            ("los_discharge", ("median_los_discharge", "los_discharge_lo", "los_discharge_hi"), self.los_discharge),
        ):
            for name, number in zip(names, value or (np.nan,) * 3):
                row[name] = number
        row["hfr_text"] = format_percent(*self.hfr) if self.hfr else DASH
        row["los_death_text"] = format_days(*self.los_death) if self.los_death else DASH
        row["los_discharge_text"] = format_days(*self.los_discharge) if self.los_discharge else DASH
        return row


@dataclass(frozen=True)
class CifResult:
    summaries: List[GroupSummary]
    curves: pd.DataFrame


@dataclass(frozen=True)
class FitResult:
    model: FgModel
    hazard_ratios: pd.DataFrame
    agreement: Optional[pd.DataFrame] = None


@dataclass(frozen=True)
class SimulationSummary:
    n: int
    death_fraction: float
    discharge_fraction: float
    censoring_rate: float
    cohort_path: str
    truth_path: str
    extraction_date: Optional[date] = None


class AnalysisPipeline:
    """Orchestrates ingestion, preprocessing, estimation and export for one run"""

    def __init__(self, settings: Config, run: RunConfig):
        self.settings = settings
        self.run = run
        self.threads = settings.worker_count()
        self.processor = CohortProcessor(run.horizon_days, settings.PALLIATIVE_WINDOW_DAYS, run.extraction_date)
        self.monitor = CohortOutcomeMonitor(logger)

    # -- helpers ---------------------------------------------------------------

    def _inputs(self) -> List[str]:
        if not self.run.input:
            raise InputValidationError("no input file given")
        return list(self.run.input)

    def _path(self, name: str) -> str:
        try:
            os.makedirs(self.run.out, exist_ok=True)
        except OSError as e:
            raise CohortIOError(f"cannot create output directory {self.run.out}: {e}")
        return os.path.join(self.run.out, name)

    def _write_frame(self, frame: pd.DataFrame, name: str) -> str:
        path = self._path(name)
        try:
            frame.to_csv(path, index=False)
        except OSError as e:
            raise CohortIOError(f"cannot write {path}: {e}")
        return path

    def _write_json(self, payload: Dict, name: str) -> str:
        path = self._path(name)
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2)
                f.write("\n")
        except OSError as e:
            raise CohortIOError(f"cannot write {path}: {e}")
        return path

    def ingest(self) -> Tuple[List[RawAdmission], RejectionReport]:
        """Ingest every input file; shards are read in parallel and merged in input order"""
        paths = self._inputs()
        if self.threads > 1 and len(paths) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                batches = list(pool.map(ingest_cohort, paths))
        else:
            batches = [ingest_cohort(path) for path in paths]

        admissions, report = [], RejectionReport()
        for batch, batch_report in batches:
            admissions.extend(batch)
            report = report.merge(batch_report)
        return admissions, report

    def load_records(self) -> List[AnalysisRecord]:
        records = []
        for path in self._inputs():
            records.extend(read_analysis_csv(path))
        if not records:
            raise InputValidationError("analysis table is empty")
        return records

    def preset_factors(self) -> Tuple[List[str], List[str]]:
        preset = PRESETS[self.run.preset]
        strata = self.run.strata if self.run.strata is not None else preset.strata
        main_effects = self.run.main_effects if self.run.main_effects is not None else preset.main_effects
        overlap = set(strata) & set(main_effects)
        if overlap:
            raise InputValidationError(f"factors both stratified and adjusted for: {sorted(overlap)}")
        return list(strata), list(main_effects)

    # -- commands --------------------------------------------------------------

    def preprocess(self) -> PreprocessResult:
        """Ingest, derive covariates, censor; write the analysis table, rejections and descriptive tables"""
        admissions, report = self.ingest()
        records = self.processor.preprocess(admissions, report)
        summary = self.monitor.outcome_table(records)
        kept = {record.subject_id for record in records}
        weekly = self.monitor.weekly_admissions(raw for raw in admissions if raw.subject_id in kept)
        vaccination = self.monitor.vaccination_table(records, ORDERED_LEVELS["age_band"])

        write_analysis_csv(records, self._path(ANALYSIS_FILE))
        self._write_frame(report.to_frame(), REJECTIONS_FILE)
        self._write_frame(summary, OUTCOME_SUMMARY_FILE)
        self._write_frame(weekly, WEEKLY_ADMISSIONS_FILE)
        self._write_frame(vaccination, VACCINATION_TABLE_FILE)
        logger.info("Preprocessed %d records (%d rejected)", len(records), report.rows_rejected)
        return PreprocessResult(records, report, summary, self.monitor.outcome_counts(records), weekly, vaccination)

    def group_labels(self, records: Sequence[AnalysisRecord]) -> List[str]:
        """Every combination of observed levels of the grouping factors, sorted"""
        if not self.run.group_by:
            return [""]
        try:
            levels = [order_levels(name, {record.covariates[name] for record in records})
                      for name in self.run.group_by]
        except KeyError as e:
            raise InputValidationError(f"records lack grouping factor {e.args[0]!r}")
        return sorted("|".join(combination) for combination in itertools.product(*levels))

    def summarise_group(self, label: str, records: Sequence[AnalysisRecord]) -> Tuple[GroupSummary, List[Dict]]:
        """Nonparametric estimates for one group; empty groups become dash rows"""
        if not records:
            return GroupSummary(group=label, subjects=0), []
        curves, _ = aalen_johansen(build_event_table(records), self.settings.CONFIDENCE_Z)
        risk, (low, high) = hfr_at_horizon(curves[EventCause.DEATH], self.run.horizon_days)

        medians = {}
        seed = group_seed(self.run.seed, label)
        for cause in CAUSES:
            try:
                estimate = weighted_median_los(curves[cause], self.run.bootstrap, seed)
                medians[cause] = (estimate.median_days, estimate.ci_lower, estimate.ci_upper)
            except InputValidationError:
                medians[cause] = None

        rows = [{"group": label, **row} for row in curve_rows(curves)]
        summary = GroupSummary(label, len(records), (risk, low, high),
                               medians[EventCause.DEATH], medians[EventCause.DISCHARGE])
        return summary, rows

    def cif(self) -> CifResult:
        """Grouped hospitalised fatality risk and median length of stay"""
        records = self.load_records()
        labels = self.group_labels(records)
        members: Dict[str, List[AnalysisRecord]] = {label: [] for label in labels}
        for record in records:
            members["|".join(record.covariates[name] for name in self.run.group_by)].append(record)

        if self.threads > 1 and len(labels) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda label: self.summarise_group(label, members[label]), labels))
        else:
            results = [self.summarise_group(label, members[label]) for label in labels]

        summaries = [summary for summary, _ in results]
        curves = pd.DataFrame([row for _, rows in results for row in rows],
                              columns=["group", "cause", "time_days", "estimate", "variance", "ci_lower", "ci_upper"])
        summary_frame = pd.DataFrame([summary.to_dict() for summary in summaries],
                                     columns=SUMMARY_COLUMNS + ["n", "hfr_text", "los_death_text", "los_discharge_text"])
        self._write_frame(summary_frame, CIF_SUMMARY_FILE)
        self._write_frame(curves, CIF_CURVES_FILE)
        return CifResult(summaries, curves)

    def agreement(self, model: FgModel, records: Sequence[AnalysisRecord]) -> pd.DataFrame:
        """
        Aalen-Johansen vs Fine-Gray death CIF per stratum at reference covariates, daily.

        Records are grouped by their `stratum` label (see assign_strata).
        """
        by_stratum: Dict[str, List[AnalysisRecord]] = {}
        for record in records:
            by_stratum.setdefault(record.stratum, []).append(record)

        rows = []
        for stratum in model.strata:
            curves, _ = aalen_johansen(build_event_table(by_stratum[stratum]))
            predicted = predict_cif(model, {}, stratum)
            for day in range(self.settings.AGREEMENT_DAYS + 1):
                nonparametric = curves[EventCause.DEATH].value_at(day)
                regression = predicted.value_at(day)
                rows.append({"stratum": stratum, "time_days": day, "aalen_johansen": nonparametric,
                             "fine_gray": regression, "abs_diff": abs(nonparametric - regression)})
        return pd.DataFrame(rows, columns=AGREEMENT_COLUMNS)

    def fit(self) -> FitResult:
        """Stratified Fine-Gray fit for the configured preset"""
        records = self.load_records()
        strata, main_effects = self.preset_factors()
        schema = build_schema(records, strata, main_effects, self.run.references)
        records = assign_strata(records, schema)
        model = fit_fine_gray(records, schema, settings=self.settings, threads=self.threads)

        table = pd.DataFrame([row.to_dict() for row in hazard_ratios(model, self.settings.CONFIDENCE_Z).rows],
                             columns=HR_COLUMNS)
        self._write_frame(table, HR_FILE)
        self._write_json(model.to_dict(), MODEL_FILE)

        agreement = None
        if self.run.agreement or self.run.preset == "null":
            agreement = self.agreement(model, records)
            self._write_frame(agreement, AGREEMENT_FILE)
        return FitResult(model, table, agreement)

    def sensitivity_factors(self) -> Tuple[List[str], List[str]]:
        """Preset factors with month of onset in place of month of admission"""
        def swap(names: List[str]) -> List[str]:
            return [ONSET_FACTOR if name == "admission_month" else name for name in names]

        strata, main_effects = self.preset_factors()
        strata, main_effects = swap(strata), swap(main_effects)
        if ONSET_FACTOR not in strata + main_effects:
            main_effects.append(ONSET_FACTOR)
        return strata, main_effects

    def sensitivity(self) -> SensitivityResult:
        """Refit with onset dates of deaths moved back by each configured shift"""
        admissions, _ = self.ingest()
        if not admissions:
            raise InputValidationError("no valid admissions for the sensitivity analysis")
        with_onset = [raw for raw in admissions if raw.onset_date is not None]
        if not with_onset:
            raise InputValidationError(f"no admissions have an onset date ({len(admissions)} excluded)")

        strata, main_effects = self.sensitivity_factors()
        processor = CohortProcessor(self.processor.horizon_days, self.processor.palliative_window_days,
                                    self.run.extraction_date or CohortProcessor.latest_date(admissions))
        baseline = processor.preprocess(with_onset, load_index=TrustLoadIndex.from_admissions(admissions))
        schema = build_schema(baseline, strata, main_effects, self.run.references)
        result = run_sensitivity(admissions, schema, spec=ShiftSpec(shifts=self.run.shifts),
                                 processor=processor, settings=self.settings, threads=self.threads)
        self._write_frame(result.to_frame(), SENSITIVITY_FILE)
        return result

    def simulate(self, spec_path: str, seed: Optional[int] = None) -> SimulationSummary:
        """Generate a synthetic cohort and its truth ledger"""
        spec = load_spec(spec_path)
        if seed is not None:
            spec = CohortSpec.model_validate({**spec.model_dump(), "seed": seed})
        cohort_path, truth_path = self._path(COHORT_FILE), self._path(TRUTH_FILE)
        _, truths = write_synthetic_cohort(spec, cohort_path, truth_path, self.threads)
        summary = summarise_truth(truths, cohort_path, truth_path)
        return replace(summary, extraction_date=extraction_date(spec))


def summarise_truth(truths: Sequence[TruthRecord], cohort_path: str = "", truth_path: str = "") -> SimulationSummary:
    n = len(truths)
    events = [truth.observed_event for truth in truths]
    return SimulationSummary(
        n=n,
        death_fraction=sum(truth.true_cause == EventCause.DEATH for truth in truths) / n,
        discharge_fraction=sum(truth.true_cause == EventCause.DISCHARGE for truth in truths) / n,
        censoring_rate=sum(event == EventCause.CENSORED for event in events) / n,
        cohort_path=cohort_path,
        truth_path=truth_path,
    )
