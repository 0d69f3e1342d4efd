"""
Cohort quality monitoring: ingestion rejections, preprocessing warnings and
the descriptive tables written alongside every preprocessing run.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import pandas as pd

from models import AnalysisRecord, EventCause, RawAdmission, VaccinationStatus

WARNING_PREFIX = "warning: "
WEEKLY_COLUMNS = ["week_start", "admissions"]


@dataclass
class RejectionReport:
    """Rows dropped per reason, plus non-fatal warnings"""
    rejections: Counter = field(default_factory=Counter)
    warnings: Counter = field(default_factory=Counter)
    rows_read: int = 0

    @property
    def rows_rejected(self) -> int:
        return sum(self.rejections.values())

    @property
    def rows_accepted(self) -> int:
        return self.rows_read - self.rows_rejected

    def reject(self, reason: str):
        self.rejections[reason] += 1

    def warn(self, reason: str):
        self.warnings[reason] += 1

    def merge(self, other: "RejectionReport") -> "RejectionReport":
        """Combine reports from disjoint shards"""
        return RejectionReport(
            rejections=self.rejections + other.rejections,
            warnings=self.warnings + other.warnings,
            rows_read=self.rows_read + other.rows_read,
        )

    def is_empty(self) -> bool:
        return not self.rejections and not self.warnings

    def to_frame(self) -> pd.DataFrame:
        """One row per (reason, count), rejections first, each block sorted by reason"""
        rows = [(reason, self.rejections[reason]) for reason in sorted(self.rejections)]
        rows += [(WARNING_PREFIX + reason, self.warnings[reason]) for reason in sorted(self.warnings)]
        return pd.DataFrame(rows, columns=["reason", "count"])

    def write_csv(self, path: str):
        self.to_frame().to_csv(path, index=False)


class CohortOutcomeMonitor:
    """Summarises analysis records by covariate level and outcome"""

    OUTCOME_COLUMNS = {
        EventCause.DEATH: "death",
        EventCause.DISCHARGE: "discharge",
        EventCause.CENSORED: "censored",
    }

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.logger = logger or logging.getLogger(__name__)

    def outcome_counts(self, records: Iterable[AnalysisRecord]) -> Dict[str, int]:
        """Total deaths, discharges and right-censored stays"""
        counts = Counter(record.event for record in records)
        return {label: counts.get(cause, 0) for cause, label in self.OUTCOME_COLUMNS.items()}

    def outcome_table(self, records: List[AnalysisRecord], factors: Optional[List[str]] = None) -> pd.DataFrame:
        """
        Outcome counts and row percentages per covariate level.

        Args:
            records: Preprocessed analysis records
            factors: Covariates to tabulate; defaults to every covariate of the first record

        Returns:
            DataFrame with characteristic, level and count/percentage columns per outcome
        """
        columns = ["characteristic", "level"]
        for label in self.OUTCOME_COLUMNS.values():
            columns += [label, f"{label}_pct"]
        if not records:
            return pd.DataFrame(columns=columns)

        if factors is None:
            factors = list(records[0].covariates)

        frame = pd.DataFrame({
            "event": [int(record.event) for record in records],
            **{name: [record.covariates.get(name, "") for record in records] for name in factors},
        })

        rows = []
        for name in factors:
            grouped = frame.groupby(name)["event"]
            for level, events in sorted(grouped, key=lambda item: item[0]):
                total = len(events)
                row = {"characteristic": name, "level": level}
                for cause, label in self.OUTCOME_COLUMNS.items():
                    count = int((events == int(cause)).sum())
                    row[label] = count
                    row[f"{label}_pct"] = round(100.0 * count / total, 1)
                rows.append(row)
        return pd.DataFrame(rows, columns=columns)

    def weekly_admissions(self, admissions: Iterable[RawAdmission]) -> pd.DataFrame:
        """
        Admissions per calendar week (weeks start on Monday).

        Weeks between the first and last admission with no admissions are
        listed with a zero count.
        """
        dates = pd.to_datetime(pd.Series([raw.admission_date for raw in admissions], dtype="object"))
        if dates.empty:
            return pd.DataFrame(columns=WEEKLY_COLUMNS)
        week_start = dates - pd.to_timedelta(dates.dt.weekday, unit="D")
        counts = week_start.value_counts().sort_index()
        weeks = pd.date_range(counts.index.min(), counts.index.max(), freq="7D")
        counts = counts.reindex(weeks, fill_value=0)
        self.logger.debug("Tabulated %d admissions over %d weeks", int(counts.sum()), len(weeks))
        return pd.DataFrame({
            "week_start": [week.date().isoformat() for week in weeks],
            "admissions": counts.to_numpy(dtype=int),
        }, columns=WEEKLY_COLUMNS)

    def vaccination_table(self, records: List[AnalysisRecord],
                          age_levels: Optional[List[str]] = None) -> pd.DataFrame:
        """
        Vaccination status by admission month and age band.

        Args:
            records: Preprocessed analysis records with admission_month, age_band and vaccination_status
            age_levels: Display order of the age bands; unlisted bands follow, sorted

        Returns:
            One row per observed (month, age band) cell with its total, then
            count and row percentage per vaccination status
        """
        statuses = [status.value for status in VaccinationStatus]
        columns = ["admission_month", "age_band", "total"]
        for status in statuses:
            columns += [status, f"{status}_pct"]
        if not records:
            return pd.DataFrame(columns=columns)

        frame = pd.DataFrame({
            name: [record.covariates[name] for record in records]
            for name in ("admission_month", "age_band", "vaccination_status")
        })
        counts = (frame.groupby(["admission_month", "age_band"])["vaccination_status"]
                  .value_counts()
                  .unstack(fill_value=0)
                  .reindex(columns=statuses, fill_value=0))

        known = list(age_levels or [])
        rank = {level: i for i, level in enumerate(known)}
        cells = sorted(counts.index, key=lambda cell: (cell[0], rank.get(cell[1], len(known)), cell[1]))

        rows = []
        for month, band in cells:
            cell = counts.loc[(month, band)]
            total = int(cell.sum())
            row = {"admission_month": month, "age_band": band, "total": total}
            for status in statuses:
                row[status] = int(cell[status])
                row[f"{status}_pct"] = round(100.0 * int(cell[status]) / total, 1)
            rows.append(row)
        return pd.DataFrame(rows, columns=columns)
