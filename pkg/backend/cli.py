"""
Command-line front end: crivet preprocess|cif|fit|sensitivity|simulate.

Run settings come from a JSON file validated as RunConfig; flags override it.
Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 numerical failure.
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from config import Config, config as default_config
from exceptions import CohortIOError, CrivetError, InputValidationError
from models import RunConfig
from pipeline import AnalysisPipeline, CifResult, FitResult, PreprocessResult, SimulationSummary
from sensitivity import SensitivityResult

logger = logging.getLogger(__name__)

COMMANDS = ("preprocess", "cif", "fit", "sensitivity", "simulate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crivet", description="Competing-risks analysis of hospitalised cohorts")
    parser.add_argument("command", choices=COMMANDS, help="Pipeline stage to run")
    parser.add_argument("--config", help="Path to a JSON run configuration")
    parser.add_argument("--input", action="append", help="Input CSV (repeat for several files)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Seed for bootstrap or simulation")
    parser.add_argument("--bootstrap", type=int, help="Bootstrap replicates for median length of stay")
    parser.add_argument("--preset", choices=["month", "vaccination", "null"], help="Regression preset")
    parser.add_argument("--spec", help="Synthetic cohort spec (simulate)")
    parser.add_argument("--extraction-date", help="Data extraction date, YYYY-MM-DD")
    parser.add_argument("--agreement", action="store_true", help="Also export the AJ vs Fine-Gray agreement table")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def load_run_config(path: Optional[str], overrides: Dict) -> RunConfig:
    """JSON config (optional) with flag overrides applied on top"""
    payload = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except OSError as e:
            raise CohortIOError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise InputValidationError(f"config {path} is not valid JSON: {e}")
        if not isinstance(payload, dict):
            raise InputValidationError(f"config {path} must hold a JSON object")
    payload.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise InputValidationError(f"invalid run configuration: {e}")


def _overrides(args: argparse.Namespace) -> Dict:
    return {
        "input": args.input,
        "out": args.out,
        "seed": args.seed,
        "bootstrap": args.bootstrap,
        "preset": args.preset,
        "extraction_date": args.extraction_date,
        "agreement": True if args.agreement else None,
    }


def cmd_preprocess(pipeline: AnalysisPipeline) -> PreprocessResult:
    result = pipeline.preprocess()
    counts = result.counts
    total = max(len(result.records), 1)
    print(f"Rows read: {result.report.rows_read}, accepted: {result.report.rows_accepted}, "
          f"rejected: {result.report.rows_rejected}")
    for label in ("death", "discharge", "censored"):
        print(f"  {label:<10} {counts[label]:>8} ({100 * counts[label] / total:.1f}%)")
    print(f"Analysis table written to {pipeline.run.out}")
    return result


def cmd_cif(pipeline: AnalysisPipeline) -> CifResult:
    result = pipeline.cif()
    for summary in result.summaries:
        row = summary.to_dict()
        print(f"{summary.group or 'all':<30} n={summary.subjects:<7} HFR {row['hfr_text']:<24} "
              f"LoS death {row['los_death_text']:<18} LoS discharge {row['los_discharge_text']}")
    return result


def cmd_fit(pipeline: AnalysisPipeline) -> FitResult:
    result = pipeline.fit()
    diagnostics = result.model.diagnostics
    print(f"Converged in {diagnostics.iterations} iterations, log partial likelihood "
          f"{diagnostics.log_likelihood:.4f}, {len(result.model.strata)} strata")
    for row in result.hazard_ratios.to_dict("records"):
        print(f"  {row['characteristic']:<20} {row['level']:<20} {row['formatted']}")
    if result.agreement is not None and len(result.agreement):
        print(f"Max |AJ - FG| over the agreement window: {result.agreement['abs_diff'].max():.2e}")
    return result


def cmd_sensitivity(pipeline: AnalysisPipeline) -> SensitivityResult:
    result = pipeline.sensitivity()
    if result.excluded_without_onset:
        print(f"Excluded {result.excluded_without_onset} admissions without onset date")
    for shift in result.results:
        print(f"Shift c={shift.shift_days}: {shift.subjects} records, "
              f"{shift.model.diagnostics.iterations} iterations")
    return result


def cmd_simulate(pipeline: AnalysisPipeline, spec_path: Optional[str], seed: Optional[int] = None) -> SimulationSummary:
    if not spec_path:
        raise InputValidationError("simulate needs --spec")
    summary = pipeline.simulate(spec_path, seed)
    print(f"n={summary.n} death={summary.death_fraction:.4f} discharge={summary.discharge_fraction:.4f} "
          f"censored={summary.censoring_rate:.4f}")
    print(f"Cohort written to {summary.cohort_path}, truth to {summary.truth_path}")
    if summary.extraction_date is not None:
        print(f"Extraction date {summary.extraction_date.isoformat()} (pass --extraction-date to preprocess)")
    return summary


def main(argv: Optional[List[str]] = None, settings: Optional[Config] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = settings or default_config
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        run = load_run_config(args.config, _overrides(args))
        pipeline = AnalysisPipeline(settings, run)
        if args.command == "preprocess":
            cmd_preprocess(pipeline)
        elif args.command == "cif":
            cmd_cif(pipeline)
        elif args.command == "fit":
            cmd_fit(pipeline)
        elif args.command == "sensitivity":
            cmd_sensitivity(pipeline)
        else:
            cmd_simulate(pipeline, args.spec, args.seed)
    except CrivetError as e:
        diagnostics = getattr(e, "diagnostics", None)
        print(f"Error: {e}", file=sys.stderr)
        if diagnostics is not None:
            print(f"Diagnostics: {diagnostics}", file=sys.stderr)
        return e.exit_code
    return 0
