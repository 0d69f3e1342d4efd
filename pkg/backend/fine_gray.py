"""
Stratified Fine-Gray regression for the subdistribution hazard of death.

Discharged patients stay in later risk sets with inverse-probability-of-
censoring weights G(t-)/G(T_i-). The weighted Breslow partial likelihood is
maximised by Newton-Raphson with step halving.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, inv, solve

from config import config as default_config
from exceptions import (
    CensoringSupportError,
    ConvergenceError,
    InputValidationError,
    NonFiniteError,
    SeparationError,
)
from models import AnalysisRecord, CovariateSchema, EventCause
from nonparametric import CifCurve, SubjectSample

logger = logging.getLogger(__name__)

REFERENCE_TEXT = "1 (reference category)"


@dataclass(frozen=True)
class CensoringKm:
    """Kaplan-Meier estimate G of remaining uncensored, stepping at censoring times"""
    times: np.ndarray
    values: np.ndarray

    def at(self, t):
        """G(t), right-continuous"""
        index = np.searchsorted(self.times, t, side="right") - 1
        return np.where(index < 0, 1.0, self.values[np.maximum(index, 0)]) if len(self.times) \
            else np.ones_like(np.asarray(t, dtype=float))

    def left(self, t):
        """G(t-), the left limit used by the weights"""
        index = np.searchsorted(self.times, t, side="left") - 1
        return np.where(index < 0, 1.0, self.values[np.maximum(index, 0)]) if len(self.times) \
            else np.ones_like(np.asarray(t, dtype=float))


def estimate_censoring_distribution(records: Union[SubjectSample, Sequence[AnalysisRecord]]) -> CensoringKm:
    """
    Product-limit estimate of the censoring distribution.

    Censorings are the events; deaths and discharges at the same time leave
    the risk set first.
    """
    sample = records if isinstance(records, SubjectSample) else SubjectSample.from_records(records)
    if len(sample) == 0:
        raise InputValidationError("censoring distribution needs at least one record")
    unique_times, inverse = np.unique(sample.times, return_inverse=True)
    censored = np.bincount(inverse, weights=sample.weights * (sample.events == EventCause.CENSORED),
                           minlength=len(unique_times))
    exits = np.bincount(inverse, weights=sample.weights, minlength=len(unique_times))
    at_risk = np.cumsum(exits[::-1])[::-1] - (exits - censored)

    has_censoring = censored > 0
    factors = 1.0 - censored[has_censoring] / at_risk[has_censoring]
    return CensoringKm(times=unique_times[has_censoring], values=np.cumprod(factors))


def fg_weight(record: AnalysisRecord, t: float, censoring: CensoringKm) -> float:
    """Subdistribution risk-set weight of one subject at death time t"""
    if record.time_days >= t:
        return 1.0
    if record.event == EventCause.DISCHARGE:
        denominator = float(censoring.left(record.time_days))
        if denominator <= 0:
            raise CensoringSupportError("censoring support exhausted")
        return float(censoring.left(t)) / denominator
    return 0.0


@dataclass(frozen=True)
class DesignMatrix:
    """Dummy-coded main effects, reference levels dropped"""
    matrix: np.ndarray
    columns: List[str]
    column_levels: List[Tuple[str, str]]     # (factor, level) per column
    dropped: List[str] = field(default_factory=list)

    @staticmethod
    def column_name(factor: str, level: str) -> str:
        return f"{factor}={level}"

    @classmethod
    def build(cls, records: Sequence[AnalysisRecord], schema: CovariateSchema) -> "DesignMatrix":
        """Dummy-code the schema's main effects and prune degenerate columns"""
        n = len(records)
        columns, column_levels, blocks, dropped = [], [], [], []
        for factor in schema.main_effects:
            try:
                labels = np.array([record.covariates[factor.name] for record in records], dtype=object)
            except KeyError:
                raise InputValidationError(f"records lack covariate {factor.name!r}")
            unknown = set(labels) - set(factor.levels)
            if unknown:
                raise InputValidationError(f"unknown levels of {factor.name}: {sorted(unknown)}")
            for level in factor.non_reference_levels:
                column = (labels == level).astype(float)
                name = cls.column_name(factor.name, level)
                if n and (column.min() == column.max()):
                    dropped.append(name)
                    continue
                columns.append(name)
                column_levels.append((factor.name, level))
                blocks.append(column)

        matrix = np.column_stack(blocks) if blocks else np.zeros((n, 0))
        if dropped:
            logger.warning("Dropped degenerate design columns: %s", ", ".join(dropped))
        if matrix.shape[1] and np.linalg.matrix_rank(matrix - matrix.mean(axis=0)) < matrix.shape[1]:
            raise InputValidationError(f"design columns are collinear: {columns}")
        return cls(matrix=matrix, columns=columns, column_levels=column_levels, dropped=dropped)

    def row(self, covariates: Dict[str, str], schema: CovariateSchema) -> np.ndarray:
        """Design row for one covariate pattern; missing factors take their reference"""
        for factor in schema.main_effects:
            level = covariates.get(factor.name, factor.reference)
            if level not in factor.levels:
                raise InputValidationError(f"unknown level {level!r} of {factor.name}")
        return np.array([
            1.0 if covariates.get(factor, schema.factor(factor).reference) == level else 0.0
            for factor, level in self.column_levels
        ])


@dataclass
class _StratumBlock:
    """Beta-independent pieces of one stratum's likelihood"""
    label: str
    x: np.ndarray
    weights: np.ndarray
    death_rows: np.ndarray          # Subjects with the death event
    death_times: np.ndarray         # Distinct death times
    death_weight: np.ndarray        # Weighted deaths at each death time
    first_at_risk: np.ndarray       # First subject with T >= t, per death time
    g_left: np.ndarray              # G(t-) per death time
    inverse_g: np.ndarray           # 1 / G(T_j-) for discharged subjects, else 0
    deaths_up_to: np.ndarray        # Number of death times <= T_j per subject


@dataclass
class FgData:
    """Design, outcomes, strata and censoring distributions for one fit"""
    design: DesignMatrix
    times: np.ndarray
    events: np.ndarray
    weights: np.ndarray
    strata: np.ndarray
    censoring: Dict[str, CensoringKm]
    blocks: List[_StratumBlock] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def p(self) -> int:
        return self.design.matrix.shape[1]

    @property
    def stratum_labels(self) -> List[str]:
        return [block.label for block in self.blocks]


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int
    log_likelihood: float
    max_abs_score: float
    step_halvings: int = 0
    converged: bool = True


@dataclass(frozen=True)
class FgModel:
    """Fitted stratified Fine-Gray model"""
    beta: np.ndarray
    covariance: np.ndarray
    columns: List[str]
    column_levels: List[Tuple[str, str]]
    strata: List[str]
    baseline: Dict[str, Tuple[np.ndarray, np.ndarray]]   # stratum -> (death times, cumulative hazard)
    diagnostics: FitDiagnostics
    schema: CovariateSchema
    dropped_columns: List[str] = field(default_factory=list)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))

    def to_dict(self) -> Dict:
        """JSON-ready export of the fit"""
        return {
            "columns": self.columns,
            "coefficients": self.beta.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "covariance": self.covariance.tolist(),
            "hazard_ratios": [row.to_dict() for row in hazard_ratios(self).rows],
            "strata": self.strata,
            "baseline": {
                label: {"time_days": times.tolist(), "cumulative_hazard": cumhaz.tolist()}
                for label, (times, cumhaz) in self.baseline.items()
            },
            "dropped_columns": self.dropped_columns,
            "diagnostics": {
                "iterations": self.diagnostics.iterations,
                "log_likelihood": self.diagnostics.log_likelihood,
                "max_abs_score": self.diagnostics.max_abs_score,
                "step_halvings": self.diagnostics.step_halvings,
            },
        }


@dataclass(frozen=True)
class HazardRatioRow:
    characteristic: str
    level: str
    hazard_ratio: float
    ci_lower: float
    ci_upper: float
    se: float
    reference: bool = False

    @property
    def formatted(self) -> str:
        if self.reference:
            return REFERENCE_TEXT
        return f"{self.hazard_ratio:.2f} ({self.ci_lower:.2f} - {self.ci_upper:.2f})"

    def to_dict(self) -> Dict:
        return {
            "characteristic": self.characteristic,
            "level": self.level,
            "hazard_ratio": self.hazard_ratio,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "reference_flag": self.reference,
            "formatted": self.formatted,
        }


@dataclass(frozen=True)
class HazardRatioTable:
    rows: List[HazardRatioRow]

    def row(self, characteristic: str, level: str) -> HazardRatioRow:
        for row in self.rows:
            if row.characteristic == characteristic and row.level == level:
                return row
        raise KeyError((characteristic, level))


def _stratum_label(record: AnalysisRecord, strata: Sequence[str]) -> str:
    try:
        return "|".join(record.covariates[name] for name in strata)
    except KeyError as e:
        raise InputValidationError(f"records lack stratum factor {e.args[0]!r}")


def assign_strata(records: Sequence[AnalysisRecord], schema: CovariateSchema) -> List[AnalysisRecord]:
    """Copies of the records with `stratum` set from the schema's stratum factors"""
    strata = schema.stratum_factors
    return [record.model_copy(update={"stratum": _stratum_label(record, strata)}) for record in records]


def _build_block(label: str, x, times, events, weights, censoring: CensoringKm) -> _StratumBlock:
    is_death = events == EventCause.DEATH
    death_times, inverse = np.unique(times[is_death], return_inverse=True)
    death_weight = np.bincount(inverse, weights=weights[is_death], minlength=len(death_times))

    discharged = events == EventCause.DISCHARGE
    g_at_exit = censoring.left(times)
    deaths_up_to = np.searchsorted(death_times, times, side="right")
    needs_weight = discharged & (deaths_up_to < len(death_times))
    if np.any(needs_weight & (g_at_exit <= 0)):
        raise CensoringSupportError(f"censoring support exhausted in stratum {label!r}")
    with np.errstate(divide="ignore"):
        inverse_g = np.where(needs_weight, 1.0 / np.where(g_at_exit > 0, g_at_exit, 1.0), 0.0)

    return _StratumBlock(
        label=label,
        x=x,
        weights=weights,
        death_rows=np.flatnonzero(is_death),
        death_times=death_times,
        death_weight=death_weight,
        first_at_risk=np.searchsorted(times, death_times, side="left"),
        g_left=censoring.left(death_times),
        inverse_g=inverse_g,
        deaths_up_to=deaths_up_to,
    )


def _build_blocks(data: FgData) -> List[_StratumBlock]:
    blocks = []
    for label in sorted(set(data.strata.tolist())):
        mask = data.strata == label
        blocks.append(_build_block(label, data.design.matrix[mask], data.times[mask], data.events[mask],
                                   data.weights[mask], data.censoring.get(label, data.censoring[""])))
    return blocks


def _censoring_by_stratum(sample_times, sample_events, sample_weights, strata: np.ndarray,
                          min_censorings: int) -> Dict[str, CensoringKm]:
    """Per-stratum G, falling back to the pooled G for sparsely censored strata"""
    pooled = estimate_censoring_distribution(SubjectSample(sample_times, sample_events, sample_weights))
    censoring = {"": pooled}
    for label in sorted(set(strata.tolist())):
        mask = strata == label
        if np.sum(sample_events[mask] == EventCause.CENSORED) >= min_censorings:
            censoring[label] = estimate_censoring_distribution(
                SubjectSample(sample_times[mask], sample_events[mask], sample_weights[mask]))
        else:
            if label:
                logger.debug("Stratum %r uses the pooled censoring distribution", label)
            censoring[label] = pooled
    return censoring


def prepare_fine_gray_data(records: Sequence[AnalysisRecord], schema: CovariateSchema,
                           strata: Optional[Sequence[str]] = None,
                           min_censorings: Optional[int] = None) -> FgData:
    """
    Canonically ordered design and outcome arrays with per-stratum censoring.

    Strata without deaths are dropped with a warning.
    """
    strata = list(schema.stratum_factors if strata is None else strata)
    min_censorings = default_config.MIN_STRATUM_CENSORINGS if min_censorings is None else min_censorings
    records = list(records)
    if not records:
        raise InputValidationError("no records to fit")

    labels = np.array([_stratum_label(record, strata) for record in records], dtype=object)
    deaths_by_stratum = {label for label, record in zip(labels, records) if record.event == EventCause.DEATH}
    if not deaths_by_stratum:
        raise InputValidationError("no death events to fit")
    empty = sorted(set(labels.tolist()) - deaths_by_stratum)
    if empty:
        logger.warning("Dropping %d strata without deaths: %s", len(empty), ", ".join(empty))
        records = [record for record, label in zip(records, labels) if label in deaths_by_stratum]
        labels = np.array([label for label in labels if label in deaths_by_stratum], dtype=object)

    design = DesignMatrix.build(records, schema)
    times = np.array([record.time_days for record in records], dtype=float)
    events = np.array([int(record.event) for record in records], dtype=np.int64)
    weights = np.array([record.weight for record in records], dtype=float)

    # Canonical order: time first, so every per-stratum subset is time sorted
    keys = [design.matrix[:, j] for j in reversed(range(design.matrix.shape[1]))] + [weights, events, times]
    order = np.lexsort(keys)
    design = DesignMatrix(matrix=design.matrix[order], columns=design.columns,
                          column_levels=design.column_levels, dropped=design.dropped)
    times, events, weights, labels = times[order], events[order], weights[order], labels[order]

    data = FgData(design=design, times=times, events=events, weights=weights, strata=labels,
                  censoring=_censoring_by_stratum(times, events, weights, labels, min_censorings))
    data.blocks = _build_blocks(data)
    return data


def _risk_sums(block: _StratumBlock, beta: np.ndarray):
    """Shifted relative risks and weighted risk-set sums S0, S1 at each death time"""
    eta = block.x @ beta
    shift = float(eta.max()) if len(eta) else 0.0
    r = block.weights * np.exp(eta - shift)
    q = r * block.inverse_g

    suffix_r = np.concatenate((np.cumsum(r[::-1])[::-1], [0.0]))
    prefix_q = np.concatenate(([0.0], np.cumsum(q)))
    s0 = suffix_r[block.first_at_risk] + block.g_left * prefix_q[block.first_at_risk]

    rx = r[:, None] * block.x
    qx = q[:, None] * block.x
    suffix_rx = np.vstack((np.cumsum(rx[::-1], axis=0)[::-1], np.zeros((1, block.x.shape[1]))))
    prefix_qx = np.vstack((np.zeros((1, block.x.shape[1])), np.cumsum(qx, axis=0)))
    s1 = suffix_rx[block.first_at_risk] + block.g_left[:, None] * prefix_qx[block.first_at_risk]
    return eta, shift, r, s0, s1


def _check_finite(block: _StratumBlock, s0: np.ndarray):
    bad = ~np.isfinite(s0) | (s0 <= 0)
    if np.any(bad):
        t = float(block.death_times[np.argmax(bad)])
        raise NonFiniteError(f"non-finite risk-set sum in stratum {block.label!r} at t={t:g}",
                             stratum=block.label, time=t)


def _stratum_contribution(block: _StratumBlock, beta: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    eta, shift, r, s0, s1 = _risk_sums(block, beta)
    _check_finite(block, s0)
    d = block.death_weight
    mean_x = s1 / s0[:, None]

    value = float(np.sum(block.weights[block.death_rows] * eta[block.death_rows])
                  - np.sum(d * (np.log(s0) + shift)))
    score = (block.weights[block.death_rows] @ block.x[block.death_rows]) - d @ mean_x

    # Per-subject exposure to the death-time denominators
    hazard = d / s0
    cumulative = np.concatenate(([0.0], np.cumsum(hazard)))
    weighted_tail = np.concatenate((np.cumsum((hazard * block.g_left)[::-1])[::-1], [0.0]))
    exposure = cumulative[block.deaths_up_to] + block.inverse_g * weighted_tail[block.deaths_up_to]
    information = (block.x * (r * exposure)[:, None]).T @ block.x - (mean_x * d[:, None]).T @ mean_x

    if not (np.isfinite(value) and np.all(np.isfinite(score)) and np.all(np.isfinite(information))):
        raise NonFiniteError(f"non-finite likelihood terms in stratum {block.label!r}", stratum=block.label)
    return value, score, information


def fg_log_partial_likelihood(beta, data: FgData,
                              strata: Optional[np.ndarray] = None,
                              censoring: Optional[Dict[str, CensoringKm]] = None,
                              threads: int = 1) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Weighted Breslow log partial likelihood summed over strata.

    Args:
        beta: Coefficient vector
        data: Prepared fit data
        strata: Optional stratum labels replacing data.strata
        censoring: Optional censoring distributions replacing data.censoring
        threads: Worker threads for per-stratum terms

    Returns:
        (value, score vector, information matrix = negated Hessian)
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.p:
        raise InputValidationError(f"beta has {beta.shape[0]} entries, design has {data.p} columns")
    blocks = data.blocks
    if strata is not None or censoring is not None:
        override = FgData(design=data.design, times=data.times, events=data.events, weights=data.weights,
                          strata=data.strata if strata is None else np.asarray(strata, dtype=object),
                          censoring=data.censoring if censoring is None else censoring)
        blocks = _build_blocks(override)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda block: _stratum_contribution(block, beta), blocks))
    else:
        parts = [_stratum_contribution(block, beta) for block in blocks]

    # Fixed stratum order keeps sums reproducible
    value, score, information = 0.0, np.zeros(data.p), np.zeros((data.p, data.p))
    for part_value, part_score, part_information in parts:
        value += part_value
        score = score + part_score
        information = information + part_information
    return value, score, information


def _baseline(block: _StratumBlock, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted Breslow cumulative subdistribution hazard at the stratum's death times"""
    _, shift, _, s0, _ = _risk_sums(block, beta)
    return block.death_times.copy(), np.cumsum(block.death_weight / s0 * np.exp(-shift))


def fit_fine_gray(records: Sequence[AnalysisRecord], schema: CovariateSchema,
                  strata: Optional[Sequence[str]] = None,
                  settings=None, threads: int = 1) -> FgModel:
    """
    Fit the stratified Fine-Gray model by Newton-Raphson from beta = 0.

    Args:
        records: Analysis records with every schema covariate
        schema: Factors, levels, references and stratum factors
        strata: Stratum factor names overriding schema.stratum_factors
        settings: Config with tolerances and limits (module default when omitted)
        threads: Worker threads for per-stratum terms

    Returns:
        Fitted FgModel with inverse-information covariance
    """
    settings = settings or default_config
    data = prepare_fine_gray_data(records, schema, strata, settings.MIN_STRATUM_CENSORINGS)
    columns = data.design.columns

    def evaluate(beta):
        return fg_log_partial_likelihood(beta, data, threads=threads)

    beta = np.zeros(data.p)
    value, score, information = evaluate(beta)
    iterations, halvings_total, converged = 0, 0, data.p == 0 or np.max(np.abs(score)) < settings.SCORE_TOLERANCE

    while not converged:
        if iterations >= settings.MAX_NEWTON_ITERATIONS:
            diagnostics = FitDiagnostics(iterations, value, float(np.max(np.abs(score))), halvings_total, False)
            raise ConvergenceError(f"no convergence after {iterations} Newton-Raphson iterations", diagnostics)
        iterations += 1
        try:
            delta = solve(information, score, assume_a="pos", check_finite=True)
        except (LinAlgError, ValueError) as e:
            diagnostics = FitDiagnostics(iterations, value, float(np.max(np.abs(score))), halvings_total, False)
            raise ConvergenceError(f"information matrix is not invertible: {e}", diagnostics)

        step = 1.0
        tolerance = 1e-12 * (1.0 + abs(value))
        for halving in range(settings.MAX_STEP_HALVINGS + 1):
            candidate = beta + step * delta
            candidate_value, candidate_score, candidate_information = evaluate(candidate)
            if candidate_value >= value - tolerance:
                break
            step /= 2.0
            halvings_total += 1
        else:
            diagnostics = FitDiagnostics(iterations, value, float(np.max(np.abs(score))), halvings_total, False)
            raise ConvergenceError("step halving could not increase the partial likelihood", diagnostics)

        change = abs(candidate_value - value) / max(abs(value), 1e-300)
        beta, value, score, information = candidate, candidate_value, candidate_score, candidate_information
        logger.debug("Iteration %d: log_lik=%.10f max|score|=%.3e step=%.4f", iterations, value,
                     np.max(np.abs(score)), step)

        if np.any(np.abs(beta) > settings.SEPARATION_THRESHOLD):
            worst = int(np.argmax(np.abs(beta)))
            diagnostics = FitDiagnostics(iterations, value, float(np.max(np.abs(score))), halvings_total, False)
            raise SeparationError(f"monotone likelihood for {columns[worst]} (|beta| > "
                                  f"{settings.SEPARATION_THRESHOLD:g})", columns[worst], diagnostics)
        converged = change < settings.LOGLIK_TOLERANCE and np.max(np.abs(score)) < settings.SCORE_TOLERANCE

    if data.p:
        covariance = inv(information)
        covariance = (covariance + covariance.T) / 2.0
    else:
        covariance = np.zeros((0, 0))

    diagnostics = FitDiagnostics(
        iterations=iterations,
        log_likelihood=value,
        max_abs_score=float(np.max(np.abs(score))) if data.p else 0.0,
        step_halvings=halvings_total,
    )
    logger.info("Fine-Gray fit converged in %d iterations (log_lik=%.4f, %d strata)",
                iterations, value, len(data.blocks))
    return FgModel(
        beta=beta,
        covariance=covariance,
        columns=list(columns),
        column_levels=list(data.design.column_levels),
        strata=data.stratum_labels,
        baseline={block.label: _baseline(block, beta) for block in data.blocks},
        diagnostics=diagnostics,
        schema=schema,
        dropped_columns=list(data.design.dropped),
    )


def hazard_ratios(model: FgModel, z: Optional[float] = None) -> HazardRatioTable:
    """Subdistribution hazard ratios with Wald intervals; reference levels as rows of 1"""
    z = default_config.CONFIDENCE_Z if z is None else z
    position = {name: i for i, name in enumerate(model.columns)}
    se = model.standard_errors
    rows = []
    for factor in model.schema.main_effects:
        rows.append(HazardRatioRow(factor.name, factor.reference, 1.0, 1.0, 1.0, 0.0, reference=True))
        for level in factor.non_reference_levels:
            i = position.get(DesignMatrix.column_name(factor.name, level))
            if i is None:
                continue
            b, s = float(model.beta[i]), float(se[i])
            rows.append(HazardRatioRow(factor.name, level, float(np.exp(b)),
                                       float(np.exp(b - z * s)), float(np.exp(b + z * s)), s))
    return HazardRatioTable(rows=rows)


def linear_predictor(model: FgModel, covariates: Dict[str, str]) -> float:
    design = DesignMatrix(matrix=np.zeros((0, len(model.columns))), columns=model.columns,
                          column_levels=model.column_levels)
    return float(design.row(covariates, model.schema) @ model.beta)


def predict_cif(model: FgModel, covariates: Dict[str, str], stratum: str = "",
                method: str = "product") -> CifCurve:
    """
    Model-based cumulative incidence of death for one covariate pattern.

    method="product" uses the product integral 1 - prod(1 - dLambda * exp(x'b)),
    which coincides with the Aalen-Johansen estimate for a covariate-free
    model; method="exponential" uses 1 - exp(-Lambda * exp(x'b)).
    Predictions carry no interval: variance is zero and the bounds equal the estimate.
    """
    if stratum not in model.baseline:
        raise InputValidationError(f"unknown stratum {stratum!r}")
    times, cumulative = model.baseline[stratum]
    relative_risk = np.exp(linear_predictor(model, covariates))

    if method == "product":
        increments = np.diff(np.concatenate(([0.0], cumulative))) * relative_risk
        values = 1.0 - np.cumprod(np.clip(1.0 - increments, 0.0, 1.0))
    elif method == "exponential":
        values = 1.0 - np.exp(-cumulative * relative_risk)
    else:
        raise InputValidationError(f"unknown prediction method {method!r}")

    values = np.clip(values, 0.0, 1.0)
    return CifCurve(
        cause=EventCause.DEATH,
        times=times,
        values=values,
        variance=np.zeros_like(values),
        ci_lower=values.copy(),
        ci_upper=values.copy(),
        event_counts=np.ones_like(values),
    )
