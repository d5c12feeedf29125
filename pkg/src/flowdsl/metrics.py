"""Code-quality metrics for generated flows.

Four headline numbers, all computed from parsed API-name sequences:

* average similarity: longest-common-subsequence overlap between the
  predicted and reference call sequences, normalized by the longer one;
* unparsed %: share of predictions the parser rejected (of all samples);
* made-up API %: share of parsed predictions calling functions missing
  from the catalog (of parsed samples);
* made-up parameter %: share of parsed predictions passing undeclared
  parameter keys to real functions (of parsed samples).

A prediction that fails to parse, or that calls a made-up function, is
discarded: it scores 0 but stays in the similarity mean.  A prediction
whose only defect is a made-up parameter key keeps its similarity score
(the call sequence can still be right; the bad key surfaces at run time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .catalog import Catalog, validate_flow
from .dsl import Flow, ParseError, extract_api_sequence, parse_flow


def lcss_length(a: list[str], b: list[str]) -> int:
    """Length of the longest common subsequence of two name sequences."""
    if not a or not b:
        return 0
    # Classic O(|a|*|b|) dynamic program, rolling one row.
    previous = [0] * (len(b) + 1)
    for item_a in a:
        current = [0]
        for j, item_b in enumerate(b):
            if item_a == item_b:
                current.append(previous[j] + 1)
            else:
                current.append(max(previous[j + 1], current[-1]))
        previous = current
    return previous[-1]


def sequence_similarity(a: list[str], b: list[str]) -> float:
    """LCSS length over the longer sequence length; 1.0 when both empty."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return lcss_length(a, b) / max(len(a), len(b))


def flow_similarity(prediction: Flow, truth: Flow) -> float:
    return sequence_similarity(
        extract_api_sequence(prediction), extract_api_sequence(truth)
    )


def jaccard_program_similarity(a: Flow, b: Flow) -> float:
    """Jaccard overlap of the SETS of function names; 1.0 when both empty.

    Unlike :func:`flow_similarity` this ignores call order and repeats.
    """
    names_a = set(extract_api_sequence(a))
    names_b = set(extract_api_sequence(b))
    if not names_a and not names_b:
        return 1.0
    return len(names_a & names_b) / len(names_a | names_b)


# ---------------------------------------------------------------------------
# Per-sample scoring


@dataclass
class EvaluationOutcome:
    """Scored result for one sample.

    Invariants: an unparsed or function-hallucinating prediction always
    has similarity 0.
    """

    sample_id: str
    parsed: bool
    has_made_up_function: bool
    has_made_up_parameter: bool
    similarity: float

    def __post_init__(self):
        if not self.parsed and self.similarity != 0:
            raise ValueError("unparsed outcome must have similarity 0")
        if self.has_made_up_function and self.similarity != 0:
            raise ValueError("function-hallucinating outcome must have similarity 0")
        if not self.parsed and (self.has_made_up_function or self.has_made_up_parameter):
            raise ValueError("hallucination flags require a parsed prediction")
        if not 0.0 <= self.similarity <= 1.0:
            raise ValueError(f"similarity out of range: {self.similarity}")


def score_sample(
    prediction_text: str, truth: Flow, catalog: Catalog, sample_id: str = ""
) -> EvaluationOutcome:
    """Parse, validate, and score one predicted flow against its reference."""
    try:
        prediction = parse_flow(prediction_text)
    except (ParseError, RecursionError):
        return EvaluationOutcome(
            sample_id=sample_id,
            parsed=False,
            has_made_up_function=False,
            has_made_up_parameter=False,
            similarity=0.0,
        )
    validation = validate_flow(prediction, catalog)
    made_up_function = bool(validation.made_up_functions)
    made_up_parameter = bool(validation.made_up_parameters)
    if made_up_function:
        similarity = 0.0
    else:
        similarity = flow_similarity(prediction, truth)
    return EvaluationOutcome(
        sample_id=sample_id,
        parsed=True,
        has_made_up_function=made_up_function,
        has_made_up_parameter=made_up_parameter,
        similarity=similarity,
    )


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class OutcomeCounts:
    total: int
    parsed: int
    unparsed: int
    hallucinated_fn: int
    hallucinated_param: int


@dataclass
class MetricsReport:
    average_similarity: float
    unparsed_pct: float
    made_up_api_pct: float
    made_up_param_pct: float
    counts: OutcomeCounts


def aggregate(outcomes: list[EvaluationOutcome]) -> MetricsReport:
    """Fold outcomes into the headline metrics.

    The similarity mean runs over every outcome, zeros from discarded
    samples included.  Hallucination rates are taken over parsed samples
    only; when nothing parsed they are reported as 0.
    """
    if not outcomes:
        raise ValueError("cannot aggregate an empty outcome list")
    total = len(outcomes)
    parsed = sum(1 for o in outcomes if o.parsed)
    unparsed = total - parsed
    hallucinated_fn = sum(1 for o in outcomes if o.has_made_up_function)
    hallucinated_param = sum(1 for o in outcomes if o.has_made_up_parameter)
    # fsum is exactly rounded, so the mean is permutation-invariant.
    average_similarity = math.fsum(o.similarity for o in outcomes) / total
    unparsed_pct = unparsed / total * 100.0
    if parsed:
        made_up_api_pct = hallucinated_fn / parsed * 100.0
        made_up_param_pct = hallucinated_param / parsed * 100.0
    else:
        made_up_api_pct = 0.0
        made_up_param_pct = 0.0
    return MetricsReport(
        average_similarity=average_similarity,
        unparsed_pct=unparsed_pct,
        made_up_api_pct=made_up_api_pct,
        made_up_param_pct=made_up_param_pct,
        counts=OutcomeCounts(
            total=total,
            parsed=parsed,
            unparsed=unparsed,
            hallucinated_fn=hallucinated_fn,
            hallucinated_param=hallucinated_param,
        ),
    )


@dataclass
class DeltaReport:
    """Candidate-minus-baseline change per metric.

    Positive ``average_similarity`` is an improvement; positive values on
    the three failure percentages are regressions.
    """

    baseline_name: str
    candidate_name: str
    average_similarity: float
    unparsed_pct: float
    made_up_api_pct: float
    made_up_param_pct: float


def delta_report(
    baseline: MetricsReport,
    candidate: MetricsReport,
    baseline_name: str = "baseline",
    candidate_name: str = "candidate",
) -> DeltaReport:
    if baseline.counts.total != candidate.counts.total:
        raise ValueError(
            "delta requires reports over the same sample count: "
            f"{baseline.counts.total} vs {candidate.counts.total}"
        )
    return DeltaReport(
        baseline_name=baseline_name,
        candidate_name=candidate_name,
        average_similarity=candidate.average_similarity - baseline.average_similarity,
        unparsed_pct=candidate.unparsed_pct - baseline.unparsed_pct,
        made_up_api_pct=candidate.made_up_api_pct - baseline.made_up_api_pct,
        made_up_param_pct=candidate.made_up_param_pct - baseline.made_up_param_pct,
    )


# ---------------------------------------------------------------------------
# Serialization and table rendering

TABLE_COLUMNS = ("Avg. similarity", "%Unparsed", "%Made-up API names", "%Made-up parameters")


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "average_similarity": report.average_similarity,
        "unparsed_pct": report.unparsed_pct,
        "made_up_api_pct": report.made_up_api_pct,
        "made_up_param_pct": report.made_up_param_pct,
        "counts": {
            "total": report.counts.total,
            "parsed": report.counts.parsed,
            "unparsed": report.counts.unparsed,
            "hallucinated_fn": report.counts.hallucinated_fn,
            "hallucinated_param": report.counts.hallucinated_param,
        },
    }


def report_from_dict(data: dict) -> MetricsReport:
    counts = data["counts"]
    return MetricsReport(
        average_similarity=data["average_similarity"],
        unparsed_pct=data["unparsed_pct"],
        made_up_api_pct=data["made_up_api_pct"],
        made_up_param_pct=data["made_up_param_pct"],
        counts=OutcomeCounts(
            total=counts["total"],
            parsed=counts["parsed"],
            unparsed=counts["unparsed"],
            hallucinated_fn=counts["hallucinated_fn"],
            hallucinated_param=counts["hallucinated_param"],
        ),
    )


def delta_to_dict(delta: DeltaReport) -> dict:
    return {
        "baseline": delta.baseline_name,
        "candidate": delta.candidate_name,
        "average_similarity": delta.average_similarity,
        "unparsed_pct": delta.unparsed_pct,
        "made_up_api_pct": delta.made_up_api_pct,
        "made_up_param_pct": delta.made_up_param_pct,
    }


def format_metric(value: float) -> str:
    return f"{value:.2f}"


def format_delta(value: float) -> str:
    """Signed two-decimal delta; a value that rounds to zero prints '0'."""
    text = f"{value:+.2f}"
    if text in ("+0.00", "-0.00"):
        return "0"
    return text


def _render_rows(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells: list[str]) -> str:
        parts = [cells[0].ljust(widths[0])]
        parts += [cells[i].rjust(widths[i]) for i in range(1, len(cells))]
        return "  ".join(parts).rstrip()
    rule = "-" * len(line(header))
    return "\n".join([line(header), rule] + [line(r) for r in rows])


def render_metrics_table(rows: list[tuple[str, MetricsReport]]) -> str:
    """Aligned text table of absolute metrics, one row per model."""
    header = ["model", *TABLE_COLUMNS]
    body = [
        [
            name,
            format_metric(r.average_similarity),
            format_metric(r.unparsed_pct),
            format_metric(r.made_up_api_pct),
            format_metric(r.made_up_param_pct),
        ]
        for name, r in rows
    ]
    return _render_rows(header, body)


def render_delta_table(
    baseline_row: tuple[str, MetricsReport], deltas: list[DeltaReport]
) -> str:
    """Baseline row in absolute terms, then one signed-delta row per
    candidate."""
    header = ["model", *TABLE_COLUMNS]
    name, baseline = baseline_row
    body = [[
        name,
        format_metric(baseline.average_similarity),
        format_metric(baseline.unparsed_pct),
        format_metric(baseline.made_up_api_pct),
        format_metric(baseline.made_up_param_pct),
    ]]
    for delta in deltas:
        body.append([
            delta.candidate_name,
            format_delta(delta.average_similarity),
            format_delta(delta.unparsed_pct),
            format_delta(delta.made_up_api_pct),
            format_delta(delta.made_up_param_pct),
        ])
    return _render_rows(header, body)
