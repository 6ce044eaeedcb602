"""Metric formatting for logs and CLI output.

Rates print as percentages, MRR as a 4-digit fraction, undefined values as "-".
"""
from typing import Optional

from models.entities import BootstrapQuality, EvalReport

MISSING = "-"


class MetricFormatter:
    """Formatting helpers shared by the CLI and the run summaries."""

    @staticmethod
    def rate(value: Optional[float]) -> str:
        """Fraction to percentage like '93.50%'."""
        if value is None:
            return MISSING
        return f"{100.0 * value:.2f}%"

    @staticmethod
    def mrr(value: Optional[float]) -> str:
        return MISSING if value is None else f"{value:.4f}"

    @staticmethod
    def report_line(report: EvalReport) -> str:
        """One line like 'model/local left_to_right  H@1 93.50%  H@10 99.00%  MRR 0.9520'."""
        return (
            f"{report.label}/{report.alignment} {report.direction.value}  "
            f"H@1 {MetricFormatter.rate(report.hits.get(1))}  "
            f"H@10 {MetricFormatter.rate(report.hits.get(10))}  "
            f"MRR {MetricFormatter.mrr(report.mrr)}"
        )

    @staticmethod
    def quality_line(quality: Optional[BootstrapQuality]) -> str:
        if quality is None:
            return MISSING
        return (
            f"r_u {MetricFormatter.rate(quality.r_u)}  "
            f"r_p {MetricFormatter.rate(quality.r_p)}  "
            f"r_n {MetricFormatter.rate(quality.r_n)}"
        )
