"""Tests for metric formatting."""
from config import EvalDirection
from formatters import MetricFormatter
from models.entities import BootstrapQuality, EvalReport


class TestMetricFormatter:
    def test_rate(self):
        assert MetricFormatter.rate(0.935) == "93.50%"
        assert MetricFormatter.rate(0.0) == "0.00%"
        assert MetricFormatter.rate(None) == "-"

    def test_mrr(self):
        assert MetricFormatter.mrr(0.95204) == "0.9520"
        assert MetricFormatter.mrr(None) == "-"

    def test_report_line(self):
        report = EvalReport(hits={1: 0.935, 10: 0.99}, mrr=0.952, label="model", alignment="local")
        assert MetricFormatter.report_line(report) == (
            "model/local left_to_right  H@1 93.50%  H@10 99.00%  MRR 0.9520"
        )

    def test_one_to_one_report_line(self):
        report = EvalReport(hits={1: 0.5}, mrr=None, direction=EvalDirection.AVERAGED, alignment="global")
        assert MetricFormatter.report_line(report) == "model/global averaged  H@1 50.00%  H@10 -  MRR -"

    def test_quality_line(self):
        quality = BootstrapQuality(r_u=0.4, r_p=0.25, r_n=None)
        assert MetricFormatter.quality_line(quality) == "r_u 40.00%  r_p 25.00%  r_n -"
        assert MetricFormatter.quality_line(None) == "-"
