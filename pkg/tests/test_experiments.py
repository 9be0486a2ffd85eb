from __future__ import annotations

import pytest

from cepmas.evaluation import Criterion, aggregate_scorecards
from cepmas.experiments import (
    load_agent_bands,
    load_latency_profiles,
    run_agents_experiment,
    run_complexity_experiment,
    run_resolution_experiment,
)
from cepmas.metrics import SpanKind, aggregate_experiment

RES_ORDER = ["1080p", "720p", "360p", "144p"]


def by_group(reports, key):
    rows = aggregate_experiment(reports, key)
    return {row.group: row for row in rows}


class TestBundledProfiles:
    def test_quoted_endpoint_values(self):
        levels = load_latency_profiles()["levels"]
        assert levels["1"]["1080p"]["total"] == 13370
        assert levels["1"]["1080p"]["model"] == 10200
        assert levels["1"]["144p"]["total"] == 8200
        assert levels["1"]["144p"]["model"] == 5300
        assert levels["2"]["1080p"]["total"] == 16700
        assert levels["2"]["1080p"]["model"] == 14700
        assert levels["2"]["144p"]["total"] == 7100
        assert levels["2"]["144p"]["model"] == 5500
        assert levels["3"]["1080p"]["total"] == 27800
        assert levels["3"]["1080p"]["model"] == 18400
        assert levels["3"]["144p"]["total"] == 15300
        assert levels["3"]["144p"]["model"] == 6410
        assert levels["4"]["1080p"]["total"] == 28440
        assert levels["4"]["1080p"]["model"] == 19200
        assert levels["4"]["144p"]["total"] == 16300
        assert levels["4"]["144p"]["model"] == 8500
        assert levels["5"]["1080p"]["total"] == 20800
        assert levels["5"]["1080p"]["model"] == 15300
        assert levels["5"]["144p"]["total"] == 13700
        assert levels["5"]["144p"]["model"] == 8700

    def test_components_positive_and_consistent(self):
        levels = load_latency_profiles()["levels"]
        for level, per_res in levels.items():
            for resolution, row in per_res.items():
                parts = (row["model"] + row["extract"] + row["create"]
                         + row["consume"] + row["overhead"])
                assert parts == row["total"], (level, resolution)
                assert row["overhead"] > 0

    def test_band_midpoints(self):
        bands = load_agent_bands()["topologies"]
        assert bands["2-agent"]["latency_s"] == [5, 8]
        assert bands["4-agent"]["overhead_s"] == [12, 16]


class TestAgentsExperiment:
    def test_means_land_in_scaled_bands(self, tmp_path):
        reports = run_agents_experiment(tmp_path, runs=3, scale=0.01)
        groups = by_group(reports, "topology")
        assert 50 <= groups["2-agent"].stats["total_ms"]["mean"] <= 80
        assert 120 <= groups["3-agent"].stats["total_ms"]["mean"] <= 160
        assert 220 <= groups["4-agent"].stats["total_ms"]["mean"] <= 250

    def test_overhead_strictly_increases_with_agents(self, tmp_path):
        reports = run_agents_experiment(tmp_path, runs=3, scale=0.01)
        groups = by_group(reports, "topology")
        overheads = [groups[label].stats["overhead_ms"]["mean"]
                     for label in ("2-agent", "3-agent", "4-agent")]
        assert overheads[0] < overheads[1] < overheads[2]

    def test_deterministic_given_scale(self, tmp_path):
        first = run_agents_experiment(tmp_path / "a", runs=2, scale=0.01)
        second = run_agents_experiment(tmp_path / "b", runs=2, scale=0.01)
        assert [r.total_duration_ms for r in first] == \
            [r.total_duration_ms for r in second]


class TestResolutionExperiment:
    def test_totals_and_model_decrease_with_resolution(self, tmp_path):
        reports = run_resolution_experiment(tmp_path, scale=0.01)
        for level in range(1, 6):
            rows = {r.resolution: r for r in reports if r.complexity == level}
            totals = [rows[res].total_duration_ms for res in RES_ORDER]
            models = [rows[res].kind_sums_ms[SpanKind.MODEL_CALL]
                      for res in RES_ORDER]
            assert totals == sorted(totals, reverse=True), level
            assert models == sorted(models, reverse=True), level
            assert len(set(totals)) == 4

    def test_level1_spot_values_at_scale(self, tmp_path):
        reports = run_resolution_experiment(tmp_path, scale=0.01, levels=[1])
        rows = {r.resolution: r for r in reports}
        assert rows["1080p"].total_duration_ms == pytest.approx(133.7, abs=5)
        assert rows["1080p"].kind_sums_ms[SpanKind.MODEL_CALL] == pytest.approx(102, abs=5)
        assert rows["144p"].total_duration_ms == pytest.approx(82, abs=5)
        assert rows["144p"].kind_sums_ms[SpanKind.MODEL_CALL] == pytest.approx(53, abs=5)

    def test_accounting_identity_in_every_report(self, tmp_path):
        reports = run_resolution_experiment(tmp_path, scale=0.01, levels=[2, 4])
        for report in reports:
            assert report.agent_overhead_ms + report.tool_sum_ms() == pytest.approx(
                report.total_duration_ms
            )


class TestComplexityExperiment:
    def test_scorecards_reproduce_reference_matrix(self, tmp_path):
        cards, reports = run_complexity_experiment(tmp_path, scale=0.01)
        matrix = aggregate_scorecards(cards)
        assert matrix.row(Criterion.CORRECTNESS) == [0.8, 0.8, 0.9, 0.7, 0.6]
        assert matrix.row(Criterion.CONSISTENCY) == [1.0, 1.0, 1.0, 1.0, 0.9]
        assert {r.complexity for r in reports} == {1, 2, 3, 4, 5}
        assert all(r.resolution == "1080p" for r in reports)

    def test_no_incomplete_scorecards(self, tmp_path):
        cards, _ = run_complexity_experiment(tmp_path, scale=0.01)
        assert not any(card.incomplete for card in cards)
