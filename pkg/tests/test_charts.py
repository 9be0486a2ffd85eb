from __future__ import annotations

import xml.etree.ElementTree as ET

import pytest

from cepmas.charts import grouped_bar_svg


class TestGroupedBarSvg:
    def test_well_formed_xml_with_bars_and_legend(self):
        svg = grouped_bar_svg(
            "Latency by agent count", "ms",
            [("2-agent", {"total": 65.0, "overhead": 15.0}),
             ("3-agent", {"total": 140.0, "overhead": 90.0})],
        )
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        rects = [el for el in root.iter() if el.tag.endswith("rect")]
        # background + 4 bars + 2 legend swatches
        assert len(rects) == 7
        text = svg
        assert "Latency by agent count" in text
        assert "2-agent" in text and "overhead" in text

    def test_bar_heights_scale_with_values(self):
        svg = grouped_bar_svg("t", "ms", [("a", {"x": 10.0}), ("b", {"x": 100.0})])
        root = ET.fromstring(svg)
        bars = [el for el in root.iter()
                if el.tag.endswith("rect") and el.get("fill") not in ("white",)
                and el.find("*") is not None]
        heights = [float(bar.get("height")) for bar in bars]
        assert len(heights) == 2
        assert heights[1] == pytest.approx(heights[0] * 10, rel=1e-6)

    def test_empty_groups_rejected(self):
        with pytest.raises(ValueError):
            grouped_bar_svg("t", "ms", [])

    def test_escapes_markup_in_labels(self):
        svg = grouped_bar_svg("a <b> & c", "ms", [("<g>", {"<s>": 1.0})])
        ET.fromstring(svg)  # would raise on broken escaping
        assert "&lt;g&gt;" in svg
