"""Unit tests for the SVG writer, figures and console summaries."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bcm_infer.constants import Method
from bcm_infer.harness.aggregate import aggregate, load_summaries
from bcm_infer.harness.manager import SweepStats, run_sweep
from bcm_infer.harness.models import build_spec_matrix
from bcm_infer.report.figures import (
    EmptySelectionError,
    FigureKind,
    FigureSpec,
    _thin,
    available_keys,
    default_figure_specs,
    median_run,
    render_figure,
    select,
    series_label,
)
from bcm_infer.report.summary import (
    print_aggregate_summary,
    print_simulation_summary,
    print_sweep_summary,
)
from bcm_infer.report.svg import Axes, Element, SvgDocument, _widen, fmt_num, nice_ticks, text

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def completed_store(simulated_store, tiny_grid, fast_settings):
    """Tiny grid with DA and LBI edge runs inferred and forecast."""
    specs = build_spec_matrix(
        tiny_grid,
        methods=[Method.DA, Method.LBI],
        granularities=["edge"],
        specifications=["correct"],
    )
    _, stats = run_sweep(simulated_store, specs, fast_settings)
    assert stats.failed == 0
    return simulated_store


def parse(path) -> ET.Element:
    return ET.parse(path).getroot()


class TestSvgPrimitives:
    """Test number formatting and element rendering."""

    @pytest.mark.parametrize(
        "value,expected",
        [(1.5, "1.5"), (2.0, "2"), (0.12345, "0.123"), (-0.0001, "0"), (3, "3"), (True, "1")],
    )
    def test_fmt_num(self, value, expected):
        """Test fixed-precision formatting without trailing zeros."""
        assert fmt_num(value) == expected

    def test_attribute_names(self):
        """Test underscore translation and full-precision data attributes."""
        el = Element("rect", class_="box", data_median=0.123456789, stroke_width=2, fill=None)
        assert el.render() == (
            '<rect class="box" data-median="0.123456789" stroke-width="2"/>'
        )

    def test_escaping(self):
        """Test that text content and attributes are escaped."""
        rendered = text(0, 0, "a<b&c", data_label='"x"').render()
        assert "a&lt;b&amp;c" in rendered
        assert "&#34;x&#34;" in rendered

    def test_nested_render(self):
        """Test indentation of children."""
        el = Element("g", Element("line", x1=0))
        assert el.render() == '<g>\n  <line x1="0"/>\n</g>'

    def test_nice_ticks(self):
        """Test tick positions over [0, 1] and degenerate ranges."""
        assert nice_ticks(0.0, 1.0) == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        assert nice_ticks(1.0, 1.0) == [1.0]
        assert nice_ticks(0.0, float("nan")) == []

    def test_axes_mapping(self):
        """Test the data-to-pixel transform with y pointing down."""
        axes = Axes((0, 10), (0, 1), left=0, top=0, width=100, height=50)
        assert axes.x(5) == pytest.approx(50.0)
        assert axes.y(0) == pytest.approx(50.0)
        assert axes.y(1) == pytest.approx(0.0)

    def test_widen(self):
        """Test that empty ranges are padded."""
        assert _widen((0.0, 0.0)) == (-0.5, 0.5)
        assert _widen((2.0, 2.0)) == pytest.approx((1.9, 2.1))
        assert _widen((0.0, 1.0)) == (0.0, 1.0)


class TestSvgDocument:
    """Test complete documents."""

    def test_write_parses(self, tmp_path):
        """Test that a written document is well-formed XML."""
        doc = SvgDocument(200, 100, "Title & more")
        doc.add(Element("circle", cx=1, cy=2, r=3))
        path = doc.write(tmp_path / "nested" / "doc.svg")
        assert path.read_text().startswith('<?xml version="1.0"')
        root = parse(path)
        assert root.tag == f"{SVG}svg"
        assert root.get("viewBox") == "0 0 200 100"
        assert root.find(f"{SVG}title").text == "Title & more"
        assert not list(tmp_path.glob("nested/*.tmp"))

    def test_deterministic(self):
        """Test that identical content gives identical bytes."""
        a = SvgDocument(10, 10).add(Element("rect", x=0.1 + 0.2)).render()
        b = SvgDocument(10, 10).add(Element("rect", x=0.3)).render()
        assert a == b


class TestFigureHelpers:
    """Test selection and naming helpers."""

    summaries = [
        {"run_id": "b", "method": "da", "granularity": "edge", "specification": "correct",
         "epsilon": 0.2, "noise_sigma": 0.0, "e_symm": 0.2},
        {"run_id": "a", "method": "lbi", "granularity": "edge", "specification": "correct",
         "epsilon": 0.2, "noise_sigma": 0.0, "e_symm": 0.4},
        {"run_id": "c", "method": "da", "granularity": "node", "specification": "correct",
         "epsilon": 0.3, "noise_sigma": 1e-4, "e_symm": 0.3},
    ]

    def test_file_name(self):
        """Test file names built from kind, metric and selectors."""
        spec = FigureSpec(kind=FigureKind.RECONSTRUCTION_BOXPLOT, metric="e_symm", epsilon=0.2)
        assert spec.file_name() == "reconstruction-boxplot_e_symm_epsilon0.2.svg"
        spec = FigureSpec(kind="trajectory-traces", method="lbi", granularity="edge")
        assert spec.file_name() == "trajectory-traces_methodlbi_granularityedge.svg"

    def test_selectors(self):
        """Test that only set selectors are reported, as plain values."""
        spec = FigureSpec(kind="forecast-boxplot", method="da", noise_sigma=0.0)
        assert spec.selectors() == {"method": "da", "noise_sigma": 0.0}

    def test_select(self):
        """Test float-tolerant selection."""
        spec = FigureSpec(kind="reconstruction-boxplot", epsilon=0.1 + 0.1)
        assert [s["run_id"] for s in select(self.summaries, spec)] == ["b", "a"]
        spec = FigureSpec(kind="reconstruction-boxplot", granularity="node")
        assert [s["run_id"] for s in select(self.summaries, spec)] == ["c"]

    def test_available_keys(self):
        """Test the values listed when a selection is empty."""
        keys = available_keys(self.summaries)
        assert keys["method"] == ["da", "lbi"]
        assert keys["epsilon"] == [0.2, 0.3]

    def test_median_run(self):
        """Test the run closest to the median and the run_id tie-break."""
        assert median_run(self.summaries)["run_id"] == "c"
        tied = [{"run_id": "z", "e_symm": 1.0}, {"run_id": "y", "e_symm": 0.0}]
        assert median_run(tied)["run_id"] == "y"

    def test_thin(self):
        """Test down-sampling that keeps the last index."""
        np.testing.assert_array_equal(_thin(10), np.arange(10))
        idx = _thin(1000)
        assert len(idx) <= 251
        assert idx[0] == 0
        assert idx[-1] == 999
        np.testing.assert_array_equal(_thin(1), [0])

    def test_series_label(self):
        """Test legend labels."""
        assert series_label("lbi", "edge") == "LBI-edge"


class TestRenderFigure:
    """Test figures rendered from a finished sweep."""

    def test_truth_traces(self, completed_store):
        """Test one polyline per agent for the selected epsilon."""
        path = render_figure(
            FigureSpec(kind=FigureKind.TRUTH_TRACES, epsilon=0.2), completed_store
        )
        assert path == completed_store.root / "figures" / "truth-traces_epsilon0.2.svg"
        root = parse(path)
        polylines = root.findall(f".//{SVG}polyline")
        assert len(polylines) == 6
        assert {p.get("data-agent") for p in polylines} == {str(i) for i in range(6)}

    def test_trajectory_traces(self, completed_store):
        """Test truth, estimate and forecast traces of the median run."""
        spec = FigureSpec(
            kind=FigureKind.TRAJECTORY_TRACES, method="da", granularity="edge", epsilon=0.3
        )
        root = parse(render_figure(spec, completed_store))
        assert len(root.findall(f".//{SVG}polyline")) == 18
        estimate = [g for g in root.iter(f"{SVG}g") if g.get("data-run-id")]
        assert len(estimate) == 1
        summaries = load_summaries(completed_store)
        chosen = median_run(select(summaries, spec))
        assert estimate[0].get("data-run-id") == chosen["run_id"]

    def test_reconstruction_boxplot(self, completed_store):
        """Test one box per method with the aggregate statistics attached."""
        summaries = load_summaries(completed_store)
        spec = FigureSpec(
            kind=FigureKind.RECONSTRUCTION_BOXPLOT,
            epsilon=0.2,
            specification="correct",
            metric="e_symm",
        )
        root = parse(render_figure(spec, completed_store, summaries))
        boxes = {g.get("data-series"): g for g in root.iter(f"{SVG}g") if g.get("class") == "box"}
        assert set(boxes) == {"DA-edge", "LBI-edge"}

        da = [s for s in summaries if s["method"] == "da" and s["epsilon"] == 0.2]
        expected = aggregate(da, metrics=["e_symm"])[0]
        assert boxes["DA-edge"].get("data-count") == "2"
        assert float(boxes["DA-edge"].get("data-median")) == pytest.approx(expected.median)
        assert float(boxes["DA-edge"].get("data-q1")) == pytest.approx(expected.q1)

    def test_sorted_boxplot_marks_unsorted_median(self, completed_store):
        """Test the reference line on E_sort boxes."""
        spec = FigureSpec(kind=FigureKind.RECONSTRUCTION_BOXPLOT, epsilon=0.2, metric="e_sort")
        root = parse(render_figure(spec, completed_store))
        marks = [el for el in root.iter(f"{SVG}line") if el.get("data-unsorted-median")]
        assert len(marks) == 2

    def test_forecast_boxplot_default_metric(self, completed_store):
        """Test that forecast boxplots default to F_edge."""
        spec = FigureSpec(kind=FigureKind.FORECAST_BOXPLOT, epsilon=0.3)
        root = parse(render_figure(spec, completed_store))
        metrics = {g.get("data-metric") for g in root.iter(f"{SVG}g") if g.get("class") == "box"}
        assert metrics == {"f_edge"}

    def test_forecast_timeseries(self, completed_store):
        """Test truth and per-method median bands."""
        spec = FigureSpec(kind=FigureKind.FORECAST_TIMESERIES, epsilon=0.2, noise_sigma=0.0)
        root = parse(render_figure(spec, completed_store))
        series = {
            g.get("data-series"): g for g in root.iter(f"{SVG}g") if g.get("class") == "series"
        }
        assert set(series) == {"truth", "DA-edge", "LBI-edge"}
        assert series["truth"].get("data-runs") == "2"

    def test_explicit_output_file(self, completed_store, tmp_path):
        """Test that an .svg output is used as the file path."""
        target = tmp_path / "custom.svg"
        spec = FigureSpec(kind=FigureKind.TRUTH_TRACES, output=str(target))
        assert render_figure(spec, completed_store) == target
        assert target.exists()

    def test_empty_selection(self, completed_store):
        """Test that unmatched selectors list what is available."""
        spec = FigureSpec(kind=FigureKind.RECONSTRUCTION_BOXPLOT, epsilon=0.5)
        with pytest.raises(EmptySelectionError, match="available: method=\\{da, lbi\\}"):
            render_figure(spec, completed_store)

    def test_truth_traces_without_truth(self, store):
        """Test that an empty store has nothing to draw."""
        with pytest.raises(EmptySelectionError, match="simulate"):
            render_figure(FigureSpec(kind=FigureKind.TRUTH_TRACES), store, summaries=[])

    def test_default_figure_set(self, completed_store):
        """Test that every default figure renders."""
        summaries = load_summaries(completed_store)
        specs = default_figure_specs(summaries)
        kinds = [s.kind for s in specs]
        assert kinds.count(FigureKind.TRUTH_TRACES) == 2
        assert kinds.count(FigureKind.TRAJECTORY_TRACES) == 4
        assert kinds.count(FigureKind.RECONSTRUCTION_BOXPLOT) == 4
        assert kinds.count(FigureKind.FORECAST_BOXPLOT) == 12
        assert kinds.count(FigureKind.FORECAST_TIMESERIES) == 2
        paths = [render_figure(s, completed_store, summaries) for s in specs]
        assert len(set(paths)) == len(specs)
        assert all(p.exists() for p in paths)


class TestConsoleSummaries:
    """Test fixed-width console output."""

    def test_simulation_summary(self, simulated_store, tiny_grid):
        """Test one line per cell under the banner."""
        lines: list[str] = []
        cells = tiny_grid.cells()
        print_simulation_summary(simulated_store, cells, echo=lines.append)
        assert lines[1] == "GROUND TRUTH SUMMARY"
        output = "\n".join(lines)
        for cell in cells:
            assert cell.cell_id in output
        assert "21 steps" in output

    def test_sweep_summary_truncates_failures(self):
        """Test that only the first ten failures are listed."""
        lines: list[str] = []
        stats = SweepStats(
            submitted=12, failed=12, failures=[f"run{i}: boom" for i in range(12)]
        )
        print_sweep_summary(stats, "infer", echo=lines.append)
        assert "INFER RUNS" in lines
        assert "    run9: boom" in lines
        assert "    run10: boom" not in lines
        assert lines[-1] == "    ... and 2 more"

    def test_aggregate_summary(self, completed_store):
        """Test one row per group."""
        lines: list[str] = []
        stats = aggregate(load_summaries(completed_store))
        print_aggregate_summary(stats, echo=lines.append)
        assert lines[1] == "AGGREGATE SUMMARY (median [q1, q3])"
        rows = [line for line in lines if "/edge/correct" in line]
        assert len(rows) == 4
        assert any(row.strip().startswith("da/edge/correct eps=0.2") for row in rows)

    def test_aggregate_summary_empty(self):
        """Test the placeholder when nothing completed."""
        lines: list[str] = []
        print_aggregate_summary([], echo=lines.append)
        assert lines[-1] == "  No completed runs"
