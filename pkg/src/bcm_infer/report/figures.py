"""SVG figures of ground truth, reconstructions and forecasts."""

import logging
import math
from collections import defaultdict
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..constants import Granularity, Method, regime_name
from ..harness.aggregate import aggregate
from ..harness.models import ScenarioCell, Specification
from ..harness.store import ResultStore
from .svg import PALETTE, Axes, Element, SvgDocument, fmt_num, group, legend, line, polygon
from .svg import polyline, rect, text

logger = logging.getLogger(__name__)

MAX_POINTS = 250

RECONSTRUCTION_BOX_METRICS = ("e_symm", "e_sort")
FORECAST_BOX_METRICS = ("f_edge", "f_node", "f_global", "brier", "brier_node", "brier_global")


class FigureKind(str, Enum):
    """Available figure types."""

    TRUTH_TRACES = "truth-traces"
    TRAJECTORY_TRACES = "trajectory-traces"
    RECONSTRUCTION_BOXPLOT = "reconstruction-boxplot"
    FORECAST_BOXPLOT = "forecast-boxplot"
    FORECAST_TIMESERIES = "forecast-timeseries"


class EmptySelectionError(LookupError):
    """Raised when a figure's selectors match no data."""

    pass


class FigureSpec(BaseModel):
    """What to draw and where."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: FigureKind
    method: Optional[Method] = None
    granularity: Optional[Granularity] = None
    epsilon: Optional[float] = Field(None, gt=0.0, le=1.0)
    noise_sigma: Optional[float] = Field(None, ge=0.0)
    specification: Optional[Specification] = None
    metric: Optional[str] = None
    output: Optional[str] = None

    def selectors(self) -> dict[str, Any]:
        """Non-empty run selectors as group-key values."""
        out: dict[str, Any] = {}
        for name in ("method", "granularity", "epsilon", "noise_sigma", "specification"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value.value if isinstance(value, Enum) else value
        return out

    def file_name(self) -> str:
        parts = [self.kind.value]
        if self.metric:
            parts.append(self.metric)
        for name, value in self.selectors().items():
            parts.append(f"{name}{fmt_num(value) if isinstance(value, float) else value}")
        return "_".join(parts) + ".svg"


def select(summaries: Sequence[dict[str, Any]], spec: FigureSpec) -> list[dict[str, Any]]:
    wanted = spec.selectors()
    return [
        s for s in summaries if all(_same(s.get(name), value) for name, value in wanted.items())
    ]


def _same(a: Any, b: Any) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        return a is not None and math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=1e-15)
    return a == b


def available_keys(summaries: Sequence[dict[str, Any]]) -> dict[str, list[Any]]:
    keys: dict[str, set] = defaultdict(set)
    for s in summaries:
        for name in ("method", "granularity", "epsilon", "noise_sigma", "specification"):
            keys[name].add(s[name])
    return {name: sorted(values, key=str) for name, values in keys.items()}


def _empty(spec: FigureSpec, summaries: Sequence[dict[str, Any]]) -> EmptySelectionError:
    keys = ", ".join(
        f"{name}={{{', '.join(str(v) for v in values)}}}"
        for name, values in available_keys(summaries).items()
    )
    return EmptySelectionError(
        f"No runs match {spec.kind.value} selectors {spec.selectors()}; available: {keys or 'none'}"
    )


def series_label(method: str, granularity: str) -> str:
    return f"{method.upper()}-{granularity}"


def _series_colours(labels: Sequence[str]) -> dict[str, str]:
    return {label: PALETTE[i % len(PALETTE)] for i, label in enumerate(sorted(set(labels)))}


def _thin(length: int) -> np.ndarray:
    """Indices of at most MAX_POINTS samples including the last."""
    stride = max(1, math.ceil(length / MAX_POINTS))
    idx = np.arange(0, length, stride)
    if idx[-1] != length - 1:
        idx = np.append(idx, length - 1)
    return idx


def median_run(members: Sequence[dict[str, Any]], metric: str = "e_symm") -> dict[str, Any]:
    """The run whose metric is closest to the group median (ties broken by run_id)."""
    values = np.array([m[metric] for m in members], dtype=np.float64)
    median = float(np.median(values))
    return min(members, key=lambda m: (abs(m[metric] - median), m["run_id"]))


def _traces(
    axes: Axes, times: np.ndarray, states: np.ndarray, colour: str, **attrs: Any
) -> Element:
    idx = _thin(len(times))
    g = group(stroke=colour, **attrs)
    for agent in range(states.shape[1]):
        g.add(
            polyline(
                [axes.x(t) for t in times[idx]],
                [axes.y(v) for v in states[idx, agent]],
                data_agent=agent,
            )
        )
    return g


def render_truth_traces(spec: FigureSpec, store: ResultStore, path: Path) -> Path:
    cells = [c for c in store.truth_cells() if _cell_matches(c, spec)]
    if not cells:
        raise EmptySelectionError(
            f"No ground truth matches {spec.selectors()}; run 'simulate' first"
        )
    by_noise: dict[float, ScenarioCell] = {}
    for cell in sorted(cells, key=lambda c: (c.noise_sigma, c.seed)):
        by_noise.setdefault(cell.noise_sigma, cell)

    panel_h, gap = 180.0, 70.0
    doc = SvgDocument(640, 60 + len(by_noise) * (panel_h + gap), _title(spec, "Ground truth"))
    for row, (sigma, cell) in enumerate(sorted(by_noise.items())):
        truth = store.load_truth(cell)
        times = np.arange(len(truth))
        axes = Axes((0, cell.horizon), (0, 1), top=50 + row * (panel_h + gap), height=panel_h)
        doc.add(axes.frame("t", "opinion"))
        doc.add(text(axes.left + 4, axes.top - 6, f"sigma={fmt_num(sigma, 6)} seed={cell.seed}"))
        doc.add(
            _traces(
                axes,
                times,
                truth.states,
                "#444",
                stroke_width=0.6,
                stroke_opacity=0.5,
                data_cell_id=cell.cell_id,
                data_noise_sigma=sigma,
            )
        )
    return doc.write(path)


def _cell_matches(cell: ScenarioCell, spec: FigureSpec) -> bool:
    if spec.epsilon is not None and not _same(cell.epsilon, spec.epsilon):
        return False
    if spec.noise_sigma is not None and not _same(cell.noise_sigma, spec.noise_sigma):
        return False
    return True


def render_trajectory_traces(
    spec: FigureSpec, store: ResultStore, summaries: Sequence[dict[str, Any]], path: Path
) -> Path:
    chosen = select(summaries, spec)
    if not chosen:
        raise _empty(spec, summaries)
    run = median_run(chosen, spec.metric or "e_symm")
    entry = store.load_manifest()["runs"][run["run_id"]]
    cell = ScenarioCell.model_validate(entry["spec"]["cell"])
    truth = store.load_truth(cell)
    estimates = store.load_inference(run["run_id"])["estimates"]
    forecast = store.read_forecast_states(run["run_id"])

    doc = SvgDocument(640, 420, _title(spec, "Opinion traces"))
    axes = Axes((0, cell.horizon), (0, 1))
    doc.add(axes.frame("t", "opinion"))
    doc.add(
        _traces(axes, np.arange(len(truth)), truth.states, "#999", stroke_width=0.6),
    )
    colour = PALETTE[0] if run["method"] == Method.LBI.value else PALETTE[1]
    doc.add(
        _traces(
            axes,
            np.arange(len(estimates)),
            estimates,
            colour,
            stroke_width=0.8,
            data_run_id=run["run_id"],
            data_e_symm=run.get("e_symm"),
        )
    )
    if forecast is not None:
        times = np.arange(cell.train_cutoff, cell.train_cutoff + len(forecast))
        doc.add(
            _traces(axes, times, forecast, colour, stroke_width=0.8, stroke_dasharray="3 2")
        )
    cx = axes.x(cell.train_cutoff)
    doc.add(line(cx, axes.top, cx, axes.top + axes.height, stroke="#000", stroke_dasharray="5 4"))
    label = series_label(run["method"], run["granularity"])
    doc.add(
        legend(
            [("truth", "#999"), (label, colour), (f"{label} forecast", colour)],
            axes.left + axes.width - 130,
            axes.top + 12,
            dashed=[f"{label} forecast"],
        )
    )
    return doc.write(path)


def render_boxplot(
    spec: FigureSpec, summaries: Sequence[dict[str, Any]], path: Path, default_metric: str
) -> Path:
    metric = spec.metric or default_metric
    chosen = [s for s in select(summaries, spec) if metric in s]
    if not chosen:
        raise _empty(spec, summaries)

    stats = aggregate(chosen, group_by=("method", "granularity", "noise_sigma"), metrics=[metric])
    reference = {}
    if metric == "e_sort":
        for s in aggregate(
            chosen, group_by=("method", "granularity", "noise_sigma"), metrics=["e_plain"]
        ):
            reference[s.key] = s.median

    values: dict[tuple, list[float]] = defaultdict(list)
    for s in chosen:
        values[(s["method"], s["granularity"], s["noise_sigma"])].append(s[metric])

    noises = sorted({dict(s.key)["noise_sigma"] for s in stats})
    keys = [dict(s.key) for s in stats]
    labels = sorted({series_label(k["method"], k["granularity"]) for k in keys})
    colours = _series_colours(labels)
    lo = min(min(v) for v in values.values())
    hi = max(max(v) for v in values.values())
    lo = min(lo, min(reference.values(), default=lo))
    hi = max(hi, max(reference.values(), default=hi))

    doc = SvgDocument(680, 440, _title(spec, metric))
    axes = Axes((-0.5, len(noises) - 0.5), (min(0.0, lo), hi * 1.05 if hi > 0 else 1.0))
    doc.add(axes.frame("noise sigma", metric, [(i, fmt_num(n, 6)) for i, n in enumerate(noises)]))

    slot = 0.8 / max(len(labels), 1)
    for s in stats:
        key = dict(s.key)
        label = series_label(key["method"], key["granularity"])
        i = noises.index(key["noise_sigma"])
        j = labels.index(label)
        centre = i - 0.4 + slot * (j + 0.5)
        left, right = axes.x(centre - slot * 0.4), axes.x(centre + slot * 0.4)
        raw = values[(key["method"], key["granularity"], key["noise_sigma"])]
        box = group(
            class_="box",
            data_series=label,
            data_noise_sigma=key["noise_sigma"],
            data_metric=metric,
            data_count=s.count,
            data_mean=s.mean,
            data_median=s.median,
            data_q1=s.q1,
            data_q3=s.q3,
            data_min=min(raw),
            data_max=max(raw),
        )
        cx = axes.x(centre)
        box.add(line(cx, axes.y(min(raw)), cx, axes.y(s.q1), stroke=colours[label]))
        box.add(line(cx, axes.y(s.q3), cx, axes.y(max(raw)), stroke=colours[label]))
        box.add(
            rect(
                left,
                axes.y(s.q3),
                right - left,
                axes.y(s.q1) - axes.y(s.q3),
                fill=colours[label],
                fill_opacity=0.35,
                stroke=colours[label],
            )
        )
        box.add(line(left, axes.y(s.median), right, axes.y(s.median), stroke="#000"))
        if s.key in reference:
            box.add(
                line(
                    left,
                    axes.y(reference[s.key]),
                    right,
                    axes.y(reference[s.key]),
                    stroke="#000",
                    stroke_dasharray="3 2",
                    data_unsorted_median=reference[s.key],
                )
            )
        doc.add(box)

    entries = [(label, colours[label]) for label in labels]
    dashed = []
    if reference:
        entries.append(("unsorted median", "#000"))
        dashed.append("unsorted median")
    doc.add(legend(entries, axes.left + axes.width + 10 - 120, axes.top + 10, dashed=dashed))
    return doc.write(path)


def render_forecast_timeseries(
    spec: FigureSpec, store: ResultStore, summaries: Sequence[dict[str, Any]], path: Path
) -> Path:
    chosen = select(summaries, spec)
    if not chosen:
        raise _empty(spec, summaries)

    runs = store.load_manifest()["runs"]
    predicted: dict[str, list[np.ndarray]] = defaultdict(list)
    steps: Optional[np.ndarray] = None
    cells: dict[str, ScenarioCell] = {}
    for s in sorted(chosen, key=lambda r: r["run_id"]):
        rows = [r for r in store.read_metrics(s["run_id"]) if r["metric"] == "predicted_global"]
        if not rows:
            continue
        rows.sort(key=lambda r: r["t"])
        steps = np.array([r["t"] for r in rows])
        predicted[series_label(s["method"], s["granularity"])].append(
            np.array([r["value"] for r in rows])
        )
        cell = ScenarioCell.model_validate(runs[s["run_id"]]["spec"]["cell"])
        cells[cell.cell_id] = cell
    if steps is None:
        raise _empty(spec, summaries)

    truth = np.stack(
        [
            store.load_truth(c).series(Granularity.GLOBAL).values[steps, 0].astype(float)
            for _, c in sorted(cells.items())
        ]
    )
    bands = {"truth": truth}
    bands.update({label: np.stack(v) for label, v in sorted(predicted.items())})
    colours = _series_colours(list(predicted))
    colours["truth"] = "#444"

    hi = max(float(np.max(b)) for b in bands.values())
    doc = SvgDocument(680, 440, _title(spec, "Total interactions"))
    axes = Axes((steps[0], steps[-1]), (0, hi * 1.05 if hi > 0 else 1.0))
    doc.add(axes.frame("t", "interacting pairs"))
    idx = _thin(len(steps))
    xs = [axes.x(t) for t in steps[idx]]
    for label, data in bands.items():
        q1, median, q3 = np.quantile(data, [0.25, 0.5, 0.75], axis=0, method="linear")
        g = group(class_="series", data_series=label, data_runs=data.shape[0])
        g.add(
            polygon(
                xs + xs[::-1],
                [axes.y(v) for v in q3[idx]] + [axes.y(v) for v in q1[idx][::-1]],
                fill=colours[label],
                fill_opacity=0.2,
                stroke="none",
            )
        )
        g.add(
            polyline(
                xs,
                [axes.y(v) for v in median[idx]],
                stroke=colours[label],
                stroke_width=1.5,
                data_median_final=float(median[-1]),
            )
        )
        doc.add(g)
    doc.add(
        legend(
            [(label, colours[label]) for label in bands],
            axes.left + axes.width - 120,
            axes.top + 10,
        )
    )
    return doc.write(path)


def _title(spec: FigureSpec, subject: str) -> str:
    parts = [subject]
    if spec.epsilon is not None:
        parts.append(f"{regime_name(spec.epsilon)} (eps={fmt_num(spec.epsilon)})")
    if spec.noise_sigma is not None:
        parts.append(f"sigma={fmt_num(spec.noise_sigma, 6)}")
    if spec.method is not None:
        parts.append(spec.method.value.upper())
    if spec.granularity is not None:
        parts.append(spec.granularity.value)
    if spec.specification is not None:
        parts.append(spec.specification.value)
    return ", ".join(parts)


def render_figure(
    spec: FigureSpec,
    store: ResultStore,
    summaries: Optional[Sequence[dict[str, Any]]] = None,
    directory: Optional[Path] = None,
) -> Path:
    """
    Render one figure.

    Raises:
        EmptySelectionError: If the selectors match no data
    """
    if summaries is None:
        from ..harness.aggregate import load_summaries

        summaries = load_summaries(store)
    target = Path(spec.output) if spec.output else (directory or store.root / "figures")
    path = target if target.suffix == ".svg" else target / spec.file_name()

    if spec.kind is FigureKind.TRUTH_TRACES:
        result = render_truth_traces(spec, store, path)
    elif spec.kind is FigureKind.TRAJECTORY_TRACES:
        result = render_trajectory_traces(spec, store, summaries, path)
    elif spec.kind is FigureKind.RECONSTRUCTION_BOXPLOT:
        result = render_boxplot(spec, summaries, path, "e_symm")
    elif spec.kind is FigureKind.FORECAST_BOXPLOT:
        result = render_boxplot(spec, summaries, path, "f_edge")
    else:
        result = render_forecast_timeseries(spec, store, summaries, path)
    logger.debug(f"Wrote {spec.kind.value} figure", extra={"path": str(result)})
    return result


def default_figure_specs(summaries: Sequence[dict[str, Any]]) -> list[FigureSpec]:
    """The standard figure set for the runs present."""
    epsilons = sorted({s["epsilon"] for s in summaries})
    noises = sorted({s["noise_sigma"] for s in summaries})
    specifications = sorted({s["specification"] for s in summaries})
    pairs = sorted({(s["method"], s["granularity"]) for s in summaries})

    specs: list[FigureSpec] = []
    for eps in epsilons:
        specs.append(FigureSpec(kind=FigureKind.TRUTH_TRACES, epsilon=eps))
        for method, granularity in pairs:
            specs.append(
                FigureSpec(
                    kind=FigureKind.TRAJECTORY_TRACES,
                    method=method,
                    granularity=granularity,
                    epsilon=eps,
                    noise_sigma=noises[0],
                    specification=Specification.CORRECT,
                )
            )
        for specification in specifications:
            for metric in RECONSTRUCTION_BOX_METRICS:
                specs.append(
                    FigureSpec(
                        kind=FigureKind.RECONSTRUCTION_BOXPLOT,
                        epsilon=eps,
                        specification=specification,
                        metric=metric,
                    )
                )
            for metric in FORECAST_BOX_METRICS:
                specs.append(
                    FigureSpec(
                        kind=FigureKind.FORECAST_BOXPLOT,
                        epsilon=eps,
                        specification=specification,
                        metric=metric,
                    )
                )
        for sigma in noises:
            specs.append(
                FigureSpec(
                    kind=FigureKind.FORECAST_TIMESERIES,
                    epsilon=eps,
                    noise_sigma=sigma,
                    specification=Specification.CORRECT,
                )
            )
    return [s for s in specs if s.kind is FigureKind.TRUTH_TRACES or select(summaries, s)]
