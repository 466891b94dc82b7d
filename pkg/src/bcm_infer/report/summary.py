"""Fixed-width console summaries of a sweep."""

from collections import defaultdict
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

from ..harness.manager import SweepStats
from ..harness.models import AggregateStats, ScenarioCell
from ..harness.store import ResultStore

Echo = Callable[[str], Any]


def _banner(title: str, echo: Echo) -> None:
    echo("=" * 80)
    echo(title)
    echo("=" * 80)


def _section(title: str, echo: Echo) -> None:
    echo("\n" + "-" * 80)
    echo(title)
    echo("-" * 80)


def _size(path: Path) -> int:
    if path.is_file():
        return path.stat().st_size
    return sum(p.stat().st_size for p in path.rglob("*") if p.is_file())


def print_simulation_summary(
    store: ResultStore, cells: Sequence[ScenarioCell], echo: Echo = print
) -> None:
    """Cells, steps and on-disk sizes of the ground truth."""
    _banner("GROUND TRUTH SUMMARY", echo)
    echo(f"\nOutput: {store.root}")

    _section("TRAJECTORIES", echo)
    total = 0
    for cell in cells:
        size = _size(store.truth_dir(cell)) if store.has_truth(cell) else 0
        total += size
        echo(f"  {cell.cell_id:.<50} {cell.horizon + 1:>6,} steps {size / 1024:>9.1f} KB")
    if not cells:
        echo("  No cells in grid")

    _section("TOTALS", echo)
    echo(f"  {'Cells':.<30} {len(cells):>8,}")
    echo(f"  {'Steps per cell':.<30} {(cells[0].horizon + 1 if cells else 0):>8,}")
    echo(f"  {'Agents':.<30} {(cells[0].n_agents if cells else 0):>8,}")
    echo(f"  {'Size':.<30} {total:>8,} bytes ({total / 1024:.1f} KB)")


def print_sweep_summary(stats: SweepStats, stage: str, echo: Echo = print) -> None:
    """Run counts of one sweep command and the first few failures."""
    _section(f"{stage.upper()} RUNS", echo)
    for name, count in stats.to_dict().items():
        echo(f"  {name.capitalize():.<30} {count:>8,}")
    if stats.failures:
        echo("\n  Failures:")
        for failure in stats.failures[:10]:
            echo(f"    {failure}")
        if len(stats.failures) > 10:
            echo(f"    ... and {len(stats.failures) - 10} more")


def print_aggregate_summary(
    stats: Iterable[AggregateStats],
    metrics: Optional[Sequence[str]] = None,
    echo: Echo = print,
) -> None:
    """Median [q1, q3] per group for a handful of headline metrics."""
    metrics = list(metrics or ("e_symm", "e_sort", "f_edge", "brier"))
    table: dict[tuple, dict[str, AggregateStats]] = defaultdict(dict)
    for s in stats:
        if s.metric in metrics:
            table[s.key][s.metric] = s

    _banner("AGGREGATE SUMMARY (median [q1, q3])", echo)
    if not table:
        echo("  No completed runs")
        return

    header = f"  {'group':<44}" + "".join(f"{m:>24}" for m in metrics)
    echo(header)
    echo("  " + "-" * (len(header) - 2))
    for key in sorted(table, key=lambda k: tuple(str(v) for _, v in k)):
        values = dict(key)
        label = (
            f"{values.get('method', '')}/{values.get('granularity', '')}"
            f"/{values.get('specification', '')}"
            f" eps={values.get('epsilon', '')} sigma={values.get('noise_sigma', '')}"
        )
        cells = []
        for metric in metrics:
            s = table[key].get(metric)
            cells.append(
                f"{s.median:>8.4f} [{s.q1:.3f}, {s.q3:.3f}]" if s else f"{'-':>24}"
            )
        echo(f"  {label:<44}" + "".join(f"{c:>24}" for c in cells))
