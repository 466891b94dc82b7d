"""Minimal SVG writer.

Documents are built from :class:`Element` trees and rendered to a string.
Attribute values and text are escaped with markupsafe; numbers are formatted
with a fixed precision so identical data always yields identical bytes. Data
values behind a mark are embedded as ``data-*`` attributes.
"""

from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from markupsafe import Markup, escape

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)


def fmt_num(value: Any, digits: int = 3) -> str:
    """Fixed-precision number without trailing zeros ("-0" becomes "0")."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    text = f"{float(value):.{digits}f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def fmt_data(value: Any) -> str:
    """Full-precision rendering for data attributes."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class Element:
    """An SVG element with attributes, children and optional text."""

    def __init__(
        self, tag: str, *children: "Element", text: Optional[str] = None, **attrs: Any
    ):
        self.tag = tag
        self.children: list[Element] = list(children)
        self.text = text
        self.attrs = attrs

    def add(self, *children: "Element") -> "Element":
        self.children.extend(children)
        return self

    def _attr_items(self) -> Iterable[tuple[str, str]]:
        for key, value in self.attrs.items():
            if value is None:
                continue
            name = key.rstrip("_").replace("_", "-")
            if name.startswith("data-"):
                yield name, fmt_data(value)
            elif isinstance(value, (int, float, np.integer, np.floating)):
                yield name, fmt_num(value)
            else:
                yield name, str(value)

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        attrs = "".join(f' {name}="{escape(value)}"' for name, value in self._attr_items())
        if not self.children and self.text is None:
            return f"{pad}<{self.tag}{attrs}/>"
        if not self.children:
            return f"{pad}<{self.tag}{attrs}>{escape(self.text)}</{self.tag}>"
        inner = "\n".join(child.render(indent + 1) for child in self.children)
        head = f"{pad}<{self.tag}{attrs}>"
        if self.text is not None:
            head += str(escape(self.text))
        return f"{head}\n{inner}\n{pad}</{self.tag}>"


def group(*children: Element, **attrs: Any) -> Element:
    return Element("g", *children, **attrs)


def line(x1: float, y1: float, x2: float, y2: float, **attrs: Any) -> Element:
    attrs.setdefault("stroke", "#000")
    return Element("line", x1=x1, y1=y1, x2=x2, y2=y2, **attrs)


def rect(x: float, y: float, width: float, height: float, **attrs: Any) -> Element:
    return Element("rect", x=x, y=y, width=max(width, 0.0), height=max(height, 0.0), **attrs)


def text(x: float, y: float, content: str, **attrs: Any) -> Element:
    attrs.setdefault("font_size", 11)
    attrs.setdefault("font_family", "sans-serif")
    return Element("text", text=content, x=x, y=y, **attrs)


def polyline(xs: Sequence[float], ys: Sequence[float], **attrs: Any) -> Element:
    points = " ".join(f"{fmt_num(x)},{fmt_num(y)}" for x, y in zip(xs, ys))
    attrs.setdefault("fill", "none")
    return Element("polyline", points=points, **attrs)


def polygon(xs: Sequence[float], ys: Sequence[float], **attrs: Any) -> Element:
    points = " ".join(f"{fmt_num(x)},{fmt_num(y)}" for x, y in zip(xs, ys))
    return Element("polygon", points=points, **attrs)


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not np.isfinite(lo) or not np.isfinite(hi):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(count, 1)
    magnitude = 10 ** np.floor(np.log10(raw))
    step = next(m * magnitude for m in (1, 2, 2.5, 5, 10) if m * magnitude >= raw)
    start = np.ceil(lo / step) * step
    ticks = np.arange(start, hi + step * 1e-9, step)
    return [float(round(t, 10)) for t in ticks]


class Axes:
    """Linear data-to-pixel mapping of one plot panel."""

    def __init__(
        self,
        x_range: tuple[float, float],
        y_range: tuple[float, float],
        left: float = 60.0,
        top: float = 40.0,
        width: float = 520.0,
        height: float = 300.0,
    ):
        self.x_range = _widen(x_range)
        self.y_range = _widen(y_range)
        self.left = left
        self.top = top
        self.width = width
        self.height = height

    def x(self, value: float) -> float:
        lo, hi = self.x_range
        return self.left + (float(value) - lo) / (hi - lo) * self.width

    def y(self, value: float) -> float:
        lo, hi = self.y_range
        return self.top + self.height - (float(value) - lo) / (hi - lo) * self.height

    def frame(
        self,
        x_label: str = "",
        y_label: str = "",
        x_ticks: Optional[Sequence[tuple[float, str]]] = None,
    ) -> Element:
        """Axis lines, ticks and labels."""
        bottom = self.top + self.height
        g = group(class_="axes")
        g.add(line(self.left, bottom, self.left + self.width, bottom))
        g.add(line(self.left, self.top, self.left, bottom))
        if x_ticks is None:
            x_ticks = [(t, fmt_num(t)) for t in nice_ticks(*self.x_range)]
        for value, label in x_ticks:
            px = self.x(value)
            g.add(line(px, bottom, px, bottom + 4))
            g.add(text(px, bottom + 16, label, text_anchor="middle"))
        for value in nice_ticks(*self.y_range):
            py = self.y(value)
            g.add(line(self.left - 4, py, self.left, py))
            g.add(text(self.left - 6, py + 4, fmt_num(value), text_anchor="end"))
        if x_label:
            g.add(text(self.left + self.width / 2, bottom + 34, x_label, text_anchor="middle"))
        if y_label:
            cx, cy = self.left - 44, self.top + self.height / 2
            g.add(
                text(cx, cy, y_label, text_anchor="middle", transform=f"rotate(-90 {cx} {cy})")
            )
        return g


def _widen(bounds: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(bounds[0]), float(bounds[1])
    if hi - lo <= 0:
        pad = abs(lo) * 0.05 or 0.5
        return lo - pad, hi + pad
    return lo, hi


class SvgDocument:
    """Self-contained SVG file."""

    def __init__(self, width: float, height: float, title: str = ""):
        self.width = width
        self.height = height
        self.title = title
        self.root = Element(
            "svg",
            xmlns="http://www.w3.org/2000/svg",
            width=width,
            height=height,
            viewBox=f"0 0 {fmt_num(width)} {fmt_num(height)}",
        )
        if title:
            self.root.add(Element("title", text=title))
            self.root.add(text(width / 2, 20, title, text_anchor="middle", font_size=13))

    def add(self, *elements: Element) -> "SvgDocument":
        self.root.add(*elements)
        return self

    def render(self) -> Markup:
        return Markup('<?xml version="1.0" encoding="UTF-8"?>\n' + self.root.render() + "\n")

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(str(self.render()), encoding="utf-8")
        tmp.replace(path)
        return path


def legend(
    entries: Sequence[tuple[str, str]], x: float, y: float, dashed: Sequence[str] = ()
) -> Element:
    """Colour swatches with labels, stacked vertically."""
    g = group(class_="legend")
    for i, (label, colour) in enumerate(entries):
        yy = y + i * 16
        dash = "4 3" if label in dashed else None
        g.add(line(x, yy, x + 18, yy, stroke=colour, stroke_width=2, stroke_dasharray=dash))
        g.add(text(x + 24, yy + 4, label))
    return g
