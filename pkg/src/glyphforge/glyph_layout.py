"""Glyph-prior construction.

Target strings are drawn white-on-black inside their planned boxes on a
canvas matching the source image size. Rendering uses an embedded 8x8
bitmap font so output bytes are a pure function of the inputs: outline
fonts rasterize differently across platforms and would break byte-exact
fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from math import ceil, floor

import numpy as np

from .errors import ProtocolError, ShapeError

BASE_CELL = 8  # pixel side of one glyph at scale 1


@dataclass(frozen=True)
class TextRegion:
    """One (bbox, text) tuple from the detect-and-plan step.

    bbox is (x0, y0, x1, y1) normalized to [0,1], top-left / bottom-right.
    """

    bbox: tuple
    text: str
    role: str = "target"  # "original" | "target"

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ShapeError(f"region bbox invalid: {self.bbox}")
        if self.role not in ("original", "target"):
            raise ShapeError(f"region role invalid: {self.role}")
        if self.role == "target" and self.text == "":
            raise ShapeError("target region with empty text (deletions omit the region)")


class GlyphFont:
    """Fixed-cell bitmap font with a hollow-box replacement glyph."""

    def __init__(self, table: dict):
        self.replacement = tuple(table["replacement"])
        self.glyphs = {
            int(k): tuple(v) for k, v in table.items() if k != "replacement"
        }

    @classmethod
    def bundled(cls) -> "GlyphFont":
        data = resources.files("glyphforge").joinpath("data/font8x8.json").read_text()
        return cls(json.loads(data))

    @property
    def coverage(self):
        return set(self.glyphs)

    def rows(self, ch: str) -> tuple:
        return self.glyphs.get(ord(ch), self.replacement)


@dataclass
class TextFit:
    scale: int
    lines: list  # list of strings after wrapping (clipped if needed)
    anchor: tuple  # (x, y) pixel offset of the block's top-left inside the box
    clipped: bool = False


def _wrap(text: str, cols: int) -> list:
    """Greedy word wrap into at most-cols-character lines; long words split."""
    lines = []
    cur = ""
    for word in text.split(" "):
        while len(word) > cols:
            if cur:
                lines.append(cur)
                cur = ""
            lines.append(word[:cols])
            word = word[cols:]
        if not cur:
            cur = word
        elif len(cur) + 1 + len(word) <= cols:
            cur = cur + " " + word
        else:
            lines.append(cur)
            cur = word
    if cur or not lines:
        lines.append(cur)
    return lines


def fit_text(text: str, box_w: int, box_h: int, font: GlyphFont) -> TextFit:
    """Pick the largest integer scale of the base cell at which the
    word-wrapped text fits the box; the block is centered. If even scale 1
    overflows, the text is clipped to the box."""
    if box_w < 1 or box_h < 1:
        raise ShapeError(f"fit_text: degenerate box {box_w}x{box_h}")
    best = None
    s = 1
    while True:
        cell = BASE_CELL * s
        cols = box_w // cell
        rows_avail = box_h // cell
        if cols < 1 or rows_avail < 1:
            break
        lines = _wrap(text, cols)
        if len(lines) <= rows_avail:
            best = (s, lines)
        elif best is not None:
            break
        s += 1
        if cell > max(box_w, box_h):
            break
    if best is not None:
        s, lines = best
        clipped = False
    else:
        s = 1
        cols = max(1, box_w // BASE_CELL)
        rows_avail = max(1, box_h // BASE_CELL)
        lines = _wrap(text, cols)[:rows_avail]
        clipped = True
    cell = BASE_CELL * s
    block_w = max((len(ln) for ln in lines), default=0) * cell
    block_h = len(lines) * cell
    ax = max(0, (box_w - block_w) // 2)
    ay = max(0, (box_h - block_h) // 2)
    return TextFit(scale=s, lines=lines, anchor=(ax, ay), clipped=clipped)


def draw_text(canvas: np.ndarray, text: str, x0: int, y0: int, x1: int, y1: int,
              font: GlyphFont, value=255) -> bool:
    """Draw text fitted to the pixel box [x0,x1)x[y0,y1), clipping to the box
    and to the canvas. Returns the clipped flag of the fit."""
    box_w, box_h = x1 - x0, y1 - y0
    if box_w < 1 or box_h < 1:
        return True
    fit = fit_text(text, box_w, box_h, font)
    cell = BASE_CELL * fit.scale
    h, w = canvas.shape[:2]
    for row_i, line in enumerate(fit.lines):
        for col_i, ch in enumerate(line):
            rows = font.rows(ch)
            gx = x0 + fit.anchor[0] + col_i * cell
            gy = y0 + fit.anchor[1] + row_i * cell
            for ry in range(BASE_CELL):
                bits = rows[ry]
                if not bits:
                    continue
                for rx in range(BASE_CELL):
                    if not (bits >> (7 - rx)) & 1:
                        continue
                    px0 = gx + rx * fit.scale
                    py0 = gy + ry * fit.scale
                    for py in range(py0, py0 + fit.scale):
                        if py < y0 or py >= y1 or py < 0 or py >= h:
                            continue
                        for px in range(px0, px0 + fit.scale):
                            if px < x0 or px >= x1 or px < 0 or px >= w:
                                continue
                            canvas[py, px] = value
    return fit.clipped


def region_pixel_box(region: TextRegion, width: int, height: int) -> tuple:
    """Normalized bbox to pixel box: floor on the min corner, ceil on the max,
    so the pixel box always contains the real box."""
    x0, y0, x1, y1 = region.bbox
    return (floor(x0 * width), floor(y0 * height),
            min(width, ceil(x1 * width)), min(height, ceil(y1 * height)))


def render_glyph(regions, width: int, height: int,
                 font: GlyphFont | None = None) -> np.ndarray:
    """Render the glyph prior: white text in each target region's box on a
    black canvas. Overlapping boxes paint in list order (later wins); regions
    whose pixel box rounds to zero area are skipped (use
    render_glyph_with_warnings to see which)."""
    canvas, _ = render_glyph_with_warnings(regions, width, height, font)
    return canvas


def render_glyph_with_warnings(regions, width: int, height: int,
                               font: GlyphFont | None = None):
    if width < 1 or height < 1:
        raise ShapeError(f"render_glyph: canvas {width}x{height} invalid")
    font = font or GlyphFont.bundled()
    canvas = np.zeros((height, width), dtype=np.uint8)
    skipped = []
    for i, region in enumerate(regions):
        if region.role != "target":
            continue
        bx0, by0, bx1, by1 = region_pixel_box(region, width, height)
        if bx1 - bx0 < 1 or by1 - by0 < 1:
            skipped.append((i, region.text))
            continue
        draw_text(canvas, region.text, bx0, by0, bx1, by1, font)
    return canvas, skipped


def regions_from_json(obj) -> list:
    """Validate the {"regions": [...]} wire schema into TextRegion objects."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    bad = []
    out = []
    for i, entry in enumerate(obj.get("regions", [])):
        try:
            out.append(TextRegion(bbox=tuple(entry["bbox"]),
                                  text=entry["text"],
                                  role=entry.get("role", "target")))
        except (ShapeError, KeyError, TypeError, ValueError) as e:
            bad.append((i, str(e)))
    if bad:
        raise ProtocolError(f"plan_regions: malformed tuples at {bad}")
    return out


def plan_regions(client, source_image, instruction: str):
    """Ask the planner (live VLM service or fixture mock) for original and
    target region tuples, validating both lists."""
    response = client.plan(source_image, instruction)
    original = regions_from_json({"regions": response.get("original", [])})
    target = regions_from_json({"regions": response.get("target", [])})
    original = [TextRegion(r.bbox, r.text, "original") for r in original]
    target = [TextRegion(r.bbox, r.text, "target") for r in target]
    return original, target
