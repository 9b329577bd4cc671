"""Deterministic block renderer.

Blocks stack vertically inside their parent's content box. Heights computed
at the first layout are frozen into the tree, so later text edits never
reflow siblings: that is what makes the non-target-pixel guarantee of the
pair factory literally checkable. All painting is clipped to the node box.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ConfigError
from ..glyph_layout import BASE_CELL, GlyphFont, _wrap, draw_text
from .parser import DocNode

DEFAULT_PAGE = (512, 512)
DEFAULT_FONT_SIZE = {"h1": 24, "h2": 16, "h3": 16}
DEFAULT_IMG_HEIGHT = 64

NAMED_COLORS = {
    "black": (0, 0, 0), "white": (255, 255, 255), "red": (200, 30, 30),
    "green": (30, 160, 60), "blue": (40, 70, 200), "yellow": (230, 200, 40),
    "gray": (128, 128, 128), "grey": (128, 128, 128), "orange": (240, 140, 20),
    "purple": (130, 50, 160), "navy": (20, 30, 90), "teal": (20, 130, 130),
    "silver": (192, 192, 192), "maroon": (130, 20, 40),
}


def resolve_color(value, default=(0, 0, 0)):
    if not value:
        return default
    value = value.strip().lower()
    if value in NAMED_COLORS:
        return NAMED_COLORS[value]
    if value.startswith("#"):
        hexpart = value[1:]
        if len(hexpart) == 3:
            hexpart = "".join(c * 2 for c in hexpart)
        if len(hexpart) == 6:
            try:
                return tuple(int(hexpart[i : i + 2], 16) for i in (0, 2, 4))
            except ValueError:
                pass
    return default


def px(value, default=0):
    if value is None:
        return default
    s = str(value).strip().lower().removesuffix("px")
    try:
        return max(0, int(round(float(s))))
    except ValueError:
        return default


def _font_size(node, inherited):
    return px(node.style.get("font-size"),
              DEFAULT_FONT_SIZE.get(node.tag, inherited))


def _layout(node, x, y, avail_w, font_size):
    """Assign node.box; return the outer height consumed."""
    if node.is_text:
        cell = BASE_CELL * max(1, round(font_size / BASE_CELL))
        cols = max(1, avail_w // cell)
        lines = _wrap(node.text, cols)
        h = len(lines) * cell
        node.box = (x, y, x + avail_w, y + h)
        return h
    margin = px(node.style.get("margin"))
    pad = px(node.style.get("padding"))
    w = px(node.style.get("width"), 0) or max(1, avail_w - 2 * margin)
    x0, y0 = x + margin, y + margin
    fs = _font_size(node, font_size)
    if node.tag == "img":
        h = px(node.style.get("height"), 0) or DEFAULT_IMG_HEIGHT
        node.box = (x0, y0, x0 + w, y0 + h)
        return h + 2 * margin
    cy = y0 + pad
    for child in node.children:
        cy += _layout(child, x0 + pad, cy, max(1, w - 2 * pad), fs)
    content_h = cy - y0 - pad
    h = px(node.style.get("height"), 0) or content_h + 2 * pad
    node.box = (x0, y0, x0 + w, y0 + h)
    return h + 2 * margin


def _clip_box(box, w, h):
    x0, y0, x1, y1 = box
    return (max(0, min(x0, w)), max(0, min(y0, h)),
            max(0, min(x1, w)), max(0, min(y1, h)))


def _checkerboard(canvas, box, url):
    x0, y0, x1, y1 = box
    if x1 <= x0 or y1 <= y0:
        return
    digest = hashlib.sha256(url.encode("utf-8")).digest()
    tint = np.array([96 + digest[0] % 128, 96 + digest[1] % 128,
                     96 + digest[2] % 128], dtype=np.uint8)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    mask = ((xs // 8) + (ys // 8)) % 2 == 0
    tile = np.where(mask[:, :, None], tint[None, None, :],
                    np.uint8(230) * np.ones(3, dtype=np.uint8)[None, None, :])
    canvas[y0:y1, x0:x1] = tile


def _paint(node, canvas, color, font):
    ph, pw = canvas.shape[:2]
    box = _clip_box(node.box, pw, ph)
    if node.is_text:
        gray = np.zeros((ph, pw), dtype=np.uint8)
        x0, y0, x1, y1 = box
        if x1 > x0 and y1 > y0:
            draw_text(gray, node.text, x0, y0, x1, y1, font)
            mask = gray > 0
            canvas[mask] = color
        return
    if "background" in node.style:
        x0, y0, x1, y1 = box
        canvas[y0:y1, x0:x1] = resolve_color(node.style["background"],
                                             (255, 255, 255))
    if node.tag == "img":
        _checkerboard(canvas, box, node.attrs.get("url", node.attrs.get("src", "")))
        return
    child_color = resolve_color(node.style.get("color"), color) \
        if "color" in node.style else color
    bold = node.style.get("font-weight", "").strip().lower() == "bold"
    for child in node.children:
        if child.is_text and bold:
            _paint_bold_text(child, canvas, child_color, font)
        else:
            _paint(child, canvas, child_color, font)


def _paint_bold_text(node, canvas, color, font):
    ph, pw = canvas.shape[:2]
    x0, y0, x1, y1 = _clip_box(node.box, pw, ph)
    if x1 <= x0 or y1 <= y0:
        return
    gray = np.zeros((ph, pw), dtype=np.uint8)
    draw_text(gray, node.text, x0, y0, x1, y1, font)
    # poor man's bold: smear one pixel right, still clipped to the box
    smear = np.zeros_like(gray)
    smear[:, x0 + 1 : x1] = gray[:, x0 : x1 - 1]
    mask = (gray > 0) | (smear > 0)
    canvas[mask] = color


def page_size(root: DocNode):
    body = root.children[0] if root.children else root
    w = px(body.style.get("width"), 0) or px(root.style.get("width"), 0) \
        or DEFAULT_PAGE[0]
    h = px(body.style.get("height"), 0) or px(root.style.get("height"), 0) \
        or DEFAULT_PAGE[1]
    return w, h


def render(root: DocNode, font: GlyphFont | None = None):
    """Render the tree to an RGB raster. Returns (raster, geometry) where
    geometry maps node_id -> absolute pixel box. The first render freezes
    every node's box into the tree; later renders reuse frozen boxes."""
    font = font or GlyphFont.bundled()
    w, h = page_size(root)
    needs_layout = any(n.box is None for n in root.walk())
    if needs_layout:
        root.box = (0, 0, w, h)
        body = root.children[0]
        _layout(body, 0, 0, w, BASE_CELL)
        body.box = (0, 0, w, h)  # body always spans the page
    canvas = np.full((h, w, 3), 255, dtype=np.uint8)
    body = root.children[0]
    if "background" in body.style:
        canvas[:, :] = resolve_color(body.style["background"], (255, 255, 255))
    for child in body.children:
        _paint(child, canvas, (0, 0, 0), font)
    geometry = {n.node_id: n.box for n in root.walk() if n.box is not None}
    return canvas, geometry
