"""Tolerant parser for the HTML subset.

The tokenizer is the stdlib html.parser; this module owns the tree builder:
a 9-tag whitelist, a 9-property style whitelist, auto-closing of stray end
tags, and normalization of fragments into a single html>body root. Unknown
tags become div (with a provenance note); script/style subtrees are dropped.
"""

from __future__ import annotations

import copy
from html.parser import HTMLParser as _Tokenizer

from ..errors import ParseError

TAG_WHITELIST = ("html", "body", "div", "p", "span", "h1", "h2", "h3", "img")
STYLE_WHITELIST = ("width", "height", "font-size", "color", "background",
                   "padding", "margin", "text-align", "font-weight")
VOID_TAGS = ("img",)
DROP_TAGS = ("script", "style", "head", "title", "meta", "link")
TEXT_TAG = "#text"


class DocNode:
    """One tree node. Elements carry tag/style/attrs/children; text leaves
    use tag '#text' with a text payload. `box` holds the frozen absolute
    pixel box (x0, y0, x1, y1) once the tree has been rendered."""

    __slots__ = ("tag", "style", "attrs", "children", "text", "node_id",
                 "span", "box", "note")

    def __init__(self, tag, style=None, attrs=None, text="", span=(0, 0)):
        self.tag = tag
        self.style = style or {}
        self.attrs = attrs or {}
        self.children = []
        self.text = text
        self.node_id = -1
        self.span = span
        self.box = None
        self.note = None

    @property
    def is_text(self):
        return self.tag == TEXT_TAG

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def find(self, node_id):
        for node in self.walk():
            if node.node_id == node_id:
                return node
        return None

    def parent_of(self, node_id):
        for node in self.walk():
            for child in node.children:
                if child.node_id == node_id:
                    return node
        return None

    def deep_copy(self):
        return copy.deepcopy(self)


def parse_style(value: str) -> dict:
    style = {}
    for part in value.split(";"):
        if ":" not in part:
            continue
        key, _, val = part.partition(":")
        key = key.strip().lower()
        if key in STYLE_WHITELIST:
            style[key] = val.strip()
    return style


class _TreeBuilder(_Tokenizer):
    def __init__(self, raw: str):
        super().__init__(convert_charrefs=True)
        self.raw = raw
        self.line_offsets = [0]
        for i, ch in enumerate(raw):
            if ch == "\n":
                self.line_offsets.append(i + 1)
        self.root = DocNode("html")
        self.stack = [self.root]
        self.drop_depth = 0
        self.notes = []

    def _offset(self):
        line, col = self.getpos()
        return self.line_offsets[line - 1] + col

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if self.drop_depth:
            if tag not in VOID_TAGS:
                self.drop_depth += 1
            return
        if tag in DROP_TAGS:
            self.notes.append(f"dropped <{tag}> subtree")
            if tag not in VOID_TAGS:
                self.drop_depth = 1
            return
        if tag == "html":
            return  # root already exists
        attrs = dict(attrs)
        style = parse_style(attrs.pop("style", "") or "")
        note = None
        if tag not in TAG_WHITELIST:
            note = f"normalized <{tag}> to <div>"
            self.notes.append(note)
            tag = "div"
        node = DocNode(tag, style=style, attrs=attrs, span=(self._offset(), 0))
        node.note = note
        self.stack[-1].children.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag.lower() not in VOID_TAGS and tag.lower() not in DROP_TAGS \
                and not self.drop_depth and tag.lower() != "html":
            self.handle_endtag(tag)

    def handle_endtag(self, tag):
        tag = tag.lower()
        if self.drop_depth:
            if tag not in VOID_TAGS:
                self.drop_depth -= 1
            return
        if tag in DROP_TAGS or tag in VOID_TAGS or tag == "html":
            return
        if tag not in TAG_WHITELIST:
            tag = "div"
        # auto-close: pop up to the matching open tag if one exists
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                for node in self.stack[i:]:
                    node.span = (node.span[0], self._offset())
                del self.stack[i:]
                return
        # stray end tag with no matching open: ignored (tolerant)

    def handle_data(self, data):
        if self.drop_depth:
            return
        text = data.strip()
        if not text:
            return
        text = " ".join(text.split())
        node = DocNode(TEXT_TAG, text=text, span=(self._offset(), 0))
        self.stack[-1].children.append(node)


def _assign_ids(root: DocNode) -> None:
    for i, node in enumerate(root.walk()):
        node.node_id = i


def parse(html_text) -> DocNode:
    """Parse UTF-8 HTML into a DocTree with document-order node ids."""
    if isinstance(html_text, bytes):
        html_text = html_text.decode("utf-8")
    builder = _TreeBuilder(html_text)
    try:
        builder.feed(html_text)
        builder.close()
    except Exception as e:  # html.parser raises only on pathological input
        line, col = builder.getpos()
        raise ParseError(f"parse: {e}", line=line, column=col)
    root = builder.root
    # normalize: ensure a single body under the root
    body = None
    for child in root.children:
        if child.tag == "body":
            body = child
            break
    if body is None:
        body = DocNode("body")
        body.children = root.children
        root.children = [body]
    else:
        # hoist stray pre/post-body siblings into the body
        extra = [c for c in root.children if c is not body]
        body.children = [c for c in body.children] + extra
        root.children = [body]
    root.note = "; ".join(builder.notes) if builder.notes else None
    _assign_ids(root)
    return root


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def serialize(root: DocNode) -> str:
    """Deterministic serialization: whitelist-ordered style keys, sorted
    attributes, minimal escaping. A parse/serialize round trip is stable."""
    out = []

    def emit(node):
        if node.is_text:
            out.append(_escape(node.text))
            return
        parts = [node.tag]
        if node.style:
            style = ";".join(f"{k}:{node.style[k]}"
                             for k in STYLE_WHITELIST if k in node.style)
            parts.append(f'style="{style}"')
        for key in sorted(node.attrs):
            parts.append(f'{key}="{node.attrs[key]}"')
        out.append("<" + " ".join(parts) + ">")
        if node.tag not in VOID_TAGS:
            for child in node.children:
                emit(child)
            out.append(f"</{node.tag}>")

    emit(root)
    return "".join(out)
