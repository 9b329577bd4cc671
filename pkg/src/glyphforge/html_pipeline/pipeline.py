"""The structured edit-pair factory.

parse -> render (freezes geometry) -> extract -> make_plan -> backfill ->
render again, then verify that every differing pixel lies inside the
declared edited boxes. Frozen geometry is what makes that verification
sound: text edits cannot reflow siblings, so any leak is a bug, not data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConsistencyError, PlanningError
from ..glyph_layout import BASE_CELL
from .parser import DocNode, STYLE_WHITELIST, TEXT_TAG, parse, serialize
from .render import NAMED_COLORS, page_size, px, render

OPERATIONS = ("add", "replace", "delete", "rearrange", "translate",
              "change_style", "combined")
LANGUAGES = ("en", "zh", "hi", "es", "fr", "ar", "pt", "bn", "ru", "de",
             "ko", "ja", "th", "id", "vi")

STYLE_COLOR_CHOICES = ("red", "blue", "green", "orange", "purple", "teal",
                       "maroon", "navy")


@dataclass
class ContentRecord:
    texts: list  # [{node_id, text, box}]
    images: list  # [{node_id, url, box, valid}]

    @property
    def n(self):
        return len(self.texts)


@dataclass
class EditPlan:
    operation: str
    targets: list
    payload: dict
    instruction: str
    subplans: list = field(default_factory=list)


@dataclass
class EditPair:
    source_tree: DocNode
    target_tree: DocNode
    source_raster: np.ndarray
    target_raster: np.ndarray
    edited_boxes: list
    plan: EditPlan
    language: str = "en"
    clipped: bool = False


def _url_valid(url: str) -> bool:
    return url.startswith(("http://", "https://", "file://", "data:")) and \
        " " not in url


def extract(tree: DocNode, geometry: dict) -> ContentRecord:
    """List every text leaf and img element, in document order, with the
    pixel box the renderer assigned."""
    texts, images = [], []
    for node in tree.walk():
        box = geometry.get(node.node_id)
        if node.is_text:
            texts.append({"node_id": node.node_id, "text": node.text, "box": box})
        elif node.tag == "img":
            url = node.attrs.get("url", node.attrs.get("src", ""))
            images.append({"node_id": node.node_id, "url": url, "box": box,
                           "valid": _url_valid(url)})
    return ContentRecord(texts=texts, images=images)


# ---------------------------------------------------------------------------
# planning


def _pick_targets(rng, record, k):
    idx = sorted(rng.choice(record.n, size=k, replace=False).tolist())
    return [record.texts[i] for i in idx]


def make_plan(record: ContentRecord, operation: str, seed: int, text_client,
              translator=None, language: str = "de", tree: DocNode | None = None,
              _rng=None) -> EditPlan:
    """Build a deterministic EditPlan for one operation.

    `tree` is needed for change_style (targets are the parent elements of
    text entries) and for add placement checks.
    """
    if operation not in OPERATIONS:
        raise PlanningError(f"make_plan: unknown operation {operation}")
    rng = _rng if _rng is not None else np.random.default_rng(seed)
    if record.n == 0 and operation != "add":
        raise PlanningError(f"make_plan: {operation} needs text entries, record has none")

    if operation == "replace":
        k = int(rng.integers(1, record.n + 1))
        targets = _pick_targets(rng, record, k)
        new_texts = {t["node_id"]: text_client.substitute(t["text"], seed)
                     for t in targets}
        olds = ", ".join(f'"{t["text"]}"' for t in targets)
        return EditPlan("replace", [t["node_id"] for t in targets],
                        {"texts": new_texts},
                        f"Replace the text {olds} with new content.")

    if operation == "translate":
        if translator is None:
            raise PlanningError("make_plan: translate needs a translator client")
        new_texts = {t["node_id"]: translator.translate(t["text"], language)
                     for t in record.texts}
        return EditPlan("translate", [t["node_id"] for t in record.texts],
                        {"texts": new_texts, "language": language},
                        f"Translate all text in the image into {language}.")

    if operation == "delete":
        k = int(rng.integers(1, record.n + 1))
        targets = _pick_targets(rng, record, k)
        olds = ", ".join(f'"{t["text"]}"' for t in targets)
        return EditPlan("delete", [t["node_id"] for t in targets], {},
                        f"Delete the text {olds}.")

    if operation == "rearrange":
        if record.n < 2:
            raise PlanningError("make_plan: rearrange needs at least 2 text entries")
        k = int(rng.integers(2, record.n + 1))
        targets = [t["node_id"] for t in _pick_targets(rng, record, k)]
        for _ in range(10):
            perm = rng.permutation(k).tolist()
            if any(p != i for i, p in enumerate(perm)):
                break
        else:
            raise PlanningError("make_plan: could not draw a non-identity permutation")
        return EditPlan("rearrange", targets, {"permutation": perm},
                        "Rearrange the highlighted text elements.")

    if operation == "add":
        text = text_client.generate_text(seed)
        return EditPlan("add", [], {"text": text},
                        f'Add the text "{text}" to the image.')

    if operation == "change_style":
        if tree is None:
            raise PlanningError("make_plan: change_style needs the tree")
        k = int(rng.integers(1, record.n + 1))
        entries = _pick_targets(rng, record, k)
        targets, deltas = [], {}
        for entry in entries:
            parent = tree.parent_of(entry["node_id"])
            if parent is None or parent.node_id in deltas:
                continue
            current = parent.style.get("color", "")
            choices = [c for c in STYLE_COLOR_CHOICES if c != current]
            color = choices[int(rng.integers(0, len(choices)))]
            targets.append(parent.node_id)
            deltas[parent.node_id] = {"color": color}
        if not targets:
            raise PlanningError("make_plan: change_style found no styleable targets")
        return EditPlan("change_style", targets, {"deltas": deltas},
                        "Change the color of the highlighted text.")

    # combined: 2-3 atomic plans with disjoint targets
    if record.n < 2:
        raise PlanningError("make_plan: combined needs at least 2 text entries")
    n_parts = int(rng.integers(2, 4))
    available = list(range(record.n))
    subplans = []
    ops_cycle = ["replace", "delete", "change_style"]
    for part in range(n_parts):
        if not available:
            break
        op = ops_cycle[part % len(ops_cycle)]
        slot = available.pop(int(rng.integers(0, len(available))))
        entry = record.texts[slot]
        sub_record = ContentRecord(texts=[entry], images=[])
        sub = make_plan(sub_record, op, seed, text_client, translator,
                        language, tree, _rng=rng)
        subplans.append(sub)
    if len(subplans) < 2:
        raise PlanningError("make_plan: combined could not build 2 disjoint subplans")
    all_targets = [t for sp in subplans for t in sp.targets]
    if len(set(all_targets)) != len(all_targets):
        raise PlanningError("make_plan: combined subplan targets overlap")
    instruction = " Then ".join(sp.instruction for sp in subplans)
    return EditPlan("combined", all_targets, {}, instruction, subplans=subplans)


# ---------------------------------------------------------------------------
# backfill


def _add_box(tree: DocNode):
    """Placement for an added node: 0.8 page width, stacked under the last
    frozen body child (or the page top when the body is empty)."""
    w, h = page_size(tree)
    body = tree.children[0]
    bottom = max((c.box[3] for c in body.children if c.box), default=0)
    bw = int(0.8 * w)
    x0 = (w - bw) // 2
    return (x0, bottom + 4, x0 + bw, bottom + 4 + 2 * BASE_CELL)


def backfill(tree: DocNode, plan: EditPlan) -> DocNode:
    """Apply the plan on a deep copy; untouched nodes (and their frozen
    boxes) are preserved byte-identically."""
    new_tree = tree.deep_copy()
    _apply(new_tree, plan)
    return new_tree


def _apply(tree: DocNode, plan: EditPlan) -> None:
    if plan.operation == "combined":
        for sub in plan.subplans:
            _apply(tree, sub)
        return
    for target in plan.targets:
        if tree.find(target) is None:
            raise ConsistencyError(f"backfill: target node {target} vanished")
    if plan.operation in ("replace", "translate"):
        for node_id, text in plan.payload["texts"].items():
            tree.find(node_id).text = text
    elif plan.operation == "delete":
        for node_id in plan.targets:
            parent = tree.parent_of(node_id)
            parent.children = [c for c in parent.children if c.node_id != node_id]
    elif plan.operation == "rearrange":
        nodes = [tree.find(t) for t in plan.targets]
        texts = [n.text for n in nodes]
        for slot, src in enumerate(plan.payload["permutation"]):
            nodes[slot].text = texts[src]
    elif plan.operation == "add":
        body = tree.children[0]
        node = DocNode("p")
        leaf = DocNode(TEXT_TAG, text=plan.payload["text"])
        node.children = [leaf]
        node.node_id = max(n.node_id for n in tree.walk()) + 1
        leaf.node_id = node.node_id + 1
        node.box = _add_box(tree)
        leaf.box = node.box
        body.children.append(node)
        plan.payload["node_id"] = node.node_id
    elif plan.operation == "change_style":
        for node_id, delta in plan.payload["deltas"].items():
            node = tree.find(node_id)
            for key, val in delta.items():
                if key not in STYLE_WHITELIST:
                    raise ConsistencyError(f"backfill: style key {key} not whitelisted")
                node.style[key] = val
    else:
        raise ConsistencyError(f"backfill: unknown operation {plan.operation}")


# ---------------------------------------------------------------------------
# pair assembly


def _edited_boxes(tree: DocNode, plan: EditPlan, geometry: dict) -> list:
    if plan.operation == "combined":
        boxes = []
        for sub in plan.subplans:
            boxes.extend(_edited_boxes(tree, sub, geometry))
        return boxes
    if plan.operation == "add":
        return [tuple(plan.payload["box"])] if "box" in plan.payload else []
    boxes = []
    for target in plan.targets:
        if not geometry.get(target):
            continue
        box = geometry[target]
        node = tree.find(target)
        if node is not None:
            # descendant text leaves may overflow a fixed-height element, and
            # a style change repaints them too: widen to the enclosing box
            for sub in node.walk():
                sb = geometry.get(sub.node_id)
                if sb:
                    box = (min(box[0], sb[0]), min(box[1], sb[1]),
                           max(box[2], sb[2]), max(box[3], sb[3]))
        boxes.append(tuple(box))
    return boxes


def _diff_confined(src: np.ndarray, tgt: np.ndarray, boxes: list):
    diff = np.any(src != tgt, axis=2)
    allowed = np.zeros_like(diff)
    for x0, y0, x1, y1 in boxes:
        allowed[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True
    leaks = np.argwhere(diff & ~allowed)
    return leaks


def make_pair(html_text, operation: str, seed: int, text_client,
              translator=None, language: str = "en",
              plan_language: str = "de") -> EditPair:
    """Run the full structured route on one document and verify the
    pixel-confinement guarantee before returning the pair."""
    tree = parse(html_text)
    src_raster, geometry = render(tree)
    record = extract(tree, geometry)
    plan = make_plan(record, operation, seed, text_client, translator,
                     language=plan_language, tree=tree)
    target_tree = backfill(tree, plan)
    tgt_raster, tgt_geometry = render(target_tree)
    if plan.operation == "add" or plan.subplans:
        _collect_add_boxes(plan, tgt_geometry)
    boxes = _edited_boxes(tree, plan, {**geometry, **tgt_geometry})
    leaks = _diff_confined(src_raster, tgt_raster, boxes)
    if len(leaks):
        y, x = leaks[0]
        raise ConsistencyError(
            f"make_pair: {len(leaks)} differing pixel(s) outside edited boxes, "
            f"first at (x={x}, y={y}) for operation {operation}")
    clipped = any(
        n.is_text and _text_overflows(n) for n in target_tree.walk())
    return EditPair(source_tree=tree, target_tree=target_tree,
                    source_raster=src_raster, target_raster=tgt_raster,
                    edited_boxes=boxes, plan=plan, language=language,
                    clipped=clipped)


def _collect_add_boxes(plan: EditPlan, geometry: dict) -> None:
    if plan.operation == "add" and "node_id" in plan.payload:
        plan.payload["box"] = list(geometry[plan.payload["node_id"]])
    for sub in plan.subplans:
        _collect_add_boxes(sub, geometry)


def _text_overflows(node: DocNode) -> bool:
    if node.box is None:
        return False
    from ..glyph_layout import GlyphFont, fit_text

    x0, y0, x1, y1 = node.box
    if x1 - x0 < 1 or y1 - y0 < 1:
        return True
    return fit_text(node.text, x1 - x0, y1 - y0, _shared_font()).clipped


_FONT = None


def _shared_font():
    global _FONT
    if _FONT is None:
        from ..glyph_layout import GlyphFont

        _FONT = GlyphFont.bundled()
    return _FONT


def translate_then_edit(html_text, pivot_language: str, operation: str,
                        seed: int, text_client, translator,
                        plan_language: str = "de") -> EditPair:
    """Translate every text entry into the pivot language first (a translate
    backfill), then run the normal pair construction on the pivot tree."""
    if pivot_language not in LANGUAGES:
        raise PlanningError(f"translate_then_edit: unknown language {pivot_language}")
    tree = parse(html_text)
    src_raster, geometry = render(tree)
    record = extract(tree, geometry)
    if record.n and pivot_language != "en":
        pivot_plan = make_plan(record, "translate", seed, text_client,
                               translator, language=pivot_language, tree=tree)
        tree = backfill(tree, pivot_plan)
    pair = make_pair(serialize(tree), operation, seed, text_client, translator,
                     language=pivot_language, plan_language=plan_language)
    return pair


# ---------------------------------------------------------------------------
# pair bundles


def write_pair_bundle(out_dir, pair: EditPair, seed: int) -> None:
    """Directory layout: src.html, tgt.html, src.png, tgt.png, plan.json,
    boxes.json, meta.json."""
    from ..imaging import write_png

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "src.html"), "w") as f:
        f.write(serialize(pair.source_tree))
    with open(os.path.join(out_dir, "tgt.html"), "w") as f:
        f.write(serialize(pair.target_tree))
    write_png(os.path.join(out_dir, "src.png"), pair.source_raster)
    write_png(os.path.join(out_dir, "tgt.png"), pair.target_raster)
    with open(os.path.join(out_dir, "plan.json"), "w") as f:
        json.dump(_plan_to_json(pair.plan), f, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "boxes.json"), "w") as f:
        json.dump([list(b) for b in pair.edited_boxes], f)
    meta = {"operation": pair.plan.operation, "language": pair.language,
            "seed": seed, "clipped": pair.clipped}
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def _plan_to_json(plan: EditPlan) -> dict:
    payload = {str(k): v for k, v in plan.payload.items()}
    if "texts" in plan.payload:
        payload["texts"] = {str(k): v for k, v in plan.payload["texts"].items()}
    if "deltas" in plan.payload:
        payload["deltas"] = {str(k): v for k, v in plan.payload["deltas"].items()}
    return {
        "operation": plan.operation,
        "targets": plan.targets,
        "payload": payload,
        "instruction": plan.instruction,
        "subplans": [_plan_to_json(sp) for sp in plan.subplans],
    }
