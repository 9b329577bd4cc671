from .parser import DocNode, parse, serialize
from .render import render, resolve_color
from .pipeline import (
    ContentRecord,
    EditPair,
    EditPlan,
    LANGUAGES,
    OPERATIONS,
    backfill,
    extract,
    make_pair,
    make_plan,
    translate_then_edit,
    write_pair_bundle,
)

__all__ = [
    "DocNode", "parse", "serialize", "render", "resolve_color",
    "ContentRecord", "EditPair", "EditPlan", "LANGUAGES", "OPERATIONS",
    "backfill", "extract", "make_pair", "make_plan",
    "translate_then_edit", "write_pair_bundle",
]
