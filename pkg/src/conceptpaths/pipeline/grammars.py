"""Stage output grammars and strict parsers.

Each pipeline stage constrains the backend to a tagged wire format; anything
that violates the grammar raises :class:`StageParseError` carrying the raw
text, and never reaches the store. Stage 1 answers with three tagged
segments, stage 2 with a JSON pair list inside ``<concept_pairs>``, stage 3
with is-a triplets inside ``<concept_relations>``, stage 4 with a bare JSON
decision ``[Concept, "add"|"delete"|"keep"]``.
"""

from __future__ import annotations

import json
import re

STAGE_SEGMENT = "stage1_segment"
STAGE_PAIRS = "stage2_pairs"
STAGE_RELATIONS = "stage3_relations"
STAGE_REFINE = "stage4_refine"
STAGE_DIRECT = "direct_generate"

ALL_STAGES = (STAGE_SEGMENT, STAGE_PAIRS, STAGE_RELATIONS, STAGE_REFINE, STAGE_DIRECT)

SEGMENT_TAGS = ("related_research", "research_methods", "conclusions")
REFINE_ACTIONS = ("add", "delete", "keep")


class StageParseError(Exception):
    """Backend output violated a stage grammar."""

    def __init__(self, stage: str, message: str, raw_text: str):
        self.stage = stage
        self.raw_text = raw_text
        super().__init__(f"[{stage}] {message}")


def _extract_tag(text: str, tag: str, stage: str) -> tuple[str, int, int]:
    """Body of a tag that must occur exactly once and be properly closed."""
    opens = [m.start() for m in re.finditer(re.escape(f"<{tag}>"), text)]
    closes = [m.start() for m in re.finditer(re.escape(f"</{tag}>"), text)]
    if not opens and not closes:
        raise StageParseError(stage, f"<{tag}> missing", text)
    if len(opens) != 1 or len(closes) != 1:
        raise StageParseError(stage, f"<{tag}> duplicated", text)
    if closes[0] < opens[0]:
        raise StageParseError(stage, f"<{tag}> misnested (close before open)", text)
    body = text[opens[0] + len(tag) + 2 : closes[0]]
    return body, opens[0], closes[0] + len(tag) + 3


def parse_segments(text: str) -> dict[str, str]:
    """Stage 1: three tagged segments, in order, each non-empty."""
    spans = []
    out: dict[str, str] = {}
    for tag in SEGMENT_TAGS:
        body, start, end = _extract_tag(text, tag, STAGE_SEGMENT)
        if not body.strip():
            raise StageParseError(STAGE_SEGMENT, f"<{tag}> empty", text)
        spans.append((start, end, tag))
        out[tag] = body.strip()
    ordered = sorted(spans)
    if [t for _, _, t in ordered] != list(SEGMENT_TAGS):
        raise StageParseError(STAGE_SEGMENT, "segments out of order", text)
    for (_, end_a, tag_a), (start_b, _, tag_b) in zip(ordered, ordered[1:]):
        if start_b < end_a:
            raise StageParseError(STAGE_SEGMENT, f"<{tag_a}> and <{tag_b}> misnested", text)
    return out


def _json_body(text: str, tag: str, stage: str):
    body, _, _ = _extract_tag(text, tag, stage)
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise StageParseError(stage, f"<{tag}> body is not valid JSON: {exc}", text) from exc


def parse_concept_pairs(text: str) -> list[tuple[str, str]]:
    """Stage 2: ``<concept_pairs>`` wrapping a JSON array of [domain, concept] 2-arrays."""
    data = _json_body(text, "concept_pairs", STAGE_PAIRS)
    if not isinstance(data, list):
        raise StageParseError(STAGE_PAIRS, "pair list must be a JSON array", text)
    pairs: list[tuple[str, str]] = []
    for i, entry in enumerate(data):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(s, str) for s in entry)):
            raise StageParseError(STAGE_PAIRS, f"pair {i} is not a 2-array of strings", text)
        pairs.append((entry[0], entry[1]))
    return pairs


def parse_concept_relations(text: str) -> list[tuple[str, str]]:
    """Stage 3: ``<concept_relations>`` wrapping [parent, "is-a", child] triplets.

    Returns (parent_name, child_name) tuples; the relation slot must be the
    literal ``is-a``.
    """
    data = _json_body(text, "concept_relations", STAGE_RELATIONS)
    if not isinstance(data, list):
        raise StageParseError(STAGE_RELATIONS, "relation list must be a JSON array", text)
    triplets: list[tuple[str, str]] = []
    for i, entry in enumerate(data):
        if not (isinstance(entry, list) and len(entry) == 3 and all(isinstance(s, str) for s in entry)):
            raise StageParseError(STAGE_RELATIONS, f"relation {i} is not a 3-array of strings", text)
        if entry[1] != "is-a":
            raise StageParseError(STAGE_RELATIONS, f"relation {i} slot must be 'is-a', got {entry[1]!r}", text)
        triplets.append((entry[0], entry[2]))
    return triplets


def parse_refinement(text: str) -> tuple[str, str]:
    """Stage 4: a bare JSON decision ``[Concept, "add"|"delete"|"keep"]``."""
    try:
        data = json.loads(text.strip())
    except json.JSONDecodeError as exc:
        raise StageParseError(STAGE_REFINE, f"decision is not valid JSON: {exc}", text) from exc
    if not (isinstance(data, list) and len(data) == 2 and all(isinstance(s, str) for s in data)):
        raise StageParseError(STAGE_REFINE, "decision must be a 2-array of strings", text)
    concept, action = data
    if action not in REFINE_ACTIONS:
        raise StageParseError(STAGE_REFINE, f"action {action!r} outside {REFINE_ACTIONS}", text)
    return concept, action


def parse_concept_list(text: str) -> list[str]:
    """Direct-generation baseline: ``<concept_list>`` wrapping a JSON string array."""
    data = _json_body(text, "concept_list", STAGE_DIRECT)
    if not isinstance(data, list) or not all(isinstance(s, str) for s in data):
        raise StageParseError(STAGE_DIRECT, "concept list must be a JSON array of strings", text)
    return data


def render_segments(segments: dict[str, str]) -> str:
    """Inverse of :func:`parse_segments`; used by fixtures and golden scripts."""
    return "".join(f"<{tag}>{segments[tag]}</{tag}>" for tag in SEGMENT_TAGS)
