from .backends import (
    Backend,
    BackendError,
    BackendRequest,
    BackendResponse,
    CallbackBackend,
    HttpChatBackend,
    ScriptedMockBackend,
    DECODING_PARAMS,
)
from .engine import (
    ConceptPair,
    PipelineConfig,
    PipelineError,
    PipelineRunner,
    SegmentedAbstract,
    Triplet,
    WorkReport,
    WorkResult,
    assert_vocabulary_closure,
    raw_concept_id,
    STATUS_AWAITING_REVIEW,
    STATUS_COMPLETED,
    STATUS_FAILED,
)
from .grammars import (
    REFINE_ACTIONS,
    SEGMENT_TAGS,
    STAGE_DIRECT,
    STAGE_PAIRS,
    STAGE_REFINE,
    STAGE_RELATIONS,
    STAGE_SEGMENT,
    StageParseError,
    parse_concept_list,
    parse_concept_pairs,
    parse_concept_relations,
    parse_refinement,
    parse_segments,
    render_segments,
)
from .matching import ConceptMatcher, KBClient, KBEntry, StaticKBClient, levenshtein, similarity

__all__ = [
    "Backend",
    "BackendError",
    "BackendRequest",
    "BackendResponse",
    "CallbackBackend",
    "HttpChatBackend",
    "ScriptedMockBackend",
    "DECODING_PARAMS",
    "ConceptPair",
    "PipelineConfig",
    "PipelineError",
    "PipelineRunner",
    "SegmentedAbstract",
    "Triplet",
    "WorkReport",
    "WorkResult",
    "assert_vocabulary_closure",
    "raw_concept_id",
    "STATUS_AWAITING_REVIEW",
    "STATUS_COMPLETED",
    "STATUS_FAILED",
    "REFINE_ACTIONS",
    "SEGMENT_TAGS",
    "STAGE_DIRECT",
    "STAGE_PAIRS",
    "STAGE_REFINE",
    "STAGE_RELATIONS",
    "STAGE_SEGMENT",
    "StageParseError",
    "parse_concept_list",
    "parse_concept_pairs",
    "parse_concept_relations",
    "parse_refinement",
    "parse_segments",
    "render_segments",
    "ConceptMatcher",
    "KBClient",
    "KBEntry",
    "StaticKBClient",
    "levenshtein",
    "similarity",
]
