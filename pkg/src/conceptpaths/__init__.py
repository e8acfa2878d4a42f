"""conceptpaths: concept knowledge-graph mining for scholarly corpora.

Ingests works and concept taxonomies, cleans raw associations into a strict
hierarchy, enumerates complete root-to-leaf concept paths per work, quantifies
concept/path prevalence and its relation to annotated innovation, and runs a
knowledge-graph-constrained agent pipeline with human expert review.
"""

from .kgstore import (
    Concept,
    ConceptEdge,
    ConceptPathRecord,
    InnovationAnnotation,
    RejectionReport,
    ReviewItem,
    ReviewJournalEntry,
    Store,
    SubgraphView,
    Work,
    clean_hierarchy,
    load_workspace,
    normalize_name,
    save_workspace,
)
from .paths import (
    ConceptPath,
    edge_level_gap_stats,
    enumerate_paths,
    extract_all,
    level_span_matrix,
    path_length_distribution,
    validate_path,
)
from .analytics import (
    PowerLawFit,
    PrevalenceRecord,
    RankTestResult,
    fit_power_law,
    innovation_rate,
    kde_series,
    mann_whitney,
    median_split,
    prevalence,
    prevalence_table,
    rank_frequency,
    region_share,
)
from .ingest import (
    IngestQuery,
    RawWork,
    fetch_works,
    filter_complete,
    invert_abstract,
    load_dump,
    reconstruct_abstract,
)
from .evalharness import EvalReport, GoldData, load_gold, run_ablation, score

__version__ = "0.1.0"

__all__ = [
    "Concept",
    "ConceptEdge",
    "ConceptPathRecord",
    "InnovationAnnotation",
    "RejectionReport",
    "ReviewItem",
    "ReviewJournalEntry",
    "Store",
    "SubgraphView",
    "Work",
    "clean_hierarchy",
    "load_workspace",
    "normalize_name",
    "save_workspace",
    "ConceptPath",
    "edge_level_gap_stats",
    "enumerate_paths",
    "extract_all",
    "level_span_matrix",
    "path_length_distribution",
    "validate_path",
    "PowerLawFit",
    "PrevalenceRecord",
    "RankTestResult",
    "fit_power_law",
    "innovation_rate",
    "kde_series",
    "mann_whitney",
    "median_split",
    "prevalence",
    "prevalence_table",
    "rank_frequency",
    "region_share",
    "IngestQuery",
    "RawWork",
    "fetch_works",
    "filter_complete",
    "invert_abstract",
    "load_dump",
    "reconstruct_abstract",
    "EvalReport",
    "GoldData",
    "load_gold",
    "run_ablation",
    "score",
    "__version__",
]
