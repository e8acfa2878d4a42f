"""Walkthrough: the four-stage agent pipeline on a scripted backend.

Drives one work through segmentation, pair extraction + validation,
constrained triplet generation, and refinement, with a deterministic scripted
mock standing in for the language model. The script deliberately hallucinates
one out-of-vocabulary concept at stage 3 to show the knowledge-graph
constraint discarding it. Run with: python3 demos/02_scripted_pipeline.py
"""

from conceptpaths import Concept, ConceptEdge, Store, Work
from conceptpaths.pipeline import PipelineConfig, PipelineRunner, ScriptedMockBackend

store = Store()
for cid, name, level in [
    ("phys", "Physics", 0),
    ("pp", "Particle physics", 1),
    ("neu", "Neutrino oscillation", 2),
]:
    store.add_concept(Concept.make(cid, name, level))
store.add_edge(ConceptEdge("phys", "pp"))
store.add_edge(ConceptEdge("pp", "neu"))

work = Work(
    id="demo-work",
    title="Neutrino oscillation measurements",
    abstract_text=(
        "Prior work studied particle physics at colliders. "
        "We apply oscillation analysis to solar data. "
        "We conclude neutrino mixing is confirmed."
    ),
    publication_date="2023-03-01",
    authors=("Demo Author",),
    concept_ids=frozenset({"phys", "pp", "neu"}),
)
store.add_work(work)

script = [
    {
        "stage": "stage1_segment",
        "response": (
            "<related_research>Prior work studied particle physics at colliders.</related_research>"
            "<research_methods>We apply oscillation analysis to solar data.</research_methods>"
            "<conclusions>We conclude neutrino mixing is confirmed.</conclusions>"
        ),
    },
    {
        "stage": "stage2_pairs",
        "response": '<concept_pairs>[["Physics", "Particle physics"], ["Particle physics", "Neutrino oscillation"]]</concept_pairs>',
    },
    {"stage": "stage2_pairs", "response": "<concept_pairs>[]</concept_pairs>"},
    {"stage": "stage2_pairs", "response": "<concept_pairs>[]</concept_pairs>"},
    {
        "stage": "stage3_relations",
        # The third triplet names a concept never validated in stage 2: the
        # vocabulary constraint must discard it and count a hallucination.
        "response": (
            '<concept_relations>[["Physics", "is-a", "Particle physics"], '
            '["Particle physics", "is-a", "Neutrino oscillation"], '
            '["Imaginary field theory", "is-a", "Physics"]]</concept_relations>'
        ),
    },
    {"stage": "stage4_refine", "response": '["", "keep"]'},
    {"stage": "stage4_refine", "response": '["", "keep"]'},
]

runner = PipelineRunner(store, ScriptedMockBackend(script), PipelineConfig())
result = runner.run_work(work)

print(f"status: {result.status}")
print(f"validated pairs: {[(p.domain, p.specific_concept) for p in runner.validated_pairs(result.pairs)]}")
print(f"hallucinations discarded: {result.report.hallucinations}")
print(f"refinement iterations: {result.report.refinement_iterations}")
print(f"final hierarchy edges: {result.g_edges}")
print("reconstructed paths:")
for p in result.paths:
    print("  " + " -> ".join(p.nodes))
print(f"journal entries written: {len(store.review_journal)} (every stage-4 action, exactly once)")
