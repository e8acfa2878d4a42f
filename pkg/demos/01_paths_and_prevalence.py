"""Walkthrough: from raw concept associations to prevalence regions.

Builds a toy corpus in memory, cleans the raw associations into a strict
hierarchy, enumerates each work's complete root-to-leaf concept paths, and
shows how path prevalence splits into low/high regions around the corpus
median. Run with: python3 demos/01_paths_and_prevalence.py
"""

from conceptpaths import (
    Concept,
    ConceptEdge,
    InnovationAnnotation,
    Store,
    Work,
    clean_hierarchy,
    enumerate_paths,
    innovation_rate,
    path_length_distribution,
    prevalence_table,
)

store = Store()
for cid, name, level in [
    ("phys", "Physics", 0),
    ("cs", "Computer science", 0),
    ("pp", "Particle physics", 1),
    ("ml", "Machine learning", 1),
    ("neu", "Neutrino oscillation", 2),
    ("dl", "Deep learning", 2),
]:
    store.add_concept(Concept.make(cid, name, level))

# Raw associations as they might arrive: one self-loop, one intra-level link,
# one edge pointing the "wrong way". Cleaning fixes orientation and drops junk.
raw = [
    ConceptEdge("phys", "pp"),
    ConceptEdge("pp", "neu"),
    ConceptEdge("neu", "phys"),  # wrong direction: will be re-oriented
    ConceptEdge("cs", "ml"),
    ConceptEdge("ml", "dl"),
    ConceptEdge("ml", "pp"),     # intra-level: dropped
    ConceptEdge("dl", "dl"),     # self-loop: dropped
]
cleaned, report = clean_hierarchy(raw, store.concepts)
store.replace_edges(cleaned)
print(f"cleaning kept {len(cleaned)} edges, rejected {report.as_dict()}")

works = [
    Work("w1", "Neutrino survey", "…", "2020-01-01", ("A",), frozenset({"phys", "pp", "neu"})),
    Work("w2", "Deep nets", "…", "2021-01-01", ("B",), frozenset({"cs", "ml", "dl"})),
    Work("w3", "Neutrinos again", "…", "2022-01-01", ("C",), frozenset({"phys", "pp", "neu"})),
    Work("w4", "Cross-field", "…", "2022-06-01", ("D",), frozenset({"phys", "neu", "ml"})),
]
for work in works:
    store.add_work(work)

all_paths = []
for work in works:
    paths = enumerate_paths(work, store)
    all_paths.extend(paths)
    print(f"{work.id}: " + ", ".join(" -> ".join(p.nodes) for p in paths))

dist = path_length_distribution(all_paths)
print(f"\nlength histogram {dist.histogram}, share of 2-3 node paths = {float(dist.share_len_2_3):.2%}")

freq: dict[str, int] = {}
for p in all_paths:
    freq[p.key] = freq.get(p.key, 0) + 1
records = prevalence_table(freq, "path")
print("\npath prevalence (ln(1+f)), region by corpus median:")
for r in records:
    print(f"  {r.item_key:22s} f={r.frequency} d={r.prevalence:.4f} region={r.region}")

# Tag one concept of w4 as the annotated novelty and see where the innovative
# paths live.
store.add_annotation(InnovationAnnotation("w4", "ml", "demo"))
rates = innovation_rate(all_paths, store.annotations, records)
print(f"\ninnovation rate low region: {rates.rate_low}, high region: {rates.rate_high}")
