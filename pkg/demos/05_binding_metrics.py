"""
Scoring annotated generations
=============================

Each annotation record counts, for one image, how many prompt attributes
landed on the right object, how many leaked onto a wrong one, and how many
of the prompt's entities appear at all.
"""
from syngen.metrics import AnnotationRecord, entity_neglect, improper_binding, proper_binding, summarize

records = [
    AnnotationRecord("p1", total_attributes=2, correctly_mapped=2, incorrectly_mapped_attributes=1,
                     entities_in_prompt=2, entities_depicted=1),
    AnnotationRecord("p2", 3, 1, 1, 2, 2),
    AnnotationRecord("p3", 1, 0, 1, 4, 3),
]

# corpus-wide ratios of summed counts
print("proper binding  ", proper_binding(records))    # 3 / 6
print("improper binding", improper_binding(records))  # 3 / 6
print("entity neglect  ", entity_neglect(records))    # 1 - 6 / 8

# p1 has an attribute both on its object and leaked elsewhere, so proper and
# improper binding are not complements
print(summarize(records))
print(summarize(records, average="macro"))
