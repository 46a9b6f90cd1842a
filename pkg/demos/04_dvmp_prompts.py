"""
Generating modifier-heavy prompts
=================================

Prompts coordinate one or two "a/an {modifiers} {noun}" phrases. Modifiers
come from a shared color list plus the noun category's own list, so nothing
like "a sliced bowl" is produced. Each record keeps its gold bindings.
"""
import os

from syngen.binding import extract_all, parse_conllu
from syngen.dvmp import CoherenceError, generate_dataset, record_to_conllu, swap_counterpart, write_dataset

records = generate_dataset(rng_seed=1, count=600)
for r in records[:6]:
    print(r.text, "|", r.gold_sets)

# the gold bindings survive a trip through a parse and the extractor
r = records[0]
g = parse_conllu(record_to_conllu(r))[0]
print([(g.token(b.root_noun).surface, sorted(g.token(m).surface for m in b.modifiers)) for b, _, _ in extract_all(g)])

# swapped counterparts exchange one modifier between the two entities;
# applying the same swap again restores the original
two = [x for x in records if x.n_entities == 2]
for r in two[:5]:
    try:
        s = swap_counterpart(r, r.seed)
    except CoherenceError as err:
        print("skip:", err)
        continue
    print(f"{r.text!r:50} <-> {s.text!r}")
    assert swap_counterpart(s, r.seed) == r

out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
os.makedirs(out, exist_ok=True)
write_dataset(records, os.path.join(out, "dvmp.txt"), os.path.join(out, "dvmp.jsonl"))
print("wrote", len(records), "prompts to", out)
