"""From captions to the concept correlation graph and its GCN encoding.

Uses the 20-image corpus shipped with the tests.

    python3 demos/02_concept_graph.py
"""

from pathlib import Path

import numpy as np

from cvse.corpus import build_vocabulary, corpus_labels, read_corpus, read_lexicon
from cvse.graph import build_graph, gcn_forward, init_gcn_params

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

records = read_corpus(DATA / "toy_corpus.jsonl")
lexicon = read_lexicon(DATA / "toy_lexicon.tsv")
print(f"{len(records)} images, first caption: {records[0].captions[0]!r}")
print("tokens:", records[0].token_lists()[0])

# q=20 splits 14 Object / 4 Motion / 2 Property, most frequent first.
vocab = build_vocabulary(records, lexicon, 20)
print("type counts:", vocab.type_counts())
for c in vocab.entries:
    print(f"  {c.token:10s} {c.type:9s} {c.frequency}")

# One binary label per image (union over its captions), then the graph stages.
labels = corpus_labels(records, vocab)
g = build_graph(labels, s=5, u=0.02, epsilon=0.3)
i, j = vocab.index("surfboard"), vocab.index("ocean")
print(f"\nsurfboard appears in {g.N[i]} images, with ocean in {g.E[i, j]}")
print(f"P(row surfboard, col ocean) = {g.P[i, j]:.3f}, scaled B = {g.B[i, j]:.3f}, edge = {int(g.G[i, j])}")
print(f"P(row ocean, col surfboard) = {g.P[j, i]:.3f}  (rows use their own count)")
print(f"{int(g.G.sum())} directed edges survive the 0.3 threshold")

print("\nneighbours in the normalised adjacency:")
for k, tok in enumerate(vocab.tokens):
    nbrs = [vocab.tokens[m] for m in np.flatnonzero(g.A_norm[k]) if m != k]
    if nbrs:
        print(f"  {tok:10s} -> {', '.join(nbrs)}")

# Two propagation layers turn word vectors into concept embeddings Z.
rng = np.random.default_rng(0)
Y = rng.normal(0.0, 0.1, (len(vocab), 50))     # stand-ins for pretrained word vectors
weights = list(init_gcn_params([50, 32, 16], rng).values())
Z = gcn_forward(Y, g.A_norm, weights)
print("\nZ shape:", Z.shape, " non-negative:", bool((Z >= 0).all()))
