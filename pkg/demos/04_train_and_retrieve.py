"""Train on the seeded synthetic corpus, then retrieve in both directions
and inspect predicted concepts.

    python3 demos/04_train_and_retrieve.py [epochs]

The default 60 epochs take about 15 s on one core; 200 matches the
acceptance run.
"""

import sys

import numpy as np

from cvse.corpus import WordVectorTable
from cvse.evaluation import build_gallery, mean_recall, predict_concepts, retrieve
from cvse.synthetic import generate, toy_config
from cvse.train import make_pairs, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
data = generate(seed=7)
print(f"{len(data.records)} pairs, e.g. {data.records[0].captions[0]!r}")
print("planted concepts:", data.concept_sets[0])

cfg = toy_config(epochs=epochs, lr_decay_epoch=epochs // 2)
index = {r.image_id: i for i, r in enumerate(data.records)}
result = train(cfg, data.records, data.features, index, WordVectorTable(data.word_vectors, 300),
               data.lexicon)
for e in result.epochs[:: max(1, epochs // 6)] + result.epochs[-1:]:
    print(f"epoch {e['epoch']:3d}  lr {e['lr']:.0e}  loss {e['loss']:.2f}")

model = result.model
pairs = make_pairs(data.records, data.features, result.vocab)
gallery = build_gallery(model, pairs.features, pairs.tokens, pairs.labels)
res = retrieve(model, pairs.features, pairs.tokens, gallery, k=3)

recalls = []
for direction, ranking in (("image->text", res.text_ranking), ("text->image", res.image_ranking)):
    for k in (1, 5, 10):
        r = float(np.mean([i in row[:k] for i, row in enumerate(ranking)]))
        recalls.append(r)
        print(f"{direction} R@{k}: {r:.3f}")
print(f"mR: {mean_recall(recalls):.3f}")

# Predicted labels for a caption written from scratch.
query = [["a", "dog", "running", "with", "a", "frisbee"]]
pred = predict_concepts(model, query, gallery, k=3)[0]
print("\nquery:", " ".join(query[0]))
print("predicted concepts:", [result.vocab.tokens[j] for j in np.flatnonzero(pred)])
