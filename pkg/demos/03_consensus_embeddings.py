"""Instance-level encoders, concept scores and the fused embedding for one
image and one caption, using a small randomly initialised model.

    python3 demos/03_consensus_embeddings.py
"""

import numpy as np

from cvse.consensus import label_distribution
from cvse.encoders import WordIndex, attention_pool
from cvse.graph import normalize_adjacency
from cvse.model import CVSEModel, ModelConfig

concepts = ["dog", "frisbee", "grass", "cat", "sofa", "running", "sitting", "red"]
words = WordIndex(["<unk>", "a", "dog", "frisbee", "grass", "cat", "sofa", "running",
                   "sitting", "red", "on", "the"])
rng = np.random.default_rng(1)
G = np.zeros((8, 8))
for a, b in [(0, 1), (0, 2), (1, 2), (0, 5), (3, 4), (3, 6)]:
    G[a, b] = G[b, a] = 1

model = CVSEModel.initialize(ModelConfig(d=16, gcn_hidden=12), concepts, rng.normal(size=(8, 10)),
                             normalize_adjacency(G), words, rng.normal(size=(len(words), 10)),
                             feature_dim=6, rng=rng)

images = rng.normal(size=(1, 4, 6))                 # 4 region features of width 6
caption = [["a", "red", "dog", "running", "on", "the", "grass"]]
ids, mask = words.encode_batch(caption)
label = np.zeros((1, 8))
label[0, [0, 2, 5, 7]] = 1                            # dog, grass, running, red

out = model.forward(images, ids, mask, label)
print("norms  v_inst %.3f  v_cons %.3f  v_fused %.3f" % tuple(
    np.linalg.norm(x) for x in (out.v_inst, out.v_cons, out.v_fused)))

# With lambda = 10 the label prior puts e^10 times more mass on present concepts.
prior = label_distribution(label, 10.0)[0]
print("\nconcept     visual   textual  label prior")
for k, c in enumerate(concepts):
    print(f"  {c:9s} {out.a_v[0, k]:.4f}   {out.a_t[0, k]:.4f}   {prior[k]:.4f}")

# The fused vector is the unit-norm blend beta * instance + (1 - beta) * consensus.
beta = model.config.beta
blend = beta * out.t_inst + (1 - beta) * out.t_cons
print("\nfused text matches manual blend:", np.allclose(out.t_fused, blend / np.linalg.norm(blend)))
print("cross-modal cosine (fused):", float(out.v_fused @ out.t_fused[0]))

# Attention weights over the four regions.
regions = images @ model.params["img.fc.W"] + model.params["img.fc.b"]
_, w = attention_pool(regions, model.params["img.attn.Wq"], model.params["img.attn.Wk"],
                      model.params["img.attn.Wv"], return_weights=True)
print("region attention:", np.round(w[0], 3))
