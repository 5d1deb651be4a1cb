"""Train the three contrastive variants and compare their latent spaces.

The label-free variant trains on the supervised plus unsupervised roles,
the label-aware one on the supervised role only, and the combination
fine-tunes the first with the second. Class separation of each latent
space is measured by 10-NN label consistency against the ground truth.
"""

import numpy as np

from epl import (TrainConfig, extract_features, finetune_supcon,
                 generate_blobs, knn_consistency, stratified_split, train)

data = generate_blobs(k=4, per_class=120, d=8, spread=6.0, center_dist=10.0, seed=5)
split = stratified_split(data, s_frac=0.05, u_frac=0.65, t_frac=0.30, seed=11)
idx = np.sort(np.concatenate([split.supervised, split.unsupervised]))
print(f"training on {idx.size} samples ({split.supervised.size} labeled)")

config = TrainConfig(epochs=30, batch_size=64, seed=11)
plain = train("simclr", data, split, config)
labeled = train("supcon", data, split, TrainConfig(epochs=30, batch_size=64, seed=11))
combined = finetune_supcon(plain, data, split,
                           TrainConfig(epochs=30, batch_size=64, seed=11))

baseline = knn_consistency(data.features[idx], data.labels[idx], k=10)
print(f"\n10-NN consistency, raw input space: {baseline:.4f}")
for name, params in (("label-free", plain), ("label-aware", labeled),
                     ("combined", combined)):
    latent = extract_features(params, data, idx)
    score = knn_consistency(latent, data.labels[idx], k=10)
    print(f"10-NN consistency, {name:>11} latent: {score:.4f}")
