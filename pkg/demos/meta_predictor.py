#!/usr/bin/env python3
"""Train the bag-of-words Naive Bayes predictor online and watch it learn.

A fresh predictor fails open (it never discards data before seeing both
classes). As labelled batches stream in, its loss measured on each batch
BEFORE updating on it drops; once the windowed mean is low, it is
trustworthy enough to veto forward passes on its own.
"""

import numpy as np

from lossgate import MiniBatch, NaiveBayesModel, PredictorLossWindow, generate_toy_corpus

corpus = generate_toy_corpus(3000, duplication=5, noise_rate=0.0, seed=1)

# label-pure batches so each batch has an unambiguous train-worthiness label
rng = np.random.default_rng(1)
by_label = {0: [ex for ex in corpus if ex.label == 0], 1: [ex for ex in corpus if ex.label == 1]}
batches = []
for label, pool in by_label.items():
    for start in range(0, len(pool) - 8, 8):
        batches.append((MiniBatch(pool[start : start + 8], index=0), label))
order = rng.permutation(len(batches))

predictor = NaiveBayesModel()
window = PredictorLossWindow(window_size=8)

print("fresh predictor decision:", predictor.predict_batch([corpus[0].features()]))

for m, pick in enumerate(order[:150]):
    batch, label = batches[pick]
    feats = batch.feature_vectors()
    if predictor.has_both_classes:
        window.push(predictor.loss(feats, [label] * len(feats)))
    predictor.update(feats, label)
    if m in (1, 5, 20, 60, 149):
        mean = window.mean()
        shown = f"{mean:.4f}" if mean is not None else "window not full"
        print(f"batch {m:3d}  windowed predictor loss: {shown}")

held_batch, held_label = batches[order[150]]
decision, p1 = predictor.predict_batch(held_batch.feature_vectors())
print(f"\nheld-out batch with true label {held_label}: decision={decision} mean posterior={p1:.3f}")
print("examples seen per class:", predictor.class_counts.tolist())
