# Turning fused poses into training targets
#
# Each retained pose yields a box (the tight joint box grown by 10%) and an
# anchor class. The anchors come from k-means over height-normalized poses.

import json

from posefuse.ingest import merge_bundles
from posefuse.pseudo_gt import (
    annotate,
    classification_loss,
    export_training_targets,
    fit_anchor_codebook,
    normalize_pose_for_similarity,
)
from posefuse.sst import AggregationConfig, aggregate_sequence
from posefuse.synthetic import DEFAULT_PROFILES, generate_trace, simulate_estimator

trace = generate_trace(T=200, seed=1)
streams = [simulate_estimator(trace, p, k) for k, p in enumerate(DEFAULT_PROFILES, start=1)]
fused = aggregate_sequence(merge_bundles(streams), AggregationConfig(), video="walk")
kept = fused.retained_only()
print(len(kept.frames), "retained of", len(fused.frames))

# In[2]:

book = fit_anchor_codebook((normalize_pose_for_similarity(f.joints) for f in kept.frames), B=6, seed=0)
print("k-means objective:", [round(v, 3) for v in book.objective_history[:6]], "...")
print("anchor 0 head/ankles:", book.anchors[0][[0, 11, 12]].round(3).tolist())

# In[3]:

ann = annotate([kept], book)
counts = {}
for a in ann:
    counts[a.anchor_class] = counts.get(a.anchor_class, 0) + 1
print("class histogram:", dict(sorted(counts.items())))
print("first record:", ann[0].to_record())

# In[4]:

text = export_training_targets([kept], book, gamma=0.18)
print(json.loads(text.splitlines()[0])["header"]["loss"])

# A classifier that puts 70% on the right anchor pays -ln 0.7.
u = [0.05] * 6
u[ann[0].anchor_class] = 0.75
print("loss:", round(classification_loss(u, ann[0].anchor_class), 4))
