# How well does the agreement score predict pose error?
#
# Confidence is high when the proposals agree with the fused pose, measured in
# head lengths. Frames under gamma are dropped. Tallying pose error by
# retained/discarded shows what the threshold buys.

from posefuse.ingest import merge_bundles
from posefuse.metrics import EvalConfig, confidence_error_pairs, histogram_from_pairs
from posefuse.sst import AggregationConfig, aggregate_sequence
from posefuse.synthetic import DEFAULT_PROFILES, generate_trace, simulate_estimator, trial_seeds
from dataclasses import replace

pairs = []
for trial in range(20):
    trace_seed, seeds = trial_seeds(0, trial, len(DEFAULT_PROFILES))
    trace = generate_trace(T=100, seed=trace_seed)
    streams = [simulate_estimator(trace, replace(p, seed=s), k)
               for k, (p, s) in enumerate(zip(DEFAULT_PROFILES, seeds), start=1)]
    fused = aggregate_sequence(merge_bundles(streams), AggregationConfig())
    pairs += confidence_error_pairs([fused], [trace.gt])
print(len(pairs), "scored poses")

# In[2]:

def show(h):
    width = max(len(lab) for lab in h.labels())
    for lab, r, d in zip(h.labels(), h.retained, h.discarded):
        print(f"{lab:>{width}}  kept {r:5d} {'#' * (r // 40):<30} dropped {d:4d} {'x' * (d // 40)}")

show(histogram_from_pairs(pairs, EvalConfig(gamma=0.18)))

# In[3]:

# A stricter threshold moves poses between the two columns. Each bin's total stays the same.
show(histogram_from_pairs(pairs, EvalConfig(gamma=0.6)))
