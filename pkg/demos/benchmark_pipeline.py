"""Small synthesis -> match -> evaluate run, printed as a table.

Six texture bases each get a random scale change and a gamma ramp.
Histogram descriptors with and without size pooling are matched across
every pair, precision/recall is swept over ratio-test thresholds, and
the pooled variant should come out ahead on mean average precision.
Scale is the one nuisance pooling is built to absorb; throw in a large
rotation instead and both kinds fail together. Runs in well under a
minute on one core.
"""

from orbitpool.bench import SynthSpec, evaluate, match_pair, synth_pairs
from orbitpool.textures import benchmark_bases

# skip the ramp and checkerboard bases: a ramp repeats one gradient
# direction everywhere, so its lattice descriptors all tie and the ratio
# test rightly refuses to match any of them
bases = benchmark_bases(8)[2:]
spec = SynthSpec(scale_range=(0.7, 1.4), contrast="gamma")
pairs = synth_pairs(bases, spec, seed=11)

print("synthesized pairs (one per base)")
for p in pairs:
    gt = p.ground_truth
    print(f"  {p.name}: scale {gt.scale:.3f}, rotation {gt.rotation:+.3f} rad, "
          f"visible {p.covisible_mask.mean():.0%} of pixels")

print()
print("matches on the first pair at the default 0.8 ratio")
for kind in ("sift", "dsp-sift"):
    pm = match_pair(pairs[0], kind)
    correct = sum(1 for r in pm.records if r.correct)
    print(f"  {kind:>8}: {correct}/{len(pm.records)} matches correct, "
          f"{pm.candidates} reference keypoints matchable")

print()
print("threshold sweep over all pairs")
report = evaluate(pairs, kinds=("sift", "dsp-sift"))
for kind in ("sift", "dsp-sift"):
    aps = [report.average_precision(p.name, kind) for p in pairs]
    print(f"  {kind:>8}: mAP {report.mean_ap[kind]:.4f}  "
          f"(per pair: {', '.join(f'{a:.3f}' for a in aps)})")

gap = report.mean_ap["dsp-sift"] - report.mean_ap["sift"]
print()
print(f"size pooling buys {gap:+.4f} mAP on this run "
      f"({report.runtime_seconds:.1f}s of matching).")
