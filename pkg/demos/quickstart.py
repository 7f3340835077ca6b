"""End-to-end miniature: data -> victim -> attack -> reversion.

Runs in well under a minute on one CPU core. Everything is scaled down
(2 classes, 4x32x32 videos) so the point is the shape of the pipeline,
not the numbers.
"""

import numpy as np

from vidrobust.attack import AttackConfig, attack_video
from vidrobust.distortion import GaussianNoise, replay
from vidrobust.policy import PolicyBundle
from vidrobust.synth import SynthSpec, synth_dataset
from vidrobust.victim import train_toy_victim
from vidrobust.video import map_metric


def main():
    spec = SynthSpec(num_classes=2, frames=4, height=32, width=32)
    print("generating %d-class synthetic videos (%dx%dx%dx%d)..."
          % (spec.num_classes, spec.frames, spec.height, spec.width,
             spec.channels))
    train, val = synth_dataset(spec, 48, 16)

    print("training a toy victim...")
    victim = train_toy_victim(train, val, arch="toy-3d", seed=0,
                              max_epochs=30, target_accuracy=0.95,
                              min_accuracy=0.0)
    print("victim validation accuracy: %.2f" % victim.val_accuracy)

    sample = next(s for s in val if victim.label(s.video) == s.label)
    print("\nattacking one correctly classified sample (label %d)..."
          % sample.label)
    config = AttackConfig(max_iterations=500, query_cap=1200, budget_l=2,
                          distortion=GaussianNoise(variance=0.1), seed=0)
    counter_before = victim.query_count
    report = attack_video(sample, victim, PolicyBundle(seed=0), config,
                          rng=np.random.default_rng(0))

    print("success:            %s" % report.success)
    print("victim queries:     %d (cap %d)"
          % (victim.query_count - counter_before, config.query_cap))
    print("label %d -> %d, confidence %.3f -> %.3f"
          % (report.original_label, report.final_label,
             report.conf_initial, report.conf_final))
    print("perturbation (MAP): %.3f before reversion, %.3f after"
          % (report.map_before, report.map_after))
    print("ledger:             %d distortions applied, %d reverted, %d kept"
          % (report.records_total + report.records_removed,
             report.records_removed, report.records_total))

    # the ledger alone reproduces the adversarial video bit-for-bit
    adv = replay(sample.video, report.ledger)
    print("\nreplayed adversarial video: label %d, MAP %.3f"
          % (victim.label(adv), map_metric(sample.video, adv)))


if __name__ == "__main__":
    main()
