#!/usr/bin/env python3
"""Run the full staged trainer on a redundant toy corpus and read the report.

Stage 0 trains on everything while estimating the gate; stage 1 skips
backward passes under it and teaches the predictor; stage 2 lets the
predictor veto whole batches before the forward pass. The report prices the
run with the analytic two-pass time model.
"""

from dataclasses import replace

from lossgate import TrainerConfig, generate_toy_corpus, run

train = generate_toy_corpus(10000, duplication=5, noise_rate=0.05, seed=0)
evalset = generate_toy_corpus(1500, duplication=1, noise_rate=0.0, seed=99)

# pass costs in hours per batch (about 1.1s forward, 2.5s backward), so the
# energy model's kWh figure comes out in real units
config = TrainerConfig(
    mode="three-stage", epochs=2, batch_size=8, seed=3,
    n0_fraction=0.2, threshold_window=64, predictor_window=8,
    alt=0.5, skip_margin_gamma=0.87,
    t_forward=0.0003, t_backward=0.0007,
)

baseline = run(replace(config, mode="train-all"), train, evalset)
report = run(replace(config, a_full=baseline.accuracy), train, evalset)

bounds = report.stage_boundaries
print(f"batches total:        {report.batches_total}")
print(f"stage 1 started at:   batch {bounds['backward_filter_start']}")
print(f"stage 2 started at:   batch {bounds['full_filter_start']}")
print(f"frozen gate value:    {bounds['l_low']:.4f}")
print()
print(f"backward-only skipped: {report.alpha_b:6.1%}")
print(f"both passes skipped:   {report.alpha_fb:6.1%}")
print(f"normalized time:       {report.t_norm:.3f}  ({1 / report.t_norm:.1f}x faster than train-all)")
print()
print(f"accuracy:  {report.accuracy:.4f}  (train-all {baseline.accuracy:.4f}, untrained {report.a_base:.4f})")
print(f"AGOT:      {report.agot:.4f}")
print(f"energy:    {report.energy_kwh:.3f} kWh -> {report.co2e_lb:.3f} lb CO2e "
      f"(train-all would be {baseline.energy_kwh:.3f} kWh)")
