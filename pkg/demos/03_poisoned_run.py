"""
Poisoning a training run
========================

Trains the same model twice: once clean, once with a global-replacement
poisoning plan injecting between every epoch. The attack swaps victim
images for other instances' pixels while keeping every label unchanged,
so the model sees increasingly contradictory supervision. The comparison
at the end shows the four metrics moving exactly the way an integrity
attack should: loss trajectory up, confidence down, F1 down, and wall
clock time barely disturbed.
"""

from poisonbench import (GenConfig, PoisonPlan, RunConfig,
                         default_trigger_patch, run_base, run_poisoned)

data = GenConfig(seed=3, class_count=4, per_class_train=60, per_class_test=30)
cfg = RunConfig(dataset=data, epochs=10, lr=0.01, batch_size=32,
                model_seed=1, data_seed=3)

base = run_base(cfg)
print(f"base run {base.run_id}: fscore {base.fscore:.4f}, aip {base.aip:.4f}")

# alpha: fraction of the train set hit per round; beta: epochs between rounds.
plan = PoisonPlan(alpha=0.20, beta=1, strategy="global", epochs=cfg.epochs,
                  seed=cfg.model_seed)
poisoned = run_poisoned(cfg, plan, base)
print(f"poisoned run {poisoned.run_id}\n")

print("round  after-epoch  victims  newly-hit  cumulative")
for s in poisoned.round_summaries:
    print(f"{s.round_index:5d}  {s.epoch_after:11d}  {len(s.victim_indices):7d}"
          f"  {s.newly_poisoned_count:9d}  {s.cumulative_poisoned_count:10d}")

print("\nepoch  base loss  poisoned loss")
for i, (b, p) in enumerate(zip(base.epoch_losses, poisoned.epoch_losses), 1):
    print(f"{i:5d}  {b:9.4f}  {p:13.4f}")

print()
print(f"ALC:  base {base.alc:+.4f}  poisoned {poisoned.alc:+.4f}")
print(f"AIP:  base {base.aip:.4f}  poisoned {poisoned.aip:.4f}")
print(f"F1:   base {base.fscore:.4f}  poisoned {poisoned.fscore:.4f}")
print(f"PDM (F1 damage):    {poisoned.pdm:+.4f}")
print(f"TTD (time overhead): {poisoned.ttd:+.3f}s "
      f"({100 * poisoned.ttd / base.training_seconds:+.1f}% of base)")

# The local strategy blends a small trigger patch into a random region
# instead of replacing whole images; same interface, gentler footprint.
patch = default_trigger_patch(cfg, data.width)
local_plan = PoisonPlan(alpha=0.20, beta=1, strategy="local",
                        epochs=cfg.epochs, seed=cfg.model_seed, patch=patch)
local = run_poisoned(cfg, local_plan, base)
print(f"\nlocal variant {local.run_id}: fscore {local.fscore:.4f}, "
      f"pdm {local.pdm:+.4f}, ttd {local.ttd:+.3f}s")
