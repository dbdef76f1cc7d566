"""
Training the reference model
============================

Runs one clean (unpoisoned) training job on a reduced dataset and walks
through the resulting report: the per-epoch loss trajectory and the four
evaluation metrics. The base run is the yardstick every attack is scored
against, so its alpha is 0 and its degradation metrics are 0 by definition.
"""

from poisonbench import GenConfig, RunConfig, run_base

data = GenConfig(seed=3, class_count=4, per_class_train=60, per_class_test=30)
cfg = RunConfig(dataset=data, epochs=10, lr=0.01, batch_size=32,
                model_seed=1, data_seed=3)

report = run_base(cfg)

print(f"run id: {report.run_id}")
print(f"trained {report.epochs} epochs in {report.training_seconds:.2f}s\n")

# The loss trajectory is the raw material for ALC: the average per-epoch
# change in mean training loss.
print("epoch  mean loss")
peak = max(report.epoch_losses)
for i, loss in enumerate(report.epoch_losses, start=1):
    bar = "#" * int(40 * loss / peak)
    print(f"{i:5d}  {loss:.4f}  {bar}")

print()
print(f"ALC (avg loss change/epoch, negative = learning): {report.alc:+.4f}")
print(f"AIP (mean top softmax confidence on test):        {report.aip:.4f}")
print(f"macro F1 on test:                                 {report.fscore:.4f}")
print(f"TTD/PDM vs itself:                                {report.ttd}, {report.pdm}")

print("\nper-class diagonal of the confusion matrix:")
print("  " + " ".join(f"{report.confusion[k][k]:3d}" for k in range(data.class_count)))
