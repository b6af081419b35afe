# %% [markdown]
# Training a small forecaster
#
# Fit a 4-block GCN on synthetic 3D walks and compare it with repeating the
# last pose. Takes about a minute on one CPU core.

# %%
from gcnforecast.metrics import MetricConfig, evaluate_samples, zero_velocity_baseline
from gcnforecast.predict import forecast_batch
from gcnforecast.preprocess import WindowSpec, extend_and_window
from gcnforecast.synth import SynthSpec, generate
from gcnforecast.train import ModelOptions, TrainConfig, TrainSetup, fit

train_data = generate(SynthSpec(num_sequences=256, frames=30, seed=10))
test_data = generate(SynthSpec(num_sequences=64, frames=30, seed=11))
train_windows = list(extend_and_window(train_data, WindowSpec()))
test_windows = list(extend_and_window(test_data, WindowSpec()))

# %%
setup = TrainSetup(model=ModelOptions(hidden_channels=64, num_blocks=4), train=TrainConfig(epochs=20))
model, report = fit(train_windows, train_data.skeleton, setup, seed=0)
for rec in report.epochs[::5]:
    print(f"epoch {rec.epoch:2d}  loss {rec.loss:.4f}  frames in loss {rec.active_frames}")

# %%
preds = forecast_batch(model, [s.input for s in test_windows], test_data.skeleton, 14, setup.preprocess, "velocity")
frames = (2, 4, 8, 10, 14)
ours = evaluate_samples(preds, test_windows, frames, MetricConfig())
base = evaluate_samples([zero_velocity_baseline(s) for s in test_windows], test_windows, frames, MetricConfig())
for f, a, b in zip(frames, ours, base):
    print(f"frame {f:2d}  model {a:6.2f} cm   zero velocity {b:6.2f} cm")
