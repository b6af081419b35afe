# %% [markdown]
# Fusing short- and long-horizon models
#
# A short-term model is trained with the loss restricted to the first k
# forecast frames; its first k frames are spliced onto a long-term forecast.

# %%
from gcnforecast.metrics import MetricConfig, evaluate_samples
from gcnforecast.predict import FusionConfig, forecast_batch, fuse
from gcnforecast.preprocess import WindowSpec, extend_and_window
from gcnforecast.synth import SynthSpec, generate
from gcnforecast.train import ModelOptions, TrainConfig, TrainSetup, fit

train_data = generate(SynthSpec(num_sequences=128, frames=30, seed=20))
test_data = generate(SynthSpec(num_sequences=64, frames=30, seed=21))
tr = list(extend_and_window(train_data, WindowSpec()))
te = list(extend_and_window(test_data, WindowSpec()))
skeleton = train_data.skeleton

# %%
long_setup = TrainSetup(model=ModelOptions(hidden_channels=32, num_blocks=2), train=TrainConfig(epochs=15))
short_setup = TrainSetup(model=long_setup.model, train=TrainConfig(epochs=15, short_term_frames=4))
long_model, _ = fit(tr, skeleton, long_setup, seed=0)
short_model, _ = fit(tr, skeleton, short_setup, seed=0)

# %%
inputs = [s.input for s in te]
p_long = forecast_batch(long_model, inputs, skeleton, 14, input_repr="velocity")
p_short = forecast_batch(short_model, inputs, skeleton, 14, input_repr="velocity")
fused = [fuse(a, b, FusionConfig(short_frames=4)) for a, b in zip(p_short, p_long)]
frames = (1, 2, 3, 4, 8, 14)
for name, preds in (("long", p_long), ("short", p_short), ("fused", fused)):
    vals = evaluate_samples(preds, te, frames, MetricConfig())
    print(f"{name:6s}", " ".join(f"{v:6.2f}" for v in vals))
