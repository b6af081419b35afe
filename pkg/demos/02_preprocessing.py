# %% [markdown]
# Preprocessing a 2D pose sequence
#
# Centering on the first visible neck, gap filling, visibility padding and
# boundary filtering, applied to a small synthetic 2D clip.

# %%
import numpy as np

from gcnforecast import PoseSequence
from gcnforecast.preprocess import (
    PreprocessConfig,
    boundary_filter,
    center_and_scale,
    interpolate_invisible,
    pad_visibility,
)
from gcnforecast.synth import SynthSpec, generate

data = generate(SynthSpec(num_sequences=1, frames=30, dims=2, occlusion_rate=0.2, seed=3))
seq = data.sequences[0]
print("visible fraction:", seq.visibility.mean().round(3))

# %%
filled = interpolate_invisible(seq)
print("coords at hidden joints before:", np.abs(seq.coords[seq.visibility == 0]).max())
print("after linear gap filling:", np.abs(filled.coords[seq.visibility == 0]).max().round(1))

# %%
centered, offset, scale = center_and_scale(filled, data.skeleton, PreprocessConfig())
print("offset (neck, first visible frame):", offset, "scale:", scale)

# %%
print("forecast visibility copies the last observed frame:")
print(pad_visibility(seq.visibility[15], 3))

# %%
pred = PoseSequence(np.array([[[105.0, 50.0], [50.0, 50.0]]]), np.ones((1, 2)))
print("visibility after boundary filter in 100x100:", boundary_filter(pred, (100, 100)).visibility)
