# %% [markdown]
# DCT trajectory features
#
# A joint trajectory of T observed frames is padded with its last frame up to
# T + tau frames and projected onto an orthonormal cosine basis. Keeping fewer
# coefficients low-pass filters the trajectory.

# %%
import numpy as np

from gcnforecast.dct import decode, encode, make_basis, pad_future

basis = make_basis(30)
print("B @ B.T == I:", np.allclose(basis.matrix @ basis.matrix.T, np.eye(30)))
print("constant (1,1,1,1) ->", encode(np.ones(4), make_basis(4)).round(12))

# %%
t = np.linspace(0, 1, 16)
observed = np.sin(2 * np.pi * t) + 0.05 * np.random.default_rng(0).normal(size=16)
padded = pad_future(observed, 14)
print("padded tail:", padded[-3:])

# %%
for keep in (30, 15, 5):
    b = make_basis(30, keep)
    rebuilt = decode(encode(padded, b), b)
    print(f"L={keep:2d}  max error {np.abs(rebuilt - padded).max():.4f}")
