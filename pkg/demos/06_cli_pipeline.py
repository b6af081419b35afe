# %% [markdown]
# Command-line pipeline and sweep
#
# The same steps as the shell commands
#
#     gcnforecast synth --out d.jsonl
#     gcnforecast train --data d.jsonl --out run
#     gcnforecast predict --data d.jsonl --model run/model.npz --out p.jsonl
#     gcnforecast eval --pred p.jsonl --gt d.jsonl --out ev
#
# run in-process on a tiny configuration.

# %%
import json
import pathlib
import tempfile

from gcnforecast.cli import main

root = pathlib.Path(tempfile.mkdtemp())
small = ["--set", "model.hidden_channels=16", "--set", "model.num_blocks=2", "--set", "train.epochs=5",
         "--set", "synth.num_sequences=8", "--set", "synth.frames=40", "--seed", "1"]
main(["synth", "--out", str(root / "d.jsonl")] + small)
main(["train", "--data", str(root / "d.jsonl"), "--out", str(root / "run")] + small)
main(["predict", "--data", str(root / "d.jsonl"), "--model", str(root / "run/model.npz"), "--out", str(root / "p.jsonl")] + small)
main(["eval", "--pred", str(root / "p.jsonl"), "--gt", str(root / "d.jsonl"), "--out", str(root / "ev")])
print((root / "ev/metrics.csv").read_text())

# %%
main(["sweep", "--data", str(root / "d.jsonl"), "--out", str(root / "sweep"), "--set", "train.epochs=2",
      "--set", "sweep.scales=[10, 100]", "--set", "sweep.num_blocks=[1, 2]", "--set", "sweep.hidden_channels=[16]"])
print((root / "sweep/sweep.md").read_text())
print("rows:", len(json.loads((root / "sweep/sweep.json").read_text())["rows"]))
