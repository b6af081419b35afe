# %% [markdown]
# VIM and VAM
#
# VIM averages joint distance over ground-truth-visible joints. VAM charges a
# fixed penalty whenever predicted and true visibility disagree.

# %%
import numpy as np

from gcnforecast import PoseSequence
from gcnforecast.metrics import MetricConfig, MetricReport, offset_to_frame, vam, vim

gt = PoseSequence(np.zeros((1, 2, 2)), np.ones((1, 2)))
pred = PoseSequence(np.array([[[10.0, 0.0], [0.0, 0.0]]]), np.array([[1, 0]]))
px = MetricConfig(unit_scale=1.0, beta=200.0)
print("VIM:", vim(pred, gt, 1, px))
print("VAM (error 10 + one mismatch over 2 joints):", vam(pred, gt, 1, px))

# %%
print("900 ms at 64.3 ms/frame is frame", offset_to_frame(900, 64.3))
print("560 ms at 40 ms/frame is frame", offset_to_frame(560, 40))

# %%
report = MetricReport("vim", (100.0, 240.0, 500.0), (2, 4, 8), (5.1, 11.0, 24.3), 13.47)
print(report.to_csv())
