import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnforecast import Dataset, PoseSequence, PredictionSet
from gcnforecast.core import MotionSample
from gcnforecast.metrics import (
    MetricConfig,
    MetricReport,
    MetricWarning,
    evaluate,
    offset_to_frame,
    vam,
    vim,
    zero_velocity_baseline,
)

from conftest import chain_skeleton
from oracles import vam_loop, vim_loop

CM = MetricConfig(unit_scale=100.0)
PX = MetricConfig(unit_scale=1.0, beta=200.0)


def test_offset_to_frame():
    assert offset_to_frame(900, 64.3) == 14
    assert offset_to_frame(100, 100) == 1
    assert [offset_to_frame(o, 64.3) for o in (100, 240, 500, 640, 900)] == [2, 4, 8, 10, 14]
    assert [offset_to_frame(o, 40) for o in (80, 160, 320, 400, 560)] == [2, 4, 8, 10, 14]
    assert offset_to_frame(150, 100) == 2  # half rounds up
    assert offset_to_frame(10, 100) == 1
    with pytest.raises(ValueError):
        offset_to_frame(0, 40)
    with pytest.warns(MetricWarning):
        assert offset_to_frame(2000, 40, tau=14) == 14


def test_vim_examples():
    gt = PoseSequence.from_coords(np.zeros((1, 1, 3)))
    pred = PoseSequence.from_coords(np.array([[[3.0, 4.0, 0.0]]]))
    assert vim(gt, gt, 1, CM) == 0
    assert vim(pred, gt, 1, CM) == 500
    p = PoseSequence(np.array([[[1.0, 0.0], [99.0, 0.0]]]), np.ones((1, 2)))
    g = PoseSequence(np.zeros((1, 2, 2)), np.array([[1, 0]]))
    assert vim(p, g, 1, CM) == 100


def test_vim_no_visible_joint_warns():
    g = PoseSequence(np.zeros((1, 2, 2)), np.zeros((1, 2)))
    with pytest.warns(MetricWarning):
        assert vim(g, g, 1, PX) == 0.0


def test_vam_examples():
    g = PoseSequence(np.zeros((1, 2, 2)), np.ones((1, 2)))
    p = PoseSequence(np.array([[[10.0, 0.0], [0.0, 20.0]]]), np.ones((1, 2)))
    assert vam(p, g, 1, PX) == 15
    p = PoseSequence(np.array([[[10.0, 0.0], [0.0, 0.0]]]), np.array([[1, 0]]))
    assert vam(p, g, 1, PX) == 105
    inv = PoseSequence(np.ones((1, 2, 2)), np.zeros((1, 2)))
    assert vam(inv, PoseSequence(np.zeros((1, 2, 2)), np.zeros((1, 2))), 1, PX) == 0
    with pytest.raises(ValueError):
        vam(np.zeros((1, 2, 2)), g, 1, PX)


def _random_case(rng, d):
    j = int(rng.integers(1, 8))
    pc = rng.normal(size=(3, j, d)) * 50
    gc = rng.normal(size=(3, j, d)) * 50
    if d == 3:
        return PoseSequence.from_coords(pc), PoseSequence.from_coords(gc)
    return PoseSequence(pc, rng.integers(0, 2, (3, j))), PoseSequence(gc, rng.integers(0, 2, (3, j)))


@given(st.integers(0, 2**31), st.sampled_from([2, 3]), st.integers(1, 3))
def test_vim_matches_loop(seed, d, frame):
    p, g = _random_case(np.random.default_rng(seed), d)
    f = frame - 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MetricWarning)
        got = vim(p, g, frame, CM)
    assert abs(got - vim_loop(p.coords[f].tolist(), g.coords[f].tolist(), g.visibility[f].tolist(), 100)) < 1e-9


@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0, 500))
def test_vam_matches_loop_and_is_monotone_in_beta(seed, frame, beta):
    p, g = _random_case(np.random.default_rng(seed), 2)
    f = frame - 1
    cfg = MetricConfig(unit_scale=1.0, beta=beta)
    got = vam(p, g, frame, cfg)
    ref = vam_loop(p.coords[f].tolist(), p.visibility[f].tolist(), g.coords[f].tolist(), g.visibility[f].tolist(), beta, 1)
    assert abs(got - ref) < 1e-9
    assert vam(p, g, frame, MetricConfig(unit_scale=1.0, beta=beta + 10)) >= got


@given(st.integers(0, 2**31), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_vim_translation_invariant(seed, dx, dy):
    p, g = _random_case(np.random.default_rng(seed), 2)
    shift = np.array([dx, dy])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MetricWarning)
        a = vim(p, g, 2, PX)
        b = vim(p.with_coords(p.coords + shift), g.with_coords(g.coords + shift), 2, PX)
    assert abs(a - b) < 1e-9 * max(1.0, a)


def _gt_dataset(velocity, n=40, j=3):
    t = np.arange(n)[:, None, None]
    coords = np.ones((n, j, 3)) + t * np.asarray(velocity)
    seq = PoseSequence(coords, np.ones((n, j)), 64.3, "s", "vid")
    return Dataset([seq], chain_skeleton(j), 3, 64.3)


def _windows(ds, starts, T=16, tau=14):
    seq = ds.videos()["vid"]
    return [MotionSample(seq.frames(s, s + T), seq.frames(s + T, s + T + tau), source_id=f"vid:{s}") for s in starts]


def test_zero_velocity_baseline_closed_form():
    v = np.array([0.01, -0.02, 0.005])
    for s in _windows(_gt_dataset(v), [0, 3]):
        base = zero_velocity_baseline(s)
        assert np.array_equal(base.coords, np.repeat(s.input.coords[-1:], 14, axis=0))
        for t in range(1, 15):
            assert abs(vim(base, s.target, t, CM) - np.linalg.norm(v) * t * 100) < 1e-9
    static = _windows(_gt_dataset(np.zeros(3)), [0])[0]
    assert vim(zero_velocity_baseline(static), static.target, 14, CM) == 0


def _prediction_set(ds, samples, fn):
    return PredictionSet([fn(s) for s in samples], [s.source_id for s in samples], ds.skeleton, 3, 64.3, 16, 14)


def test_evaluate_perfect_and_baseline():
    ds = _gt_dataset([0.01, 0.0, 0.0])
    samples = _windows(ds, [0, 5, 10])
    perfect = evaluate(_prediction_set(ds, samples, lambda s: s.target), ds)
    assert perfect.values == (0.0,) * 5 and perfect.average == 0.0
    rep = evaluate(_prediction_set(ds, samples, zero_velocity_baseline), ds)
    assert rep.frames == (2, 4, 8, 10, 14)
    np.testing.assert_allclose(rep.values, [2, 4, 8, 10, 14], rtol=1e-9)
    assert abs(rep.average - np.mean(rep.values)) < 1e-12
    single = evaluate(_prediction_set(ds, samples[:1], zero_velocity_baseline), ds)
    assert single.values == single.per_sample["vid:0"]


def test_evaluate_unmatched_ids():
    ds = _gt_dataset([0.01, 0.0, 0.0])
    s = _windows(ds, [0])[0]
    bad = PredictionSet([s.target, s.target], ["vid:0", "other:3"], ds.skeleton, 3, 64.3, 16, 14)
    with pytest.raises(ValueError, match="other:3"):
        evaluate(bad, ds)


def test_report_serialization_roundtrip():
    rep = MetricReport("vim", (100.0, 240.0), (2, 4), (1.5, 3.25), 2.375, {"v:0": (1.5, 3.25)})
    back = MetricReport.from_dict(json.loads(rep.to_json()))
    assert back == rep
    lines = rep.to_csv().splitlines()
    assert lines[0] == "offset_ms,frame,vim" and lines[-1] == "average,,2.375"
    svg = rep.to_svg()
    assert svg.startswith("<svg") and svg.count("<rect") == 2 and svg == rep.to_svg()
