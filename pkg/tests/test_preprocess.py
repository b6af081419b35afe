import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnforecast import Dataset, PoseSequence
from gcnforecast.core import MotionSample
from gcnforecast.preprocess import (
    PreprocessConfig,
    PreprocessWarning,
    WindowSpec,
    boundary_filter,
    center_and_scale,
    extend_and_window,
    fill_gaps,
    find_center,
    flip_augment,
    interpolate_invisible,
    pad_visibility,
    prepare_sample,
    reverse_augment,
    uncenter,
    valid_starts,
)

from conftest import chain_skeleton, random_sequence


def seq2d(xs, vis):
    """Single-joint 2D sequence whose x channel is ``xs`` (y mirrors it)."""
    c = np.stack([np.asarray(xs, float), np.asarray(xs, float) * 2], axis=-1)[:, None, :]
    return PoseSequence(c, np.asarray(vis)[:, None])


def test_centering_example():
    c = np.array([[[3.0, 4.0], [5.0, 9.0]], [[4.0, 4.0], [1.0, 1.0]]])
    seq = PoseSequence.from_coords(c)
    out, offset, scale = center_and_scale(seq, chain_skeleton(2), PreprocessConfig(scale=1))
    np.testing.assert_array_equal(offset, [3, 4])
    np.testing.assert_array_equal(out.coords[0, 0], [0, 0])
    np.testing.assert_array_equal(out.coords, c - [3, 4])


def test_scale_100_gives_centimetres():
    c = np.zeros((2, 2, 3))
    c[:, 1] = [0.25, -0.5, 1.0]  # meters from the neck
    out, _, scale = center_and_scale(PoseSequence.from_coords(c), chain_skeleton(2), PreprocessConfig())
    assert scale == 100
    np.testing.assert_allclose(out.coords[0, 1], [25, -50, 100])


@given(st.floats(0.5, 200), st.integers(0, 10_000))
def test_center_scale_roundtrip(scale, seed):
    seq = random_sequence(np.random.default_rng(seed), n=6, j=4, d=3)
    out, offset, s = center_and_scale(seq, chain_skeleton(4), PreprocessConfig(scale=scale))
    back = uncenter(out, offset, s)
    np.testing.assert_allclose(back.coords, seq.coords, rtol=1e-9, atol=1e-12)


def test_center_falls_back_to_first_visible_neck():
    c = np.arange(12.0).reshape(3, 2, 2)
    vis = np.array([[0, 1], [1, 1], [1, 1]])
    offset, flagged = find_center(PoseSequence(c, vis), 0)
    np.testing.assert_array_equal(offset, c[1, 0])
    assert not flagged


def test_center_without_neck_uses_centroid_and_flags():
    c = np.arange(12.0).reshape(3, 2, 2)
    vis = np.array([[0, 1], [0, 1], [0, 0]])
    with pytest.warns(PreprocessWarning):
        offset, flagged = find_center(PoseSequence(c, vis), 0)
    np.testing.assert_allclose(offset, c[[0, 1], 1].mean(axis=0))
    assert flagged


def test_interpolation_example():
    out = interpolate_invisible(seq2d([2, 0, 0, 8], [1, 0, 0, 1]))
    np.testing.assert_allclose(out.coords[:, 0, 0], [2, 4, 6, 8])
    np.testing.assert_array_equal(out.visibility[:, 0], [1, 0, 0, 1])


def test_leading_and_trailing_gaps():
    out = interpolate_invisible(seq2d([0, 0, 5, 7], [0, 0, 1, 1]))
    np.testing.assert_allclose(out.coords[:, 0, 0], [5, 5, 5, 7])
    out = interpolate_invisible(seq2d([1, 3, 0, 0], [1, 1, 0, 0]))
    np.testing.assert_allclose(out.coords[:, 0, 0], [1, 3, 3, 3])


def test_interpolation_identity_and_never_visible():
    s = seq2d([1, 2, 3], [1, 1, 1])
    assert interpolate_invisible(s).equals(s)
    ghost = seq2d([4, 0, 9], [0, 0, 0])
    with pytest.warns(PreprocessWarning):
        out = interpolate_invisible(ghost)
    assert out.equals(ghost)
    assert fill_gaps(ghost)[1]


@given(st.integers(0, 10_000))
def test_interpolation_properties(seed):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng, n=12, j=3, d=2, vis_rate=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreprocessWarning)
        out = interpolate_invisible(seq)
    vis = seq.visibility == 1
    np.testing.assert_array_equal(out.coords[vis], seq.coords[vis])
    # every interior run obeys the linear formula (written independently here)
    for j in range(3):
        idx = [t for t in range(12) if vis[t, j]]
        for a, b in zip(idx, idx[1:]):
            m = b - a
            for i in range(1, m):
                expect = i / m * (seq.coords[b, j] - seq.coords[a, j]) + seq.coords[a, j]
                assert np.abs(out.coords[a + i, j] - expect).max() < 1e-12


def test_pad_visibility():
    np.testing.assert_array_equal(pad_visibility([1, 0, 1], 2), [[1, 0, 1], [1, 0, 1]])
    assert np.all(pad_visibility(np.ones(13), 14) == 1)
    vis = np.random.default_rng(0).integers(0, 2, size=(16, 14))
    padded = pad_visibility(vis[15], 14)
    assert padded.shape == (14, 14) and np.all(padded == vis[15])


def test_boundary_filter():
    c = np.array([[[105.0, 50.0], [99.9, 0.0], [50, 50], [-0.1, 3], [5, 100]]])
    pred = PoseSequence(c, np.ones((1, 5)))
    out = boundary_filter(pred, (100, 100))
    np.testing.assert_array_equal(out.visibility[0], [0, 1, 1, 0, 0])
    np.testing.assert_array_equal(out.coords, c)
    inside = PoseSequence(np.full((2, 2, 2), 10.0), np.ones((2, 2)))
    assert boundary_filter(inside, (100, 100)).equals(inside)
    with pytest.raises(ValueError):
        boundary_filter(PoseSequence.from_coords(np.zeros((1, 1, 3))), (10, 10))


def _sample(n_in, n_out, j=3, d=3, rng=None):
    rng = rng or np.random.default_rng(0)
    full = rng.normal(size=(n_in + n_out, j, d))
    return MotionSample(PoseSequence.from_coords(full[:n_in]), PoseSequence.from_coords(full[n_in:]))


def test_reverse_small_case():
    full = np.arange(3.0)[:, None, None] * np.ones((3, 1, 3))
    s = MotionSample(PoseSequence.from_coords(full[:2]), PoseSequence.from_coords(full[2:]))
    r = reverse_augment(s)
    np.testing.assert_array_equal(r.input.coords[:, 0, 0], [2, 1])
    np.testing.assert_array_equal(r.target.coords[:, 0, 0], [0])


def test_reverse_eight_in_seven_out():
    s = _sample(8, 7)
    r = reverse_augment(s)
    assert (r.T, r.tau) == (8, 7)
    np.testing.assert_array_equal(r.input.coords[0], s.target.coords[-1])  # frame 15 -> new frame 1


@given(st.integers(2, 10), st.integers(1, 8), st.integers(0, 1000))
def test_reverse_and_flip_are_involutions(t, tau, seed):
    s = _sample(t, tau, j=4, rng=np.random.default_rng(seed))
    rr = reverse_augment(reverse_augment(s))
    assert rr.input.equals(s.input) and rr.target.equals(s.target)
    spec = chain_skeleton(4, swap=[(1, 2)])
    ff = flip_augment(flip_augment(s, spec, axis=1), spec, axis=1)
    assert ff.input.equals(s.input) and ff.target.equals(s.target)
    assert ff.input.coords.shape == s.input.coords.shape


def test_flip_negates_axis():
    c = np.array([[[1.0, 2.0, 3.0]]])
    s = MotionSample(PoseSequence.from_coords(c), PoseSequence.from_coords(c))
    out = flip_augment(s, chain_skeleton(1), axis=0)
    np.testing.assert_array_equal(out.input.coords[0, 0], [-1, 2, 3])


def test_flip_of_mirror_symmetric_pose_is_relabeling():
    # joints 1 and 2 mirror each other across x = 0
    pose = np.array([[0.0, 1.0, 0.5], [0.4, 0.2, 0.1], [-0.4, 0.2, 0.1]])
    s = MotionSample(PoseSequence.from_coords(pose[None]), PoseSequence.from_coords(pose[None]))
    no_swap = flip_augment(s, chain_skeleton(3), axis=0)
    np.testing.assert_allclose(no_swap.input.coords[0][[0, 2, 1]], pose)
    swapped = flip_augment(s, chain_skeleton(3, swap=[(1, 2)]), axis=0)
    np.testing.assert_allclose(swapped.input.coords[0], pose)


def _video_dataset(lengths, videos):
    seqs = [
        PoseSequence.from_coords(np.full((n, 2, 3), float(i)), sequence_id=f"s{i}", video_id=v)
        for i, (n, v) in enumerate(zip(lengths, videos))
    ]
    return Dataset(seqs, chain_skeleton(2))


def test_window_counts():
    assert len(list(extend_and_window(_video_dataset([30], ["a"])))) == 1
    assert len(list(extend_and_window(_video_dataset([30, 30], ["a", "a"])))) == 31
    assert len(list(extend_and_window(_video_dataset([30, 30], ["a", "b"])))) == 2


def test_windows_never_cross_videos():
    for s in extend_and_window(_video_dataset([20, 35, 40], ["a", "b", "a"])):
        vid = s.source_id.split(":")[0]
        values = set(np.unique(np.concatenate([s.input.coords, s.target.coords])))
        assert values <= ({0.0, 2.0} if vid == "a" else {1.0})


def test_short_video_skipped_with_warning():
    with pytest.warns(PreprocessWarning):
        out = list(extend_and_window(_video_dataset([10, 30], ["a", "b"])))
    assert [s.source_id for s in out] == ["b:0"]


@given(st.lists(st.tuples(st.integers(1, 50), st.sampled_from("abc")), min_size=1, max_size=6), st.integers(1, 3))
def test_window_count_formula(parts, stride):
    ds = _video_dataset([n for n, _ in parts], [v for _, v in parts])
    spec = WindowSpec(stride=stride)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreprocessWarning)
        got = len(list(extend_and_window(ds, spec)))
    totals = {}
    for n, v in parts:
        totals[v] = totals.get(v, 0) + n
    expected = sum(len(range(0, max(0, n - 30 + 1), stride)) for n in totals.values())
    assert got == expected
    if stride == 1:
        assert got == sum(max(0, n - 30 + 1) for n in totals.values())


def test_random_start_is_seeded():
    ds = _video_dataset([60, 45], ["a", "b"])
    spec = WindowSpec(random_start=True, num_samples=20)
    a = [s.source_id for s in extend_and_window(ds, spec, np.random.default_rng(5))]
    b = [s.source_id for s in extend_and_window(ds, spec, np.random.default_rng(5))]
    assert a == b and len(a) == 20
    with pytest.raises(ValueError):
        list(extend_and_window(ds, spec))
    assert valid_starts(60, spec) == 31


def test_prepare_sample_fills_and_centres():
    c = np.zeros((4, 2, 2))
    c[:, 0] = [[10, 10], [11, 10], [12, 10], [13, 10]]
    c[:, 1] = [[2, 0], [0, 0], [0, 0], [8, 0]]
    vis = np.array([[1, 1], [1, 0], [1, 0], [1, 1]])
    s = MotionSample(PoseSequence(c, vis), PoseSequence(c[-1:], vis[-1:]))
    p = prepare_sample(s, chain_skeleton(2), PreprocessConfig(scale=2))
    np.testing.assert_allclose(p.input.coords[:, 1, 0], (np.array([2, 4, 6, 8]) - 10) * 2)
    np.testing.assert_allclose(p.restored().input.coords[:, 0], c[:, 0])
    assert p.scale == 2.0
