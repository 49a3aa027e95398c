import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msdeblur.blur_synth import (FrameSequence, GammaCRF, UniformKernel, crf_apply, crf_invert,
                                 generate_dataset, mid_index, select_sharp, synthesize_blur,
                                 uniform_kernel_blur)
from msdeblur.synthetic import moving_scene, translating_square
from oracles import accumulate_blur, filter_reflect

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_crf_fixed_points_and_value():
    assert crf_apply(np.array(0.0)) == 0.0
    assert crf_apply(np.array(1.0)) == 1.0
    assert crf_apply(np.array(0.25)) == 0.25 ** (1 / 2.2)
    assert crf_invert(np.array(1.0)) == 1.0


@given(arrays(np.float64, (3, 4, 4), elements=unit))
def test_crf_gamma_one_is_identity(x):
    crf = GammaCRF(1.0)
    np.testing.assert_array_equal(crf_apply(x, crf), x)
    np.testing.assert_array_equal(crf_invert(x, crf), x)


def test_crf_round_trip(rng):
    x = rng.random((3, 32, 32))
    assert np.max(np.abs(crf_invert(crf_apply(x)) - x)) < 1e-12
    assert np.max(np.abs(crf_apply(crf_invert(x)) - x)) < 1e-12


def test_crf_rejects_negative():
    with pytest.raises(ValueError):
        crf_apply(np.array([-0.1]))
    with pytest.raises(ValueError):
        GammaCRF(0.0)


@given(arrays(np.float64, (2, 3, 3), elements=unit), st.integers(1, 6))
def test_identical_frames_are_returned_exactly(frame, m):
    out = synthesize_blur([frame] * m)
    np.testing.assert_array_equal(out, frame)


def test_black_white_average():
    out = synthesize_blur([np.zeros((1, 4, 4)), np.ones((1, 4, 4))])
    np.testing.assert_allclose(out, 0.5 ** (1 / 2.2), atol=1e-15)


def test_translating_square_matches_accumulation_oracle():
    seq = translating_square()
    out = synthesize_blur(seq.frames)
    ref = accumulate_blur(seq.frames, 2.2)
    assert np.max(np.abs(crf_invert(out) - crf_invert(np.clip(ref, 0, 1)))) <= 1e-12
    # streak covers 8 px square + 8 px travel
    cols = np.nonzero(out[0, 28] > 0)[0]
    assert cols.max() - cols.min() + 1 == 16
    # untouched background stays bit-identical to the sharp frame
    sharp = select_sharp(seq.frames)
    moving = np.any(seq.frames != seq.frames[0], axis=0) | (seq.frames[0] > 0)
    np.testing.assert_array_equal(out[~moving], sharp[~moving])


def test_static_sequence_is_identity(rng):
    frame = rng.random((3, 8, 8))
    pairs = generate_dataset(FrameSequence(np.stack([frame] * 20)), [3, 5], 4)
    assert pairs
    for p in pairs:
        np.testing.assert_array_equal(p.blurry, p.sharp)


@pytest.mark.parametrize("m,idx", [(7, 3), (1, 0), (8, 4), (9, 4)])
def test_mid_index(m, idx):
    assert mid_index(m) == idx


def test_select_sharp_single_frame(rng):
    f = rng.random((3, 4, 4))
    np.testing.assert_array_equal(select_sharp([f]), f)


def test_uniform_delta_kernel_identity(rng):
    img = rng.random((3, 6, 6))
    np.testing.assert_array_equal(uniform_kernel_blur(img, UniformKernel(np.ones((1, 1)))), img)


def test_uniform_box_on_ramp():
    ramp = np.arange(1, 10, dtype=np.float64).reshape(3, 3) / 10
    out = uniform_kernel_blur(ramp[None], UniformKernel.box(3))[0]
    assert out[1, 1] == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(out, filter_reflect(ramp, np.full((3, 3), 1 / 9)), atol=1e-15)


@given(st.integers(0, 10_000))
def test_uniform_asymmetric_kernel_matches_oracle(seed):
    r = np.random.default_rng(seed)
    taps = r.random((3, 5))
    taps /= taps.sum()
    img = r.random((7, 9))
    out = uniform_kernel_blur(img[None], UniformKernel(taps))[0]
    np.testing.assert_allclose(out, filter_reflect(img, taps), atol=1e-14)


def test_uniform_noise_mean_statistics():
    const, sigma = 0.5, 0.05
    out = uniform_kernel_blur(np.full((1, 100, 100), const), UniformKernel.box(3), sigma,
                              np.random.default_rng(0))
    assert abs(out.mean() - const) < 3 * sigma / np.sqrt(out.size)


def test_kernel_validation():
    with pytest.raises(ValueError):
        UniformKernel(np.ones((2, 2)) / 4)
    with pytest.raises(ValueError):
        UniformKernel(np.ones((3, 3)))


def test_dataset_offsets():
    seq = FrameSequence(np.random.default_rng(0).random((30, 1, 4, 4)))
    pairs = generate_dataset(seq, [7], 7)
    assert [p.start for p in pairs] == [0, 7, 14, 21]
    for p in pairs:
        np.testing.assert_array_equal(p.sharp, seq.frames[p.start + 3])
        np.testing.assert_array_equal(p.blurry, synthesize_blur(seq.frames[p.start:p.start + 7]))


def test_dataset_too_short_warns():
    seq = FrameSequence(np.zeros((5, 1, 4, 4)))
    with pytest.warns(RuntimeWarning):
        assert generate_dataset(seq, [7], 1) == []


def test_dataset_rejects_even_windows():
    with pytest.raises(ValueError):
        generate_dataset(FrameSequence(np.zeros((20, 1, 4, 4))), [8], 1)


def test_dataset_is_seed_deterministic():
    seq = moving_scene(n_frames=40, size=32)
    a = generate_dataset(seq, [7, 9, 11, 13], 3, seed=5)
    b = generate_dataset(seq, [7, 9, 11, 13], 3, seed=5)
    assert [(p.start, p.length) for p in a] == [(p.start, p.length) for p in b]
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.blurry, q.blurry)
    c = generate_dataset(seq, [7, 9, 11, 13], 3, seed=6)
    assert [p.length for p in a] != [p.length for p in c]


def test_window_draw_depends_only_on_seed_and_index():
    """A placement's window length does not change when the sequence grows."""
    seq_short = moving_scene(n_frames=40, size=16)
    seq_long = FrameSequence(np.concatenate([seq_short.frames, seq_short.frames]))
    a = generate_dataset(seq_short, [7, 9, 11, 13], 4, seed=1)
    b = {p.start: p.length for p in generate_dataset(seq_long, [7, 9, 11, 13], 4, seed=1)}
    for p in a:
        assert b[p.start] == p.length


def test_blur_stays_in_unit_range():
    seq = moving_scene(n_frames=20, size=32, seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for p in generate_dataset(seq, [5, 7], 2):
            assert p.blurry.min() >= 0 and p.blurry.max() <= 1
