import numpy as np
import pytest

from msdeblur import model as M
from msdeblur.autodiff import ConvParams, ShapeError
from msdeblur.pyramid import gaussian_pyramid
from msdeblur.verification import check_discriminator, check_generator, check_resblock


def zero_conv(c, k=5):
    return ConvParams(np.zeros((c, c, k, k)), np.zeros(c), 1, k // 2)


# ResBlock -------------------------------------------------------------------


def test_resblock_zero_weights_is_identity(rng):
    x = rng.standard_normal((2, 4, 8, 8))
    np.testing.assert_array_equal(M.resblock_forward(x, zero_conv(4), zero_conv(4)), x)


def test_resblock_has_no_trailing_relu(rng):
    x = np.full((1, 2, 6, 6), -0.5)
    p2 = ConvParams(rng.standard_normal((2, 2, 5, 5)), rng.standard_normal(2), 1, 2)
    out = M.resblock_forward(x, zero_conv(2), p2)
    # conv1 = 0 -> relu = 0 -> conv2 emits its bias only
    np.testing.assert_allclose(out, x + p2.bias[None, :, None, None])
    p2z = ConvParams(p2.weight, np.zeros(2), 1, 2)
    assert np.any(M.resblock_forward(x, zero_conv(2), p2z) == -0.5)


def test_resblock_gradcheck():
    assert check_resblock(seed=3).passed


def test_resblock_channel_change_rejected(rng):
    bad = ConvParams(np.zeros((3, 4, 5, 5)), np.zeros(3), 1, 2)
    with pytest.raises(ShapeError):
        M.resblock_forward(rng.standard_normal((1, 4, 8, 8)), bad, zero_conv(4))


# stages and generator -------------------------------------------------------


def test_paper_stage_shapes(rng):
    spec = M.GeneratorSpec.paper()
    params = M.init_generator(spec, rng)
    latent, up = M.stage_forward(rng.random((1, 3, 64, 64)), None, params, spec, 3)
    assert latent.shape == (1, 3, 64, 64)
    assert up.shape == (1, 64, 128, 128)


def test_desk_stage_shapes(rng):
    spec = M.GeneratorSpec.desk()
    params = M.init_generator(spec, rng)
    latent, up = M.stage_forward(rng.random((1, 3, 16, 16)), np.zeros((1, 16, 16, 16)), params, spec, 1)
    assert latent.shape == (1, 3, 16, 16) and up is None


def test_generator_shapes_and_determinism(rng):
    spec = M.GeneratorSpec.desk()
    params = M.init_generator(spec, rng)
    pyr = [l[None] for l in gaussian_pyramid(rng.random((3, 64, 64)), 3)]
    a = M.generator_forward(pyr, params, spec)
    b = M.generator_forward(pyr, params, spec)
    assert [x.shape[-1] for x in a] == [64, 32, 16]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_paper_pyramid_shapes_cheap_spec(rng):
    """256/128/64 pyramid through the three-scale topology (thin layers to stay fast)."""
    spec = M.GeneratorSpec(scales=3, resblocks=1, channels=4)
    params = M.init_generator(spec, rng)
    pyr = [l[None] for l in gaussian_pyramid(rng.random((3, 256, 256)), 3)]
    assert [x.shape for x in M.generator_forward(pyr, params, spec)] == [
        (1, 3, 256, 256), (1, 3, 128, 128), (1, 3, 64, 64)]


def test_generator_rejects_bad_pyramid(rng):
    spec = M.GeneratorSpec.desk()
    params = M.init_generator(spec, rng)
    with pytest.raises(ShapeError):
        M.generator_forward([np.zeros((1, 3, 32, 32)), np.zeros((1, 3, 16, 16))], params, spec)
    with pytest.raises(ShapeError):
        M.generator_forward([np.zeros((1, 3, 32, 32)), np.zeros((1, 3, 15, 15)), np.zeros((1, 3, 8, 8))],
                            params, spec)


def test_generator_gradcheck():
    assert check_generator(seed=1).passed


def test_zero_tail_residual_is_passthrough(rng):
    spec = M.GeneratorSpec(residual_output=True, tail_init="zero")
    params = M.init_generator(spec, rng)
    pyr = [l[None] for l in gaussian_pyramid(rng.random((3, 32, 32)), 3)]
    for lat, b in zip(M.generator_forward(pyr, params, spec), pyr):
        np.testing.assert_array_equal(lat, b)


def test_residual_generator_gradcheck():
    spec = M.GeneratorSpec(residual_output=True)
    assert check_generator(seed=2, spec=spec, samples=6).passed


def test_tail_init_zero_keeps_other_draws(rng):
    a = M.init_generator(M.GeneratorSpec(tail_init="he"), np.random.default_rng(0))
    b = M.init_generator(M.GeneratorSpec(tail_init="zero"), np.random.default_rng(0))
    for k in a:
        if ".tail." in k:
            assert not b[k].any()
        else:
            np.testing.assert_array_equal(a[k], b[k])


def test_spec_validation():
    with pytest.raises(ValueError):
        M.GeneratorSpec(kernel_size=4)
    with pytest.raises(ValueError):
        M.GeneratorSpec(tail_init="xavier")
    with pytest.raises(ValueError):
        M.GeneratorSpec(scales=0)


def test_init_generator_fan_in_bounds():
    spec = M.GeneratorSpec.desk()
    params = M.init_generator(spec, np.random.default_rng(0))
    w = params["s1.head.w"]
    assert np.abs(w).max() <= np.sqrt(6 / (19 * 25))
    assert not params["s1.head.b"].any()


# discriminator --------------------------------------------------------------


def test_paper_discriminator_trace():
    spec = M.DiscriminatorSpec.paper()
    assert spec.spatial_trace(256) == [128, 128, 64, 64, 32, 32, 8, 8, 2, 1]
    assert spec.convs[-1][0] == 1024


def test_desk_discriminator_zero_weights_half(rng):
    spec = M.DiscriminatorSpec.desk()
    params = {k: np.zeros_like(v) for k, v in M.init_discriminator(spec, rng).items()}
    prob = M.discriminator_forward(rng.random((3, 3, 64, 64)), params, spec)
    np.testing.assert_array_equal(prob, 0.5)


def test_discriminator_wrong_size_rejected(rng):
    spec = M.DiscriminatorSpec.desk()
    params = M.init_discriminator(spec, rng)
    with pytest.raises(ShapeError):
        M.discriminator_forward(rng.random((1, 3, 512, 512)), params, spec)


def test_discriminator_gradcheck():
    assert check_discriminator(seed=4).passed


def test_discriminator_spec_round_trip():
    spec = M.DiscriminatorSpec.desk()
    assert M.DiscriminatorSpec.from_dict(spec.to_dict()) == spec


# analysis -------------------------------------------------------------------


def test_receptive_fields():
    assert M.receptive_field(M.GeneratorSpec.paper()) == 161
    assert M.stacked_receptive_field(1, 5) == 5
    assert M.receptive_field(M.GeneratorSpec(resblocks=2)) == 25


def test_paper_audit():
    audit = M.architecture_audit(M.GeneratorSpec.paper())
    assert audit["conv_layers_per_scale"] == {1: 40, 2: 40, 3: 40}
    assert audit["conv_layers_total"] == 120
    assert audit["resblocks_per_scale"] == 19
    assert audit["filter_sizes"] == [(5, 5)]
    assert audit["feature_channels"] == 64
    assert audit["normalization_layers"] == 0
    assert audit["upconv_layers"] == 2


def test_param_shapes_consistent():
    spec = M.GeneratorSpec.desk()
    params = M.init_generator(spec, np.random.default_rng(0))
    M.check_params(params, M.generator_param_shapes(spec))
    params.pop("s1.tail.b")
    with pytest.raises(ShapeError):
        M.check_params(params, M.generator_param_shapes(spec))
