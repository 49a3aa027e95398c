import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from msdeblur import io
from msdeblur.config import RunConfig, preset


@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=4, max_side=5),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_tensor_round_trip(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("t") / "x.bin"
    io.save_tensor(path, x)
    y = io.load_tensor(path)
    assert y.shape == (1,) * (4 - x.ndim) + x.shape
    assert y.reshape(x.shape).tobytes() == x.tobytes()


def test_tensor_layout(tmp_path):
    io.save_tensor(tmp_path / "x", np.arange(6.0).reshape(2, 3))
    data = (tmp_path / "x").read_bytes()
    assert struct.unpack("<4q", data[:32]) == (1, 1, 2, 3)
    assert np.frombuffer(data[32:], "<f8").tolist() == [0, 1, 2, 3, 4, 5]


def test_image_round_trip(tmp_path, rng):
    img = np.round(rng.random((3, 9, 7)) * 255) / 255
    io.write_image(tmp_path / "a.png", img)
    np.testing.assert_array_equal(io.read_image(tmp_path / "a.png"), img)
    with pytest.raises(ValueError):
        io.write_image(tmp_path / "a.jpg", img)


def test_kv_parse_and_format():
    text = "# comment\na = 1\nb = 0.1  # trailing\n\nc = true\n"
    kv = io.read_kv(text, is_text=True)
    assert kv == {"a": "1", "b": "0.1", "c": "true"}
    assert io.parse_value("1e3", 0) == 1000
    assert io.parse_value("no", True) is False
    assert io.parse_value("[1, 2]", (0,)) == [1, 2]
    with pytest.raises(ValueError):
        io.parse_value("maybe", False)
    with pytest.raises(ValueError):
        io.read_kv("novalue", is_text=True)
    assert io.format_value(0.1) == "0.1" and io.format_value(False) == "false"


@pytest.mark.parametrize("name", ["desk", "paper"])
def test_config_echo_reproduces(name):
    cfg = preset(name).with_train(lr=3.3e-5, seed=7)
    text = cfg.to_text()
    assert RunConfig.from_kv(io.read_kv(text, is_text=True)) == cfg


def test_config_overrides_and_unknown_keys():
    cfg = RunConfig.from_kv({"train.batch_size": "2", "generator.channels": "8", "preset": "desk"})
    assert cfg.train.batch_size == 2 and cfg.generator.channels == 8
    for bad in ({"train.bogus": "1"}, {"nosection": "1"}, {"optim.lr": "1"}, {"preset": "huge"}):
        with pytest.raises(ValueError):
            RunConfig.from_kv(bad)
    with pytest.raises(ValueError):
        RunConfig.from_kv({"train.batch_size": "0"})


def test_config_covers_every_train_field():
    from msdeblur.config import train_field_names

    kv = preset("desk").to_kv()
    assert all(f"train.{n}" in kv for n in train_field_names())
