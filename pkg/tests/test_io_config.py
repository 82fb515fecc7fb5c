from fractions import Fraction

import numpy as np
import pytest
import torch

from trajcodec import ModelConfig, TrajectoryCodecModel, build_model
from trajcodec.config import ConfigError, load_checkpoint, parse_key_values
from trajcodec.video_io import read_raw_video, read_video, read_y4m, to_tensor, to_uint8, write_raw_video


def test_raw_video_round_trip(tmp_path, rng):
    frames = rng.integers(0, 256, (3, 8, 12, 3), dtype=np.uint8)
    write_raw_video(tmp_path / "v.rgb", frames, Fraction(30000, 1001))
    video = read_raw_video(tmp_path / "v.rgb")
    assert np.array_equal(video.frames, frames) and video.fps == Fraction(30000, 1001)
    # planar layout: first plane is the red channel of frame 0
    assert (tmp_path / "v.rgb").read_bytes()[:96] == frames[0, :, :, 0].tobytes()
    (tmp_path / "v.rgb").write_bytes(b"short")
    with pytest.raises(ValueError):
        read_raw_video(tmp_path / "v.rgb")


def _y4m(path, w, h, planes_per_frame, chroma):
    data = f"YUV4MPEG2 W{w} H{h} F25:1 Ip A1:1 C{chroma}\n".encode()
    for planes in planes_per_frame:
        data += b"FRAME\n" + b"".join(p.astype(np.uint8).tobytes() for p in planes)
    path.write_bytes(data)


def test_y4m_gray_and_colour(tmp_path):
    y = np.full((4, 4), 126)
    c = np.full((2, 2), 128)
    _y4m(tmp_path / "g.y4m", 4, 4, [(y, c, c)] * 2, "420jpeg")
    video = read_video(tmp_path / "g.y4m")
    assert video.frames.shape == (2, 4, 4, 3) and video.fps == 25
    assert np.all(video.frames == round((126 - 16) * 255 / 219))
    # pure red in BT.601 limited range
    _y4m(tmp_path / "r.y4m", 2, 2, [(np.full((2, 2), 81), np.full((2, 2), 90), np.full((2, 2), 240))], "444")
    red = read_y4m(tmp_path / "r.y4m").frames[0, 0, 0]
    assert red[0] >= 253 and red[1] <= 2 and red[2] <= 2


def test_tensor_conversion(rng):
    frames = rng.integers(0, 256, (2, 5, 5, 3), dtype=np.uint8)
    t = to_tensor(frames)
    assert t.shape == (2, 3, 5, 5) and np.array_equal(to_uint8(t), frames)


def test_config_defaults_and_validation():
    cfg = ModelConfig()
    assert (cfg.num_features, cfg.num_fg, cfg.num_bg, cfg.grid_size) == (20, 35, 5, 96)
    assert ModelConfig(max_resolution=768, depth=3, num_resolutions=3).resolutions == [768, 384, 192]
    for bad in (dict(num_features=0), dict(depth=0), dict(max_resolution=100), dict(num_resolutions=3),
                dict(max_resolution=4, depth=2)):
        with pytest.raises(ConfigError):
            ModelConfig(**bad)
    assert ModelConfig.from_header(cfg.to_header()) == cfg


def test_parse_key_values():
    assert parse_key_values("# comment\na = 1\n\nb=x=y\n") == {"a": "1", "b": "x=y"}
    with pytest.raises(ConfigError):
        parse_key_values("novalue\n")


def test_checkpoint_round_trip(tmp_path, toy_config):
    model = build_model(toy_config, seed=4)
    model.save(tmp_path / "m.ckpt", epoch=3)
    loaded = TrajectoryCodecModel.load(tmp_path / "m.ckpt")
    assert loaded.config == toy_config
    for (na, a), (nb, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert na == nb and torch.equal(a, b)
    assert load_checkpoint(tmp_path / "m.ckpt")[2]["epoch"] == "3"
    (tmp_path / "bad.ckpt").write_bytes(b"format=other\n\n")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "bad.ckpt")
