import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from trajcodec import InputError, ModelConfig
from trajcodec.config import ConfigError
from trajcodec.factorizer import Factorizer, motion_transform

from oracles import motion_transform_loop


@pytest.fixture(scope="module")
def full_factorizer():
    torch.manual_seed(0)
    return Factorizer(ModelConfig(num_features=20, max_resolution=768, depth=3, num_resolutions=3)).eval()


def test_full_scale_shapes(full_factorizer):
    with torch.no_grad():
        latent, w, b = full_factorizer(torch.rand(1, 3, 384, 384))
    assert latent.shape == (1, 20, 96, 96)
    assert w.shape == (1, 20) and b.shape == (1, 20)


def test_grid_is_resolution_invariant(full_factorizer):
    with torch.no_grad():
        for size in (768, 384, 192):
            assert full_factorizer.extract_latent(torch.rand(1, 3, size, size)).shape[-2:] == (96, 96)


def test_toy_shapes(toy_config):
    f = Factorizer(toy_config).eval()
    with torch.no_grad():
        latent, w, b = f(torch.rand(2, 3, 64, 64))
    assert latent.shape == (2, 4, 16, 16) and w.shape == (2, 4) and b.shape == (2, 4)


def test_zero_frame_deterministic(toy_config):
    torch.manual_seed(3)
    f = Factorizer(toy_config).eval()
    with torch.no_grad():
        a = f.extract_latent(torch.zeros(1, 3, 64, 64))
        b = f.extract_latent(torch.zeros(1, 3, 64, 64))
        va = f.predict_motion_vectors(a)
        vb = f.predict_motion_vectors(a)
    assert torch.isfinite(a).all() and torch.equal(a, b)
    assert torch.equal(va[0], vb[0]) and torch.equal(va[1], vb[1])


def test_rejects_bad_frames(toy_config):
    f = Factorizer(toy_config).eval()
    with pytest.raises(InputError):
        f(torch.rand(1, 3, 64, 32))
    with pytest.raises(ConfigError):
        f(torch.rand(1, 3, 48, 48))
    bad = torch.rand(1, 3, 64, 64)
    bad[0, 0, 0, 0] = float("nan")
    with pytest.raises(InputError):
        f(bad)
    with pytest.raises(InputError):
        f.predict_motion_vectors(torch.rand(1, 3, 16, 16))


def test_identity_and_degenerate_transform(rng):
    latent = torch.from_numpy(rng.normal(size=(2, 5, 7, 7)))
    assert torch.equal(motion_transform(latent, torch.ones(2, 5, dtype=torch.float64),
                                        torch.zeros(2, 5, dtype=torch.float64)), latent)
    b = torch.from_numpy(rng.normal(size=(2, 5)))
    out = motion_transform(latent, torch.zeros(2, 5, dtype=torch.float64), b)
    assert torch.equal(out, b[..., None, None].expand_as(out))


def test_transform_matches_loop_oracle(rng):
    for _ in range(10):
        latent, w, b = rng.normal(size=(2, 4, 6, 6)), rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
        got = motion_transform(*(torch.from_numpy(x) for x in (latent, w, b))).numpy()
        assert np.abs(got - motion_transform_loop(latent, w, b)).max() <= 1e-12


def test_transform_shape_errors():
    with pytest.raises(InputError):
        motion_transform(torch.rand(1, 4, 3, 3), torch.rand(1, 3), torch.rand(1, 3))
    with pytest.raises(InputError):
        motion_transform(torch.rand(1, 4, 3, 3), torch.rand(1, 4), torch.rand(1, 2))


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.integers(0, 2**31 - 1))
def test_transform_joint_linearity(alpha, seed):
    g = torch.Generator().manual_seed(seed)
    latent = torch.randn(1, 3, 4, 4, generator=g, dtype=torch.float64)
    w, b = torch.randn(1, 3, generator=g, dtype=torch.float64), torch.randn(1, 3, generator=g, dtype=torch.float64)
    lhs = motion_transform(latent, alpha * w, alpha * b)
    rhs = alpha * motion_transform(latent, w, b)
    assert torch.allclose(lhs, rhs, atol=1e-12, rtol=1e-12)
