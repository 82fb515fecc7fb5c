import csv
import math
import sys
from fractions import Fraction

import numpy as np
import pytest

from trajcodec.metrics import EvaluationError, RDPoint, bd_rate, metric_adapter, psnr, rd_sweep, read_rd_csv
from trajcodec.synthetic import moving_disc_clip
from trajcodec.video_io import write_raw_video

from oracles import ANCHOR_CURVE, TEST_CURVE, bd_rate_fine_grid, psnr_loop


def test_psnr_cases(rng):
    x = rng.random((3, 8, 8, 3))
    assert psnr(x, x) == math.inf
    assert psnr(np.zeros((2, 4, 4, 3)), np.full((2, 4, 4, 3), 0.1)) == pytest.approx(20.0, abs=1e-9)
    a, b = rng.random((3, 6, 6, 3)), rng.random((3, 6, 6, 3))
    assert abs(psnr(a, b) - psnr_loop(a, b)) <= 1e-6
    u = rng.integers(0, 256, (2, 4, 4, 3), dtype=np.uint8)
    assert psnr(u, 255 - u) == pytest.approx(psnr_loop(u / 255, (255 - u) / 255), abs=1e-9)
    with pytest.raises(EvaluationError):
        psnr(a, b[:2])


def test_bd_rate_identity_and_scaling():
    assert abs(bd_rate(ANCHOR_CURVE, ANCHOR_CURVE)) <= 1e-9
    for k in (0.5, 2.0, 3.0):
        scaled = [(r * k, q) for r, q in ANCHOR_CURVE]
        assert abs(bd_rate(ANCHOR_CURVE, scaled) - (k - 1) * 100) <= 1e-9
        assert abs(bd_rate(ANCHOR_CURVE, scaled, method="cubic") - (k - 1) * 100) <= 1e-9


def test_bd_rate_matches_fine_grid_oracle():
    got = bd_rate(ANCHOR_CURVE, TEST_CURVE)
    assert abs(got - bd_rate_fine_grid(ANCHOR_CURVE, TEST_CURVE)) <= 0.1
    assert got == pytest.approx(-63.96, abs=0.01)  # frozen oracle value
    assert abs(bd_rate(ANCHOR_CURVE, TEST_CURVE, method="cubic") - got) < 1.0


def test_bd_rate_input_errors():
    with pytest.raises(EvaluationError):
        bd_rate(ANCHOR_CURVE[:3], TEST_CURVE)
    with pytest.raises(EvaluationError):
        bd_rate(ANCHOR_CURVE, [(0, 0.7), (1, 0.8), (2, 0.9), (3, 0.95)])
    with pytest.raises(EvaluationError):
        bd_rate(ANCHOR_CURVE, [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4)])
    with pytest.raises(EvaluationError):
        bd_rate(ANCHOR_CURVE, [(1, 0.7), (2, 0.7), (3, 0.8), (4, 0.9)])
    with pytest.raises(EvaluationError):
        bd_rate(ANCHOR_CURVE, TEST_CURVE, method="linear")
    assert bd_rate([RDPoint(*p) for p in ANCHOR_CURVE], TEST_CURVE) == bd_rate(ANCHOR_CURVE, TEST_CURVE)


def test_display_conventions():
    assert metric_adapter("dists").axis_label == "1-DISTS" and metric_adapter("dists").display(0.2) == 0.8
    assert metric_adapter("lpips").axis_label == "1-LPIPS"
    assert metric_adapter("fvd").display(1000.0) == 4000.0 and metric_adapter("fvd").axis_label == "5000-FVD"
    assert metric_adapter("psnr").higher_is_better and not metric_adapter("fvd").higher_is_better
    assert not metric_adapter("dists").available
    with pytest.raises(EvaluationError):
        metric_adapter("ssim")


@pytest.fixture
def sequence(tmp_path):
    path = tmp_path / "disc.rgb"
    write_raw_video(path, moving_disc_clip(3, 64, velocity=(3, 1)), 25)
    return path


def test_sweep_rows_and_plots(toy_model, sequence, tmp_path):
    fake = tmp_path / "fake_dists.py"
    fake.write_text("print('score', 0.25)\n")
    metrics = [metric_adapter("psnr"), metric_adapter("dists", f"{sys.executable} {fake} {{reference}} {{distorted}}"),
               metric_adapter("lpips")]
    out = tmp_path / "rd"
    rows = rd_sweep(toy_model, [sequence], [22, 32, 42, 52], [Fraction(1, 50)], metrics, out)
    assert len(rows) == 12
    with open(out / "rd.csv") as f:
        table = list(csv.DictReader(f))
    psnr_rows = [r for r in table if r["metric"] == "psnr"]
    assert len(psnr_rows) == 4 and all(r["missing"] == "0" for r in psnr_rows)
    dists = [r for r in table if r["metric"] == "dists"]
    assert all(float(r["display"]) == 0.75 for r in dists)
    assert all(r["missing"] == "1" for r in table if r["metric"] == "lpips")
    for m in ("psnr", "dists", "lpips"):
        assert (out / f"rd_{m}.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_rejects_empty_inputs(toy_model, sequence, tmp_path):
    out = tmp_path / "rd"
    with pytest.raises(EvaluationError):
        rd_sweep(toy_model, [], [22, 32], [0.02], [metric_adapter("psnr")], out)
    with pytest.raises(EvaluationError):
        rd_sweep(toy_model, [sequence], [22], [0.02], [metric_adapter("psnr")], out)
    with pytest.raises(EvaluationError):
        rd_sweep(toy_model, [sequence], [22, 32], [0.02], [], out)
    assert not out.exists()


def test_read_rd_csv(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("rate_kbps,quality\n" + "".join(f"{r},{q}\n" for r, q in ANCHOR_CURVE))
    assert read_rd_csv(path) == [RDPoint(r, q) for r, q in ANCHOR_CURVE]
