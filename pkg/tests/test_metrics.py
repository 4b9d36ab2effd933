import math

import numpy as np
import pytest

from topdown.metrics import (
    ConstantModel, MetricReport, OracleModel, ScaleMismatchError, evaluate_model, gaussian_window,
    psnr, reports_to_csv, reports_to_table, sample_pairs, ssim, summarize, to_luma,
)


def psnr_loop(a, b, peak=1.0):
    total = 0.0
    n = 0
    for idx in np.ndindex(a.shape):
        d = float(a[idx]) - float(b[idx])
        total += d * d
        n += 1
    return 10.0 * math.log10(peak * peak / (total / n))


def ssim_loop(a, b, size=11, sigma=1.5, L=1.0):
    """Direct per-window SSIM with explicit Gaussian weights."""
    wa = [[0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] for p in row] for row in a.tolist()]
    wb = [[0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] for p in row] for row in b.tolist()]
    half = (size - 1) / 2.0
    g = [math.exp(-((i - half) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    tot = sum(g)
    g = [v / tot for v in g]
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    H, W = len(wa), len(wa[0])
    vals = []
    for r in range(H - size + 1):
        for c in range(W - size + 1):
            mx = my = sxx = syy = sxy = 0.0
            for i in range(size):
                for j in range(size):
                    w = g[i] * g[j]
                    x, y = wa[r + i][c + j], wb[r + i][c + j]
                    mx += w * x
                    my += w * y
                    sxx += w * x * x
                    syy += w * y * y
                    sxy += w * x * y
            vx, vy, cov = sxx - mx * mx, syy - my * my, sxy - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def test_psnr_matches_loop(rng):
    for _ in range(10):
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        assert psnr(a, b) == pytest.approx(psnr_loop(a, b), abs=1e-9)


def test_psnr_identical_is_inf():
    a = np.full((8, 8, 3), 0.3)
    assert psnr(a, a) == math.inf


def test_psnr_zero_db_case():
    # black vs white: MSE = 1 = peak^2
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == pytest.approx(0.0, abs=1e-12)


def test_psnr_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_ssim_matches_loop(rng):
    for _ in range(5):
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-9)


def test_ssim_identical_is_one(rng):
    a = rng.random((16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images():
    # mu_a = 0, mu_b = 1, no variance: C1 / (1 + C1)
    c1 = 1e-4
    assert ssim(np.zeros((16, 16, 3)), np.ones((16, 16, 3))) == pytest.approx(c1 / (1 + c1), abs=1e-12)


def test_ssim_symmetric_and_bounded(rng):
    a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_too_small_raises():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_gaussian_window_normalized():
    w = gaussian_window(11, 1.5)
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(w, w.T)


def test_luma_weights():
    img = np.zeros((2, 2, 3))
    img[..., 1] = 1.0
    assert np.allclose(to_luma(img), 0.587)


def test_summarize_population_std_and_inf():
    stats = summarize([10.0, 20.0, math.inf], [0.5, 0.7, 1.0])
    assert stats.psnr_mean == 15.0
    assert stats.psnr_std == 5.0  # population, not sample
    assert stats.psnr_inf_count == 1
    assert stats.count == 3
    assert stats.ssim_mean == pytest.approx(2.2 / 3)


def test_table_and_csv_layout():
    rep = MetricReport("baseline", "baseline", 64, {"train": summarize([30.0, 32.0], [0.7, 0.9]),
                                                    "test": summarize([20.0], [0.5])})
    flagged = MetricReport("conv2d1d", "conv2d1d", 64, dict(rep.splits), flags=["known-nonlearning"])
    row = rep.row()
    assert row["psnr_train"] == "31.0 ± 1.0"
    assert row["ssim_train"] == "0.8000 ± 0.1000"
    table = reports_to_table([rep, flagged])
    lines = table.strip().splitlines()
    assert lines[0].split("|")[0].strip() == "Method"
    assert len(lines) == 4
    assert "known-nonlearning" in lines[3]
    csv_text = reports_to_csv([rep, flagged])
    assert csv_text.splitlines()[0].startswith("method,psnr_train,psnr_test,ssim_train,ssim_test")


def test_sample_pairs_deterministic(episodes):
    a = sample_pairs(episodes, 10, seed=3)
    assert a == sample_pairs(episodes, 10, seed=3)
    assert len(set(a)) == 10
    assert len(sample_pairs(episodes, 10_000, seed=3)) == sum(len(e) for e in episodes)


def test_oracle_model_scores_perfectly(episodes):
    oracle = OracleModel(episodes)
    rep = evaluate_model(oracle, {"train": episodes[:2], "test": episodes[2:]}, n_samples=16)
    assert rep.splits["test"].ssim_mean == pytest.approx(1.0)
    assert rep.splits["train"].psnr_inf_count == rep.splits["train"].count


def test_scale_mismatch(episodes):
    model = ConstantModel(np.zeros((32, 32, 3), np.float32))
    with pytest.raises(ScaleMismatchError):
        evaluate_model(model, {"train": episodes}, expected_scale=64)
    rep = evaluate_model(model, {"train": episodes}, expected_scale=None, n_samples=4)
    assert rep.scale == 32


def test_empty_split_rejected(episodes):
    with pytest.raises(ValueError):
        evaluate_model(OracleModel(episodes), {"train": episodes, "test": []})
