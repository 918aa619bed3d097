import json

import numpy as np
import pytest

from g0reg.errors import DomainError
from g0reg.raster import (
    DIST_LAYERS,
    REGRESS_LAYERS,
    MapStack,
    Raster,
    pooled_ratios,
    ratio_adequacy,
    synthetic_distribution_scene,
    synthetic_regression_scene,
    window_distribution_maps,
    window_regression_maps,
)


@pytest.fixture(scope="module")
def dist_maps():
    r = synthetic_distribution_scene(128, 128, alpha=-5.0, mu=1.0, looks=4.0, seed=1)
    return window_distribution_maps(r, "HH", 7, stride=4)


class TestIO:
    def test_raster_roundtrip(self, tmp_path):
        r = synthetic_regression_scene(9, 5, seed=3)
        bin_path = r.write(tmp_path / "scene.json")
        meta = json.loads((tmp_path / "scene.json").read_text())
        assert meta["dtype"] == "f32le"
        assert meta["channels"] == ["HV", "VV"]
        raw = np.fromfile(bin_path, dtype="<f4")
        assert raw.size == 9 * 5 * 2
        np.testing.assert_array_equal(raw.reshape(2, 5, 9), r.data)
        back = Raster.read(tmp_path / "scene.json")
        np.testing.assert_array_equal(back.data, r.data)
        assert (back.width, back.height, back.looks) == (9, 5, r.looks)

    def test_mapstack_roundtrip(self, tmp_path):
        ms = MapStack({"a": np.arange(6.0).reshape(2, 3), "converged": np.ones((2, 3))}, 7, 1, 4.0)
        ms.write(tmp_path / "m.json")
        back = MapStack.read(tmp_path / "m.json")
        assert list(back.layers) == ["a", "converged"]
        np.testing.assert_array_equal(back.layers["a"], ms.layers["a"])
        assert (back.window, back.stride, back.looks) == (7, 1, 4.0)

    def test_layer_csv(self, tmp_path):
        ms = MapStack({"a": np.array([[1.0, 2.0]]), "converged": np.ones((1, 2))}, 3, 1, 1.0)
        ms.layer_csv("a", tmp_path / "a.csv")
        assert (tmp_path / "a.csv").read_text().splitlines() == ["x,y,value", "0,0,1.0", "1,0,2.0"]

    @pytest.mark.parametrize(
        "data", [np.ones((1, 2, 3)), np.full((1, 3, 2), -1.0), np.full((1, 3, 2), np.nan)]
    )
    def test_invalid(self, data):
        with pytest.raises(DomainError):
            Raster(2, 3, ["HH"], data, 1.0)

    def test_unknown_channel(self):
        r = synthetic_distribution_scene(8, 8, seed=0)
        with pytest.raises(DomainError):
            window_distribution_maps(r, "VV", 3)


class TestDistributionMaps:
    def test_layers_and_shape(self, dist_maps):
        assert list(dist_maps.layers) == list(DIST_LAYERS)
        assert dist_maps.shape == (128, 128)

    def test_estimates(self, dist_maps):
        ok = dist_maps.layers["converged"] == 1
        # the layer mean is dominated by windows with no finite MLE, so the median is checked
        assert np.median(dist_maps.layers["alpha"][ok]) == pytest.approx(-5.0, rel=0.15)
        assert np.mean(dist_maps.layers["mu"][ok]) == pytest.approx(1.0, rel=0.03)
        np.testing.assert_allclose(
            dist_maps.layers["gamma"][ok], dist_maps.layers["mu"][ok] * (-dist_maps.layers["alpha"][ok] - 1), rtol=1e-12
        )

    def test_few_masked(self, dist_maps):
        assert dist_maps.masked_fraction() < 0.05

    def test_stationary(self, dist_maps):
        mu = dist_maps.layers["mu"][::4, ::4]
        left, right = mu[:, :16].ravel(), mu[:, 16:].ravel()
        left, right = left[np.isfinite(left)], right[np.isfinite(right)]
        se = np.sqrt(left.var(ddof=1) / left.size + right.var(ddof=1) / right.size)
        assert abs(left.mean() - right.mean()) < 3 * se

    def test_stride_blocks(self, dist_maps):
        mu = dist_maps.layers["mu"]
        np.testing.assert_array_equal(mu[:4, :4], np.full((4, 4), mu[0, 0]))

    def test_constant_image_masked(self):
        r = Raster(10, 10, ["HH"], np.full((1, 10, 10), 0.7), 4.0)
        ms = window_distribution_maps(r, "HH", 3)
        assert ms.masked_fraction() == 1.0
        assert np.all(np.isnan(ms.layers["alpha"]))

    def test_worker_invariance(self):
        r = synthetic_distribution_scene(14, 12, seed=5)
        one = window_distribution_maps(r, "HH", 5, workers=1, chunk_rows=3)
        two = window_distribution_maps(r, "HH", 5, workers=2, chunk_rows=3)
        for k in DIST_LAYERS:
            np.testing.assert_array_equal(one.layers[k], two.layers[k])

    def test_translation_equivariance(self):
        r = synthetic_distribution_scene(24, 20, seed=6)
        sub = lambda y, x: Raster(16, 12, ["HH"], r.data[:, y : y + 12, x : x + 16], r.looks)
        a = window_distribution_maps(sub(0, 0), "HH", 5).layers
        b = window_distribution_maps(sub(3, 5), "HH", 5).layers
        # pixels whose window lies inside both crops
        for k in ("alpha", "mu"):
            np.testing.assert_allclose(a[k][5:10, 7:14], b[k][2:7, 2:9], rtol=1e-5)

    @pytest.mark.parametrize("window", [4, 1])
    def test_window_validated(self, window):
        r = synthetic_distribution_scene(8, 8, seed=0)
        with pytest.raises(DomainError):
            window_distribution_maps(r, "HH", window)


class TestRegressionMaps:
    def test_coupling_recovered(self):
        r = synthetic_regression_scene(48, 48, beta=(-2.0, 10.0), seed=7)
        ms = window_regression_maps(r, "VV", "HV", 11, stride=3)
        assert list(ms.layers) == list(REGRESS_LAYERS)
        ok = ms.layers["converged"] == 1
        assert np.median(ms.layers["beta0"][ok]) == pytest.approx(-2.0, rel=0.1)
        assert np.median(ms.layers["beta1"][ok]) == pytest.approx(10.0, rel=0.1)
        fit = ok[::3, ::3]
        prod = ms.layers["ratio"][::3, ::3] * ms.layers["predicted"][::3, ::3]
        np.testing.assert_allclose(prod[fit], r.channel("VV")[::3, ::3][fit], rtol=1e-12)

    def test_null_coupling(self):
        r = synthetic_regression_scene(55, 55, beta=(0.0, 0.0), seed=8)
        # non-overlapping windows give independent slope estimates
        ms = window_regression_maps(r, "VV", "HV", 11, stride=11)
        b1 = ms.layers["beta1"][::11, ::11]
        b1 = b1[np.isfinite(b1)]
        se_median = 1.2533 * b1.std(ddof=1) / np.sqrt(b1.size)
        assert abs(np.median(b1)) < 1.96 * se_median

    def test_ratio_adequacy_calibrated(self):
        passed = 0
        for seed in range(20):
            r = synthetic_regression_scene(24, 24, seed=100 + seed)
            ms = window_regression_maps(r, "VV", "HV", 11, stride=2)
            passed += ratio_adequacy(ms)[2] > 0.05
        assert passed >= 18

    def test_pooled_ratios_skip_stride_copies(self):
        ratio = np.arange(16.0).reshape(4, 4) + 1
        ms = MapStack({"ratio": ratio, "converged": np.ones((4, 4))}, 3, 2, 1.0)
        np.testing.assert_array_equal(pooled_ratios(ms), [1.0, 3.0, 9.0, 11.0])

    def test_perfect_fit_degenerate(self):
        ms = MapStack({"ratio": np.ones((5, 5)), "converged": np.ones((5, 5))}, 3, 1, 3.0)
        with pytest.raises(DomainError):
            ratio_adequacy(ms)

    def test_missing_ratio_layer(self, dist_maps):
        with pytest.raises(DomainError):
            ratio_adequacy(dist_maps)
