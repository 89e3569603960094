"""Metrics, binned summaries, heatmap bytes and report artefacts."""

import json

import numpy as np
import pytest

from insarcast.errors import EmptyInput, LengthMismatch, SpecMismatch, ZeroVariance
from insarcast.evaluate import (
    bin_indices,
    binned_mae,
    binned_residual_boxstats,
    box_stats,
    build_report,
    compute_metrics,
    mse,
    r2,
    render_heatmap,
    residuals,
    rmse,
    write_residuals_csv,
    write_scatter_csv,
)
from insarcast.grid import DisplacementMap, GridSpec


class TestPointMetrics:
    def test_mse_hand_example(self):
        assert mse([0.0, 0.0, 0.0], [1.0, 2.0, 0.0]) == pytest.approx(5.0 / 3.0)

    def test_rmse_is_sqrt_of_mse(self):
        y_true = [1.0, 2.0, 3.0, 4.0]
        y_pred = [1.5, 1.0, 3.25, 4.0]
        assert rmse(y_true, y_pred) == pytest.approx(
            np.sqrt(mse(y_true, y_pred)), rel=1e-15
        )

    def test_r2_perfect_and_mean_and_worse(self):
        y = [1.0, 2.0, 3.0]
        assert r2(y, y) == 1.0
        assert r2(y, [2.0, 2.0, 2.0]) == 0.0
        # reversed predictions: ss_res = 8, ss_tot = 2, so R^2 = -3 (unclamped)
        assert r2(y, [3.0, 2.0, 1.0]) == pytest.approx(-3.0)

    def test_r2_rejects_constant_truth(self):
        with pytest.raises(ZeroVariance):
            r2([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])

    def test_residual_sign_is_prediction_minus_truth(self):
        np.testing.assert_allclose(
            residuals([1.0, 2.0], [3.0, 0.0]), [2.0, -2.0]
        )

    def test_length_mismatch_and_empty(self):
        with pytest.raises(LengthMismatch):
            mse([1.0, 2.0], [1.0])
        with pytest.raises(EmptyInput):
            mse([], [])

    def test_compute_metrics_record(self):
        rec = compute_metrics("gbdt", [1.0, 2.0, 3.0], [1.0, 2.5, 3.0])
        assert rec.model == "gbdt"
        assert rec.n_samples == 3
        assert rec.rmse**2 == pytest.approx(rec.mse, rel=1e-15)
        d = rec.to_dict()
        assert set(d) == {"model", "n_samples", "mse", "rmse", "r2"}


class TestBinning:
    def test_bin_indices_floor_and_clip(self):
        idx, edges = bin_indices(np.array([0.0, 1.0, 2.0, 3.0]), 2)
        np.testing.assert_array_equal(idx, [0, 0, 1, 1])
        np.testing.assert_allclose(edges, [0.0, 1.5, 3.0])

    def test_constant_truth_lands_in_last_bin(self):
        idx, edges = bin_indices(np.full(5, 2.0), 3)
        np.testing.assert_array_equal(idx, [2, 2, 2, 2, 2])
        assert edges[0] == edges[-1] == 2.0

    def test_rejects_zero_bins(self):
        with pytest.raises(EmptyInput):
            bin_indices(np.array([1.0]), 0)

    def test_binned_mae_hand_example(self):
        y_true = [0.0, 0.0, 10.0, 10.0]
        y_pred = [1.0, -1.0, 13.0, 10.0]
        stats = binned_mae(y_true, y_pred, n_bins=2)
        assert stats.n_bins == 2
        assert stats.counts == [2, 2]
        assert stats.bins[0].mae == pytest.approx(1.0)
        assert stats.bins[1].mae == pytest.approx(1.5)

    def test_empty_bin_carries_no_statistics(self):
        stats = binned_mae([0.0, 0.0, 10.0], [0.0, 0.0, 10.0], n_bins=3)
        assert stats.counts == [2, 0, 1]
        middle = stats.bins[1]
        assert middle.count == 0
        assert middle.mae is None and middle.median is None
        assert middle.outliers is None

    def test_boxstats_share_bins_with_mae(self):
        y_true = np.linspace(0.0, 1.0, 40)
        y_pred = y_true + np.sin(np.arange(40))
        a = binned_mae(y_true, y_pred, n_bins=4)
        b = binned_residual_boxstats(y_true, y_pred, n_bins=4)
        assert a.bin_edges == b.bin_edges
        assert a.counts == b.counts
        assert all(bin_.median is not None for bin_ in a.bins)

    def test_to_dict_round_trips_through_json(self):
        stats = binned_mae([0.0, 1.0], [0.5, 1.5], n_bins=2)
        blob = json.dumps(stats.to_dict())
        back = json.loads(blob)
        assert back["bins"][0]["count"] == 1


class TestBoxStats:
    def test_tukey_hand_example(self):
        box = box_stats([1.0, 2.0, 3.0, 4.0, 100.0])
        assert box["q1"] == pytest.approx(2.0)
        assert box["median"] == pytest.approx(3.0)
        assert box["q3"] == pytest.approx(4.0)
        assert box["whisker_low"] == pytest.approx(1.0)
        assert box["whisker_high"] == pytest.approx(4.0)
        assert box["outliers"] == [100.0]

    def test_no_outliers_whiskers_hit_extremes(self):
        box = box_stats([1.0, 2.0, 3.0, 4.0, 5.0])
        assert box["whisker_low"] == 1.0
        assert box["whisker_high"] == 5.0
        assert box["outliers"] == []

    def test_outliers_are_sorted(self):
        box = box_stats([0.0] * 8 + [50.0, -60.0, 40.0])
        assert box["outliers"] == [-60.0, 40.0, 50.0]

    def test_empty_sample_rejected(self):
        with pytest.raises(EmptyInput):
            box_stats([])


class TestHeatmap:
    def test_exact_bytes_for_known_field(self):
        arr = np.array([[0.0, 2.0], [-2.0, 1.0]])
        blob = render_heatmap(arr, vmax=2.0)
        header = b"P6\n2 2\n255\n"
        assert blob.startswith(header)
        pixels = blob[len(header):]
        assert pixels == bytes(
            [255, 255, 255,  # zero -> white
             255, 0, 0,      # +vmax -> red
             0, 0, 255,      # -vmax -> blue
             255, 128, 128]  # +vmax/2 -> half-faded red
        )

    def test_values_beyond_range_clamp(self):
        hot = render_heatmap(np.array([[9.0]]), vmax=1.0)
        assert hot.endswith(bytes([255, 0, 0]))
        cold = render_heatmap(np.array([[-9.0]]), vmax=1.0)
        assert cold.endswith(bytes([0, 0, 255]))

    def test_default_range_is_symmetric_max_abs(self):
        arr = np.array([[-4.0, 2.0]])
        assert render_heatmap(arr) == render_heatmap(arr, vmax=4.0)

    def test_degenerate_range_renders_white(self):
        blob = render_heatmap(np.zeros((2, 3)))
        assert blob.endswith(bytes([255, 255, 255] * 6))

    def test_accepts_displacement_map(self):
        spec = GridSpec(height=2, width=2, min_easting=0.0, max_easting=1.0,
                        min_northing=0.0, max_northing=1.0)
        field = DisplacementMap(spec=spec, values=np.ones((2, 2)))
        assert render_heatmap(field, vmax=1.0) == render_heatmap(
            np.ones((2, 2)), vmax=1.0
        )

    def test_rejects_non_2d_input(self):
        with pytest.raises(EmptyInput):
            render_heatmap(np.zeros(4))


class TestCsvArtefacts:
    def test_scatter_layout(self, tmp_path):
        path = tmp_path / "scatter.csv"
        write_scatter_csv(path, [1.0, 2.0], [1.5, 2.5])
        lines = path.read_text().splitlines()
        assert lines[0] == "truth,prediction"
        assert lines[1] == "1.000000000,1.500000000"

    def test_residuals_layout(self, tmp_path):
        path = tmp_path / "residuals.csv"
        write_residuals_csv(path, [1.0, 2.0], [1.5, 1.0])
        lines = path.read_text().splitlines()
        assert lines[0] == "truth,residual"
        assert lines[1] == "1.000000000,0.500000000"
        assert lines[2] == "2.000000000,-1.000000000"


class TestBuildReport:
    def make_maps(self):
        rng = np.random.default_rng(9)
        truth = rng.normal(size=(8, 8))
        preds = {
            "cnn_lstm": truth + 0.01 * rng.normal(size=(8, 8)),
            "gbdt": truth + 0.1 * rng.normal(size=(8, 8)),
        }
        return truth, preds

    def test_artefacts_and_metrics(self, tmp_path):
        truth, preds = self.make_maps()
        val_pixels = np.arange(0, 64, 3)
        metrics = build_report(truth, preds, tmp_path, n_bins=4,
                               val_pixels=val_pixels,
                               extra={"grid": {"height": 8, "width": 8}})
        assert metrics["grid"] == {"height": 8, "width": 8}
        assert list(metrics["models"]) == ["cnn_lstm", "gbdt"]
        for name in preds:
            entry = metrics["models"][name]
            assert entry["full"]["n_samples"] == 64
            assert entry["validation"]["n_samples"] == val_pixels.size
            assert (tmp_path / f"scatter_{name}.csv").exists()
            assert (tmp_path / f"residuals_{name}.csv").exists()
            assert (tmp_path / f"bins_{name}.json").exists()
            assert (tmp_path / f"heatmap_{name}.ppm").exists()
            assert (tmp_path / f"heatmap_diff_{name}.ppm").exists()
        assert (tmp_path / "heatmap_truth.ppm").exists()
        on_disk = json.loads((tmp_path / "metrics.json").read_text())
        assert on_disk == metrics

    def test_models_keep_input_order_in_json_text(self, tmp_path):
        truth, preds = self.make_maps()
        build_report(truth, preds, tmp_path)
        text = (tmp_path / "metrics.json").read_text()
        assert text.index('"cnn_lstm"') < text.index('"gbdt"')

    def test_shape_mismatch_rejected(self, tmp_path):
        truth, _ = self.make_maps()
        with pytest.raises(SpecMismatch):
            build_report(truth, {"bad": np.zeros((4, 4))}, tmp_path)
        with pytest.raises(SpecMismatch):
            build_report(truth, {"bad": None}, tmp_path)

    def test_validation_metrics_differ_from_full(self, tmp_path):
        truth, preds = self.make_maps()
        metrics = build_report(truth, preds, tmp_path,
                               val_pixels=np.arange(4))
        entry = metrics["models"]["gbdt"]
        assert entry["validation"]["mse"] != entry["full"]["mse"]
