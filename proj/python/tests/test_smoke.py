import numpy as np
import pytest

import pixadapt


def test_feature_map_round_trip(tmp_path):
    data = np.random.default_rng(0).normal(size=(4, 5, 3)).astype(np.float32)
    path = tmp_path / "m.pxf"
    pixadapt.write_feature_map(data, path)
    np.testing.assert_array_equal(pixadapt.read_feature_map(path), data)


def test_label_mask_round_trip(tmp_path):
    labels = np.zeros((6, 7), dtype=np.uint8)
    labels[1:3, 2:5] = 2
    pixadapt.write_label_mask(labels, tmp_path / "m.pxm", label_count=3)
    back, count = pixadapt.read_label_mask(tmp_path / "m.pxm")
    assert count == 3
    np.testing.assert_array_equal(back, labels)


def test_missing_file_raises():
    with pytest.raises(pixadapt.PixadaptError, match="missing"):
        pixadapt.read_feature_map("/nonexistent/missing.pxf")


def test_interpolation_and_normalisation():
    grid = np.array([[[0.0]], [[1.0]]], dtype=np.float32)
    out = pixadapt.interpolate_patch_grid(grid, 4, 1)
    np.testing.assert_allclose(out[:, 0, 0], [0.0, 0.25, 0.75, 1.0])
    unit = pixadapt.l2_normalize(np.array([[[3.0, 4.0]]], dtype=np.float32))
    np.testing.assert_allclose(unit[0, 0], [0.6, 0.8])


def test_metrics_and_post_processing():
    a = np.zeros((6, 6), dtype=np.uint8)
    b = np.zeros((6, 6), dtype=np.uint8)
    a[1:3, 1:3] = 1
    b[1:3, 2:4] = 1
    assert pixadapt.iou(a, b) == pytest.approx(1.0 / 3.0)
    assert pixadapt.localization_accuracy([(0, 0), None], [(6, 8), (1, 1)]) == 0.0
    square = np.zeros((7, 7), dtype=np.uint8)
    square[2:5, 2:5] = 1
    square[0, 6] = 1
    filtered = pixadapt.filter_components(square)
    assert filtered.sum() == 9
    assert pixadapt.landmark_from_mask(filtered, 1) == (3, 3)
    assert len(pixadapt.select_prompts(filtered, 1, 10, seed=1)) == 9


def test_basic_adapter_and_refiner_on_fixture():
    slices = pixadapt.synth_scenario("separable", seed=3)
    features, mask, intensity = slices[0]
    assert features.shape == (64, 64, 32)
    template_mask = (mask == 1).astype(np.uint8)
    pred, scores = pixadapt.basic_localize(features, template_mask, 1, features, 0.5)
    assert scores.shape == (64, 64, 1)
    assert pixadapt.iou(pred, template_mask) > 0.9
    image = np.zeros((16, 16), dtype=np.float32)
    image[4:9, 5:11] = 1.0
    grown = pixadapt.mock_refine(image, [(6, 7)], tolerance=0.5)
    np.testing.assert_array_equal(grown, (image > 0.5).astype(np.uint8))


def test_cli_entry_point(tmp_path):
    code, out, _ = pixadapt.run_cli(["synth", "--scenario", "confound", "--output", str(tmp_path)])
    assert code == 0
    code, out, _ = pixadapt.run_cli(["inspect", str(tmp_path / "slice_000.pxf")])
    assert code == 0 and "dim=32" in out
    code, _, err = pixadapt.run_cli(["synth", "--threshold", "3"])
    assert code == 2 and "threshold" in err
