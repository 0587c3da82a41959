import numpy as np
import pytest
from PIL import Image

from src.errors import DegenerateScores
from src.experiment import CellResult
from src.plotting import phase_matrix, render_gap_plot, render_phase_heatmap


def cell(m, t, k, rate):
    return CellResult(m, t, k, 0, 1, rate, 0.0, 1.0, False)


def test_phase_matrix_layout():
    cells = [cell(1, 10, 1, 0.1), cell(1, 20, 1, 0.2), cell(5, 10, 1, 0.5), cell(5, 20, 1, 1.0)]
    matrix = phase_matrix(cells, [1, 5], [10, 20], 1)
    np.testing.assert_array_equal(matrix, [[0.1, 0.2], [0.5, 1.0]])


def test_phase_matrix_marks_missing_cells():
    cells = [cell(1, 10, 1, 0.3), cell(5, 20, 2, 0.9)]
    matrix = phase_matrix(cells, [1, 5], [10, 20], 1)
    assert matrix[0, 0] == 0.3
    assert np.isnan(matrix[1, 1])
    assert np.isnan(matrix).sum() == 3


def test_heatmap_png_carries_caption(tmp_path):
    path = render_phase_heatmap(
        np.array([[0.0, 0.5], [0.75, 1.0]]),
        [1, 2],
        [10, 20],
        tmp_path / "figs" / "osga_K1.png",
        title="osga K=1",
    )
    assert path.exists()
    with Image.open(path) as image:
        assert image.format == "PNG"
        assert "Jeffreys interval" in image.info["Description"]
        assert "0.1" in image.info["Description"]
        assert image.info["Title"] == "osga K=1"


def test_heatmap_rejects_wrong_shape(tmp_path):
    with pytest.raises(ValueError):
        render_phase_heatmap(np.zeros((2, 3)), [1, 2], [10, 20], tmp_path / "x.png")


def test_gap_plot_returns_estimate(tmp_path):
    scores = np.array([0.1, 9.0, 0.2, 8.5, 0.15, 0.3])
    path = tmp_path / "gaps.png"
    assert render_gap_plot(scores, path, k_true=2) == 2
    assert path.exists()


def test_gap_plot_with_equal_scores(tmp_path):
    with pytest.raises(DegenerateScores):
        render_gap_plot(np.ones(4), tmp_path / "gaps.png")
