"""
Tests for rasterized push-forwards, density ratios and grid file I/O
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent / "src"))

from analysis.measure_tools import (  # noqa: E402
    GridBox,
    GridMeasure,
    additivity_defect,
    ball_volume,
    cone_complement_fraction,
    density_ratio,
    density_ratio_estimates,
    image_additivity_defect,
    image_measure,
    pushforward,
    rasterize,
)
from maps.monotone_map import MultiMap  # noqa: E402
from models.errors import ConfigError, DimensionMismatchError, DomainError  # noqa: E402
from utils.io import read_density_grid, read_map_csv, write_density_grid, write_map_csv  # noqa: E402

UNIT = GridBox(np.zeros(1), np.ones(1), 4)


def one_dim(pairs):
    return MultiMap.from_pairs([([x], [xi]) for x, xi in pairs], dim=1)


class TestGridBox:
    """Test cell geometry"""

    def test_half_open_cells(self):
        """Lower faces belong to the cell, the upper box face is outside"""
        np.testing.assert_array_equal(UNIT.cell_index([[0.0], [0.25], [0.999], [1.0], [-0.1]]), [0, 1, 3, -1, -1])

    def test_row_major_order(self):
        """Flat indices follow C order"""
        box = GridBox(np.zeros(2), np.ones(2), 2)
        assert box.cell_index([[0.1, 0.9]])[0] == 1
        assert box.cell_index([[0.9, 0.1]])[0] == 2
        np.testing.assert_allclose(box.centers()[3], [0.75, 0.75])

    def test_invalid_box(self):
        """Degenerate boxes and resolutions are refused"""
        with pytest.raises(DomainError):
            GridBox(np.ones(1), np.ones(1), 2)
        with pytest.raises(DomainError):
            GridBox(np.zeros(1), np.ones(1), 0)
        with pytest.raises(DimensionMismatchError):
            GridBox(np.zeros(2), np.ones(1), 2)

    def test_measure_validation(self):
        """Densities must fit the grid and be non-negative"""
        with pytest.raises(DimensionMismatchError):
            GridMeasure(np.zeros(1), np.ones(1), 4, np.ones(3))
        with pytest.raises(DomainError):
            GridMeasure(np.zeros(1), np.ones(1), 2, np.array([1.0, -1.0]))
        assert GridMeasure(np.zeros(1), np.ones(1), 4).total_mass == pytest.approx(1.0)


class TestPushforward:
    """Test rasterization and mu(E)"""

    def test_rasterize(self):
        """Values go to target cells; outside points are dropped"""
        T = one_dim([(0.1, 0.1), (0.1, 0.6), (0.6, 0.9), (2.0, 0.5)])
        cells = rasterize(T, UNIT, UNIT)
        assert cells.images == {0: frozenset({0, 2}), 2: frozenset({3})}
        assert not cells.is_single_valued()

    def test_single_valued_is_additive(self):
        """The identity pushes every slab forward additively"""
        T = one_dim([(c, c) for c in (0.1, 0.35, 0.6, 0.85)])
        f = GridMeasure(np.zeros(1), np.ones(1), 4, np.array([1.0, 2.0, 3.0, 4.0]))
        cells = rasterize(T, UNIT, UNIT)
        assert pushforward(cells, f, [0, 1, 2, 3]) == pytest.approx(f.total_mass)
        assert additivity_defect(cells, f, [[0], [1], [2, 3]]) == 0.0

    def test_overlap_defect(self):
        """A source cell hitting two parts is counted twice: defect -f * cell volume"""
        T = one_dim([(0.1, 0.1), (0.1, 0.35), (0.6, 0.9)])
        f = GridMeasure(np.zeros(1), np.ones(1), 4, np.full(4, 2.0))
        cells = rasterize(T, UNIT, UNIT)
        assert additivity_defect(cells, f, [[0], [1], [2, 3]]) == pytest.approx(-2.0 * 0.25)

    def test_disjoint_parts_required(self):
        """Overlapping parts are refused"""
        cells = rasterize(one_dim([(0.1, 0.1)]), UNIT, UNIT)
        f = GridMeasure(np.zeros(1), np.ones(1), 4)
        with pytest.raises(DomainError):
            additivity_defect(cells, f, [[0, 1], [1]])

    def test_density_grid_must_match(self):
        """The density lives on the source grid"""
        cells = rasterize(one_dim([(0.1, 0.1)]), UNIT, UNIT)
        with pytest.raises(DimensionMismatchError):
            pushforward(cells, GridMeasure(np.zeros(1), np.ones(1), 2), [0])

    def test_image_measure(self):
        """Shared targets make image volumes subadditive"""
        T = one_dim([(0.1, 0.6), (0.35, 0.6), (0.6, 0.1)])
        cells = rasterize(T, UNIT, UNIT)
        assert image_measure(cells, [0, 1]) == pytest.approx(0.25)
        assert image_additivity_defect(cells, [[0], [1], [2]]) == pytest.approx(0.25)


class TestDensityRatio:
    """Test |S cap B_r| / |B_r|"""

    def test_half_plane_predicate(self):
        """A half plane through x has ratio 1/2"""
        estimates = density_ratio_estimates(lambda p: p[:, 0] >= 0, [0.0, 0.0], [0.1, 1.0], samples=20_000, seed=1)
        for _, row in estimates.iterrows():
            assert abs(row["ratio"] - 0.5) <= 5 * row["std_error"] + 1e-3

    def test_full_mask(self):
        """A mask covering the grid gives ratio 1 inside the box"""
        box = GridBox(np.full(2, -1.0), np.ones(2), 8)
        estimates = density_ratio_estimates(np.ones(box.n_cells, dtype=bool), [0.0, 0.0], [0.2, 0.5], grid=box, seed=0)
        for _, row in estimates.iterrows():
            assert row["ratio"] == pytest.approx(1.0, abs=0.03)

    def test_half_mask_matches_predicate(self):
        """Cell mask and predicate agree on a half plane aligned with cell faces"""
        box = GridBox(np.full(2, -1.0), np.ones(2), 8)
        mask = box.centers()[:, 0] > 0
        by_mask = density_ratio(mask, [0.0, 0.0], [0.5], grid=box, samples=4000, seed=2)[0]
        assert by_mask == pytest.approx(0.5, abs=0.02)

    def test_mask_needs_grid(self):
        """A mask without a grid is ambiguous"""
        with pytest.raises(DomainError):
            density_ratio(np.ones(4, dtype=bool), [0.0], [0.1])
        with pytest.raises(DomainError):
            density_ratio(lambda p: p[:, 0] > 0, [0.0], [-0.1])

    def test_ball_volume(self):
        """Unit ball volumes in dimensions 1 to 3"""
        assert ball_volume(1, 1.0) == pytest.approx(2.0)
        assert ball_volume(2, 0.5) == pytest.approx(math.pi / 4)
        assert ball_volume(3, 1.0) == pytest.approx(4 * math.pi / 3)

    @pytest.mark.parametrize("dim,expected", [
        (1, 0.5),
        (2, 1 - 0.1 / math.pi),
        (3, 1 - (1 - math.cos(0.1)) / 2),
    ])
    def test_cone_complement_fraction(self, dim, expected):
        """Solid-angle fraction outside a cone of half-angle 0.1"""
        assert cone_complement_fraction(dim, 0.1) == pytest.approx(expected)

    def test_cone_complement_range(self):
        """Half angle must lie in (0, pi/2)"""
        with pytest.raises(DomainError):
            cone_complement_fraction(2, math.pi / 2)


class TestGridFiles:
    """Test density grid and map files"""

    def test_density_round_trip(self, tmp_path):
        """Header and row-major values survive a write and read"""
        f = GridMeasure(np.array([0.0, -1.0]), np.array([1.0, 1.0]), 3, np.arange(9.0))
        g = read_density_grid(write_density_grid(f, tmp_path / "f.grid"))
        np.testing.assert_array_equal(g.density, f.density)
        np.testing.assert_array_equal(g.lower, f.lower)
        assert g.resolution == 3

    @pytest.mark.parametrize("text", ["", "2, 0, 0, 1, 1\n1\n", "1, 0, 1, 2\n1, -1\n", "1, 0, 1, 2\n1, x\n"])
    def test_bad_density_files(self, tmp_path, text):
        """Malformed headers, wrong counts and bad values are input errors"""
        path = tmp_path / "bad.grid"
        path.write_text(text)
        with pytest.raises(ConfigError):
            read_density_grid(path)

    def test_map_file(self, tmp_path):
        """Repeated x rows come back as one multivalued point"""
        T = one_dim([(0.0, 1.0), (0.0, 2.0), (1.0, 3.0)])
        back = read_map_csv(write_map_csv(T, tmp_path / "map.csv"))
        assert len(back) == 2
        assert back.graph_size == 3

    def test_map_file_errors(self, tmp_path):
        """Missing files, a bad first column and mixed dimensions"""
        with pytest.raises(ConfigError):
            read_map_csv(tmp_path / "absent.csv")
        path = tmp_path / "bad.csv"
        path.write_text("m,x1,xi1\n1,0,1\n")
        with pytest.raises(ConfigError):
            read_map_csv(path)
        path.write_text("n,x1,xi1\n1,0,1\n2,0,1\n")
        with pytest.raises(ConfigError):
            read_map_csv(path)
