import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from scalereg.gridmap import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    edge_mask,
    extract_edge_points,
    load_pgm,
    overlay,
    parse_pgm,
    resample_grid,
    sample_grid,
    save_pgm,
)
from scalereg.registration.core import SimilarityTransform
from scalereg.registration.exceptions import EmptyEdgeError, PgmParseError


def edge_oracle(cells: np.ndarray) -> np.ndarray:
    h, w = cells.shape
    out = np.zeros(cells.shape, dtype=bool)
    for r in range(h):
        for c in range(w):
            if cells[r, c] != OCCUPIED:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and cells[rr, cc] == FREE:
                    out[r, c] = True
    return out


class TestParsePgm:

    def test_ascii_example(self, tmp_path):
        path = tmp_path / 'm.pgm'
        path.write_bytes('P2\n# 注释\n2 2\n255\n0 255\n255 128\n'.encode('utf-8'))
        grid = load_pgm(str(path))
        assert_array_equal(grid.cells, [[OCCUPIED, FREE], [FREE, UNKNOWN]])

    def test_binary_matches_ascii(self):
        ascii_gray = parse_pgm(b'P2\n3 2\n255\n0 10 200\n255 128 64\n')
        binary_gray = parse_pgm(b'P5\n3 2\n255\n' + bytes([0, 10, 200, 255, 128, 64]))
        assert_array_equal(ascii_gray, binary_gray)

    def test_maxval_is_rescaled(self):
        assert_array_equal(parse_pgm(b'P2\n2 1\n15\n0 15\n'), [[0, 255]])

    def test_sixteen_bit_binary(self):
        data = b'P5\n2 1\n65535\n' + (0).to_bytes(2, 'big') + (65535).to_bytes(2, 'big')
        assert_array_equal(parse_pgm(data), [[0, 255]])

    @pytest.mark.parametrize('maxval, width', [(15, 1), (1000, 2)])
    def test_binary_maxval_is_rescaled(self, maxval, width):
        data = f'P5\n2 1\n{maxval}\n'.encode('ascii') + (0).to_bytes(width, 'big') + maxval.to_bytes(width, 'big')
        assert_array_equal(parse_pgm(data), [[0, 255]])

    def test_reads_image_written_by_pillow(self, tmp_path):
        gray = np.array([[0, 128, 255], [255, 0, 128]], dtype=np.uint8)
        path = tmp_path / 'pil.pgm'
        Image.fromarray(gray).save(str(path), format='PPM')
        assert_array_equal(load_pgm(str(path)).cells, [[OCCUPIED, UNKNOWN, FREE], [FREE, OCCUPIED, UNKNOWN]])

    def test_binary_output_header(self, tmp_path):
        path = tmp_path / 'out.pgm'
        save_pgm(OccupancyGrid(np.full((2, 3), FREE)), str(path))
        data = path.read_bytes()
        assert data.startswith(b'P5')
        assert data.endswith(bytes([255] * 6))


    def test_bad_magic_offset(self):
        with pytest.raises(PgmParseError) as info:
            parse_pgm(b'P6\n1 1\n255\n\x00')
        assert info.value.offset == 0

    def test_bad_width_offset(self):
        with pytest.raises(PgmParseError) as info:
            parse_pgm(b'P2\nx 2\n255\n0 0\n')
        assert info.value.offset == 3

    def test_truncated_binary(self):
        data = b'P5\n2 2\n255\n' + bytes([0, 255])
        with pytest.raises(PgmParseError) as info:
            parse_pgm(data)
        assert info.value.offset == len(data)

    def test_truncated_ascii(self):
        data = b'P2\n2 2\n255\n0 255 '
        with pytest.raises(PgmParseError) as info:
            parse_pgm(data)
        assert info.value.offset == len(data)

    def test_value_above_maxval(self):
        with pytest.raises(PgmParseError):
            parse_pgm(b'P2\n1 1\n100\n200\n')

    @pytest.mark.parametrize('binary', [True, False])
    def test_save_then_load(self, tmp_path, binary):
        rng = np.random.default_rng(2)
        cells = rng.choice([UNKNOWN, FREE, OCCUPIED], size=(7, 11))
        path = tmp_path / 'grid.pgm'
        save_pgm(OccupancyGrid(cells), str(path), binary=binary)
        assert_array_equal(load_pgm(str(path)).cells, cells)


class TestEdges:

    def test_single_occupied_cell(self):
        cells = np.full((3, 3), FREE)
        cells[1, 1] = OCCUPIED
        points = extract_edge_points(OccupancyGrid(cells, resolution=0.5, origin=(1.0, 2.0)))
        assert_allclose(points.points, [[1.75, 2.75]])

    def test_solid_block_keeps_only_its_rim(self):
        cells = np.full((9, 9), FREE)
        cells[2:7, 2:7] = OCCUPIED
        mask = edge_mask(OccupancyGrid(cells))
        assert mask.sum() == 16
        assert not mask[3:6, 3:6].any()

    def test_unknown_neighbours_do_not_make_edges(self):
        cells = np.full((3, 3), UNKNOWN)
        cells[1, 1] = OCCUPIED
        with pytest.raises(EmptyEdgeError):
            extract_edge_points(OccupancyGrid(cells))

    def test_no_occupied_cells(self):
        with pytest.raises(EmptyEdgeError):
            extract_edge_points(OccupancyGrid(np.full((4, 4), FREE)))

    def test_matches_neighbour_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            cells = rng.choice([UNKNOWN, FREE, OCCUPIED], size=(15, 12), p=[0.2, 0.5, 0.3])
            assert_array_equal(edge_mask(OccupancyGrid(cells)), edge_oracle(cells))

    def test_padding_keeps_edge_coordinates(self):
        rng = np.random.default_rng(6)
        cells = rng.choice([UNKNOWN, FREE, OCCUPIED], size=(10, 10))
        grid = OccupancyGrid(cells, resolution=0.25, origin=(-1.0, 3.0))
        assert_allclose(extract_edge_points(grid.padded(4)).points, extract_edge_points(grid).points)


class TestSampling:

    def test_identity_sampling_copies_grid(self):
        rng = np.random.default_rng(7)
        grid = OccupancyGrid(rng.choice([UNKNOWN, FREE, OCCUPIED], size=(6, 9)), 0.5, (1.0, -2.0))
        out = sample_grid(grid, SimilarityTransform.identity(2), grid.shape, grid.resolution, grid.origin)
        assert_array_equal(out, grid.cells)

    def test_outside_source_is_unknown(self):
        grid = OccupancyGrid(np.full((2, 2), OCCUPIED))
        out = sample_grid(grid, SimilarityTransform.identity(2), (4, 4), 1.0, (-1.0, -1.0))
        assert out[0, 0] == UNKNOWN
        assert out[1, 1] == OCCUPIED

    def test_resample_doubles_cells(self):
        grid = OccupancyGrid([[OCCUPIED, FREE]])
        T = SimilarityTransform(2.0, np.eye(2), [0.0, 0.0])
        out = resample_grid(grid, T, resolution=1.0)
        assert out.count(OCCUPIED) == 4
        assert out.count(FREE) == 4

    def test_overlay_priority(self):
        base = np.array([UNKNOWN, FREE, OCCUPIED, FREE], dtype=np.int8)
        top = np.array([FREE, UNKNOWN, FREE, OCCUPIED], dtype=np.int8)
        assert_array_equal(overlay(base, top), [FREE, FREE, OCCUPIED, OCCUPIED])
