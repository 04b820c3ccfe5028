import numpy as np
import pytest
from numpy.testing import assert_array_equal
from plyfile import PlyData, PlyElement

from scalereg.pointio import read_points, write_points
from scalereg.registration.core import PointSet
from scalereg.registration.exceptions import PointSetFormatError


class TestReadPoints:

    def test_whitespace_text(self, tmp_path):
        path = tmp_path / 'p.txt'
        path.write_text('# 两个点\n1 2\n  3.5\t-4\n')
        P = read_points(str(path))
        assert_array_equal(P.points, [[1.0, 2.0], [3.5, -4.0]])

    def test_csv_3d(self, tmp_path):
        path = tmp_path / 'p.csv'
        path.write_text('1,2,3\n4,5,6\n')
        P = read_points(str(path))
        assert P.dim == 3
        assert len(P) == 2

    def test_ascii_ply(self, tmp_path):
        path = tmp_path / 'p.ply'
        path.write_text(
            'ply\nformat ascii 1.0\ncomment test\nelement vertex 2\n'
            'property float x\nproperty float y\nproperty float z\nend_header\n'
            '0 1 2\n3 4 5\n'
        )
        assert_array_equal(read_points(str(path)).points, [[0, 1, 2], [3, 4, 5]])

    def test_other_elements_before_vertex(self, tmp_path):
        path = tmp_path / 'cam.ply'
        path.write_text(
            'ply\nformat ascii 1.0\nelement camera 1\nproperty float focal\n'
            'element vertex 2\nproperty float x\nproperty float y\nend_header\n'
            '1.5\n0 1\n2 3\n'
        )
        assert_array_equal(read_points(str(path)).points, [[0, 1], [2, 3]])

    def test_binary_ply(self, tmp_path):
        vertex = np.array([(0.5, 1.0, -2.0, 7), (3.0, 4.0, 5.0, 8)],
                          dtype=[('x', 'f4'), ('y', 'f4'), ('z', 'f4'), ('label', 'i4')])
        path = tmp_path / 'bin.ply'
        PlyData([PlyElement.describe(vertex, 'vertex')], byte_order='<').write(str(path))
        assert_array_equal(read_points(str(path)).points, [[0.5, 1.0, -2.0], [3.0, 4.0, 5.0]])

    def test_written_ply_reads_back(self, tmp_path, rng):
        P = PointSet(rng.normal(size=(20, 3)))
        path = tmp_path / 'out.ply'
        write_points(P, str(path))
        assert_array_equal(read_points(str(path)).points, P.points)

    def test_written_csv_reads_back(self, tmp_path, rng):
        P = PointSet(rng.normal(size=(20, 2)))
        path = tmp_path / 'out.csv'
        write_points(P, str(path))
        assert_array_equal(read_points(str(path)).points, P.points)


class TestMalformedFiles:

    def test_missing_file(self, tmp_path):
        with pytest.raises(PointSetFormatError) as info:
            read_points(str(tmp_path / 'missing.txt'))
        assert 'missing.txt' in str(info.value)

    @pytest.mark.parametrize('text', ['', '1 2\n3\n', '1 2\n3 4 5\n', 'a b\nc d\n', '1\n2\n'])
    def test_bad_text(self, tmp_path, text):
        path = tmp_path / 'bad.txt'
        path.write_text(text)
        with pytest.raises(PointSetFormatError):
            read_points(str(path))

    def test_truncated_binary_ply(self, tmp_path):
        path = tmp_path / 'bin.ply'
        path.write_bytes(b'ply\nformat binary_little_endian 1.0\nelement vertex 2\n'
                         b'property float x\nproperty float y\nend_header\n\x00\x00')
        with pytest.raises(PointSetFormatError):
            read_points(str(path))

    def test_ply_without_vertex_element(self, tmp_path):
        path = tmp_path / 'faces.ply'
        path.write_text('ply\nformat ascii 1.0\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n')
        with pytest.raises(PointSetFormatError):
            read_points(str(path))

    def test_ply_without_y(self, tmp_path):
        path = tmp_path / 'x.ply'
        path.write_text('ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float z\nend_header\n1 2\n')
        with pytest.raises(PointSetFormatError):
            read_points(str(path))


    def test_ply_with_too_few_vertices(self, tmp_path):
        path = tmp_path / 'short.ply'
        path.write_text(
            'ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nend_header\n0 0\n'
        )
        with pytest.raises(PointSetFormatError):
            read_points(str(path))
