import json
import os

import numpy as np
import pytest

from run import main
from scalereg.config import DEGENERACY_EXIT_CODE, MERGE_REJECTED_EXIT_CODE, PARSE_ERROR_EXIT_CODE
from scalereg.gridmap import OccupancyGrid, load_pgm, save_pgm
from scalereg.harness import synthetic_floorplan, synthetic_map_pair
from scalereg.pipeline import parse_init
from scalereg.pointio import write_points
from scalereg.registration.core import PointSet, SimilarityTransform, apply_transform

from conftest import rot


@pytest.fixture
def point_files(tmp_path, blob):
    truth = SimilarityTransform(1.5, rot(1.2), [0.3, -0.2])
    data, model = tmp_path / 'P.csv', tmp_path / 'Q.ply'
    write_points(blob, str(data))
    write_points(apply_transform(truth, blob), str(model))
    return str(data), str(model)


class TestRegisterCommand:

    def test_register_writes_outputs(self, tmp_path, point_files):
        out, trace = tmp_path / 'T.json', tmp_path / 'trace.csv'
        code = main(['register', *point_files, '--out', str(out), '--trace', str(trace),
                     '--init', 'axes', '--max-iters', '200'])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload['transform']['scale'] == pytest.approx(1.5, rel=1e-6)
        assert len(payload['matrix']) == 3
        assert trace.read_text().startswith('iteration,objective,scale')

    def test_trim_register_with_bounds(self, tmp_path, point_files):
        out = tmp_path / 'T.json'
        code = main(['trim-register', *point_files, '--out', str(out), '--trace', str(tmp_path / 't.csv'),
                     '--init', 'axes', '--bounds', '1.2,1.4'])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload['baseline'] is True
        assert 1.2 <= payload['transform']['scale'] <= 1.4

    def test_missing_file(self, tmp_path, point_files):
        code = main(['register', str(tmp_path / 'missing.txt'), point_files[1], '--out', str(tmp_path / 'T.json')])
        assert code == PARSE_ERROR_EXIT_CODE

    def test_bad_init(self, tmp_path, point_files):
        code = main(['register', *point_files, '--out', str(tmp_path / 'T.json'), '--init', '1,2'])
        assert code == PARSE_ERROR_EXIT_CODE

    def test_degenerate_scale(self, tmp_path):
        data, model = tmp_path / 'P.txt', tmp_path / 'Q.txt'
        write_points(PointSet([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), str(data))
        model.write_text('3 3\n')
        code = main(['register', str(data), str(model), '--out', str(tmp_path / 'T.json'),
                     '--trace', str(tmp_path / 't.csv')])
        assert code == DEGENERACY_EXIT_CODE


class TestMergeCommand:

    def test_partial_overlap_merge(self, tmp_path):
        plan = synthetic_floorplan()
        ref, other = tmp_path / 'ref.pgm', tmp_path / 'other.pgm'
        save_pgm(OccupancyGrid(plan.cells[:, :55]), str(ref))
        save_pgm(OccupancyGrid(plan.cells[:, 25:]), str(other), binary=False)
        out, report = tmp_path / 'merged.pgm', tmp_path / 'report.json'

        code = main(['merge-maps', str(ref), str(other), '--out', str(out), '--report', str(report),
                     '--init', '1,0,24,0.5'])
        assert code == 0
        assert load_pgm(str(out)).width >= 73
        assert json.loads(report.read_text())['status'] == 'merged'

    def test_rejected_merge(self, tmp_path):
        reference, other, _ = synthetic_map_pair()
        ref_path, other_path = tmp_path / 'ref.pgm', tmp_path / 'other.pgm'
        save_pgm(reference, str(ref_path))
        save_pgm(other, str(other_path))
        out, report = tmp_path / 'merged.pgm', tmp_path / 'report.json'

        code = main(['merge-maps', str(ref_path), str(other_path), '--out', str(out), '--report', str(report),
                     '--max-rmse-cells', '1e-6'])
        assert code == MERGE_REJECTED_EXIT_CODE
        assert not out.exists()
        assert json.loads(report.read_text())['status'] == 'rejected'

    def test_malformed_pgm(self, tmp_path):
        bad = tmp_path / 'bad.pgm'
        bad.write_bytes(b'P7\n')
        code = main(['merge-maps', str(bad), str(bad), '--out', str(tmp_path / 'm.pgm'),
                     '--report', str(tmp_path / 'r.json')])
        assert code == PARSE_ERROR_EXIT_CODE


class TestBenchCommand:

    def test_bench_runs(self, tmp_path):
        config = tmp_path / 'small.env'
        config.write_text('NAME=cli\nN_POINTS=80\nTRIALS=2\nALGORITHMS=scaling_icp,strimmed,naive_ls\n')
        out_dir = tmp_path / 'out'
        code = main(['bench', str(config), '--out-dir', str(out_dir), '--seed', '3', '--max-concurrency', '2'])
        assert code == 0
        for name in ('records.csv', 'summary.csv', 'summary.json', 'traces.csv'):
            assert os.path.exists(out_dir / name)
        summary = json.loads((out_dir / 'summary.json').read_text(encoding='utf-8'))
        assert summary['spec']['seed'] == 3

    def test_unknown_key(self, tmp_path):
        config = tmp_path / 'bad.env'
        config.write_text('TRAILS=2\n')
        assert main(['bench', str(config)]) == PARSE_ERROR_EXIT_CODE


class TestParseInit:

    def test_two_dimensional(self):
        T = parse_init('2,0.5,1,-1', 2)
        assert T.scale == 2.0
        np.testing.assert_allclose(T.rotation, rot(0.5))
        np.testing.assert_array_equal(T.translation, [1.0, -1.0])

    def test_three_dimensional(self):
        assert parse_init('1,0,0,0,3', 3).translation[2] == 3.0

    @pytest.mark.parametrize('text', ['1,0,0', '1,0,0,0,0', 'a,b,c,d'])
    def test_wrong_values(self, text):
        with pytest.raises(ValueError):
            parse_init(text, 2)
