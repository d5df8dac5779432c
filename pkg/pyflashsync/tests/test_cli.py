from __future__ import division, print_function

import json
import os

import numpy as np
import pytest

from pyflashsync.cli import main
from pyflashsync.core import read_events, read_json, read_solution, write_solution
from pyflashsync.ingest import load_timestamp_csv
from pyflashsync.syncsolve import SyncSolution
from pyflashsync.tasks import flash_sync
from pyflashsync.timebase import SyncParams

from .conftest import mp4


def _write_config(path, cameras, reference='cam1', **extra):
    d = dict(reference=reference, cameras=cameras, **extra)
    path.write_text(u'{}'.format(json.dumps(d)))
    return str(path)


def _raw_camera(tmp_path, name, frames):
    fn = tmp_path / (name + '.raw')
    fn.write_bytes(np.ascontiguousarray(frames, dtype=np.uint8).tobytes())
    ts = tmp_path / (name + '.csv')
    ts.write_text(u''.join('{},{}\n'.format(i, 40.0 * i) for i in range(len(frames))))
    n, h, w = frames.shape
    return {'camera_id': name, 'fps': 25,
            'timestamps': {'format': 'csv', 'path': ts.name},
            'frames': {'path': fn.name, 'height': h, 'width': w}}


def _flash_frames(flash=True):
    frames = np.full((30, 100, 8), 50, dtype=np.uint8)
    if flash:
        frames[10, 40:] = 150
    return frames


@pytest.fixture(scope='module')
def dataset(tmp_path_factory):
    outdir = tmp_path_factory.mktemp('sim')
    assert main(['simulate', str(outdir), '--seed', '1']) == 0
    return outdir


def test_extract_mp4(tmp_path):
    (tmp_path / 'cam1.mp4').write_bytes(mp4(90000, [(3, 3600)]))
    cfg = _write_config(tmp_path / 'config.json', [
        {'camera_id': 'cam1', 'fps': 25,
         'timestamps': {'format': 'mp4', 'path': 'cam1.mp4'}}])
    assert main(['extract', cfg, '-o', str(tmp_path / 'out')]) == 0
    with open(str(tmp_path / 'out' / 'cam1_timestamps.csv')) as f:
        lines = f.read().splitlines()
    assert len(lines) == 4
    assert load_timestamp_csv('\n'.join(lines)).to_ms().tolist() == [0.0, 40.0, 80.0]


def test_extract_csv_passthrough(tmp_path):
    text = u'frame,timestamp_ms\n0,-6066.649101\n1,-6026.649101\n2,33.36666666666667\n'
    (tmp_path / 'cam2.csv').write_text(text)
    cfg = _write_config(tmp_path / 'config.json', [
        {'camera_id': 'cam2', 'fps': 25,
         'timestamps': {'format': 'csv', 'path': 'cam2.csv'}}], reference='cam2',
        output_dir='out')
    assert main(['extract', cfg]) == 0
    with open(str(tmp_path / 'out' / 'cam2_timestamps.csv')) as f:
        assert f.read() == text


def test_missing_files_exit_2(tmp_path, capsys):
    cfg = _write_config(tmp_path / 'config.json', [
        {'camera_id': 'cam1', 'fps': 25,
         'timestamps': {'format': 'mp4', 'path': 'nowhere.mp4'}}])
    assert main(['extract', cfg, '-o', str(tmp_path)]) == 2
    assert 'error' in capsys.readouterr().err
    assert main(['extract', str(tmp_path / 'no_config.json')]) == 2


def test_malformed_mp4_exit_2(tmp_path):
    (tmp_path / 'cam1.mp4').write_bytes(mp4(0, [(3, 3600)]))
    cfg = _write_config(tmp_path / 'config.json', [
        {'camera_id': 'cam1', 'fps': 25,
         'timestamps': {'format': 'mp4', 'path': 'cam1.mp4'}}])
    assert main(['extract', cfg, '-o', str(tmp_path)]) == 2


def test_detect_raw_frames(tmp_path):
    cfg = _write_config(tmp_path / 'config.json', [
        _raw_camera(tmp_path, 'cam1', _flash_frames()),
        _raw_camera(tmp_path, 'cam2', _flash_frames(False))])
    assert main(['detect', cfg, '-o', str(tmp_path), '--workers', '2']) == 0
    events = read_events(str(tmp_path / 'events.csv'))
    assert list(events) == ['cam1']
    e, = events['cam1']
    assert (e.frame, e.row, e.magnitude, e.polarity) == (10, 40, 100.0, 'leading')

    assert main(['detect', cfg, '-o', str(tmp_path), '--threshold', '255']) == 0
    assert read_events(str(tmp_path / 'events.csv')) == {}
    with open(str(tmp_path / 'events.csv')) as f:
        assert f.read() == 'camera,frame,row,magnitude,polarity\n'


def test_detect_bad_threshold(tmp_path):
    cfg = _write_config(tmp_path / 'config.json', [
        _raw_camera(tmp_path, 'cam1', _flash_frames())])
    with pytest.raises(SystemExit):
        main(['detect', cfg, '--threshold', 'loud'])
    assert main(['detect', cfg, '--threshold', '-3']) == 2


def test_simulate_writes_bundle(dataset):
    names = sorted(os.listdir(str(dataset)))
    for cam in ['cam1', 'cam2', 'cam3', 'cam4']:
        assert cam + '_timestamps.csv' in names
        assert cam + '_profiles.csv' in names
    for fn in ['config.json', 'ground_truth.json', 'ground_truth_events.csv']:
        assert fn in names
    truth = read_json(str(dataset / 'ground_truth.json'))
    assert truth['reference'] == 'cam1'
    assert len(truth['flash_times_ms']) == 15
    assert 'solver' not in truth['cameras']['cam1']
    assert set(truth['cameras']['cam3']['solver']) == {'alpha', 'beta_ms', 't_row_ms'}


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / 'a', tmp_path / 'b'
    args = ['--seed', '5', '--n-flashes', '6', '--duration-ms', '60000']
    assert main(['simulate', str(a)] + args) == 0
    assert main(['simulate', str(b)] + args) == 0
    names = sorted(os.listdir(str(a)))
    assert names == sorted(os.listdir(str(b)))
    for fn in names:
        assert (a / fn).read_bytes() == (b / fn).read_bytes()
    assert main(['simulate', str(tmp_path / 'c'), '--seed', '6', '--n-flashes', '6',
                 '--duration-ms', '60000']) == 0
    assert (a / 'ground_truth.json').read_bytes() != \
        (tmp_path / 'c' / 'ground_truth.json').read_bytes()


def test_simulate_scenario_file(tmp_path):
    scenario = {'reference': 'a',
                'cameras': [{'camera_id': 'a', 'fps': 30, 'geometry': [0, 480, 20]},
                            {'camera_id': 'b', 'fps': 30, 'geometry': [0, 480, 20],
                             'true_alpha': 1.00001, 'true_beta': 1500.0}],
                'simulation': {'n_flashes': 5, 'total_duration': 50000.0}}
    fn = tmp_path / 'scenario.json'
    fn.write_text(u'{}'.format(json.dumps(scenario)))
    out = tmp_path / 'out'
    assert main(['simulate', str(out), '--scenario', str(fn)]) == 0
    config = read_json(str(out / 'config.json'))
    assert [c['camera_id'] for c in config['cameras']] == ['a', 'b']
    assert len(read_json(str(out / 'ground_truth.json'))['flash_times_ms']) == 5

    scenario['cameras'][1]['colour'] = 'red'
    fn.write_text(u'{}'.format(json.dumps(scenario)))
    assert main(['simulate', str(tmp_path / 'bad'), '--scenario', str(fn)]) == 2


def _check_against_truth(solution, truth, beta_tol, t_row_rel):
    assert solution.reference_id == truth['reference']
    assert sorted(solution.params) == ['cam2', 'cam3', 'cam4']
    for cam, p in solution.params.items():
        expected = truth['cameras'][cam]['solver']
        assert abs(p.alpha - expected['alpha']) < 1e-6
        assert abs(p.beta - expected['beta_ms']) < beta_tol
        assert p.t_row == pytest.approx(expected['t_row_ms'], rel=t_row_rel)


def test_solve_simulated_dataset(dataset, tmp_path):
    out = tmp_path / 'joint'
    assert main(['solve', str(dataset / 'config.json'), '-o', str(out)]) == 0
    solution = read_solution(str(out / 'solution.json'))
    truth = read_json(str(dataset / 'ground_truth.json'))
    _check_against_truth(solution, truth, 0.5, 2e-2)
    assert solution.std_error < 0.2
    with open(str(out / 'matched_events.csv')) as f:
        header = f.readline().strip().split(',')
    assert header[0] == 'camera' and header[-1] == 'residual_ms'


def test_solve_ground_truth_events(dataset, tmp_path):
    out = tmp_path / 'gt'
    assert main(['solve', str(dataset / 'config.json'), '-o', str(out),
                 '--events', str(dataset / 'ground_truth_events.csv')]) == 0
    solution = read_solution(str(out / 'solution.json'))
    truth = read_json(str(dataset / 'ground_truth.json'))
    _check_against_truth(solution, truth, 0.05, 1e-2)


def test_solve_pairwise_and_manual_offset(dataset, tmp_path):
    truth = read_json(str(dataset / 'ground_truth.json'))
    beta = truth['cameras']['cam2']['beta_ms']
    out = tmp_path / 'pair'
    assert main(['solve', str(dataset / 'config.json'), '-o', str(out), '--mode',
                 'pairwise', '--manual-offset', 'cam2={}'.format(beta)]) == 0
    solution = read_solution(str(out / 'solution.json'))
    _check_against_truth(solution, truth, 0.5, 2e-2)
    assert main(['solve', str(dataset / 'config.json'), '-o', str(out),
                 '--manual-offset', 'cam2']) == 2


def test_solve_exit_codes(tmp_path):
    few = tmp_path / 'few'
    assert main(['simulate', str(few), '--seed', '2', '--n-flashes', '3']) == 0
    assert main(['solve', str(few / 'config.json')]) == 3
    none = tmp_path / 'none'
    assert main(['simulate', str(none), '--seed', '2', '--n-flashes', '0']) == 0
    assert main(['solve', str(none / 'config.json')]) == 3
    assert main(['solve', str(none / 'config.json'), '--reference', 'cam9']) == 2


def test_flash_sync_task(dataset):
    sync = flash_sync(str(dataset / 'config.json'), save_files=False)
    assert list(sync.solution.params) == ['cam2', 'cam3', 'cam4']
    assert set(sync.stds) == {'cam2', 'cam3', 'cam4'}
    assert len(sync.report) == sum(len(m) for m in sync.matched.values())


def test_report(dataset, tmp_path, capsys):
    out = tmp_path / 'rep'
    cfg = str(dataset / 'config.json')
    assert main(['solve', cfg, '-o', str(out)]) == 0
    capsys.readouterr()
    plot = str(tmp_path / 'summary.png')
    assert main(['report', cfg, '-o', str(out), '--solution',
                 str(out / 'solution.json'), '--plot', plot]) == 0
    text = capsys.readouterr().out
    for cam in ['cam2', 'cam3', 'cam4']:
        assert cam in text
    assert 'events)' in text
    assert os.path.exists(str(out / 'residuals.csv'))
    assert os.path.exists(plot)


def test_apply(tmp_path, capsys):
    sol = SyncSolution('cam1', 0.0154, {'cam2': SyncParams(1 + 8.39e-6, 6066.7, 0.015)})
    fn = str(tmp_path / 'solution.json')
    write_solution(fn, sol)
    assert main(['apply', fn, '--camera', 'cam2', '--row', '100', '--t-f', '60000']) == 0
    assert capsys.readouterr().out.strip() == '66068.703400'
    assert main(['apply', fn, '--camera', 'cam1', '--row', '0', '--t-f', '0']) == 0
    assert capsys.readouterr().out.strip() == '0.000000'

    ts = tmp_path / 'cam1.csv'
    ts.write_text(u'0,0\n1,40\n')
    assert main(['apply', fn, '--camera', 'cam1', '--row', '0', '--timestamps', str(ts),
                 '--frame', '1']) == 0
    assert capsys.readouterr().out.strip() == '40.000000'

    assert main(['apply', fn, '--camera', 'cam7', '--row', '0', '--t-f', '0']) == 2
    assert main(['apply', fn, '--camera', 'cam2', '--row', '-1', '--t-f', '0']) == 2
    assert main(['apply', fn, '--camera', 'cam1', '--row', '0']) == 2
    assert main(['apply', fn, '--camera', 'cam1', '--row', '0', '--timestamps', str(ts),
                 '--frame', '5']) == 2


def test_pairwise_report_matches_solution(dataset):
    sync = flash_sync(str(dataset / 'config.json'), save_files=False, mode='pairwise')
    sol = sync.solution
    assert list(sol.pair_t_row_ref) == ['cam2', 'cam3', 'cam4']
    assert sol.t_row_ref == pytest.approx(np.mean(list(sol.pair_t_row_ref.values())))
    stds = sol.camera_std()
    for cid, res in sol.residuals.items():
        reported = np.asarray(sync.report['residual_ms'][sync.report['camera'] == cid])
        assert np.allclose(reported, res, rtol=0, atol=1e-9)
        assert sync.stds[cid] == pytest.approx(stds[cid], abs=1e-12)
        assert abs(np.mean(reported)) < 1e-6
    back = SyncSolution.from_dict(sol.to_dict())
    assert back.pair_t_row_ref == sol.pair_t_row_ref
    t_row = sol.pair_t_row_ref['cam3']
    assert back.apply('cam1', 1000.0, 200, pair='cam3') == pytest.approx(1000.0 + 200 * t_row)


def test_apply_with_pair_row_period(tmp_path, capsys):
    sol = SyncSolution('cam1', 0.01585, {'cam2': SyncParams(1.0, 0.0, 0.015),
                                         'cam3': SyncParams(1.0, 0.0, 0.046)},
                       pair_t_row_ref={'cam2': 0.0159, 'cam3': 0.0158})
    fn = str(tmp_path / 'solution.json')
    write_solution(fn, sol)
    assert main(['apply', fn, '--camera', 'cam1', '--row', '2000', '--t-f', '0',
                 '--pair', 'cam2']) == 0
    assert capsys.readouterr().out.strip() == '31.800000'
    assert main(['apply', fn, '--camera', 'cam1', '--row', '2000', '--t-f', '0']) == 0
    assert capsys.readouterr().out.strip() == '31.700000'
    assert main(['apply', fn, '--camera', 'cam1', '--row', '0', '--t-f', '0',
                 '--pair', 'cam9']) == 2
