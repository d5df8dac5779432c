from __future__ import division, print_function

import numpy as np
import pytest

from pyflashsync.exceptions import (AmbiguityError, DomainError, MatchingError,
                                    NonPhysicalSolutionError, SingularityError,
                                    ValidationError)
from pyflashsync.ingest import TimestampTrack
from pyflashsync.detect import EventObservation, TRAILING
from pyflashsync.syncsolve import (REPORT_COLUMNS, ROW_PERIODS_FREE,
                                   ROW_PERIODS_KNOWN, MatchedEventSet,
                                   SyncSolution, TimedEvent, attach_timestamps,
                                   count_offset_inliers, design_system,
                                   estimate_coarse_offset, match_events,
                                   residual_report, solve_joint, solve_pairwise)
from pyflashsync.timebase import SyncParams


def make_set(cam, alpha, beta, t_row, t_row_ref, n, rng, ref='ref', rows=2160,
             rows_ref=2160, noise=0.0, span=300000.0, frame=40.0):
    """Matched pairs that satisfy the synchronization equation exactly."""
    ref_frames = np.sort(rng.choice(int(span / frame), n, replace=False))
    t_ref = ref_frames * frame
    r_ref = rng.integers(100, rows_ref - 100, n).astype(float)
    r_c = rng.integers(100, rows - 100, n).astype(float)
    t_c = (t_ref + r_ref * t_row_ref - beta - r_c * t_row) / alpha
    if noise:
        r_c = r_c + rng.normal(0.0, noise, n)
    pairs = [(i, r_c[i], t_c[i], int(ref_frames[i]), r_ref[i], t_ref[i])
             for i in range(n)]
    return MatchedEventSet(cam, ref, pairs)


def rel(a, b):
    return abs(a - b) / abs(b)


def timed(times):
    return [TimedEvent(i, 0, t, t) for i, t in enumerate(times)]


def test_coarse_offset_examples():
    ref = [1000.0, 5000.0, 9000.0]
    cam = [7000.0, 11000.0, 15000.0]
    offset = estimate_coarse_offset(cam, ref, 40.0)
    assert offset == -6000.0
    assert count_offset_inliers(cam, ref, offset, 20.0) == 3
    assert estimate_coarse_offset(ref, ref, 40.0) == 0.0


def test_coarse_offset_with_spurious_event():
    ref = timed([1000.0, 5000.0, 9000.0])
    cam = timed([7000.0, 9500.0, 11000.0, 15000.0])
    offset = estimate_coarse_offset(cam, ref, 40.0)
    assert offset == -6000.0
    assert count_offset_inliers(cam, ref, offset, 20.0) == 3
    matched = match_events(cam, ref, offset, 20.0, 'c', 'ref')
    assert len(matched) == 3
    assert [e.time for e in matched.unmatched_camera] == [9500.0]
    assert matched.unmatched_reference == []


def test_coarse_offset_prefers_smallest_shift():
    # shifts of 0 and 4000 both align three events
    ref = [0.0, 4000.0, 8000.0, 12000.0]
    cam = [0.0, 4000.0, 8000.0]
    assert count_offset_inliers(cam, ref, 4000.0, 20.0) == 3
    assert estimate_coarse_offset(cam, ref, 40.0) == 0.0


def test_coarse_offset_ambiguous():
    with pytest.raises(AmbiguityError):
        estimate_coarse_offset([1000.0], [2000.0], 40.0)
    with pytest.raises(AmbiguityError):
        estimate_coarse_offset([0.0, 1000.0], [0.0, 3000.0], 40.0)
    with pytest.raises(DomainError):
        estimate_coarse_offset([], [1.0], 40.0)


@pytest.mark.parametrize('seed', range(100))
def test_coarse_offset_recovers_shift(seed):
    rng = np.random.default_rng(seed)
    world = np.sort(rng.uniform(0, 300000, 20))
    shift = rng.uniform(-45000, 45000)
    ref = world[rng.random(20) < 0.8]
    cam = world[rng.random(20) < 0.8] - shift + rng.normal(0, 2.0, 1)
    if min(len(ref), len(cam)) < 3:
        return
    offset = estimate_coarse_offset(cam, ref, 40.0)
    assert abs(offset - shift) < 25.0


def test_match_events_partial_visibility():
    world = 2000.0 + 5000.0 * np.arange(19)
    cam = timed(world[:18] + 7.0)
    ref = timed(np.concatenate([world[:12], world[18:]]))
    matched = match_events(cam, ref, 0.0, 20.0, 'c', 'ref')
    assert len(matched) == 12
    assert len(matched.unmatched_camera) == 6
    assert len(matched.unmatched_reference) == 1


def test_match_events_closest_wins():
    matched = match_events(timed([1000.0, 1010.0]), timed([1012.0]), 0.0, 20.0)
    assert len(matched) == 1
    assert matched.pairs[0].t_c == 1010.0
    assert [e.time for e in matched.unmatched_camera] == [1000.0]


def test_match_events_errors():
    with pytest.raises(MatchingError):
        match_events(timed([0.0]), timed([500.0]), 0.0, 20.0)
    with pytest.raises(DomainError):
        match_events(timed([0.0]), timed([0.0]), 0.0, 25.0, nominal_frame_duration=40.0)


@pytest.mark.parametrize('seed', range(100))
def test_match_events_symmetric_pair_count(seed):
    rng = np.random.default_rng(seed)
    world = np.sort(rng.uniform(0, 60000, 30))
    offset = rng.uniform(-1000, 1000)
    cam = timed(np.sort(world[rng.random(30) < 0.7] - offset + rng.normal(0, 8, 1)))
    ref = timed(np.sort(np.concatenate([world[rng.random(30) < 0.7],
                                        rng.uniform(0, 60000, 3)])))
    if not cam or not ref:
        return
    try:
        forward = len(match_events(cam, ref, offset, 20.0))
    except MatchingError:
        forward = 0
    try:
        backward = len(match_events(ref, cam, -offset, 20.0))
    except MatchingError:
        backward = 0
    assert forward == backward


def test_matched_event_set_rejects_reused_event():
    pairs = [(1, 10.0, 40.0, 1, 10.0, 40.0), (1, 10.0, 40.0, 2, 11.0, 80.0)]
    with pytest.raises(ValidationError):
        MatchedEventSet('c', 'ref', pairs)


def test_attach_timestamps():
    track = TimestampTrack('c', 90000, [0, 3600, 7200])
    events = [EventObservation('c', 1, 100, 50.0), EventObservation('c', 2, 5, 50.0, TRAILING)]
    out = attach_timestamps(events, track, 0.02)
    assert out == [TimedEvent(1, 100, 40.0, 42.0)]
    with pytest.raises(DomainError):
        attach_timestamps([EventObservation('c', 3, 1, 5.0)], track)


def test_pairwise_exact_recovery():
    rng = np.random.default_rng(0)
    alpha, beta, t_c, t_ref = 1 - 8.55e-6, -37500.7, 0.0396, 0.0158
    matched = make_set('c', alpha, beta, t_c, t_ref, 10, rng, rows=720)
    sol = solve_pairwise(matched, ROW_PERIODS_FREE)
    p = sol.params['c']
    assert rel(p.alpha, alpha) < 1e-9
    assert rel(p.beta, beta) < 1e-9
    assert rel(p.t_row, t_c) < 1e-8
    assert rel(sol.t_row_ref, t_ref) < 1e-8
    assert sol.std_error < 1e-6


def test_pairwise_identity():
    pairs = [(f, r, f * 40.0, f, r, f * 40.0)
             for f, r in [(3, 100), (90, 1500), (400, 700), (2500, 30)]]
    sol = solve_pairwise(MatchedEventSet('c', 'ref', pairs), ROW_PERIODS_KNOWN,
                         t_row=0.0154, t_row_ref=0.0154)
    assert sol.params['c'].alpha == pytest.approx(1.0, abs=1e-12)
    assert sol.params['c'].beta == pytest.approx(0.0, abs=1e-8)
    assert np.all(np.abs(sol.residuals['c']) < 1e-9)


def test_pairwise_mode_arguments():
    matched = make_set('c', 1.0, 0.0, 0.02, 0.02, 6, np.random.default_rng(1))
    with pytest.raises(DomainError):
        solve_pairwise(matched, ROW_PERIODS_KNOWN)
    with pytest.raises(DomainError):
        solve_pairwise(matched, 'mystery')


def test_pairwise_under_determined():
    matched = make_set('c', 1.0, 10.0, 0.02, 0.02, 3, np.random.default_rng(2))
    with pytest.raises(SingularityError):
        solve_pairwise(matched, ROW_PERIODS_FREE)
    sol = solve_pairwise(MatchedEventSet('c', 'ref', matched.pairs[:2]),
                         ROW_PERIODS_KNOWN, 0.02, 0.02)
    assert np.all(np.abs(sol.residuals['c']) < 1e-9)


def test_all_events_in_one_frame_is_singular():
    pairs = [(7, r, 280.0, 7 + i, r + 3, 280.0 + 40 * i)
             for i, r in enumerate([100.0, 400.0, 900.0, 1300.0, 2000.0])]
    with pytest.raises(SingularityError) as exc:
        solve_pairwise(MatchedEventSet('c', 'ref', pairs), ROW_PERIODS_FREE)
    assert 'alpha[c]' in exc.value.directions


def test_equal_rows_leave_row_periods_undetermined():
    pairs = [(f, 500.0, f * 40.0 + 3, f, 500.0, f * 40.0) for f in range(1, 9)]
    with pytest.raises(SingularityError) as exc:
        solve_pairwise(MatchedEventSet('c', 'ref', pairs), ROW_PERIODS_FREE)
    assert any(d.startswith('t_row') or d.startswith('beta') for d in exc.value.directions)


def test_negative_row_period_rejected():
    rng = np.random.default_rng(4)
    matched = make_set('c', 1.0, 100.0, -0.02, 0.0154, 12, rng)
    with pytest.raises(NonPhysicalSolutionError):
        solve_pairwise(matched, ROW_PERIODS_FREE)


TABLE_CAMERAS = [('cam2', 1 + 8.39e-6, 6066.7, 0.0154, 2160),
                 ('cam3', 1 - 3.12e-6, -37500.2, 0.0396, 720),
                 ('cam4', 1 - 8.35e-6, -23858.7, 0.0154, 2160)]


def joint_sets(rng, n=15, noise=0.0, t_row_ref=0.0154, cameras=TABLE_CAMERAS):
    return [make_set(cam, a, b, t, t_row_ref, n, rng, rows=rows, noise=noise)
            for cam, a, b, t, rows in cameras]


def test_joint_exact_recovery():
    rng = np.random.default_rng(7)
    sol = solve_joint(joint_sets(rng))
    assert rel(sol.t_row_ref, 0.0154) < 1e-8
    for cam, alpha, beta, t_row, _ in TABLE_CAMERAS:
        p = sol.params[cam]
        assert abs(p.alpha - alpha) < 1e-8
        assert rel(p.alpha, alpha) < 1e-9
        assert rel(p.beta, beta) < 1e-9
        assert rel(p.t_row, t_row) < 1e-8
    assert sol.std_error < 1e-6
    assert list(sol.camera_std()) == ['cam2', 'cam3', 'cam4']


def test_joint_known_row_periods():
    rng = np.random.default_rng(8)
    sets = joint_sets(rng)
    known = {'ref': 0.0154, 'cam3': 0.0396}
    sol = solve_joint(sets, known)
    assert sol.t_row_ref == 0.0154
    assert sol.params['cam3'].t_row == 0.0396
    assert rel(sol.params['cam2'].t_row, 0.0154) < 1e-8


def test_joint_single_camera_equals_pairwise():
    rng = np.random.default_rng(9)
    matched = make_set('c', 1 + 5e-6, 1234.5, 0.02, 0.0154, 20, rng, noise=10.0)
    joint = solve_joint([matched])
    pair = solve_pairwise(matched, ROW_PERIODS_FREE)
    assert joint.params['c'] == pair.params['c']
    assert joint.t_row_ref == pair.t_row_ref
    assert np.array_equal(joint.residuals['c'], pair.residuals['c'])


def test_joint_inconsistent_reference():
    rng = np.random.default_rng(10)
    a = make_set('c1', 1.0, 0.0, 0.02, 0.02, 6, rng, ref='r1')
    b = make_set('c2', 1.0, 0.0, 0.02, 0.02, 6, rng, ref='r2')
    with pytest.raises(DomainError):
        solve_joint([a, b])
    with pytest.raises(DomainError):
        solve_joint([])


def _noisy_pair(seed):
    rng = np.random.default_rng(seed)
    alpha = 1 + rng.uniform(-2e-5, 2e-5)
    beta = rng.uniform(-45000, 45000)
    t_row = rng.uniform(0.015, 0.05)
    matched = make_set('c', alpha, beta, t_row, 0.0154, 25, rng, noise=20.0)
    return rng, matched


def _shifted(matched, d_cam=0.0, d_ref=0.0):
    return MatchedEventSet(matched.camera_id, matched.reference_id,
                           [(p.frame_c, p.row_c, p.t_c + d_cam, p.frame_ref,
                             p.row_ref, p.t_ref + d_ref) for p in matched.pairs])


@pytest.mark.parametrize('seed', range(100))
def test_reference_shift_covariance(seed):
    rng, matched = _noisy_pair(seed)
    delta = rng.uniform(-1e4, 1e4)
    a = solve_pairwise(matched)
    b = solve_pairwise(_shifted(matched, d_ref=delta))
    pa, pb = a.params['c'], b.params['c']
    assert pb.beta == pytest.approx(pa.beta + delta, abs=1e-6)
    assert pb.alpha == pytest.approx(pa.alpha, abs=1e-12)
    assert pb.t_row == pytest.approx(pa.t_row, rel=1e-7)
    assert b.t_row_ref == pytest.approx(a.t_row_ref, rel=1e-7)


@pytest.mark.parametrize('seed', range(100))
def test_camera_shift_covariance(seed):
    rng, matched = _noisy_pair(seed)
    delta = rng.uniform(-1e4, 1e4)
    a = solve_pairwise(matched)
    b = solve_pairwise(_shifted(matched, d_cam=delta))
    pa, pb = a.params['c'], b.params['c']
    assert pb.beta == pytest.approx(pa.beta - pa.alpha * delta, abs=1e-6)
    assert pb.alpha == pytest.approx(pa.alpha, abs=1e-12)
    assert pb.t_row == pytest.approx(pa.t_row, rel=1e-7)


@pytest.mark.parametrize('seed', range(100))
def test_residuals_orthogonal_to_design(seed):
    rng = np.random.default_rng(seed)
    cams = [('c%d' % i, 1 + rng.uniform(-2e-5, 2e-5), rng.uniform(-45000, 45000),
             rng.uniform(0.015, 0.05), 2160) for i in range(int(rng.integers(1, 4)))]
    sets = joint_sets(rng, n=12, noise=15.0, cameras=cams)
    sol = solve_joint(sets)
    system = design_system(sets)
    res = np.concatenate([sol.residuals[m.camera_id] for m in sets])
    for column in system.matrix.T:
        assert abs(column.dot(res)) <= 1e-8 * np.linalg.norm(column) * np.linalg.norm(res)


@pytest.mark.parametrize('seed', range(100))
def test_noiseless_recovery_property(seed):
    rng = np.random.default_rng(seed)
    alpha = 1 + rng.uniform(-2e-5, 2e-5)
    beta = rng.uniform(-45000, 45000)
    t_row, t_ref = rng.uniform(0.015, 0.05), rng.uniform(0.015, 0.05)
    matched = make_set('c', alpha, beta, t_row, t_ref, int(rng.integers(8, 30)), rng)
    p = solve_pairwise(matched).params['c']
    assert rel(p.alpha, alpha) < 1e-9
    assert abs(p.beta - beta) < 1e-6
    assert rel(p.t_row, t_row) < 1e-7


def test_residual_report():
    rng = np.random.default_rng(12)
    sets = joint_sets(rng, n=20, noise=30.0)
    sol = solve_joint(sets)
    table, stds = residual_report(sol, sets)
    assert table.colnames == REPORT_COLUMNS
    assert len(table) == 60
    for cam in ['cam2', 'cam3', 'cam4']:
        res = np.asarray(table['residual_ms'][table['camera'] == cam])
        assert stds[cam] == pytest.approx(np.std(res), rel=1e-12)
        assert abs(np.mean(res)) < 1e-8
        recomputed = [sol.apply(cam, r['t_c_ms'], r['row_c'])
                      - sol.apply('ref', r['t_ref_ms'], r['row_ref'])
                      for r in table[table['camera'] == cam]]
        assert np.allclose(recomputed, res, atol=1e-9)
    assert sol.std_error == pytest.approx(np.std(np.asarray(table['residual_ms'])))


def test_residual_report_noiseless():
    sets = joint_sets(np.random.default_rng(13))
    table, stds = residual_report(solve_joint(sets), sets)
    assert np.all(np.abs(table['residual_ms']) < 1e-6)


def test_solution_dict_round_trip():
    rng = np.random.default_rng(14)
    sets = joint_sets(rng, noise=5.0)
    sol = solve_joint(sets)
    d = sol.to_dict()
    assert d['reference'] == {'camera_id': 'ref', 't_row_ms': sol.t_row_ref}
    assert set(d['cameras']['cam3']) >= {'alpha', 'beta_ms', 't_row_ms'}
    assert len(d['residuals_ms']) == 45
    back = SyncSolution.from_dict(d)
    assert back.params == sol.params
    assert back.std_error == pytest.approx(sol.std_error)
    assert back.apply('ref', 1000.0, 10) == 1000.0 + 10 * sol.t_row_ref
    with pytest.raises(DomainError):
        back.apply('nope', 0.0, 0)
    with pytest.raises(ValidationError):
        SyncSolution.from_dict({'cameras': {}})


def test_solution_apply_example():
    sol = SyncSolution('cam1', 0.0154, {'cam2': SyncParams(1 + 8.39e-6, 6066.7, 0.015)})
    assert sol.apply('cam2', 60000.0, 100) == pytest.approx(66068.7034, abs=1e-6)
    assert sol.drift_lines_per_second('cam2') == pytest.approx(-8.39e-6 / 0.015 * 1e3)


def test_residual_band_monte_carlo():
    # row noise of 30 rows at 0.0154 ms per row on the synchronized cameras
    cams = [('cam2', 1 + 8.39e-6, 6066.7, 0.0154, 2160),
            ('cam3', 1 - 3.12e-6, -37500.2, 0.0154, 2160),
            ('cam4', 1 - 8.35e-6, -23858.7, 0.0154, 2160)]
    inside, all_stds = 0, []
    trials = 200
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        sets = joint_sets(rng, n=60, noise=30.0, cameras=cams)
        stds = list(solve_joint(sets).camera_std().values())
        all_stds.extend(stds)
        inside += all(0.3 <= s <= 0.7 for s in stds)
    assert inside >= 0.95 * trials
    assert 0.3 <= np.median(all_stds) <= 0.6


def test_residual_report_uses_each_pair_reference_row_period():
    rng = np.random.default_rng(15)
    sets = [make_set('cam2', 1 + 8e-6, 6000.0, 0.0154, 0.0159, 20, rng, noise=30.0),
            make_set('cam3', 1 - 3e-6, -3000.0, 0.0462, 0.0158, 20, rng, rows=720,
                     noise=30.0)]
    fits = [solve_pairwise(m) for m in sets]
    pair_t_row_ref = dict((m.camera_id, f.t_row_ref) for m, f in zip(sets, fits))
    sol = SyncSolution('ref', np.mean(list(pair_t_row_ref.values())),
                       dict((m.camera_id, f.params[m.camera_id]) for m, f in zip(sets, fits)),
                       dict((m.camera_id, f.residuals[m.camera_id]) for m, f in zip(sets, fits)),
                       pair_t_row_ref)
    assert sol.reference_row_period('cam2') == pair_t_row_ref['cam2']
    assert sol.reference_row_period() == sol.t_row_ref
    table, stds = residual_report(sol, sets)
    for m, f in zip(sets, fits):
        res = np.asarray(table['residual_ms'][table['camera'] == m.camera_id])
        assert np.allclose(res, f.residuals[m.camera_id], rtol=0, atol=1e-9)
        assert stds[m.camera_id] == pytest.approx(sol.camera_std()[m.camera_id])
    d = sol.to_dict()
    assert d['cameras']['cam3']['t_row_ref_ms'] == pair_t_row_ref['cam3']
    assert SyncSolution.from_dict(d).pair_t_row_ref == sol.pair_t_row_ref
    assert 't_row_ref_ms' not in solve_joint(sets[:1]).to_dict()['cameras']['cam2']
    with pytest.raises(DomainError):
        sol.apply('ref', 0.0, 10, pair='cam9')
