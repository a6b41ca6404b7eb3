import csv
import json
import os

import numpy as np
import pytest

from pylayersep.classes.lightfield import load_lightfield
from pylayersep import cli
from pylayersep.classes.errors import SolverDivergenceError
from pylayersep.cli import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, _frame_dirs, build_parser, main, run_separation
from pylayersep.extensions.init_flow import FlowField, save_flows

FAST_CONFIG = {
    'solver': {'max_outer': 2, 'max_inner': 15},
    'flow': {'levels': 1, 'search_radius': 3},
}
SCENE = ['--size', '32', '--alpha', '0.2']


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('LAYERSEP_CONFIG', raising=False)
    with open(tmp_path / 'solver_config.json', 'w') as f:
        json.dump(FAST_CONFIG, f)
    return tmp_path


@pytest.fixture
def scene(workdir):
    assert main(['synth', '--out', 'lf'] + SCENE) == EXIT_OK
    return workdir / 'lf'


def test_synth_writes_views_and_ground_truth(scene):
    assert sorted(os.listdir(scene / 'gt')) == ['S_ref.png', 'T_ref.png', 'd_true.pfm', 'spec.json']
    lf = load_lightfield(str(scene))
    assert lf.num_views == 9
    assert lf.shape == (32, 32)


def test_synth_seed_changes_the_scene(workdir):
    main(['synth', '--out', 'a', '--seed', '1'] + SCENE)
    main(['synth', '--out', 'b', '--seed', '2'] + SCENE)
    assert not np.array_equal(load_lightfield('a').views, load_lightfield('b').views)


def test_separate_empty_directory(workdir, capsys):
    os.makedirs('empty')
    assert main(['separate', 'empty']) == EXIT_INPUT
    assert 'missing view' in capsys.readouterr().err


def test_separate_and_eval(scene, workdir):
    code = main(['separate', str(scene), '--out', 'out'])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)

    out = workdir / 'out'
    for name in ('T_ref.png', 'S_ref.png', 'd.pfm', 'objective.csv', 'run.json', 'diagnostics.log'):
        assert (out / name).exists(), name

    with open(out / 'run.json') as f:
        manifest = json.load(f)
    assert manifest['mode'] == 'separate'
    assert len(manifest['config_sha256']) == 64
    assert len(manifest['input_sha256']) == 64
    assert manifest['config']['solver']['max_outer'] == 2
    assert manifest['status'] in ('converged', 'max_iterations', 'stalled')

    with open(out / 'objective.csv') as f:
        rows = list(csv.DictReader(f))
    assert 1 <= len(rows) <= 2

    assert main(['eval', 'out', str(scene / 'gt'), '--csv', 'sweep.csv', '--border', '4']) == EXIT_OK
    with open(out / 'eval.json') as f:
        report = json.load(f)
    assert 0.0 <= report['incorrect_pixel_pct_T'] <= 100.0
    assert 0.0 <= report['bad_pixel_pct_d'] <= 100.0
    with open('sweep.csv') as f:
        assert float(next(csv.DictReader(f))['alpha']) == pytest.approx(0.2)

    assert main(['refocus', 'out', '--focal', '1']) == EXIT_OK
    assert (out / 'refocus_1.png').exists()


def test_precomputed_flows_skip_the_matcher(scene, workdir):
    lf = load_lightfield(str(scene))
    # unit disparity: w = −φ
    flows = [FlowField(np.stack([np.full(lf.shape, -1.0 * o.dcol), np.full(lf.shape, -1.0 * o.drow)], axis=-1), o)
             for o in lf.offsets]
    save_flows('flows', flows, lf)

    main(['separate', str(scene), '--out', 'out', '--flows', 'flows'])
    with open(workdir / 'out' / 'diagnostics.log') as f:
        assert 'matcher skipped' in f.read()


def test_separate_from_given_disparity(scene, workdir):
    code = main(['separate', str(scene), '--out', 'out', '--d0', str(scene / 'gt' / 'd_true.pfm')])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    with open(workdir / 'out' / 'diagnostics.log') as f:
        assert 'estimating correspondences' not in f.read()


def test_sweep_rejects_an_empty_alpha_list(workdir):
    assert main(['sweep', '--alphas', '', '--out', 'sweep']) == EXIT_INPUT


def test_sweep(workdir):
    code = main(['sweep', '--alphas', '0.1,0.3', '--out', 'sweep', '--oracle-disparity'] + SCENE)
    assert code == EXIT_OK
    with open(workdir / 'sweep' / 'sweep.csv') as f:
        rows = list(csv.DictReader(f))
    assert [float(row['alpha']) for row in rows] == [0.1, 0.3]
    assert (workdir / 'sweep' / 'sweep.png').exists()
    with open(workdir / 'sweep' / 'run.json') as f:
        assert json.load(f)['alphas'] == [0.1, 0.3]


def test_video_without_frames(workdir):
    os.makedirs('frames')
    assert main(['video', 'frames']) == EXIT_INPUT


def test_video_warm_start(workdir):
    assert main(['synth', '--out', 'seq', '--frames', '2'] + SCENE) == EXIT_OK
    code = main(['video', 'seq'])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    for k, warm in ((0, False), (1, True)):
        with open(workdir / 'seq' / f'frame_{k}' / 'out' / 'run.json') as f:
            manifest = json.load(f)
        assert manifest['frame'] == k
        assert manifest['warm_start'] is warm


def test_frame_range(tmp_path):
    for k in (0, 1, 3):
        os.makedirs(tmp_path / f'frame_{k}')
    frames = _frame_dirs(str(tmp_path), '1:4')
    assert [k for k, _ in frames] == [1, 2, 3]
    assert [k for k, _ in _frame_dirs(str(tmp_path), None)] == [0, 1, 2, 3]


def test_missing_frame_is_skipped(workdir, capsys):
    main(['synth', '--out', 'seq', '--frames', '2'] + SCENE)
    os.rename('seq/frame_1', 'seq/frame_2')
    code = main(['video', 'seq'])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    assert 'skipping frame 1' in capsys.readouterr().out


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_bad_frame_range_is_an_input_error(workdir, capsys):
    main(['synth', '--out', 'seq', '--frames', '2'] + SCENE)
    assert main(['video', 'seq', '--frames', 'a:b']) == EXIT_INPUT
    assert 'invalid frame range' in capsys.readouterr().err


def test_failed_frame_does_not_stop_the_video(workdir, monkeypatch, capsys):
    main(['synth', '--out', 'seq', '--frames', '3'] + SCENE)
    calls = []

    def diverging_second_frame(lf, config, flows_dir=None, d0=None):
        calls.append(d0)
        if len(calls) == 2:
            raise SolverDivergenceError("feasibility residual grew for 5 consecutive inner steps", [1.0, 2.0])
        return run_separation(lf, config, flows_dir, d0)

    monkeypatch.setattr(cli, 'run_separation', diverging_second_frame)
    assert main(['video', 'seq']) == EXIT_NOT_CONVERGED
    assert len(calls) == 3
    assert 'frame 1' in capsys.readouterr().err

    with open(workdir / 'seq' / 'frame_1' / 'out' / 'run.json') as f:
        failed = json.load(f)
    assert failed['status'] == 'failed'
    assert 'feasibility residual' in failed['error']
    with open(workdir / 'seq' / 'frame_2' / 'out' / 'run.json') as f:
        assert json.load(f)['warm_start'] is True
    assert (workdir / 'seq' / 'frame_2' / 'out' / 'T_ref.png').exists()
