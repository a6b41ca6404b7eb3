# cli.py - command-line entry point: synth, separate, eval, sweep, refocus and video

import argparse
import glob
import hashlib
import json
import logging
import os
import platform
import re
import sys
from dataclasses import dataclass

import numpy as np
import scipy

import pylayersep
from pylayersep.classes.errors import LayerSepError, LightFieldError, SolverDivergenceError
from pylayersep.classes.lightfield import DisparityMap, load_disparity, load_lightfield, save_disparity
from pylayersep.classes.solver import separate
from pylayersep.config import default_log_level, load_solver_config
from pylayersep.extensions.common import read_image, write_image
from pylayersep.extensions.init_flow import estimate_initial_disparity, load_flows
from pylayersep.extensions.metrics import append_csv_row, evaluate, write_sweep_csv
from pylayersep.extensions.refocus import RefocusParams, refocus
from pylayersep.extensions.synth import (SyntheticSpec, alpha_sweep, load_ground_truth, load_spec, render,
                                         render_sequence, save_synthetic)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
RUN_FILE = 'run.json'
DIAGNOSTICS_FILE = 'diagnostics.log'
FRAME_PATTERN = re.compile(r'^frame_(\d+)$')
DEFAULT_ALPHAS = [0.1, 0.2, 0.3, 0.4, 0.45, 0.5]


def configure_logging(level):
    """Console handler on the package logger at `level`"""
    root = logging.getLogger('pylayersep')
    root.setLevel(logging.DEBUG)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    console.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    root.addHandler(console)
    return [console]


def attach_diagnostics(log_file):
    """Every DEBUG line of the package, including one per inner solver step, into log_file"""
    file_handler = logging.FileHandler(log_file, mode='w')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    logging.getLogger('pylayersep').addHandler(file_handler)
    return [file_handler]


def release_logging(handlers):
    root = logging.getLogger('pylayersep')
    for handler in handlers:
        root.removeHandler(handler)
        handler.close()


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def write_run_manifest(out_dir, mode, config, lf=None, extra=None):
    """run.json: hashes of the canonical config and of the input views, plus library versions"""
    manifest = {
        'mode': mode,
        'config_sha256': sha256_bytes(config.canonical_json().encode('utf-8')),
        'input_sha256': sha256_bytes(np.ascontiguousarray(lf.views).tobytes()) if lf is not None else None,
        'config': config.to_dict(),
        'versions': {
            'pylayersep': pylayersep.__version__,
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, RUN_FILE)
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def write_objective_csv(path, result):
    with open(path, 'w') as f:
        f.write('outer,objective,inner_iterations\n')
        for index, value in enumerate(result.objective_history):
            inner = result.inner_iterations[index] if index < len(result.inner_iterations) else ''
            f.write(f'{index},{value!r},{inner}\n')


def write_separation(out_dir, result):
    os.makedirs(out_dir, exist_ok=True)
    write_image(os.path.join(out_dir, 'T_ref.png'), result.T_ref)
    write_image(os.path.join(out_dir, 'S_ref.png'), result.S_ref)
    save_disparity(os.path.join(out_dir, 'd.pfm'), result.d)
    write_objective_csv(os.path.join(out_dir, 'objective.csv'), result)
    print(f"✅ wrote T_ref.png, S_ref.png, d.pfm, objective.csv to {out_dir}")


def run_separation(lf, config, flows_dir=None, d0=None):
    """Initial disparity (given, from flow files, or from the matcher) followed by the solver"""
    solver = config.solver
    if d0 is None:
        flows = load_flows(flows_dir, lf) if flows_dir else None
        d0 = estimate_initial_disparity(lf, config.flow, solver.dmin, solver.dmax, flows=flows)
    else:
        d0 = DisparityMap.clipped(d0.d, solver.dmin, solver.dmax)
    logger.info("initial disparity: mean %.3f, range [%.3f, %.3f]", float(d0.d.mean()),
                float(d0.d.min()), float(d0.d.max()))
    return separate(lf, d0, solver)


def _exit_for(result):
    if result.converged:
        return EXIT_OK
    print(f"⚠️  solver stopped without convergence (status {result.status})")
    return EXIT_NOT_CONVERGED


def cmd_synth(args, config):
    spec = _synthetic_spec(args)
    out_dir = args.out or 'synthetic_lf'
    if args.frames > 1:
        for k, (lf, truth) in enumerate(render_sequence(spec, args.frames)):
            save_synthetic(lf, truth, spec, os.path.join(out_dir, f'frame_{k}'))
        print(f"✅ wrote {args.frames} frames of a {spec.scene} scene to {out_dir}")
        return EXIT_OK
    lf, truth = render(spec)
    save_synthetic(lf, truth, spec, out_dir)
    print(f"✅ wrote {lf.num_views} views and ground truth to {out_dir}")
    return EXIT_OK


def cmd_separate(args, config):
    out_dir = args.out or os.path.join(args.input, 'out')
    lf = load_lightfield(args.input)
    os.makedirs(out_dir, exist_ok=True)
    handlers = attach_diagnostics(os.path.join(out_dir, DIAGNOSTICS_FILE))
    try:
        d0 = load_disparity(args.d0) if args.d0 else None
        result = run_separation(lf, config, args.flows, d0)
        write_separation(out_dir, result)
        write_run_manifest(out_dir, 'separate', config, lf, {'status': result.status})
    finally:
        release_logging(handlers)
    return _exit_for(result)


def _border_mask(shape, border):
    if border <= 0:
        return None
    mask = np.zeros(shape, dtype=bool)
    mask[border:shape[0] - border, border:shape[1] - border] = True
    return mask


def cmd_eval(args, config):
    truth = load_ground_truth(args.ground_truth)
    result = StoredResult(read_image(os.path.join(args.input, 'T_ref.png')),
                           read_image(os.path.join(args.input, 'S_ref.png')),
                           load_disparity(os.path.join(args.input, 'd.pfm')))
    report = evaluate(result, truth, mask=_border_mask(truth.d_true.shape, args.border), thresh=args.threshold)
    out_dir = args.out or args.input
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, 'eval.json'), 'w') as f:
        json.dump(report.to_dict(), f, indent=2)
    if args.csv:
        append_csv_row(args.csv, report, truth.alpha)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


@dataclass(frozen=True, eq=False)
class StoredResult:
    """T_ref, S_ref and d read back from a separation output directory"""
    T_ref: np.ndarray
    S_ref: np.ndarray
    d: DisparityMap
    valid_mask: np.ndarray = None


def _plot_sweep(path, rows):
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    done = [row for row in rows if not row['error']]
    alphas = [row['alpha'] for row in done]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(alphas, [row['incorrect_pct_T'] for row in done], 'o-', label='transmitted')
    ax.plot(alphas, [row['incorrect_pct_S'] for row in done], 's-', label='secondary')
    ax.set_xlabel('alpha')
    ax.set_ylabel('incorrect pixels (%)')
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_sweep(args, config):
    alphas = DEFAULT_ALPHAS if args.alphas is None else args.alphas
    if not alphas:
        print("❌ empty alpha list", file=sys.stderr)
        return EXIT_INPUT
    spec = _synthetic_spec(args)
    out_dir = args.out or 'sweep'
    os.makedirs(out_dir, exist_ok=True)
    handlers = attach_diagnostics(os.path.join(out_dir, DIAGNOSTICS_FILE))

    rows = []
    try:
        for alpha, (lf, truth) in zip(alphas, alpha_sweep(spec, alphas)):
            try:
                d0 = truth.d_true if args.oracle_disparity else None
                result = run_separation(lf, config, d0=d0)
                report = evaluate(result, truth)
                rows.append(report.sweep_row(alpha))
                print(f"✅ alpha {alpha:.2f}: T {report.incorrect_pixel_pct_T:.2f}%, "
                      f"S {report.incorrect_pixel_pct_S:.2f}%, d {report.bad_pixel_pct_d:.2f}%")
            except LayerSepError as e:
                logger.error("alpha %.2f failed: %s", alpha, e)
                rows.append({'alpha': alpha, 'error': str(e)})
                print(f"❌ alpha {alpha:.2f}: {e}", file=sys.stderr)
        write_sweep_csv(os.path.join(out_dir, 'sweep.csv'), rows)
        _plot_sweep(os.path.join(out_dir, 'sweep.png'), [dict({'error': ''}, **row) for row in rows])
        write_run_manifest(out_dir, 'sweep', config, extra={'alphas': list(alphas), 'spec': spec.to_dict()})
    finally:
        release_logging(handlers)

    print(f"✅ wrote sweep.csv and sweep.png to {out_dir}")
    return EXIT_OK if any(not row.get('error') for row in rows) else EXIT_INPUT


def cmd_refocus(args, config):
    T_ref = read_image(os.path.join(args.input, 'T_ref.png'))
    d = load_disparity(os.path.join(args.input, 'd.pfm'))
    image = refocus(T_ref, d, RefocusParams(args.focal, args.aperture))
    out_dir = args.out or args.input
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f'refocus_{args.focal:g}.png')
    write_image(path, image)
    print(f"✅ wrote {path}")
    return EXIT_OK


def _frame_dirs(input_dir, frames):
    found = {}
    for path in glob.glob(os.path.join(input_dir, 'frame_*')):
        match = FRAME_PATTERN.match(os.path.basename(path))
        if match and os.path.isdir(path):
            found[int(match.group(1))] = path
    if not found:
        return []
    first, last = min(found), max(found) + 1
    if frames:
        start, _, stop = frames.partition(':')
        try:
            first = int(start) if start else first
            last = int(stop) if stop else last
        except ValueError:
            raise LightFieldError(f"invalid frame range '{frames}', expected a:b with integer bounds",
                                  input_dir) from None
    return [(k, found.get(k, os.path.join(input_dir, f'frame_{k}'))) for k in range(first, last)]


def cmd_video(args, config):
    frames = _frame_dirs(args.input, args.frames)
    if not frames:
        print(f"❌ no frame_<k> directories in {args.input}", file=sys.stderr)
        return EXIT_INPUT

    code = EXIT_OK
    processed = 0
    failed = []
    previous = None
    for k, frame_dir in frames:
        try:
            lf = load_lightfield(frame_dir)
        except LayerSepError as e:
            logger.warning("skipping frame %d: %s", k, e)
            print(f"⚠️  skipping frame {k}: {e}")
            continue

        out_dir = os.path.join(frame_dir, 'out')
        os.makedirs(out_dir, exist_ok=True)
        handlers = attach_diagnostics(os.path.join(out_dir, DIAGNOSTICS_FILE))
        try:
            flows_dir = os.path.join(args.flows, f'frame_{k}') if args.flows else None
            # warm start from the previous frame's disparity
            result = run_separation(lf, config, flows_dir, d0=previous)
            write_separation(out_dir, result)
            write_run_manifest(out_dir, 'video', config, lf,
                               {'frame': k, 'warm_start': previous is not None, 'status': result.status})
        except LayerSepError as e:
            logger.error("frame %d failed: %s", k, e)
            print(f"❌ frame {k}: {e}", file=sys.stderr)
            write_run_manifest(out_dir, 'video', config, lf,
                               {'frame': k, 'warm_start': previous is not None, 'status': 'failed',
                                'error': str(e)})
            failed.append(k)
            code = EXIT_NOT_CONVERGED
            continue
        finally:
            release_logging(handlers)
        previous = result.d
        processed += 1
        if not result.converged:
            code = EXIT_NOT_CONVERGED

    if processed == 0:
        return EXIT_INPUT
    if failed:
        print(f"⚠️  frames {', '.join(str(k) for k in failed)} failed, see their run.json")
    print(f"✅ processed {processed} of {len(frames)} frames")
    return code


def _synthetic_spec(args):
    if args.spec:
        spec = load_spec(args.spec)
    else:
        spec = SyntheticSpec(grid_size=args.grid, height=args.size, width=args.size, channels=args.channels,
                             scene=args.scene, disparity=args.disparity,
                             background_disparity=args.background_disparity,
                             secondary_texture=args.secondary, secondary_motion=tuple(args.motion),
                             alpha=args.alpha)
    if args.seed is not None:
        spec = SyntheticSpec.from_dict(dict(spec.to_dict(), seed=args.seed))
    return spec


def _float_list(text):
    return [float(v) for v in text.split(',') if v.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='solver/flow JSON configuration')
    common.add_argument('--out', help='output directory')
    common.add_argument('--flows', help='directory of flow_<row>_<col>.flo files replacing the matcher')
    common.add_argument('--seed', type=int, help='seed of the synthetic scene')
    common.add_argument('--log-level', default=default_log_level(),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], type=str.upper)

    scene = argparse.ArgumentParser(add_help=False)
    scene.add_argument('--spec', help='synthetic scene JSON (overrides the scene flags)')
    scene.add_argument('--grid', type=int, default=3)
    scene.add_argument('--size', type=int, default=64)
    scene.add_argument('--channels', type=int, default=1, choices=[1, 3])
    scene.add_argument('--scene', default='plane', choices=['plane', 'two_plane'])
    scene.add_argument('--disparity', type=float, default=1.0)
    scene.add_argument('--background-disparity', type=float, default=0.0)
    scene.add_argument('--motion', type=float, nargs=2, default=[1.25, 1.25], metavar=('MX', 'MY'))
    scene.add_argument('--secondary', default='pattern',
                       help="secondary layer texture: 'pattern', 'shaded' or an image path")
    scene.add_argument('--alpha', type=float, default=0.2)

    parser = argparse.ArgumentParser(prog='pylayersep',
                                     description='Layer separation and disparity refinement for light fields')
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', parents=[common, scene], help='render a synthetic light field')
    synth.add_argument('--frames', type=int, default=1, help='render a sequence with a moving secondary layer')
    synth.set_defaults(handler=cmd_synth)

    sep = commands.add_parser('separate', parents=[common], help='separate the layers of a light field')
    sep.add_argument('input', help='light field directory')
    sep.add_argument('--d0', help='initial disparity PFM (skips flow estimation)')
    sep.set_defaults(handler=cmd_separate)

    ev = commands.add_parser('eval', parents=[common], help='evaluate a separation against ground truth')
    ev.add_argument('input', help='separation output directory')
    ev.add_argument('ground_truth', help='gt/ directory written by synth')
    ev.add_argument('--csv', help='append a sweep row to this CSV file')
    ev.add_argument('--threshold', type=float, default=0.1)
    ev.add_argument('--border', type=int, default=0, help='exclude this many border pixels')
    ev.set_defaults(handler=cmd_eval)

    sweep = commands.add_parser('sweep', parents=[common, scene], help='accuracy versus alpha')
    sweep.add_argument('--alphas', type=_float_list, help='comma separated blend weights')
    sweep.add_argument('--oracle-disparity', action='store_true', help='start from the true disparity')
    sweep.set_defaults(handler=cmd_sweep)

    ref = commands.add_parser('refocus', parents=[common], help='depth-guided refocusing of T_ref')
    ref.add_argument('input', help='separation output directory')
    ref.add_argument('--focal', type=float, required=True)
    ref.add_argument('--aperture', type=float, default=2.0)
    ref.set_defaults(handler=cmd_refocus)

    video = commands.add_parser('video', parents=[common], help='per-frame separation with warm start')
    video.add_argument('input', help='directory of frame_<k> light fields')
    video.add_argument('--frames', help='frame range a:b (b exclusive)')
    video.set_defaults(handler=cmd_video)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = configure_logging(args.log_level)
    try:
        config = load_solver_config(args.config)
        return args.handler(args, config)
    except SolverDivergenceError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (LayerSepError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        release_logging(handlers)


if __name__ == '__main__':
    sys.exit(main())
