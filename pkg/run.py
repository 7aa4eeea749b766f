#!/usr/bin/env python
""" Swimmer experiment runner

Runs stroke simulations, design-ratio sweeps, Lie bracket checks, optimal control solves and the
table reproductions from JSON (or YAML) configs. Every command writes its resolved config to
<out>/args.yaml next to its results.

    python run.py simulate --config configs/octagon.json --out output/octagon
    python run.py table1 --out output/table1 --steps 2000
    python run.py ocp --set b=0.75 --set N=150

Exit codes: 0 ok, 2 invalid config, 3 solver / integration failure, 4 I/O error. Failures also
print a JSON error object on stderr.
"""
import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import torch
import yaml
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException
from timm.utils import setup_default_logging

from purcell import (
    ControlSchedule, DesignParams, DragModel, IntegrationError, OctagonSpec, PhasePoint, SingularResistanceError,
    SolverError, StrokePolygon, bracket_x_aligned, integrate, lie_bracket_numeric, octagon_polygon,
    optimal_design, ratio_sweep, stroke_displacement, stroke_family, stroke_regime)
from purcell.config.config import default_swimmer_configs, experiment_param_dict, get_experiment_config
from purcell.expansion import OPTIMAL_RATIO
from purcell.helpers import save_json, save_phase_portrait, save_table, save_trajectory
from purcell.ocp import OcpSpec, SolveOptions, classify_schedule, monotonicity_warnings, solve, transcribe
from purcell.simulate import stroke_schedule
from utils import get_outdir, map_rows, thread_count

COMMANDS = ('simulate', 'bracket', 'sweep', 'ocp', 'table1', 'table2', 'table3')
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

parser = argparse.ArgumentParser(description='Three-link swimmer experiments')
parser.add_argument('command', choices=COMMANDS,
                    help='experiment to run')
parser.add_argument('-c', '--config', default='', type=str, metavar='FILE',
                    help='JSON/YAML config file overriding the command defaults')
parser.add_argument('--out', default='./output', type=str, metavar='DIR',
                    help='output directory (default: ./output)')
parser.add_argument('--seed', default=None, type=int, metavar='S',
                    help='random seed (multistart seeds start here for ocp/table3)')
parser.add_argument('--steps', default=None, type=int, metavar='N',
                    help='integration steps (simulate/sweep/table1/table2) or time steps N (ocp/table3)')
parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                    help='dotted config override, may be repeated')


def load_config(command, path='', overrides=(), seed=None, steps=None):
    """Command defaults <- experiment preset <- config file <- flags. Unknown keys are rejected."""
    user = OmegaConf.create()
    if path:
        with open(path, 'r') as f:
            doc = yaml.safe_load(f)
        if doc is not None and not isinstance(doc, dict):
            raise ValueError('config file {} must hold a mapping'.format(path))
        user = OmegaConf.create(doc or {})

    if command.startswith('table'):
        name = user.get('experiment', command)
        if name not in experiment_param_dict:
            raise ValueError('unknown experiment {}'.format(name))
        base = get_experiment_config(name)
    else:
        base = default_swimmer_configs(command)
    cfg = OmegaConf.merge(base, user, OmegaConf.from_dotlist(list(overrides)))

    if seed is not None:
        cfg.seed = seed
    if steps is not None:
        if command in ('ocp', 'table3'):
            cfg.N = steps
        elif 'n_steps' in cfg:
            cfg.n_steps = steps
        else:
            logging.warning('--steps has no effect on {}'.format(command))
    return cfg


def build_drag(cfg) -> DragModel:
    return DragModel(float(cfg.xi), float(cfg.eta))


def build_design(cfg, drag) -> DesignParams:
    if cfg.ratio is not None and cfg.L is not None:
        raise ValueError('design takes either ratio or L, not both')
    if cfg.ratio is not None:
        if cfg.ratio <= 0:
            raise ValueError('design ratio must be positive, got {}'.format(cfg.ratio))
        return DesignParams.from_ratio(cfg.c, cfg.ratio, drag)
    if cfg.L is not None:
        return DesignParams.from_total_length(cfg.c, cfg.L, drag)
    best = optimal_design(cfg.c)
    return DesignParams(best.L, best.L2, drag)


def build_stroke(cfg):
    """Returns (schedule, polygon or None, start point, repeats) for a stroke config."""
    repeats = 1
    if cfg.family == 'schedule':
        if cfg.segments is None:
            raise ValueError('schedule strokes need segments')
        schedule = ControlSchedule.from_dict({'segments': OmegaConf.to_container(cfg.segments)})
        start = PhasePoint(*cfg.start)
        polygon = None
    else:
        if cfg.family == 'bounds':
            repeats, spec, _ = stroke_family(cfg.a, cfg.b, cfg.T)
            polygon = octagon_polygon(spec)
        elif cfg.family == 'octagon':
            if cfg.sides is None or len(cfg.sides) != 4:
                raise ValueError('octagon strokes need four sides')
            polygon = octagon_polygon(OctagonSpec(*cfg.sides), PhasePoint(*cfg.center))
        elif cfg.family == 'polygon':
            if cfg.vertices is None:
                raise ValueError('polygon strokes need vertices')
            polygon = StrokePolygon(np.asarray(OmegaConf.to_container(cfg.vertices)), cfg.orientation)
        else:
            raise ValueError('unknown stroke family {}'.format(cfg.family))
        if cfg.repeats is not None:
            repeats = cfg.repeats
        schedule = stroke_schedule(polygon, cfg.T, cfg.b, repeats)
        start = polygon.start
    if cfg.reverse:
        schedule = schedule.reversed()
    return schedule, polygon, start, repeats


def _design_doc(params):
    return {'L': float(params.L), 'L2': float(params.L2), 'c': float(params.c), 'ratio': float(params.ratio)}


def _deviation(measured, reference):
    return None if reference is None else measured / reference - 1.


def cmd_simulate(cfg, out_dir, threads=1):
    drag = build_drag(cfg.drag)
    params = build_design(cfg.design, drag)
    schedule, _, start, _ = build_stroke(cfg.stroke)
    z0 = [start.b1, start.b3, 0., 0., 0.]
    traj = integrate(params, z0, schedule, cfg.n_steps, cfg.method)
    d = traj.displacement()
    save_trajectory(traj, os.path.join(out_dir, 'trajectory.csv'))
    save_phase_portrait(traj, os.path.join(out_dir, 'phase_portrait.csv'))
    summary = {
        'dx': d.dx, 'dy': d.dy, 'dtheta': d.dtheta,
        'duration': schedule.total_duration,
        'average_speed': d.dx / schedule.total_duration,
        'n_steps': len(traj.steps),
        'method': cfg.method,
        'design': _design_doc(params),
    }
    save_json(summary, os.path.join(out_dir, 'summary.json'))
    logging.info('Simulated {} steps: dx {:.6e} dy {:.3e} dtheta {:.3e}'.format(
        len(traj.steps), d.dx, d.dy, d.dtheta))
    return summary


def cmd_bracket(cfg, out_dir, threads=1):
    drag = build_drag(cfg.drag)
    params = build_design(cfg.design, drag)
    numeric = lie_bracket_numeric(params, list(cfg.state), cfg.h).vec
    analytic = float(bracket_x_aligned(params))
    aligned = cfg.state[0] == 0 and cfg.state[1] == 0 and cfg.state[4] == 0
    abs_error = abs(float(numeric[2]) - analytic)
    result = {
        'numeric': [float(v) for v in numeric],
        'analytic': analytic,
        'abs_error': abs_error,
        'rel_error': abs_error / abs(analytic) if analytic != 0 else None,
        'aligned': bool(aligned),
        'h': cfg.h,
        'design': _design_doc(params),
    }
    save_json(result, os.path.join(out_dir, 'bracket.json'))
    logging.info('Bracket x: numeric {:.10f} analytic {:.10f}'.format(float(numeric[2]), analytic))
    return result


def cmd_sweep(cfg, out_dir, threads=1):
    drag = build_drag(cfg.drag)
    _, polygon, _, repeats = build_stroke(cfg.stroke)
    if polygon is None or cfg.stroke.reverse:
        raise ValueError('sweeps need a forward polygon stroke')
    lo, hi = cfg.ratio_grid
    grid = np.linspace(lo, hi, cfg.grid_points)
    res = ratio_sweep(cfg.c, drag, polygon, cfg.stroke.T, cfg.stroke.b, grid, cfg.refine, cfg.n_steps, repeats,
                      cfg.tol)
    doc = res.to_dict()
    doc['analytic_ratio'] = OPTIMAL_RATIO
    save_json(doc, os.path.join(out_dir, 'sweep.json'))
    save_table(os.path.join(out_dir, 'sweep.csv'), [res.ratios, res.displacements], ('ratio', 'dx'))
    logging.info('Best ratio {:.5f} (dx {:.6e}), small amplitude optimum {:.5f}'.format(
        res.best_ratio, res.best_dx, OPTIMAL_RATIO))
    return doc


def cmd_ocp(cfg, out_dir, threads=1):
    spec = OcpSpec(cfg.a, cfg.b, cfg.c, cfg.T, cfg.N, cfg.design_mode, cfg.L, build_drag(cfg.drag))
    problem = transcribe(spec)
    opts = SolveOptions(
        n_starts=cfg.n_starts, seed=cfg.seed, threads=threads, al_tol=cfg.al_tol, max_outer=cfg.max_outer,
        inner_maxiter=cfg.inner_maxiter, family_start=cfg.family_start, polish=cfg.polish)
    logging.info('Solving {} variables, {} constraints, {} starts'.format(
        problem.n_vars, problem.n_constraints, opts.n_starts))
    sol = solve(problem, opts)
    doc = sol.to_dict()
    doc['problem'] = problem.describe()
    save_json(doc, os.path.join(out_dir, 'solution.json'))
    traj = sol.trajectory
    save_trajectory(traj, os.path.join(out_dir, 'trajectory.csv'))
    save_phase_portrait(traj, os.path.join(out_dir, 'phase_portrait.csv'))
    return {k: doc[k] for k in ('objective', 'L', 'L2', 'ratio', 'kkt', 'classification', 'seed')}


def _optimal_row(cfg, row, drag):
    k, spec, _ = stroke_family(row.a, row.b, cfg.T)
    polygon = octagon_polygon(spec)
    grid = np.linspace(cfg.ratio_grid[0], cfg.ratio_grid[1], cfg.grid_points)
    res = ratio_sweep(cfg.c, drag, polygon, cfg.T, row.b, grid, cfg.refine, cfg.n_steps, k)
    stroke = classify_schedule(stroke_schedule(polygon, cfg.T, row.b, k), row.a, row.b, polygon.start)
    return polygon, k, res, stroke


def _table_doc(cfg, rows):
    return {'experiment': cfg.experiment, 'c': cfg.c, 'T': cfg.T,
            'drag': OmegaConf.to_container(cfg.drag), 'rows': rows}


def cmd_table1(cfg, out_dir, threads=1):
    drag = build_drag(cfg.drag)

    def _row(row):
        _, k, res, stroke = _optimal_row(cfg, row, drag)
        return {
            'a': row.a, 'b': row.b, 'regime': stroke_regime(row.a, row.b, cfg.T), 'strokes': k,
            'x': res.best_dx, 'ratio': res.best_ratio, 'stroke': str(stroke),
            'reference': {'x': row.x, 'ratio': row.ratio, 'stroke': row.stroke},
            'deviation': _deviation(res.best_dx, row.x),
        }

    doc = _table_doc(cfg, map_rows(_row, cfg.rows, threads))
    save_json(doc, os.path.join(out_dir, '{}.json'.format(cfg.experiment)))
    for r in doc['rows']:
        logging.info('b={:.4f}: x(T) {:.4e} ratio {:.4f} {} (deviation {})'.format(
            r['b'], r['x'], r['ratio'], r['stroke'],
            'n/a' if r['deviation'] is None else '{:+.2%}'.format(r['deviation'])))
    return doc


def cmd_table2(cfg, out_dir, threads=1):
    drag = build_drag(cfg.drag)
    purcell = DesignParams.from_total_length(cfg.c, cfg.purcell_L, drag)

    def _row(row):
        polygon, k, res, stroke = _optimal_row(cfg, row, drag)
        purcell_x = stroke_displacement(purcell, polygon, cfg.T, row.b, cfg.n_steps, k).dx
        gain = res.best_dx / purcell_x - 1.
        return {
            'a': row.a, 'b': row.b, 'x': res.best_dx, 'ratio': res.best_ratio, 'stroke': str(stroke),
            'purcell_x': purcell_x, 'gain': gain,
            'reference': {'x': row.x, 'ratio': row.ratio, 'stroke': row.stroke, 'purcell_x': row.purcell_x,
                          'gain': row.gain},
            'deviation': _deviation(res.best_dx, row.x),
            'purcell_deviation': _deviation(purcell_x, row.purcell_x),
            'gain_deviation_pp': None if row.gain is None else 100. * (gain - row.gain),
        }

    doc = _table_doc(cfg, map_rows(_row, cfg.rows, threads))
    doc['purcell_design'] = _design_doc(purcell)
    save_json(doc, os.path.join(out_dir, '{}.json'.format(cfg.experiment)))
    for r in doc['rows']:
        logging.info('b={:.4f}: optimal {:.4e} Purcell {:.4e} gain {:.0%}'.format(
            r['b'], r['x'], r['purcell_x'], r['gain']))
    return doc


def cmd_table3(cfg, out_dir, threads=1):
    """Large amplitudes by optimal control. Best effort: local solutions are flagged, not fatal."""
    drag = build_drag(cfg.drag)
    scale = cfg.T / cfg.reference_T if cfg.reference_T else 1.
    rows = []
    for row in cfg.rows:
        spec = OcpSpec(row.a, row.b, cfg.c, cfg.T, cfg.N, 'free_L', None, drag)
        opts = SolveOptions(n_starts=cfg.n_starts, seed=cfg.seed, threads=threads, al_tol=cfg.al_tol,
                            max_outer=cfg.max_outer, inner_maxiter=cfg.inner_maxiter,
                            family_start=cfg.family_start, polish=cfg.polish)
        entry = {'a': row.a, 'b': row.b,
                 'reference': {'x': None if row.x is None else row.x * scale, 'ratio': row.ratio,
                               'stroke': row.stroke}}
        try:
            sol = solve(transcribe(spec), opts)
        except SolverError as e:
            logging.warning('a={:.4f}: {}'.format(row.a, e))
            entry.update({'error': str(e)})
            rows.append(entry)
            continue
        entry.update({
            'x': sol.objective, 'average_speed': sol.objective / cfg.T, 'ratio': sol.ratio,
            'stroke': str(sol.stroke), 'kkt': sol.kkt._asdict(), 'seed': sol.seed,
            'starts': [s._asdict() for s in sol.starts],
        })
        rows.append(entry)
        logging.info('a={:.4f}: x(T) {:.4e} ratio {:.4f} {}'.format(row.a, sol.objective, sol.ratio, sol.stroke))

    solved = [r for r in rows if 'x' in r]
    doc = _table_doc(cfg, rows)
    doc['reference_scale'] = scale
    doc['warnings'] = monotonicity_warnings([(r['a'], r['average_speed']) for r in solved])
    doc['limit_ratio_reached'] = limit_ratio_reached(rows, cfg.T)
    save_json(doc, os.path.join(out_dir, '{}.json'.format(cfg.experiment)))
    return doc


def limit_ratio_reached(rows, T, a_min=math.pi / 3, T_min=8., band=(0.64, 0.70), feasibility_tol=1e-8):
    """Whether any feasible start of a row with a >= a_min lands its link ratio in `band`.

    Only meaningful on long horizons, False below T_min.
    """
    if T < T_min:
        return False
    for r in rows:
        if r['a'] < a_min:
            continue
        for s in r.get('starts', ()):
            if s['violation'] <= feasibility_tol and band[0] <= s['ratio'] <= band[1]:
                return True
    return False


_runners = {
    'simulate': cmd_simulate,
    'bracket': cmd_bracket,
    'sweep': cmd_sweep,
    'ocp': cmd_ocp,
    'table1': cmd_table1,
    'table2': cmd_table2,
    'table3': cmd_table3,
}


def _fail(kind, exc, code):
    sys.stderr.write(json.dumps({'error': kind, 'type': type(exc).__name__, 'message': str(exc)}, sort_keys=True))
    sys.stderr.write('\n')
    return code


def run(args):
    cfg = load_config(args.command, args.config, args.overrides, args.seed, args.steps)
    threads = thread_count()
    out_dir = get_outdir(args.out)
    args_text = yaml.safe_dump(OmegaConf.to_container(cfg, resolve=True), default_flow_style=False)
    with open(os.path.join(out_dir, 'args.yaml'), 'w') as f:
        f.write(args_text)
    torch.manual_seed(cfg.seed)
    logging.info('Running {} (output in {}, {} thread(s))'.format(args.command, out_dir, threads))
    return _runners[args.command](cfg, out_dir, threads)


def main(argv=None):
    setup_default_logging()
    args = parser.parse_args(argv)
    try:
        run(args)
    except (SolverError, IntegrationError, SingularResistanceError) as e:
        return _fail('solver', e, EXIT_SOLVER)
    except OSError as e:
        return _fail('io', e, EXIT_IO)
    except (OmegaConfBaseException, yaml.YAMLError, ValueError) as e:
        return _fail('validation', e, EXIT_VALIDATION)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
