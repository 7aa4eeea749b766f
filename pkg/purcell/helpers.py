""" Load / save helpers and a golden-section search

JSON documents for strokes, schedules and results; CSV tables for trajectories,
phase portraits and sweeps.
"""
import json
import logging
import math
import os
from typing import Callable, Tuple

import numpy as np

from .strokes import ControlSchedule, StrokePolygon

_logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

TRAJECTORY_HEADER = ('t', 'beta1', 'beta3', 'x', 'y', 'theta')
PHASE_HEADER = ('beta1', 'beta3')


def golden_section_search(f: Callable[[float], float], a, b, tol=1e-5, maximize=False) -> Tuple[float, float]:
    """
    Golden-section search.

    Given a function f with a single local minimum (maximum with maximize=True) in
    the interval [a,b], returns the abscissa of the best evaluated point and its value, with the
    bracketing interval shrunk below tol.
    """
    sign = -1. if maximize else 1.
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)

    # required steps to achieve tolerance
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = sign * f(c)
    yd = sign * f(d)

    for _ in range(n - 1):
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = sign * f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = sign * f(d)

    if yc < yd:
        return c, sign * yc
    return d, sign * yd


def load_json(path):
    with open(path, 'r') as f:
        return json.load(f)


def save_json(obj, path):
    """Sorted keys and a fixed float repr so identical runs give identical files."""
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')
    _logger.debug('Wrote {}'.format(path))


def load_polygon(path) -> StrokePolygon:
    return StrokePolygon.from_dict(load_json(path))


def save_polygon(poly: StrokePolygon, path):
    save_json(poly.to_dict(), path)


def load_schedule(path, bound=None) -> ControlSchedule:
    return ControlSchedule.from_dict(load_json(path), bound)


def save_schedule(schedule: ControlSchedule, path):
    save_json(schedule.to_dict(), path)


def save_table(path, columns, header):
    """Write equally long columns as a comma separated table with a one-line header."""
    data = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    np.savetxt(path, data, delimiter=',', header=','.join(header), comments='', fmt='%.17g')
    _logger.debug('Wrote {} rows to {}'.format(len(data), path))


def load_table(path):
    """Returns (header, data) for a table written by save_table."""
    with open(path, 'r') as f:
        header = tuple(f.readline().strip().split(','))
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    return header, data


def save_trajectory(traj, path):
    states = traj.numpy()
    save_table(path, [traj.times] + [states[:, i] for i in range(5)], TRAJECTORY_HEADER)


def save_phase_portrait(traj, path):
    states = traj.numpy()
    save_table(path, [states[:, 0], states[:, 1]], PHASE_HEADER)


def ensure_dir(path):
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path
