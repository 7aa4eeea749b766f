""" Stroke classification from arc structure

Every interval of a discretized stroke is labelled

    * bang: both rates saturated, a diagonal line in the phase plane
    * constrained: one angle sits at its bound while its rate vanishes, a horizontal or vertical line
    * rest: both rates vanish
    * unconstrained: anything else (smooth, singular-looking arcs)

and the stroke label follows from the time fractions of these arcs and the number of loops.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from ..strokes import ControlSchedule, PhasePoint

_logger = logging.getLogger(__name__)

SATURATED = 0.98
VANISHING = 0.02
UNCONSTRAINED_FRACTION = 0.25
ARC_PRESENCE = 0.02
CLOSURE_TOL = 0.02


@dataclass(frozen=True)
class ArcDiagnostics:
    bang: float = 0.
    constrained: float = 0.
    unconstrained: float = 0.
    rest: float = 0.
    loops: int = 0
    closure_gap: float = 0.
    central_asymmetry: float = 0.
    diagonal_asymmetry: float = 0.
    antidiagonal_asymmetry: float = 0.
    messages: tuple = ()

    def to_dict(self):
        return {
            'fractions': {
                'bang': self.bang, 'constrained': self.constrained,
                'unconstrained': self.unconstrained, 'rest': self.rest},
            'loops': self.loops,
            'closure_gap': self.closure_gap,
            'asymmetry': {
                'central': self.central_asymmetry, 'diagonal': self.diagonal_asymmetry,
                'antidiagonal': self.antidiagonal_asymmetry},
            'messages': list(self.messages),
        }


@dataclass(frozen=True)
class StrokeClass:
    label: str
    k: int = 1
    inner: Optional[str] = None
    diagnostics: ArcDiagnostics = field(default_factory=ArcDiagnostics, compare=False)

    def __str__(self):
        if self.label == 'sequence':
            return 'sequence({}, {})'.format(self.k, self.inner)
        return self.label

    def to_dict(self):
        return {'label': str(self), 'k': self.k, 'inner': self.inner, 'diagnostics': self.diagnostics.to_dict()}


def arc_labels(beta, u, a, b):
    """Per-interval labels for nodes beta [n + 1, 2] and rates u [n, 2]."""
    mid = 0.5 * (beta[:-1] + beta[1:])
    au = np.abs(u)
    bang = np.all(au >= SATURATED * b, axis=1)
    rest = np.all(au <= VANISHING * b, axis=1)
    constrained = np.any((np.abs(mid) >= SATURATED * a) & (au <= VANISHING * b), axis=1) & ~rest
    labels = np.full(len(u), 'unconstrained', dtype=object)
    labels[constrained] = 'constrained'
    labels[rest] = 'rest'
    labels[bang] = 'bang'
    return labels


def winding_number(beta):
    """Signed number of turns of the closed path around its mean point."""
    rel = beta - beta.mean(axis=0)
    angles = np.arctan2(rel[:, 1], rel[:, 0])
    turns = np.diff(np.append(angles, angles[0]))
    turns = (turns + np.pi) % (2 * np.pi) - np.pi
    return turns.sum() / (2 * np.pi)


def _asymmetry(points, transformed, scale):
    """Largest distance from a transformed node to the nearest original node, relative to scale."""
    moved = torch.as_tensor(np.ascontiguousarray(transformed))
    dist = torch.cdist(moved, torch.as_tensor(np.ascontiguousarray(points)),
                       compute_mode='donot_use_mm_for_euclid_dist')
    return float(dist.min(dim=1).values.max() / scale)


def classify_path(beta, u, h, a, b) -> StrokeClass:
    beta = np.asarray(beta, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (len(u),))
    labels = arc_labels(beta, u, a, b)
    total = h.sum()
    fractions = {name: float(h[labels == name].sum() / total)
                 for name in ('bang', 'constrained', 'unconstrained', 'rest')}

    messages = []
    gap = float(np.abs(beta[-1] - beta[0]).max())
    if gap > CLOSURE_TOL * a:
        messages.append('path does not close (gap {:.3e})'.format(gap))
    loops = int(round(abs(winding_number(beta))))

    # the closing node repeats the first one
    nodes = beta[:-1]
    rel = nodes - nodes.mean(axis=0)
    central = _asymmetry(rel, -rel, a)
    diagonal = _asymmetry(rel, rel[:, ::-1], a)
    antidiagonal = _asymmetry(rel, -rel[:, ::-1], a)

    if fractions['unconstrained'] > UNCONSTRAINED_FRACTION:
        inner = 'unconstrained'
        messages.append('{:.0%} of the stroke time is on unconstrained arcs'.format(fractions['unconstrained']))
    elif fractions['constrained'] < ARC_PRESENCE:
        inner = 'diamond'
    elif fractions['bang'] < ARC_PRESENCE:
        inner = 'square'
    else:
        inner = 'octagon'
    if loops == 0:
        inner = 'unconstrained'
        messages.append('no closed loop in the phase plane')

    diagnostics = ArcDiagnostics(
        fractions['bang'], fractions['constrained'], fractions['unconstrained'], fractions['rest'],
        loops, gap, central, diagonal, antidiagonal, tuple(messages))
    for m in messages:
        _logger.debug(m)
    if loops >= 2:
        return StrokeClass('sequence', loops, inner, diagnostics)
    return StrokeClass(inner, 1, None, diagnostics)


def classify_schedule(schedule: ControlSchedule, a, b, start: PhasePoint = PhasePoint(0., 0.),
                      n_steps=400) -> StrokeClass:
    h, u = schedule.discretize(n_steps)
    beta = np.vstack(([0., 0.], np.cumsum(h[:, None] * u, axis=0))) + np.asarray(start, dtype=np.float64)
    return classify_path(beta, u, h, a, b)


def classify(solution) -> StrokeClass:
    """Classify a solved stroke (anything with `states`, `controls`, `steps` and a `spec`)."""
    states = np.asarray(solution.states)
    return classify_path(states[:, :2], solution.controls, solution.steps, solution.spec.a, solution.spec.b)
