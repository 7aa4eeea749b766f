""" Fixed-step integration of strokes and design-ratio sweeps

The implicit midpoint step map z+ = z + h f((z + z+) / 2, u) is shared with the optimal control
transcription (see `midpoint_residual`), so a trajectory integrated here has round-off level
defects when evaluated there.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import torch

from .dynamics import DesignParams, DragModel, SwimmerState, as_state_tensor, as_tensor, rhs
from .errors import IntegrationError
from .helpers import golden_section_search
from .strokes import ControlSchedule, OctagonSpec, StrokePolygon, octagon_polygon, schedule_from_polygon

_logger = logging.getLogger(__name__)

DEFAULT_RATIO_GRID = (0.3, 2.5, 45)


class Displacement(NamedTuple):
    dx: Union[float, torch.Tensor]
    dy: Union[float, torch.Tensor]
    dtheta: Union[float, torch.Tensor]


@dataclass
class Trajectory:
    """States on the step grid. `states` is [..., n + 1, 5] (leading dims for batched designs)."""
    times: np.ndarray
    states: torch.Tensor
    schedule: ControlSchedule
    steps: np.ndarray
    controls: np.ndarray

    @property
    def initial(self):
        return self.states[..., 0, :]

    @property
    def final(self):
        return self.states[..., -1, :]

    def displacement(self) -> Displacement:
        d = (self.final - self.initial)[..., 2:]
        if d.dim() == 1:
            return Displacement(*[float(v) for v in d])
        return Displacement(*d.unbind(-1))

    def numpy(self):
        if self.states.dim() != 2:
            raise ValueError('expected a single trajectory, got batch shape {}'.format(tuple(self.states.shape[:-2])))
        return self.states.detach().cpu().numpy()

    def swimmer_states(self):
        return [SwimmerState.from_tensor(z) for z in self.states.detach()]


@dataclass
class SweepResult:
    ratios: np.ndarray
    displacements: np.ndarray
    best_ratio: float
    best_dx: float

    def to_dict(self):
        return {
            'ratios': self.ratios.tolist(),
            'displacements': self.displacements.tolist(),
            'best_ratio': self.best_ratio,
            'best_dx': self.best_dx,
        }


def _param_shapes(params: DesignParams):
    return [as_tensor(p).shape for p in (params.L, params.L2, params.drag.xi, params.drag.eta)]


def midpoint_residual(params: DesignParams, z, z_next, h, u) -> torch.Tensor:
    """Implicit midpoint defect z_next - z - h f((z + z_next) / 2, u) for every step.

    Args:
        z, z_next: [..., n, 5] start and end states of each step
        h: [n] step sizes
        u: [n, 2] (or [..., n, 2]) shape rates held over each step
    """
    mid = 0.5 * (z + z_next)
    return z_next - z - as_tensor(h)[..., None] * rhs(params, mid, u)


def _threshold(tol, z):
    return tol * max(1., float(z.detach().abs().max()))


def _step_jacobian(params, z, zn, h, u):
    zn = zn.detach().requires_grad_(True)
    with torch.enable_grad():
        F = midpoint_residual(params, z, zn, h, u)
        rows = [torch.autograd.grad(F[..., i].sum(), zn, retain_graph=i < 4)[0] for i in range(5)]
    return F.detach(), torch.stack(rows, dim=-2)


def _solve_step(params, z, guess, h, u, tol, index, max_iter=100):
    """One implicit step: fixed-point iteration, then damped Newton."""
    thresh = _threshold(tol, z)
    zn = guess
    for _ in range(max_iter):
        new = z + h * rhs(params, 0.5 * (z + zn), u)
        if float((new - zn).abs().max()) <= thresh:
            return new
        zn = new

    _logger.debug('Step {}: fixed point stalled, switching to Newton'.format(index))
    for _ in range(max_iter):
        F, J = _step_jacobian(params, z, zn, h, u)
        err = float(F.abs().max())
        if err <= thresh:
            return zn
        delta = torch.linalg.solve(J, -F[..., None])[..., 0]
        damping = 1.
        while damping > 1e-4:
            trial = zn + damping * delta
            if float(midpoint_residual(params, z, trial, h, u).abs().max()) < err:
                break
            damping *= 0.5
        else:
            raise IntegrationError(
                'step {}: Newton line search failed (residual {:.3e})'.format(index, err), step=index)
        zn = trial
    raise IntegrationError('step {}: implicit midpoint step did not converge'.format(index), step=index)


def _midpoint_path(params, z0, h, u, tol, max_sweeps):
    # the shape components are exact for piecewise-constant rates
    beta = torch.cat((torch.zeros_like(u[:1]), torch.cumsum(h[:, None] * u, dim=0)), dim=0)
    beta = z0[..., None, :2] + beta
    Z = torch.cat((beta, z0[..., None, 2:].expand(beta.shape[:-1] + (3,))), dim=-1)

    # Picard sweeps over the whole grid; theta only depends on the shape, so x, y settle one sweep later
    p = params.unsqueeze(-1)
    for sweep in range(max_sweeps):
        incr = h[:, None] * rhs(p, 0.5 * (Z[..., :-1, :] + Z[..., 1:, :]), u)
        err = float((Z[..., 1:, :] - Z[..., :-1, :] - incr).abs().max())
        if err <= _threshold(tol, Z):
            _logger.debug('Midpoint sweeps converged after {} sweeps'.format(sweep))
            return Z
        Z = torch.cat((z0[..., None, :], z0[..., None, :] + torch.cumsum(incr, dim=-2)), dim=-2)

    _logger.warning('Midpoint sweeps did not converge in {} sweeps, solving step by step'.format(max_sweeps))
    states = [z0]
    for k in range(len(h)):
        states.append(_solve_step(params, states[-1], Z[..., k + 1, :], h[k], u[k], tol, k))
    return torch.stack(states, dim=-2)


def rollout(params: DesignParams, beta0, u, h, n_sweeps=4) -> torch.Tensor:
    """States [n + 1, 5] from the aligned pose with shape beta0 under rates u [n, 2].

    A fixed number of Picard sweeps of the midpoint step map, differentiable with respect to
    beta0, u and the design. theta depends on the shape only, so two sweeps from zero already reproduce
    the solved step map.
    """
    h = as_tensor(h)
    beta = torch.cat((torch.zeros_like(u[:1]), torch.cumsum(h[:, None] * u, dim=0)), dim=0) + beta0
    Z = torch.cat((beta, torch.zeros_like(beta[:, :1]).expand(-1, 3)), dim=-1)
    for _ in range(n_sweeps):
        incr = h[:, None] * rhs(params, 0.5 * (Z[:-1] + Z[1:]), u)
        Z = torch.cat((Z[:1], Z[:1] + torch.cumsum(incr, dim=0)), dim=0)
    return Z


def _rk4_path(params, z0, h, u):
    states = [z0]
    z = z0
    for k in range(len(h)):
        hk, uk = h[k], u[k]
        k1 = rhs(params, z, uk)
        k2 = rhs(params, z + 0.5 * hk * k1, uk)
        k3 = rhs(params, z + 0.5 * hk * k2, uk)
        k4 = rhs(params, z + hk * k3, uk)
        z = z + hk / 6. * (k1 + 2. * k2 + 2. * k3 + k4)
        states.append(z)
    return torch.stack(states, dim=-2)


def integrate(params: DesignParams, z0, schedule: ControlSchedule, n_steps=1000,
              method='midpoint', tol=1e-13, max_sweeps=50) -> Trajectory:
    """Integrate the swimmer along a piecewise-constant schedule.

    Args:
        params: design, fields may be tensors [B] to integrate B designs at once
        z0: initial state (SwimmerState or [..., 5])
        schedule: shape rates; its segments are split into steps proportionally to their durations
        n_steps: total number of steps (each segment gets at least one)
        method: 'midpoint' (implicit, solved to `tol`) or 'rk4' (explicit cross-check)

    Returns:
        Trajectory with states [..., n + 1, 5]
    """
    h_np, u_np = schedule.discretize(n_steps)
    h, u = as_tensor(h_np), as_tensor(u_np)
    z0 = as_state_tensor(z0, check_finite=True)
    batch = torch.broadcast_shapes(z0.shape[:-1], *_param_shapes(params))
    z0 = z0.expand(batch + (5,))
    with torch.no_grad():
        if method == 'midpoint':
            states = _midpoint_path(params, z0, h, u, tol, max_sweeps)
        elif method == 'rk4':
            states = _rk4_path(params, z0, h, u)
        else:
            raise ValueError('unknown integration method {}'.format(method))
    times = np.concatenate(([0.], np.cumsum(h_np)))
    return Trajectory(times, states, schedule, h_np, u_np)


def stroke_schedule(polygon: StrokePolygon, T, b, repeats=1) -> ControlSchedule:
    stroke_period = None if T is None else T / repeats
    schedule = schedule_from_polygon(polygon, stroke_period, b)
    return schedule.repeat(repeats) if repeats > 1 else schedule


def stroke_displacement(params: DesignParams, polygon: StrokePolygon, T, b, n_steps=1000,
                        repeats=1, method='midpoint') -> Displacement:
    """Net pose change after `repeats` traversals of the polygon at rates saturating b.

    The swimmer starts aligned (x = y = theta = 0) with its shape at the polygon's first vertex.
    T is the total horizon (None skips the horizon check).
    """
    schedule = stroke_schedule(polygon, T, b, repeats)
    z0 = torch.tensor([polygon.start.b1, polygon.start.b3, 0., 0., 0.], dtype=torch.float64)
    return integrate(params, z0, schedule, n_steps, method).displacement()


def ratio_sweep(c, drag: Optional[DragModel], stroke, T, b, grid=None, refine=True, n_steps=1000,
                repeats=1, tol=1e-4) -> SweepResult:
    """Stroke displacement against L2 / L at fixed total length c.

    The grid is simulated as one batch of designs; with `refine` a golden-section search between
    the neighbours of the grid argmax narrows the best ratio down to `tol`.
    """
    polygon = octagon_polygon(stroke) if isinstance(stroke, OctagonSpec) else stroke
    drag = drag if drag is not None else DragModel()
    ratios = np.linspace(*DEFAULT_RATIO_GRID) if grid is None else np.asarray(grid, dtype=np.float64)
    if ratios.ndim != 1 or len(ratios) < 2 or np.any(ratios <= 0) or not np.all(np.isfinite(ratios)):
        raise ValueError('ratio grid must hold at least two positive finite values')

    params = DesignParams.from_ratio(c, as_tensor(ratios), drag)
    dx = stroke_displacement(params, polygon, T, b, n_steps, repeats).dx.cpu().numpy()
    i = int(np.argmax(dx))
    best_ratio, best_dx = float(ratios[i]), float(dx[i])
    _logger.info('Grid argmax ratio {:.4f} (dx {:.6e})'.format(best_ratio, best_dx))

    if refine:
        lo, hi = ratios[max(i - 1, 0)], ratios[min(i + 1, len(ratios) - 1)]

        def _dx(r):
            return stroke_displacement(DesignParams.from_ratio(c, r, drag), polygon, T, b, n_steps, repeats).dx

        r, v = golden_section_search(_dx, lo, hi, tol=tol, maximize=True)
        if v >= best_dx:
            best_ratio, best_dx = float(r), float(v)
        _logger.info('Refined ratio {:.5f} (dx {:.6e})'.format(best_ratio, best_dx))

    return SweepResult(ratios, dx, best_ratio, best_dx)


def estimate_order(params: DesignParams, polygon: StrokePolygon, b, n_steps=100, method='midpoint'):
    """Richardson estimate of the convergence order of the stroke x-displacement."""
    dx = [stroke_displacement(params, polygon, None, b, n, method=method).dx
          for n in (n_steps, 2 * n_steps, 4 * n_steps)]
    coarse, fine = abs(dx[0] - dx[1]), abs(dx[1] - dx[2])
    if fine == 0.:
        return math.inf
    return math.log2(coarse / fine)
