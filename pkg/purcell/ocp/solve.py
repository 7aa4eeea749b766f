""" Multistart solve of the transcribed stroke problem

The first seed starts from the bound-touching stroke of the octagon family (with the small-amplitude
optimal link ratio), the others from sinusoidal loops. Every start runs the NLP backend (the condensed
augmented Lagrangian by default), then a feasibility polish: the states are re-rolled from the controls
through the midpoint step map, and the terminal conditions (shape periodicity, y(T) = theta(T) = 0) are
restored by least-norm Newton corrections on the unsaturated controls while keeping shape angles that
sit on their bound there. The best feasible start wins.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
import torch

from ..dynamics import DTYPE
from ..errors import InfeasibleError, MaxIterationsError, ScheduleError
from ..expansion import OPTIMAL_RATIO
from ..simulate import Trajectory, rollout, stroke_schedule
from ..strokes import ControlSchedule, octagon_polygon, stroke_family
from .auglag import NlpBackend, least_squares_multipliers, merit, projected_gradient, value_and_grad
from .classify import StrokeClass, classify
from .condensed import default_backend
from .transcription import NlpProblem, OcpSpec

_logger = logging.getLogger(__name__)

# shape angles within this fraction of the bound count as sitting on it during the polish
_ACTIVE_TOL = 1e-7


@dataclass(frozen=True)
class SolveOptions:
    n_starts: int = 8
    seed: int = 1
    threads: int = 1
    feasibility_tol: float = 1e-8
    al_tol: float = 1e-8
    penalty0: float = 10.
    tau: float = 10.
    max_outer: int = 20
    inner_maxiter: int = 1000
    family_start: bool = True
    polish: bool = True
    polish_tol: float = 1e-13
    polish_maxiter: int = 30
    tie_rtol: float = 1e-6
    backend: Optional[NlpBackend] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError('n_starts must be >= 1, got {}'.format(self.n_starts))
        if self.threads < 1:
            raise ValueError('threads must be >= 1, got {}'.format(self.threads))

    @property
    def seeds(self):
        return tuple(range(self.seed, self.seed + self.n_starts))


class KktResiduals(NamedTuple):
    primal: float
    dual: float


class StartSummary(NamedTuple):
    seed: int
    objective: float
    violation: float
    converged: bool
    ratio: float = float('nan')
    guess: str = 'sinusoid'
    from_start: bool = False


@dataclass
class _Candidate:
    seed: int
    x: np.ndarray
    multipliers: np.ndarray
    objective: float
    violation: float
    control_l1: float
    converged: bool
    ratio: float = float('nan')
    guess: str = 'sinusoid'
    from_start: bool = False

    def summary(self) -> StartSummary:
        return StartSummary(self.seed, self.objective, self.violation, self.converged, self.ratio, self.guess,
                            self.from_start)


@dataclass
class OcpSolution:
    spec: OcpSpec
    states: np.ndarray
    controls: np.ndarray
    steps: np.ndarray
    L: float
    L2: float
    objective: float
    kkt: KktResiduals
    seed: int
    starts: List[StartSummary] = field(default_factory=list)
    stroke: Optional[StrokeClass] = None

    @property
    def ratio(self):
        return self.L2 / self.L

    @property
    def trajectory(self) -> Trajectory:
        schedule = ControlSchedule(self.steps, self.controls, self.spec.b)
        times = np.concatenate(([0.], np.cumsum(self.steps)))
        return Trajectory(times, torch.as_tensor(self.states, dtype=DTYPE), schedule, self.steps, self.controls)

    def to_dict(self):
        return {
            'spec': self.spec.to_dict(),
            'L': self.L,
            'L2': self.L2,
            'ratio': self.ratio,
            'objective': self.objective,
            'average_speed': self.objective / self.spec.T,
            'kkt': self.kkt._asdict(),
            'seed': self.seed,
            'starts': [s._asdict() for s in self.starts],
            'classification': None if self.stroke is None else self.stroke.to_dict(),
            'states': self.states.tolist(),
            'controls': self.controls.tolist(),
        }


def loop_count(spec: OcpSpec):
    return max(1, int(math.ceil(spec.b * spec.T / (8. * spec.a) * (1. - 1e-12))))


def initial_guess(problem: NlpProblem, seed) -> np.ndarray:
    """Counter-clockwise circular loops with random phase, radius and (free design) link ratio."""
    spec = problem.spec
    rng = np.random.default_rng(seed)
    k = loop_count(spec) + (1 if seed % 4 == 0 else 0)
    omega = 2. * math.pi * k / spec.T
    radius = min(spec.a, spec.b / omega) * rng.uniform(0.5, 1.)
    phase = rng.uniform(0., 2. * math.pi)
    ratio = rng.uniform(0.5, 1.2)
    t = np.linspace(0., spec.T, spec.N + 1)
    beta = radius * np.stack((np.cos(omega * t + phase), np.sin(omega * t + phase)), axis=1)
    U = np.diff(beta, axis=0) / spec.h
    L = spec.c / (2. + ratio) if spec.free_L else spec.L
    with torch.no_grad():
        Z = rollout(problem.design(torch.as_tensor(L, dtype=DTYPE)), torch.as_tensor(beta[0]),
                    torch.as_tensor(U), problem.steps)
    return problem.pack(Z.numpy(), U, L)


def family_guess(problem: NlpProblem) -> np.ndarray:
    """Saturated-rate stroke of the diamond-octagon-square family sampled on the uniform grid.

    Rates are the step averages of the piecewise-linear shape path, so they stay within b.
    """
    spec = problem.spec
    k, octagon, _ = stroke_family(spec.a, spec.b, spec.T)
    polygon = octagon_polygon(octagon)
    schedule = stroke_schedule(polygon, spec.T, spec.b, k).padded(spec.T)
    knots = np.concatenate(([0.], np.cumsum(schedule.durations)))
    path = np.vstack((np.zeros((1, 2)), np.cumsum(schedule.durations[:, None] * schedule.rates, axis=0)))
    path = path + np.asarray(polygon.start, dtype=np.float64)
    t = np.linspace(0., spec.T, spec.N + 1)
    t[-1] = knots[-1]
    beta = np.stack([np.interp(t, knots, path[:, i]) for i in range(2)], axis=1)
    U = np.clip(np.diff(beta, axis=0) / spec.h, -spec.b, spec.b)
    L = spec.c / (2. + OPTIMAL_RATIO) if spec.free_L else spec.L
    with torch.no_grad():
        Z = rollout(problem.design(torch.as_tensor(L, dtype=DTYPE)), torch.as_tensor(beta[0]),
                    torch.as_tensor(U), problem.steps)
    return problem.pack(Z.numpy(), U, L)


def _terminal(Z):
    return torch.cat((Z[-1, :2] - Z[0, :2], Z[-1, 3:5]))


def polish(problem: NlpProblem, x, tol=1e-13, max_iter=30) -> np.ndarray:
    """Round-off level feasibility from a nearly feasible point (design held fixed)."""
    spec = problem.spec
    N, a, b = spec.N, spec.a, spec.b
    Z, U, L = problem.unpack(torch.as_tensor(np.asarray(x), dtype=DTYPE))
    L = L.detach()
    params = problem.design(L)
    h = problem.steps
    beta0 = Z[0, :2].detach().clamp(-a, a)
    U = U.detach().clamp(-b, b)
    below = (torch.arange(N)[None, :] < torch.arange(N + 1)[:, None]).to(DTYPE) * h  # d beta_k / d u_j

    for it in range(max_iter):
        v = torch.cat((beta0, U.reshape(-1))).requires_grad_(True)
        with torch.enable_grad():
            Zr = rollout(params, v[:2], v[2:].reshape(N, 2), h)
            F = _terminal(Zr)
            J = torch.stack([torch.autograd.grad(F[i], v, retain_graph=i < 3)[0] for i in range(4)])
        F = F.detach()
        beta = Zr[:, :2].detach()
        excess = float((beta.abs() - a).clamp(min=0.).max())
        err = max(float(F.abs().max()), excess)
        if err <= tol:
            break

        nodes, comps = torch.nonzero(beta.abs() >= a * (1. - _ACTIVE_TOL), as_tuple=True)
        R = len(nodes)
        rows_u = torch.zeros(R, N, 2, dtype=DTYPE)
        rows_u[torch.arange(R), :, comps] = below[nodes]
        rows = torch.cat((torch.nn.functional.one_hot(comps, 2).to(DTYPE), rows_u.reshape(R, 2 * N)), dim=1)
        hold = beta[nodes, comps] - a * torch.sign(beta[nodes, comps])

        free = torch.cat((torch.ones(2, dtype=torch.bool), (U.abs() < b * (1. - 1e-9)).reshape(-1)))
        A = torch.cat((J, rows)) * free.to(DTYPE)
        delta = -torch.linalg.pinv(A) @ torch.cat((F, hold))
        beta0 = (beta0 + delta[:2]).clamp(-a, a)
        U = (U + delta[2:].reshape(N, 2)).clamp(-b, b)
    else:
        _logger.debug('Polish stopped after {} iterations (residual {:.3e})'.format(max_iter, err))

    with torch.no_grad():
        Z = rollout(params, beta0, U, h)
    Z[:, :2] = Z[:, :2].clamp(-a, a)
    return problem.pack(Z.numpy(), U.numpy(), L)


def kkt_residuals(problem: NlpProblem, x, multipliers) -> KktResiduals:
    """Primal violation and projected gradient of the Lagrangian (scaled constraint rows)."""
    lam = torch.as_tensor(multipliers, dtype=DTYPE)
    _, grad = value_and_grad(lambda xt: merit(problem, xt, lam, 0.), x)
    return KktResiduals(problem.violation(x), projected_gradient(x, grad, problem.lower, problem.upper))


def check_gradient(problem: NlpProblem, x, multipliers=None, penalty=10., n_directions=4, eps=1e-6, seed=0):
    """Largest relative difference between autograd and central-difference directional derivatives
    of the augmented Lagrangian merit function."""
    x = np.asarray(x, dtype=np.float64)
    lam = torch.zeros(problem.n_constraints, dtype=DTYPE) if multipliers is None \
        else torch.as_tensor(multipliers, dtype=DTYPE)

    def fn(v):
        return merit(problem, v, lam, penalty)

    _, grad = value_and_grad(fn, x)
    rng = np.random.default_rng(seed)
    worst = 0.
    with torch.no_grad():
        for _ in range(n_directions):
            d = rng.standard_normal(x.shape)
            d /= np.linalg.norm(d)
            fd = (float(fn(torch.as_tensor(x + eps * d))) - float(fn(torch.as_tensor(x - eps * d)))) / (2. * eps)
            exact = float(grad @ d)
            worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-12))
    return worst


def _evaluate(problem: NlpProblem, x):
    Z, U, L = problem.unpack(torch.as_tensor(x))
    violation = problem.violation(x)
    try:
        ControlSchedule(problem.steps.numpy(), U.numpy(), problem.spec.b)
    except ScheduleError as e:
        _logger.debug('Controls rejected ({})'.format(e))
        violation = max(violation, 1.)
    L = float(L)
    return float(Z[-1, 2]), violation, float(U.abs().sum()) * problem.spec.h, (problem.spec.c - 2. * L) / L


def _run_start(problem: NlpProblem, backend, opts: SolveOptions, seed) -> _Candidate:
    guess = 'family' if opts.family_start and seed == opts.seed else 'sinusoid'
    x0 = family_guess(problem) if guess == 'family' else initial_guess(problem, seed)
    res = backend.minimize(problem, x0)
    x = polish(problem, res.x, opts.polish_tol, opts.polish_maxiter) if opts.polish else res.x
    objective, violation, control_l1, ratio = _evaluate(problem, x)
    from_start = False
    if opts.polish:
        # the polished initial guess replaces a worse or infeasible result
        x_start = polish(problem, x0, opts.polish_tol, opts.polish_maxiter)
        start = _evaluate(problem, x_start)
        if start[1] <= opts.feasibility_tol and (violation > opts.feasibility_tol or start[0] > objective):
            _logger.info('Start {}: keeping the polished initial guess (x(T) {:.6e} vs {:.6e})'.format(
                seed, start[0], objective))
            x, (objective, violation, control_l1, ratio), from_start = x_start, start, True
    _logger.info('Start {} ({}): x(T) {:.6e} ratio {:.4f} violation {:.2e} ({})'.format(
        seed, guess, objective, ratio, violation, res.message))
    return _Candidate(seed, x, res.multipliers, objective, violation, control_l1, res.converged, ratio, guess,
                      from_start)


def _pick(candidates, rtol):
    ranked = sorted(candidates, key=lambda c: -c.objective)
    top = ranked[0].objective
    ties = [c for c in ranked if c.objective >= top - rtol * abs(top)]
    return min(ties, key=lambda c: (c.violation, c.control_l1))


def solve(problem: NlpProblem, opts: Optional[SolveOptions] = None) -> OcpSolution:
    """Best feasible local solution over the multistart seeds.

    Raises:
        InfeasibleError: no start reached the feasibility tolerance
        MaxIterationsError: same, and no start converged in the backend either
    """
    opts = opts or SolveOptions()
    backend = opts.backend if opts.backend is not None else default_backend(opts)
    seeds = opts.seeds

    if opts.threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            candidates = list(pool.map(lambda s: _run_start(problem, backend, opts, s), seeds))
    else:
        candidates = [_run_start(problem, backend, opts, s) for s in seeds]

    feasible = [c for c in candidates if c.violation <= opts.feasibility_tol]
    best_violation = min(c.violation for c in candidates)
    if not feasible:
        if not any(c.converged for c in candidates):
            raise MaxIterationsError(
                'no start converged and none is feasible (best violation {:.3e})'.format(best_violation))
        raise InfeasibleError('no feasible point found (best violation {:.3e})'.format(best_violation),
                              best_violation=best_violation)

    best = _pick(feasible, opts.tie_rtol)
    Z, U, L = problem.unpack(torch.as_tensor(best.x))
    L = float(L)
    solution = OcpSolution(
        spec=problem.spec,
        states=Z.numpy().copy(),
        controls=U.numpy().copy(),
        steps=problem.steps.numpy().copy(),
        L=L,
        L2=problem.spec.c - 2. * L,
        objective=best.objective,
        kkt=kkt_residuals(problem, best.x, least_squares_multipliers(problem, best.x)),
        seed=best.seed,
        starts=[c.summary() for c in candidates],
    )
    solution.stroke = classify(solution)
    _logger.info('Best start {}: x(T) {:.6e} ratio {:.4f} stroke {} ({}/{} feasible)'.format(
        best.seed, best.objective, solution.ratio, solution.stroke, len(feasible), len(candidates)))
    return solution


def monotonicity_warnings(rows, rtol=1e-9):
    """Flag decreases of the average speed x(T) / T as the amplitude bound grows.

    Args:
        rows: iterable of (a, average speed)
        rtol: relative drop tolerated between neighbours

    Returns:
        list of warning messages (empty when monotone)
    """
    warnings = []
    ordered = sorted(rows, key=lambda r: r[0])
    for (a0, v0), (a1, v1) in zip(ordered[:-1], ordered[1:]):
        if v1 < v0 * (1. - rtol):
            msg = 'x(T)/T drops from {:.6e} at a={:.4f} to {:.6e} at a={:.4f}: likely a local solution'.format(
                v0, a0, v1, a1)
            _logger.warning(msg)
            warnings.append(msg)
    return warnings
