""" Condensed form of the transcribed stroke problem

The midpoint defects are solved exactly by the step map: the shape path is a cumulative sum of the
rates, theta follows from it in one sweep and x, y in a second (`simulate.rollout`). Eliminating the
states leaves beta_0, the rates and L (when free) as variables, all simply bounded. What remains of
the constraints is

    * range rows -a <= beta_k <= a for the interior nodes k = 1 .. N-1
    * y_N = theta_N = 0
    * beta_N - beta_0 = 0 (linear in the rates)

with every row scaled by 1 / a. `CondensedBackend` runs a backend on this problem and maps the result
back onto the full transcription.
"""
import logging
from typing import Optional

import numpy as np
import torch

from ..dynamics import DTYPE, as_tensor
from ..simulate import rollout
from .auglag import AugmentedLagrangian, BackendResult, least_squares_multipliers
from .transcription import NlpProblem

_logger = logging.getLogger(__name__)

# theta is exact after one sweep, x and y after the second
_SWEEPS = 2


class CondensedProblem:

    def __init__(self, problem: NlpProblem):
        self.full = problem
        spec = problem.spec
        self.spec = spec
        N = spec.N
        self.n_vars = 2 + 2 * N + (1 if spec.free_L else 0)
        self.n_range = 2 * (N - 1)
        self.n_constraints = self.n_range + 4
        self.objective_scale = problem.objective_scale

        lower = np.full(self.n_vars, -spec.b)
        upper = np.full(self.n_vars, spec.b)
        lower[:2], upper[:2] = -spec.a, spec.a
        if spec.free_L:
            lower[-1], upper[-1] = problem.lower[-1], problem.upper[-1]
        self.lower, self.upper = lower, upper

        lo = torch.zeros(self.n_constraints, dtype=DTYPE)
        hi = torch.zeros(self.n_constraints, dtype=DTYPE)
        lo[:self.n_range], hi[:self.n_range] = -spec.a, spec.a
        self.constraint_lower, self.constraint_upper = lo, hi
        self.constraint_scale = torch.full((self.n_constraints,), 1. / spec.a, dtype=DTYPE)

    def split(self, v):
        v = as_tensor(v)
        N = self.spec.N
        L = v[-1] if self.spec.free_L else as_tensor(self.spec.L)
        return v[:2], v[2:2 + 2 * N].reshape(N, 2), L

    def states(self, v):
        beta0, U, L = self.split(v)
        return rollout(self.full.design(L), beta0, U, self.full.steps, _SWEEPS), U, L

    def evaluate(self, v):
        Z, _, _ = self.states(v)
        cons = torch.cat((Z[1:-1, :2].reshape(-1), Z[-1, 3:5], Z[-1, :2] - Z[0, :2]))
        return -Z[-1, 2] * self.objective_scale, cons

    def objective(self, v):
        return self.evaluate(v)[0]

    def constraints(self, v):
        return self.evaluate(v)[1]

    def from_full(self, x) -> np.ndarray:
        Z, U, L = self.full.unpack(torch.as_tensor(np.asarray(x, dtype=np.float64)))
        parts = [Z[0, :2].numpy(), U.reshape(-1).numpy()]
        if self.spec.free_L:
            parts.append(np.array([float(L)]))
        return np.concatenate(parts)

    def to_full(self, v) -> np.ndarray:
        with torch.no_grad():
            Z, U, L = self.states(torch.as_tensor(np.asarray(v, dtype=np.float64)))
        return self.full.pack(Z.numpy(), U.numpy(), float(L))


class CondensedBackend:
    """NlpBackend that condenses the transcription before handing it to `inner`.

    The returned multipliers are least-squares estimates for the full transcription.
    """

    def __init__(self, inner=None):
        self.inner = inner if inner is not None else AugmentedLagrangian()

    def minimize(self, problem: NlpProblem, x0: np.ndarray) -> BackendResult:
        condensed = CondensedProblem(problem)
        res = self.inner.minimize(condensed, condensed.from_full(x0))
        x = condensed.to_full(res.x)
        _logger.debug('Condensed solve: {} ({} outer, {} evaluations)'.format(res.message, res.n_outer, res.n_evals))
        return BackendResult(x, least_squares_multipliers(problem, x), res.converged, res.n_outer, res.n_evals,
                             res.penalty, res.message)


def default_backend(opts: Optional[object] = None) -> CondensedBackend:
    if opts is None:
        return CondensedBackend()
    return CondensedBackend(AugmentedLagrangian(
        tol=opts.al_tol, penalty0=opts.penalty0, tau=opts.tau, max_outer=opts.max_outer,
        inner_maxiter=opts.inner_maxiter))
