""" Augmented Lagrangian solver for bound constrained, equality constrained programs

LANCELOT style outer loop (multiplier update when the constraints are small enough, penalty
increase otherwise) around scipy's L-BFGS-B, which handles the bounds by gradient projection.
Derivatives come from torch autograd through the problem's objective and constraints.

Range rows lo <= c(x) <= hi become equalities c(x) - s = 0 with a slack s boxed in [lo, hi]. The
slacks never enter the variable vector: for fixed x the merit function is minimized over s in
closed form, s = clip(c + lambda / penalty, lo, hi). Equality rows are the case lo = hi = 0.

Any object with a `minimize(problem, x0)` method returning a `BackendResult` can replace it,
see `NlpBackend`.
"""
import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.linalg
import torch

from ..dynamics import DTYPE
from ..errors import SolverError

_logger = logging.getLogger(__name__)


@dataclass
class BackendResult:
    x: np.ndarray
    multipliers: np.ndarray
    converged: bool
    n_outer: int = 0
    n_evals: int = 0
    penalty: float = 0.
    message: str = ''


class NlpBackend(Protocol):

    def minimize(self, problem, x0: np.ndarray) -> BackendResult:
        ...


def slack_residual(problem, cons, multipliers, penalty):
    """c - s on scaled constraint rows, s the merit-minimizing slack (zero on equality rows)."""
    lo = problem.constraint_lower * problem.constraint_scale
    hi = problem.constraint_upper * problem.constraint_scale
    shifted = cons + multipliers / penalty if penalty > 0 else cons
    slack = torch.minimum(torch.maximum(shifted, lo), hi).detach()
    return cons - slack


def merit(problem, x, multipliers, penalty):
    """f(x) + lambda . r + penalty / 2 |r|^2 with r = c(x) - s on the scaled constraints."""
    f, cons = problem.evaluate(x)
    r = slack_residual(problem, cons * problem.constraint_scale, multipliers, penalty)
    return f + torch.dot(multipliers, r) + 0.5 * penalty * torch.dot(r, r)


def value_and_grad(fn, x: np.ndarray):
    xt = torch.tensor(x, dtype=DTYPE, requires_grad=True)
    value = fn(xt)
    grad, = torch.autograd.grad(value, xt)
    return float(value.detach()), grad.numpy()


def projected_gradient(x, grad, lower, upper):
    """Infinity norm of P(x - g) - x, zero at a bound constrained stationary point."""
    return float(np.abs(np.clip(x - grad, lower, upper) - x).max())


def free_variables(x, lower, upper, rtol=1e-9):
    """Mask of the variables strictly inside their bounds."""
    x = np.asarray(x, dtype=np.float64)
    tol = rtol * np.maximum(1., np.abs(x))
    return (x - lower > tol) & (upper - x > tol)


def least_squares_multipliers(problem, x):
    """Multipliers of the scaled constraints minimizing the Lagrangian gradient over the free variables.

    Uses `problem.constraint_jacobian(x)` (scipy sparse, unscaled rows) when the problem has one,
    a dense autograd Jacobian otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    _, grad = value_and_grad(problem.objective, x)
    if hasattr(problem, 'constraint_jacobian'):
        J = problem.constraint_jacobian(x)
    else:
        J = scipy.sparse.csr_matrix(torch.autograd.functional.jacobian(
            problem.constraints, torch.as_tensor(x, dtype=DTYPE)).numpy())
    J = scipy.sparse.diags(problem.constraint_scale.numpy()) @ J
    free = np.flatnonzero(free_variables(x, problem.lower, problem.upper))
    if not len(free):
        return np.zeros(problem.n_constraints)
    lsq = scipy.sparse.linalg.lsqr(J.tocsc()[:, free].T, -grad[free], atol=1e-14, btol=1e-14,
                                   iter_lim=10 * problem.n_constraints)
    return lsq[0]


class AugmentedLagrangian:
    """
    Args:
        tol: target scaled constraint residual of the outer loop
        rtol: target projected gradient relative to the one at the starting point (floored at tol)
        penalty0: initial penalty (LANCELOT default 10)
        tau: penalty growth factor
        alpha, beta: exponents of the constraint tolerance resets / updates
        max_outer: outer iterations before giving up
        inner_maxiter: L-BFGS-B iterations per subproblem
        max_penalty: the penalty is never increased beyond this
    """

    def __init__(self, tol=1e-6, rtol=1e-5, penalty0=10., tau=10., alpha=0.1, beta=0.9, max_outer=20,
                 inner_maxiter=1000, max_penalty=1e9):
        self.tol = tol
        self.rtol = rtol
        self.penalty0 = penalty0
        self.tau = tau
        self.alpha = alpha
        self.beta = beta
        self.max_outer = max_outer
        self.inner_maxiter = inner_maxiter
        self.max_penalty = max_penalty

    def _inner(self, problem, x, multipliers, penalty, grad_tol):
        bounds = list(zip(
            [None if not np.isfinite(v) else v for v in problem.lower],
            [None if not np.isfinite(v) else v for v in problem.upper]))

        def fun(v):
            return value_and_grad(lambda xt: merit(problem, xt, multipliers, penalty), v)

        res = scipy.optimize.minimize(
            fun, x, jac=True, method='L-BFGS-B', bounds=bounds,
            options={'maxiter': self.inner_maxiter, 'gtol': grad_tol, 'ftol': 1e-15, 'maxcor': 20})
        if not np.all(np.isfinite(res.x)):
            raise SolverError('inner minimization diverged: {}'.format(res.message))
        return res

    def minimize(self, problem, x0: np.ndarray) -> BackendResult:
        x = np.clip(np.asarray(x0, dtype=np.float64), problem.lower, problem.upper)
        multipliers = torch.zeros(problem.n_constraints, dtype=DTYPE)
        penalty = self.penalty0
        _, grad = value_and_grad(lambda xt: merit(problem, xt, multipliers, penalty), x)
        # inner tolerances never go below what the outer test asks for
        pg_opt = max(self.tol, self.rtol * projected_gradient(x, grad, problem.lower, problem.upper))
        grad_tol = max(1. / penalty, pg_opt)
        cons_tol = max(1. / penalty ** self.alpha, self.tol)
        n_evals = 0

        for outer in range(1, self.max_outer + 1):
            res = self._inner(problem, x, multipliers, penalty, grad_tol)
            x = res.x
            n_evals += res.nfev
            with torch.no_grad():
                f, cons = problem.evaluate(torch.as_tensor(x, dtype=DTYPE))
                r = slack_residual(problem, cons * problem.constraint_scale, multipliers, penalty)
            cons_norm = float(r.abs().max())
            pg = projected_gradient(x, res.jac, problem.lower, problem.upper)
            _logger.debug('AL outer {}: penalty {:.1e} |r| {:.3e} |pg| {:.3e} f {:.6e} ({} evals)'.format(
                outer, penalty, cons_norm, pg, float(f), res.nfev))

            if cons_norm <= cons_tol:
                if cons_norm <= self.tol and pg <= pg_opt:
                    multipliers = multipliers + penalty * r
                    return BackendResult(x, multipliers.numpy(), True, outer, n_evals, penalty, 'converged')
                multipliers = multipliers + penalty * r
                # tighten only after an inner solve that reached its tolerance
                if res.success:
                    cons_tol = max(cons_tol / penalty ** self.beta, self.tol)
                    grad_tol = max(grad_tol / penalty, pg_opt)
            else:
                penalty = min(penalty * self.tau, self.max_penalty)
                cons_tol = max(1. / penalty ** self.alpha, self.tol)
                grad_tol = max(1. / penalty, pg_opt)

        _logger.debug('AL stopped after {} outer iterations (|r| {:.3e})'.format(self.max_outer, cons_norm))
        return BackendResult(x, multipliers.numpy(), False, self.max_outer, n_evals, penalty,
                             'maximum outer iterations reached')
