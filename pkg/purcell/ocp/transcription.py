""" Direct transcription of the maximal-displacement stroke problem

Maximize x(T) subject to the swimmer dynamics, |beta| <= a, |beta_dot| <= b, x(0) = y(0) = theta(0) = 0,
y(T) = theta(T) = 0 and beta(T) = beta(0), optionally over the outer link length L with L2 = c - 2L.

The dynamics become N implicit midpoint defects sharing their step map with `simulate.integrate`.
Variable vector layout: states z_0..z_N (row major, 5 each), controls u_0..u_{N-1} (2 each), then L
when the design is free.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse
import torch

from ..dynamics import DTYPE, DesignParams, DragModel, as_tensor
from ..simulate import midpoint_residual

DESIGN_MODES = ('free_L', 'fixed_L')
L_BOX = (0.05, 0.45)  # fraction of c


@dataclass(frozen=True)
class OcpSpec:
    a: float
    b: float
    c: float
    T: float
    N: int
    design_mode: str = 'free_L'
    L: Optional[float] = None
    drag: DragModel = field(default_factory=DragModel)

    def __post_init__(self):
        for name in ('a', 'b', 'c', 'T'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError('{} must be positive and finite, got {}'.format(name, value))
        if int(self.N) != self.N or self.N < 10:
            raise ValueError('N must be an integer >= 10, got {}'.format(self.N))
        if self.design_mode not in DESIGN_MODES:
            raise ValueError('design_mode must be one of {}, got {}'.format(DESIGN_MODES, self.design_mode))
        if self.design_mode == 'fixed_L':
            if self.L is None or not 0 < self.L < self.c / 2:
                raise ValueError('fixed_L needs L in (0, c/2) = (0, {}), got {}'.format(self.c / 2, self.L))

    @property
    def free_L(self):
        return self.design_mode == 'free_L'

    @property
    def h(self):
        return self.T / self.N

    def to_dict(self):
        return {
            'a': self.a, 'b': self.b, 'c': self.c, 'T': self.T, 'N': int(self.N),
            'design_mode': self.design_mode, 'L': self.L,
            'drag': {'xi': float(self.drag.xi), 'eta': float(self.drag.eta)},
        }


class NlpProblem:
    """Finite-dimensional program min f(x) s.t. c(x) = 0, lower <= x <= upper.

    Constraint vector: 5N defects, then x_0, y_0, theta_0, y_N, theta_N, then beta_N - beta_0.
    `constraint_scale` rescales the rows for the solver; reported residuals are unscaled.
    """

    def __init__(self, spec: OcpSpec):
        self.spec = spec
        N = spec.N
        self.n_states = 5 * (N + 1)
        self.n_controls = 2 * N
        self.n_vars = self.n_states + self.n_controls + (1 if spec.free_L else 0)
        self.n_defects = 5 * N
        self.n_constraints = self.n_defects + 7
        self.steps = torch.full((N,), spec.h, dtype=DTYPE)
        self.objective_scale = 1. / (0.02 * spec.c * spec.a ** 2)

        lower = np.full(self.n_vars, -np.inf)
        upper = np.full(self.n_vars, np.inf)
        state_lo = lower[:self.n_states].reshape(N + 1, 5)
        state_hi = upper[:self.n_states].reshape(N + 1, 5)
        state_lo[:, :2] = -spec.a
        state_hi[:, :2] = spec.a
        lower[self.n_states:self.n_states + self.n_controls] = -spec.b
        upper[self.n_states:self.n_states + self.n_controls] = spec.b
        if spec.free_L:
            lower[-1], upper[-1] = L_BOX[0] * spec.c, L_BOX[1] * spec.c
        self.lower, self.upper = lower, upper

        scale = np.full(self.n_constraints, 1. / spec.a)
        scale[:self.n_defects] = 1. / spec.h
        self.constraint_scale = torch.as_tensor(scale, dtype=DTYPE)
        self.constraint_lower = torch.zeros(self.n_constraints, dtype=DTYPE)
        self.constraint_upper = torch.zeros(self.n_constraints, dtype=DTYPE)

    def unpack(self, x):
        x = as_tensor(x)
        N = self.spec.N
        Z = x[:self.n_states].reshape(N + 1, 5)
        U = x[self.n_states:self.n_states + self.n_controls].reshape(N, 2)
        L = x[-1] if self.spec.free_L else as_tensor(self.spec.L)
        return Z, U, L

    def pack(self, Z, U, L=None) -> np.ndarray:
        parts = [np.asarray(Z, dtype=np.float64).reshape(-1), np.asarray(U, dtype=np.float64).reshape(-1)]
        if self.spec.free_L:
            parts.append(np.array([float(L)]))
        return np.concatenate(parts)

    def design(self, L) -> DesignParams:
        return DesignParams(L, self.spec.c - 2 * L, self.spec.drag)

    def objective(self, x) -> torch.Tensor:
        Z, _, _ = self.unpack(x)
        return -Z[-1, 2] * self.objective_scale

    def constraints(self, x) -> torch.Tensor:
        Z, U, L = self.unpack(x)
        defects = midpoint_residual(self.design(L), Z[:-1], Z[1:], self.steps, U)
        boundary = torch.stack((Z[0, 2], Z[0, 3], Z[0, 4], Z[-1, 3], Z[-1, 4]))
        periodic = Z[-1, :2] - Z[0, :2]
        return torch.cat((defects.reshape(-1), boundary, periodic))

    def evaluate(self, x):
        return self.objective(x), self.constraints(x)

    def constraint_jacobian(self, x) -> scipy.sparse.csr_matrix:
        """Sparse Jacobian of `constraints` (unscaled rows).

        Defect k only involves z_k, z_k+1, u_k and L, so five backward passes through per-step
        copies of those variables give every block.
        """
        N = self.spec.N
        free_L = self.spec.free_L
        Z, U, L = self.unpack(torch.as_tensor(np.asarray(x, dtype=np.float64)))
        z0 = Z[:-1].detach().clone().requires_grad_(True)
        z1 = Z[1:].detach().clone().requires_grad_(True)
        u = U.detach().clone().requires_grad_(True)
        Ls = L.detach().expand(N).clone().requires_grad_(free_L)
        inputs = (z0, z1, u, Ls) if free_L else (z0, z1, u)
        with torch.enable_grad():
            d = midpoint_residual(self.design(Ls), z0, z1, self.steps, u)
            grads = [torch.autograd.grad(d[:, i].sum(), inputs, retain_graph=i < 4) for i in range(5)]

        k = np.arange(N)[:, None]
        blocks = ((5 * k + np.arange(5), 0), (5 * (k + 1) + np.arange(5), 1),
                  (self.n_states + 2 * k + np.arange(2), 2))
        rows, cols, vals = [], [], []
        for i, g in enumerate(grads):
            for col, j in blocks:
                rows.append(np.broadcast_to(5 * k + i, col.shape).ravel())
                cols.append(col.ravel())
                vals.append(g[j].numpy().ravel())
            if free_L:
                rows.append(5 * k[:, 0] + i)
                cols.append(np.full(N, self.n_vars - 1))
                vals.append(g[3].numpy())
        n = self.n_defects
        rows += [n + np.arange(5), n + 5 + np.array([0, 1, 0, 1])]
        cols += [np.array([2, 3, 4, 5 * N + 3, 5 * N + 4]), np.array([5 * N, 5 * N + 1, 0, 1])]
        vals += [np.ones(5), np.array([1., 1., -1., -1.])]
        return scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_constraints, self.n_vars))

    def box_violation(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(max(0., np.max(self.lower - x), np.max(x - self.upper)))

    def violation(self, x) -> float:
        """Largest unscaled equality residual or box excess."""
        with torch.no_grad():
            eq = float(self.constraints(x).abs().max())
        return max(eq, self.box_violation(x))

    def describe(self):
        return {
            'n_vars': self.n_vars,
            'n_state_vars': self.n_states,
            'n_control_vars': self.n_controls,
            'n_constraints': self.n_constraints,
            'free_L': self.spec.free_L,
        }


def transcribe(spec: OcpSpec) -> NlpProblem:
    return NlpProblem(spec)
