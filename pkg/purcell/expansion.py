""" Small-amplitude expansion of the stroke displacement

For a small closed stroke enclosing the (signed) area C in the (beta1, beta3) plane, the net
displacement from the aligned pose is C [g1, g2] to leading order. At the aligned pose the bracket
points along x with magnitude

    (eta - xi) / xi * L^3 L2 (3L + 2L2) / (2L + L2)^4

which, at fixed total length c = 2L + L2, is maximal for L2 / L = (sqrt(10) - 1) / 3.
"""
import math
from typing import NamedTuple, Sequence

import torch

from .dynamics import DesignParams, as_state_tensor, as_tensor, field_matrix
from .strokes import OctagonSpec, octagon_polygon

OPTIMAL_RATIO = (math.sqrt(10.) - 1.) / 3.


class BracketValue(NamedTuple):
    vec: torch.Tensor

    @property
    def x(self):
        return self.vec[..., 2]


class ExpansionPrediction(NamedTuple):
    c_coeff: float
    bracket_x: float
    delta_x: float


class OptimalDesign(NamedTuple):
    L: float
    L2: float
    ratio: float


class LeadingOrderRow(NamedTuple):
    scale: float
    simulated: float
    predicted: float

    @property
    def ratio(self):
        return self.simulated / self.predicted


def lie_bracket_numeric(params: DesignParams, state, h=1e-5) -> BracketValue:
    """[g1, g2] = Dg2 g1 - Dg1 g2 with central-difference Jacobians of step h.

    All ten perturbed states are evaluated in a single batched call.
    """
    if h <= 0:
        raise ValueError('finite difference step must be positive, got {}'.format(h))
    z = as_state_tensor(state, check_finite=True)
    eye = torch.eye(5, dtype=z.dtype)
    stencil = torch.cat((z[..., None, :] + h * eye, z[..., None, :] - h * eye), dim=-2)  # [..., 10, 5]
    g = field_matrix(params.unsqueeze(-1), stencil)  # [..., 10, 5, 2]
    jac = (g[..., :5, :, :] - g[..., 5:, :, :]) / (2. * h)  # [..., k, 5, 2] = d g / d z_k
    jac = jac.transpose(-3, -2)  # [..., 5 (row), 5 (k), 2]
    g0 = field_matrix(params, z)
    g1, g2 = g0[..., 0], g0[..., 1]
    dg1, dg2 = jac[..., 0], jac[..., 1]
    vec = (dg2 @ g1[..., None] - dg1 @ g2[..., None])[..., 0]
    return BracketValue(vec)


def displacement_factor(L, L2):
    """Geometric part of the aligned bracket, L^3 L2 (3L + 2L2) / (2L + L2)^4. Zero for L2 = 0."""
    return L ** 3 * L2 * (3 * L + 2 * L2) / (2 * L + L2) ** 4


def bracket_x_aligned(params: DesignParams):
    drag = params.drag
    return (drag.eta - drag.xi) / drag.xi * displacement_factor(params.L, params.L2)


def c_coefficient(spec: OctagonSpec) -> float:
    """Area enclosed by the octagon with sides (a1, a2, a3, a4) repeated twice."""
    a1, a2, a3, a4 = spec.sides
    return math.sqrt(2.) / 2. * (a1 * a2 + a2 * a3 + a3 * a4 + a4 * a1) + a1 * a3 + a2 * a4


def predict_displacement(spec: OctagonSpec, params: DesignParams) -> ExpansionPrediction:
    c_coeff = c_coefficient(spec)
    bracket_x = bracket_x_aligned(params)
    return ExpansionPrediction(c_coeff, bracket_x, c_coeff * bracket_x)


def optimal_design(c) -> OptimalDesign:
    """Link lengths maximizing the aligned bracket at total length c."""
    if c <= 0:
        raise ValueError('total length must be positive, got {}'.format(c))
    root = math.sqrt(2. / 5.)
    L = c * (1. - root)
    L2 = c * (2. * root - 1.)
    ratio = L2 / L
    if abs(ratio - OPTIMAL_RATIO) > 1e-14:
        raise ArithmeticError('optimal ratio mismatch: {!r} vs {!r}'.format(ratio, OPTIMAL_RATIO))
    return OptimalDesign(L, L2, OPTIMAL_RATIO)


def leading_order_study(params: DesignParams, spec: OctagonSpec, scales: Sequence[float] = (1., 0.5, 0.25),
                        b=1., n_steps=1000):
    """Simulated against predicted displacement for the stroke scaled by each factor.

    The simulated / predicted ratio tends to 1 as the stroke shrinks.
    """
    from .simulate import stroke_displacement

    rows = []
    for scale in scales:
        scaled = spec.scaled(scale)
        simulated = stroke_displacement(params, octagon_polygon(scaled), None, b, n_steps).dx
        predicted = predict_displacement(scaled, params).delta_x
        rows.append(LeadingOrderRow(float(scale), float(simulated), float(predicted)))
    return rows
