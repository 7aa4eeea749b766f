""" Resistive Force Theory dynamics of the Purcell three-link swimmer

The swimmer state is z = (beta1, beta3, x, y, theta): the two joint angles, the
position of the center of the central link and the orientation of that link.

Geometry conventions
    * link 2 (central, length L2) is centered on (x, y) with direction (cos theta, sin theta)
    * link 1 (length L) hangs off the rear joint, absolute angle theta - beta1, pointing backwards
    * link 3 (length L) hangs off the front joint, absolute angle theta - beta3, pointing forwards
Torque is taken about the central point (x, y), which keeps the grand resistance matrix symmetric.

Every function here is batched: states are tensors [..., 5] and any DesignParams field may
be a tensor broadcastable against the state batch shape.
"""
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import torch

from .errors import SingularResistanceError

DTYPE = torch.float64

Scalar = Union[float, torch.Tensor]


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.dtype == DTYPE else x.to(DTYPE)
    return torch.as_tensor(x, dtype=DTYPE)


def _all_positive(x) -> bool:
    return bool(torch.all(as_tensor(x).detach() > 0))


@dataclass(frozen=True)
class DragModel:
    """Parallel (xi) and perpendicular (eta) drag coefficients per unit length."""
    xi: Scalar = 1.0
    eta: Scalar = 2.0

    def __post_init__(self):
        if not (_all_positive(self.xi) and _all_positive(self.eta)):
            raise ValueError('drag coefficients must be positive, got xi={} eta={}'.format(self.xi, self.eta))

    def scaled(self, factor):
        return DragModel(self.xi * factor, self.eta * factor)


@dataclass(frozen=True)
class DesignParams:
    """Outer link length L, central link length L2 and the drag model. Total length c is derived."""
    L: Scalar
    L2: Scalar
    drag: DragModel = field(default_factory=DragModel)

    def __post_init__(self):
        if not (_all_positive(self.L) and _all_positive(self.L2)):
            raise ValueError('link lengths must be positive, got L={} L2={}'.format(self.L, self.L2))

    @property
    def c(self):
        return 2 * self.L + self.L2

    @property
    def ratio(self):
        return self.L2 / self.L

    @classmethod
    def from_ratio(cls, c, ratio, drag=None):
        """Design of total length c with L2 / L = ratio (ratio may be a tensor of candidates)."""
        L = c / (2 + ratio)
        return cls(L, ratio * L, drag if drag is not None else DragModel())

    @classmethod
    def from_total_length(cls, c, L, drag=None):
        return cls(L, c - 2 * L, drag if drag is not None else DragModel())

    def unsqueeze(self, dim=-1):
        """Add a broadcast dimension to every batched field (used to line designs up with time steps)."""
        def _u(v):
            return v.unsqueeze(dim) if isinstance(v, torch.Tensor) and v.dim() > 0 else v
        return DesignParams(_u(self.L), _u(self.L2), DragModel(_u(self.drag.xi), _u(self.drag.eta)))


@dataclass(frozen=True)
class SwimmerState:
    beta1: float = 0.
    beta3: float = 0.
    x: float = 0.
    y: float = 0.
    theta: float = 0.

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.beta1, self.beta3, self.x, self.y, self.theta)):
            raise ValueError('swimmer state must be finite, got {}'.format(self))

    def to_tensor(self):
        return torch.tensor([self.beta1, self.beta3, self.x, self.y, self.theta], dtype=DTYPE)

    @classmethod
    def from_tensor(cls, z):
        return cls(*[float(v) for v in z.reshape(5)])


class ShapeRate(namedtuple('ShapeRate', ('db1', 'db3'))):
    __slots__ = ()

    def __new__(cls, db1, db3):
        if not (math.isfinite(db1) and math.isfinite(db3)):
            raise ValueError('shape rate must be finite, got ({}, {})'.format(db1, db3))
        return super().__new__(cls, db1, db3)


class LinkFrame(NamedTuple):
    par: torch.Tensor
    perp: torch.Tensor


class ResistanceSplit(NamedTuple):
    A: torch.Tensor
    B: torch.Tensor


class ControlFields(NamedTuple):
    g1: torch.Tensor
    g2: torch.Tensor


def as_state_tensor(state, check_finite=False) -> torch.Tensor:
    if isinstance(state, SwimmerState):
        return state.to_tensor()
    z = as_tensor(state)
    if z.shape[-1] != 5:
        raise ValueError('swimmer state must have 5 components, got shape {}'.format(tuple(z.shape)))
    if check_finite and not bool(torch.isfinite(z.detach()).all()):
        raise ValueError('swimmer state must be finite')
    return z


def _direction(angle):
    return torch.stack((torch.cos(angle), torch.sin(angle)), dim=-1)


def _rot90(v):
    return torch.stack((-v[..., 1], v[..., 0]), dim=-1)


def _outer(v):
    return v[..., :, None] * v[..., None, :]


def _point_map(r, translation):
    """Map [..., 3, 2] from a point force to (F_x, F_y, T_z about the center) for lever arm r.

    The transpose maps (x_dot, y_dot, theta_dot) to the velocity of that point. With
    translation=0 only the torque row remains (the part of an arm that is linear in s).
    """
    zero = torch.zeros_like(r[..., 0])
    one = zero + translation
    return torch.stack((
        torch.stack((one, zero), dim=-1),
        torch.stack((zero, one), dim=-1),
        torch.stack((-r[..., 1], r[..., 0]), dim=-1)), dim=-2)


def link_frames(state):
    """Unit vectors parallel/perpendicular to links 1, 2, 3."""
    z = as_state_tensor(state)
    theta = z[..., 4]
    frames = []
    for angle in (theta - z[..., 0], theta, theta - z[..., 1]):
        par = _direction(angle)
        frames.append(LinkFrame(par, _rot90(par)))
    return tuple(frames)


def assemble_resistance(params: DesignParams, state) -> ResistanceSplit:
    """Grand resistance split of the force/torque balance.

    Every link point is p(s) = x + r0 + s * r1 with velocity J0 q_dot + s * J1 q_dot for the
    generalized velocity q_dot = (x_dot, y_dot, theta_dot, beta1_dot, beta3_dot). The drag
    integrands are therefore polynomials of degree <= 2 in s and are integrated exactly
    with the moments (l, l^2 / 2, l^3 / 3).

    Returns:
        ResistanceSplit with A [..., 3, 3] (symmetric positive definite) and B [..., 3, 2] such
        that the resistance to a generalized velocity is A (x_dot, y_dot, theta_dot) - B beta_dot,
        and the force balance reads A (x_dot, y_dot, theta_dot) = B beta_dot.
    """
    z = as_state_tensor(state)
    batch = torch.broadcast_shapes(
        z.shape[:-1], *[as_tensor(p).shape for p in (params.L, params.L2, params.drag.xi, params.drag.eta)])
    z = z.expand(batch + (5,))
    frame1, frame2, frame3 = link_frames(z)
    xi = as_tensor(params.drag.xi)[..., None, None]
    eta = as_tensor(params.drag.eta)[..., None, None]
    half = 0.5 * as_tensor(params.L2)[..., None] * frame2.par
    zero = torch.zeros_like(half)

    links = (
        # frame, length, r0, r1, velocity columns for (beta1_dot, beta3_dot) per unit s
        (frame1, params.L, -half, -frame1.par, (frame1.perp, zero)),
        (frame2, params.L2, -half, frame2.par, (zero, zero)),
        (frame3, params.L, half, frame3.par, (zero, -frame3.perp)),
    )
    resistance = 0.
    for frame, length, r0, r1, shape_cols in links:
        K = xi * _outer(frame.par) + eta * _outer(frame.perp)
        G0 = _point_map(r0, 1.)
        G1 = _point_map(r1, 0.)
        J0 = torch.cat((G0.transpose(-1, -2), torch.zeros_like(G0[..., :2, :])), dim=-1)
        J1 = torch.cat((G1.transpose(-1, -2), torch.stack(shape_cols, dim=-1)), dim=-1)
        length = as_tensor(length)[..., None, None]
        KJ0 = K @ J0
        KJ1 = K @ J1
        resistance = resistance + length * (G0 @ KJ0) \
            + 0.5 * length ** 2 * (G0 @ KJ1 + G1 @ KJ0) \
            + length ** 3 / 3. * (G1 @ KJ1)
    return ResistanceSplit(resistance[..., :3], -resistance[..., 3:])


def field_matrix(params: DesignParams, state) -> torch.Tensor:
    """The [..., 5, 2] matrix (g1 g2) of the driftless dynamics z_dot = (g1 g2) beta_dot."""
    split = assemble_resistance(params, state)
    sol, info = torch.linalg.solve_ex(split.A, split.B)
    if bool((info != 0).any()) or not bool(torch.isfinite(sol).all()):
        raise SingularResistanceError(
            'grand resistance matrix is singular to working precision, check the design params')
    eye = torch.eye(2, dtype=sol.dtype).expand(sol.shape[:-2] + (2, 2))
    return torch.cat((eye, sol), dim=-2)


def control_fields(params: DesignParams, state) -> ControlFields:
    g = field_matrix(params, state)
    return ControlFields(g[..., 0], g[..., 1])


def rhs(params: DesignParams, state, rate) -> torch.Tensor:
    """z_dot = g1 * db1 + g2 * db3."""
    u = as_tensor(tuple(rate) if isinstance(rate, ShapeRate) else rate)
    return (field_matrix(params, state) @ u[..., None])[..., 0]
