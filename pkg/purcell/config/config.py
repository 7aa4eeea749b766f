"""Swimmer experiment configurations

Structured OmegaConf schemas for every CLI command (unknown keys and bad types are rejected when a
user document is merged in) and per-table presets holding the reference values reported for the
swimmer tables.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional

from omegaconf import OmegaConf


@dataclass
class DragConfig:
    xi: float = 1.0
    eta: float = 2.0


@dataclass
class DesignConfig:
    c: float = 4.0
    # at most one of ratio (L2 / L) and L; neither means the small-amplitude optimum
    ratio: Optional[float] = None
    L: Optional[float] = None


@dataclass
class StrokeConfig:
    # 'bounds': family generated from (a, b, T); 'octagon': explicit sides around `center`;
    # 'polygon': explicit vertices; 'schedule': explicit [dt, db1, db3] segments from `start`
    family: str = 'bounds'
    a: float = math.pi / 20
    b: float = 1.0
    T: float = 1.0
    sides: Optional[List[float]] = None
    center: List[float] = field(default_factory=lambda: [0., 0.])
    vertices: Optional[List[List[float]]] = None
    orientation: int = 1
    segments: Optional[List[List[float]]] = None
    start: List[float] = field(default_factory=lambda: [0., 0.])
    repeats: Optional[int] = None
    reverse: bool = False


@dataclass
class SimulateConfig:
    design: DesignConfig = field(default_factory=DesignConfig)
    drag: DragConfig = field(default_factory=DragConfig)
    stroke: StrokeConfig = field(default_factory=StrokeConfig)
    n_steps: int = 1000
    method: str = 'midpoint'
    seed: int = 0


@dataclass
class BracketConfig:
    design: DesignConfig = field(default_factory=lambda: DesignConfig(ratio=2.0))
    drag: DragConfig = field(default_factory=DragConfig)
    state: List[float] = field(default_factory=lambda: [0., 0., 0., 0., 0.])
    h: float = 1e-5
    seed: int = 0


@dataclass
class SweepConfig:
    c: float = 4.0
    drag: DragConfig = field(default_factory=DragConfig)
    stroke: StrokeConfig = field(default_factory=StrokeConfig)
    ratio_grid: List[float] = field(default_factory=lambda: [0.3, 2.5])
    grid_points: int = 45
    refine: bool = True
    tol: float = 1e-4
    n_steps: int = 1000
    seed: int = 0


@dataclass
class OcpConfig:
    a: float = math.pi / 20
    b: float = 1.0
    c: float = 4.0
    T: float = 1.0
    N: int = 100
    design_mode: str = 'free_L'
    L: Optional[float] = None
    drag: DragConfig = field(default_factory=DragConfig)
    n_starts: int = 8
    seed: int = 1
    al_tol: float = 1e-8
    max_outer: int = 20
    inner_maxiter: int = 1000
    family_start: bool = True
    polish: bool = True


@dataclass
class TableRow:
    a: float = math.pi / 20
    b: float = 1.0
    # reference values, None when not reported
    x: Optional[float] = None
    ratio: Optional[float] = None
    stroke: Optional[str] = None
    purcell_x: Optional[float] = None
    gain: Optional[float] = None


@dataclass
class TableConfig:
    experiment: str = 'table1'
    c: float = 4.0
    T: float = 1.0
    drag: DragConfig = field(default_factory=DragConfig)
    purcell_L: float = 1.0
    n_steps: int = 1000
    ratio_grid: List[float] = field(default_factory=lambda: [0.3, 2.5])
    grid_points: int = 45
    refine: bool = True
    rows: List[TableRow] = field(default_factory=list)
    # optimal control runs (table3)
    N: int = 800
    n_starts: int = 8
    seed: int = 1
    al_tol: float = 1e-8
    max_outer: int = 20
    inner_maxiter: int = 1000
    family_start: bool = True
    polish: bool = True
    reference_T: Optional[float] = None


command_schemas = {
    'simulate': SimulateConfig,
    'bracket': BracketConfig,
    'sweep': SweepConfig,
    'ocp': OcpConfig,
    'table1': TableConfig,
    'table2': TableConfig,
    'table3': TableConfig,
}


def default_swimmer_configs(command='simulate'):
    """Returns the default config of a command (a structured, type-checked DictConfig)."""
    return OmegaConf.structured(command_schemas[command])


_A20 = math.pi / 20
_A6 = math.pi / 6

experiment_param_dict = {
    'table1':
        dict(
            experiment='table1',
            T=1.0,
            rows=[
                dict(a=_A20, b=0.5, x=2.68e-3, ratio=0.719, stroke='diamond'),
                dict(a=_A20, b=math.pi / 5, x=4.23e-3, ratio=0.719, stroke='diamond'),
                dict(a=_A20, b=0.75, x=5.70e-3, ratio=0.719, stroke='octagon'),
                dict(a=_A20, b=1.0, x=7.73e-3, ratio=0.719, stroke='octagon'),
                dict(a=_A20, b=2 * math.pi / 5, x=8.42e-3, ratio=0.717, stroke='square'),
                dict(a=_A20, b=1.5, x=1.14e-2, ratio=0.719, stroke='sequence(2, octagon)'),
                dict(a=_A20, b=2.0, x=1.55e-2, ratio=0.719, stroke='sequence(2, octagon)'),
            ],
        ),
    'table2':
        dict(
            experiment='table2',
            T=1.0,
            purcell_L=1.0,
            rows=[
                dict(a=_A6, b=math.pi / 3, x=1.17e-2, ratio=0.717, stroke='diamond', purcell_x=7.373e-3, gain=0.51),
                dict(a=_A6, b=2 * math.pi / 3, x=4.57e-2, ratio=0.708, stroke='diamond', purcell_x=2.848e-2,
                     gain=0.60),
                dict(a=_A6, b=math.pi, x=7.82e-2, ratio=0.699, stroke='octagon', purcell_x=4.806e-2, gain=0.63),
                dict(a=_A6, b=4 * math.pi / 3, x=8.80e-2, ratio=0.695, stroke='square', purcell_x=5.359e-2,
                     gain=0.64),
            ],
        ),
    # large amplitudes, desk scale: shorter horizon, reference x(T) rescaled by T / reference_T
    'table3':
        dict(
            experiment='table3',
            T=8.0,
            N=800,
            n_starts=3,
            reference_T=25.0,
            rows=[
                dict(a=_A20, b=1.0, x=0.192, ratio=0.719, stroke='sequence(26, octagon)'),
                dict(a=math.pi / 10, b=1.0, x=0.384, ratio=0.712, stroke='sequence(13, octagon)'),
                dict(a=_A6, b=1.0, x=0.593, ratio=0.697, stroke='sequence(7, octagon)'),
                dict(a=0.75, b=1.0, x=0.811, ratio=0.676, stroke='sequence(5, octagon)'),
                dict(a=math.pi / 3, b=1.0, x=1.088, ratio=0.660, stroke='sequence(4, octagon)'),
                dict(a=1.25, b=1.0, x=1.266, ratio=0.660, stroke='sequence(4, octagon)'),
                dict(a=1.5, b=1.0, x=1.263, ratio=0.660, stroke='sequence(3, octagon)'),
                dict(a=1.75, b=1.0, x=1.329, ratio=0.667, stroke='sequence(3, octagon)'),
                dict(a=2 * math.pi / 3, b=1.0, x=1.335, ratio=0.667, stroke='sequence(3, unconstrained)'),
                dict(a=2.5, b=1.0, x=1.335, ratio=0.667, stroke='sequence(3, unconstrained)'),
            ],
        ),
}
experiment_param_dict['table3_full'] = dict(experiment_param_dict['table3'], experiment='table3_full', T=25.0, N=2500)


def get_experiment_config(name='table1'):
    """Get the table config for an experiment name, falling back on the table command schema."""
    h = default_swimmer_configs('table1')
    return OmegaConf.merge(h, experiment_param_dict[name])
