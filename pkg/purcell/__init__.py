from .errors import SwimmerError, SingularResistanceError, StrokeError, DegenerateStrokeError, OutOfRegimeError, \
    ScheduleError, SelfIntersectionError, IntegrationError, SolverError, InfeasibleError, MaxIterationsError
from .dynamics import DragModel, DesignParams, SwimmerState, ShapeRate, LinkFrame, ResistanceSplit, ControlFields, \
    link_frames, assemble_resistance, field_matrix, control_fields, rhs
from .strokes import PhasePoint, StrokePolygon, OctagonSpec, ControlSchedule, octagon_polygon, family_from_bounds, \
    stroke_family, stroke_regime, schedule_from_polygon, polygon_area, reverse_polygon, reflect_diagonal, \
    reflect_antidiagonal
from .expansion import BracketValue, ExpansionPrediction, lie_bracket_numeric, bracket_x_aligned, \
    displacement_factor, c_coefficient, predict_displacement, optimal_design, leading_order_study
from .simulate import Trajectory, SweepResult, Displacement, integrate, stroke_displacement, ratio_sweep, \
    estimate_order, midpoint_residual
from .config.config import get_experiment_config
