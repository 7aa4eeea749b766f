from .transcription import OcpSpec, NlpProblem, transcribe
from .auglag import AugmentedLagrangian, BackendResult, NlpBackend, least_squares_multipliers
from .condensed import CondensedBackend, CondensedProblem, default_backend
from .classify import StrokeClass, ArcDiagnostics, classify, classify_path, classify_schedule
from .solve import SolveOptions, OcpSolution, KktResiduals, StartSummary, solve, polish, initial_guess, family_guess, \
    check_gradient, kkt_residuals, monotonicity_warnings
