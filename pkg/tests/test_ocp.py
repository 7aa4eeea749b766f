import math

import numpy as np
import pytest
import torch

from purcell import ControlSchedule, InfeasibleError, MaxIterationsError, OctagonSpec, integrate, octagon_polygon, \
    schedule_from_polygon, stroke_family
from purcell.expansion import OPTIMAL_RATIO
from purcell.ocp import BackendResult, OcpSpec, CondensedProblem, SolveOptions, check_gradient, classify_path, \
    classify_schedule, family_guess, initial_guess, kkt_residuals, least_squares_multipliers, monotonicity_warnings, \
    polish, solve, transcribe
from purcell.ocp.auglag import slack_residual
from purcell.ocp.classify import winding_number
from purcell.ocp.solve import loop_count

A20 = math.pi / 20


class _Passthrough:
    """Backend returning its starting point, optionally shifted off the feasible set."""

    def __init__(self, shift=0., converged=True):
        self.shift = shift
        self.converged = converged

    def minimize(self, problem, x0):
        x = np.array(x0, dtype=np.float64)
        x[2] += self.shift
        return BackendResult(x, np.zeros(problem.n_constraints), self.converged, message='passthrough')


def _circle_controls(N, T, radius, loops=1):
    t = np.linspace(0., T, N + 1)
    beta = radius * np.stack((np.cos(2 * math.pi * loops * t / T), np.sin(2 * math.pi * loops * t / T)), axis=1)
    return beta, np.diff(beta, axis=0) / (T / N)


def test_problem_layout():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 100))
    assert problem.n_states == 505
    assert problem.n_controls == 200
    assert problem.n_vars == 706
    assert problem.n_constraints == 507
    assert problem.describe()['free_L']
    assert problem.lower[-1] == pytest.approx(0.2) and problem.upper[-1] == pytest.approx(1.8)
    Z, U, L = problem.unpack(np.arange(problem.n_vars, dtype=np.float64))
    assert Z.shape == (101, 5) and U.shape == (100, 2)
    assert L.item() == 705.

    fixed = transcribe(OcpSpec(A20, 1., 4., 1., 100, 'fixed_L', 1.))
    assert fixed.n_vars == 705
    assert fixed.unpack(np.zeros(705))[2].item() == 1.


def test_spec_validation():
    with pytest.raises(ValueError):
        OcpSpec(A20, 1., 4., 1., 5)
    with pytest.raises(ValueError):
        OcpSpec(-A20, 1., 4., 1., 100)
    with pytest.raises(ValueError):
        OcpSpec(A20, 1., 4., 1., 100, 'fixed_L')
    with pytest.raises(ValueError):
        OcpSpec(A20, 1., 4., 1., 100, 'fixed_L', 2.5)
    with pytest.raises(ValueError):
        OcpSpec(A20, 1., 4., 1., 100, 'both')


def test_defects_vanish_on_integrated_trajectory(optimal_params):
    N, T = 100, 1.
    spec = OcpSpec(A20, 1., 4., T, N, 'fixed_L', float(optimal_params.L))
    problem = transcribe(spec)
    beta, U = _circle_controls(N, T, 0.1)
    traj = integrate(optimal_params, [beta[0, 0], beta[0, 1], 0., 0., 0.], ControlSchedule(np.full(N, T / N), U), N)
    x = problem.pack(traj.numpy(), traj.controls)
    with torch.no_grad():
        cons = problem.constraints(x)
    assert cons[:problem.n_defects].abs().max().item() < 1e-12
    assert cons[problem.n_defects:problem.n_defects + 3].abs().max().item() == 0.
    assert cons[-2:].abs().max().item() < 1e-15


def test_rest_point_is_feasible():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20))
    x = problem.pack(np.zeros((21, 5)), np.zeros((20, 2)), 1.2)
    assert problem.violation(x) == 0.
    assert problem.objective(x).item() == 0.


def test_box_violation():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20))
    Z = np.zeros((21, 5))
    Z[3, 0] = 2 * A20
    x = problem.pack(Z, np.zeros((20, 2)), 1.2)
    assert problem.box_violation(x) == pytest.approx(A20)


def test_initial_guess_is_rate_feasible():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 50))
    for seed in (1, 2, 4):
        x = initial_guess(problem, seed)
        assert problem.box_violation(x) == 0.
        with torch.no_grad():
            cons = problem.constraints(x)
        assert cons[:problem.n_defects].abs().max().item() < 1e-12
    assert loop_count(OcpSpec(A20, 2., 4., 1., 50)) == 2


def test_gradient_check():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20))
    x = initial_guess(problem, 1)
    assert check_gradient(problem, x) < 1e-6
    lam = np.random.default_rng(0).standard_normal(problem.n_constraints)
    assert check_gradient(problem, x, multipliers=lam, penalty=100., seed=1) < 1e-6


def test_polish_restores_feasibility():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 40))
    x = polish(problem, initial_guess(problem, 3))
    assert problem.violation(x) < 1e-10
    Z, U, _ = problem.unpack(x)
    assert U.abs().max().item() <= 1.
    assert Z[:, :2].abs().max().item() <= A20


def test_solve_with_passthrough_backend():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 30))
    sol = solve(problem, SolveOptions(n_starts=2, seed=1, backend=_Passthrough()))
    assert sol.seed in (1, 2)
    assert len(sol.starts) == 2
    assert sol.kkt.primal < 1e-8
    feasible = [s.objective for s in sol.starts if s.violation <= 1e-8]
    assert sol.objective == pytest.approx(max(feasible), rel=1e-6)
    assert sol.L + sol.L2 / 2. == pytest.approx(2.)
    assert sol.stroke is not None
    doc = sol.to_dict()
    assert doc['average_speed'] == pytest.approx(sol.objective)
    assert len(doc['states']) == 31
    traj = sol.trajectory
    assert traj.displacement().dx == pytest.approx(sol.objective)


def test_solve_reports_infeasible():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20))
    with pytest.raises(InfeasibleError) as info:
        solve(problem, SolveOptions(n_starts=1, polish=False, backend=_Passthrough(shift=1.)))
    assert info.value.best_violation >= 1.
    with pytest.raises(MaxIterationsError):
        solve(problem, SolveOptions(n_starts=1, polish=False, backend=_Passthrough(shift=1., converged=False)))


def test_kkt_residuals_at_rest():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20, 'fixed_L', 1.))
    x = problem.pack(np.zeros((21, 5)), np.zeros((20, 2)))
    kkt = kkt_residuals(problem, x, np.zeros(problem.n_constraints))
    assert kkt.primal == 0.
    assert kkt.dual > 0.


def test_solve_options():
    assert SolveOptions(n_starts=3, seed=5).seeds == (5, 6, 7)
    with pytest.raises(ValueError):
        SolveOptions(n_starts=0)


@pytest.mark.parametrize('b,label', [(math.pi / 5, 'diamond'), (1., 'octagon'), (2 * math.pi / 5, 'square')])
def test_classify_family_strokes(b, label):
    _, spec, _ = stroke_family(A20, b, 1.)
    poly = octagon_polygon(spec)
    stroke = classify_schedule(schedule_from_polygon(poly, 1., b), A20, b, poly.start)
    assert str(stroke) == label
    assert stroke.diagnostics.loops == 1
    assert stroke.diagnostics.unconstrained == 0.
    assert stroke.diagnostics.central_asymmetry < 1e-9


def test_classify_sequence():
    k, spec, period = stroke_family(A20, 1.5, 1.)
    poly = octagon_polygon(spec)
    schedule = schedule_from_polygon(poly, period, 1.5).repeat(k)
    stroke = classify_schedule(schedule, A20, 1.5, poly.start)
    assert str(stroke) == 'sequence(2, octagon)'
    assert (stroke.k, stroke.inner) == (2, 'octagon')
    assert stroke.to_dict()['label'] == 'sequence(2, octagon)'


def test_classify_smooth_loop():
    beta, U = _circle_controls(200, 1., 0.1)
    stroke = classify_path(beta, U, 1. / 200, A20, 1.)
    assert str(stroke) == 'unconstrained'
    assert stroke.diagnostics.unconstrained == pytest.approx(1.)
    assert winding_number(beta) == pytest.approx(1.)
    assert winding_number(beta[::-1]) == pytest.approx(-1.)


def test_classify_rest_padding():
    poly = octagon_polygon(OctagonSpec(0., 0.1, 0., 0.1))
    schedule = schedule_from_polygon(poly, 1., 1.).padded(1.)
    stroke = classify_schedule(schedule, A20, 1., poly.start)
    assert stroke.diagnostics.rest > 0.5
    assert stroke.diagnostics.loops == 1


def test_monotonicity_warnings():
    assert monotonicity_warnings([(0.1, 1.), (0.2, 2.), (0.3, 2.5)]) == []
    warnings = monotonicity_warnings([(0.3, 2.5), (0.1, 1.), (0.2, 2.6)])
    assert len(warnings) == 1
    assert 'a=0.3000' in warnings[0]


@pytest.mark.slow
def test_recovers_small_amplitude_octagon():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 100))
    sol = solve(problem, SolveOptions(n_starts=3, seed=1))
    assert sol.objective >= 0.95 * 7.73e-3
    assert problem.violation(problem.pack(sol.states, sol.controls, sol.L)) < 1e-8
    assert str(sol.stroke) == 'octagon'
    assert 0.70 <= sol.ratio <= 0.74


class _Rest:
    """Backend collapsing every start onto the rest point."""

    def minimize(self, problem, x0):
        x = np.zeros_like(np.asarray(x0, dtype=np.float64))
        if problem.spec.free_L:
            x[-1] = x0[-1]
        return BackendResult(x, np.zeros(problem.n_constraints), True, message='rest')


@pytest.mark.parametrize('design_mode,L', [('free_L', None), ('fixed_L', 1.)])
def test_constraint_jacobian_matches_autograd(design_mode, L):
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 10, design_mode, L))
    x = initial_guess(problem, 2)
    x[:problem.n_states] += 1e-3 * np.random.default_rng(0).standard_normal(problem.n_states)
    sparse = problem.constraint_jacobian(x).toarray()
    dense = torch.autograd.functional.jacobian(problem.constraints, torch.as_tensor(x)).numpy()
    assert sparse.shape == (problem.n_constraints, problem.n_vars)
    assert np.allclose(sparse, dense, rtol=0, atol=1e-12)


def test_condensed_problem_matches_transcription():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 40))
    condensed = CondensedProblem(problem)
    assert condensed.n_vars == 2 + 80 + 1
    assert condensed.n_constraints == 2 * 39 + 4
    x0 = initial_guess(problem, 1)
    v = condensed.from_full(x0)
    x = condensed.to_full(v)
    with torch.no_grad():
        cons = problem.constraints(x)
        f, c = condensed.evaluate(torch.as_tensor(v))
    assert cons[:problem.n_defects].abs().max().item() < 1e-13
    assert f.item() == pytest.approx(problem.objective(x).item(), rel=1e-12)
    Z, _, _ = problem.unpack(x)
    assert torch.allclose(c[:-4], Z[1:-1, :2].reshape(-1), rtol=0, atol=1e-15)
    assert torch.allclose(c[-2:], cons[-2:], rtol=0, atol=1e-15)
    assert condensed.lower[-1] == problem.lower[-1]
    assert np.all(condensed.lower[:2] == -A20) and np.all(condensed.upper[2:-1] == 1.)


def test_condensed_gradient_check():
    problem = CondensedProblem(transcribe(OcpSpec(A20, 1., 4., 1., 20)))
    v = problem.from_full(initial_guess(problem.full, 1))
    lam = np.random.default_rng(3).standard_normal(problem.n_constraints)
    assert check_gradient(problem, v, multipliers=lam, penalty=100., seed=2) < 1e-5


def test_slack_residual():
    rows = type('Rows', (), {})()
    rows.constraint_lower = torch.tensor([-1., 0.], dtype=torch.float64)
    rows.constraint_upper = torch.tensor([1., 0.], dtype=torch.float64)
    rows.constraint_scale = torch.ones(2, dtype=torch.float64)
    zero = torch.zeros(2, dtype=torch.float64)
    r = slack_residual(rows, torch.tensor([0.5, 0.3], dtype=torch.float64), zero, 10.)
    assert r.tolist() == [0., 0.3]
    r = slack_residual(rows, torch.tensor([2., 0.], dtype=torch.float64), zero, 10.)
    assert r.tolist() == [1., 0.]
    lam = torch.tensor([5., 0.], dtype=torch.float64)
    r = slack_residual(rows, torch.tensor([0.5, 0.], dtype=torch.float64), lam, 10.)
    assert r.tolist() == [-0.5, 0.]


def test_least_squares_multipliers_at_rest():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 20, 'fixed_L', 1.))
    x = problem.pack(np.zeros((21, 5)), np.zeros((20, 2)))
    lam = least_squares_multipliers(problem, x)
    assert lam.shape == (problem.n_constraints,)
    # x(T) only moves through the x defects, so exact multipliers exist at rest
    assert kkt_residuals(problem, x, lam).dual < 1e-6


def test_family_guess():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 100))
    x = family_guess(problem)
    assert problem.box_violation(x) < 1e-15
    with torch.no_grad():
        cons = problem.constraints(x)
    assert cons[:problem.n_defects].abs().max().item() < 1e-12
    assert cons[-2:].abs().max().item() < 1e-12
    Z, U, L = problem.unpack(x)
    assert (4. - 2. * L.item()) / L.item() == pytest.approx(OPTIMAL_RATIO)
    stroke = classify_path(Z[:, :2].numpy(), U.numpy(), problem.spec.h, A20, 1.)
    assert str(stroke) == 'octagon'

    diamond = transcribe(OcpSpec(A20, 0.5, 4., 1., 100, 'fixed_L', 1.))
    Z, U, _ = diamond.unpack(family_guess(diamond))
    assert Z[:, :2].abs().max().item() == pytest.approx(0.125)
    assert U.abs().max().item() <= 0.5


def test_start_summaries():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 30))
    sol = solve(problem, SolveOptions(n_starts=2, seed=1, backend=_Passthrough()))
    family, sinusoid = sol.starts
    assert (family.guess, sinusoid.guess) == ('family', 'sinusoid')
    assert family.ratio == pytest.approx(OPTIMAL_RATIO)
    assert 0.5 <= sinusoid.ratio <= 1.2
    assert not family.from_start
    assert sol.to_dict()['starts'][0]['ratio'] == pytest.approx(OPTIMAL_RATIO)

    plain = solve(problem, SolveOptions(n_starts=1, seed=1, family_start=False, backend=_Passthrough()))
    assert plain.starts[0].guess == 'sinusoid'


def test_polished_start_kept_over_worse_result():
    problem = transcribe(OcpSpec(A20, 1., 4., 1., 40))
    sol = solve(problem, SolveOptions(n_starts=1, seed=3, family_start=False, backend=_Rest()))
    start, = sol.starts
    assert start.from_start
    assert sol.objective > 0.
    assert start.violation <= 1e-8


def test_classify_large_amplitude_loop():
    beta, U = _circle_controls(400, 8., 1.2)
    stroke = classify_path(beta, U, 8. / 400, 2.1, 1.)
    assert str(stroke) == 'unconstrained'
    assert stroke.diagnostics.bang == 0. and stroke.diagnostics.constrained == 0.


@pytest.mark.slow
def test_refined_grid_agrees():
    coarse = solve(transcribe(OcpSpec(A20, 1., 4., 1., 100)), SolveOptions(n_starts=1))
    fine = solve(transcribe(OcpSpec(A20, 1., 4., 1., 200)), SolveOptions(n_starts=1))
    assert fine.objective == pytest.approx(coarse.objective, rel=0.01)
    assert fine.ratio == pytest.approx(coarse.ratio, rel=0.01)


@pytest.mark.slow
def test_average_speed_grows_with_amplitude():
    rows = []
    for a in (A20, math.pi / 10, math.pi / 6):
        sol = solve(transcribe(OcpSpec(a, 1., 4., 1., 100)), SolveOptions(n_starts=2))
        rows.append((a, sol.objective / sol.spec.T))
    assert monotonicity_warnings(rows, rtol=1e-3) == []
    assert rows[-1][1] > rows[0][1]


@pytest.mark.slow
def test_fixed_design_purcell_square():
    spec = OcpSpec(math.pi / 6, 4 * math.pi / 3, 4., 1., 100, 'fixed_L', 1.)
    sol = solve(transcribe(spec), SolveOptions(n_starts=2))
    assert sol.L == 1.
    assert sol.objective == pytest.approx(5.36e-2, rel=0.1)


@pytest.mark.slow
def test_slow_rates_give_diamond():
    sol = solve(transcribe(OcpSpec(A20, 0.5, 4., 1., 100)), SolveOptions(n_starts=2))
    assert str(sol.stroke) == 'diamond'
    assert sol.objective == pytest.approx(2.68e-3, rel=0.05)


@pytest.mark.slow
def test_large_amplitude_has_unconstrained_arcs():
    sol = solve(transcribe(OcpSpec(2 * math.pi / 3, 1., 4., 8., 100)), SolveOptions(n_starts=2))
    assert sol.stroke.diagnostics.unconstrained > 0.25
    assert 'unconstrained' in str(sol.stroke)
