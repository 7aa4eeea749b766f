import math

import numpy as np
import pytest

from purcell import ControlSchedule, DegenerateStrokeError, OctagonSpec, OutOfRegimeError, PhasePoint, \
    SelfIntersectionError, StrokePolygon, family_from_bounds, octagon_polygon, polygon_area, reflect_antidiagonal, \
    reflect_diagonal, reverse_polygon, schedule_from_polygon, stroke_family, stroke_regime
from purcell.errors import ScheduleError, StrokeError
from purcell.expansion import c_coefficient
from purcell.helpers import load_polygon, load_schedule, save_polygon, save_schedule

A20 = math.pi / 20


def test_family_octagon_sides():
    spec = family_from_bounds(A20, 0.75, 1.)
    assert spec.a2 / math.sqrt(2.) == pytest.approx(0.12666, abs=5e-6)
    assert spec.a1 == pytest.approx(0.06084, abs=5e-6)
    assert spec.a1 == spec.a3 and spec.a2 == spec.a4


def test_family_regime_edges():
    square = family_from_bounds(A20, 8 * A20, 1.)
    assert square.a2 == 0. and square.a4 == 0.
    diamond = family_from_bounds(A20, 4 * A20, 1.)
    assert diamond.a1 == 0. and diamond.a3 == 0.
    assert len(octagon_polygon(square)) == 4
    assert len(octagon_polygon(diamond)) == 4


@pytest.mark.parametrize('b', np.linspace(4 * A20, 8 * A20, 9))
def test_family_time_accounting(b):
    poly = octagon_polygon(family_from_bounds(A20, b, 1.))
    schedule = schedule_from_polygon(poly, 1., b)
    assert schedule.total_duration == pytest.approx(1., abs=1e-12)
    assert np.abs(poly.vertices).max() == pytest.approx(A20, abs=1e-12)


def test_family_out_of_regime():
    with pytest.raises(OutOfRegimeError):
        family_from_bounds(A20, 0.5, 1.)
    with pytest.raises(OutOfRegimeError):
        family_from_bounds(A20, 1.5, 1.)


@pytest.mark.parametrize('b,expected', [
    (0.5, 'diamond'), (math.pi / 5, 'diamond'), (0.75, 'octagon'), (1.0, 'octagon'),
    (2 * math.pi / 5, 'square'), (1.5, 'sequence'), (2.0, 'sequence')])
def test_stroke_regime(b, expected):
    assert stroke_regime(A20, b, 1.) == expected


def test_stroke_family_scaled_diamond():
    k, spec, period = stroke_family(A20, 0.5, 1.)
    assert (k, period) == (1, 1.)
    assert spec.a2 / math.sqrt(2.) == pytest.approx(0.125)
    schedule = schedule_from_polygon(octagon_polygon(spec), 1., 0.5)
    assert schedule.total_duration == pytest.approx(1., abs=1e-12)


@pytest.mark.parametrize('b', [1.5, 2.0])
def test_stroke_family_sequence(b):
    k, spec, period = stroke_family(A20, b, 1.)
    assert k == 2
    assert period == pytest.approx(0.5)
    assert schedule_from_polygon(octagon_polygon(spec), period, b).total_duration == pytest.approx(period)


def test_octagon_polygon_layout():
    poly = octagon_polygon(OctagonSpec(0.1, 0.2, 0.3, 0.4), PhasePoint(0.05, -0.02))
    assert len(poly) == 8
    assert poly.orientation == 1
    assert poly.vertices.mean(axis=0) == pytest.approx([0.05, -0.02])
    first = poly.edges()[0]
    assert first[0] == 0. and first[1] == pytest.approx(-0.1)
    assert np.allclose(poly.edges()[:4], -poly.edges()[4:])


def test_c_coefficient_matches_area():
    rng = np.random.default_rng(0)
    for _ in range(50):
        sides = rng.uniform(0., 1., 4)
        spec = OctagonSpec(*sides)
        assert c_coefficient(spec) == pytest.approx(abs(polygon_area(octagon_polygon(spec))), rel=1e-12, abs=1e-14)


def test_degenerate_octagon():
    with pytest.raises(DegenerateStrokeError):
        OctagonSpec(0., 0., 0., 1.)
    with pytest.raises(StrokeError):
        OctagonSpec(-0.1, 0.2, 0.1, 0.1)


def test_polygon_validation():
    with pytest.raises(StrokeError):
        StrokePolygon([[0., 0.], [1., 0.]], 1)
    with pytest.raises(StrokeError):
        StrokePolygon([[0., 0.], [1., 0.], [1., 1.]], -1)
    with pytest.raises(StrokeError):
        StrokePolygon([[0., 0.], [2., 1.], [0., 1.]], 1)
    free = StrokePolygon([[0., 0.], [2., 1.], [0., 1.]], 1, free_edges={0})
    with pytest.raises(ScheduleError):
        schedule_from_polygon(free)


def test_self_intersection():
    bowtie = StrokePolygon([[0., 0.], [1., 1.], [1., 0.], [0., 1.]], 1)
    with pytest.raises(SelfIntersectionError):
        polygon_area(bowtie)


def test_polygon_transforms():
    poly = octagon_polygon(OctagonSpec(0.1, 0.2, 0.3, 0.4))
    area = polygon_area(poly)
    assert area > 0
    for mirrored in (reverse_polygon(poly), reflect_diagonal(poly), reflect_antidiagonal(poly)):
        assert mirrored.orientation == -1
        assert polygon_area(mirrored) == pytest.approx(-area)
    assert np.allclose(reflect_diagonal(poly).vertices, poly.vertices[:, ::-1])
    assert reverse_polygon(poly).start == poly.start


def test_schedule_rates_saturate_bound():
    poly = octagon_polygon(family_from_bounds(A20, 1., 1.))
    schedule = schedule_from_polygon(poly, 1., 1.)
    assert len(schedule.durations) == 8
    assert np.all(np.abs(schedule.rates).max(axis=1) == 1.)
    diagonal = np.all(np.abs(schedule.rates) == 1., axis=1)
    assert diagonal.sum() == 4


def test_schedule_exceeds_horizon():
    poly = octagon_polygon(family_from_bounds(A20, 1., 1.))
    with pytest.raises(ScheduleError):
        schedule_from_polygon(poly, 0.9, 1.)


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        ControlSchedule([0.5, 0.5], [[1., 0.], [0., 1.]])
    with pytest.raises(ScheduleError):
        ControlSchedule([0.5, -0.5], [[1., 0.], [-1., 0.]])
    with pytest.raises(ScheduleError):
        ControlSchedule([0.5, 0.5], [[2., 0.], [-2., 0.]], bound=1.)
    with pytest.raises(ScheduleError):
        ControlSchedule([], [])


def test_schedule_closure():
    poly = octagon_polygon(OctagonSpec(0.1, 0.05, 0.2, 0.07), PhasePoint(0.01, 0.02))
    schedule = schedule_from_polygon(poly, b=0.8)
    h, u = schedule.discretize(333)
    path = np.asarray(poly.start) + np.cumsum(h[:, None] * u, axis=0)
    assert np.abs(path[-1] - np.asarray(poly.start)).max() <= 1e-12


def test_schedule_discretize_boundaries():
    schedule = ControlSchedule([0.1, 0.6, 0.3], [[1., 0.], [0., 0.], [-1. / 3., 0.]])
    h, u = schedule.discretize(100)
    assert h.sum() == pytest.approx(1.)
    edges = np.cumsum(h)
    for boundary in np.cumsum(schedule.durations)[:-1]:
        assert np.min(np.abs(edges - boundary)) <= 1e-15
    tiny = ControlSchedule([1e-6, 1.], [[1., 0.], [-1e-6, 0.]])
    assert len(tiny.discretize(10)[0]) >= 2


def test_schedule_transforms():
    schedule = schedule_from_polygon(octagon_polygon(family_from_bounds(A20, 1., 1.)), 1., 1.)
    rev = schedule.reversed()
    assert np.allclose(rev.durations, schedule.durations[::-1])
    assert np.allclose(rev.rates, -schedule.rates[::-1])
    assert schedule.repeat(3).total_duration == pytest.approx(3.)
    fast = schedule.time_scaled(2.)
    assert fast.total_duration == pytest.approx(0.5)
    assert fast.bound == 2.
    padded = schedule_from_polygon(octagon_polygon(OctagonSpec(0., 0.1, 0., 0.1)), 1., 1.).padded(1.)
    assert padded.total_duration == pytest.approx(1.)
    assert padded.rates[-1].tolist() == [0., 0.]
    with pytest.raises(ScheduleError):
        schedule.padded(0.5)


def test_json_round_trip(tmp_path):
    poly = octagon_polygon(family_from_bounds(A20, 0.75, 1.))
    save_polygon(poly, str(tmp_path / 'stroke.json'))
    loaded = load_polygon(str(tmp_path / 'stroke.json'))
    assert np.array_equal(loaded.vertices, poly.vertices)
    assert loaded.orientation == poly.orientation

    schedule = schedule_from_polygon(poly, 1., 0.75)
    save_schedule(schedule, str(tmp_path / 'schedule.json'))
    again = load_schedule(str(tmp_path / 'schedule.json'), bound=0.75)
    assert np.array_equal(again.durations, schedule.durations)
    assert np.array_equal(again.rates, schedule.rates)
