import math

import pytest

from learningFlow.driving_sim import (
    STEER_MAX, LaneDecision, ScenarioConfig, StateMatrix, VehicleState, bicycle_update,
)
from learningFlow.errors import ControllerUsageError
from learningFlow.tracking_controller import (
    DecodedAction, Waypoint, WaypointTracker, build_route, candidate_waypoints, decode,
    pure_pursuit_steer, speed_levels, track,
)


def _state(x, y, v=10.0, psi=0.0):
    return StateMatrix(VehicleState(x, y, v, psi))


def test_speed_levels():
    assert speed_levels(20.0) == (0.0, 5.0, 10.0, 15.0, 20.0)


def test_route_spans_lane(overtaking, merging):
    route = build_route(overtaking, 1)
    assert route.points[0].x == 0.0
    assert route.points[-1].x == pytest.approx(200.0)
    assert all(p.y == overtaking.lane_center_y(1) for p in route.points)
    ramp = build_route(merging, merging.ramp_lane)
    assert ramp.points[-1].x == pytest.approx(160.0)
    with pytest.raises(ControllerUsageError):
        build_route(overtaking, 3)


def test_candidate_waypoints_strictly_ahead(overtaking):
    route = build_route(overtaking, 1)
    y = overtaking.lane_center_y(1)
    assert [p.x for p in candidate_waypoints(_state(12.0, y), route)] == [15.0, 20.0, 25.0, 30.0, 35.0]
    assert [p.x for p in candidate_waypoints(_state(15.0, y), route)][0] == 20.0


def test_candidate_waypoints_padded_at_route_end(overtaking):
    route = build_route(overtaking, 1)
    y = overtaking.lane_center_y(1)
    xs = [p.x for p in candidate_waypoints(_state(190.0, y), route)]
    assert xs == pytest.approx([195.0, 200.0, 200.0, 200.0, 200.0])
    xs = [p.x for p in candidate_waypoints(_state(205.0, y), route)]
    assert xs == pytest.approx([200.0] * 5)


@pytest.mark.parametrize("action", [(5, 0, 0), (0, 5, 0), (0, 0, 3), (-1, 0, 0), (0, 0)])
def test_decode_rejects_bad_actions(overtaking, action):
    route = build_route(overtaking, 1)
    with pytest.raises(ControllerUsageError):
        decode(action, _state(20.0, overtaking.lane_center_y(1)), route, overtaking)


def test_decode_keep(overtaking):
    route = build_route(overtaking, 1)
    decoded = decode((2, 4, 0), _state(12.0, overtaking.lane_center_y(1)), route, overtaking)
    assert decoded.waypoint.x == 25.0
    assert decoded.v_ref == 15.0
    assert decoded.lane_change == LaneDecision.KEEP
    assert not decoded.coerced


def test_decode_lane_change_targets_adjacent_route(overtaking):
    route = build_route(overtaking, 1)
    decoded = decode((0, 2, 1), _state(12.0, overtaking.lane_center_y(1)), route, overtaking)
    assert decoded.lane_change == LaneDecision.LEFT
    assert decoded.target_lane == 0
    assert decoded.waypoint.y == overtaking.lane_center_y(0)


def test_decode_coerces_missing_lane(overtaking):
    route = build_route(overtaking, 0)
    decoded = decode((0, 2, 1), _state(12.0, overtaking.lane_center_y(0)), route, overtaking)
    assert decoded.coerced
    assert decoded.lane_change == LaneDecision.KEEP
    assert decoded.target_lane == 0


def test_decode_ramp_merge_only_inside_zone(merging):
    ramp = merging.ramp_lane
    route = build_route(merging, ramp)
    y = merging.lane_center_y(ramp)
    early = decode((0, 2, 1), _state(30.0, y), route, merging)
    assert early.coerced
    inside = decode((0, 2, 1), _state(100.0, y), route, merging)
    assert not inside.coerced
    assert inside.target_lane == ramp - 1
    right = decode((0, 2, 2), _state(100.0, y), route, merging)
    assert right.coerced


def test_track_speed_law_clamped():
    wp = Waypoint(20.0, 0.0, 0.0)
    accel, steer = track(DecodedAction(wp, 15.0, LaneDecision.KEEP, 0), VehicleState(0.0, 0.0, 0.0, 0.0))
    assert accel == 3.0
    assert steer == pytest.approx(0.0)
    accel, _ = track(DecodedAction(wp, 0.0, LaneDecision.KEEP, 0), VehicleState(0.0, 0.0, 15.0, 0.0))
    assert accel == -6.0
    accel, _ = track(DecodedAction(wp, 10.0, LaneDecision.KEEP, 0), VehicleState(0.0, 0.0, 9.5, 0.0))
    assert accel == pytest.approx(0.5)


def test_pure_pursuit_steers_toward_target():
    ego = VehicleState(0.0, 0.0, 10.0, 0.0)
    assert pure_pursuit_steer(ego, Waypoint(10.0, 2.0, 0.0)) > 0
    assert pure_pursuit_steer(ego, Waypoint(10.0, -2.0, 0.0)) < 0
    assert abs(pure_pursuit_steer(ego, Waypoint(0.5, 3.0, 0.0))) == pytest.approx(STEER_MAX)


def test_pure_pursuit_extends_close_target_to_lookahead():
    ego = VehicleState(0.0, 0.0, 0.0, 0.0)
    # target (1, 1) is pushed along x until it lies 5 m away: (sqrt(24), 1)
    expected = math.atan(2.9 * 2.0 / 25.0)
    assert pure_pursuit_steer(ego, Waypoint(1.0, 1.0, 0.0)) == pytest.approx(expected)


@pytest.mark.parametrize("offset", [0.5, 1.0, 1.7, -1.0])
def test_lateral_error_converges(offset):
    scenario = ScenarioConfig(task="overtaking", lane_count=3, lane_width=3.5, road_length=1000.0,
                              v_limit=15.0, dt=0.1, max_steps=1000)
    tracker = WaypointTracker(scenario)
    center = scenario.lane_center_y(1)
    ego = VehicleState(20.0, center + offset, 10.0, 0.0)
    errors = []
    for _ in range(200):
        _, (accel, steer) = tracker.control((2, 3, 0), StateMatrix(ego))
        ego = bicycle_update(ego, accel, steer, scenario.dt)
        errors.append(abs(ego.y - center))

    settled = next(i for i, e in enumerate(errors) if e < 0.1)
    for before, after in zip(errors[:settled], errors[1:settled + 1]):
        assert after <= before + 1e-9
    assert max(errors[settled:]) < 0.15
    assert errors[-1] < 0.01


def test_tracker_caches_routes(overtaking):
    tracker = WaypointTracker(overtaking)
    assert tracker.route(1) is tracker.route(1)
    decoded, control = tracker.control((1, 2, 2), _state(30.0, overtaking.lane_center_y(1)))
    assert decoded.target_lane == 2
    assert len(control) == 2
